//! Reconstruction, classification and aspect-gap losses with analytic
//! gradients.

use serde::{Deserialize, Serialize};

use super::model::{log_softmax_at, softmax, ToyModel};
use crate::error::{Error, Result};
use crate::points::{distance, mean_of, pairwise_distance_sum, squared_distance, PointMatrix};
use crate::rng::Stream;
use crate::space::{AttributeId, AttributeSpace};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            w1: 0.5,
            w2: 0.2,
            w3: 0.3,
        }
    }
}

impl LossWeights {
    pub fn new(w1: f64, w2: f64, w3: f64) -> Result<Self> {
        let w = LossWeights { w1, w2, w3 };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.w1, self.w2, self.w3];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid("loss weights must be finite and non-negative"));
        }
        if all.iter().all(|w| *w == 0.0) {
            return Err(Error::invalid("loss weights are all zero"));
        }
        Ok(())
    }
}

/// Last seen latent center of each aspect.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AspectMemory {
    centers: Vec<Option<Vec<f64>>>,
}

impl AspectMemory {
    pub fn new(num_aspects: usize) -> Self {
        AspectMemory {
            centers: vec![None; num_aspects],
        }
    }

    /// Memory with every aspect initialized to the given centers.
    pub fn from_centers(centers: Vec<Vec<f64>>) -> Self {
        AspectMemory {
            centers: centers.into_iter().map(Some).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn get(&self, aspect: usize) -> Option<&[f64]> {
        self.centers.get(aspect).and_then(|c| c.as_deref())
    }

    pub fn set(&mut self, aspect: usize, center: Vec<f64>) {
        self.centers[aspect] = Some(center);
    }
}

/// Inputs of one aspect with their attribute indices within that aspect.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub aspect: usize,
    pub inputs: PointMatrix,
    pub labels: Vec<usize>,
}

impl Batch {
    pub fn new(aspect: usize, inputs: PointMatrix, labels: Vec<usize>) -> Result<Self> {
        if inputs.is_empty() {
            return Err(Error::invalid("batch is empty"));
        }
        if inputs.len() != labels.len() {
            return Err(Error::invalid("batch has a different number of inputs and labels"));
        }
        Ok(Batch { aspect, inputs, labels })
    }

    /// Gathers the given ordinals; all must belong to one aspect.
    pub fn from_space(space: &AttributeSpace, ordinals: &[usize]) -> Result<Self> {
        let first = ordinals.first().ok_or_else(|| Error::invalid("batch is empty"))?;
        let aspect = space.label(*first).aspect;
        let mut labels = Vec::with_capacity(ordinals.len());
        for &o in ordinals {
            let l = space.label(o);
            if l.aspect != aspect {
                return Err(Error::invalid("batch mixes aspects"));
            }
            labels.push(l.attribute);
        }
        Self::new(aspect, space.points().select(ordinals), labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// `h + lambda * eps` with `eps ~ N(0, I)` drawn from `stream`.
pub fn perturb(h: &[f64], lambda: f64, stream: &mut Stream) -> Result<Vec<f64>> {
    if !(lambda >= 0.0) {
        return Err(Error::invalid("lambda must be non-negative"));
    }
    Ok(h.iter().map(|x| x + lambda * stream.normal()).collect())
}

/// `rows x dim` standard normal draws, row by row.
pub fn draw_noise(stream: &mut Stream, rows: usize, dim: usize) -> PointMatrix {
    let data = (0..rows * dim).map(|_| stream.normal()).collect();
    PointMatrix::from_flat(dim, data).expect("length is rows * dim")
}

/// Mean over samples of the per-coordinate mean squared reconstruction error.
pub fn loss_recon(model: &ToyModel, h_perturbed: &PointMatrix, x: &PointMatrix) -> Result<f64> {
    let dims = model.dims();
    if h_perturbed.dim() != dims.latent || x.dim() != dims.input {
        return Err(Error::invalid("reconstruction inputs do not match the model"));
    }
    if h_perturbed.len() != x.len() || x.is_empty() {
        return Err(Error::invalid("reconstruction needs equally many latents and targets"));
    }
    let mut total = 0.0;
    for (h, t) in h_perturbed.rows().zip(x.rows()) {
        let (_, y) = model.forward_decoder(h);
        total += squared_distance(&y, t) / dims.input as f64;
    }
    Ok(total / x.len() as f64)
}

/// Cross-entropy of each sample under its own aspect's classifier, summed and
/// divided by the batch size. Samples may come from several aspects.
pub fn loss_cls(model: &ToyModel, latents: &PointMatrix, labels: &[AttributeId]) -> Result<f64> {
    if latents.len() != labels.len() || labels.is_empty() {
        return Err(Error::invalid("classification needs one label per latent"));
    }
    let mut total = 0.0;
    for (h, l) in latents.rows().zip(labels) {
        let head = model
            .heads
            .get(l.aspect)
            .filter(|head| l.attribute < head.out)
            .ok_or_else(|| Error::invalid(format!("label {}/{} has no classifier", l.aspect, l.attribute)))?;
        if h.len() != head.inp {
            return Err(Error::Dim {
                expected: head.inp,
                found: h.len(),
            });
        }
        total -= log_softmax_at(&head.apply(h), l.attribute);
    }
    Ok(total / labels.len() as f64)
}

/// Sum over aspect pairs of the distance between their latent centers.
pub fn loss_gap_exact(latents: &AttributeSpace) -> Result<f64> {
    if latents.schema().num_aspects() < 2 {
        return Err(Error::invalid("aspect gap needs at least two aspects"));
    }
    Ok(pairwise_distance_sum(&latents.aspect_centers()?))
}

/// Distance from the batch center to every other initialized memory entry;
/// the returned memory stores the batch center for `aspect`.
pub fn loss_gap_batch(memory: &AspectMemory, latents: &PointMatrix, aspect: usize) -> Result<(f64, AspectMemory)> {
    if aspect >= memory.len() {
        return Err(Error::invalid(format!("no memory unit for aspect {aspect}")));
    }
    let c = mean_of(latents.dim(), latents.rows()).ok_or_else(|| Error::invalid("batch is empty"))?;
    let loss = gap_terms(memory, &c, aspect).map(|(_, d)| d).sum();
    let mut next = memory.clone();
    next.set(aspect, c);
    Ok((loss, next))
}

fn gap_terms<'a>(memory: &'a AspectMemory, c: &'a [f64], aspect: usize) -> impl Iterator<Item = (&'a [f64], f64)> + 'a {
    (0..memory.len())
        .filter(move |&t| t != aspect)
        .filter_map(move |t| memory.get(t))
        .map(move |m| (m, distance(c, m)))
}

/// Loss values of one batch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub recon: f64,
    pub cls: f64,
    pub gap: f64,
    pub total: f64,
}

#[derive(Clone, Debug)]
pub struct LossOutput {
    pub parts: LossParts,
    /// Gradient of `parts.total`, shaped like the model.
    pub grads: ToyModel,
    pub memory: AspectMemory,
}

/// Weighted loss of a single-aspect batch and its gradient with respect to
/// every parameter. `noise` holds one standard normal row per sample and is
/// scaled by `lambda` before decoding. Memory entries are constants.
pub fn total_loss(
    model: &ToyModel,
    batch: &Batch,
    memory: &AspectMemory,
    weights: &LossWeights,
    lambda: f64,
    noise: &PointMatrix,
) -> Result<LossOutput> {
    let dims = model.dims();
    let b = batch.len();
    if batch.inputs.dim() != dims.input {
        return Err(Error::Dim {
            expected: dims.input,
            found: batch.inputs.dim(),
        });
    }
    if noise.dim() != dims.latent || noise.len() != b {
        return Err(Error::invalid("noise must have one latent-sized row per sample"));
    }
    let head = model
        .heads
        .get(batch.aspect)
        .ok_or_else(|| Error::invalid(format!("no classifier for aspect {}", batch.aspect)))?;
    if let Some(l) = batch.labels.iter().find(|&&l| l >= head.out) {
        return Err(Error::invalid(format!("attribute index {l} out of range for aspect {}", batch.aspect)));
    }
    if memory.len() != dims.heads.len() {
        return Err(Error::invalid("memory and model disagree on the number of aspects"));
    }

    let bf = b as f64;
    let d_in = dims.input as f64;
    let mut grads = model.zeros_like();
    let mut parts = LossParts::default();

    let fwd: Vec<_> = batch.inputs.rows().map(|x| model.forward_encoder(x)).collect();
    let mut dlatent = vec![vec![0.0; dims.latent]; b];

    for (i, x) in batch.inputs.rows().enumerate() {
        let h = &fwd[i].latent;
        let hp: Vec<f64> = h.iter().zip(noise.row(i)).map(|(h, e)| h + lambda * e).collect();
        let (z3, y) = model.forward_decoder(&hp);
        parts.recon += squared_distance(&y, x) / d_in;
        let dy: Vec<f64> = y.iter().zip(x).map(|(y, x)| weights.w1 * 2.0 * (y - x) / (d_in * bf)).collect();
        grads.dec2.accumulate(&dy, &z3);
        let mut da3 = model.dec2.back(&dy);
        da3.iter_mut().zip(&z3).for_each(|(d, z)| *d *= 1.0 - z * z);
        grads.dec1.accumulate(&da3, &hp);
        for (dl, v) in dlatent[i].iter_mut().zip(model.dec1.back(&da3)) {
            *dl += v;
        }

        let logits = head.apply(h);
        let label = batch.labels[i];
        parts.cls -= log_softmax_at(&logits, label);
        let mut dlogits = softmax(&logits);
        dlogits[label] -= 1.0;
        dlogits.iter_mut().for_each(|v| *v *= weights.w2 / bf);
        grads.heads[batch.aspect].accumulate(&dlogits, h);
        for (dl, v) in dlatent[i].iter_mut().zip(head.back(&dlogits)) {
            *dl += v;
        }
    }
    parts.recon /= bf;
    parts.cls /= bf;

    let c = mean_of(dims.latent, fwd.iter().map(|f| f.latent.as_slice())).expect("batch is non-empty");
    let mut dc = vec![0.0; dims.latent];
    for (m, dist) in gap_terms(memory, &c, batch.aspect) {
        parts.gap += dist;
        if dist > 0.0 {
            for ((g, ci), mi) in dc.iter_mut().zip(&c).zip(m) {
                *g += weights.w3 * (ci - mi) / dist;
            }
        }
    }
    for dl in dlatent.iter_mut() {
        for (v, g) in dl.iter_mut().zip(&dc) {
            *v += g / bf;
        }
    }

    for (i, x) in batch.inputs.rows().enumerate() {
        let z1 = &fwd[i].z1;
        grads.enc2.accumulate(&dlatent[i], z1);
        let mut da1 = model.enc2.back(&dlatent[i]);
        da1.iter_mut().zip(z1).for_each(|(d, z)| *d *= 1.0 - z * z);
        grads.enc1.accumulate(&da1, x);
    }

    parts.total = weights.w1 * parts.recon + weights.w2 * parts.cls + weights.w3 * parts.gap;
    let mut next = memory.clone();
    next.set(batch.aspect, c);
    Ok(LossOutput {
        parts,
        grads,
        memory: next,
    })
}
