//! Attribute-space estimation with a toy autoencoder.
//!
//! The encoder maps labeled feature vectors to latents; training balances a
//! noisy reconstruction loss, per-aspect classification, and a penalty on the
//! distances between aspect centers (estimated batch by batch through a
//! per-aspect memory). Gradients are computed by hand and checked against
//! central finite differences by [`grad_check`].

mod loss;
mod model;

use serde::{Deserialize, Serialize};

pub use loss::{
    draw_noise, loss_cls, loss_gap_batch, loss_gap_exact, loss_recon, perturb, total_loss, AspectMemory, Batch,
    LossOutput, LossParts, LossWeights,
};
pub use model::{load_model, read_model, save_model, write_model, Affine, Block, ModelDims, ToyModel};

use crate::error::{Error, Result};
use crate::points::PointMatrix;
use crate::rng::Stream;
use crate::space::AttributeSpace;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    pub seed: u64,
    /// Scale of the latent perturbation before decoding.
    pub lambda: f64,
    pub weights: LossWeights,
    /// Fraction of points held out from training for evaluation.
    pub holdout: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 150,
            batch_size: 128,
            lr: 1e-4,
            momentum: 0.9,
            seed: 0,
            lambda: 1e-3,
            weights: LossWeights::default(),
            holdout: 0.2,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        if self.batch_size < 2 {
            return Err(Error::invalid("batch size must be at least 2"));
        }
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return Err(Error::invalid("learning rate must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid("momentum must lie in [0, 1)"));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::invalid("lambda must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.holdout) {
            return Err(Error::invalid("holdout fraction must lie in [0, 1)"));
        }
        self.weights.validate()
    }
}

/// Mean loss parts over one epoch's batches.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub steps: usize,
    pub loss: LossParts,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AspectAccuracy {
    pub aspect: String,
    pub count: usize,
    pub accuracy: f64,
}

/// Classifier accuracy per aspect, for aspects with at least two attributes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub per_aspect: Vec<AspectAccuracy>,
    /// Unweighted mean over `per_aspect`; `None` when it is empty.
    pub mean: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainOutput {
    pub model: ToyModel,
    /// Every input vector encoded by the final model.
    pub latent: AttributeSpace,
    pub history: Vec<EpochStats>,
    /// Ordinals excluded from training.
    pub holdout: Vec<usize>,
    /// Accuracy on the held-out ordinals, if any.
    pub accuracy: Option<AccuracyReport>,
    pub memory: AspectMemory,
}

/// Seeded split into (training, held-out) ordinals, both sorted.
pub fn holdout_split(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let count = ((n as f64) * fraction).floor() as usize;
    let held = Stream::derive(seed, 0, "holdout").sample_without_replacement(n, count);
    let mut mask = vec![false; n];
    held.iter().for_each(|&i| mask[i] = true);
    ((0..n).filter(|&i| !mask[i]).collect(), held)
}

/// Batches of one epoch: each aspect's ordinals shuffled and chunked, then
/// interleaved one batch per aspect at a time.
fn epoch_batches(per_aspect: &[Vec<usize>], batch_size: usize, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    let mut stream = Stream::derive(seed, epoch as u64, "shuffle");
    let chunks: Vec<Vec<Vec<usize>>> = per_aspect
        .iter()
        .map(|ords| {
            let mut ords = ords.clone();
            stream.shuffle(&mut ords);
            ords.chunks(batch_size).map(<[usize]>::to_vec).collect()
        })
        .collect();
    let rounds = chunks.iter().map(Vec::len).max().unwrap_or(0);
    let mut out = Vec::new();
    for r in 0..rounds {
        for c in &chunks {
            if let Some(b) = c.get(r) {
                out.push(b.clone());
            }
        }
    }
    out
}

/// Trains `model` on `space` with SGD and momentum over single-aspect
/// batches. Deterministic for a fixed seed.
pub fn train(space: &AttributeSpace, mut model: ToyModel, config: &TrainConfig) -> Result<TrainOutput> {
    config.validate()?;
    let dims = model.dims();
    if space.dim() != dims.input {
        return Err(Error::Dim {
            expected: dims.input,
            found: space.dim(),
        });
    }
    let schema = space.schema();
    let heads: Vec<usize> = schema.aspects().iter().map(|a| a.attributes.len()).collect();
    if heads != dims.heads {
        return Err(Error::invalid("model classifiers do not match the schema"));
    }
    let (train_ords, held) = holdout_split(space.len(), config.holdout, config.seed);
    let mut per_aspect = vec![Vec::new(); schema.num_aspects()];
    for &o in &train_ords {
        per_aspect[space.label(o).aspect].push(o);
    }

    let mut velocity = model.zeros_like();
    let mut memory = AspectMemory::new(schema.num_aspects());
    let mut noise_stream = Stream::derive(config.seed, 0, "perturb");
    let mut history = Vec::with_capacity(config.epochs);
    let mut step = 0usize;
    for epoch in 0..config.epochs {
        let mut sum = LossParts::default();
        let batches = epoch_batches(&per_aspect, config.batch_size, config.seed, epoch);
        for ords in &batches {
            let batch = Batch::from_space(space, ords)?;
            let noise = draw_noise(&mut noise_stream, batch.len(), dims.latent);
            let out = total_loss(&model, &batch, &memory, &config.weights, config.lambda, &noise)?;
            if !out.parts.total.is_finite() {
                return Err(Error::Divergence { step });
            }
            for ((_, p), ((_, v), (_, g))) in model
                .params_mut()
                .into_iter()
                .zip(velocity.params_mut().into_iter().zip(out.grads.params()))
            {
                for ((p, v), g) in p.iter_mut().zip(v.iter_mut()).zip(g) {
                    *v = config.momentum * *v + g;
                    *p -= config.lr * *v;
                }
            }
            if !model.is_finite() {
                return Err(Error::Divergence { step });
            }
            memory = out.memory;
            sum.recon += out.parts.recon;
            sum.cls += out.parts.cls;
            sum.gap += out.parts.gap;
            sum.total += out.parts.total;
            step += 1;
        }
        let n = batches.len().max(1) as f64;
        history.push(EpochStats {
            epoch,
            steps: batches.len(),
            loss: LossParts {
                recon: sum.recon / n,
                cls: sum.cls / n,
                gap: sum.gap / n,
                total: sum.total / n,
            },
        });
        log::debug!("epoch {epoch}: loss {:.6}", sum.total / n);
    }

    let latent = model.encode_space(space)?;
    let accuracy = if held.is_empty() {
        None
    } else {
        Some(accuracy(&model, space, &held)?)
    };
    Ok(TrainOutput {
        model,
        latent,
        history,
        holdout: held,
        accuracy,
        memory,
    })
}

/// Fraction of `ordinals` whose aspect classifier ranks the true attribute
/// first (ties go to the lower attribute index).
pub fn accuracy(model: &ToyModel, space: &AttributeSpace, ordinals: &[usize]) -> Result<AccuracyReport> {
    let schema = space.schema();
    let mut hits = vec![0usize; schema.num_aspects()];
    let mut counts = vec![0usize; schema.num_aspects()];
    for &o in ordinals {
        let label = space.label(o);
        if schema.aspects()[label.aspect].attributes.len() < 2 {
            continue;
        }
        let h = model.encode(space.vector(o))?;
        let p = model.classify(label.aspect, &h)?;
        let mut best = 0;
        for (i, v) in p.iter().enumerate() {
            if *v > p[best] {
                best = i;
            }
        }
        counts[label.aspect] += 1;
        hits[label.aspect] += usize::from(best == label.attribute);
    }
    let per_aspect: Vec<AspectAccuracy> = (0..schema.num_aspects())
        .filter(|&a| counts[a] > 0)
        .map(|a| AspectAccuracy {
            aspect: schema.aspect_name(a).to_string(),
            count: counts[a],
            accuracy: hits[a] as f64 / counts[a] as f64,
        })
        .collect();
    let mean = if per_aspect.is_empty() {
        None
    } else {
        Some(per_aspect.iter().map(|a| a.accuracy).sum::<f64>() / per_aspect.len() as f64)
    };
    Ok(AccuracyReport { per_aspect, mean })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockCheck {
    pub block: String,
    pub params: usize,
    pub max_rel_err: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub step: f64,
    pub tol: f64,
    pub blocks: Vec<BlockCheck>,
    pub passed: bool,
}

impl GradCheckReport {
    pub fn failing_blocks(&self) -> Vec<&str> {
        self.blocks.iter().filter(|b| !b.passed).map(|b| b.block.as_str()).collect()
    }
}

/// Compares analytic gradients of [`total_loss`] with central differences,
/// with the perturbation noise and memory held fixed. Relative error per
/// parameter is `|a - n| / max(|a|, |n|, 1e-6)`. `fault` corrupts the
/// analytic gradient of one block before comparing.
#[allow(clippy::too_many_arguments)]
pub fn grad_check(
    model: &ToyModel,
    batch: &Batch,
    memory: &AspectMemory,
    weights: &LossWeights,
    lambda: f64,
    noise: &PointMatrix,
    step: f64,
    tol: f64,
    fault: Option<Block>,
) -> Result<GradCheckReport> {
    if !(step > 0.0) || !(tol > 0.0) {
        return Err(Error::invalid("step and tolerance must be positive"));
    }
    let mut analytic = total_loss(model, batch, memory, weights, lambda, noise)?.grads;
    if let Some(target) = fault {
        for (block, g) in analytic.params_mut() {
            if block == target {
                g.iter_mut().for_each(|v| *v = 2.0 * *v + 1e-2);
            }
        }
    }
    let loss_at = |m: &ToyModel| -> Result<f64> { Ok(total_loss(m, batch, memory, weights, lambda, noise)?.parts.total) };

    let mut probe = model.clone();
    let mut blocks: Vec<BlockCheck> = Vec::new();
    let grads = analytic.params();
    for slice in 0..grads.len() {
        let (block, g) = grads[slice];
        let name = block.to_string();
        if blocks.last().map(|b| b.block != name).unwrap_or(true) {
            blocks.push(BlockCheck {
                block: name,
                params: 0,
                max_rel_err: 0.0,
                passed: true,
            });
        }
        for (i, &a) in g.iter().enumerate() {
            let original = model.params()[slice].1[i];
            probe.params_mut()[slice].1[i] = original + step;
            let plus = loss_at(&probe)?;
            probe.params_mut()[slice].1[i] = original - step;
            let minus = loss_at(&probe)?;
            probe.params_mut()[slice].1[i] = original;
            let n = (plus - minus) / (2.0 * step);
            let err = (a - n).abs() / a.abs().max(n.abs()).max(1e-6);
            let entry = blocks.last_mut().expect("pushed above");
            entry.params += 1;
            entry.max_rel_err = entry.max_rel_err.max(err);
        }
    }
    for b in &mut blocks {
        b.passed = b.max_rel_err <= tol;
    }
    Ok(GradCheckReport {
        step,
        tol,
        passed: blocks.iter().all(|b| b.passed),
        blocks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{build_scenario, Scenario};

    fn small_dims() -> ModelDims {
        ModelDims {
            input: 6,
            latent: 4,
            hidden: 7,
            dec_hidden: 5,
            heads: vec![2, 3, 1],
        }
    }

    fn check_setup(seed: u64) -> (ToyModel, Batch, AspectMemory, PointMatrix) {
        let mut model = ToyModel::init(&small_dims(), seed).unwrap();
        let mut s = Stream::derive(seed, 0, "check");
        for h in model.heads.iter_mut() {
            h.w.iter_mut().for_each(|w| *w = s.normal());
            h.b.iter_mut().for_each(|w| *w = 0.1 * s.normal());
        }
        let inputs = draw_noise(&mut s, 8, 6);
        let labels = (0..8).map(|_| s.below(3)).collect();
        let batch = Batch::new(1, inputs, labels).unwrap();
        let mut memory = AspectMemory::new(3);
        memory.set(0, (0..4).map(|_| s.normal()).collect());
        memory.set(2, (0..4).map(|_| s.normal()).collect());
        let noise = draw_noise(&mut s, 8, 4);
        (model, batch, memory, noise)
    }

    #[test]
    fn gradients_match_finite_differences() {
        for seed in 0..3 {
            let (model, batch, memory, noise) = check_setup(seed);
            for w in [(1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0), (0.5, 0.2, 0.3)] {
                let weights = LossWeights::new(w.0, w.1, w.2).unwrap();
                let r = grad_check(&model, &batch, &memory, &weights, 1e-3, &noise, 1e-5, 1e-3, None).unwrap();
                assert!(r.passed, "{seed} {w:?}: {r:?}");
                assert_eq!(r.blocks.len(), 5);
            }
        }
    }

    #[test]
    fn corrupted_decoder_gradient_is_caught() {
        let (model, batch, memory, noise) = check_setup(4);
        let r = grad_check(
            &model,
            &batch,
            &memory,
            &LossWeights::default(),
            1e-3,
            &noise,
            1e-5,
            1e-3,
            Some(Block::Theta),
        )
        .unwrap();
        assert!(!r.passed);
        assert_eq!(r.failing_blocks(), vec!["theta"]);
    }

    #[test]
    fn zero_model_zero_batch_has_zero_gradient() {
        let model = ToyModel::zeros(&small_dims()).unwrap();
        let batch = Batch::new(0, PointMatrix::from_flat(6, vec![0.0; 24]).unwrap(), vec![0, 1, 0, 1]).unwrap();
        let noise = PointMatrix::from_flat(4, vec![0.0; 16]).unwrap();
        let mem = AspectMemory::new(3);
        let out = total_loss(&model, &batch, &mem, &LossWeights::new(1.0, 0.0, 1.0).unwrap(), 1e-3, &noise).unwrap();
        assert!(out.grads.params().iter().all(|(_, p)| p.iter().all(|g| *g == 0.0)));
        let r = grad_check(&model, &batch, &mem, &LossWeights::new(1.0, 0.0, 1.0).unwrap(), 1e-3, &noise, 1e-5, 1e-3, None).unwrap();
        assert!(r.passed);
    }

    #[test]
    fn gap_batch_round_sum_is_twice_exact() {
        let space = build_scenario(&Scenario::three_aspect(8, 3)).unwrap();
        let model = ToyModel::init(&ModelDims::for_schema(space.schema(), 8, 4, 6), 1).unwrap();
        let latent = model.encode_space(&space).unwrap();
        let exact = loss_gap_exact(&latent).unwrap();
        let mut memory = AspectMemory::from_centers(latent.aspect_centers().unwrap());
        let mut round = 0.0;
        for a in 0..3 {
            let batch = latent.points().select(&latent.aspect_ordinals(a));
            let (loss, next) = loss_gap_batch(&memory, &batch, a).unwrap();
            round += loss;
            memory = next;
        }
        assert!((round - 2.0 * exact).abs() < 1e-9);
    }

    fn tiny_space() -> AttributeSpace {
        let mut sc = Scenario::three_aspect(8, 0);
        for a in sc.aspects.iter_mut() {
            for t in a.attributes.iter_mut() {
                t.count = 40;
            }
        }
        build_scenario(&sc).unwrap()
    }

    #[test]
    fn zero_learning_rate_keeps_model() {
        let space = tiny_space();
        let model = ToyModel::init(&ModelDims::for_schema(space.schema(), 8, 8, 16), 0).unwrap();
        let cfg = TrainConfig {
            epochs: 2,
            lr: 0.0,
            batch_size: 16,
            ..TrainConfig::default()
        };
        assert!(TrainConfig { lr: -1.0, ..cfg.clone() }.validate().is_err());
        let out = train(&space, model.clone(), &cfg).unwrap();
        assert_eq!(out.model, model);
    }

    #[test]
    fn training_is_deterministic() {
        let space = tiny_space();
        let model = ToyModel::init(&ModelDims::for_schema(space.schema(), 8, 8, 16), 0).unwrap();
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 16,
            lr: 1e-2,
            ..TrainConfig::default()
        };
        let a = train(&space, model.clone(), &cfg).unwrap();
        let b = train(&space, model, &cfg).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.latent.points(), b.latent.points());
        assert_eq!(a.history, b.history);
        assert_eq!(a.latent.ids(), space.ids());
    }

    #[test]
    fn divergence_reports_step() {
        let space = tiny_space();
        let model = ToyModel::init(&ModelDims::for_schema(space.schema(), 8, 8, 16), 0).unwrap();
        let cfg = TrainConfig {
            epochs: 50,
            batch_size: 16,
            lr: 1e200,
            ..TrainConfig::default()
        };
        assert!(matches!(train(&space, model, &cfg), Err(Error::Divergence { .. })));
    }

    #[test]
    fn round_robin_batches_cover_each_point_once() {
        let per_aspect = vec![(0..10).collect::<Vec<_>>(), (10..13).collect(), (13..20).collect()];
        let batches = epoch_batches(&per_aspect, 4, 0, 0);
        let sizes: Vec<usize> = batches.iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![4, 3, 4, 4, 3, 2]);
        let mut all: Vec<usize> = batches.concat();
        all.sort_unstable();
        assert_eq!(all, (0..20).collect::<Vec<_>>());
        assert_ne!(epoch_batches(&per_aspect, 4, 0, 1), batches);
    }

    #[test]
    fn holdout_split_partitions() {
        let (train, held) = holdout_split(100, 0.2, 5);
        assert_eq!(held.len(), 20);
        assert_eq!(train.len(), 80);
        assert!(train.iter().all(|o| !held.contains(o)));
    }
}
