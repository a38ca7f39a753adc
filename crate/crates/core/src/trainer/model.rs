//! Toy encoder/decoder with per-aspect classifier heads.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::points::PointMatrix;
use crate::rng::Stream;
use crate::space::{AttributeSchema, AttributeSpace};

const MAGIC: &[u8; 4] = b"ATSM";
const VERSION: u32 = 1;

/// Dense affine map `y = W x + b`, `W` stored row-major (`out x inp`).
#[derive(Clone, Debug, PartialEq)]
pub struct Affine {
    pub inp: usize,
    pub out: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Affine {
    pub fn zeros(inp: usize, out: usize) -> Self {
        Affine {
            inp,
            out,
            w: vec![0.0; inp * out],
            b: vec![0.0; out],
        }
    }

    /// Weights drawn from `N(0, 1/inp)`, zero biases.
    fn random(inp: usize, out: usize, stream: &mut Stream) -> Self {
        let scale = 1.0 / (inp as f64).sqrt();
        let mut a = Self::zeros(inp, out);
        a.w.iter_mut().for_each(|w| *w = scale * stream.normal());
        a
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.inp);
        let mut y = self.b.clone();
        for (i, yi) in y.iter_mut().enumerate() {
            let row = &self.w[i * self.inp..(i + 1) * self.inp];
            *yi += row.iter().zip(x).map(|(w, x)| w * x).sum::<f64>();
        }
        y
    }

    /// `W^T dy`.
    pub(crate) fn back(&self, dy: &[f64]) -> Vec<f64> {
        let mut dx = vec![0.0; self.inp];
        for (i, d) in dy.iter().enumerate() {
            let row = &self.w[i * self.inp..(i + 1) * self.inp];
            for (dxj, w) in dx.iter_mut().zip(row) {
                *dxj += w * d;
            }
        }
        dx
    }

    /// Accumulates `dy x^T` into `self.w` and `dy` into `self.b`.
    pub(crate) fn accumulate(&mut self, dy: &[f64], x: &[f64]) {
        for (i, d) in dy.iter().enumerate() {
            let row = &mut self.w[i * self.inp..(i + 1) * self.inp];
            for (w, xj) in row.iter_mut().zip(x) {
                *w += d * xj;
            }
            self.b[i] += d;
        }
    }
}

/// Parameter block names used in gradient reports.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Block {
    /// Encoder.
    Phi,
    /// Decoder.
    Theta,
    /// Classifier of one aspect.
    Pi(usize),
}

impl std::fmt::Display for Block {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Block::Phi => write!(f, "phi"),
            Block::Theta => write!(f, "theta"),
            Block::Pi(t) => write!(f, "pi[{t}]"),
        }
    }
}

/// Layer sizes of a [`ToyModel`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub input: usize,
    pub latent: usize,
    pub hidden: usize,
    pub dec_hidden: usize,
    /// Number of attributes per aspect, one classifier each.
    pub heads: Vec<usize>,
}

impl ModelDims {
    pub fn for_schema(schema: &AttributeSchema, input: usize, latent: usize, hidden: usize) -> Self {
        ModelDims {
            input,
            latent,
            hidden,
            dec_hidden: hidden,
            heads: schema.aspects().iter().map(|a| a.attributes.len()).collect(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.input == 0 || self.latent == 0 || self.hidden == 0 || self.dec_hidden == 0 {
            return Err(Error::invalid("model dimensions must be positive"));
        }
        if self.heads.is_empty() || self.heads.contains(&0) {
            return Err(Error::invalid("every aspect needs a classifier with at least one class"));
        }
        Ok(())
    }
}

/// Encoder `D -> h -> d`, decoder `d -> h' -> D`, one softmax head per aspect.
/// Also used, with the same shape, to hold gradients and momentum.
#[derive(Clone, Debug, PartialEq)]
pub struct ToyModel {
    pub enc1: Affine,
    pub enc2: Affine,
    pub dec1: Affine,
    pub dec2: Affine,
    pub heads: Vec<Affine>,
}

/// Intermediate values of one sample's forward pass.
#[derive(Clone, Debug)]
pub(crate) struct Forward {
    pub z1: Vec<f64>,
    pub latent: Vec<f64>,
}

impl ToyModel {
    pub fn zeros(dims: &ModelDims) -> Result<Self> {
        dims.validate()?;
        Ok(ToyModel {
            enc1: Affine::zeros(dims.input, dims.hidden),
            enc2: Affine::zeros(dims.hidden, dims.latent),
            dec1: Affine::zeros(dims.latent, dims.dec_hidden),
            dec2: Affine::zeros(dims.dec_hidden, dims.input),
            heads: dims.heads.iter().map(|&n| Affine::zeros(dims.latent, n)).collect(),
        })
    }

    /// Seeded initialization. Encoder and decoder weights are scaled
    /// Gaussians; classifier heads start at zero.
    pub fn init(dims: &ModelDims, seed: u64) -> Result<Self> {
        dims.validate()?;
        let mut s = Stream::derive(seed, 0, "model-init");
        Ok(ToyModel {
            enc1: Affine::random(dims.input, dims.hidden, &mut s),
            enc2: Affine::random(dims.hidden, dims.latent, &mut s),
            dec1: Affine::random(dims.latent, dims.dec_hidden, &mut s),
            dec2: Affine::random(dims.dec_hidden, dims.input, &mut s),
            heads: dims.heads.iter().map(|&n| Affine::zeros(dims.latent, n)).collect(),
        })
    }

    pub fn dims(&self) -> ModelDims {
        ModelDims {
            input: self.enc1.inp,
            latent: self.enc2.out,
            hidden: self.enc1.out,
            dec_hidden: self.dec1.out,
            heads: self.heads.iter().map(|h| h.out).collect(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.dims()).expect("dims of an existing model are valid")
    }

    /// Every parameter slice in serialization order, tagged with its block.
    pub fn params(&self) -> Vec<(Block, &[f64])> {
        let mut out: Vec<(Block, &[f64])> = vec![
            (Block::Phi, &self.enc1.w),
            (Block::Phi, &self.enc1.b),
            (Block::Phi, &self.enc2.w),
            (Block::Phi, &self.enc2.b),
            (Block::Theta, &self.dec1.w),
            (Block::Theta, &self.dec1.b),
            (Block::Theta, &self.dec2.w),
            (Block::Theta, &self.dec2.b),
        ];
        for (t, h) in self.heads.iter().enumerate() {
            out.push((Block::Pi(t), &h.w));
            out.push((Block::Pi(t), &h.b));
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<(Block, &mut [f64])> {
        let mut out: Vec<(Block, &mut [f64])> = vec![
            (Block::Phi, &mut self.enc1.w),
            (Block::Phi, &mut self.enc1.b),
            (Block::Phi, &mut self.enc2.w),
            (Block::Phi, &mut self.enc2.b),
            (Block::Theta, &mut self.dec1.w),
            (Block::Theta, &mut self.dec1.b),
            (Block::Theta, &mut self.dec2.w),
            (Block::Theta, &mut self.dec2.b),
        ];
        for (t, h) in self.heads.iter_mut().enumerate() {
            out.push((Block::Pi(t), &mut h.w));
            out.push((Block::Pi(t), &mut h.b));
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.params().iter().all(|(_, p)| p.iter().all(|x| x.is_finite()))
    }

    pub(crate) fn forward_encoder(&self, x: &[f64]) -> Forward {
        let mut z1 = self.enc1.apply(x);
        z1.iter_mut().for_each(|v| *v = v.tanh());
        let latent = self.enc2.apply(&z1);
        Forward { z1, latent }
    }

    pub fn encode(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.enc1.inp {
            return Err(Error::Dim {
                expected: self.enc1.inp,
                found: x.len(),
            });
        }
        Ok(self.forward_encoder(x).latent)
    }

    /// Returns the decoder hidden activation and the output.
    pub(crate) fn forward_decoder(&self, h: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut z3 = self.dec1.apply(h);
        z3.iter_mut().for_each(|v| *v = v.tanh());
        let y = self.dec2.apply(&z3);
        (z3, y)
    }

    pub fn decode(&self, h: &[f64]) -> Result<Vec<f64>> {
        if h.len() != self.dec1.inp {
            return Err(Error::Dim {
                expected: self.dec1.inp,
                found: h.len(),
            });
        }
        Ok(self.forward_decoder(h).1)
    }

    /// Softmax probabilities of aspect `aspect`'s classifier.
    pub fn classify(&self, aspect: usize, h: &[f64]) -> Result<Vec<f64>> {
        let head = self
            .heads
            .get(aspect)
            .ok_or_else(|| Error::invalid(format!("no classifier for aspect {aspect}")))?;
        if h.len() != head.inp {
            return Err(Error::Dim {
                expected: head.inp,
                found: h.len(),
            });
        }
        Ok(softmax(&head.apply(h)))
    }

    /// Encodes every vector of `space`, keeping ids and labels.
    pub fn encode_space(&self, space: &AttributeSpace) -> Result<AttributeSpace> {
        if space.dim() != self.enc1.inp {
            return Err(Error::Dim {
                expected: self.enc1.inp,
                found: space.dim(),
            });
        }
        let mut latents = PointMatrix::new(self.enc2.out);
        for row in space.points().rows() {
            latents.push(&self.forward_encoder(row).latent)?;
        }
        space.with_points(latents)
    }
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= total);
    p
}

/// `log softmax(logits)[class]`, stable for large logits.
pub(crate) fn log_softmax_at(logits: &[f64], class: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    logits[class] - lse
}

fn put_u32<W: Write>(w: &mut W, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::invalid("model dimension exceeds u32"))?;
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn get_u32<R: Read>(r: &mut R) -> Result<usize> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b) as usize)
}

/// Little-endian dump: magic, version, dims, then every parameter slice in
/// [`ToyModel::params`] order.
pub fn write_model<W: Write>(model: &ToyModel, w: &mut W) -> Result<()> {
    let dims = model.dims();
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    for v in [dims.input, dims.latent, dims.hidden, dims.dec_hidden, dims.heads.len()] {
        put_u32(w, v)?;
    }
    for &n in &dims.heads {
        put_u32(w, n)?;
    }
    for (_, p) in model.params() {
        for x in p {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_model<R: Read>(r: &mut R) -> Result<ToyModel> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Parse {
            record: 0,
            message: "not a model file".into(),
        });
    }
    let version = get_u32(r)?;
    if version != VERSION as usize {
        return Err(Error::Parse {
            record: 0,
            message: format!("unsupported model version {version}"),
        });
    }
    let (input, latent, hidden, dec_hidden, n_heads) = (get_u32(r)?, get_u32(r)?, get_u32(r)?, get_u32(r)?, get_u32(r)?);
    let heads = (0..n_heads).map(|_| get_u32(r)).collect::<Result<_>>()?;
    let mut model = ToyModel::zeros(&ModelDims {
        input,
        latent,
        hidden,
        dec_hidden,
        heads,
    })?;
    let mut buf = [0u8; 8];
    for (_, p) in model.params_mut() {
        for x in p.iter_mut() {
            r.read_exact(&mut buf)?;
            *x = f64::from_le_bytes(buf);
        }
    }
    if !model.is_finite() {
        return Err(Error::NonFinite { record: 0 });
    }
    Ok(model)
}

pub fn save_model(model: &ToyModel, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_model(model, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<ToyModel> {
    read_model(&mut BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims() -> ModelDims {
        ModelDims {
            input: 6,
            latent: 4,
            hidden: 5,
            dec_hidden: 7,
            heads: vec![2, 3],
        }
    }

    #[test]
    fn zero_model_encodes_to_zero() {
        let m = ToyModel::zeros(&dims()).unwrap();
        assert_eq!(m.encode(&[1.0, -2.0, 3.0, 0.5, 9.0, 1.0]).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn encoder_matches_hand_forward() {
        let m = ToyModel::init(&dims(), 3).unwrap();
        let x = [0.3, -1.0, 0.0, 2.0, 0.1, -0.4];
        let mut z = [0.0; 5];
        for i in 0..5 {
            let mut a = m.enc1.b[i];
            for j in 0..6 {
                a += m.enc1.w[i * 6 + j] * x[j];
            }
            z[i] = a.tanh();
        }
        let got = m.encode(&x).unwrap();
        for k in 0..4 {
            let mut h = m.enc2.b[k];
            for i in 0..5 {
                h += m.enc2.w[k * 5 + i] * z[i];
            }
            assert!((h - got[k]).abs() < 1e-14);
        }
    }

    #[test]
    fn seeded_model_is_not_degenerate() {
        let m = ToyModel::init(&dims(), 0).unwrap();
        let e1 = [1.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let e2 = [2.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        assert_ne!(m.encode(&e1).unwrap(), m.encode(&e2).unwrap());
        assert_eq!(m.encode(&e1).unwrap(), m.encode(&e1).unwrap());
        assert!(m.encode(&[1.0]).is_err());
    }

    #[test]
    fn back_is_transpose() {
        let m = ToyModel::init(&dims(), 1).unwrap();
        let dy = [0.5, -1.0, 2.0, 0.25, 1.0];
        let dx = m.enc1.back(&dy);
        for j in 0..6 {
            let want: f64 = (0..5).map(|i| m.enc1.w[i * 6 + j] * dy[i]).sum();
            assert!((dx[j] - want).abs() < 1e-14);
        }
    }

    #[test]
    fn softmax_properties() {
        let p = softmax(&[1000.0, 1000.0]);
        assert_eq!(p, vec![0.5, 0.5]);
        assert!((log_softmax_at(&[0.0, 0.0], 1) + std::f64::consts::LN_2).abs() < 1e-15);
        assert!(log_softmax_at(&[800.0, 0.0], 0).abs() < 1e-300);
    }

    #[test]
    fn model_file_round_trip() {
        let m = ToyModel::init(&dims(), 9).unwrap();
        let mut buf = Vec::new();
        write_model(&m, &mut buf).unwrap();
        let expected_len = 4 + 4 + 4 * 7 + 8 * m.params().iter().map(|(_, p)| p.len()).sum::<usize>();
        assert_eq!(buf.len(), expected_len);
        assert_eq!(read_model(&mut buf.as_slice()).unwrap(), m);
        buf[0] = b'X';
        assert!(read_model(&mut buf.as_slice()).is_err());
    }
}
