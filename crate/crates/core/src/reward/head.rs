use std::ops::Range;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::Embedding;
use crate::io::{self, BinReader, BinWriter};
use crate::{Error, Result, Scalar};

/// Which parameters the bandit's gradient space covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradMode {
    /// Every parameter of the head, `G = P`.
    Full,
    /// Output layer only, `G = hidden + 1`.
    #[default]
    LastLayer,
}

/// Gradient of the reward with respect to the selected parameter block.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientVector<S>(pub Vec<S>);

impl<S: Scalar> GradientVector<S> {
    pub fn zeros(n: usize) -> Self {
        GradientVector(vec![S::zero(); n])
    }

    pub fn as_slice(&self) -> &[S] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn sub(&self, other: &GradientVector<S>) -> Result<GradientVector<S>> {
        if self.len() != other.len() {
            return Err(Error::InvalidArgument(format!("gradient lengths {} and {} differ", self.len(), other.len())));
        }
        Ok(GradientVector(self.0.iter().zip(&other.0).map(|(&a, &b)| a - b).collect()))
    }

    pub fn norm(&self) -> S {
        self.0.iter().map(|&x| x * x).sum::<S>().sqrt()
    }
}

/// Forward-pass intermediates for one embedding.
#[derive(Debug, Clone)]
pub struct Activation<S> {
    pub pre: Vec<S>,
    pub hidden: Vec<S>,
    pub value: S,
}

/// Parameters of the two-layer ReLU reward head `W2 . relu(W1 e + b1) + b2`,
/// stored flat as `[W1 (row-major, hidden x in_dim) | b1 | W2 | b2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardParams<S> {
    in_dim: usize,
    hidden: usize,
    seed: u64,
    flat: Vec<S>,
}

impl<S: Scalar> RewardParams<S> {
    pub fn param_count(in_dim: usize, hidden: usize) -> usize {
        in_dim * hidden + hidden + hidden + 1
    }

    /// He-normal first layer, `N(0, 1/hidden)` output layer, zero biases.
    pub fn init(seed: u64, in_dim: usize, hidden: usize) -> Result<Self> {
        if in_dim == 0 || hidden == 0 {
            return Err(Error::InvalidArgument("reward head needs in_dim and hidden >= 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut flat = vec![S::zero(); Self::param_count(in_dim, hidden)];
        let s1 = (2.0 / in_dim as f64).sqrt();
        let s2 = (1.0 / hidden as f64).sqrt();
        for w in &mut flat[..in_dim * hidden] {
            let z: f64 = StandardNormal.sample(&mut rng);
            *w = S::lit(s1 * z);
        }
        let w2 = in_dim * hidden + hidden;
        for w in &mut flat[w2..w2 + hidden] {
            let z: f64 = StandardNormal.sample(&mut rng);
            *w = S::lit(s2 * z);
        }
        Ok(RewardParams { in_dim, hidden, seed, flat })
    }

    pub fn zeros(in_dim: usize, hidden: usize) -> Self {
        RewardParams { in_dim, hidden, seed: 0, flat: vec![S::zero(); Self::param_count(in_dim, hidden)] }
    }

    pub fn from_flat(in_dim: usize, hidden: usize, seed: u64, flat: Vec<S>) -> Result<Self> {
        if flat.len() != Self::param_count(in_dim, hidden) {
            return Err(Error::InvalidArgument(format!(
                "expected {} parameters, got {}",
                Self::param_count(in_dim, hidden),
                flat.len()
            )));
        }
        Ok(RewardParams { in_dim, hidden, seed, flat })
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.flat.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flat.is_empty()
    }

    pub fn flat(&self) -> &[S] {
        &self.flat
    }

    pub fn flat_mut(&mut self) -> &mut [S] {
        &mut self.flat
    }

    pub fn w1_range(&self) -> Range<usize> {
        0..self.in_dim * self.hidden
    }

    pub fn b1_range(&self) -> Range<usize> {
        let s = self.in_dim * self.hidden;
        s..s + self.hidden
    }

    pub fn w2_range(&self) -> Range<usize> {
        let s = self.in_dim * self.hidden + self.hidden;
        s..s + self.hidden
    }

    pub fn b2_index(&self) -> usize {
        self.flat.len() - 1
    }

    pub fn w1(&self) -> &[S] {
        &self.flat[self.w1_range()]
    }

    pub fn b1(&self) -> &[S] {
        &self.flat[self.b1_range()]
    }

    pub fn w2(&self) -> &[S] {
        &self.flat[self.w2_range()]
    }

    pub fn b2(&self) -> S {
        self.flat[self.b2_index()]
    }

    pub fn squared_norm(&self) -> S {
        self.flat.iter().map(|&x| x * x).sum()
    }

    /// Gradient-space dimension for `mode`.
    pub fn grad_len(&self, mode: GradMode) -> usize {
        match mode {
            GradMode::Full => self.flat.len(),
            GradMode::LastLayer => self.hidden + 1,
        }
    }

    fn check(&self, e: &Embedding<S>) -> Result<()> {
        if e.len() != self.in_dim {
            return Err(Error::InvalidArgument(format!(
                "embedding width {} does not match reward head input {}",
                e.len(),
                self.in_dim
            )));
        }
        Ok(())
    }

    pub fn activation(&self, e: &Embedding<S>) -> Result<Activation<S>> {
        self.check(e)?;
        let x = e.as_slice();
        let w1 = self.w1();
        let b1 = self.b1();
        let mut pre = Vec::with_capacity(self.hidden);
        let mut hidden = Vec::with_capacity(self.hidden);
        for j in 0..self.hidden {
            let row = &w1[j * self.in_dim..(j + 1) * self.in_dim];
            let z = row.iter().zip(x).map(|(&w, &xi)| w * xi).sum::<S>() + b1[j];
            pre.push(z);
            hidden.push(if z > S::zero() { z } else { S::zero() });
        }
        let value = self.w2().iter().zip(&hidden).map(|(&w, &h)| w * h).sum::<S>() + self.b2();
        Ok(Activation { pre, hidden, value })
    }

    pub fn forward(&self, e: &Embedding<S>) -> Result<S> {
        Ok(self.activation(e)?.value)
    }

    /// Gradient reusing a forward pass already computed for `e`.
    pub fn grad_from(&self, act: &Activation<S>, e: &Embedding<S>, mode: GradMode) -> GradientVector<S> {
        match mode {
            GradMode::LastLayer => {
                let mut g = act.hidden.clone();
                g.push(S::one());
                GradientVector(g)
            }
            GradMode::Full => {
                let mut g = vec![S::zero(); self.flat.len()];
                self.accumulate_grad(act, e, S::one(), &mut g);
                GradientVector(g)
            }
        }
    }

    pub fn grad(&self, e: &Embedding<S>, mode: GradMode) -> Result<GradientVector<S>> {
        let act = self.activation(e)?;
        Ok(self.grad_from(&act, e, mode))
    }

    /// `out += coef * d reward / d theta` over the full parameter vector.
    /// The ReLU derivative at exactly zero is taken as zero.
    pub(crate) fn accumulate_grad(&self, act: &Activation<S>, e: &Embedding<S>, coef: S, out: &mut [S]) {
        let x = e.as_slice();
        let (w1_end, b1_start, w2_start) = (self.in_dim * self.hidden, self.b1_range().start, self.w2_range().start);
        let w2 = self.w2();
        for j in 0..self.hidden {
            out[w2_start + j] += coef * act.hidden[j];
            if act.pre[j] > S::zero() {
                let d = coef * w2[j];
                out[b1_start + j] += d;
                let row = &mut out[j * self.in_dim..(j + 1) * self.in_dim];
                for (o, &xi) in row.iter_mut().zip(x) {
                    *o += d * xi;
                }
            }
        }
        debug_assert!(w1_end == b1_start);
        let b2 = self.b2_index();
        out[b2] += coef;
    }

    /// Writes the checkpoint: `DSRH`, version, `{hidden, in_dim, seed}`, then
    /// the parameter array as little-endian `f64`.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = BinWriter::new(std::io::BufWriter::new(io::create(path)?), path);
        self.write_to(&mut w)?;
        w.finish().map(|_| ())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut r = BinReader::new(std::io::BufReader::new(io::open(path)?), path);
        let p = Self::read_from(&mut r)?;
        r.expect_eof()?;
        Ok(p)
    }

    pub(crate) fn write_to<W: std::io::Write>(&self, w: &mut BinWriter<W>) -> Result<()> {
        w.magic(CKPT_MAGIC)?;
        w.u32(CKPT_VERSION)?;
        w.u32(self.hidden as u32)?;
        w.u32(self.in_dim as u32)?;
        w.u64(self.seed)?;
        w.u64(self.flat.len() as u64)?;
        w.f64s(self.flat.iter().map(|x| x.to_f64_lossy()))
    }

    pub(crate) fn read_from<R: std::io::Read>(r: &mut BinReader<R>) -> Result<Self> {
        r.expect_magic(CKPT_MAGIC, "reward checkpoint")?;
        r.expect_version(CKPT_VERSION)?;
        let hidden = r.u32()? as usize;
        let in_dim = r.u32()? as usize;
        let seed = r.u64()?;
        let n = r.u64()? as usize;
        if n != Self::param_count(in_dim, hidden) {
            return Err(r.format_err(format!("parameter count {n} inconsistent with header")));
        }
        let flat = r.f64s(n)?.into_iter().map(S::lit).collect();
        Ok(RewardParams { in_dim, hidden, seed, flat })
    }
}

const CKPT_MAGIC: &[u8; 4] = b"DSRH";
const CKPT_VERSION: u32 = 1;

#[cfg(test)]
mod tests {
    use super::*;

    fn emb(v: &[f64]) -> Embedding<f64> {
        Embedding(v.to_vec())
    }

    #[test]
    fn zero_params_give_zero() {
        let p = RewardParams::<f64>::zeros(3, 4);
        assert_eq!(p.forward(&emb(&[1.0, -2.0, 0.5])).unwrap(), 0.0);
    }

    #[test]
    fn output_bias_passes_through() {
        let mut p = RewardParams::<f64>::zeros(3, 4);
        let b2 = p.b2_index();
        p.flat_mut()[b2] = 2.5;
        assert_eq!(p.forward(&emb(&[0.3, 0.1, 9.0])).unwrap(), 2.5);
    }

    #[test]
    fn zero_params_full_gradient() {
        let p = RewardParams::<f64>::zeros(3, 4);
        let g = p.grad(&emb(&[1.0, 2.0, 3.0]), GradMode::Full).unwrap();
        assert!(g.0[..g.len() - 1].iter().all(|&x| x == 0.0));
        assert_eq!(*g.0.last().unwrap(), 1.0);
    }

    #[test]
    fn last_layer_gradient_is_hidden_and_one() {
        let p = RewardParams::<f64>::init(3, 5, 7).unwrap();
        let e = emb(&[0.2, -0.4, 1.0, 0.3, 0.9]);
        let act = p.activation(&e).unwrap();
        let g = p.grad(&e, GradMode::LastLayer).unwrap();
        assert_eq!(&g.0[..7], &act.hidden[..]);
        assert_eq!(g.0[7], 1.0);
    }

    #[test]
    fn dimension_mismatch() {
        let p = RewardParams::<f64>::zeros(3, 4);
        assert!(matches!(p.forward(&emb(&[1.0])), Err(Error::InvalidArgument(_))));
        assert!(p.grad(&emb(&[1.0]), GradMode::Full).is_err());
    }

    #[test]
    fn checkpoint_round_trip_and_version_check() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("theta.bin");
        let p = RewardParams::<f64>::init(21, 6, 9).unwrap();
        p.save(&path).unwrap();
        assert_eq!(RewardParams::<f64>::load(&path).unwrap(), p);

        let mut bytes = std::fs::read(&path).unwrap();
        bytes[4] = 7;
        std::fs::write(&path, &bytes).unwrap();
        let err = RewardParams::<f64>::load(&path).unwrap_err().to_string();
        assert!(err.contains("unsupported version 7"), "{err}");

        std::fs::write(&path, &std::fs::read(&path).unwrap()[..20]).unwrap();
        assert!(RewardParams::<f64>::load(&path).is_err());
    }

    #[test]
    fn single_precision_forward_tracks_double() {
        let p64 = RewardParams::<f64>::init(5, 4, 6).unwrap();
        let p32 = RewardParams::<f32>::init(5, 4, 6).unwrap();
        let e64 = emb(&[0.1, 0.2, -0.3, 0.4]);
        let e32 = Embedding(vec![0.1f32, 0.2, -0.3, 0.4]);
        let a = p64.forward(&e64).unwrap();
        let b = p32.forward(&e32).unwrap() as f64;
        assert!((a - b).abs() < 1e-5);
    }
}
