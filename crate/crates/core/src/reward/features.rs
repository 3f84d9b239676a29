use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::{Error, Result, Scalar, Sequence, TokenId};

/// Sequence representation fed to the reward head: mean-pooled token rows
/// over the generated tokens, then `generated_len / max_len`.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding<S>(pub Vec<S>);

impl<S: Scalar> Embedding<S> {
    pub fn as_slice(&self) -> &[S] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Fixed seeded token embedding table, independent of the base model.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable<S> {
    dim: usize,
    max_len: usize,
    rows: Vec<S>,
}

impl<S: Scalar> FeatureTable<S> {
    pub fn new(seed: u64, vocab_size: usize, dim: usize, max_len: usize) -> Result<Self> {
        if dim == 0 || max_len == 0 || vocab_size == 0 {
            return Err(Error::InvalidArgument("feature table needs dim, max_len and vocab_size >= 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = (0..vocab_size * dim).map(|_| S::lit(StandardNormal.sample(&mut rng))).collect();
        Ok(FeatureTable { dim, max_len, rows })
    }

    pub fn from_rows(rows: Vec<S>, dim: usize, max_len: usize) -> Result<Self> {
        if dim == 0 || max_len == 0 || rows.is_empty() || !rows.len().is_multiple_of(dim) {
            return Err(Error::InvalidArgument("feature rows do not tile into dim-wide rows".into()));
        }
        Ok(FeatureTable { dim, max_len, rows })
    }

    /// Width of an [`Embedding`]: token dimension plus the length feature.
    pub fn in_dim(&self) -> usize {
        self.dim + 1
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn vocab_size(&self) -> usize {
        self.rows.len() / self.dim
    }

    pub fn row(&self, id: TokenId) -> Result<&[S]> {
        let i = id.index();
        if i >= self.vocab_size() {
            return Err(Error::InvalidInput(format!("token id {} has no feature row", id.0)));
        }
        Ok(&self.rows[i * self.dim..(i + 1) * self.dim])
    }

    /// Featurizes a sequence from scratch. Query tokens and BOS are excluded.
    pub fn featurize(&self, seq: &Sequence) -> Result<Embedding<S>> {
        let generated = seq.generated();
        let mut v = vec![S::zero(); self.in_dim()];
        for &t in generated {
            for (acc, &x) in v.iter_mut().zip(self.row(t)?) {
                *acc += x;
            }
        }
        let n = generated.len();
        if n > 0 {
            let inv = S::lit(n as f64);
            for x in &mut v[..self.dim] {
                *x /= inv;
            }
        }
        v[self.dim] = S::lit(n as f64) / S::lit(self.max_len as f64);
        Ok(Embedding(v))
    }

    /// Embedding of `[y, token]` from the embedding of `y` with `count`
    /// generated tokens, in `O(dim)`.
    pub fn extend(&self, prev: &Embedding<S>, count: usize, token: TokenId) -> Result<Embedding<S>> {
        if prev.len() != self.in_dim() {
            return Err(Error::InvalidArgument(format!(
                "embedding has width {}, table expects {}",
                prev.len(),
                self.in_dim()
            )));
        }
        let row = self.row(token)?;
        let c = S::lit(count as f64);
        let c1 = S::lit((count + 1) as f64);
        let mut v: Vec<S> = prev.0[..self.dim].iter().zip(row).map(|(&m, &x)| (m * c + x) / c1).collect();
        v.push(c1 / S::lit(self.max_len as f64));
        Ok(Embedding(v))
    }
}

/// Embedding of a growing sequence together with its generated-token count.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningFeature<S> {
    pub embedding: Embedding<S>,
    pub count: usize,
}

impl<S: Scalar> RunningFeature<S> {
    pub fn of(table: &FeatureTable<S>, seq: &Sequence) -> Result<Self> {
        Ok(RunningFeature { embedding: table.featurize(seq)?, count: seq.generated().len() })
    }

    pub fn extended(&self, table: &FeatureTable<S>, token: TokenId) -> Result<Embedding<S>> {
        table.extend(&self.embedding, self.count, token)
    }

    pub fn push(&mut self, table: &FeatureTable<S>, token: TokenId) -> Result<()> {
        self.embedding = self.extended(table, token)?;
        self.count += 1;
        Ok(())
    }
}
