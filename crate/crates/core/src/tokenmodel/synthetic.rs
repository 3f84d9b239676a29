use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{check_prefix, BasePolicy, ProbVector};
use crate::{Error, Result, Scalar, TokenId};

/// Seeded softmax model: `logit(v | prefix) = u_v . mean(emb(last c tokens))`.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticLm<S> {
    pub(crate) vocab_size: usize,
    pub(crate) embed_dim: usize,
    pub(crate) context_window: usize,
    pub(crate) seed: u64,
    /// Output vectors, `vocab_size x embed_dim` row-major.
    pub(crate) out: Vec<S>,
    /// Input embeddings, `vocab_size x embed_dim` row-major.
    pub(crate) emb: Vec<S>,
}

impl<S: Scalar> SyntheticLm<S> {
    pub fn build(seed: u64, vocab_size: usize, embed_dim: usize, context_window: usize) -> Result<Self> {
        if vocab_size < 4 {
            return Err(Error::InvalidArgument(format!("vocab_size must be >= 4, got {vocab_size}")));
        }
        if embed_dim < 1 {
            return Err(Error::InvalidArgument("embed_dim must be >= 1".into()));
        }
        if context_window < 1 {
            return Err(Error::InvalidArgument("context_window must be >= 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = vocab_size * embed_dim;
        let draw = |rng: &mut ChaCha8Rng| -> S { S::lit(StandardNormal.sample(rng)) };
        let out = (0..n).map(|_| draw(&mut rng)).collect();
        let emb = (0..n).map(|_| draw(&mut rng)).collect();
        Ok(SyntheticLm { vocab_size, embed_dim, context_window, seed, out, emb })
    }

    /// All-zero output vectors: every prefix gets the uniform distribution.
    pub fn uniform(vocab_size: usize) -> Self {
        SyntheticLm {
            vocab_size,
            embed_dim: 1,
            context_window: 1,
            seed: 0,
            out: vec![S::zero(); vocab_size],
            emb: vec![S::zero(); vocab_size],
        }
    }

    pub(crate) fn from_parts(
        vocab_size: usize,
        embed_dim: usize,
        context_window: usize,
        seed: u64,
        out: Vec<S>,
        emb: Vec<S>,
    ) -> Result<Self> {
        let n = vocab_size * embed_dim;
        if out.len() != n || emb.len() != n || context_window == 0 {
            return Err(Error::InvalidArgument("synthetic model tables do not match dimensions".into()));
        }
        Ok(SyntheticLm { vocab_size, embed_dim, context_window, seed, out, emb })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    pub fn context_window(&self) -> usize {
        self.context_window
    }

    fn logits(&self, prefix: &[TokenId]) -> Vec<S> {
        let d = self.embed_dim;
        let start = prefix.len().saturating_sub(self.context_window);
        let window = &prefix[start..];
        let mut ctx = vec![S::zero(); d];
        for t in window {
            let row = &self.emb[t.index() * d..(t.index() + 1) * d];
            for (c, &x) in ctx.iter_mut().zip(row) {
                *c += x;
            }
        }
        let inv = S::one() / S::lit(window.len() as f64);
        for c in &mut ctx {
            *c *= inv;
        }
        self.out.chunks_exact(d).map(|u| u.iter().zip(&ctx).map(|(&a, &b)| a * b).sum()).collect()
    }
}

impl<S: Scalar> BasePolicy<S> for SyntheticLm<S> {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn next_token_dist(&self, prefix: &[TokenId]) -> Result<ProbVector<S>> {
        check_prefix(prefix, self.vocab_size)?;
        if prefix.last() == Some(&TokenId::EOS) {
            return Ok(ProbVector::delta(self.vocab_size, TokenId::EOS));
        }
        Ok(ProbVector::softmax(&self.logits(prefix)))
    }
}
