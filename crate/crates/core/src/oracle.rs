//! Simulated users with a hidden reward `f` and BTL or deterministic choices.

use std::collections::HashSet;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::reward::FeatureTable;
use crate::tokenmodel::Vocab;
use crate::{Error, Result, Scalar, Sequence, TokenId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeedbackMode {
    /// `1` iff `f(y1) > f(y2)`; exact ties flip a fair coin.
    #[default]
    Deterministic,
    /// `Bernoulli(sigma((f(y1) - f(y2)) / temperature))`.
    BtlStochastic,
}

#[derive(Debug, Clone, PartialEq)]
pub enum OracleKind<S> {
    /// `w* . featurize(y)` with a hidden weight vector.
    Linear { weights: Vec<S>, table: FeatureTable<S> },
    /// `-(content length) / M`.
    Concise,
    /// `+(content length) / M`.
    Verbose,
    /// Fraction of generated tokens that belong to the lexicon.
    Lexicon(HashSet<TokenId>),
}

/// Ground-truth preference source for simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct Oracle<S> {
    kind: OracleKind<S>,
    max_len: usize,
    mode: FeedbackMode,
    temperature: S,
}

impl<S: Scalar> Oracle<S> {
    pub fn new(kind: OracleKind<S>, max_len: usize, mode: FeedbackMode, temperature: f64) -> Result<Self> {
        if !(temperature > 0.0) {
            return Err(Error::InvalidArgument(format!("temperature must be positive, got {temperature}")));
        }
        if max_len == 0 {
            return Err(Error::InvalidArgument("max_len must be >= 1".into()));
        }
        Ok(Oracle { kind, max_len, mode, temperature: S::lit(temperature) })
    }

    /// Linear oracle with `w* ~ N(0, I)` drawn from `seed`.
    pub fn linear(seed: u64, table: FeatureTable<S>, mode: FeedbackMode, temperature: f64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights = (0..table.in_dim()).map(|_| S::lit(StandardNormal.sample(&mut rng))).collect();
        let max_len = table.max_len();
        Self::new(OracleKind::Linear { weights, table }, max_len, mode, temperature)
    }

    /// Resolves lexicon words against `vocab`; unknown words are an error.
    pub fn lexicon_words<W: AsRef<str>>(vocab: &Vocab, words: &[W]) -> Result<HashSet<TokenId>> {
        let mut set = HashSet::new();
        for w in words {
            let w = w.as_ref();
            let id =
                vocab.get(w).ok_or_else(|| Error::InvalidInput(format!("lexicon word `{w}` not in vocabulary")))?;
            set.insert(id);
        }
        if set.is_empty() {
            return Err(Error::InvalidInput("lexicon is empty".into()));
        }
        Ok(set)
    }

    /// Lexicon file: UTF-8, one token per line, blank lines ignored.
    pub fn read_lexicon_file(path: impl AsRef<Path>) -> Result<Vec<String>> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(text.lines().map(str::trim).filter(|l| !l.is_empty()).map(str::to_owned).collect())
    }

    pub fn kind(&self) -> &OracleKind<S> {
        &self.kind
    }

    pub fn mode(&self) -> FeedbackMode {
        self.mode
    }

    pub fn true_reward(&self, y: &Sequence) -> S {
        let m = S::lit(self.max_len as f64);
        match &self.kind {
            OracleKind::Linear { weights, table } => match table.featurize(y) {
                Ok(e) => weights.iter().zip(e.as_slice()).map(|(&w, &x)| w * x).sum(),
                Err(_) => S::neg_infinity(),
            },
            OracleKind::Concise => -S::lit(y.content_len() as f64) / m,
            OracleKind::Verbose => S::lit(y.content_len() as f64) / m,
            OracleKind::Lexicon(set) => {
                let g = y.generated();
                if g.is_empty() {
                    return S::zero();
                }
                let hits = g.iter().filter(|t| set.contains(t)).count();
                S::lit(hits as f64) / S::lit(g.len() as f64)
            }
        }
    }

    /// Returns `true` when `y1` is preferred.
    pub fn feedback<R: Rng + ?Sized>(&self, y1: &Sequence, y2: &Sequence, rng: &mut R) -> bool {
        let (f1, f2) = (self.true_reward(y1), self.true_reward(y2));
        match self.mode {
            FeedbackMode::Deterministic => {
                if f1 == f2 {
                    rng.random_bool(0.5)
                } else {
                    f1 > f2
                }
            }
            FeedbackMode::BtlStochastic => {
                let p = ((f1 - f2) / self.temperature).sigmoid().to_f64_lossy();
                rng.random::<f64>() < p
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(gen: &[u32]) -> Sequence {
        let mut s = Sequence::from_query(&[TokenId(3)]);
        for &g in gen {
            s.push(TokenId(g));
        }
        s
    }

    fn oracle(kind: OracleKind<f64>, mode: FeedbackMode) -> Oracle<f64> {
        Oracle::new(kind, 10, mode, 1.0).unwrap()
    }

    #[test]
    fn length_oracles() {
        let c = oracle(OracleKind::Concise, FeedbackMode::Deterministic);
        assert_eq!(c.true_reward(&seq(&[])), 0.0);
        assert_eq!(c.true_reward(&seq(&[4, 5, 1])), -0.2);
        let v = oracle(OracleKind::Verbose, FeedbackMode::Deterministic);
        assert_eq!(v.true_reward(&seq(&[4; 10])), 1.0);
    }

    #[test]
    fn lexicon_fraction_matches_count() {
        let set: HashSet<_> = [TokenId(4), TokenId(6)].into_iter().collect();
        let o = oracle(OracleKind::Lexicon(set.clone()), FeedbackMode::Deterministic);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let n = rng.random_range(1..20);
            let gen: Vec<u32> = (0..n).map(|_| rng.random_range(3..9)).collect();
            let hits = gen.iter().filter(|&&t| set.contains(&TokenId(t))).count();
            assert_eq!(o.true_reward(&seq(&gen)), hits as f64 / n as f64);
        }
    }

    #[test]
    fn deterministic_comparison_and_scale_invariance() {
        // f1 = 3/10, f2 = 5/10 for the verbose oracle.
        let o = oracle(OracleKind::Verbose, FeedbackMode::Deterministic);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(!o.feedback(&seq(&[4; 3]), &seq(&[4; 5]), &mut rng));
        assert!(o.feedback(&seq(&[4; 5]), &seq(&[4; 3]), &mut rng));
        let big = Oracle::<f64>::new(OracleKind::Verbose, 1000, FeedbackMode::Deterministic, 1.0).unwrap();
        assert!(!big.feedback(&seq(&[4; 3]), &seq(&[4; 5]), &mut rng));
    }

    #[test]
    fn deterministic_ties_are_fair() {
        let o = oracle(OracleKind::Verbose, FeedbackMode::Deterministic);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let ones = (0..10_000).filter(|_| o.feedback(&seq(&[4]), &seq(&[5]), &mut rng)).count();
        assert!((ones as f64 / 10_000.0 - 0.5).abs() <= 0.015);
    }

    #[test]
    fn btl_sampling_rates() {
        let o = Oracle::<f64>::new(OracleKind::Verbose, 10, FeedbackMode::BtlStochastic, 0.1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 10_000;
        // equal lengths: rate 0.5
        let ones = (0..n).filter(|_| o.feedback(&seq(&[4, 4]), &seq(&[5, 5]), &mut rng)).count();
        assert!((ones as f64 / n as f64 - 0.5).abs() <= 0.015);
        // delta f = 0.1, temperature 0.1: rate sigma(1)
        let expect = 1.0 / (1.0 + (-1.0f64).exp());
        let sd = (expect * (1.0 - expect) / n as f64).sqrt();
        let ones = (0..n).filter(|_| o.feedback(&seq(&[4, 4]), &seq(&[5]), &mut rng)).count();
        assert!((ones as f64 / n as f64 - expect).abs() <= 3.0 * sd);
        // antisymmetry of the distribution
        let rev = (0..n).filter(|_| o.feedback(&seq(&[5]), &seq(&[4, 4]), &mut rng)).count();
        assert!((rev as f64 / n as f64 - (1.0 - expect)).abs() <= 3.0 * sd);
    }

    #[test]
    fn lexicon_words_resolve() {
        let v = Vocab::from_words(["good", "bad"]);
        assert_eq!(Oracle::<f64>::lexicon_words(&v, &["good"]).unwrap().len(), 1);
        assert!(Oracle::<f64>::lexicon_words(&v, &["ugly"]).is_err());
    }
}
