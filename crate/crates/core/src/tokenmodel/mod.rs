//! Frozen base policies: next-token distributions and top-k candidates.

mod ngram;
mod synthetic;
mod vocab;

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use ngram::{Counts, NgramLm, MAX_TYPES};
pub use synthetic::SyntheticLm;
pub use vocab::{Vocab, BOS_TEXT, EOS_TEXT, UNK_TEXT};

use crate::{Error, Result, Scalar, TokenId};

/// A next-token distribution over the full vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector<S>(Vec<S>);

impl<S: Scalar> ProbVector<S> {
    /// Validates nonnegativity and unit mass (1e-9 in `f64`, scaled by machine
    /// epsilon for narrower types).
    pub fn new(probs: Vec<S>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidArgument("empty distribution".into()));
        }
        if probs.iter().any(|p| !(*p >= S::zero()) || !p.is_finite()) {
            return Err(Error::InvalidArgument("probabilities must be finite and nonnegative".into()));
        }
        let tol = S::lit(1e-9).max(S::epsilon() * S::lit(8.0 * probs.len() as f64));
        let total: S = probs.iter().copied().sum();
        if (total - S::one()).abs() > tol {
            return Err(Error::InvalidArgument(format!("probabilities sum to {total}, not 1")));
        }
        Ok(ProbVector(probs))
    }

    pub(crate) fn from_raw_unchecked(probs: Vec<S>) -> Self {
        ProbVector(probs)
    }

    pub fn delta(vocab_size: usize, at: TokenId) -> Self {
        let mut p = vec![S::zero(); vocab_size];
        p[at.index()] = S::one();
        ProbVector(p)
    }

    /// Max-shifted softmax.
    pub fn softmax(logits: &[S]) -> Self {
        let max = logits.iter().copied().fold(S::neg_infinity(), S::max);
        let mut p: Vec<S> = logits.iter().map(|&l| (l - max).exp()).collect();
        let z: S = p.iter().copied().sum();
        for x in &mut p {
            *x /= z;
        }
        ProbVector(p)
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

    pub fn prob(&self, id: TokenId) -> S {
        self.0[id.index()]
    }

    /// Highest-probability token, lowest id on ties.
    pub fn argmax(&self) -> TokenId {
        let mut best = 0;
        for (i, &p) in self.0.iter().enumerate().skip(1) {
            if p > self.0[best] {
                best = i;
            }
        }
        TokenId::from(best)
    }
}

/// Ordered, duplicate-free candidate tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateSet(Vec<TokenId>);

impl CandidateSet {
    pub fn ids(&self) -> &[TokenId] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, id: TokenId) -> bool {
        self.0.contains(&id)
    }

    /// Union in ascending id order.
    pub fn union(&self, other: &CandidateSet) -> CandidateSet {
        let mut ids: Vec<TokenId> = self.0.iter().chain(&other.0).copied().collect();
        ids.sort_unstable();
        ids.dedup();
        CandidateSet(ids)
    }

    /// Builds a set from arbitrary ids, dropping duplicates and keeping first
    /// occurrence order.
    pub fn from_ids(ids: impl IntoIterator<Item = TokenId>) -> CandidateSet {
        let mut out = Vec::new();
        for id in ids {
            if !out.contains(&id) {
                out.push(id);
            }
        }
        CandidateSet(out)
    }
}

/// The `min(k, vocab)` most likely tokens, sorted by `(-prob, id)`.
pub fn top_k<S: Scalar>(dist: &ProbVector<S>, k: usize) -> Result<CandidateSet> {
    if k < 1 {
        return Err(Error::InvalidArgument("k must be >= 1".into()));
    }
    let p = dist.as_slice();
    let mut idx: Vec<usize> = (0..p.len()).collect();
    let by_prob = |a: &usize, b: &usize| p[*b].partial_cmp(&p[*a]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(b));
    if k < idx.len() {
        idx.select_nth_unstable_by(k - 1, by_prob);
        idx.truncate(k);
    }
    idx.sort_unstable_by(by_prob);
    Ok(CandidateSet(idx.into_iter().map(TokenId::from).collect()))
}

/// A frozen next-token policy.
pub trait BasePolicy<S>: Send + Sync {
    fn vocab_size(&self) -> usize;

    /// Distribution over the next token. Prefixes ending in EOS are absorbing.
    fn next_token_dist(&self, prefix: &[TokenId]) -> Result<ProbVector<S>>;
}

pub(crate) fn check_prefix(prefix: &[TokenId], vocab_size: usize) -> Result<()> {
    if prefix.is_empty() {
        return Err(Error::InvalidInput("prefix must be non-empty".into()));
    }
    if let Some(bad) = prefix.iter().find(|t| t.index() >= vocab_size) {
        return Err(Error::InvalidInput(format!("token id {} outside vocabulary of {vocab_size}", bad.0)));
    }
    Ok(())
}

/// One of the toy base models.
#[derive(Debug, Clone, PartialEq)]
pub enum TokenModel<S> {
    Synthetic { lm: SyntheticLm<S>, vocab: Vocab },
    Ngram(NgramLm<S>),
}

impl<S: Scalar> TokenModel<S> {
    pub fn synthetic(seed: u64, vocab_size: usize, embed_dim: usize, context_window: usize) -> Result<Self> {
        let lm = SyntheticLm::build(seed, vocab_size, embed_dim, context_window)?;
        Ok(TokenModel::Synthetic { lm, vocab: Vocab::placeholder(vocab_size) })
    }

    pub fn ngram(corpus: impl AsRef<Path>, order: usize, alpha: f64) -> Result<Self> {
        Ok(TokenModel::Ngram(NgramLm::train_file(corpus, order, alpha)?))
    }

    pub fn vocab(&self) -> &Vocab {
        match self {
            TokenModel::Synthetic { vocab, .. } => vocab,
            TokenModel::Ngram(m) => m.vocab(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            TokenModel::Synthetic { .. } => "synthetic",
            TokenModel::Ngram(_) => "ngram",
        }
    }

    /// Writes the versioned JSON model dump.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let dump = ModelDump::from_model(self);
        let text = serde_json::to_string(&dump)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let dump: ModelDump =
            serde_json::from_str(&text).map_err(|e| Error::format(path, format!("bad model dump: {e}")))?;
        dump.into_model().map_err(|e| Error::format(path, e.to_string()))
    }
}

impl<S: Scalar> BasePolicy<S> for TokenModel<S> {
    fn vocab_size(&self) -> usize {
        match self {
            TokenModel::Synthetic { lm, .. } => lm.vocab_size(),
            TokenModel::Ngram(m) => m.vocab_size(),
        }
    }

    fn next_token_dist(&self, prefix: &[TokenId]) -> Result<ProbVector<S>> {
        match self {
            TokenModel::Synthetic { lm, .. } => lm.next_token_dist(prefix),
            TokenModel::Ngram(m) => m.next_token_dist(prefix),
        }
    }
}

const MODEL_FORMAT: &str = "duelsteer-model";
const MODEL_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct ModelHeader {
    format: String,
    version: u32,
    kind: String,
    vocab_size: usize,
    seed: u64,
    order: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum ModelBody {
    Synthetic { embed_dim: usize, context_window: usize, out: Vec<f64>, emb: Vec<f64> },
    Ngram { alpha: f64, vocab: Vocab, contexts: Vec<(Vec<TokenId>, Counts)>, unigram: Counts },
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelDump {
    header: ModelHeader,
    body: ModelBody,
}

impl ModelDump {
    fn from_model<S: Scalar>(model: &TokenModel<S>) -> Self {
        let f = |v: &[S]| v.iter().map(|x| x.to_f64_lossy()).collect::<Vec<_>>();
        match model {
            TokenModel::Synthetic { lm, .. } => ModelDump {
                header: header("synthetic", lm.vocab_size, lm.seed, None),
                body: ModelBody::Synthetic {
                    embed_dim: lm.embed_dim,
                    context_window: lm.context_window,
                    out: f(&lm.out),
                    emb: f(&lm.emb),
                },
            },
            TokenModel::Ngram(m) => {
                let mut contexts: Vec<_> = m.contexts.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
                contexts.sort_unstable_by(|a, b| a.0.cmp(&b.0));
                ModelDump {
                    header: header("ngram", m.vocab.len(), 0, Some(m.order)),
                    body: ModelBody::Ngram {
                        alpha: m.alpha,
                        vocab: m.vocab.clone(),
                        contexts,
                        unigram: m.unigram.clone(),
                    },
                }
            }
        }
    }

    fn into_model<S: Scalar>(self) -> Result<TokenModel<S>> {
        let h = self.header;
        if h.format != MODEL_FORMAT {
            return Err(Error::InvalidInput(format!("not a model dump (format `{}`)", h.format)));
        }
        if h.version != MODEL_VERSION {
            return Err(Error::InvalidInput(format!(
                "model dump version {} unsupported (expected {MODEL_VERSION})",
                h.version
            )));
        }
        let conv = |v: Vec<f64>| v.into_iter().map(S::lit).collect::<Vec<_>>();
        match (h.kind.as_str(), self.body) {
            ("synthetic", ModelBody::Synthetic { embed_dim, context_window, out, emb }) => {
                let lm =
                    SyntheticLm::from_parts(h.vocab_size, embed_dim, context_window, h.seed, conv(out), conv(emb))?;
                Ok(TokenModel::Synthetic { lm, vocab: Vocab::placeholder(h.vocab_size) })
            }
            ("ngram", ModelBody::Ngram { alpha, vocab, contexts, unigram }) => {
                let order = h.order.ok_or_else(|| Error::InvalidInput("ngram dump lacks order".into()))?;
                if vocab.len() != h.vocab_size {
                    return Err(Error::InvalidInput("vocab_size disagrees with vocabulary".into()));
                }
                let contexts: HashMap<_, _> = contexts.into_iter().collect();
                Ok(TokenModel::Ngram(NgramLm::from_parts(order, alpha, vocab, contexts, unigram)))
            }
            (kind, _) => Err(Error::InvalidInput(format!("header kind `{kind}` does not match body"))),
        }
    }
}

fn header(kind: &str, vocab_size: usize, seed: u64, order: Option<usize>) -> ModelHeader {
    ModelHeader { format: MODEL_FORMAT.into(), version: MODEL_VERSION, kind: kind.into(), vocab_size, seed, order }
}
