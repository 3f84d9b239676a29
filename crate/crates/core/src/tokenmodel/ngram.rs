use std::collections::HashMap;
use std::marker::PhantomData;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{check_prefix, BasePolicy, ProbVector, Vocab};
use crate::{Error, Result, Scalar, TokenId};

/// Word types kept in the vocabulary; the rest collapse to UNK.
pub const MAX_TYPES: usize = 5000;

/// Follower counts for one context.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Counts {
    pub total: u64,
    /// `(next token, count)`, ascending by token id.
    pub next: Vec<(TokenId, u64)>,
}

impl Counts {
    fn from_map(map: HashMap<TokenId, u64>) -> Self {
        let mut next: Vec<_> = map.into_iter().collect();
        next.sort_unstable_by_key(|&(t, _)| t);
        Counts { total: next.iter().map(|&(_, c)| c).sum(), next }
    }
}

/// Add-alpha smoothed n-gram model over a whitespace vocabulary.
///
/// Smoothing mass is spread over the word types only. Reserved tokens (EOS,
/// UNK) receive their observed counts, and BOS is never predicted. Contexts
/// never seen in training back off to the smoothed unigram table.
#[derive(Debug, Clone, PartialEq)]
pub struct NgramLm<S> {
    pub(crate) order: usize,
    pub(crate) alpha: f64,
    pub(crate) vocab: Vocab,
    pub(crate) contexts: HashMap<Vec<TokenId>, Counts>,
    pub(crate) unigram: Counts,
    _scalar: PhantomData<S>,
}

impl<S: Scalar> NgramLm<S> {
    pub fn train_file(path: impl AsRef<Path>, order: usize, alpha: f64) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::train_text(&text, order, alpha)
    }

    /// Each non-empty line is one sentence, wrapped as `BOS^(n-1) words EOS`.
    pub fn train_text(text: &str, order: usize, alpha: f64) -> Result<Self> {
        if !(2..=3).contains(&order) {
            return Err(Error::InvalidArgument(format!("order must be 2 or 3, got {order}")));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!("alpha must be positive and finite, got {alpha}")));
        }
        let lines: Vec<Vec<&str>> =
            text.lines().map(|l| l.split_whitespace().collect::<Vec<_>>()).filter(|l| !l.is_empty()).collect();
        if lines.is_empty() {
            return Err(Error::Data("corpus contains no tokens".into()));
        }

        let mut freq: HashMap<&str, u64> = HashMap::new();
        for w in lines.iter().flatten() {
            *freq.entry(w).or_default() += 1;
        }
        let mut types: Vec<(&str, u64)> = freq.into_iter().collect();
        types.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        types.truncate(MAX_TYPES);
        // Stable id assignment: most frequent first, then lexicographic.
        let vocab = Vocab::from_words(types.iter().map(|&(w, _)| w.to_owned()));

        let ctx_len = order - 1;
        let mut ctx_maps: HashMap<Vec<TokenId>, HashMap<TokenId, u64>> = HashMap::new();
        let mut uni: HashMap<TokenId, u64> = HashMap::new();
        for line in &lines {
            let mut toks = vec![TokenId::BOS; ctx_len];
            toks.extend(line.iter().map(|w| vocab.id(w)));
            toks.push(TokenId::EOS);
            for i in ctx_len..toks.len() {
                let next = toks[i];
                *ctx_maps.entry(toks[i - ctx_len..i].to_vec()).or_default().entry(next).or_default() += 1;
                *uni.entry(next).or_default() += 1;
            }
        }
        let contexts = ctx_maps.into_iter().map(|(k, v)| (k, Counts::from_map(v))).collect();
        Ok(NgramLm { order, alpha, vocab, contexts, unigram: Counts::from_map(uni), _scalar: PhantomData })
    }

    pub(crate) fn from_parts(
        order: usize,
        alpha: f64,
        vocab: Vocab,
        contexts: HashMap<Vec<TokenId>, Counts>,
        unigram: Counts,
    ) -> Self {
        NgramLm { order, alpha, vocab, contexts, unigram, _scalar: PhantomData }
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    fn smoothed(&self, counts: &Counts) -> ProbVector<S> {
        let v = self.vocab.len();
        let support = v - TokenId::RESERVED;
        let alpha = S::lit(self.alpha);
        let denom = S::lit(counts.total as f64) + alpha * S::lit(support as f64);
        let mut raw = vec![S::zero(); v];
        for p in raw.iter_mut().skip(TokenId::RESERVED) {
            *p = alpha;
        }
        for &(t, c) in &counts.next {
            raw[t.index()] += S::lit(c as f64);
        }
        for p in &mut raw {
            *p /= denom;
        }
        ProbVector::from_raw_unchecked(raw)
    }
}

impl<S: Scalar> BasePolicy<S> for NgramLm<S> {
    fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    fn next_token_dist(&self, prefix: &[TokenId]) -> Result<ProbVector<S>> {
        check_prefix(prefix, self.vocab.len())?;
        if prefix.last() == Some(&TokenId::EOS) {
            return Ok(ProbVector::delta(self.vocab.len(), TokenId::EOS));
        }
        let ctx_len = self.order - 1;
        let mut ctx = vec![TokenId::BOS; ctx_len.saturating_sub(prefix.len())];
        ctx.extend_from_slice(&prefix[prefix.len().saturating_sub(ctx_len)..]);
        let counts = self.contexts.get(&ctx).unwrap_or(&self.unigram);
        Ok(self.smoothed(counts))
    }
}
