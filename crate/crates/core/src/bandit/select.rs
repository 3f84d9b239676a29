use serde::{Deserialize, Serialize};

use super::{uncertainty_bonus, CovarianceState};
use crate::reward::{Activation, Embedding, FeatureTable, GradMode, GradientVector, RewardParams, RunningFeature};
use crate::tokenmodel::{BasePolicy, CandidateSet, ProbVector};
use crate::{Error, Result, Scalar, Sequence, TokenId};

/// Knobs of the reward-guided score and the exploration bonus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoringConfig {
    /// Reward weight.
    pub omega: f64,
    /// Exploration weight on the uncertainty bonus.
    pub nu: f64,
    /// Candidates taken from each sequence's base distribution.
    pub k: usize,
    /// Use `ln pi` instead of `pi` as the base term.
    pub use_log_prob: bool,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        ScoringConfig { omega: 1.0, nu: 0.5, k: 40, use_log_prob: false }
    }
}

/// What a selector needs about one growing sequence at one position.
#[derive(Debug, Clone)]
pub struct DecodeContext<S> {
    pub dist: ProbVector<S>,
    pub feature: RunningFeature<S>,
}

impl<S: Scalar> DecodeContext<S> {
    pub fn new<M: BasePolicy<S> + ?Sized>(model: &M, table: &FeatureTable<S>, seq: &Sequence) -> Result<Self> {
        Ok(DecodeContext { dist: model.next_token_dist(seq.tokens())?, feature: RunningFeature::of(table, seq)? })
    }
}

/// A candidate with its score and the forward pass of `[y, v]`.
#[derive(Debug, Clone)]
pub struct Scored<S> {
    pub id: TokenId,
    pub score: S,
    pub embedding: Embedding<S>,
    pub activation: Activation<S>,
}

impl<S: Scalar> Scored<S> {
    pub fn reward(&self) -> S {
        self.activation.value
    }

    pub fn grad(&self, theta: &RewardParams<S>, mode: GradMode) -> GradientVector<S> {
        theta.grad_from(&self.activation, &self.embedding, mode)
    }
}

fn base_term<S: Scalar>(p: S, use_log: bool) -> S {
    if use_log {
        p.ln()
    } else {
        p
    }
}

/// Scores `v` in `ctx`: `pi(v | y) + omega * r([y, v])`.
pub fn score_in<S: Scalar>(
    v: TokenId,
    ctx: &DecodeContext<S>,
    theta: &RewardParams<S>,
    cfg: &ScoringConfig,
    table: &FeatureTable<S>,
) -> Result<Scored<S>> {
    if v.index() >= ctx.dist.len() {
        return Err(Error::InvalidInput(format!("token id {} outside vocabulary", v.0)));
    }
    let embedding = ctx.feature.extended(table, v)?;
    let activation = theta.activation(&embedding)?;
    let score = base_term(ctx.dist.prob(v), cfg.use_log_prob) + S::lit(cfg.omega) * activation.value;
    Ok(Scored { id: v, score, embedding, activation })
}

/// One-shot score of `v` after `ctx_seq`.
pub fn score<S: Scalar, M: BasePolicy<S> + ?Sized>(
    v: TokenId,
    ctx_seq: &Sequence,
    theta: &RewardParams<S>,
    cfg: &ScoringConfig,
    model: &M,
    table: &FeatureTable<S>,
) -> Result<S> {
    let ctx = DecodeContext::new(model, table, ctx_seq)?;
    Ok(score_in(v, &ctx, theta, cfg, table)?.score)
}

/// Argmax of the score over `cands`; ties go to the lowest id.
pub fn select_exploit<S: Scalar>(
    cands: &CandidateSet,
    ctx: &DecodeContext<S>,
    theta: &RewardParams<S>,
    cfg: &ScoringConfig,
    table: &FeatureTable<S>,
) -> Result<Scored<S>> {
    let mut best: Option<Scored<S>> = None;
    for &v in cands.ids() {
        let s = score_in(v, ctx, theta, cfg, table)?;
        if best.as_ref().is_none_or(|b| beats(s.score, s.id, b.score, b.id)) {
            best = Some(s);
        }
    }
    best.ok_or_else(|| Error::InvalidArgument("empty candidate set".into()))
}

/// Exploration choice and the bonus it carried.
#[derive(Debug, Clone)]
pub struct Explored<S> {
    pub choice: Scored<S>,
    pub bonus: S,
}

/// Argmax over `cands` of `score + omega * nu * |grad r([y2, v]) - anchor|_{V^-1}`.
#[allow(clippy::too_many_arguments)]
pub fn select_explore<S: Scalar>(
    cands: &CandidateSet,
    ctx2: &DecodeContext<S>,
    anchor_grad: &GradientVector<S>,
    theta: &RewardParams<S>,
    cfg: &ScoringConfig,
    cov: &CovarianceState<S>,
    table: &FeatureTable<S>,
    mode: GradMode,
) -> Result<Explored<S>> {
    let weight = S::lit(cfg.omega * cfg.nu);
    let mut best: Option<(S, Explored<S>)> = None;
    for &v in cands.ids() {
        let s = score_in(v, ctx2, theta, cfg, table)?;
        let bonus = uncertainty_bonus(&s.grad(theta, mode), anchor_grad, cov)?;
        let total = s.score + weight * bonus;
        if best.as_ref().is_none_or(|(bt, b)| beats(total, v, *bt, b.choice.id)) {
            best = Some((total, Explored { choice: s, bonus }));
        }
    }
    best.map(|(_, e)| e).ok_or_else(|| Error::InvalidArgument("empty candidate set".into()))
}

/// Strict improvement, or a tie won by the lower id.
fn beats<S: Scalar>(score: S, id: TokenId, best: S, best_id: TokenId) -> bool {
    score > best || (score == best && id < best_id)
}
