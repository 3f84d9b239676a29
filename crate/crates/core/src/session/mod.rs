//! The online personalization loop: duel generation, feedback, training,
//! deployment decoding and session persistence.

mod config;
mod persist;

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use config::{CovUpdateMode, ModelSpec, OracleKindSpec, OracleSpec, QuerySpec, SessionConfig};

use crate::bandit::{select_exploit, select_explore, CovarianceState, DecodeContext, ScoringConfig};
use crate::reward::{
    fit, EncodedPair, FeatureTable, GradMode, History, PreferenceRecord, RewardParams, RunningFeature,
};
use crate::tokenmodel::{top_k, BasePolicy, CandidateSet, TokenModel};
use crate::{Covariance, Error, Features, Result, RewardHead, Sequence, SimOracle, TokenId};

const FEEDBACK_SALT: u64 = 0xfeed_bac0_0000_0004;
const FIT_MIX: u64 = 0x9e37_79b9_7f4a_7c15;

/// Immutable pieces shared by every session with the same model setup.
#[derive(Debug, Clone)]
pub struct SessionEnv {
    pub model: Arc<TokenModel<f64>>,
    pub table: Arc<Features>,
}

impl SessionEnv {
    pub fn build(config: &SessionConfig) -> Result<Self> {
        let model = config.model.build()?;
        let table = config.build_features(model.vocab_size())?;
        Ok(SessionEnv { model: Arc::new(model), table: Arc::new(table) })
    }

    pub fn oracle(&self, config: &SessionConfig) -> Result<Option<SimOracle>> {
        config.build_oracle(self.model.vocab(), &self.table)
    }
}

/// The exploitation/exploration pair built in one round.
#[derive(Debug, Clone, PartialEq)]
pub struct Duel {
    pub y1: Sequence,
    pub y2: Sequence,
    /// Bonus of the chosen exploration token at each position where `y2` grew.
    pub bonuses: Vec<f64>,
    /// Candidate sets, one per generated position.
    pub candidates: Vec<CandidateSet>,
}

impl Duel {
    pub fn mean_bonus(&self) -> f64 {
        if self.bonuses.is_empty() {
            0.0
        } else {
            self.bonuses.iter().sum::<f64>() / self.bonuses.len() as f64
        }
    }
}

/// One completed round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub query: Vec<TokenId>,
    pub y1: Vec<TokenId>,
    pub y2: Vec<TokenId>,
    pub label: u8,
    pub train_loss_after: f64,
    pub mean_bonus: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f_exploit: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f_explore: Option<f64>,
}

/// Supplies the preference bit for a duel.
pub trait FeedbackSource {
    /// `true` when `y1` is preferred.
    fn judge(&mut self, y1: &Sequence, y2: &Sequence, rng: &mut ChaCha8Rng) -> Result<bool>;

    /// Ground-truth rewards to log alongside the round, when known.
    fn truths(&self, _y1: &Sequence, _y2: &Sequence) -> Option<(f64, f64)> {
        None
    }
}

impl FeedbackSource for &SimOracle {
    fn judge(&mut self, y1: &Sequence, y2: &Sequence, rng: &mut ChaCha8Rng) -> Result<bool> {
        Ok(self.feedback(y1, y2, rng))
    }

    fn truths(&self, y1: &Sequence, y2: &Sequence) -> Option<(f64, f64)> {
        Some((self.true_reward(y1), self.true_reward(y2)))
    }
}

/// Pre-recorded labels, consumed in order.
#[derive(Debug, Clone)]
pub struct ScriptedFeedback {
    labels: std::vec::IntoIter<bool>,
}

impl ScriptedFeedback {
    pub fn new(labels: Vec<bool>) -> Self {
        ScriptedFeedback { labels: labels.into_iter() }
    }
}

impl FeedbackSource for ScriptedFeedback {
    fn judge(&mut self, _: &Sequence, _: &Sequence, _: &mut ChaCha8Rng) -> Result<bool> {
        self.labels.next().ok_or_else(|| Error::InvalidInput("scripted feedback exhausted".into()))
    }
}

/// Training outcome of a completed round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundOutcome {
    pub round: usize,
    pub train_loss: f64,
}

/// `(theta_t, V_t, D_t)` plus the RNG and bookkeeping of one session.
#[derive(Debug, Clone)]
pub struct SessionState {
    config: SessionConfig,
    config_hash: String,
    env: SessionEnv,
    theta: RewardHead,
    cov: Covariance,
    history: History,
    encoded: Vec<EncodedPair<f64>>,
    rng: ChaCha8Rng,
    round: usize,
    frozen: bool,
}

impl SessionState {
    pub fn new(config: SessionConfig) -> Result<Self> {
        let env = SessionEnv::build(&config)?;
        Self::with_env(config, env)
    }

    pub fn with_env(config: SessionConfig, env: SessionEnv) -> Result<Self> {
        config.validate()?;
        let theta = RewardParams::init(config.theta_seed(), env.table.in_dim(), config.hidden)?;
        let cov = CovarianceState::new(theta.grad_len(config.gradient_mode), config.lambda0, config.cov_mode)?;
        let rng = ChaCha8Rng::seed_from_u64(config.seed ^ FEEDBACK_SALT);
        let config_hash = config.hash();
        Ok(SessionState {
            config,
            config_hash,
            env,
            theta,
            cov,
            history: History::new(),
            encoded: Vec::new(),
            rng,
            round: 0,
            frozen: false,
        })
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn config_hash(&self) -> &str {
        &self.config_hash
    }

    pub fn env(&self) -> &SessionEnv {
        &self.env
    }

    pub fn model(&self) -> &TokenModel<f64> {
        &self.env.model
    }

    pub fn table(&self) -> &Features {
        &self.env.table
    }

    pub fn theta(&self) -> &RewardHead {
        &self.theta
    }

    pub fn cov(&self) -> &Covariance {
        &self.cov
    }

    pub fn history(&self) -> &History {
        &self.history
    }

    pub fn rng(&self) -> &ChaCha8Rng {
        &self.rng
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    /// Ends the learning phase; `theta`, `V` and the history become read-only.
    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn tokenize(&self, text: &str) -> Vec<TokenId> {
        self.model().vocab().tokenize(text)
    }

    pub fn detokenize(&self, seq: &Sequence) -> String {
        self.model().vocab().detokenize(seq.generated())
    }

    fn fit_seed(&self, round: usize) -> u64 {
        self.config.seed ^ (round as u64 + 1).wrapping_mul(FIT_MIX)
    }

    /// Builds the duel pair for `query` against the current state without
    /// mutating it; returns the pair and the covariance after this round's
    /// updates.
    pub fn generate_duel(&self, query: &[TokenId]) -> Result<(Duel, Covariance)> {
        let cfg = self.config.scoring();
        generate_duel(self.model(), self.table(), &self.theta, &self.cov, &cfg, self.gen_opts(), query)
    }

    fn gen_opts(&self) -> GenOpts {
        GenOpts {
            max_new_tokens: self.config.max_new_tokens,
            grad_mode: self.config.gradient_mode,
            cadence: self.config.cov_update_mode,
        }
    }

    /// Generates the pair and commits the covariance updates.
    pub fn begin_round(&mut self, query: &[TokenId]) -> Result<Duel> {
        if self.frozen {
            return Err(Error::Frozen);
        }
        let (duel, cov) = self.generate_duel(query)?;
        self.cov = cov;
        Ok(duel)
    }

    /// Appends the labelled pair and refits `theta` on the full history.
    /// On training failure the history is restored and `theta` is unchanged.
    pub fn complete_round(&mut self, duel: &Duel, label: bool) -> Result<RoundOutcome> {
        if self.frozen {
            return Err(Error::Frozen);
        }
        let record = PreferenceRecord::new(duel.y1.clone(), duel.y2.clone(), label)?;
        let (w, l) = record.ordered();
        let pair = EncodedPair { winner: self.table().featurize(w)?, loser: self.table().featurize(l)? };
        self.history.push(record);
        self.encoded.push(pair);
        let seed = self.fit_seed(self.round);
        match fit(&self.theta, &self.encoded, self.config.reg, &self.config.train_opts, seed) {
            Ok(out) => {
                self.theta = out.params;
                self.round += 1;
                Ok(RoundOutcome { round: self.round, train_loss: out.final_loss })
            }
            Err(e) => {
                self.history.truncate(self.round);
                self.encoded.truncate(self.round);
                Err(e)
            }
        }
    }

    /// Completes a duel produced by [`generate_duel`](Self::generate_duel)
    /// earlier: commits its covariance and trains on the label. On failure the
    /// state is left as it was before the call.
    pub fn finish_round(&mut self, duel: &Duel, cov: Covariance, label: bool) -> Result<RoundOutcome> {
        if self.frozen {
            return Err(Error::Frozen);
        }
        if cov.dim() != self.cov.dim() {
            return Err(Error::InvalidArgument("covariance does not belong to this session".into()));
        }
        let saved = std::mem::replace(&mut self.cov, cov);
        self.complete_round(duel, label).inspect_err(|_| self.cov = saved)
    }

    /// One full round. Any failure leaves the state as it was at round start.
    pub fn run_round<F: FeedbackSource + ?Sized>(&mut self, query: &[TokenId], source: &mut F) -> Result<RoundRecord> {
        let saved_cov = self.cov.clone();
        let saved_rng = self.rng.clone();
        let duel = self.begin_round(query)?;
        let result = source
            .judge(&duel.y1, &duel.y2, &mut self.rng)
            .and_then(|label| self.complete_round(&duel, label).map(|o| (label, o)));
        let (label, outcome) = match result {
            Ok(v) => v,
            Err(e) => {
                self.cov = saved_cov;
                self.rng = saved_rng;
                return Err(e);
            }
        };
        let truths = source.truths(&duel.y1, &duel.y2);
        Ok(RoundRecord {
            round: outcome.round,
            query: duel.y1.query().to_vec(),
            y1: duel.y1.tokens().to_vec(),
            y2: duel.y2.tokens().to_vec(),
            label: label as u8,
            train_loss_after: outcome.train_loss,
            mean_bonus: duel.mean_bonus(),
            f_exploit: truths.map(|t| t.0),
            f_explore: truths.map(|t| t.1),
        })
    }

    /// Single response by pure exploitation with the current `theta`.
    pub fn deploy_generate(&self, query: &[TokenId]) -> Result<Sequence> {
        exploit_decode(
            self.model(),
            self.table(),
            &self.theta,
            &self.config.scoring(),
            self.config.max_new_tokens,
            query,
        )
    }

    /// Greedy decode of the base model alone.
    pub fn base_decode(&self, query: &[TokenId]) -> Result<Sequence> {
        base_greedy(self.model(), query, self.config.max_new_tokens)
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn restore(
        config: SessionConfig,
        config_hash: String,
        env: SessionEnv,
        theta: RewardHead,
        cov: Covariance,
        history: History,
        rng: ChaCha8Rng,
        frozen: bool,
    ) -> Result<Self> {
        let encoded = crate::reward::encode_history(&history, &env.table)?;
        let round = history.len();
        Ok(SessionState { config, config_hash, env, theta, cov, history, encoded, rng, round, frozen })
    }
}

/// Decoding limits and covariance bookkeeping for duel generation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenOpts {
    pub max_new_tokens: usize,
    pub grad_mode: GradMode,
    pub cadence: CovUpdateMode,
}

/// Builds the exploit/explore pair token by token.
///
/// At each position the candidates are the union of the top-k sets of the
/// sequences still growing. The exploitation token maximizes the score on
/// `y1`; the exploration token maximizes score plus the bonus on `y2`,
/// anchored at the gradient of `[y1, v1]` (or of `y1` itself once it has
/// ended). A sequence that emitted EOS stops growing while its partner
/// continues.
pub fn generate_duel<M: BasePolicy<f64> + ?Sized>(
    model: &M,
    table: &FeatureTable<f64>,
    theta: &RewardHead,
    cov: &Covariance,
    cfg: &ScoringConfig,
    opts: GenOpts,
    query: &[TokenId],
) -> Result<(Duel, Covariance)> {
    let mode = opts.grad_mode;
    let mut cov = cov.clone();
    let mut y1 = Sequence::from_query(query);
    let mut y2 = y1.clone();
    let mut f1 = RunningFeature::of(table, &y1)?;
    let mut f2 = f1.clone();
    let mut g1 = theta.grad(&f1.embedding, mode)?;
    let mut g2 = g1.clone();
    let mut bonuses = Vec::new();
    let mut candidates = Vec::new();

    for _ in 0..opts.max_new_tokens {
        let (live1, live2) = (!y1.is_finished(), !y2.is_finished());
        if !live1 && !live2 {
            break;
        }
        let c1 = DecodeContext { dist: model.next_token_dist(y1.tokens())?, feature: f1.clone() };
        let c2 = DecodeContext { dist: model.next_token_dist(y2.tokens())?, feature: f2.clone() };
        let cands = match (live1, live2) {
            (true, true) => top_k(&c1.dist, cfg.k)?.union(&top_k(&c2.dist, cfg.k)?),
            (true, false) => top_k(&c1.dist, cfg.k)?,
            _ => top_k(&c2.dist, cfg.k)?,
        };

        let exploit = if live1 { Some(select_exploit(&cands, &c1, theta, cfg, table)?) } else { None };
        let anchor = match &exploit {
            Some(s) => s.grad(theta, mode),
            None => g1.clone(),
        };
        if live2 {
            let e = select_explore(&cands, &c2, &anchor, theta, cfg, &cov, table, mode)?;
            bonuses.push(e.bonus);
            g2 = e.choice.grad(theta, mode);
            y2.push(e.choice.id);
            f2.push(table, e.choice.id)?;
        }
        if let Some(s) = exploit {
            y1.push(s.id);
            f1.push(table, s.id)?;
            g1 = anchor;
        }
        candidates.push(cands);
        if opts.cadence == CovUpdateMode::PerPosition {
            cov.update(g1.sub(&g2)?.as_slice())?;
        }
    }
    if opts.cadence == CovUpdateMode::PerRound {
        cov.update(g1.sub(&g2)?.as_slice())?;
    }
    Ok((Duel { y1, y2, bonuses, candidates }, cov))
}

/// Greedy decode maximizing the reward-guided score over the top-k set of
/// the current context.
pub fn exploit_decode<M: BasePolicy<f64> + ?Sized>(
    model: &M,
    table: &FeatureTable<f64>,
    theta: &RewardHead,
    cfg: &ScoringConfig,
    max_new_tokens: usize,
    query: &[TokenId],
) -> Result<Sequence> {
    let mut y = Sequence::from_query(query);
    let mut f = RunningFeature::of(table, &y)?;
    for _ in 0..max_new_tokens {
        if y.is_finished() {
            break;
        }
        let ctx = DecodeContext { dist: model.next_token_dist(y.tokens())?, feature: f.clone() };
        let cands = top_k(&ctx.dist, cfg.k)?;
        let pick = select_exploit(&cands, &ctx, theta, cfg, table)?;
        y.push(pick.id);
        f.push(table, pick.id)?;
    }
    Ok(y)
}

/// Argmax decode of the base model, lowest id on ties.
pub fn base_greedy<M: BasePolicy<f64> + ?Sized>(
    model: &M,
    query: &[TokenId],
    max_new_tokens: usize,
) -> Result<Sequence> {
    let mut y = Sequence::from_query(query);
    for _ in 0..max_new_tokens {
        if y.is_finished() {
            break;
        }
        let next = model.next_token_dist(y.tokens())?.argmax();
        y.push(next);
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> SessionConfig {
        SessionConfig {
            seed,
            max_new_tokens: 8,
            k: 8,
            hidden: 8,
            embed_dim: 6,
            model: ModelSpec::Synthetic { vocab_size: 24, embed_dim: 8, context_window: 2, seed: 3 },
            oracle: Some(OracleSpec::of(OracleKindSpec::Concise)),
            train_opts: crate::reward::TrainOpts { epochs: 5, ..Default::default() },
            ..SessionConfig::default()
        }
    }

    fn query() -> Vec<TokenId> {
        vec![TokenId(5), TokenId(9)]
    }

    #[test]
    fn omega_zero_pair_is_base_greedy() {
        let s = SessionState::new(SessionConfig { omega: 0.0, ..small(1) }).unwrap();
        let (d, _) = s.generate_duel(&query()).unwrap();
        let base = s.base_decode(&query()).unwrap();
        assert_eq!(d.y1, base);
        assert_eq!(d.y2, base);
        assert_eq!(s.deploy_generate(&query()).unwrap(), base);
    }

    #[test]
    fn nu_zero_pair_coincides() {
        let s = SessionState::new(SessionConfig { nu: 0.0, ..small(2) }).unwrap();
        let (d, _) = s.generate_duel(&query()).unwrap();
        assert_eq!(d.y1, d.y2);
    }

    #[test]
    fn selected_tokens_lie_in_candidate_sets() {
        let s = SessionState::new(small(3)).unwrap();
        let (d, _) = s.generate_duel(&query()).unwrap();
        for (p, c) in d.candidates.iter().enumerate() {
            for y in [&d.y1, &d.y2] {
                if let Some(&t) = y.generated().get(p) {
                    assert!(c.contains(t));
                }
            }
        }
    }

    #[test]
    fn round_appends_one_record() {
        let mut s = SessionState::new(small(4)).unwrap();
        let oracle = s.env().oracle(s.config()).unwrap().unwrap();
        for t in 1..=3 {
            let rec = s.run_round(&query(), &mut &oracle).unwrap();
            assert_eq!(rec.round, t);
            assert_eq!(s.history().len(), t);
            assert_eq!(s.round(), t);
            assert!(rec.f_exploit.is_some());
        }
    }

    #[test]
    fn swapped_presentation_trains_identically() {
        let mut a = SessionState::new(small(5)).unwrap();
        let mut b = a.clone();
        let duel = a.begin_round(&query()).unwrap();
        b.begin_round(&query()).unwrap();
        let swapped = Duel { y1: duel.y2.clone(), y2: duel.y1.clone(), ..duel.clone() };
        a.complete_round(&duel, true).unwrap();
        b.complete_round(&swapped, false).unwrap();
        assert_eq!(a.theta(), b.theta());
    }

    #[test]
    fn frozen_session_rejects_rounds() {
        let mut s = SessionState::new(small(6)).unwrap();
        s.freeze();
        assert!(matches!(s.begin_round(&query()), Err(Error::Frozen)));
        assert!(s.deploy_generate(&query()).is_ok());
    }

    #[test]
    fn failed_feedback_rolls_back() {
        let mut s = SessionState::new(small(7)).unwrap();
        let before = s.cov().clone();
        let mut empty = ScriptedFeedback::new(vec![]);
        assert!(s.run_round(&query(), &mut empty).is_err());
        assert_eq!(s.cov(), &before);
        assert_eq!(s.history().len(), 0);
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.dssn");
        let mut s = SessionState::new(small(8)).unwrap();
        let mut fb = ScriptedFeedback::new(vec![true, false, true]);
        for _ in 0..3 {
            s.run_round(&query(), &mut fb).unwrap();
        }
        s.save(&path).unwrap();
        let l = SessionState::load(&path).unwrap();
        assert_eq!(l.theta(), s.theta());
        assert_eq!(l.cov(), s.cov());
        assert_eq!(l.history(), s.history());
        assert_eq!(l.rng(), s.rng());
        assert_eq!(l.round(), 3);
        assert_eq!(l.deploy_generate(&query()).unwrap(), s.deploy_generate(&query()).unwrap());
    }

    #[test]
    fn wrong_snapshot_version_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.dssn");
        SessionState::new(small(9)).unwrap().save(&path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[4] = 9;
        std::fs::write(&path, &bytes).unwrap();
        let err = SessionState::load(&path).unwrap_err().to_string();
        assert!(err.contains("version"), "{err}");
    }
}
