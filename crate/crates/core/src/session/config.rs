use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bandit::{CovMode, ScoringConfig};
use crate::oracle::{FeedbackMode, Oracle, OracleKind};
use crate::reward::{FeatureTable, GradMode, TrainOpts};
use crate::tokenmodel::{TokenModel, Vocab};
use crate::{Error, Result};

/// When the covariance absorbs gradient differences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CovUpdateMode {
    /// After every token position, using the current partial sequences.
    #[default]
    PerPosition,
    /// Once per round, using the finished pair.
    PerRound,
}

/// Base-model description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ModelSpec {
    Synthetic {
        #[serde(default = "defaults::vocab_size")]
        vocab_size: usize,
        #[serde(default = "defaults::lm_embed_dim")]
        embed_dim: usize,
        #[serde(default = "defaults::context_window")]
        context_window: usize,
        #[serde(default = "defaults::lm_seed")]
        seed: u64,
    },
    Ngram {
        corpus: PathBuf,
        #[serde(default = "defaults::order")]
        order: usize,
        #[serde(default = "defaults::alpha")]
        alpha: f64,
    },
    /// A model dump written by `TokenModel::save`.
    Dump { path: PathBuf },
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec::Synthetic {
            vocab_size: defaults::vocab_size(),
            embed_dim: defaults::lm_embed_dim(),
            context_window: defaults::context_window(),
            seed: defaults::lm_seed(),
        }
    }
}

impl ModelSpec {
    pub fn build(&self) -> Result<TokenModel<f64>> {
        match self {
            ModelSpec::Synthetic { vocab_size, embed_dim, context_window, seed } => {
                TokenModel::synthetic(*seed, *vocab_size, *embed_dim, *context_window)
            }
            ModelSpec::Ngram { corpus, order, alpha } => TokenModel::ngram(corpus, *order, *alpha),
            ModelSpec::Dump { path } => TokenModel::load(path),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OracleKindSpec {
    Linear,
    Concise,
    Verbose,
    Lexicon,
}

/// Simulated-user description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSpec {
    pub kind: OracleKindSpec,
    /// Seed of the hidden linear weights; defaults to one derived from the session seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub words: Vec<String>,
    /// Lexicon file, one token per line.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    #[serde(default = "defaults::temperature")]
    pub temperature: f64,
}

impl OracleSpec {
    pub fn of(kind: OracleKindSpec) -> Self {
        OracleSpec { kind, seed: None, words: Vec::new(), file: None, temperature: defaults::temperature() }
    }

    pub fn lexicon<W: Into<String>>(words: impl IntoIterator<Item = W>) -> Self {
        OracleSpec { words: words.into_iter().map(Into::into).collect(), ..Self::of(OracleKindSpec::Lexicon) }
    }
}

/// Source of round queries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum QuerySpec {
    /// Text file, one whitespace-tokenized query per line, served round-robin.
    File(PathBuf),
    /// Uniformly drawn non-reserved tokens.
    Random { count: usize, min_len: usize, max_len: usize, seed: u64 },
}

/// Everything that determines a session. JSON field names are the wire names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    pub omega: f64,
    pub nu: f64,
    pub lambda0: f64,
    /// Weight of the `|theta|^2` term in the preference loss.
    pub reg: f64,
    pub k: usize,
    #[serde(rename = "M")]
    pub max_new_tokens: usize,
    #[serde(rename = "T")]
    pub rounds: usize,
    pub seed: u64,
    pub gradient_mode: GradMode,
    pub cov_mode: CovMode,
    pub cov_update_mode: CovUpdateMode,
    pub feedback_mode: FeedbackMode,
    pub use_log_prob: bool,
    pub hidden: usize,
    pub embed_dim: usize,
    pub train_opts: TrainOpts,
    pub model: ModelSpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub queries: Option<QuerySpec>,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            omega: 1.0,
            nu: 0.5,
            lambda0: 1.0,
            reg: defaults::reg(),
            k: 40,
            max_new_tokens: 128,
            rounds: 100,
            seed: 0,
            gradient_mode: GradMode::LastLayer,
            cov_mode: CovMode::Full,
            cov_update_mode: CovUpdateMode::PerPosition,
            feedback_mode: FeedbackMode::Deterministic,
            use_log_prob: false,
            hidden: 64,
            embed_dim: 32,
            train_opts: TrainOpts::default(),
            model: ModelSpec::default(),
            oracle: None,
            queries: None,
        }
    }
}

pub(crate) mod defaults {
    pub fn vocab_size() -> usize {
        64
    }
    pub fn lm_embed_dim() -> usize {
        16
    }
    pub fn context_window() -> usize {
        2
    }
    pub fn lm_seed() -> u64 {
        7
    }
    pub fn order() -> usize {
        2
    }
    pub fn alpha() -> f64 {
        0.1
    }
    pub fn temperature() -> f64 {
        1.0
    }
    pub fn reg() -> f64 {
        1.0
    }
}

const FEATURE_SALT: u64 = 0xfea7_0000_0000_0001;
const THETA_SALT: u64 = 0x7e7a_0000_0000_0002;
const ORACLE_SALT: u64 = 0x0dac_1e00_0000_0003;

impl SessionConfig {
    /// Parses JSON and validates. Relative paths are kept as written.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: SessionConfig =
            serde_json::from_str(text).map_err(|e| Error::config(json_error_field(&e), e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file, validating it and resolving relative paths
    /// against the file's directory.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_json(&text)?;
        if let Some(dir) = path.parent() {
            cfg.resolve_paths(dir);
        }
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match &mut self.model {
            ModelSpec::Ngram { corpus, .. } => fix(corpus),
            ModelSpec::Dump { path } => fix(path),
            ModelSpec::Synthetic { .. } => {}
        }
        if let Some(OracleSpec { file: Some(f), .. }) = &mut self.oracle {
            fix(f);
        }
        if let Some(QuerySpec::File(f)) = &mut self.queries {
            fix(f);
        }
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = |name: &str, x: f64| {
            if x >= 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err(Error::config(name, format!("must be a finite value >= 0, got {x}")))
            }
        };
        let positive = |name: &str, x: f64| {
            if x > 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err(Error::config(name, format!("must be a finite value > 0, got {x}")))
            }
        };
        let at_least_one = |name: &str, x: usize| {
            if x >= 1 {
                Ok(())
            } else {
                Err(Error::config(name, "must be >= 1"))
            }
        };
        nonneg("omega", self.omega)?;
        nonneg("nu", self.nu)?;
        positive("lambda0", self.lambda0)?;
        nonneg("reg", self.reg)?;
        at_least_one("k", self.k)?;
        at_least_one("M", self.max_new_tokens)?;
        at_least_one("hidden", self.hidden)?;
        at_least_one("embed_dim", self.embed_dim)?;
        let t = &self.train_opts;
        positive("train_opts.lr", t.lr)?;
        at_least_one("train_opts.batch_size", t.batch_size)?;
        positive("train_opts.eps", t.eps)?;
        for (name, b) in [("train_opts.beta1", t.beta1), ("train_opts.beta2", t.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::config(name, format!("must lie in [0, 1), got {b}")));
            }
        }
        match &self.model {
            ModelSpec::Synthetic { vocab_size, embed_dim, context_window, .. } => {
                if *vocab_size < 4 {
                    return Err(Error::config("model.vocab_size", "must be >= 4"));
                }
                at_least_one("model.embed_dim", *embed_dim)?;
                at_least_one("model.context_window", *context_window)?;
            }
            ModelSpec::Ngram { order, alpha, .. } => {
                if !(2..=3).contains(order) {
                    return Err(Error::config("model.order", "must be 2 or 3"));
                }
                positive("model.alpha", *alpha)?;
            }
            ModelSpec::Dump { .. } => {}
        }
        if let Some(o) = &self.oracle {
            positive("oracle.temperature", o.temperature)?;
            if o.kind == OracleKindSpec::Lexicon && o.words.is_empty() && o.file.is_none() {
                return Err(Error::config("oracle.words", "lexicon oracle needs `words` or `file`"));
            }
        }
        if let Some(QuerySpec::Random { count, min_len, max_len, .. }) = &self.queries {
            at_least_one("queries.random.count", *count)?;
            if min_len > max_len {
                return Err(Error::config("queries.random.min_len", "must not exceed max_len"));
            }
        }
        Ok(())
    }

    pub fn scoring(&self) -> ScoringConfig {
        ScoringConfig { omega: self.omega, nu: self.nu, k: self.k, use_log_prob: self.use_log_prob }
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        hex::encode(&digest[..8])
    }

    pub(crate) fn feature_seed(&self) -> u64 {
        self.seed ^ FEATURE_SALT
    }

    pub(crate) fn theta_seed(&self) -> u64 {
        self.seed ^ THETA_SALT
    }

    pub fn build_features(&self, vocab_size: usize) -> Result<FeatureTable<f64>> {
        FeatureTable::new(self.feature_seed(), vocab_size, self.embed_dim, self.max_new_tokens)
    }

    /// Builds the configured simulated user, if any.
    pub fn build_oracle(&self, vocab: &Vocab, table: &FeatureTable<f64>) -> Result<Option<Oracle<f64>>> {
        let Some(spec) = &self.oracle else { return Ok(None) };
        let (m, mode, temp) = (self.max_new_tokens, self.feedback_mode, spec.temperature);
        let o = match spec.kind {
            OracleKindSpec::Linear => {
                Oracle::linear(spec.seed.unwrap_or(self.seed ^ ORACLE_SALT), table.clone(), mode, temp)?
            }
            OracleKindSpec::Concise => Oracle::new(OracleKind::Concise, m, mode, temp)?,
            OracleKindSpec::Verbose => Oracle::new(OracleKind::Verbose, m, mode, temp)?,
            OracleKindSpec::Lexicon => {
                let mut words = spec.words.clone();
                if let Some(f) = &spec.file {
                    words.extend(Oracle::<f64>::read_lexicon_file(f)?);
                }
                let set = Oracle::<f64>::lexicon_words(vocab, &words)
                    .map_err(|e| Error::config("oracle.words", e.to_string()))?;
                Oracle::new(OracleKind::Lexicon(set), m, mode, temp)?
            }
        };
        Ok(Some(o))
    }

    /// Sets one sweepable parameter from its textual value.
    pub fn set_param(&mut self, name: &str, value: &str) -> Result<()> {
        let float =
            |v: &str| v.trim().parse::<f64>().map_err(|_| Error::config(name, format!("`{v}` is not a number")));
        match name {
            "omega" => self.omega = float(value)?,
            "nu" => self.nu = float(value)?,
            "lambda0" => self.lambda0 = float(value)?,
            "k" => {
                self.k = value.trim().parse().map_err(|_| Error::config("k", format!("`{value}` is not an integer")))?
            }
            other => return Err(Error::config(other, "unknown sweep parameter (expected omega, nu, k or lambda0)")),
        }
        self.validate()
    }
}

/// Best-effort field name from a serde error message (`unknown field `x``,
/// `missing field `x``); falls back to the document root.
fn json_error_field(e: &serde_json::Error) -> String {
    let msg = e.to_string();
    for marker in ["unknown field `", "missing field `", "duplicate field `"] {
        if let Some(rest) = msg.split(marker).nth(1) {
            if let Some(name) = rest.split('`').next() {
                return name.to_owned();
            }
        }
    }
    "$".to_owned()
}
