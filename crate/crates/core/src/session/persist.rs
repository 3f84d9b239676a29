use std::path::{Path, PathBuf};

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{SessionConfig, SessionEnv, SessionState};
use crate::io::{self, BinReader, BinWriter};
use crate::reward::History;
use crate::{Covariance, Error, Result, RewardHead};

const SESSION_MAGIC: &[u8; 4] = b"DSSN";
const SESSION_VERSION: u32 = 1;
const MAX_HEADER: usize = 16 << 20;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    config: SessionConfig,
    config_hash: String,
    round: usize,
    frozen: bool,
    rng: ChaCha8Rng,
    history_offset: usize,
    history_file: String,
}

/// Path of the history JSONL written next to a session snapshot.
pub fn history_path(snapshot: &Path) -> PathBuf {
    let mut name = snapshot.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".history.jsonl");
    snapshot.with_file_name(name)
}

impl SessionState {
    /// Writes the snapshot (`DSSN`, version, JSON header, reward head,
    /// covariance) and the history JSONL beside it.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let hist = history_path(path);
        self.history.write_jsonl(&hist)?;
        let header = Header {
            config: self.config.clone(),
            config_hash: self.config_hash.clone(),
            round: self.round,
            frozen: self.frozen,
            rng: self.rng.clone(),
            history_offset: self.history.len(),
            history_file: hist.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
        };
        let mut w = BinWriter::new(std::io::BufWriter::new(io::create(path)?), path);
        w.magic(SESSION_MAGIC)?;
        w.u32(SESSION_VERSION)?;
        w.bytes(&serde_json::to_vec(&header)?)?;
        self.theta.write_to(&mut w)?;
        self.cov.write_to(&mut w)?;
        let file = w.finish()?.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
        file.sync_all().map_err(|e| Error::io(path, e))
    }

    /// Loads a snapshot, rebuilding the model and feature table from its config.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::load_inner(path.as_ref(), None)
    }

    /// Loads a snapshot reusing an already built environment.
    pub fn load_with_env(path: impl AsRef<Path>, env: SessionEnv) -> Result<Self> {
        Self::load_inner(path.as_ref(), Some(env))
    }

    fn load_inner(path: &Path, env: Option<SessionEnv>) -> Result<Self> {
        let mut r = BinReader::new(std::io::BufReader::new(io::open(path)?), path);
        r.expect_magic(SESSION_MAGIC, "session snapshot")?;
        r.expect_version(SESSION_VERSION)?;
        let raw = r.bytes(MAX_HEADER)?;
        let header: Header =
            serde_json::from_slice(&raw).map_err(|e| r.format_err(format!("bad snapshot header: {e}")))?;
        let theta = RewardHead::read_from(&mut r)?;
        let cov = Covariance::read_from(&mut r)?;
        r.expect_eof()?;

        if header.config.hash() != header.config_hash {
            return Err(r.format_err("config hash does not match the stored config"));
        }
        if header.round != header.history_offset {
            return Err(r.format_err("round counter disagrees with history offset"));
        }
        let hist_path = path.with_file_name(&header.history_file);
        let history = History::read_jsonl(&hist_path, Some(header.history_offset))?;
        let env = match env {
            Some(e) => e,
            None => SessionEnv::build(&header.config)?,
        };
        if theta.in_dim() != env.table.in_dim() || cov.dim() != theta.grad_len(header.config.gradient_mode) {
            return Err(r.format_err("stored parameters do not fit the configured model"));
        }
        SessionState::restore(header.config, header.config_hash, env, theta, cov, history, header.rng, header.frozen)
    }
}
