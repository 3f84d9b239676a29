use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use duelsteer_core::session::SessionState;
use duelsteer_core::{Error, Result};

use crate::RoundRow;

const SNAPSHOT: &str = "session.dssn";
const ROWS: &str = "rows.jsonl";
const META: &str = "created_at";

/// A reloaded session: `(id, state, rows, created_at)`.
pub(crate) type Persisted = (String, SessionState, Vec<RoundRow>, u64);

/// One directory per session under the data root.
#[derive(Debug)]
pub struct Store {
    root: PathBuf,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.to_owned(), source }
}

impl Store {
    pub fn new(root: PathBuf) -> Result<Self> {
        std::fs::create_dir_all(&root).map_err(io_err(&root))?;
        Ok(Store { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn dir(&self, id: &str) -> PathBuf {
        self.root.join(id)
    }

    pub fn create(&self, id: &str, state: &SessionState, created_at: u64) -> Result<()> {
        let dir = self.dir(id);
        std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let meta = dir.join(META);
        std::fs::write(&meta, created_at.to_string()).map_err(io_err(&meta))?;
        let rows = dir.join(ROWS);
        std::fs::write(&rows, "").map_err(io_err(&rows))?;
        state.save(dir.join(SNAPSHOT))
    }

    pub fn record_round(&self, id: &str, state: &SessionState, row: &RoundRow) -> Result<()> {
        let dir = self.dir(id);
        let rows = dir.join(ROWS);
        let mut f = OpenOptions::new().append(true).open(&rows).map_err(io_err(&rows))?;
        writeln!(f, "{}", serde_json::to_string(row)?).map_err(io_err(&rows))?;
        f.sync_data().map_err(io_err(&rows))?;
        state.save(dir.join(SNAPSHOT))
    }

    /// Every persisted session.
    pub(crate) fn load_all(&self) -> Result<Vec<Persisted>> {
        let mut out = Vec::new();
        for entry in std::fs::read_dir(&self.root).map_err(io_err(&self.root))? {
            let entry = entry.map_err(io_err(&self.root))?;
            let dir = entry.path();
            if !dir.join(SNAPSHOT).is_file() {
                continue;
            }
            let id = entry.file_name().to_string_lossy().into_owned();
            let state = SessionState::load(dir.join(SNAPSHOT))?;
            let meta = dir.join(META);
            let created_at = std::fs::read_to_string(&meta).ok().and_then(|s| s.trim().parse().ok()).unwrap_or(0);
            let rows_path = dir.join(ROWS);
            let text = std::fs::read_to_string(&rows_path).map_err(io_err(&rows_path))?;
            let mut rows = Vec::new();
            for line in text.lines().filter(|l| !l.trim().is_empty()) {
                rows.push(serde_json::from_str::<RoundRow>(line)?);
            }
            rows.truncate(state.round());
            out.push((id, state, rows, created_at));
        }
        out.sort_by(|a, b| a.0.cmp(&b.0));
        Ok(out)
    }
}
