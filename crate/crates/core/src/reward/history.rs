use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::io;
use crate::{Error, Result, Sequence, TokenId};

/// One duel outcome: `label` is true when `y1` was preferred.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreferenceRecord {
    pub y1: Sequence,
    pub y2: Sequence,
    pub label: bool,
}

impl PreferenceRecord {
    pub fn new(y1: Sequence, y2: Sequence, label: bool) -> Result<Self> {
        if !y1.shares_query_with(&y2) {
            return Err(Error::InvalidInput("preference pair does not share a query prefix".into()));
        }
        Ok(PreferenceRecord { y1, y2, label })
    }

    /// `(preferred, rejected)`.
    pub fn ordered(&self) -> (&Sequence, &Sequence) {
        if self.label {
            (&self.y1, &self.y2)
        } else {
            (&self.y2, &self.y1)
        }
    }

    /// Same observation with the pair presented the other way round.
    pub fn swapped(&self) -> PreferenceRecord {
        PreferenceRecord { y1: self.y2.clone(), y2: self.y1.clone(), label: !self.label }
    }
}

/// JSONL line: `{"y1": [ids], "y2": [ids], "label": 0|1, "round": t, "query_len": n}`.
#[derive(Debug, Serialize, Deserialize)]
struct HistoryLine {
    y1: Vec<TokenId>,
    y2: Vec<TokenId>,
    label: u8,
    round: usize,
    query_len: usize,
}

/// Append-only preference history.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct History {
    records: Vec<PreferenceRecord>,
}

impl History {
    pub fn new() -> Self {
        History::default()
    }

    pub fn push(&mut self, record: PreferenceRecord) {
        self.records.push(record);
    }

    pub fn records(&self) -> &[PreferenceRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub(crate) fn truncate(&mut self, len: usize) {
        self.records.truncate(len);
    }

    /// Serializes one record as a JSONL line (no trailing newline).
    pub fn encode_line(record: &PreferenceRecord, round: usize) -> Result<String> {
        let line = HistoryLine {
            y1: record.y1.tokens().to_vec(),
            y2: record.y2.tokens().to_vec(),
            label: record.label as u8,
            round,
            query_len: record.y1.query_len(),
        };
        Ok(serde_json::to_string(&line)?)
    }

    pub fn decode_line(line: &str) -> Result<(PreferenceRecord, usize)> {
        let l: HistoryLine = serde_json::from_str(line)?;
        if l.label > 1 {
            return Err(Error::InvalidInput(format!("label must be 0 or 1, got {}", l.label)));
        }
        let bad = || Error::InvalidInput("query_len exceeds sequence length".into());
        let y1 = Sequence::from_parts(l.y1, l.query_len).ok_or_else(bad)?;
        let y2 = Sequence::from_parts(l.y2, l.query_len).ok_or_else(bad)?;
        Ok((PreferenceRecord::new(y1, y2, l.label == 1)?, l.round))
    }

    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = std::io::BufWriter::new(io::create(path)?);
        for (i, r) in self.records.iter().enumerate() {
            writeln!(w, "{}", Self::encode_line(r, i + 1)?).map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Reads the first `limit` records (all when `None`).
    pub fn read_jsonl(path: impl AsRef<Path>, limit: Option<usize>) -> Result<History> {
        let path = path.as_ref();
        let lines = io::read_jsonl_lines(path, limit)?;
        if let Some(n) = limit {
            if lines.len() < n {
                return Err(Error::format(path, format!("expected {n} history records, found {}", lines.len())));
            }
        }
        let mut h = History::new();
        for (i, line) in lines.iter().enumerate() {
            let (rec, _) = Self::decode_line(line).map_err(|e| Error::format(path, format!("line {}: {e}", i + 1)))?;
            h.push(rec);
        }
        Ok(h)
    }
}
