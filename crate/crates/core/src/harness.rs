//! Experiment runner: learning curves, parameter sweeps and win-rate
//! evaluation against simulated users.
//!
//! A run writes into `<out>/<config hash>-s<seed>/`:
//! `metrics.csv` (one row per round, synced after every row), `events.jsonl`,
//! and the final frozen snapshot `session.dssn` with its history file.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::session::{FeedbackSource, QuerySpec, RoundRecord, SessionConfig, SessionState};
use crate::tokenmodel::BasePolicy;
use crate::tokenmodel::Vocab;
use crate::{Error, Result, Sequence, SimOracle, TokenId};

pub const METRICS_FILE: &str = "metrics.csv";
pub const EVENTS_FILE: &str = "events.jsonl";
pub const SNAPSHOT_FILE: &str = "session.dssn";
pub const SUMMARY_FILE: &str = "summary.csv";

/// Rounds averaged for the "final" figures of a run.
pub const FINAL_WINDOW: usize = 20;

const WINRATE_SALT: u64 = 0x3a1e_0000_0000_0005;
const QUERY_SALT: u64 = 0x9e3e_0000_0000_0006;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub round: usize,
    pub f_exploit: f64,
    pub f_explore: f64,
    pub train_loss: f64,
    pub mean_bonus: f64,
    pub win_vs_base: u8,
}

/// Reads or draws the round queries.
pub fn load_queries(spec: &QuerySpec, vocab: &Vocab) -> Result<Vec<Vec<TokenId>>> {
    let queries = match spec {
        QuerySpec::File(path) => read_query_file(path, vocab)?,
        QuerySpec::Random { count, min_len, max_len, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ QUERY_SALT);
            let (lo, hi) = (TokenId::RESERVED as u32, vocab.len() as u32);
            if lo >= hi {
                return Err(Error::InvalidInput("vocabulary has no ordinary tokens".into()));
            }
            (0..*count)
                .map(|_| {
                    let n = rng.random_range(*min_len..=*max_len);
                    (0..n).map(|_| TokenId(rng.random_range(lo..hi))).collect()
                })
                .collect()
        }
    };
    if queries.is_empty() {
        return Err(Error::InvalidInput("query set is empty".into()));
    }
    Ok(queries)
}

/// One whitespace-tokenized query per non-blank line.
pub fn read_query_file(path: &Path, vocab: &Vocab) -> Result<Vec<Vec<TokenId>>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let qs: Vec<_> = text.lines().filter(|l| !l.trim().is_empty()).map(|l| vocab.tokenize(l)).collect();
    if qs.is_empty() {
        return Err(Error::format(path, "no queries in file"));
    }
    Ok(qs)
}

fn configured_queries(config: &SessionConfig, vocab: &Vocab) -> Result<Vec<Vec<TokenId>>> {
    let spec = config.queries.as_ref().ok_or_else(|| Error::config("queries", "experiments need a query source"))?;
    load_queries(spec, vocab)
}

fn configured_oracle(state: &SessionState) -> Result<SimOracle> {
    state.env().oracle(state.config())?.ok_or_else(|| Error::config("oracle", "experiments need a simulated user"))
}

/// Advances a session against an oracle, querying round-robin.
pub struct Driver {
    pub state: SessionState,
    oracle: SimOracle,
    queries: Vec<Vec<TokenId>>,
    base_truth: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub record: RoundRecord,
    pub metrics: MetricsRow,
}

impl Driver {
    pub fn new(state: SessionState) -> Result<Self> {
        let queries = configured_queries(state.config(), state.model().vocab())?;
        check_queries(state.model(), &queries)?;
        let oracle = configured_oracle(&state)?;
        let base_truth = vec![None; queries.len()];
        Ok(Driver { state, oracle, queries, base_truth })
    }

    pub fn oracle(&self) -> &SimOracle {
        &self.oracle
    }

    pub fn queries(&self) -> &[Vec<TokenId>] {
        &self.queries
    }

    fn base_reward(&mut self, qi: usize) -> Result<f64> {
        if let Some(v) = self.base_truth[qi] {
            return Ok(v);
        }
        let y = self.state.base_decode(&self.queries[qi])?;
        let v = self.oracle.true_reward(&y);
        self.base_truth[qi] = Some(v);
        Ok(v)
    }

    pub fn step(&mut self) -> Result<Step> {
        let oracle = self.oracle.clone();
        self.step_with(&mut &oracle)
    }

    /// One round with labels from `source`; the oracle still supplies the
    /// logged truths.
    pub fn step_with<F: FeedbackSource + ?Sized>(&mut self, source: &mut F) -> Result<Step> {
        let qi = self.state.round() % self.queries.len();
        let base = self.base_reward(qi)?;
        let query = self.queries[qi].clone();
        let record = self.state.run_round(&query, source)?;
        let y1 = Sequence::from_parts(record.y1.clone(), record.query.len()).expect("y1 holds its query");
        let y2 = Sequence::from_parts(record.y2.clone(), record.query.len()).expect("y2 holds its query");
        let f1 = self.oracle.true_reward(&y1);
        let metrics = MetricsRow {
            round: record.round,
            f_exploit: f1,
            f_explore: self.oracle.true_reward(&y2),
            train_loss: record.train_loss_after,
            mean_bonus: record.mean_bonus,
            win_vs_base: (f1 > base) as u8,
        };
        Ok(Step { record, metrics })
    }
}

/// Append-only CSV + JSONL writers for one run directory.
pub struct RunWriter {
    metrics: csv::Writer<File>,
    events: File,
    metrics_path: PathBuf,
    events_path: PathBuf,
}

#[derive(Serialize)]
#[serde(tag = "event", rename_all = "lowercase")]
enum Event<'a> {
    Start { config_hash: &'a str, seed: u64, rounds: usize, resumed_at: usize },
    Round(&'a RoundRecord),
    End { rounds: usize, final_f_exploit: f64, final_win_rate: f64 },
}

impl RunWriter {
    /// Creates fresh files, or appends to existing ones when `append` is set.
    pub fn open(dir: &Path, append: bool) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let metrics_path = dir.join(METRICS_FILE);
        let events_path = dir.join(EVENTS_FILE);
        let open = |p: &Path| {
            std::fs::OpenOptions::new()
                .create(true)
                .write(true)
                .append(append)
                .truncate(!append)
                .open(p)
                .map_err(|e| Error::io(p, e))
        };
        let fresh = !append || std::fs::metadata(&metrics_path).map(|m| m.len() == 0).unwrap_or(true);
        let mut metrics = csv::WriterBuilder::new().has_headers(false).from_writer(open(&metrics_path)?);
        if fresh {
            metrics
                .write_record(["round", "f_exploit", "f_explore", "train_loss", "mean_bonus", "win_vs_base"])
                .map_err(|e| csv_err(&metrics_path, e))?;
        }
        let mut w = RunWriter { metrics, events: open(&events_path)?, metrics_path, events_path };
        w.sync()?;
        Ok(w)
    }

    fn sync(&mut self) -> Result<()> {
        self.metrics.flush().map_err(|e| Error::io(&self.metrics_path, e))?;
        self.metrics.get_ref().sync_data().map_err(|e| Error::io(&self.metrics_path, e))?;
        self.events.sync_data().map_err(|e| Error::io(&self.events_path, e))
    }

    fn event(&mut self, e: &Event) -> Result<()> {
        let line = serde_json::to_string(e)?;
        writeln!(self.events, "{line}").map_err(|err| Error::io(&self.events_path, err))
    }

    pub fn row(&mut self, step: &Step) -> Result<()> {
        self.metrics.serialize(step.metrics).map_err(|e| csv_err(&self.metrics_path, e))?;
        self.event(&Event::Round(&step.record))?;
        self.sync()
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::format(path, e.to_string())
}

/// Result of [`run_experiment`].
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub rows: Vec<MetricsRow>,
    pub state: SessionState,
}

impl RunOutcome {
    pub fn final_f_exploit(&self) -> f64 {
        final_f_exploit(&self.rows)
    }

    pub fn final_win_rate(&self) -> f64 {
        final_win_rate(&self.rows)
    }
}

fn tail(rows: &[MetricsRow]) -> &[MetricsRow] {
    &rows[rows.len().saturating_sub(FINAL_WINDOW)..]
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

/// Mean `f_exploit` over the last [`FINAL_WINDOW`] rounds.
pub fn final_f_exploit(rows: &[MetricsRow]) -> f64 {
    mean(tail(rows).iter().map(|r| r.f_exploit))
}

/// Fraction of the last [`FINAL_WINDOW`] rounds whose `y1` beat the base decode.
pub fn final_win_rate(rows: &[MetricsRow]) -> f64 {
    mean(tail(rows).iter().map(|r| r.win_vs_base as f64))
}

pub fn run_dir(out: &Path, config: &SessionConfig) -> PathBuf {
    out.join(format!("{}-s{}", config.hash(), config.seed))
}

/// Runs `config.rounds` rounds against the configured oracle.
pub fn run_experiment(config: &SessionConfig, out: &Path) -> Result<RunOutcome> {
    config.validate()?;
    let state = SessionState::new(config.clone())?;
    let driver = Driver::new(state)?;
    let dir = run_dir(out, config);
    let writer = RunWriter::open(&dir, false)?;
    finish_run(driver, writer, dir, config.rounds, Vec::new())
}

/// Runs the first `stop_at` rounds of a run and saves a resumable
/// checkpoint `checkpoint-r<stop_at>.dssn` in the run directory.
pub fn checkpoint_experiment(config: &SessionConfig, out: &Path, stop_at: usize) -> Result<PathBuf> {
    config.validate()?;
    let mut driver = Driver::new(SessionState::new(config.clone())?)?;
    let dir = run_dir(out, config);
    let mut writer = RunWriter::open(&dir, false)?;
    writer.event(&Event::Start {
        config_hash: driver.state.config_hash(),
        seed: config.seed,
        rounds: stop_at,
        resumed_at: 0,
    })?;
    while driver.state.round() < stop_at.min(config.rounds) {
        let step = driver.step()?;
        writer.row(&step)?;
    }
    let path = dir.join(format!("checkpoint-r{stop_at}.dssn"));
    driver.state.save(&path)?;
    Ok(path)
}

/// Continues a run from a saved mid-run snapshot up to `config.rounds`,
/// appending to the run directory's metrics.
pub fn resume_experiment(snapshot: &Path, out: &Path) -> Result<RunOutcome> {
    let state = SessionState::load(snapshot)?;
    if state.is_frozen() {
        return Err(Error::Frozen);
    }
    let rounds = state.config().rounds;
    let dir = run_dir(out, state.config());
    let done = state.round();
    let driver = Driver::new(state)?;
    let metrics = dir.join(METRICS_FILE);
    let mut earlier = if metrics.exists() { read_metrics(&metrics)? } else { Vec::new() };
    earlier.retain(|r| r.round <= done);
    let writer = RunWriter::open(&dir, true)?;
    finish_run(driver, writer, dir, rounds, earlier)
}

/// Steps to `rounds`; `rows` holds the rows already written for earlier rounds.
fn finish_run(
    mut driver: Driver,
    mut writer: RunWriter,
    dir: PathBuf,
    rounds: usize,
    mut rows: Vec<MetricsRow>,
) -> Result<RunOutcome> {
    let cfg = driver.state.config();
    writer.event(&Event::Start {
        config_hash: driver.state.config_hash(),
        seed: cfg.seed,
        rounds,
        resumed_at: driver.state.round(),
    })?;
    while driver.state.round() < rounds {
        let step = driver.step()?;
        writer.row(&step)?;
        rows.push(step.metrics);
    }
    writer.event(&Event::End {
        rounds: driver.state.round(),
        final_f_exploit: final_f_exploit(&rows),
        final_win_rate: final_win_rate(&rows),
    })?;
    writer.sync()?;
    let mut state = driver.state;
    state.freeze();
    state.save(dir.join(SNAPSHOT_FILE))?;
    Ok(RunOutcome { dir, rows, state })
}

/// Reads a metrics CSV written by a run.
pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| csv_err(path, e))).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub final_f_exploit: f64,
    pub final_win_rate: f64,
}

/// One run per value of `param`, plus `summary.csv` in `out`.
pub fn sweep(
    config: &SessionConfig,
    param: &str,
    values: &[String],
    out: &Path,
) -> Result<Vec<(SweepRow, RunOutcome)>> {
    let mut configs = Vec::with_capacity(values.len());
    for v in values {
        let mut c = config.clone();
        c.set_param(param, v)?;
        let value = v.trim().parse::<f64>().map_err(|_| Error::config(param, format!("`{v}` is not a number")))?;
        configs.push((value, c));
    }
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut results = Vec::with_capacity(configs.len());
    for (value, c) in configs {
        let outcome = run_experiment(&c, out)?;
        let row =
            SweepRow { value, final_f_exploit: outcome.final_f_exploit(), final_win_rate: outcome.final_win_rate() };
        results.push((row, outcome));
    }
    write_summary(&out.join(SUMMARY_FILE), results.iter().map(|(r, _)| *r))?;
    Ok(results)
}

pub fn write_summary(path: &Path, rows: impl IntoIterator<Item = SweepRow>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_summary(path: &Path) -> Result<Vec<SweepRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| csv_err(path, e))).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WinrateSummary {
    pub queries: usize,
    pub wins: usize,
    pub ties: usize,
    pub losses: usize,
    /// Ties resolved in favour of the deployed output by the coin flip.
    pub tie_wins: usize,
    pub win_rate: f64,
}

impl std::fmt::Display for WinrateSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "queries={} wins={} ties={} losses={} win_rate={:.4}",
            self.queries, self.wins, self.ties, self.losses, self.win_rate
        )
    }
}

/// Deployed output vs base greedy decode, judged by `oracle`'s true reward.
/// Exact ties flip a fair coin seeded from the session seed.
pub fn winrate(state: &SessionState, oracle: &SimOracle, queries: &[Vec<TokenId>]) -> Result<WinrateSummary> {
    if queries.is_empty() {
        return Err(Error::InvalidInput("query set is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(state.config().seed ^ WINRATE_SALT);
    let (mut wins, mut ties, mut losses, mut tie_wins) = (0, 0, 0, 0);
    for q in queries {
        let d = oracle.true_reward(&state.deploy_generate(q)?);
        let b = oracle.true_reward(&state.base_decode(q)?);
        if d > b {
            wins += 1;
        } else if d < b {
            losses += 1;
        } else {
            ties += 1;
            tie_wins += rng.random_bool(0.5) as usize;
        }
    }
    let n = queries.len();
    Ok(WinrateSummary { queries: n, wins, ties, losses, tie_wins, win_rate: (wins + tie_wins) as f64 / n as f64 })
}

/// Loads a frozen snapshot and evaluates it on a query file.
pub fn winrate_eval(snapshot: &Path, queries: &Path) -> Result<WinrateSummary> {
    if !snapshot.exists() {
        return Err(Error::InvalidInput(format!("snapshot {} does not exist", snapshot.display())));
    }
    let state = SessionState::load(snapshot)?;
    if !state.is_frozen() {
        return Err(Error::InvalidInput("winrate evaluation needs a frozen snapshot".into()));
    }
    let oracle = configured_oracle(&state)?;
    let qs = read_query_file(queries, state.model().vocab())?;
    winrate(&state, &oracle, &qs)
}

/// Checks every query token against the model vocabulary.
pub fn check_queries<M: BasePolicy<f64> + ?Sized>(model: &M, queries: &[Vec<TokenId>]) -> Result<()> {
    let v = model.vocab_size();
    for q in queries {
        if let Some(t) = q.iter().find(|t| t.index() >= v) {
            return Err(Error::InvalidInput(format!("query token {} outside vocabulary of {v}", t.0)));
        }
    }
    Ok(())
}
