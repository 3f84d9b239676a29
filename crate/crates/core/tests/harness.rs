//! Run directories, sweeps and resume bookkeeping end to end.

use std::path::Path;

use duelsteer_core::harness::{self, SweepRow, EVENTS_FILE, METRICS_FILE, SUMMARY_FILE};
use duelsteer_core::session::SessionConfig;

fn small() -> SessionConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.json");
    SessionConfig { rounds: 12, max_new_tokens: 12, seed: 4, ..SessionConfig::from_file(path).unwrap() }
}

#[test]
fn summary_regenerates_from_run_metrics() {
    let out = tempfile::tempdir().unwrap();
    let values: Vec<String> = ["0", "0.5", "2"].iter().map(|s| s.to_string()).collect();
    let results = harness::sweep(&small(), "nu", &values, out.path()).unwrap();
    let summary = harness::read_summary(&out.path().join(SUMMARY_FILE)).unwrap();
    assert_eq!(summary.len(), 3);
    for ((row, outcome), stored) in results.iter().zip(&summary) {
        let rows = harness::read_metrics(&outcome.dir.join(METRICS_FILE)).unwrap();
        let rebuilt = SweepRow {
            value: row.value,
            final_f_exploit: harness::final_f_exploit(&rows),
            final_win_rate: harness::final_win_rate(&rows),
        };
        assert_eq!(&rebuilt, stored);
        assert_eq!(row, stored);
    }
}

#[test]
fn omega_zero_sweep_row_is_base_decoding() {
    let out = tempfile::tempdir().unwrap();
    let results = harness::sweep(&small(), "omega", &["0".to_string()], out.path()).unwrap();
    let (row, outcome) = &results[0];
    assert_eq!(row.final_win_rate, 0.0);
    let oracle = outcome.state.env().oracle(outcome.state.config()).unwrap().unwrap();
    let queries =
        harness::load_queries(outcome.state.config().queries.as_ref().unwrap(), outcome.state.model().vocab()).unwrap();
    for (m, rec) in outcome.rows.iter().zip(outcome.state.history().records()) {
        let q = &queries[(m.round - 1) % queries.len()];
        let base = outcome.state.base_decode(q).unwrap();
        assert_eq!(rec.y1.tokens(), base.tokens());
        assert_eq!(m.f_exploit, oracle.true_reward(&base));
        assert_eq!(m.f_exploit, m.f_explore);
    }
}

#[test]
fn resumed_outcome_covers_all_rounds() {
    let cfg = small();
    let out = tempfile::tempdir().unwrap();
    let ckpt = harness::checkpoint_experiment(&cfg, out.path(), 5).unwrap();
    let resumed = harness::resume_experiment(&ckpt, out.path()).unwrap();
    let fresh = tempfile::tempdir().unwrap();
    let full = harness::run_experiment(&cfg, fresh.path()).unwrap();
    assert_eq!(resumed.rows, full.rows);
    assert_eq!(resumed.final_f_exploit(), full.final_f_exploit());
    assert!(resumed.state.is_frozen());
}

#[test]
fn event_log_brackets_the_rounds() {
    let cfg = small();
    let out = tempfile::tempdir().unwrap();
    let run = harness::run_experiment(&cfg, out.path()).unwrap();
    let text = std::fs::read_to_string(run.dir.join(EVENTS_FILE)).unwrap();
    let events: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(events.len(), cfg.rounds + 2);
    assert_eq!(events[0]["event"], "start");
    assert_eq!(events[0]["config_hash"], cfg.hash());
    assert_eq!(events.last().unwrap()["event"], "end");
    assert!(events[1..=cfg.rounds].iter().all(|e| e["event"] == "round"));
}

#[test]
fn rerun_into_same_directory_starts_fresh() {
    let cfg = small();
    let out = tempfile::tempdir().unwrap();
    let a = harness::run_experiment(&cfg, out.path()).unwrap();
    let first = std::fs::read(a.dir.join(METRICS_FILE)).unwrap();
    let b = harness::run_experiment(&cfg, out.path()).unwrap();
    assert_eq!(std::fs::read(b.dir.join(METRICS_FILE)).unwrap(), first);
}
