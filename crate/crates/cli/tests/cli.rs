use std::path::Path;
use std::process::{Command, Output};

const CONFIG: &str = r#"{"T": 3, "M": 6, "k": 6, "hidden": 6, "embed_dim": 4, "seed": 1,
    "train_opts": {"epochs": 3},
    "model": {"kind": "synthetic", "vocab_size": 16, "embed_dim": 6},
    "oracle": {"kind": "concise"},
    "queries": {"random": {"count": 4, "min_len": 1, "max_len": 3, "seed": 2}}}"#;

fn duelsteer(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_duelsteer")).args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn run_dir(out: &Path) -> std::path::PathBuf {
    let mut dirs: Vec<_> = std::fs::read_dir(out).unwrap().map(|e| e.unwrap().path()).filter(|p| p.is_dir()).collect();
    dirs.sort();
    dirs.remove(0)
}

#[test]
fn run_writes_metrics_and_snapshot() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.json", CONFIG);
    let out = tmp.path().join("out");
    let o = duelsteer(&["run", "--config", &cfg, "--seed", "5", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let dir = run_dir(&out);
    assert!(dir.file_name().unwrap().to_string_lossy().ends_with("-s5"));
    let csv = std::fs::read_to_string(dir.join("metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(dir.join("events.jsonl").exists());
    assert!(dir.join("session.dssn").exists());
}

#[test]
fn invalid_config_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "bad.json", r#"{"omega": -1}"#);
    let o = duelsteer(&["run", "--config", &cfg, "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("omega"));
}

#[test]
fn unknown_sweep_param_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.json", CONFIG);
    let o = duelsteer(&[
        "sweep",
        "--config",
        &cfg,
        "--param",
        "gamma",
        "--values",
        "1,2",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sweep_writes_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.json", CONFIG);
    let out = tmp.path().join("sweep");
    let o =
        duelsteer(&["sweep", "--config", &cfg, "--param", "omega", "--values", "0,1", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().next().unwrap(), "value,final_f_exploit,final_win_rate");
    assert_eq!(summary.lines().count(), 3);
}

#[test]
fn winrate_reads_snapshot_and_rejects_bad_input() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.json", CONFIG);
    let out = tmp.path().join("out");
    assert!(duelsteer(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]).status.success());
    let snap = run_dir(&out).join("session.dssn");
    let queries = write(tmp.path(), "q.txt", "w3 w4\nw5\n");
    let o = duelsteer(&["winrate", "--snapshot", snap.to_str().unwrap(), "--queries", &queries]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("queries=2"));

    let empty = write(tmp.path(), "empty.txt", "\n");
    let o = duelsteer(&["winrate", "--snapshot", snap.to_str().unwrap(), "--queries", &empty]);
    assert_eq!(o.status.code(), Some(2));

    let missing = tmp.path().join("nope.dssn");
    let o = duelsteer(&["winrate", "--snapshot", missing.to_str().unwrap(), "--queries", &queries]);
    assert_eq!(o.status.code(), Some(2));
}
