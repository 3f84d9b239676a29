//! Acceptance suite A1-A9. Runs without the libtest harness so every
//! criterion prints exactly one PASS/FAIL line; the process fails if any does.

use std::path::{Path, PathBuf};
use std::time::Instant;

use duelsteer_core::bandit::{uncertainty_bonus, CovMode, CovarianceState};
use duelsteer_core::harness::{self, Driver, MetricsRow, RunWriter, METRICS_FILE, SNAPSHOT_FILE};
use duelsteer_core::reward::{
    btl_loss, encode_history, fit, Embedding, FeatureTable, GradMode, GradientVector, History, PreferenceRecord,
    RewardParams, TrainOpts,
};
use duelsteer_core::session::{ScriptedFeedback, SessionConfig, SessionState};
use duelsteer_core::{Sequence, TokenId};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

// Pinned tolerances and thresholds.
const A1_STEP: f64 = 1e-5;
const A1_MAX_REL: f64 = 1e-4;
const A1_ABS_FLOOR: f64 = 1e-7;
const A1_KINK_MARGIN: f64 = 1e-4;
const A1_TIME_S: f64 = 10.0;
const A2_MAX_REL: f64 = 1e-6;
const A3_SLACK: f64 = 1e-12;
const A5_MIN_GAIN: f64 = 1.30;
const A5_EARLY_SHARE: f64 = 0.60;
const A5_MIN_SEEDS: usize = 3;
const A5_TIME_S: f64 = 300.0;
const A6_MIN_WIN: f64 = 0.85;
const A7_GRID: [&str; 5] = ["0", "0.1", "1.0", "2.0", "5.0"];
const A8_MIN_REDUCTION: f64 = 0.50;
const A8_SYMMETRY: f64 = 1e-12;

type Outcome = Result<(bool, String), String>;
type Criterion = (&'static str, &'static str, fn() -> Outcome);

fn workspace() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn config(name: &str) -> SessionConfig {
    SessionConfig::from_file(workspace().join("configs").join(name)).expect("config loads")
}

fn scratch(name: &str) -> PathBuf {
    let d = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance").join(name);
    let _ = std::fs::remove_dir_all(&d);
    std::fs::create_dir_all(&d).unwrap();
    d
}

fn e<E: std::fmt::Display>(err: E) -> String {
    err.to_string()
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn f_exploit(rows: &[MetricsRow], from: usize, to: usize) -> f64 {
    mean(&rows[from - 1..to].iter().map(|r| r.f_exploit).collect::<Vec<_>>())
}

fn normal_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| scale * Distribution::<f64>::sample(&StandardNormal, &mut *rng)).collect()
}

/// Analytic full gradient against central differences of the forward pass.
///
/// The head is piecewise linear, so points where a hidden pre-activation lies
/// within `A1_KINK_MARGIN` of zero are redrawn: there the difference quotient
/// straddles the kink and does not estimate the derivative.
fn a1() -> Outcome {
    let t0 = Instant::now();
    let (in_dim, hidden) = (33, 64);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut worst, mut redrawn, mut case, mut draw) = (0.0f64, 0usize, 0usize, 0u64);
    while case < 50 {
        draw += 1;
        let theta = RewardParams::<f64>::init(draw, in_dim, hidden).map_err(e)?;
        let mut flat = theta.flat().to_vec();
        for b in theta.b1_range() {
            flat[b] = 0.1 * Distribution::<f64>::sample(&StandardNormal, &mut rng);
        }
        let theta = RewardParams::from_flat(in_dim, hidden, draw, flat.clone()).map_err(e)?;
        let emb = Embedding(normal_vec(&mut rng, in_dim, 1.0));
        if theta.activation(&emb).map_err(e)?.pre.iter().any(|z| z.abs() < A1_KINK_MARGIN) {
            redrawn += 1;
            continue;
        }
        case += 1;
        let g = theta.grad(&emb, GradMode::Full).map_err(e)?;
        for i in 0..flat.len() {
            let eval = |delta: f64| {
                let mut p = flat.clone();
                p[i] += delta;
                RewardParams::from_flat(in_dim, hidden, draw, p).unwrap().forward(&emb).unwrap()
            };
            let fd = (eval(A1_STEP) - eval(-A1_STEP)) / (2.0 * A1_STEP);
            let a = g.as_slice()[i];
            let scale = a.abs().max(fd.abs());
            let err = if scale < A1_ABS_FLOOR { (a - fd).abs() } else { (a - fd).abs() / scale };
            worst = worst.max(err);
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    Ok((
        worst <= A1_MAX_REL && secs < A1_TIME_S,
        format!("50 cases, max rel err {worst:.2e} (<= {A1_MAX_REL:.0e}), {redrawn} kink draws redrawn, {secs:.2}s"),
    ))
}

/// Sherman-Morrison inverse against a dense inverse of the accumulated matrix.
fn a2() -> Outcome {
    let n = 16;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut cov = CovarianceState::<f64>::new(n, 1.0, CovMode::Full).map_err(e)?;
    let mut dense = DMatrix::<f64>::identity(n, n);
    for _ in 0..200 {
        let g = normal_vec(&mut rng, n, 1.0);
        cov.update(&g).map_err(e)?;
        let gv = DVector::from_vec(g);
        dense += &gv * gv.transpose();
    }
    let exact = dense.try_inverse().ok_or("dense matrix singular")?;
    let (_, vinv) = cov.dense();
    let maintained = DMatrix::from_row_slice(n, n, &vinv);
    let rel = (&maintained - &exact).norm() / exact.norm();
    Ok((rel <= A2_MAX_REL, format!("Frobenius rel err {rel:.2e} (<= {A2_MAX_REL:.0e})")))
}

/// A rank-one update never increases the bonus of the direction it absorbed.
fn a3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut worst, mut min_bonus) = (f64::NEG_INFINITY, f64::INFINITY);
    for _ in 0..100 {
        let n = rng.random_range(2..=12);
        let mut cov = CovarianceState::<f64>::new(n, rng.random_range(0.1..3.0), CovMode::Full).map_err(e)?;
        for _ in 0..rng.random_range(0..20) {
            let scale = rng.random_range(0.1..2.0);
            cov.update(&normal_vec(&mut rng, n, scale)).map_err(e)?;
        }
        let scale = rng.random_range(0.01..5.0);
        let g = GradientVector(normal_vec(&mut rng, n, scale));
        let zero = GradientVector::zeros(n);
        let before = uncertainty_bonus(&g, &zero, &cov).map_err(e)?;
        cov.update(g.as_slice()).map_err(e)?;
        let after = uncertainty_bonus(&g, &zero, &cov).map_err(e)?;
        worst = worst.max(after - before);
        min_bonus = min_bonus.min(before).min(after);
    }
    Ok((
        worst <= A3_SLACK && min_bonus >= 0.0,
        format!("max(after - before) {worst:.2e} (<= {A3_SLACK:.0e}), min bonus {min_bonus:.3e}"),
    ))
}

/// Degenerate settings collapse the duel exactly.
fn a4() -> Outcome {
    let run = |omega: f64, nu: f64| -> Result<(usize, usize, usize), String> {
        let cfg = SessionConfig { omega, nu, ..config("lexicon_synthetic.json") };
        let mut d = Driver::new(SessionState::new(cfg).map_err(e)?).map_err(e)?;
        let (mut same, mut base_match) = (0, 0);
        let queries = d.queries().to_vec();
        for t in 0..d.state.config().rounds {
            let step = d.step().map_err(e)?;
            let base = d.state.base_decode(&queries[t % queries.len()]).map_err(e)?;
            same += (step.record.y1 == step.record.y2) as usize;
            base_match += (step.record.y1 == base.tokens() && step.record.y2 == base.tokens()) as usize;
        }
        Ok((d.state.config().rounds, same, base_match))
    };
    let (t0, same0, base0) = run(0.0, 0.5)?;
    let (t1, same1, _) = run(1.0, 0.0)?;
    Ok((
        same0 == t0 && base0 == t0 && same1 == t1,
        format!("omega=0: y1==y2==base in {base0}/{t0} rounds; nu=0: y1==y2 in {same1}/{t1} rounds"),
    ))
}

/// Learning curve with the lexicon user on the synthetic model.
fn a5() -> Outcome {
    let t0 = Instant::now();
    let out = scratch("a5");
    let base = config("lexicon_synthetic.json");
    let (mut first, mut last, mut sharp) = (Vec::new(), Vec::new(), 0usize);
    let mut detail = Vec::new();
    for seed in 1..=5u64 {
        let cfg = SessionConfig { seed, ..base.clone() };
        let rows = harness::run_experiment(&cfg, &out).map_err(e)?.rows;
        if rows.len() != 100 {
            return Err(format!("expected 100 rounds, got {}", rows.len()));
        }
        let start = rows[0].f_exploit;
        let early = f_exploit(&rows, 16, 20);
        let fin = f_exploit(&rows, 81, 100);
        first.push(f_exploit(&rows, 1, 20));
        last.push(fin);
        let ok = fin > start && early - start >= A5_EARLY_SHARE * (fin - start);
        sharp += ok as usize;
        detail.push(format!("s{seed}:{:.2}->{:.2}->{:.2}{}", start, early, fin, if ok { "" } else { "*" }));
    }
    let (m_first, m_last) = (mean(&first), mean(&last));
    let secs = t0.elapsed().as_secs_f64();
    let pass = m_last >= A5_MIN_GAIN * m_first && sharp >= A5_MIN_SEEDS && secs < A5_TIME_S;
    Ok((
        pass,
        format!(
            "mean f_exploit r1-20 {m_first:.3}, r81-100 {m_last:.3} (x{:.2}, need >= {A5_MIN_GAIN}); \
             sharp seeds {sharp}/5 (need >= {A5_MIN_SEEDS}); {secs:.0}s; start->r16-20->final {}",
            m_last / m_first,
            detail.join(" ")
        ),
    ))
}

/// Deployed decoding against base greedy decoding on held-out queries.
fn a6() -> Outcome {
    let heldout = workspace().join("data/heldout_queries.txt");
    let mut parts = Vec::new();
    let mut pass = true;
    for name in ["concise", "verbose"] {
        let out = scratch(&format!("a6-{name}"));
        let base = config(&format!("{name}_ngram.json"));
        let mut rates = Vec::new();
        for seed in 1..=3u64 {
            let cfg = SessionConfig { seed, ..base.clone() };
            let run = harness::run_experiment(&cfg, &out).map_err(e)?;
            let s = harness::winrate_eval(&run.dir.join(SNAPSHOT_FILE), &heldout).map_err(e)?;
            if s.queries != 100 {
                return Err(format!("expected 100 held-out queries, got {}", s.queries));
            }
            rates.push(s.win_rate);
        }
        let m = mean(&rates);
        pass &= m >= A6_MIN_WIN;
        parts.push(format!("{name} {m:.3} {rates:?}"));
    }
    Ok((pass, format!("mean win rate over 3 seeds (need >= {A6_MIN_WIN}): {}", parts.join("; "))))
}

/// Reward-weight sweep; omega=1 must beat omega=0 on every seed.
fn a7() -> Outcome {
    let base = config("lexicon_synthetic.json");
    let values: Vec<String> = A7_GRID.iter().map(|s| s.to_string()).collect();
    let mut pass = true;
    let mut curves = Vec::new();
    let mut sums = vec![0.0; values.len()];
    for seed in 1..=3u64 {
        let out = scratch(&format!("a7-s{seed}"));
        let cfg = SessionConfig { seed, ..base.clone() };
        let rows: Vec<_> =
            harness::sweep(&cfg, "omega", &values, &out).map_err(e)?.into_iter().map(|(r, _)| r).collect();
        let at = |w: f64| rows.iter().find(|r| r.value == w).map(|r| r.final_f_exploit).unwrap();
        pass &= at(1.0) > at(0.0);
        for (s, r) in sums.iter_mut().zip(&rows) {
            *s += r.final_f_exploit / 3.0;
        }
        curves.push(format!(
            "s{seed}[{}]",
            rows.iter().map(|r| format!("{:.2}", r.final_f_exploit)).collect::<Vec<_>>().join(",")
        ));
    }
    let peak = A7_GRID[sums.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0];
    Ok((
        pass,
        format!(
            "omega {:?} final f_exploit {}; mean [{}]; peak at omega={peak}",
            A7_GRID,
            curves.join(" "),
            sums.iter().map(|v| format!("{v:.2}")).collect::<Vec<_>>().join(",")
        ),
    ))
}

fn random_history(seed: u64, table: &FeatureTable<f64>, n: usize) -> History {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = table.vocab_size() as u32;
    let w = normal_vec(&mut rng, table.in_dim(), 1.0);
    let truth = |s: &Sequence| -> f64 {
        let emb = table.featurize(s).unwrap();
        emb.as_slice().iter().zip(&w).map(|(a, b)| a * b).sum()
    };
    let mut h = History::new();
    for _ in 0..n {
        let q: Vec<TokenId> = (0..rng.random_range(1..4)).map(|_| TokenId(rng.random_range(3..v))).collect();
        let gen = |rng: &mut ChaCha8Rng| {
            let mut s = Sequence::from_query(&q);
            for _ in 0..rng.random_range(1..12) {
                s.push(TokenId(rng.random_range(3..v)));
            }
            s
        };
        let (y1, y2) = (gen(&mut rng), gen(&mut rng));
        let label = truth(&y1) > truth(&y2);
        h.push(PreferenceRecord::new(y1, y2, label).unwrap());
    }
    h
}

/// Training on a fixed history and the swap symmetry of the loss.
fn a8() -> Outcome {
    let defaults = SessionConfig::default();
    let opts = TrainOpts { epochs: 100, ..TrainOpts::default() };
    let mut pass = true;
    let mut parts = Vec::new();
    let mut worst_sym = 0.0f64;
    for seed in 1..=3u64 {
        let table = FeatureTable::<f64>::new(seed, 64, defaults.embed_dim, defaults.max_new_tokens).map_err(e)?;
        let hist = random_history(seed, &table, 64);
        let theta = RewardParams::<f64>::init(seed, table.in_dim(), defaults.hidden).map_err(e)?;
        let pairs = encode_history(&hist, &table).map_err(e)?;
        let out = fit(&theta, &pairs, defaults.reg, &opts, seed).map_err(e)?;
        let initial = btl_loss(&theta, &hist, &table, defaults.reg).map_err(e)?;
        let fin = btl_loss(&out.params, &hist, &table, defaults.reg).map_err(e)?;
        let reduction = 1.0 - fin / initial;
        pass &= reduction >= A8_MIN_REDUCTION;
        parts.push(format!("s{seed} {initial:.2}->{fin:.2} (-{:.0}%)", 100.0 * reduction));

        let mut swapped = History::new();
        for r in hist.records() {
            swapped.push(r.swapped());
        }
        for p in [&theta, &out.params] {
            let a = btl_loss(p, &hist, &table, defaults.reg).map_err(e)?;
            let b = btl_loss(p, &swapped, &table, defaults.reg).map_err(e)?;
            worst_sym = worst_sym.max((a - b).abs());
        }
    }
    pass &= worst_sym <= A8_SYMMETRY;
    Ok((
        pass,
        format!(
            "loss reduction (need >= {:.0}%): {}; swap asymmetry {worst_sym:.1e} (<= {A8_SYMMETRY:.0e})",
            100.0 * A8_MIN_REDUCTION,
            parts.join(", ")
        ),
    ))
}

fn scripted_run(cfg: &SessionConfig, dir: &Path, labels: &[bool]) -> Result<Vec<u8>, String> {
    let mut d = Driver::new(SessionState::new(cfg.clone()).map_err(e)?).map_err(e)?;
    let mut w = RunWriter::open(dir, false).map_err(e)?;
    let mut fb = ScriptedFeedback::new(labels.to_vec());
    for _ in 0..labels.len() {
        let step = d.step_with(&mut fb).map_err(e)?;
        w.row(&step).map_err(e)?;
    }
    drop(w);
    std::fs::read(dir.join(METRICS_FILE)).map_err(e)
}

/// Reproducibility, resume equivalence and history round trip.
fn a9() -> Outcome {
    let cfg = config("lexicon_synthetic.json");
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let labels: Vec<bool> = (0..cfg.rounds).map(|_| rng.random_bool(0.5)).collect();
    let root = scratch("a9");
    let s1 = scripted_run(&cfg, &root.join("scripted-1"), &labels)?;
    let s2 = scripted_run(&cfg, &root.join("scripted-2"), &labels)?;
    let scripted_same = s1 == s2 && s1.len() > 100;

    let full = harness::run_experiment(&cfg, &root.join("full")).map_err(e)?;
    let again = harness::run_experiment(&cfg, &root.join("again")).map_err(e)?;
    let read = |p: &Path| std::fs::read(p.join(METRICS_FILE)).unwrap();
    let oracle_same = read(&full.dir) == read(&again.dir);

    let ckpt = harness::checkpoint_experiment(&cfg, &root.join("resumed"), cfg.rounds / 2).map_err(e)?;
    let resumed = harness::resume_experiment(&ckpt, &root.join("resumed")).map_err(e)?;
    let resume_same = read(&full.dir) == read(&resumed.dir)
        && full.state.theta() == resumed.state.theta()
        && full.state.cov() == resumed.state.cov()
        && full.state.history() == resumed.state.history();

    let p1 = root.join("history-1.jsonl");
    let p2 = root.join("history-2.jsonl");
    full.state.history().write_jsonl(&p1).map_err(e)?;
    let back = History::read_jsonl(&p1, None).map_err(e)?;
    back.write_jsonl(&p2).map_err(e)?;
    let history_same =
        &back == full.state.history() && std::fs::read(&p1).map_err(e)? == std::fs::read(&p2).map_err(e)?;

    Ok((
        scripted_same && oracle_same && resume_same && history_same,
        format!(
            "scripted CSV identical: {scripted_same}; oracle CSV identical: {oracle_same}; \
             resume at {} equals uninterrupted: {resume_same}; history JSONL lossless: {history_same}",
            cfg.rounds / 2
        ),
    ))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("A1", "gradient correctness", a1),
        ("A2", "inverse maintenance", a2),
        ("A3", "bonus shrinkage", a3),
        ("A4", "degeneracy", a4),
        ("A5", "learning-curve shape", a5),
        ("A6", "win rate vs base", a6),
        ("A7", "omega ablation", a7),
        ("A8", "training efficacy", a8),
        ("A9", "determinism and persistence", a9),
    ];
    let mut failed = Vec::new();
    for (id, name, f) in criteria {
        let (ok, detail) = match f() {
            Ok(v) => v,
            Err(msg) => (false, format!("error: {msg}")),
        };
        println!("{id} {name}: {} | {detail}", if ok { "PASS" } else { "FAIL" });
        if !ok {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all 9 criteria passed");
    } else {
        println!("acceptance: failed {}", failed.join(", "));
        std::process::exit(1);
    }
}
