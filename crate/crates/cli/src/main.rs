use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use duelsteer_core::harness::{self, read_query_file};
use duelsteer_core::session::{SessionConfig, SessionState};
use duelsteer_core::Error;

#[derive(Parser)]
#[command(name = "duelsteer", version, about = "Preference-steered decoding experiments and session server")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run T rounds against the configured simulated user.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
    },
    /// One run per value of a parameter, plus summary.csv.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// One of omega, nu, k, lambda0.
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
    },
    /// Deployed decoding vs base greedy decoding on held-out queries.
    Winrate {
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long)]
        queries: PathBuf,
    },
    /// Serve the session API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "0.0.0.0")]
        host: std::net::IpAddr,
        /// Directory where sessions are persisted.
        #[arg(long, default_value = "sessions")]
        data: PathBuf,
    },
}

/// Failure with its exit status: 2 for unusable input, 1 for runtime errors.
struct Failure {
    code: u8,
    error: String,
}

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure { code: 2, error: e.to_string() }
}

fn runtime(e: Error) -> Failure {
    let code = if matches!(e, Error::Config { .. }) { 2 } else { 1 };
    Failure { code, error: e.to_string() }
}

fn load_config(path: &std::path::Path, seed: Option<u64>) -> Result<SessionConfig, Failure> {
    let mut c = SessionConfig::from_file(path).map_err(usage)?;
    if let Some(s) = seed {
        c.seed = s;
    }
    Ok(c)
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run { config, seed, out } => {
            let c = load_config(&config, seed)?;
            let outcome = harness::run_experiment(&c, &out).map_err(runtime)?;
            println!("run dir: {}", outcome.dir.display());
            println!(
                "rounds={} final_f_exploit={:.4} final_win_rate={:.4}",
                outcome.rows.len(),
                outcome.final_f_exploit(),
                outcome.final_win_rate()
            );
        }
        Command::Sweep { config, param, values, out } => {
            let c = load_config(&config, None)?;
            let results = harness::sweep(&c, &param, &values, &out).map_err(runtime)?;
            println!("value,final_f_exploit,final_win_rate,run_dir");
            for (row, outcome) in &results {
                println!(
                    "{},{:.4},{:.4},{}",
                    row.value,
                    row.final_f_exploit,
                    row.final_win_rate,
                    outcome.dir.display()
                );
            }
            println!("summary: {}", out.join(harness::SUMMARY_FILE).display());
        }
        Command::Winrate { snapshot, queries } => {
            if !snapshot.exists() {
                return Err(usage(format!("snapshot {} does not exist", snapshot.display())));
            }
            let state = SessionState::load(&snapshot).map_err(usage)?;
            if !state.is_frozen() {
                return Err(usage("winrate evaluation needs a frozen snapshot"));
            }
            let oracle = state
                .env()
                .oracle(state.config())
                .map_err(usage)?
                .ok_or_else(|| usage("snapshot config has no oracle"))?;
            let qs = read_query_file(&queries, state.model().vocab()).map_err(usage)?;
            let summary = harness::winrate(&state, &oracle, &qs).map_err(runtime)?;
            println!("{summary}");
        }
        Command::Serve { port, host, data } => {
            let addr = SocketAddr::new(host, port);
            let rt = tokio::runtime::Runtime::new().map_err(|e| Failure { code: 1, error: e.to_string() })?;
            rt.block_on(duelsteer_service::serve(addr, data)).map_err(|e| Failure { code: 1, error: e.to_string() })?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt().with_writer(std::io::stderr).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.error);
            ExitCode::from(f.code)
        }
    }
}
