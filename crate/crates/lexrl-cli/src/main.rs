//! `lexrl` — experiment harness for the lexrl library.
//!
//! Two subcommands:
//! - `run` executes a named experiment over a seed sweep and writes CSV
//!   artifacts (per-seed traces and evaluations plus one summary) into an
//!   output directory;
//! - `eval` scores a saved policy file on a maze environment.
//!
//! Exit codes: 0 on success, 2 for configuration problems (bad flags,
//! malformed config files, unknown experiments or keys), 3 when an
//! experiment aborts at runtime. Partial artifacts from completed seeds
//! are retained on abort.

use clap::{Parser, Subcommand};
use lexrl_cli::{config, runner, CliError, CliResult, SchemeArg};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "lexrl",
    version,
    about = "Thresholded lexicographic optimization and RL experiment harness"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a named experiment over a seed sweep and write CSV artifacts.
    ///
    /// Seeds run on a bounded worker pool; set LEXRL_WORKERS to cap the
    /// number of worker threads.
    Run {
        /// One of: lpa-benchmark, tlq-train, tlq-failure-scan,
        /// reinforce-path, reinforce-endpoint, ftn, augment-demo.
        #[arg(long)]
        experiment: String,
        /// TOML file overriding experiment hyperparameters (one flat
        /// section per module; unknown keys are rejected).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Seed sweep: "0..9" (inclusive on both ends), "0,3,7", or "5".
        #[arg(long, default_value = "0")]
        seeds: String,
        /// Output directory for the CSV artifacts (created if absent).
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a saved policy file on a maze environment.
    Eval {
        /// Policy JSON produced by `run` (network or tabular) or written
        /// by hand ({"kind": "uniform"} for the random baseline).
        #[arg(long)]
        policy: PathBuf,
        /// Built-in maze name (maze-small, maze-extended, maze-early-late,
        /// maze-concave-simple) or path to an ASCII maze file.
        #[arg(long)]
        env: String,
        /// Override the maze's objective layout.
        #[arg(long, value_enum)]
        scheme: Option<SchemeArg>,
        /// Discount factor for the compiled environment.
        #[arg(long, default_value_t = 0.99)]
        gamma: f64,
        /// Number of evaluation episodes.
        #[arg(long, default_value_t = 100)]
        episodes: usize,
        /// Seed for the evaluation episode stream.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Per-episode step cap.
        #[arg(long, default_value_t = 200)]
        horizon: usize,
        /// Optional path for a one-row evaluation CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome: CliResult<()> = match cli.cmd {
        Cmd::Run {
            experiment,
            config,
            seeds,
            out,
        } => config::load(config.as_deref()).and_then(|cfg| {
            let seeds = config::parse_seeds(&seeds)?;
            runner::run_experiment(&experiment, &cfg, &seeds, &out)
        }),
        Cmd::Eval {
            policy,
            env,
            scheme,
            gamma,
            episodes,
            seed,
            horizon,
            out,
        } => runner::eval_cmd(
            &policy,
            &env,
            scheme,
            gamma,
            episodes,
            seed,
            horizon,
            out.as_deref(),
        ),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ CliError::Config(_)) => {
            eprintln!("{e}");
            ExitCode::from(2)
        }
        Err(e @ CliError::Runtime(_)) => {
            eprintln!("{e}");
            ExitCode::from(3)
        }
    }
}
