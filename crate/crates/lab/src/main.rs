//! `lab`: config-driven runner for the diffusion scheduling experiments.

mod commands;
mod config;
mod error;
mod manifest;
mod selftest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use difflab::report::write_csv;

use crate::config::{Command, Overrides};
use crate::error::{CliError, EXIT_FAILURE};

#[derive(Parser)]
#[command(name = "lab", version, about = "Scheduled score-based diffusion experiments")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SelftestArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write the report and a manifest here.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, hide = true, value_enum)]
    inject_fault: Option<selftest::Fault>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Closed-form schedulers on a grid, with objective values.
    Schedulers(RunArgs),
    /// Exact discretization bias for Gaussian targets across schedulers.
    GaussianBias(RunArgs),
    /// Monte Carlo weak error over step counts and score perturbations.
    WeakError(RunArgs),
    /// Statistical error of the empirical target against sample size.
    StatError(RunArgs),
    /// Numerical solution of the scheduler variational problem.
    Variational(RunArgs),
    /// Two-state jump model error sweeps.
    Jump(RunArgs),
    /// Fast deterministic checks.
    Selftest(SelftestArgs),
}

/// Thread count from the config, capped by `LAB_THREADS`.
fn thread_count(requested: Option<usize>) -> Result<usize, CliError> {
    let available = std::thread::available_parallelism().map_or(1, |n| n.get());
    let mut n = requested.unwrap_or(available);
    if let Ok(v) = std::env::var("LAB_THREADS") {
        let cap: usize = v.trim().parse().ok().filter(|&c| c > 0).ok_or_else(|| CliError::Config {
            key: "LAB_THREADS".into(),
            reason: format!("expected a positive integer, got {v:?}"),
        })?;
        n = n.min(cap);
    }
    Ok(n)
}

fn init_pool(threads: usize) {
    // only fails if a pool already exists, which cannot happen here
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
}

fn run_experiment(command: Command, args: RunArgs) -> Result<PathBuf, CliError> {
    let cfg = config::load(command, &args.config, Overrides { seed: args.seed, output_dir: args.out })?;
    let threads = thread_count(cfg.threads)?;
    init_pool(threads);
    log::info!("running {command} with seed {} on {threads} threads", cfg.seed);
    let outcome = commands::run(&cfg.parameters, cfg.seed, &cfg.output_dir)?;
    manifest::write(
        manifest::Run {
            command: command.to_string(),
            seed: cfg.seed,
            threads,
            config: serde_json::to_value(&cfg).map_err(difflab::LabError::from)?,
            summary: outcome.summary,
            dir: &cfg.output_dir,
        },
        &outcome.artifacts,
    )
}

fn run_selftest(args: SelftestArgs) -> Result<bool, CliError> {
    init_pool(thread_count(None)?);
    let checks = selftest::run(args.seed, args.inject_fault);
    print!("{}", selftest::render(&checks));
    if let Some(dir) = &args.out {
        let rows: Vec<Vec<String>> = checks
            .iter()
            .map(|c| vec![c.name.to_string(), if c.pass { "PASS" } else { "FAIL" }.to_string(), c.detail.clone()])
            .collect();
        let csv = dir.join("selftest.csv");
        write_csv(&csv, &["check".into(), "status".into(), "detail".into()], &rows)?;
        let passed = checks.iter().filter(|c| c.pass).count();
        manifest::write(
            manifest::Run {
                command: "selftest".into(),
                seed: args.seed,
                threads: rayon::current_num_threads(),
                config: serde_json::json!({ "seed": args.seed }),
                summary: serde_json::json!({ "passed": passed, "total": checks.len() }),
                dir,
            },
            &[csv],
        )?;
    }
    Ok(checks.iter().all(|c| c.pass))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let command = match cli.command {
        Cmd::Selftest(args) => {
            return match run_selftest(args) {
                Ok(true) => ExitCode::SUCCESS,
                Ok(false) => ExitCode::from(EXIT_FAILURE),
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(e.exit_code())
                }
            };
        }
        Cmd::Schedulers(a) => (Command::Schedulers, a),
        Cmd::GaussianBias(a) => (Command::GaussianBias, a),
        Cmd::WeakError(a) => (Command::WeakError, a),
        Cmd::StatError(a) => (Command::StatError, a),
        Cmd::Variational(a) => (Command::Variational, a),
        Cmd::Jump(a) => (Command::Jump, a),
    };
    match run_experiment(command.0, command.1) {
        Ok(manifest) => {
            println!("{}", manifest.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
