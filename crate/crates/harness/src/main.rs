use std::path::PathBuf;
use std::process::ExitCode;

use amp_harness::config::{parse, parse_experiment, read_text, ExperimentConfig, OracleConfig, VarianceConfig};
use amp_harness::experiment::run_experiment;
use amp_harness::oracle::run_oracle;
use amp_harness::timing::{render, rerender};
use amp_harness::variance::run_variance;
use anyhow::{bail, Result};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "amp", version, about = "AMP value-target experiments")]
struct Cli {
    /// JSON configuration; omitted fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run a single seed instead of the configured list.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, overriding the configured one.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train PPO for every estimator, normalization and seed.
    Train,
    /// Measure the spread of value targets at anchor states.
    Variance,
    /// Solve a truncated queueing network exactly.
    Oracle,
    /// Rebuild the timing report of a finished training run.
    Timing,
}

fn config_text(cli: &Cli) -> Result<String> {
    match &cli.config {
        Some(p) => read_text(p),
        None => Ok("{}".into()),
    }
}

fn init_pool(workers: Option<usize>) -> Result<()> {
    if let Some(n) = workers {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train => {
            let mut cfg: ExperimentConfig = parse_experiment(&config_text(&cli)?)?;
            if let Some(s) = cli.seed {
                cfg.seeds = vec![s];
            }
            if let Some(o) = &cli.out {
                cfg.out = o.clone();
            }
            if let Some(w) = cli.workers {
                cfg.ppo.workers = w;
            }
            let summary = run_experiment(&cfg)?;
            for r in &summary.runs {
                for (seed, curve) in &r.curves {
                    match curve.last() {
                        Some(last) => {
                            println!("{} seed {seed}: final metric {:.6}", r.label, last.metric)
                        }
                        None => println!("{} seed {seed}: no iterations", r.label),
                    }
                }
            }
            print!("{}", render(&rerender(&summary.dir)?));
            println!("artifacts in {}", summary.dir.display());
        }
        Command::Variance => {
            let mut cfg: VarianceConfig = parse(&config_text(&cli)?)?;
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            if let Some(o) = &cli.out {
                cfg.out = o.clone();
            }
            init_pool(cli.workers)?;
            let summary = run_variance(&cfg)?;
            for r in &summary.rows {
                println!(
                    "{:<20} L={:<5} {:<14} mean {:>12.6} variance {:>12.6} ({} episodes)",
                    r.mode, r.samples, r.anchor, r.mean, r.variance, r.episodes
                );
            }
            for n in &summary.notes {
                eprintln!("note: {n}");
            }
            println!("artifacts in {}", summary.dir.display());
        }
        Command::Oracle => {
            if cli.seed.is_some() {
                bail!("--seed: the oracle is deterministic");
            }
            let mut cfg: OracleConfig = parse(&config_text(&cli)?)?;
            if let Some(o) = &cli.out {
                cfg.out = o.clone();
            }
            init_pool(cli.workers)?;
            let summary = run_oracle(&cfg)?;
            for r in &summary.rows {
                println!("{:<14} average cost {:.10}", r.policy, r.average_cost);
            }
            println!("artifacts in {}", summary.dir.display());
        }
        Command::Timing => {
            let dir = match &cli.out {
                Some(o) => o.clone(),
                None => parse_experiment(&config_text(&cli)?)?.out,
            };
            print!("{}", render(&rerender(&dir)?));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
