use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use rana::experiment::{run_experiment, sweep, sweep_csv};
use rana::{ExperimentConfig, ModelKind, Strategy};

#[derive(Parser)]
#[command(
    name = "rana",
    version,
    about = "Robust active learning for noisy network alignment"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the active-learning loop and write one per-iteration CSV per seed.
    Run(Overrides),
    /// Run the grid in the config's [sweep] table and write one row per cell.
    Sweep(Overrides),
}

#[derive(Args)]
struct Overrides {
    /// TOML config; built-in defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Replaces the config's seed list with a single seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    strategy: Option<Strategy>,
    #[arg(long)]
    model: Option<ModelKind>,
    #[arg(long)]
    training_rate: Option<f64>,
    #[arg(long)]
    noise_ratio: Option<f64>,
    /// Output CSV path; stdout when neither this nor the config sets one.
    #[arg(long)]
    output: Option<PathBuf>,
}

impl Overrides {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        macro_rules! set {
            ($($flag:ident => $field:ident),*) => {
                $(if let Some(v) = self.$flag.clone() { cfg.$field = v; })*
            };
        }
        set!(budget => budget, alpha => alpha, theta => theta, gamma => gamma,
             strategy => strategy, model => model, training_rate => training_rate,
             noise_ratio => edge_noise_ratio);
        if let Some(s) = self.seed {
            cfg.seeds = vec![s];
        }
        if self.output.is_some() {
            cfg.output = self.output.clone();
        }
        cfg.validate().context("invalid configuration")?;
        Ok(cfg)
    }
}

fn seeded_path(path: &Path, seed: u64) -> PathBuf {
    let stem = path.file_stem().unwrap_or_default().to_string_lossy();
    let name = match path.extension() {
        Some(ext) => format!("{stem}.seed{seed}.{}", ext.to_string_lossy()),
        None => format!("{stem}.seed{seed}"),
    };
    path.with_file_name(name)
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn run(cfg: &ExperimentConfig) -> Result<()> {
    let single = cfg.seeds.len() == 1;
    for &seed in &cfg.seeds {
        let log = run_experiment(cfg, seed).with_context(|| format!("run with seed {seed}"))?;
        let csv = log.to_csv();
        match &cfg.output {
            Some(p) if single => write(p, &csv)?,
            Some(p) => write(&seeded_path(p, seed), &csv)?,
            None if single => print!("{csv}"),
            None => print!("# seed {seed}\n{csv}\n"),
        }
        let last = log.last();
        log::info!(
            "seed {seed}: {} rounds, {} queries, final Acc@1 {:.4}",
            log.rows.len(),
            last.oracle_queries,
            last.acc1
        );
    }
    Ok(())
}

fn run_sweep(cfg: &ExperimentConfig) -> Result<()> {
    let cells = sweep(cfg);
    for c in cells.iter().filter(|c| !c.failures.is_empty()) {
        log::warn!(
            "{} of {} runs failed in a {} cell",
            c.failures.len(),
            c.config.seeds.len(),
            c.config.strategy.name()
        );
    }
    let csv = sweep_csv(&cells);
    match &cfg.output {
        Some(p) => write(p, &csv),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(o) => o.resolve().and_then(|cfg| run(&cfg)),
        Command::Sweep(o) => o.resolve().and_then(|cfg| run_sweep(&cfg)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
