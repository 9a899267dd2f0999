use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use colsim::config::ExperimentConfig;
use colsim::harness::{self, EpisodeRecord, OUTPUT_DIR_ENV};
use colsim::scheduler::Strategy;
use colsim::{validate, Result};

/// Cost-of-learning simulator for a sliced backhaul link.
#[derive(Debug, Parser)]
#[command(name = "colsim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate every configured (strategy, run) pair and write per-run records.
    Run(CommonArgs),
    /// Smooth and aggregate records into percentile curves.
    Aggregate(CommonArgs),
    /// Print the long-run reward of each strategy and the per-mode best.
    Report(CommonArgs),
    /// Run the built-in oracle and property checks.
    Validate,
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// Experiment configuration file (key = value).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base seed, overriding the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of runs per strategy, overriding the configuration.
    #[arg(long)]
    runs: Option<usize>,
    /// Output directory.
    #[arg(long, env = OUTPUT_DIR_ENV)]
    out: Option<PathBuf>,
    /// Restrict to these strategies (repeatable), e.g. `constant-3` or `ideal`.
    #[arg(long = "strategy")]
    strategies: Vec<Strategy>,
}

impl CommonArgs {
    fn load(&self) -> Result<(ExperimentConfig, PathBuf)> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_file(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.base_seed = seed;
        }
        if let Some(runs) = self.runs {
            cfg.num_runs = runs;
        }
        if !self.strategies.is_empty() {
            cfg.strategies = self.strategies.clone();
        }
        cfg.validate()?;
        let out = self.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
        Ok((cfg, out))
    }

    fn records(&self, out: &Path) -> Result<Vec<EpisodeRecord>> {
        let mut records = harness::read_records_dir(&harness::records_dir(out))?;
        if !self.strategies.is_empty() {
            let names: Vec<String> = self.strategies.iter().map(Strategy::to_string).collect();
            records.retain(|r| names.contains(&r.strategy));
        }
        Ok(records)
    }
}

fn execute(command: Command) -> Result<bool> {
    match command {
        Command::Run(args) => {
            let (cfg, out) = args.load()?;
            let files = harness::run_experiment(&cfg, &out)?;
            println!(
                "wrote {} record files ({} episodes each) to {}",
                files.len(),
                cfg.episodes,
                harness::records_dir(&out).display()
            );
        }
        Command::Aggregate(args) => {
            let (cfg, out) = args.load()?;
            let rows =
                harness::aggregate(&args.records(&out)?, cfg.sample_stride, cfg.smoothing())?;
            let path = out.join("aggregate.csv");
            harness::write_aggregate(&path, &rows, cfg.sample_stride, cfg.smoothing())?;
            println!("wrote {} rows to {}", rows.len(), path.display());
        }
        Command::Report(args) => {
            let (_, out) = args.load()?;
            let summary = harness::sweep_report(&args.records(&out)?)?;
            harness::write_report(&out.join("report.txt"), &summary)?;
            print!("{summary}");
        }
        Command::Validate => {
            let checks = validate::run_all();
            for c in &checks {
                println!("{c}");
            }
            let failed = checks.iter().filter(|c| !c.passed).count();
            println!("{} checks, {} failed", checks.len(), failed);
            return Ok(failed == 0);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("colsim: {e}");
            ExitCode::FAILURE
        }
    }
}
