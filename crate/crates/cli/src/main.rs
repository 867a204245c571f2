//! `condnull`: file-based front end to the empirical-null pipeline.
//!
//! Every subcommand reads its inputs, writes its outputs and a JSON run
//! manifest, and exits with 0 on success, 2 on usage or input errors and
//! 3 when the numerics fail.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use condnull::{DenullMode, DEFAULT_CENTER_FRACTION, DEFAULT_SEED};

mod commands;
mod manifest;

use commands::{CliError, Outcome};
use manifest::RunManifest;

#[derive(Parser, Debug)]
#[command(name = "condnull", version, about = "Empirical null estimation and screening for confidence levels")]
struct Cli {
    /// Seed for every random draw; overrides the seed in a study config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Suppress summary lines on stdout.
    #[arg(long, global = true)]
    quiet: bool,

    /// Where to write the run manifest (default: `<output>.manifest.json`).
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// One-sample t-test levels from a replicate table.
    Levels(LevelsArgs),
    /// Fit the empirical null to a levels table.
    Nullfit(NullfitArgs),
    /// Adjust levels under a null model.
    Adjust(AdjustArgs),
    /// Screening decisions under non-additive loss.
    Screen(ScreenArgs),
    /// Benefit of conditioning on the estimated null.
    Benefit(BenefitArgs),
    /// Run the precision-mixture simulation study.
    Simulate(SimulateArgs),
}

#[derive(Args, Debug, Serialize)]
pub struct LevelsArgs {
    /// Tab-separated replicate table: feature id, then observations.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct NullfitArgs {
    /// Levels CSV as written by `levels`.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Fraction of central z values the fit uses.
    #[arg(long, default_value_t = DEFAULT_CENTER_FRACTION)]
    pub center_fraction: f64,
    /// Write the assumed N(0, 1) null instead of fitting.
    #[arg(long)]
    pub assumed: bool,
}

#[derive(Args, Debug, Serialize)]
pub struct AdjustArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Null model JSON.
    #[arg(long)]
    pub null: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Replicate table, for the estimated ratios in the comparison table.
    #[arg(long)]
    pub table: Option<PathBuf>,
    /// Base of the log ratios in `--table`.
    #[arg(long, default_value = "e", value_parser = ["e", "2"])]
    pub log_base: String,
    /// Write the assumed-versus-estimated comparison table here.
    #[arg(long)]
    pub figure_table: Option<PathBuf>,
    /// Level whose crossings are counted.
    #[arg(long, default_value_t = 0.99)]
    pub threshold: f64,
}

#[derive(Args, Debug, Serialize)]
pub struct ScreenArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Null model applied to the levels before optimizing.
    #[arg(long)]
    pub null: Option<PathBuf>,
    /// Decisions CSV, or the sweep CSV with `--sweep`.
    #[arg(long)]
    pub output: PathBuf,
    /// Acceleration of compounded-error cost.
    #[arg(long, default_value_t = 0.0)]
    pub a: f64,
    /// Cost of a wrong call relative to a non-call.
    #[arg(long, default_value_t = 9.0)]
    pub c: f64,
    /// Monte Carlo draws when exact moments are too costly.
    #[arg(long, default_value_t = 10_000)]
    pub n_mc: usize,
    /// Comma-separated accelerations; sweeps under both nulls.
    #[arg(long, value_delimiter = ',')]
    pub sweep: Option<Vec<f64>>,
    /// Center fraction for fitting the null when sweeping without `--null`.
    #[arg(long, default_value_t = DEFAULT_CENTER_FRACTION)]
    pub center_fraction: f64,
}

#[derive(Args, Debug, Serialize)]
pub struct BenefitArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Estimated null; fitted from the input when absent.
    #[arg(long)]
    pub null: Option<PathBuf>,
    #[arg(long)]
    pub output: PathBuf,
    /// Comma list or `start:step:stop` (inclusive).
    #[arg(long, default_value = "0:100:2000")]
    pub d1_grid: String,
    #[arg(long, default_value = "sign-preserving", value_parser = ["sign-preserving", "literal"])]
    pub mode: String,
    #[arg(long, default_value_t = DEFAULT_CENTER_FRACTION)]
    pub center_fraction: f64,
}

#[derive(Args, Debug, Serialize)]
pub struct SimulateArgs {
    /// Study config JSON; missing fields take the full-size defaults.
    #[arg(long)]
    pub config: PathBuf,
    /// Per-trial CSV.
    #[arg(long)]
    pub output: PathBuf,
    /// Summary CSV of the null-mode by subset cells.
    #[arg(long)]
    pub summary: PathBuf,
}

impl BenefitArgs {
    fn denull_mode(&self) -> DenullMode {
        self.mode.parse().expect("validated by clap")
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let start = Instant::now();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let seed = cli.seed.unwrap_or(DEFAULT_SEED);
    let (name, params, result) = match &cli.command {
        Command::Levels(a) => ("levels", to_value(a), commands::levels(a)),
        Command::Nullfit(a) => ("nullfit", to_value(a), commands::nullfit(a)),
        Command::Adjust(a) => ("adjust", to_value(a), commands::adjust(a)),
        Command::Screen(a) => ("screen", to_value(a), commands::screen(a, seed)),
        Command::Benefit(a) => ("benefit", to_value(a), commands::benefit(a, a.denull_mode())),
        Command::Simulate(a) => ("simulate", to_value(a), commands::simulate(a, cli.seed)),
    };
    match result {
        Ok(outcome) => finish(&cli, name, params, outcome, seed, start),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn to_value<T: Serialize>(args: &T) -> serde_json::Value {
    serde_json::to_value(args).expect("arguments serialize")
}

fn finish(cli: &Cli, name: &'static str, params: serde_json::Value, outcome: Outcome, seed: u64, start: Instant) -> ExitCode {
    if !cli.quiet {
        for line in &outcome.summary {
            println!("{line}");
        }
    }
    let path = cli.manifest.clone().unwrap_or_else(|| manifest::default_path(&outcome.outputs[0]));
    let m = RunManifest {
        subcommand: name,
        version: env!("CARGO_PKG_VERSION"),
        seed: outcome.seed.unwrap_or(seed),
        threads: rayon::current_num_threads(),
        params,
        inputs: outcome.inputs,
        outputs: outcome.outputs,
        results: outcome.results,
        runtime_seconds: start.elapsed().as_secs_f64(),
    };
    match m.write(&path) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: writing manifest {}: {e}", path.display());
            ExitCode::from(CliError::Io(e).exit_code())
        }
    }
}
