use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};

use capstan::harness::{run_experiment, Experiment, ExperimentSpec, OutputFormat, DEFAULT_SEED};

/// Cycle-level simulator of a sparse reconfigurable-dataflow accelerator.
///
/// Set CAPSTAN_SIM_THREADS to cap the worker pool used by sweeps.
#[derive(Parser)]
#[command(name = "capstan-sim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// SpMU bank utilization over queue depth, crossbar and priority levels.
    BankSweep(Opts),
    /// Utilization of the four SpMU ordering modes.
    OrderingSweep(Opts),
    /// Shuffle-network throughput over endpoints and merge flexibility.
    MergeSweep(Opts),
    /// Scanner cycles over output vectorization.
    ScannerSweep(Opts),
    /// One kernel, checked against its reference implementation.
    Kernel(Opts),
}

#[derive(clap::Args)]
struct Opts {
    /// JSON experiment spec; omitted fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the spec's seed [default: 0xCAFE].
    #[arg(long)]
    seed: Option<u64>,
    /// Output file, or `-` for stdout.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

fn run(kind: Experiment, o: &Opts) -> anyhow::Result<bool> {
    let spec = match &o.config {
        Some(p) => ExperimentSpec::from_path(p).with_context(|| format!("loading {}", p.display()))?,
        None => ExperimentSpec::default(),
    };
    let seed = o.seed.or(spec.seed).unwrap_or(DEFAULT_SEED);
    let outcome = run_experiment(kind, &spec, seed)?;
    let format = match o.format {
        Format::Csv => OutputFormat::Csv,
        Format::Json => OutputFormat::Json,
    };
    let text = outcome.render(format, seed)?;
    if o.out.as_os_str() == "-" {
        print!("{text}");
    } else {
        std::fs::write(&o.out, text).with_context(|| format!("writing {}", o.out.display()))?;
    }
    if let capstan::harness::Outcome::Kernel(r) = &outcome {
        if !r.passed {
            eprintln!("{:?}: oracle mismatch: {}", r.kernel, r.detail);
        }
    }
    Ok(!outcome.failed())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, opts) = match &cli.command {
        Command::BankSweep(o) => (Experiment::BankSweep, o),
        Command::OrderingSweep(o) => (Experiment::OrderingSweep, o),
        Command::MergeSweep(o) => (Experiment::MergeSweep, o),
        Command::ScannerSweep(o) => (Experiment::ScannerSweep, o),
        Command::Kernel(o) => (Experiment::Kernel, o),
    };
    match run(kind, opts) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
