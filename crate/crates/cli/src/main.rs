use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use norm_core::harness::{
    self, emit_csv, report_csv, run_experiment, summarize, sweep, ExperimentConfig, HarnessError, PrescaleSetting,
    SweepRange, TraceSource,
};
use norm_core::nvmem::catalog_csv;
use norm_core::workload::PolicyKind;

#[derive(Parser)]
#[command(name = "norm-sim", version, about = "Cycle-accurate intermittent computing simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and print a summary.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Voltage trace CSV, replacing the config's trace source.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Write a one-row result CSV here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Cycles per trace sample.
        #[arg(long)]
        prescale: Option<u32>,
    },
    /// Sweep one policy's parameter and write one CSV row per value.
    Sweep {
        #[arg(long, value_enum)]
        policy: PolicyArg,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        prescale: Option<u32>,
        /// Worker threads (default: one per core).
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        start: Option<u64>,
        #[arg(long)]
        stop: Option<u64>,
        #[arg(long)]
        step: Option<u64>,
    },
    /// Print the memory technology table.
    Catalog {
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Dbp,
    Cbp,
    Tbp,
}

impl From<PolicyArg> for PolicyKind {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::Dbp => PolicyKind::Dbp,
            PolicyArg::Cbp => PolicyKind::Cbp,
            PolicyArg::Tbp => PolicyKind::Tbp,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
}

fn load_config(
    path: &Path,
    trace: Option<PathBuf>,
    seed: Option<u64>,
    prescale: Option<u32>,
) -> Result<ExperimentConfig, HarnessError> {
    let mut config = ExperimentConfig::from_file(path)?;
    if let Some(t) = trace {
        config.trace = TraceSource::File(t);
        config.downsample = 1;
    }
    if let Some(s) = seed {
        config.seed = s;
    }
    if let Some(p) = prescale {
        config.prescale = PrescaleSetting::Fixed(p);
    }
    config.validate()?;
    Ok(config)
}

fn execute(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Run {
            config,
            trace,
            seed,
            out,
            prescale,
        } => {
            let config = load_config(&config, trace, seed, prescale)?;
            let report = run_experiment(&config)?;
            print!("{}", summarize(&report));
            if let Some(path) = out.or(config.out.clone()) {
                harness::write_file(&path, &report_csv(config.param(), &report))?;
            }
        }
        Command::Sweep {
            policy,
            config,
            out,
            trace,
            seed,
            prescale,
            threads,
            start,
            stop,
            step,
        } => {
            let kind = PolicyKind::from(policy);
            let config = load_config(&config, trace, seed, prescale)?;
            let base = config
                .sweep
                .filter(|_| config.policy == kind)
                .unwrap_or_else(|| SweepRange::default_for(kind));
            let range = SweepRange::new(
                start.unwrap_or(base.start),
                stop.unwrap_or(base.stop),
                step.unwrap_or(base.step),
            )?;
            let path = out
                .or(config.out.clone())
                .ok_or_else(|| HarnessError::config("out", "sweep needs --out or `out` in the config"))?;
            let report = sweep(&config, kind, range, threads)?;
            emit_csv(&report, &path)?;
            eprintln!("{} rows written to {}", report.rows.len(), path.display());
        }
        Command::Catalog { format: Format::Csv } => print!("{}", catalog_csv()),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("norm-sim: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
