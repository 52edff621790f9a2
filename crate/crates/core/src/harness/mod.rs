//! Experiment runner: builds worlds from an [`ExperimentConfig`], runs single
//! experiments and parameter sweeps, and writes CSV results.

pub mod config;

use std::fmt::Write as _;
use std::io;
use std::num::NonZeroU32;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::energy::Entity;
use crate::intermittency::{default_prescale, IeConfig};
use crate::kernel::{CategoryCounts, SimReport, World, WorldError, WorldSetup};
use crate::nvmem::{access_energy, busy_cycles, NvrConfig, NvrFault, OpKind};
use crate::trace::{downsample_mean, load_trace_csv, synth_harvest_trace, TraceError, VoltageTrace};
use crate::workload::{period_us_to_cycles, BackupPolicy, PolicyKind};

pub use crate::energy::{energy_per_increment, EnergyPerIncrement};
pub use config::{ExperimentConfig, PrescaleSetting, SweepRange, TraceSource};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("trace {}: {source}", path.display())]
    Trace { path: PathBuf, source: TraceError },
    #[error("nvr fault: {0}")]
    Fault(NvrFault),
    #[error("invariant violated: {0}")]
    Invariant(String),
}

impl HarnessError {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        HarnessError::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn io(path: &Path, source: io::Error) -> Self {
        HarnessError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Process exit code for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config { .. } => 2,
            HarnessError::Io { .. } | HarnessError::Trace { .. } => 3,
            HarnessError::Fault(_) | HarnessError::Invariant(_) => 4,
        }
    }
}

impl From<WorldError> for HarnessError {
    fn from(e: WorldError) -> Self {
        let field = match &e {
            WorldError::ZeroFrequency => "frequency_hz",
            WorldError::Ie(_) => "thresholds_mv",
            WorldError::Nvr(_) => "nvr_access_delay_ns",
            WorldError::Energy(_) => "e3c_fj",
            WorldError::Workload(_) => "policy",
        };
        HarnessError::config(field, e.to_string())
    }
}

/// Loads or synthesizes the trace and applies downsampling.
pub fn prepare_trace(config: &ExperimentConfig) -> Result<Arc<VoltageTrace>, HarnessError> {
    let (raw, path) = match &config.trace {
        TraceSource::File(path) => {
            let bytes = std::fs::read(path).map_err(|e| HarnessError::io(path, e))?;
            let t = load_trace_csv(&bytes).map_err(|source| HarnessError::Trace {
                path: path.clone(),
                source,
            })?;
            (t, path.clone())
        }
        TraceSource::Synth(p) => {
            let mut p = p.clone();
            p.jitter_seed = config.seed;
            let t = synth_harvest_trace(&p).map_err(|e| HarnessError::config("synth_length", e.to_string()))?;
            (t, PathBuf::from("<synthetic>"))
        }
    };
    if config.downsample == 1 {
        return Ok(Arc::new(raw));
    }
    let period = raw
        .sample_period_cycles()
        .and_then(|p| u32::try_from(config.downsample).ok().and_then(|k| p.checked_mul(NonZeroU32::new(k)?)));
    let t = downsample_mean(&raw, config.downsample)
        .map_err(|source| HarnessError::Trace { path, source })?
        .with_sample_period(period);
    Ok(Arc::new(t))
}

/// Prescale after applying the precedence: explicit setting, then the
/// trace's own sample period, then one pass over the trace per run.
pub fn effective_prescale(config: &ExperimentConfig, trace: &VoltageTrace) -> u32 {
    match config.prescale {
        PrescaleSetting::Fixed(n) => n,
        PrescaleSetting::Auto => trace
            .sample_period_cycles()
            .map(NonZeroU32::get)
            .unwrap_or_else(|| default_prescale(trace.len(), config.clock.total_cycles)),
    }
}

/// Default NVR energy per active cycle: the mean access energy spread over
/// the busy window, rounded half up.
pub fn default_nvr_e3c(config: &ExperimentConfig) -> u64 {
    let r = access_energy(&config.technology, OpKind::Read);
    let w = access_energy(&config.technology, OpKind::Write);
    let busy = busy_cycles(config.nvr_access_delay_ns, config.clock.frequency_hz).max(1);
    // (r + w) / (2 * busy), half up
    (r + w + busy) / (2 * busy)
}

pub fn default_e3c(config: &ExperimentConfig, entity: Entity) -> u64 {
    match entity {
        Entity::Counter1 | Entity::Counter2 | Entity::Counter3 => config::DEFAULT_COUNTER_E3C_FJ,
        Entity::BackupLogic => config::DEFAULT_BACKUP_LOGIC_E3C_FJ,
        Entity::Nvr => default_nvr_e3c(config),
        Entity::Ie => config::DEFAULT_IE_E3C_FJ,
    }
}

pub fn build_policy(config: &ExperimentConfig) -> BackupPolicy {
    match config.policy {
        PolicyKind::Dbp => BackupPolicy::Dynamic {
            threshold_mv: config.dbp_threshold_mv,
            comp_index: config.thresholds_mv.len(),
            stall_below: config.dbp_stall,
        },
        PolicyKind::Cbp => BackupPolicy::Constant {
            period_cycles: period_us_to_cycles(config.cbp_period_us, config.clock.frequency_hz),
        },
        PolicyKind::Tbp => BackupPolicy::Task {
            task_count: config.tbp_task_count,
        },
    }
}

pub fn build_setup(config: &ExperimentConfig, trace: Arc<VoltageTrace>) -> WorldSetup {
    let mut thresholds = config.thresholds_mv.clone();
    if config.policy == PolicyKind::Dbp {
        // extra comparator read by the backup logic
        thresholds.push(config.dbp_threshold_mv);
    }
    let ie = IeConfig {
        thresholds_mv: thresholds,
        select_threshold: config.select_threshold,
        prescale: effective_prescale(config, &trace),
        wakeup_threshold_mv: config.wakeup_mv,
    };
    let roster = config
        .entities
        .iter()
        .map(|&e| (e, config.e3c_fj.get(&e).copied().unwrap_or_else(|| default_e3c(config, e))))
        .collect();
    WorldSetup {
        clock: config.clock,
        ie,
        trace,
        nvr: NvrConfig {
            depth: config.nvr_depth,
            word_bits: config.nvr_word_bits,
            access_delay_ns: config.nvr_access_delay_ns,
            technology: config.technology.technology,
        },
        roster,
        sample_interval: config.sample_interval,
        policy: build_policy(config),
        initial_values: config.counter_initial_values,
    }
}

fn check_report(report: &SimReport) -> Result<(), HarnessError> {
    if let Some(f) = &report.fault {
        return Err(HarnessError::Fault(f.clone()));
    }
    if report.categories.total() != report.cycles {
        return Err(HarnessError::Invariant(format!(
            "cycle categories sum to {} over {} cycles",
            report.categories.total(),
            report.cycles
        )));
    }
    Ok(())
}

/// Runs one experiment on an already prepared trace.
pub fn run_with_trace(config: &ExperimentConfig, trace: Arc<VoltageTrace>) -> Result<SimReport, HarnessError> {
    let mut world = World::new(build_setup(config, trace))?;
    let report = world.run(config.clock.total_cycles);
    check_report(&report)?;
    Ok(report)
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<SimReport, HarnessError> {
    config.validate()?;
    let trace = prepare_trace(config)?;
    run_with_trace(config, trace)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SweepRow {
    pub param: u64,
    pub counter1_val: u32,
    pub counters_energy_fj: u128,
    pub norm_energy_fj: u128,
    pub categories: CategoryCounts,
    pub backups_attempted: u64,
    pub backups_committed: u64,
    pub compute_eligible_cycles: u64,
}

impl SweepRow {
    pub fn from_report(param: u64, r: &SimReport) -> Self {
        Self {
            param,
            counter1_val: r.counter1_val,
            counters_energy_fj: r.counters_energy_fj,
            norm_energy_fj: r.norm_energy_fj,
            categories: r.categories,
            backups_attempted: r.workload.backups_started,
            backups_committed: r.workload.backups_committed,
            compute_eligible_cycles: r.compute_eligible_cycles,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SweepReport {
    pub policy: PolicyKind,
    pub rows: Vec<SweepRow>,
}

/// One independent run per parameter value, all on the same trace.
///
/// With `threads = None` rayon's global pool is used. Rows always come back
/// in parameter order.
pub fn sweep(
    config: &ExperimentConfig,
    kind: PolicyKind,
    range: SweepRange,
    threads: Option<usize>,
) -> Result<SweepReport, HarnessError> {
    let range = SweepRange::new(range.start, range.stop, range.step)?;
    let values = range.values();
    let configs = values
        .iter()
        .map(|&v| config.with_param(kind, v))
        .collect::<Result<Vec<_>, _>>()?;
    let trace = prepare_trace(config)?;

    let work = || {
        configs
            .par_iter()
            .zip(values.par_iter())
            .map(|(c, &v)| run_with_trace(c, Arc::clone(&trace)).map(|r| SweepRow::from_report(v, &r)))
            .collect::<Result<Vec<_>, _>>()
    };
    let rows = match threads {
        None => work()?,
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| HarnessError::config("threads", e.to_string()))?
            .install(work)?,
    };
    Ok(SweepReport { policy: kind, rows })
}

pub const SWEEP_CSV_HEADER: [&str; 10] = [
    "param",
    "counter1_val",
    "counters_energy_fj",
    "norm_energy_fj",
    "cycles_compute",
    "cycles_backup",
    "cycles_restore",
    "cycles_stall",
    "cycles_off",
    "backups_committed",
];

fn csv_bytes(header: &[String], rows: &[Vec<String>]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("writing to memory");
    for r in rows {
        w.write_record(r).expect("writing to memory");
    }
    w.into_inner().expect("writing to memory")
}

fn category_fields(c: &CategoryCounts) -> [String; 5] {
    [c.compute, c.backup, c.restore, c.stall, c.off].map(|v| v.to_string())
}

pub fn sweep_csv(report: &SweepReport) -> Vec<u8> {
    let header: Vec<String> = SWEEP_CSV_HEADER.iter().map(|s| s.to_string()).collect();
    let rows: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| {
            let mut f = vec![
                r.param.to_string(),
                r.counter1_val.to_string(),
                r.counters_energy_fj.to_string(),
                r.norm_energy_fj.to_string(),
            ];
            f.extend(category_fields(&r.categories));
            f.push(r.backups_committed.to_string());
            f
        })
        .collect();
    csv_bytes(&header, &rows)
}

/// One-row CSV for a single run: the sweep columns plus per-entity energy.
pub fn report_csv(param: u64, report: &SimReport) -> Vec<u8> {
    let mut header: Vec<String> = SWEEP_CSV_HEADER.iter().map(|s| s.to_string()).collect();
    header.extend(["cycles".to_string(), "simulated_time_ps".to_string(), "backups_attempted".to_string()]);
    header.extend(report.entity_energy_fj.iter().map(|(e, _)| format!("energy_{e}_fj")));
    let row = SweepRow::from_report(param, report);
    let mut f = vec![
        row.param.to_string(),
        row.counter1_val.to_string(),
        row.counters_energy_fj.to_string(),
        row.norm_energy_fj.to_string(),
    ];
    f.extend(category_fields(&row.categories));
    f.push(row.backups_committed.to_string());
    f.push(report.cycles.to_string());
    f.push(report.simulated_time_ps.to_string());
    f.push(row.backups_attempted.to_string());
    f.extend(report.entity_energy_fj.iter().map(|(_, v)| v.to_string()));
    csv_bytes(&header, &[f])
}

pub fn emit_csv(report: &SweepReport, path: &Path) -> Result<(), HarnessError> {
    write_file(path, &sweep_csv(report))
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    std::fs::write(path, bytes).map_err(|e| HarnessError::io(path, e))
}

/// Human-readable summary of a run.
pub fn summarize(report: &SimReport) -> String {
    let mut s = String::new();
    let c = &report.categories;
    let _ = writeln!(s, "cycles            {}", report.cycles);
    let _ = writeln!(s, "simulated time    {} ps", report.simulated_time_ps);
    let _ = writeln!(s, "counter1_val      {}", report.counter1_val);
    let _ = writeln!(s, "counters energy   {} fJ", report.counters_energy_fj);
    let _ = writeln!(s, "norm energy       {} fJ", report.norm_energy_fj);
    let _ = writeln!(
        s,
        "cycles            compute {} backup {} restore {} stall {} off {}",
        c.compute, c.backup, c.restore, c.stall, c.off
    );
    let _ = writeln!(
        s,
        "backups           attempted {} committed {}",
        report.workload.backups_started, report.workload.backups_committed
    );
    let _ = writeln!(s, "recoveries        {}", report.workload.recoveries_completed);
    if let Some(epi) = energy_per_increment(
        report.counters_energy_fj + report.norm_energy_fj,
        u128::from(report.counter1_val),
    ) {
        let _ = writeln!(s, "fJ per increment  {epi}");
    }
    s
}
