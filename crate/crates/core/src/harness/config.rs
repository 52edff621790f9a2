//! Experiment configuration files.
//!
//! The file is flat TOML; unknown keys are rejected. Every error names the
//! key it is about.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::energy::{Entity, DEFAULT_SAMPLE_INTERVAL};
use crate::kernel::ClockConfig;
use crate::nvmem::{tech_params, MemTechParams, Technology, DEFAULT_VDD_MV};
use crate::trace::{Millivolts, TraceSynthParams};
use crate::workload::{PolicyKind, REQUIRED_DEPTH};

use super::HarnessError;

/// Default downsampling factor for synthetic traces.
pub const SYNTH_DOWNSAMPLE: usize = 25;
/// Energy per active cycle of each counter when not configured.
pub const DEFAULT_COUNTER_E3C_FJ: u64 = 10_000;
pub const DEFAULT_BACKUP_LOGIC_E3C_FJ: u64 = 2_000;
pub const DEFAULT_IE_E3C_FJ: u64 = 1_000;

#[derive(Debug, Clone, PartialEq)]
pub enum TraceSource {
    File(PathBuf),
    Synth(TraceSynthParams),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrescaleSetting {
    Auto,
    Fixed(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SweepRange {
    pub start: u64,
    pub stop: u64,
    pub step: u64,
}

impl SweepRange {
    pub fn new(start: u64, stop: u64, step: u64) -> Result<Self, HarnessError> {
        if step == 0 {
            return Err(HarnessError::config("sweep_step", "must be positive"));
        }
        if start > stop {
            return Err(HarnessError::config(
                "sweep_start",
                format!("empty range: start {start} is past stop {stop}"),
            ));
        }
        Ok(Self { start, stop, step })
    }

    pub fn default_for(kind: PolicyKind) -> Self {
        let (start, stop, step) = kind.default_sweep();
        Self { start, stop, step }
    }

    /// Inclusive parameter values.
    pub fn values(&self) -> Vec<u64> {
        (self.start..=self.stop).step_by(self.step as usize).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub clock: ClockConfig,
    pub seed: u64,
    pub trace: TraceSource,
    pub downsample: usize,
    pub thresholds_mv: Vec<Millivolts>,
    pub select_threshold: usize,
    pub prescale: PrescaleSetting,
    pub wakeup_mv: Option<Millivolts>,
    pub nvr_depth: usize,
    pub nvr_word_bits: u32,
    pub technology: MemTechParams,
    pub nvr_access_delay_ns: u64,
    pub entities: Vec<Entity>,
    /// Configured energies; entities missing here get defaults.
    pub e3c_fj: BTreeMap<Entity, u64>,
    pub sample_interval: u64,
    pub policy: PolicyKind,
    pub dbp_threshold_mv: Millivolts,
    pub cbp_period_us: u64,
    pub tbp_task_count: u32,
    pub dbp_stall: bool,
    pub counter_initial_values: [u32; 3],
    pub sweep: Option<SweepRange>,
    pub out: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let technology = tech_params(Technology::FeRam).expect("cataloged");
        Self {
            clock: ClockConfig::baseline(),
            seed: 1,
            trace: TraceSource::Synth(TraceSynthParams::baseline()),
            downsample: SYNTH_DOWNSAMPLE,
            thresholds_mv: vec![2800],
            select_threshold: 0,
            prescale: PrescaleSetting::Auto,
            wakeup_mv: None,
            nvr_depth: REQUIRED_DEPTH,
            nvr_word_bits: 32,
            nvr_access_delay_ns: technology.access_delay_ns(),
            technology,
            entities: Entity::ALL.to_vec(),
            e3c_fj: BTreeMap::new(),
            sample_interval: DEFAULT_SAMPLE_INTERVAL,
            policy: PolicyKind::Dbp,
            dbp_threshold_mv: 3040,
            cbp_period_us: 2,
            tbp_task_count: 1,
            dbp_stall: true,
            counter_initial_values: [0; 3],
            sweep: None,
            out: None,
        }
    }
}

impl ExperimentConfig {
    /// The pinned regression setup: defaults with an 80 ns NVR access, so
    /// each access holds the NVR busy for eight cycles at 100 MHz.
    pub fn baseline() -> Self {
        Self {
            nvr_access_delay_ns: 80,
            ..Self::default()
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawPrescale {
    Fixed(u32),
    Word(String),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTech {
    read_ns: u64,
    write_ns: u64,
    read_ma: f64,
    write_ma: f64,
    #[serde(default)]
    standby_ua: u64,
    sleep_ua: Option<u64>,
    vdd_mv: Option<u64>,
    endurance_cycles: Option<u64>,
    #[serde(default)]
    retention_years: u32,
    process_nm: Option<u32>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    frequency_hz: Option<u64>,
    total_cycles: Option<u64>,
    seed: Option<u64>,
    trace_file: Option<PathBuf>,
    synth_charge_rate_mv: Option<u32>,
    synth_discharge_rate_mv: Option<u32>,
    synth_on_mv: Option<Millivolts>,
    synth_off_mv: Option<Millivolts>,
    synth_dwell_samples: Option<u32>,
    synth_jitter_mv: Option<u16>,
    synth_length: Option<usize>,
    downsample: Option<usize>,
    thresholds_mv: Option<Vec<Millivolts>>,
    select_threshold: Option<usize>,
    prescale: Option<RawPrescale>,
    wakeup_mv: Option<Millivolts>,
    nvr_depth: Option<usize>,
    nvr_word_bits: Option<u32>,
    nvr_technology: Option<String>,
    nvr_access_delay_ns: Option<u64>,
    custom_tech: Option<RawTech>,
    e3c_fj: Option<BTreeMap<String, u64>>,
    entities: Option<Vec<String>>,
    sample_interval: Option<u64>,
    policy: Option<String>,
    dbp_threshold_mv: Option<Millivolts>,
    cbp_period_us: Option<u64>,
    tbp_task_count: Option<u32>,
    dbp_stall: Option<bool>,
    counter_initial_values: Option<[u32; 3]>,
    sweep_start: Option<u64>,
    sweep_stop: Option<u64>,
    sweep_step: Option<u64>,
    out: Option<PathBuf>,
}

impl RawConfig {
    fn has_synth_keys(&self) -> bool {
        self.synth_charge_rate_mv.is_some()
            || self.synth_discharge_rate_mv.is_some()
            || self.synth_on_mv.is_some()
            || self.synth_off_mv.is_some()
            || self.synth_dwell_samples.is_some()
            || self.synth_jitter_mv.is_some()
            || self.synth_length.is_some()
    }
}

fn ma_to_ua(field: &str, ma: f64) -> Result<u64, HarnessError> {
    if !ma.is_finite() || ma < 0.0 {
        return Err(HarnessError::config(field, "must be a non-negative number"));
    }
    Ok((ma * 1000.0).round() as u64)
}

impl ExperimentConfig {
    /// Parses a config file. Relative paths inside it resolve against `base_dir`.
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self, HarnessError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            let field = msg
                .split('`')
                .nth(1)
                .filter(|_| msg.contains("field"))
                .unwrap_or("config")
                .to_string();
            HarnessError::config(field, msg)
        })?;
        Self::from_raw(raw, base_dir)
    }

    pub fn from_file(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml_str(&text, base)
    }

    fn from_raw(raw: RawConfig, base_dir: &Path) -> Result<Self, HarnessError> {
        let mut c = ExperimentConfig::default();

        if let Some(v) = raw.frequency_hz {
            c.clock.frequency_hz = v;
        }
        if let Some(v) = raw.total_cycles {
            c.clock.total_cycles = v;
        }
        if let Some(v) = raw.seed {
            c.seed = v;
        }

        let synth = raw.has_synth_keys();
        match (&raw.trace_file, synth) {
            (Some(_), true) => {
                return Err(HarnessError::config(
                    "trace_file",
                    "give either trace_file or synth_* keys, not both",
                ))
            }
            (Some(path), false) => {
                c.trace = TraceSource::File(base_dir.join(path));
                c.downsample = 1;
            }
            (None, _) => {
                let mut p = TraceSynthParams::baseline();
                p.charge_rate_mv = raw.synth_charge_rate_mv.unwrap_or(p.charge_rate_mv);
                p.discharge_rate_mv = raw.synth_discharge_rate_mv.unwrap_or(p.discharge_rate_mv);
                p.on_mv = raw.synth_on_mv.unwrap_or(p.on_mv);
                p.off_mv = raw.synth_off_mv.unwrap_or(p.off_mv);
                p.dwell_samples = raw.synth_dwell_samples.unwrap_or(p.dwell_samples);
                p.jitter_mv = raw.synth_jitter_mv.unwrap_or(p.jitter_mv);
                p.length = raw.synth_length.unwrap_or(p.length);
                c.trace = TraceSource::Synth(p);
            }
        }
        if let Some(v) = raw.downsample {
            c.downsample = v;
        }

        if let Some(v) = raw.thresholds_mv {
            c.thresholds_mv = v;
        }
        if let Some(v) = raw.select_threshold {
            c.select_threshold = v;
        }
        c.prescale = match raw.prescale {
            None => PrescaleSetting::Auto,
            Some(RawPrescale::Fixed(n)) => PrescaleSetting::Fixed(n),
            Some(RawPrescale::Word(w)) if w == "auto" => PrescaleSetting::Auto,
            Some(RawPrescale::Word(w)) => {
                return Err(HarnessError::config(
                    "prescale",
                    format!("expected a positive integer or \"auto\", got \"{w}\""),
                ))
            }
        };
        c.wakeup_mv = raw.wakeup_mv;

        if let Some(v) = raw.nvr_depth {
            c.nvr_depth = v;
        }
        if let Some(v) = raw.nvr_word_bits {
            c.nvr_word_bits = v;
        }
        let tech_name = raw.nvr_technology.as_deref();
        c.technology = match (raw.custom_tech, tech_name) {
            (Some(t), None) => custom_params(t)?,
            (Some(t), Some(name)) if name.eq_ignore_ascii_case("custom") => custom_params(t)?,
            (Some(_), Some(_)) => {
                return Err(HarnessError::config(
                    "custom_tech",
                    "custom_tech needs nvr_technology = \"custom\" or no nvr_technology",
                ))
            }
            (None, Some(name)) => {
                let tech: Technology =
                    name.parse().map_err(|e| HarnessError::config("nvr_technology", format!("{e}")))?;
                tech_params(tech).map_err(|_| {
                    HarnessError::config("nvr_technology", "custom technology needs a [custom_tech] table")
                })?
            }
            (None, None) => c.technology,
        };
        c.nvr_access_delay_ns = raw
            .nvr_access_delay_ns
            .unwrap_or_else(|| c.technology.access_delay_ns());

        if let Some(names) = raw.entities {
            c.entities = names
                .iter()
                .map(|n| n.parse::<Entity>().map_err(|e| HarnessError::config("entities", e.to_string())))
                .collect::<Result<_, _>>()?;
        }
        if let Some(map) = raw.e3c_fj {
            for (name, v) in map {
                let e = name
                    .parse::<Entity>()
                    .map_err(|err| HarnessError::config("e3c_fj", err.to_string()))?;
                c.e3c_fj.insert(e, v);
            }
        }
        if let Some(v) = raw.sample_interval {
            c.sample_interval = v;
        }

        if let Some(p) = raw.policy {
            c.policy = p.parse().map_err(|e| HarnessError::config("policy", format!("{e}")))?;
        }
        if let Some(v) = raw.dbp_threshold_mv {
            c.dbp_threshold_mv = v;
        }
        if let Some(v) = raw.cbp_period_us {
            c.cbp_period_us = v;
        }
        if let Some(v) = raw.tbp_task_count {
            c.tbp_task_count = v;
        }
        if let Some(v) = raw.dbp_stall {
            c.dbp_stall = v;
        }
        if let Some(v) = raw.counter_initial_values {
            c.counter_initial_values = v;
        }

        c.sweep = match (raw.sweep_start, raw.sweep_stop, raw.sweep_step) {
            (None, None, None) => None,
            (start, stop, step) => {
                let d = SweepRange::default_for(c.policy);
                Some(SweepRange::new(
                    start.unwrap_or(d.start),
                    stop.unwrap_or(d.stop),
                    step.unwrap_or(d.step),
                )?)
            }
        };
        c.out = raw.out.map(|p| base_dir.join(p));

        c.validate()?;
        Ok(c)
    }

    /// Checks the cross-field rules. Errors name the offending key.
    pub fn validate(&self) -> Result<(), HarnessError> {
        fn bad(field: &str, message: impl Into<String>) -> HarnessError {
            HarnessError::config(field, message)
        }
        if self.clock.frequency_hz == 0 {
            return Err(bad("frequency_hz", "must be positive"));
        }
        if self.downsample == 0 {
            return Err(bad("downsample", "must be at least 1"));
        }
        if let TraceSource::Synth(p) = &self.trace {
            if p.off_mv >= p.on_mv {
                return Err(bad("synth_off_mv", "must be below synth_on_mv"));
            }
            if p.charge_rate_mv == 0 {
                return Err(bad("synth_charge_rate_mv", "must be positive"));
            }
            if p.discharge_rate_mv == 0 {
                return Err(bad("synth_discharge_rate_mv", "must be positive"));
            }
            if p.length == 0 {
                return Err(bad("synth_length", "must be positive"));
            }
        }
        if self.thresholds_mv.is_empty() {
            return Err(bad("thresholds_mv", "must list at least one threshold"));
        }
        if self.select_threshold >= self.thresholds_mv.len() {
            return Err(bad(
                "select_threshold",
                format!("{} is out of range for {} thresholds", self.select_threshold, self.thresholds_mv.len()),
            ));
        }
        if self.prescale == PrescaleSetting::Fixed(0) {
            return Err(bad("prescale", "must be at least 1"));
        }
        if let Some(w) = self.wakeup_mv {
            let reset = self.thresholds_mv[self.select_threshold];
            if w < reset {
                return Err(bad("wakeup_mv", format!("{w} is below the selected threshold {reset}")));
            }
        }
        if self.nvr_depth < REQUIRED_DEPTH {
            return Err(bad("nvr_depth", format!("must be at least {REQUIRED_DEPTH}")));
        }
        if !(32..=64).contains(&self.nvr_word_bits) {
            return Err(bad("nvr_word_bits", "must be in 32..=64"));
        }
        if self.sample_interval == 0 || self.sample_interval > u64::from(u32::MAX) {
            return Err(bad("sample_interval", "must be in 1..=4294967295"));
        }
        for (i, e) in self.entities.iter().enumerate() {
            if self.entities[..i].contains(e) {
                return Err(bad("entities", format!("`{e}` listed twice")));
            }
        }
        if self.cbp_period_us == 0 {
            return Err(bad("cbp_period_us", "must be at least 1"));
        }
        if self.tbp_task_count == 0 {
            return Err(bad("tbp_task_count", "must be at least 1"));
        }
        Ok(())
    }

    /// The same experiment with the policy parameter set to `value`.
    pub fn with_param(&self, kind: PolicyKind, value: u64) -> Result<Self, HarnessError> {
        let mut c = self.clone();
        c.policy = kind;
        match kind {
            PolicyKind::Dbp => {
                c.dbp_threshold_mv = Millivolts::try_from(value)
                    .map_err(|_| HarnessError::config("dbp_threshold_mv", format!("{value} does not fit in 16 bits")))?;
            }
            PolicyKind::Cbp => c.cbp_period_us = value,
            PolicyKind::Tbp => {
                c.tbp_task_count = u32::try_from(value)
                    .map_err(|_| HarnessError::config("tbp_task_count", format!("{value} does not fit in 32 bits")))?;
            }
        }
        c.validate()?;
        Ok(c)
    }

    /// Current value of the active policy's parameter.
    pub fn param(&self) -> u64 {
        match self.policy {
            PolicyKind::Dbp => u64::from(self.dbp_threshold_mv),
            PolicyKind::Cbp => self.cbp_period_us,
            PolicyKind::Tbp => u64::from(self.tbp_task_count),
        }
    }
}

fn custom_params(t: RawTech) -> Result<MemTechParams, HarnessError> {
    Ok(MemTechParams {
        technology: Technology::Custom,
        read_ns: t.read_ns,
        write_ns: t.write_ns,
        read_ua: ma_to_ua("custom_tech.read_ma", t.read_ma)?,
        write_ua: ma_to_ua("custom_tech.write_ma", t.write_ma)?,
        standby_ua: t.standby_ua,
        sleep_ua: t.sleep_ua.unwrap_or(t.standby_ua),
        sleep_defaulted: t.sleep_ua.is_none(),
        vdd_mv: t.vdd_mv.unwrap_or(DEFAULT_VDD_MV),
        endurance_cycles: t.endurance_cycles,
        retention_years: t.retention_years,
        process_nm: t.process_nm,
    })
}
