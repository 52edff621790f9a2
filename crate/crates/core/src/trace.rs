//! Voltage traces that feed the intermittency emulator's ROM.
//!
//! Samples are unsigned 16-bit millivolt values so that every threshold
//! comparison is exact. Traces come either from a CSV file or from the
//! seeded charge/discharge generator in [`synth_harvest_trace`].

use std::num::NonZeroU32;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Millivolt sample as stored in the trace ROM.
pub type Millivolts = u16;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TraceError {
    #[error("trace is empty")]
    Empty,
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("downsample group size must be at least 1")]
    ZeroGroup,
    #[error("invalid synthetic trace parameters: {0}")]
    InvalidSynth(&'static str),
}

/// A recorded or synthesized capacitor voltage trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoltageTrace {
    samples: Vec<Millivolts>,
    /// Clock cycles per sample, when the source specifies one.
    sample_period_cycles: Option<NonZeroU32>,
}

impl VoltageTrace {
    pub fn new(samples: Vec<Millivolts>) -> Result<Self, TraceError> {
        if samples.is_empty() {
            return Err(TraceError::Empty);
        }
        Ok(Self {
            samples,
            sample_period_cycles: None,
        })
    }

    pub fn with_sample_period(mut self, cycles: Option<NonZeroU32>) -> Self {
        self.sample_period_cycles = cycles;
        self
    }

    pub fn samples(&self) -> &[Millivolts] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    /// Always false; an empty trace cannot be constructed.
    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample_period_cycles(&self) -> Option<NonZeroU32> {
        self.sample_period_cycles
    }

    pub fn min(&self) -> Millivolts {
        self.samples.iter().copied().min().unwrap_or(0)
    }

    pub fn max(&self) -> Millivolts {
        self.samples.iter().copied().max().unwrap_or(0)
    }
}

const PERIOD_KEY: &str = "sample_period_cycles";

/// Parses the trace CSV format:
///
/// ```text
/// # sample_period_cycles=25
/// index,millivolts
/// 0,3300
/// 1,2700
/// ```
///
/// The period comment is optional. Samples are taken in file order; the
/// index column must be an integer but is otherwise not interpreted.
pub fn load_trace_csv(source: &[u8]) -> Result<VoltageTrace, TraceError> {
    let text = std::str::from_utf8(source).map_err(|e| TraceError::Parse {
        line: 1 + source[..e.valid_up_to()].iter().filter(|&&b| b == b'\n').count(),
        reason: "input is not valid UTF-8".into(),
    })?;

    let mut period = None;
    for (i, raw) in text.lines().enumerate() {
        let Some(comment) = raw.trim().strip_prefix('#') else {
            continue;
        };
        if let Some((key, value)) = comment.split_once('=') {
            if key.trim() == PERIOD_KEY {
                let parsed = value
                    .trim()
                    .parse::<u32>()
                    .ok()
                    .and_then(NonZeroU32::new)
                    .ok_or_else(|| TraceError::Parse {
                        line: i + 1,
                        reason: format!("{PERIOD_KEY} must be a positive integer"),
                    })?;
                period = Some(parsed);
            }
        }
    }

    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .has_headers(true)
        .from_reader(text.as_bytes());

    let headers = reader.headers().map_err(|e| csv_error(&e))?.clone();
    if headers.len() != 2 || &headers[0] != "index" || &headers[1] != "millivolts" {
        let line = headers.position().map_or(1, |p| p.line() as usize);
        return Err(TraceError::Parse {
            line,
            reason: "expected header `index,millivolts`".into(),
        });
    }

    let mut samples = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(&e))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let field = |i: usize| record.get(i).unwrap_or("");
        field(0).parse::<u64>().map_err(|_| TraceError::Parse {
            line,
            reason: format!("index `{}` is not a non-negative integer", field(0)),
        })?;
        let mv = field(1).parse::<Millivolts>().map_err(|_| TraceError::Parse {
            line,
            reason: format!(
                "millivolts `{}` is not an integer in 0..=65535",
                field(1)
            ),
        })?;
        samples.push(mv);
    }

    Ok(VoltageTrace::new(samples)?.with_sample_period(period))
}

fn csv_error(e: &csv::Error) -> TraceError {
    let line = e.position().map_or(0, |p| p.line() as usize);
    TraceError::Parse {
        line,
        reason: e.to_string(),
    }
}

/// Renders a trace in the format accepted by [`load_trace_csv`].
pub fn to_csv(trace: &VoltageTrace) -> String {
    let mut out = String::new();
    if let Some(p) = trace.sample_period_cycles {
        out.push_str(&format!("# {PERIOD_KEY}={p}\n"));
    }
    out.push_str("index,millivolts\n");
    for (i, s) in trace.samples.iter().enumerate() {
        out.push_str(&format!("{i},{s}\n"));
    }
    out
}

/// Averages consecutive groups of `group_size` samples (round half up).
/// A trailing partial group is averaged over its own length.
pub fn downsample_mean(trace: &VoltageTrace, group_size: usize) -> Result<VoltageTrace, TraceError> {
    if group_size == 0 {
        return Err(TraceError::ZeroGroup);
    }
    let samples = trace
        .samples
        .chunks(group_size)
        .map(|group| {
            let n = group.len() as u64;
            let sum: u64 = group.iter().map(|&s| u64::from(s)).sum();
            // floor((2*sum + n) / 2n) == round-half-up(sum / n)
            ((2 * sum + n) / (2 * n)) as Millivolts
        })
        .collect();
    Ok(VoltageTrace {
        samples,
        sample_period_cycles: None,
    })
}

/// Parameters for the synthetic harvesting trace.
///
/// One period is: charge from `off_mv` up to `on_mv`, discharge back down to
/// `off_mv`, then hold at `off_mv` for `dwell_samples` samples. Each sample
/// gets uniform jitter in `[-jitter_mv, jitter_mv]` drawn from a ChaCha8
/// stream seeded with `jitter_seed`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceSynthParams {
    pub charge_rate_mv: u32,
    pub discharge_rate_mv: u32,
    pub on_mv: Millivolts,
    pub off_mv: Millivolts,
    pub dwell_samples: u32,
    pub jitter_mv: u16,
    pub jitter_seed: u64,
    pub length: usize,
}

impl TraceSynthParams {
    /// Raw (pre-averaging) trace used as the pinned regression baseline:
    /// 10,000 samples, roughly 75% of them below 2800 mV.
    pub fn baseline() -> Self {
        Self {
            charge_rate_mv: 20,
            discharge_rate_mv: 2,
            on_mv: 5100,
            off_mv: 600,
            dwell_samples: 2500,
            jitter_mv: 40,
            jitter_seed: 1,
            length: 10_000,
        }
    }

    fn validate(&self) -> Result<(), TraceError> {
        if self.off_mv >= self.on_mv {
            return Err(TraceError::InvalidSynth("off_mv must be below on_mv"));
        }
        if self.charge_rate_mv == 0 || self.discharge_rate_mv == 0 {
            return Err(TraceError::InvalidSynth("rates must be positive"));
        }
        if self.length == 0 {
            return Err(TraceError::InvalidSynth("length must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy)]
enum Phase {
    Charging,
    Discharging,
    Dwell(u32),
}

/// Deterministic sawtooth-like capacitor trace.
pub fn synth_harvest_trace(params: &TraceSynthParams) -> Result<VoltageTrace, TraceError> {
    params.validate()?;
    let on = i64::from(params.on_mv);
    let off = i64::from(params.off_mv);
    let jitter = i64::from(params.jitter_mv);
    let mut rng = ChaCha8Rng::seed_from_u64(params.jitter_seed);

    let mut v = off;
    let mut phase = Phase::Charging;
    let mut samples = Vec::with_capacity(params.length);
    for _ in 0..params.length {
        let noise = if jitter > 0 {
            rng.gen_range(-jitter..=jitter)
        } else {
            0
        };
        samples.push((v + noise).clamp(0, i64::from(Millivolts::MAX)) as Millivolts);

        phase = match phase {
            Phase::Charging => {
                v += i64::from(params.charge_rate_mv);
                if v >= on {
                    v = on;
                    Phase::Discharging
                } else {
                    Phase::Charging
                }
            }
            Phase::Discharging => {
                v -= i64::from(params.discharge_rate_mv);
                if v <= off {
                    v = off;
                    if params.dwell_samples == 0 {
                        Phase::Charging
                    } else {
                        Phase::Dwell(params.dwell_samples)
                    }
                } else {
                    Phase::Discharging
                }
            }
            Phase::Dwell(1) => Phase::Charging,
            Phase::Dwell(n) => Phase::Dwell(n - 1),
        };
    }
    VoltageTrace::new(samples)
}

/// Fraction of samples strictly below `threshold_mv`.
pub fn shutdown_fraction(trace: &VoltageTrace, threshold_mv: Millivolts) -> f64 {
    let below = trace.samples.iter().filter(|&&s| s < threshold_mv).count();
    below as f64 / trace.samples.len() as f64
}
