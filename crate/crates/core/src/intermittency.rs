//! Intermittency emulator (IE).
//!
//! A prescaled counter walks the trace ROM, the current sample is compared
//! against every configured threshold, and the selected comparator drives
//! `power_reset`. With a wake-up threshold configured the selected output
//! goes through a hysteresis latch instead: the device turns off below the
//! reset threshold and only turns back on once the sample reaches the
//! wake-up threshold.

use std::sync::Arc;

use thiserror::Error;

use crate::trace::{Millivolts, VoltageTrace};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IeConfigError {
    #[error("thresholds_mv must not be empty")]
    NoThresholds,
    #[error("select_threshold {select} out of range for {count} thresholds")]
    SelectOutOfRange { select: usize, count: usize },
    #[error("prescale must be at least 1")]
    ZeroPrescale,
    #[error("wakeup_mv {wakeup} is below the selected reset threshold {reset}")]
    WakeupBelowReset { wakeup: Millivolts, reset: Millivolts },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IeConfig {
    pub thresholds_mv: Vec<Millivolts>,
    pub select_threshold: usize,
    pub prescale: u32,
    pub wakeup_threshold_mv: Option<Millivolts>,
}

impl IeConfig {
    pub fn single(threshold_mv: Millivolts, prescale: u32) -> Self {
        Self {
            thresholds_mv: vec![threshold_mv],
            select_threshold: 0,
            prescale,
            wakeup_threshold_mv: None,
        }
    }

    pub fn validate(&self) -> Result<(), IeConfigError> {
        if self.thresholds_mv.is_empty() {
            return Err(IeConfigError::NoThresholds);
        }
        let Some(&reset) = self.thresholds_mv.get(self.select_threshold) else {
            return Err(IeConfigError::SelectOutOfRange {
                select: self.select_threshold,
                count: self.thresholds_mv.len(),
            });
        };
        if self.prescale == 0 {
            return Err(IeConfigError::ZeroPrescale);
        }
        if let Some(wakeup) = self.wakeup_threshold_mv {
            if wakeup < reset {
                return Err(IeConfigError::WakeupBelowReset { wakeup, reset });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IeState {
    pub rom_index: usize,
    pub divider_count: u32,
    pub latched_off: bool,
}

impl Default for IeState {
    fn default() -> Self {
        // A device with hysteresis starts discharged and waits for wake-up.
        Self {
            rom_index: 0,
            divider_count: 0,
            latched_off: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IeOutputs {
    pub power_reset: bool,
    /// Bit `i` is set when the current sample is below `thresholds_mv[i]`.
    pub threshold_comp: Vec<bool>,
    pub sample_mv: Millivolts,
}

/// Advances the emulator by one clock cycle. Outputs reflect the sample the
/// ROM counter points at during this cycle; the counters then advance.
pub fn ie_step(state: &mut IeState, config: &IeConfig, trace: &VoltageTrace) -> IeOutputs {
    let sample = trace.samples()[state.rom_index];
    let threshold_comp: Vec<bool> = config.thresholds_mv.iter().map(|&t| sample < t).collect();
    let selected = threshold_comp[config.select_threshold];

    let power_reset = match config.wakeup_threshold_mv {
        None => selected,
        Some(wakeup) => {
            if selected {
                state.latched_off = true;
            } else if sample >= wakeup {
                state.latched_off = false;
            }
            state.latched_off
        }
    };

    state.divider_count += 1;
    if state.divider_count >= config.prescale {
        state.divider_count = 0;
        state.rom_index = (state.rom_index + 1) % trace.len();
    }

    IeOutputs {
        power_reset,
        threshold_comp,
        sample_mv: sample,
    }
}

/// Cycles per sample so that one pass over the trace spans about `total_cycles`.
pub fn default_prescale(trace_len: usize, total_cycles: u64) -> u32 {
    let per = total_cycles / trace_len.max(1) as u64;
    per.clamp(1, u64::from(u32::MAX)) as u32
}

/// The IE block as owned by a simulation world.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntermittencyEmulator {
    config: IeConfig,
    state: IeState,
    trace: Arc<VoltageTrace>,
}

impl IntermittencyEmulator {
    pub fn new(config: IeConfig, trace: Arc<VoltageTrace>) -> Result<Self, IeConfigError> {
        config.validate()?;
        Ok(Self {
            config,
            state: IeState::default(),
            trace,
        })
    }

    pub fn step(&mut self) -> IeOutputs {
        ie_step(&mut self.state, &self.config, &self.trace)
    }

    /// FPGA-level reset: the ROM counter and prescaler start over.
    pub fn reset(&mut self) {
        self.state = IeState::default();
    }

    pub fn config(&self) -> &IeConfig {
        &self.config
    }

    pub fn state(&self) -> &IeState {
        &self.state
    }

    pub fn trace(&self) -> &Arc<VoltageTrace> {
        &self.trace
    }
}
