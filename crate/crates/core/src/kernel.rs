//! Clock-stepped simulation world.
//!
//! One call to [`World::step`] is one rising clock edge. Within a cycle the
//! blocks are evaluated in a fixed order: intermittency emulator, workload
//! and backup policy, NVR, energy approximator. The workload sees the NVR
//! outputs registered at the end of the previous cycle.

use std::sync::Arc;

use thiserror::Error;

use crate::energy::{EnergyError, EnergyLedger, Entity};
use crate::intermittency::{IeConfig, IeConfigError, IntermittencyEmulator};
use crate::nvmem::{Nvr, NvrConfig, NvrConfigError, NvrFault, NvrOutputs, NvrStats};
use crate::trace::{Millivolts, VoltageTrace};
use crate::workload::{
    check_nvr_geometry, latest_committed, BackupPolicy, Mode, Workload, WorkloadError, WorkloadEvent,
    WorkloadInputs, WorkloadStats,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClockConfig {
    pub frequency_hz: u64,
    pub total_cycles: u64,
}

impl ClockConfig {
    /// 100 MHz for 100 µs.
    pub fn baseline() -> Self {
        Self {
            frequency_hz: 100_000_000,
            total_cycles: 10_000,
        }
    }

    /// Simulated time covered by `cycles`, in picoseconds.
    pub fn cycles_to_ps(&self, cycles: u64) -> u128 {
        u128::from(cycles) * 1_000_000_000_000 / u128::from(self.frequency_hz)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ResetLines {
    pub hw_reset: bool,
    pub power_reset: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CycleCategory {
    Compute,
    Backup,
    Restore,
    Stall,
    Off,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CategoryCounts {
    pub compute: u64,
    pub backup: u64,
    pub restore: u64,
    pub stall: u64,
    pub off: u64,
}

impl CategoryCounts {
    pub fn record(&mut self, c: CycleCategory) {
        match c {
            CycleCategory::Compute => self.compute += 1,
            CycleCategory::Backup => self.backup += 1,
            CycleCategory::Restore => self.restore += 1,
            CycleCategory::Stall => self.stall += 1,
            CycleCategory::Off => self.off += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.compute + self.backup + self.restore + self.stall + self.off
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WorldError {
    #[error("frequency_hz must be positive")]
    ZeroFrequency,
    #[error(transparent)]
    Ie(#[from] IeConfigError),
    #[error(transparent)]
    Nvr(#[from] NvrConfigError),
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
}

/// Everything needed to build a world.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldSetup {
    pub clock: ClockConfig,
    pub ie: IeConfig,
    pub trace: Arc<VoltageTrace>,
    pub nvr: NvrConfig,
    pub roster: Vec<(Entity, u64)>,
    pub sample_interval: u64,
    pub policy: BackupPolicy,
    pub initial_values: [u32; 3],
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimReport {
    pub cycles: u64,
    pub simulated_time_ps: u128,
    /// Live counter values at the end of the run (zero while off).
    pub counter_values: [u32; 3],
    /// Counter 1 progress: the live value if the device ended up running,
    /// otherwise the value in the newest committed snapshot.
    pub counter1_val: u32,
    pub final_mode: Mode,
    pub entity_energy_fj: Vec<(Entity, u128)>,
    /// Emulated architecture: the counters and the backup logic.
    pub counters_energy_fj: u128,
    /// The framework itself: NVR and intermittency emulator.
    pub norm_energy_fj: u128,
    pub categories: CategoryCounts,
    /// Powered cycles whose sample is at or above the dynamic-policy
    /// threshold. Zero for the other policies.
    pub compute_eligible_cycles: u64,
    pub workload: WorkloadStats,
    pub nvr: NvrStats,
    pub fault: Option<NvrFault>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct World {
    clock: ClockConfig,
    cycle: u64,
    lines: ResetLines,
    force_power_reset: Option<bool>,
    ie: IntermittencyEmulator,
    workload: Workload,
    nvr: Nvr,
    nvr_out: NvrOutputs,
    ledger: EnergyLedger,
    activity: Vec<bool>,
    categories: CategoryCounts,
    eligible_threshold: Option<Millivolts>,
    compute_eligible: u64,
    last_sample: Option<Millivolts>,
    fault: Option<NvrFault>,
}

impl World {
    pub fn new(setup: WorldSetup) -> Result<Self, WorldError> {
        if setup.clock.frequency_hz == 0 {
            return Err(WorldError::ZeroFrequency);
        }
        check_nvr_geometry(setup.nvr.depth, setup.nvr.word_bits)?;
        let ie = IntermittencyEmulator::new(setup.ie, setup.trace)?;
        let nvr = Nvr::new(setup.nvr, setup.clock.frequency_hz)?;
        let ledger = EnergyLedger::new(&setup.roster, setup.sample_interval)?;
        let eligible_threshold = match setup.policy {
            BackupPolicy::Dynamic { threshold_mv, .. } => Some(threshold_mv),
            _ => None,
        };
        let workload = Workload::new(setup.policy, setup.initial_values)?;
        Ok(Self {
            clock: setup.clock,
            cycle: 0,
            lines: ResetLines::default(),
            force_power_reset: None,
            ie,
            workload,
            nvr,
            nvr_out: NvrOutputs::default(),
            activity: vec![false; setup.roster.len()],
            ledger,
            categories: CategoryCounts::default(),
            eligible_threshold,
            compute_eligible: 0,
            last_sample: None,
            fault: None,
        })
    }

    pub fn clock(&self) -> ClockConfig {
        self.clock
    }

    pub fn cycle(&self) -> u64 {
        self.cycle
    }

    pub fn is_halted(&self) -> bool {
        self.fault.is_some()
    }

    pub fn ie(&self) -> &IntermittencyEmulator {
        &self.ie
    }

    pub fn workload(&self) -> &Workload {
        &self.workload
    }

    pub fn nvr(&self) -> &Nvr {
        &self.nvr
    }

    pub fn nvr_outputs(&self) -> NvrOutputs {
        self.nvr_out
    }

    pub fn ledger(&self) -> &EnergyLedger {
        &self.ledger
    }

    pub fn categories(&self) -> CategoryCounts {
        self.categories
    }

    /// Trace sample seen by the intermittency emulator on the last cycle.
    pub fn last_sample_mv(&self) -> Option<Millivolts> {
        self.last_sample
    }

    /// Drives the FPGA-level reset line for the following cycles.
    pub fn set_hw_reset(&mut self, on: bool) {
        self.lines.hw_reset = on;
    }

    /// Overrides the emulator's `power_reset` output (`None` releases it).
    pub fn force_power_reset(&mut self, value: Option<bool>) {
        self.force_power_reset = value;
    }

    pub fn record_events(&mut self, on: bool) {
        self.workload.record_events(on);
    }

    pub fn take_events(&mut self) -> Vec<WorkloadEvent> {
        self.workload.take_events()
    }

    /// Reset lines as seen during the last cycle.
    pub fn reset_lines(&self) -> ResetLines {
        self.lines
    }

    pub fn step(&mut self) {
        if self.is_halted() {
            return;
        }

        // intermittency
        let (power_reset, comp) = if self.lines.hw_reset {
            self.ie.reset();
            self.last_sample = None;
            (true, Vec::new())
        } else {
            let out = self.ie.step();
            self.last_sample = Some(out.sample_mv);
            let pr = self.force_power_reset.unwrap_or(out.power_reset);
            (pr, out.threshold_comp)
        };
        self.lines.power_reset = power_reset;

        // workload and backup policy
        if self.lines.hw_reset {
            self.workload.hw_reset();
        }
        let w = self.workload.step(&WorkloadInputs {
            power_reset,
            threshold_comp: &comp,
            nvr: self.nvr_out,
            cycle: self.cycle,
        });

        // nvr
        let mut req = w.nvr;
        req.reset = self.lines.hw_reset;
        req.power_reset = power_reset;
        match self.nvr.step(&req) {
            Ok(out) => self.nvr_out = out,
            Err(fault) => {
                self.fault = Some(fault);
                return;
            }
        }

        // energy
        let powered = !power_reset;
        for (slot, &entity) in self.activity.iter_mut().zip(self.ledger.entities()) {
            *slot = match entity {
                Entity::Counter1 => w.serviced_counter == Some(0),
                Entity::Counter2 => w.serviced_counter == Some(1),
                Entity::Counter3 => w.serviced_counter == Some(2),
                Entity::BackupLogic => powered,
                Entity::Nvr => self.nvr_out.active,
                Entity::Ie => true,
            };
        }
        self.ledger
            .ea_step(&self.activity)
            .expect("activity mask is sized from the roster");

        self.categories.record(w.category);
        if let (Some(t), Some(s)) = (self.eligible_threshold, self.last_sample) {
            if powered && s >= t {
                self.compute_eligible += 1;
            }
        }
        self.cycle += 1;
        if self.cycle.is_multiple_of(self.ledger.sample_interval()) {
            self.ledger.sample_and_reset();
        }
    }

    /// Steps `cycles` times (fewer if the world halts) and reports.
    pub fn run(&mut self, cycles: u64) -> SimReport {
        for _ in 0..cycles {
            if self.is_halted() {
                break;
            }
            self.step();
        }
        self.report()
    }

    pub fn report(&self) -> SimReport {
        let entity_energy_fj = self.ledger.totals();
        let sum = |framework: bool| -> u128 {
            entity_energy_fj
                .iter()
                .filter(|(e, _)| e.is_framework() == framework)
                .map(|&(_, v)| v)
                .sum()
        };
        let mode = self.workload.mode();
        let counter1_val = match mode {
            Mode::Computing | Mode::BackingUp | Mode::Stalled => self.workload.counters().counter1(),
            Mode::Off | Mode::Recovering => latest_committed(self.nvr.words())
                .map(|(_, s)| s.values[0])
                .unwrap_or(self.workload.counters().initial_values()[0]),
        };
        SimReport {
            cycles: self.cycle,
            simulated_time_ps: self.clock.cycles_to_ps(self.cycle),
            counter_values: self.workload.counters().values(),
            counter1_val,
            final_mode: mode,
            counters_energy_fj: sum(false),
            norm_energy_fj: sum(true),
            entity_energy_fj,
            categories: self.categories,
            compute_eligible_cycles: self.compute_eligible,
            workload: self.workload.stats(),
            nvr: self.nvr.stats(),
            fault: self.fault.clone(),
        }
    }
}
