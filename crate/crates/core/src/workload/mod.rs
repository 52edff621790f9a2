//! The emulated volatile architecture: three counters plus the backup logic
//! that saves them to the NVR and restores them after a power failure.

pub mod counters;
pub mod policy;
pub mod snapshot;

use thiserror::Error;

use crate::kernel::CycleCategory;
use crate::nvmem::{NvrInputs, NvrOutputs};

pub use counters::{CountersState, MicroStep, ROUND_CYCLES, SLOT_CYCLES};
pub use policy::{
    after_backup, after_recovery, period_us_to_cycles, policy_step, policy_tick, BackupPolicy, Mode,
    PolicyAction, PolicyError, PolicyInputs, PolicyKind, PolicyState,
};
pub use snapshot::{latest_committed, BackupProcedure, RecoverProcedure, Snapshot, REQUIRED_DEPTH};

use snapshot::{BackupStep, RecoverStep};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WorkloadError {
    #[error("nvr_depth must be at least {need} words to hold two snapshots, got {got}")]
    NvrTooShallow { need: usize, got: usize },
    #[error("nvr_word_bits must be at least 32 to hold a counter, got {0}")]
    NvrTooNarrow(u32),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

/// Checks that an NVR geometry can hold the snapshot layout.
pub fn check_nvr_geometry(depth: usize, word_bits: u32) -> Result<(), WorkloadError> {
    if depth < REQUIRED_DEPTH {
        return Err(WorkloadError::NvrTooShallow {
            need: REQUIRED_DEPTH,
            got: depth,
        });
    }
    if word_bits < 32 {
        return Err(WorkloadError::NvrTooNarrow(word_bits));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WorkloadEvent {
    BackupStarted { cycle: u64, seq: u32, values: [u32; 3] },
    CommitIssued { cycle: u64, seq: u32 },
    Recovered { cycle: u64, seq: u32, values: [u32; 3] },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WorkloadInputs<'a> {
    pub power_reset: bool,
    pub threshold_comp: &'a [bool],
    /// NVR outputs from the previous cycle.
    pub nvr: NvrOutputs,
    pub cycle: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WorkloadOutputs {
    /// NVR request lines (`reset` and `power_reset` are left low; the
    /// world drives those).
    pub nvr: NvrInputs,
    pub category: CycleCategory,
    /// Counter whose FSM slot ran this cycle.
    pub serviced_counter: Option<usize>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WorkloadStats {
    pub backups_started: u64,
    pub backups_committed: u64,
    pub backups_completed: u64,
    pub recoveries_started: u64,
    pub recoveries_completed: u64,
    pub cold_starts: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Procedure {
    None,
    Backup(BackupProcedure),
    Recover(RecoverProcedure),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Workload {
    policy: BackupPolicy,
    counters: CountersState,
    state: PolicyState,
    procedure: Procedure,
    stats: WorkloadStats,
    events: Option<Vec<WorkloadEvent>>,
}

impl Workload {
    pub fn new(policy: BackupPolicy, initial_values: [u32; 3]) -> Result<Self, WorkloadError> {
        policy.validate()?;
        Ok(Self {
            state: PolicyState::new(&policy),
            policy,
            counters: CountersState::new(initial_values),
            procedure: Procedure::None,
            stats: WorkloadStats::default(),
            events: None,
        })
    }

    pub fn policy(&self) -> &BackupPolicy {
        &self.policy
    }

    pub fn counters(&self) -> &CountersState {
        &self.counters
    }

    pub fn policy_state(&self) -> &PolicyState {
        &self.state
    }

    pub fn mode(&self) -> Mode {
        self.state.mode
    }

    pub fn stats(&self) -> WorkloadStats {
        self.stats
    }

    pub fn record_events(&mut self, on: bool) {
        self.events = on.then(Vec::new);
    }

    pub fn take_events(&mut self) -> Vec<WorkloadEvent> {
        self.events.as_mut().map(std::mem::take).unwrap_or_default()
    }

    fn log(&mut self, event: WorkloadEvent) {
        if let Some(events) = &mut self.events {
            events.push(event);
        }
    }

    /// FPGA reset: back to the power-up state, statistics included.
    pub fn hw_reset(&mut self) {
        let recording = self.events.is_some();
        *self = Self {
            state: PolicyState::new(&self.policy),
            counters: CountersState::new(self.counters.initial_values()),
            policy: self.policy.clone(),
            procedure: Procedure::None,
            stats: WorkloadStats::default(),
            events: None,
        };
        self.record_events(recording);
    }

    fn power_off(&mut self) {
        self.counters.clear();
        self.state.power_off(&self.policy);
        self.procedure = Procedure::None;
    }

    pub fn step(&mut self, inputs: &WorkloadInputs<'_>) -> WorkloadOutputs {
        if inputs.power_reset {
            self.power_off();
            return WorkloadOutputs {
                nvr: NvrInputs::idle(),
                category: CycleCategory::Off,
                serviced_counter: None,
            };
        }

        policy_tick(&self.policy, &mut self.state);
        let prev = inputs.nvr;

        if self.state.mode == Mode::Off {
            self.state.mode = Mode::Recovering;
            self.procedure = Procedure::Recover(RecoverProcedure::new());
            self.stats.recoveries_started += 1;
        }

        if let Procedure::Recover(proc) = &mut self.procedure {
            match proc.advance(&prev) {
                RecoverStep::Pending(req) => return busy(req, CycleCategory::Restore),
                RecoverStep::Done(found) => {
                    self.procedure = Procedure::None;
                    self.stats.recoveries_completed += 1;
                    let (seq, values) = match found {
                        Some((half, snap)) => {
                            self.state.live_half = half;
                            self.state.live_seq = snap.seq;
                            (snap.seq, snap.values)
                        }
                        None => {
                            self.stats.cold_starts += 1;
                            (0, self.counters.initial_values())
                        }
                    };
                    self.counters.load(values);
                    self.log(WorkloadEvent::Recovered {
                        cycle: inputs.cycle,
                        seq,
                        values,
                    });
                    let pin = self.policy_inputs(inputs);
                    self.state.mode = after_recovery(&self.policy, &mut self.state, &pin);
                }
            }
        }

        if let Procedure::Backup(proc) = &mut self.procedure {
            match proc.advance(&prev) {
                BackupStep::Pending { inputs: req, commit } => {
                    if commit {
                        let seq = proc.snapshot().seq;
                        self.stats.backups_committed += 1;
                        self.log(WorkloadEvent::CommitIssued { cycle: inputs.cycle, seq });
                    }
                    return busy(req, CycleCategory::Backup);
                }
                BackupStep::Done => {
                    let half = proc.target_half();
                    let seq = proc.snapshot().seq;
                    self.procedure = Procedure::None;
                    self.state.live_half = half;
                    self.state.live_seq = seq;
                    self.stats.backups_completed += 1;
                    let pin = self.policy_inputs(inputs);
                    self.state.mode = after_backup(&self.policy, &mut self.state, &pin);
                }
            }
        }

        let pin = self.policy_inputs(inputs);
        match policy_step(&self.policy, &mut self.state, &pin) {
            PolicyAction::StartBackup => self.start_backup(inputs),
            PolicyAction::Stall => {
                self.state.mode = Mode::Stalled;
                WorkloadOutputs {
                    nvr: NvrInputs::idle(),
                    category: CycleCategory::Stall,
                    serviced_counter: None,
                }
            }
            // Recovery and backup were handled above.
            PolicyAction::Compute | PolicyAction::StartRecovery | PolicyAction::None => {
                self.state.mode = Mode::Computing;
                let serviced = self.counters.step(true);
                WorkloadOutputs {
                    nvr: NvrInputs::idle(),
                    category: CycleCategory::Compute,
                    serviced_counter: serviced,
                }
            }
        }
    }

    fn start_backup(&mut self, inputs: &WorkloadInputs<'_>) -> WorkloadOutputs {
        let snap = Snapshot {
            seq: self.state.live_seq.wrapping_add(1).max(1),
            values: self.counters.values(),
        };
        self.stats.backups_started += 1;
        self.log(WorkloadEvent::BackupStarted {
            cycle: inputs.cycle,
            seq: snap.seq,
            values: snap.values,
        });
        self.state.mode = Mode::BackingUp;
        let mut proc = BackupProcedure::new(1 - self.state.live_half, snap);
        let out = match proc.advance(&inputs.nvr) {
            BackupStep::Pending { inputs: req, .. } => busy(req, CycleCategory::Backup),
            BackupStep::Done => unreachable!("a backup always writes at least one word"),
        };
        self.procedure = Procedure::Backup(proc);
        out
    }

    fn policy_inputs<'a>(&self, inputs: &WorkloadInputs<'a>) -> PolicyInputs<'a> {
        PolicyInputs {
            threshold_comp: inputs.threshold_comp,
            power_reset: inputs.power_reset,
            counter1: self.counters.counter1(),
            cycle: inputs.cycle,
        }
    }
}

fn busy(req: NvrInputs, category: CycleCategory) -> WorkloadOutputs {
    WorkloadOutputs {
        nvr: req,
        category,
        serviced_counter: None,
    }
}
