//! Backup policies: dynamic (voltage threshold), constant-time (periodic)
//! and task-based (progress milestone).

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::trace::Millivolts;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PolicyKind {
    Dbp,
    Cbp,
    Tbp,
}

impl PolicyKind {
    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Dbp => "dbp",
            PolicyKind::Cbp => "cbp",
            PolicyKind::Tbp => "tbp",
        }
    }

    /// Default sweep range `(start, stop, step)`, inclusive.
    pub fn default_sweep(self) -> (u64, u64, u64) {
        match self {
            PolicyKind::Dbp => (3000, 5010, 10),
            PolicyKind::Cbp => (2, 398, 2),
            PolicyKind::Tbp => (1, 55, 1),
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PolicyError {
    #[error("unknown policy `{0}`; valid: dbp, cbp, tbp")]
    Unknown(String),
    #[error("{0}")]
    Invalid(String),
}

impl FromStr for PolicyKind {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "dbp" => Ok(PolicyKind::Dbp),
            "cbp" => Ok(PolicyKind::Cbp),
            "tbp" => Ok(PolicyKind::Tbp),
            _ => Err(PolicyError::Unknown(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackupPolicy {
    /// Back up when the voltage falls below `threshold_mv`, read from
    /// comparator bit `comp_index` of the intermittency emulator.
    Dynamic {
        threshold_mv: Millivolts,
        comp_index: usize,
        /// Hold off computing while below the threshold after a backup.
        stall_below: bool,
    },
    /// Back up every `period_cycles` powered cycles.
    Constant { period_cycles: u64 },
    /// Back up whenever counter 1 reaches a multiple of `task_count`.
    Task { task_count: u32 },
}

impl BackupPolicy {
    pub fn kind(&self) -> PolicyKind {
        match self {
            BackupPolicy::Dynamic { .. } => PolicyKind::Dbp,
            BackupPolicy::Constant { .. } => PolicyKind::Cbp,
            BackupPolicy::Task { .. } => PolicyKind::Tbp,
        }
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        match *self {
            BackupPolicy::Constant { period_cycles: 0 } => {
                Err(PolicyError::Invalid("cbp period must be at least one cycle".into()))
            }
            BackupPolicy::Task { task_count: 0 } => {
                Err(PolicyError::Invalid("tbp_task_count must be at least 1".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Converts a period in microseconds to clock cycles (at least one).
pub fn period_us_to_cycles(period_us: u64, clock_hz: u64) -> u64 {
    let cycles = u128::from(period_us) * u128::from(clock_hz) / 1_000_000;
    cycles.clamp(1, u128::from(u64::MAX)) as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Off,
    Recovering,
    Computing,
    BackingUp,
    Stalled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyAction {
    Compute,
    StartBackup,
    StartRecovery,
    Stall,
    None,
}

#[derive(Debug, Clone, Copy)]
pub struct PolicyInputs<'a> {
    pub threshold_comp: &'a [bool],
    pub power_reset: bool,
    pub counter1: u32,
    pub cycle: u64,
}

/// Volatile state of the backup logic. Everything here except the live
/// snapshot pointer is cleared on power failure; the pointer is rebuilt by
/// recovery.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicyState {
    pub mode: Mode,
    /// Cycles until the constant-time timer fires.
    pub timer: u64,
    pub backup_due: bool,
    pub last_backup_counter1: u32,
    /// Dynamic policy: the current below-threshold episode needs no backup.
    pub hazard_handled: bool,
    /// Half of the double buffer holding the newest committed snapshot.
    pub live_half: usize,
    pub live_seq: u32,
}

impl PolicyState {
    pub fn new(policy: &BackupPolicy) -> Self {
        Self {
            mode: Mode::Off,
            timer: reload(policy),
            backup_due: false,
            last_backup_counter1: 0,
            hazard_handled: false,
            live_half: 1,
            live_seq: 0,
        }
    }

    pub fn power_off(&mut self, policy: &BackupPolicy) {
        *self = Self::new(policy);
    }
}

fn reload(policy: &BackupPolicy) -> u64 {
    match policy {
        BackupPolicy::Constant { period_cycles } => *period_cycles,
        _ => 0,
    }
}

fn below_backup_threshold(policy: &BackupPolicy, inputs: &PolicyInputs<'_>) -> bool {
    match policy {
        BackupPolicy::Dynamic { comp_index, .. } => {
            inputs.threshold_comp.get(*comp_index).copied().unwrap_or(false)
        }
        _ => false,
    }
}

/// Advances the constant-time timer. Called once per powered cycle.
pub fn policy_tick(policy: &BackupPolicy, state: &mut PolicyState) {
    if let BackupPolicy::Constant { period_cycles } = policy {
        state.timer = state.timer.saturating_sub(1);
        if state.timer == 0 {
            state.backup_due = true;
            state.timer = *period_cycles;
        }
    }
}

/// Decides what the backup logic does this cycle given its current mode.
/// Does not change `mode`; the caller applies the action.
pub fn policy_step(policy: &BackupPolicy, state: &mut PolicyState, inputs: &PolicyInputs<'_>) -> PolicyAction {
    if inputs.power_reset {
        return PolicyAction::None;
    }
    match state.mode {
        Mode::Off => return PolicyAction::StartRecovery,
        Mode::Recovering | Mode::BackingUp => return PolicyAction::None,
        Mode::Computing | Mode::Stalled => {}
    }

    match *policy {
        BackupPolicy::Dynamic { stall_below, .. } => {
            if !below_backup_threshold(policy, inputs) {
                state.hazard_handled = false;
                PolicyAction::Compute
            } else if !state.hazard_handled {
                PolicyAction::StartBackup
            } else if stall_below {
                PolicyAction::Stall
            } else {
                PolicyAction::Compute
            }
        }
        BackupPolicy::Constant { .. } => {
            if state.backup_due {
                state.backup_due = false;
                PolicyAction::StartBackup
            } else {
                PolicyAction::Compute
            }
        }
        BackupPolicy::Task { task_count } => {
            let c = inputs.counter1;
            if c.is_multiple_of(task_count) && c != state.last_backup_counter1 {
                state.last_backup_counter1 = c;
                PolicyAction::StartBackup
            } else {
                PolicyAction::Compute
            }
        }
    }
}

/// Mode to enter once recovery has loaded `counter1`.
pub fn after_recovery(policy: &BackupPolicy, state: &mut PolicyState, inputs: &PolicyInputs<'_>) -> Mode {
    state.last_backup_counter1 = inputs.counter1;
    after_save(policy, state, inputs)
}

/// Mode to enter once a backup has committed.
pub fn after_backup(policy: &BackupPolicy, state: &mut PolicyState, inputs: &PolicyInputs<'_>) -> Mode {
    after_save(policy, state, inputs)
}

// The volatile state now matches the newest snapshot.
fn after_save(policy: &BackupPolicy, state: &mut PolicyState, inputs: &PolicyInputs<'_>) -> Mode {
    match *policy {
        BackupPolicy::Dynamic { stall_below, .. } => {
            let below = below_backup_threshold(policy, inputs);
            state.hazard_handled = below;
            if below && stall_below {
                Mode::Stalled
            } else {
                Mode::Computing
            }
        }
        _ => Mode::Computing,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inputs(comp: &[bool], counter1: u32) -> PolicyInputs<'_> {
        PolicyInputs {
            threshold_comp: comp,
            power_reset: false,
            counter1,
            cycle: 0,
        }
    }

    fn dbp() -> BackupPolicy {
        BackupPolicy::Dynamic { threshold_mv: 3040, comp_index: 1, stall_below: true }
    }

    #[test]
    fn dbp_backs_up_when_voltage_drops() {
        let p = dbp();
        let mut st = PolicyState::new(&p);
        st.mode = Mode::Computing;
        // 3000 mV against [2800, 3040]: not off, but below the backup threshold
        assert_eq!(policy_step(&p, &mut st, &inputs(&[false, true], 0)), PolicyAction::StartBackup);
        st.mode = Mode::BackingUp;
        assert_eq!(after_backup(&p, &mut st, &inputs(&[false, true], 0)), Mode::Stalled);
        st.mode = Mode::Stalled;
        assert_eq!(policy_step(&p, &mut st, &inputs(&[false, true], 0)), PolicyAction::Stall);
        assert_eq!(policy_step(&p, &mut st, &inputs(&[false, false], 0)), PolicyAction::Compute);
    }

    #[test]
    fn dbp_without_stall_keeps_computing_after_one_backup() {
        let p = BackupPolicy::Dynamic { threshold_mv: 3040, comp_index: 1, stall_below: false };
        let mut st = PolicyState::new(&p);
        st.mode = Mode::BackingUp;
        assert_eq!(after_backup(&p, &mut st, &inputs(&[false, true], 0)), Mode::Computing);
        st.mode = Mode::Computing;
        assert_eq!(policy_step(&p, &mut st, &inputs(&[false, true], 0)), PolicyAction::Compute);
        assert_eq!(policy_step(&p, &mut st, &inputs(&[false, false], 0)), PolicyAction::Compute);
        assert_eq!(policy_step(&p, &mut st, &inputs(&[false, true], 0)), PolicyAction::StartBackup);
    }

    #[test]
    fn dbp_after_recovery_below_threshold_stalls_without_backup() {
        let p = dbp();
        let mut st = PolicyState::new(&p);
        st.mode = Mode::Recovering;
        assert_eq!(after_recovery(&p, &mut st, &inputs(&[false, true], 5)), Mode::Stalled);
    }

    #[test]
    fn cbp_fires_every_period() {
        let p = BackupPolicy::Constant { period_cycles: period_us_to_cycles(2, 100_000_000) };
        assert_eq!(p, BackupPolicy::Constant { period_cycles: 200 });
        let mut st = PolicyState::new(&p);
        st.mode = Mode::Computing;
        let mut fired = Vec::new();
        for cycle in 0..600u64 {
            policy_tick(&p, &mut st);
            if policy_step(&p, &mut st, &inputs(&[], 0)) == PolicyAction::StartBackup {
                fired.push(cycle);
            }
        }
        assert_eq!(fired, vec![199, 399, 599]);
    }

    #[test]
    fn tbp_backs_up_on_multiples_once() {
        let p = BackupPolicy::Task { task_count: 5 };
        let mut st = PolicyState::new(&p);
        st.mode = Mode::Computing;
        assert_eq!(policy_step(&p, &mut st, &inputs(&[], 4)), PolicyAction::Compute);
        assert_eq!(policy_step(&p, &mut st, &inputs(&[], 5)), PolicyAction::StartBackup);
        assert_eq!(policy_step(&p, &mut st, &inputs(&[], 5)), PolicyAction::Compute);
        // cold start at zero never triggers
        let mut fresh = PolicyState::new(&p);
        fresh.mode = Mode::Computing;
        assert_eq!(policy_step(&p, &mut fresh, &inputs(&[], 0)), PolicyAction::Compute);
    }

    #[test]
    fn off_always_recovers_first() {
        for p in [dbp(), BackupPolicy::Constant { period_cycles: 10 }, BackupPolicy::Task { task_count: 3 }] {
            let mut st = PolicyState::new(&p);
            assert_eq!(policy_step(&p, &mut st, &inputs(&[false, false], 0)), PolicyAction::StartRecovery);
        }
    }

    #[test]
    fn parse_and_validate() {
        assert_eq!("TBP".parse::<PolicyKind>().unwrap(), PolicyKind::Tbp);
        assert!("xbp".parse::<PolicyKind>().is_err());
        assert!(BackupPolicy::Task { task_count: 0 }.validate().is_err());
        assert!(BackupPolicy::Constant { period_cycles: 0 }.validate().is_err());
        assert_eq!(period_us_to_cycles(0, 100), 1);
    }
}
