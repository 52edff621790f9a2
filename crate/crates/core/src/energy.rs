//! Activity-counter energy approximation.
//!
//! Every tracked entity has a 32-bit counter that increments on each cycle
//! the entity is active, and a constant energy-per-cycle (E3C) in
//! femtojoules. Energy is `count × e3c`. Counters are folded into a 128-bit
//! running total every `sample_interval` cycles so they never overflow;
//! with integer arithmetic the folding is lossless.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Counter width of the activity counters.
pub const COUNTER_BITS: u32 = 32;
/// Default sampling interval, well inside the counter range.
pub const DEFAULT_SAMPLE_INTERVAL: u64 = 1 << 16;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EnergyError {
    #[error("entity index {index} out of range for {count} entities")]
    IndexOutOfRange { index: usize, count: usize },
    #[error("activity mask has {got} bits, ledger tracks {expected} entities")]
    MaskWidth { got: usize, expected: usize },
    #[error("sample interval must be in 1..={max}, got {got}")]
    SampleInterval { got: u64, max: u64 },
    #[error("unknown entity `{0}`; valid: counter1, counter2, counter3, backup_logic, nvr, ie")]
    UnknownEntity(String),
    #[error("entity `{0}` listed twice")]
    DuplicateEntity(String),
}

/// Blocks that can carry an activity counter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Entity {
    Counter1,
    Counter2,
    Counter3,
    BackupLogic,
    Nvr,
    Ie,
}

impl Entity {
    pub const ALL: [Entity; 6] = [
        Entity::Counter1,
        Entity::Counter2,
        Entity::Counter3,
        Entity::BackupLogic,
        Entity::Nvr,
        Entity::Ie,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Entity::Counter1 => "counter1",
            Entity::Counter2 => "counter2",
            Entity::Counter3 => "counter3",
            Entity::BackupLogic => "backup_logic",
            Entity::Nvr => "nvr",
            Entity::Ie => "ie",
        }
    }

    /// True for the emulation framework's own blocks, false for the
    /// emulated volatile architecture.
    pub fn is_framework(self) -> bool {
        matches!(self, Entity::Nvr | Entity::Ie)
    }
}

impl fmt::Display for Entity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Entity {
    type Err = EnergyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Entity::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| EnergyError::UnknownEntity(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IecResult {
    pub energy_fj: u128,
    pub evaluation_ready: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnergyLedger {
    entities: Vec<Entity>,
    counters: Vec<u32>,
    e3c_fj: Vec<u64>,
    accumulated_fj: Vec<u128>,
    sample_interval: u64,
}

impl EnergyLedger {
    /// `roster` pairs each tracked entity with its energy per active cycle.
    pub fn new(roster: &[(Entity, u64)], sample_interval: u64) -> Result<Self, EnergyError> {
        let max = (1u64 << COUNTER_BITS) - 1;
        if sample_interval == 0 || sample_interval > max {
            return Err(EnergyError::SampleInterval {
                got: sample_interval,
                max,
            });
        }
        for (i, (e, _)) in roster.iter().enumerate() {
            if roster[..i].iter().any(|(other, _)| other == e) {
                return Err(EnergyError::DuplicateEntity(e.name().to_string()));
            }
        }
        Ok(Self {
            entities: roster.iter().map(|&(e, _)| e).collect(),
            counters: vec![0; roster.len()],
            e3c_fj: roster.iter().map(|&(_, v)| v).collect(),
            accumulated_fj: vec![0; roster.len()],
            sample_interval,
        })
    }

    pub fn entities(&self) -> &[Entity] {
        &self.entities
    }

    pub fn index_of(&self, entity: Entity) -> Option<usize> {
        self.entities.iter().position(|&e| e == entity)
    }

    pub fn counters(&self) -> &[u32] {
        &self.counters
    }

    pub fn e3c_fj(&self) -> &[u64] {
        &self.e3c_fj
    }

    pub fn accumulated_fj(&self) -> &[u128] {
        &self.accumulated_fj
    }

    pub fn sample_interval(&self) -> u64 {
        self.sample_interval
    }

    /// One clock of the activity counters.
    pub fn ea_step(&mut self, active_mask: &[bool]) -> Result<(), EnergyError> {
        if active_mask.len() != self.counters.len() {
            return Err(EnergyError::MaskWidth {
                got: active_mask.len(),
                expected: self.counters.len(),
            });
        }
        for (c, &on) in self.counters.iter_mut().zip(active_mask) {
            *c += u32::from(on);
        }
        Ok(())
    }

    /// Converts the live counter of one entity into energy.
    pub fn iec_calc(&self, index: usize) -> Result<IecResult, EnergyError> {
        let (count, e3c) = self
            .counters
            .get(index)
            .zip(self.e3c_fj.get(index))
            .ok_or(EnergyError::IndexOutOfRange {
                index,
                count: self.counters.len(),
            })?;
        Ok(IecResult {
            energy_fj: u128::from(*count) * u128::from(*e3c),
            evaluation_ready: true,
        })
    }

    /// Folds every counter into its running total and clears it.
    pub fn sample_and_reset(&mut self) {
        for i in 0..self.counters.len() {
            self.accumulated_fj[i] += u128::from(self.counters[i]) * u128::from(self.e3c_fj[i]);
            self.counters[i] = 0;
        }
    }

    /// Accumulated plus live energy per entity, without sampling.
    pub fn total_energy_fj(&self, index: usize) -> u128 {
        self.accumulated_fj[index] + u128::from(self.counters[index]) * u128::from(self.e3c_fj[index])
    }

    pub fn totals(&self) -> Vec<(Entity, u128)> {
        (0..self.entities.len())
            .map(|i| (self.entities[i], self.total_energy_fj(i)))
            .collect()
    }
}

/// Energy per unit of progress, rounded half up to hundredths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct EnergyPerIncrement {
    hundredths: u128,
}

impl EnergyPerIncrement {
    pub fn as_f64(self) -> f64 {
        self.hundredths as f64 / 100.0
    }

    pub fn hundredths(self) -> u128 {
        self.hundredths
    }
}

impl fmt::Display for EnergyPerIncrement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:02}", self.hundredths / 100, self.hundredths % 100)
    }
}

/// `None` when there were no increments.
pub fn energy_per_increment(total_energy: u128, increments: u128) -> Option<EnergyPerIncrement> {
    if increments == 0 {
        return None;
    }
    let hundredths = (200 * total_energy + increments) / (2 * increments);
    Some(EnergyPerIncrement { hundredths })
}
