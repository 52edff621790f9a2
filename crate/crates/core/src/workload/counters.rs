//! The three volatile counters and the FSM that updates them in turn.
//!
//! Each counter gets an 8-cycle slot (fetch, increment, store); the store
//! lands on the slot's last cycle. A full round is 24 cycles. Leaving
//! reset, the FSM services counter 2, then 3, then 1, so counter 1 closes
//! every round: after `K` enabled cycles from the origin it has advanced
//! exactly `K / 24` times.

pub const SLOT_CYCLES: u8 = 8;
pub const ROUND_CYCLES: u8 = 3 * SLOT_CYCLES;

/// Counter serviced in each slot of a round, counted from the FSM origin.
const SLOT_ORDER: [usize; 3] = [1, 2, 0];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MicroStep {
    Fetch,
    Increment,
    Store,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountersState {
    values: [u32; 3],
    /// Enabled cycles into the current round, `0..ROUND_CYCLES`.
    phase: u8,
    initial_values: [u32; 3],
}

impl CountersState {
    pub fn new(initial_values: [u32; 3]) -> Self {
        Self {
            values: initial_values,
            phase: 0,
            initial_values,
        }
    }

    pub fn values(&self) -> [u32; 3] {
        self.values
    }

    pub fn counter1(&self) -> u32 {
        self.values[0]
    }

    pub fn phase(&self) -> u8 {
        self.phase
    }

    pub fn initial_values(&self) -> [u32; 3] {
        self.initial_values
    }

    /// Which counter the FSM is on and where in its slot.
    pub fn fsm_position(&self) -> (usize, MicroStep) {
        let counter = SLOT_ORDER[usize::from(self.phase / SLOT_CYCLES)];
        let step = match self.phase % SLOT_CYCLES {
            0 => MicroStep::Fetch,
            s if s == SLOT_CYCLES - 1 => MicroStep::Store,
            _ => MicroStep::Increment,
        };
        (counter, step)
    }

    /// One clock. Returns the counter serviced this cycle, if enabled.
    pub fn step(&mut self, enable: bool) -> Option<usize> {
        if !enable {
            return None;
        }
        let (counter, step) = self.fsm_position();
        if step == MicroStep::Store {
            self.values[counter] = self.values[counter].wrapping_add(1);
        }
        self.phase = (self.phase + 1) % ROUND_CYCLES;
        Some(counter)
    }

    /// Power failure: the flip-flop arrays and the FSM are cleared.
    pub fn clear(&mut self) {
        self.values = [0; 3];
        self.phase = 0;
    }

    pub fn load(&mut self, values: [u32; 3]) {
        self.values = values;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counter1_gains_one_per_round() {
        let mut c = CountersState::new([0; 3]);
        for _ in 0..23 {
            c.step(true);
        }
        assert_eq!(c.counter1(), 0);
        c.step(true);
        assert_eq!(c.values(), [1, 1, 1]);
        assert_eq!(c.phase(), 0);
    }

    #[test]
    fn counters_update_in_sequence() {
        let mut c = CountersState::new([10, 20, 30]);
        let serviced: Vec<usize> = (0..24).map(|_| c.step(true).unwrap()).collect();
        assert!(serviced[..8].iter().all(|&i| i == 1));
        assert!(serviced[8..16].iter().all(|&i| i == 2));
        assert!(serviced[16..].iter().all(|&i| i == 0));
        assert_eq!(c.values(), [11, 21, 31]);
    }

    #[test]
    fn disabled_cycles_freeze_the_fsm() {
        let mut c = CountersState::new([0; 3]);
        for i in 0..100 {
            c.step(i % 2 == 0);
        }
        // 50 enabled cycles: two full rounds plus two cycles
        assert_eq!(c.counter1(), 2);
        assert_eq!(c.phase(), 2);
    }

    #[test]
    fn clear_zeroes_values_and_phase() {
        let mut c = CountersState::new([4, 5, 6]);
        for _ in 0..30 {
            c.step(true);
        }
        c.clear();
        assert_eq!(c.values(), [0, 0, 0]);
        assert_eq!(c.phase(), 0);
        c.load([7, 3, 1]);
        for _ in 0..24 {
            c.step(true);
        }
        assert_eq!(c.values(), [8, 4, 2]);
    }
}
