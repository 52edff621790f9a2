//! Non-volatile register (NVR).
//!
//! The NVR is a word array that survives `power_reset`, fronted by a delay
//! element that makes every access take `busy_cycles` clock cycles:
//!
//! * An access is accepted on a cycle where the NVR is idle, `en` is high
//!   and `power_reset` is low. Address, data and write enable are latched.
//! * `busy` is high for exactly `busy_cycles` cycles starting with the
//!   accept cycle. `busy_sig` is the same pulse, ending one cycle earlier.
//! * The access completes on the cycle `busy` falls: a write commits, and
//!   `dout` presents the addressed word from then on.
//! * Once accepted, an access completes even if `power_reset` rises while
//!   it is in flight. Inputs during the busy window are ignored; changing
//!   them before `busy_sig` falls is counted as a hold violation, unless a
//!   power failure has orphaned the access (the client that issued it is
//!   gone, so there is nobody left to hold it).
//! * `dout` reads as zero whenever `power_reset` is high and `reset` low.
//! * While `reset` is high the reset block zeroes one word per cycle,
//!   starting at address 0 and wrapping, and any in-flight access is
//!   dropped.
//!
//! With a zero access delay an access is accepted and completed in the same
//! cycle and `busy` never rises.

pub mod catalog;

use thiserror::Error;

pub use catalog::{
    access_energy, catalog_csv, endurance_lifetime_years, tech_params, tech_params_by_name,
    MemTechParams, OpKind, Technology, UnknownTechnology, DEFAULT_VDD_MV,
};

/// Cycles needed to cover `delay_ns` at `clock_hz`, rounded up.
pub fn busy_cycles(delay_ns: u64, clock_hz: u64) -> u64 {
    assert!(clock_hz > 0, "clock frequency must be positive");
    let num = u128::from(delay_ns) * u128::from(clock_hz);
    num.div_ceil(1_000_000_000) as u64
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NvrConfigError {
    #[error("nvr depth must be at least 1")]
    ZeroDepth,
    #[error("nvr word_bits must be in 1..=64, got {0}")]
    WordBits(u32),
    #[error("access delay of {0} cycles is too long")]
    DelayTooLong(u64),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("nvr access to address {addr} but depth is {depth}")]
pub struct NvrFault {
    pub addr: usize,
    pub depth: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NvrConfig {
    pub depth: usize,
    pub word_bits: u32,
    pub access_delay_ns: u64,
    pub technology: Technology,
}

impl NvrConfig {
    /// A config whose access delay comes from the technology catalog.
    pub fn for_technology(params: &MemTechParams, depth: usize, word_bits: u32) -> Self {
        Self {
            depth,
            word_bits,
            access_delay_ns: params.access_delay_ns(),
            technology: params.technology,
        }
    }

    pub fn validate(&self) -> Result<(), NvrConfigError> {
        if self.depth == 0 {
            return Err(NvrConfigError::ZeroDepth);
        }
        if !(1..=64).contains(&self.word_bits) {
            return Err(NvrConfigError::WordBits(self.word_bits));
        }
        Ok(())
    }

    pub fn word_mask(&self) -> u64 {
        if self.word_bits >= 64 {
            u64::MAX
        } else {
            (1u64 << self.word_bits) - 1
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NvrInputs {
    pub addr: usize,
    pub din: u64,
    pub we: bool,
    pub en: bool,
    pub reset: bool,
    pub power_reset: bool,
}

impl NvrInputs {
    pub fn read(addr: usize) -> Self {
        Self {
            addr,
            en: true,
            ..Self::default()
        }
    }

    pub fn write(addr: usize, din: u64) -> Self {
        Self {
            addr,
            din,
            we: true,
            en: true,
            ..Self::default()
        }
    }

    pub fn idle() -> Self {
        Self::default()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NvrOutputs {
    pub dout: u64,
    pub busy: bool,
    pub busy_sig: bool,
    /// An access occupied the array during this cycle (for energy counting).
    pub active: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PendingAccess {
    pub addr: usize,
    pub din: u64,
    pub we: bool,
    /// `power_reset` rose while this access was in flight.
    pub orphaned: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NvrState {
    pub words: Vec<u64>,
    pub busy_remaining: u64,
    pub pending: Option<PendingAccess>,
    pub reset_fill_index: Option<usize>,
    /// Registered data output before power gating.
    pub dout_reg: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NvrStats {
    pub reads: u64,
    pub writes: u64,
    pub hold_violations: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Nvr {
    config: NvrConfig,
    busy_cycles: u64,
    state: NvrState,
    stats: NvrStats,
}

impl Nvr {
    pub fn new(config: NvrConfig, clock_hz: u64) -> Result<Self, NvrConfigError> {
        config.validate()?;
        let busy = busy_cycles(config.access_delay_ns, clock_hz);
        if busy > u64::from(u32::MAX) {
            return Err(NvrConfigError::DelayTooLong(busy));
        }
        Ok(Self {
            state: NvrState {
                words: vec![0; config.depth],
                busy_remaining: 0,
                pending: None,
                reset_fill_index: None,
                dout_reg: 0,
            },
            config,
            busy_cycles: busy,
            stats: NvrStats::default(),
        })
    }

    pub fn config(&self) -> &NvrConfig {
        &self.config
    }

    pub fn busy_cycles(&self) -> u64 {
        self.busy_cycles
    }

    pub fn state(&self) -> &NvrState {
        &self.state
    }

    pub fn words(&self) -> &[u64] {
        &self.state.words
    }

    pub fn stats(&self) -> NvrStats {
        self.stats
    }

    /// Loads array contents directly, bypassing the access protocol.
    /// Intended for test setup.
    pub fn preload(&mut self, words: &[u64]) {
        let mask = self.config.word_mask();
        for (dst, &src) in self.state.words.iter_mut().zip(words) {
            *dst = src & mask;
        }
    }

    pub fn step(&mut self, inputs: &NvrInputs) -> Result<NvrOutputs, NvrFault> {
        let st = &mut self.state;

        if inputs.reset {
            let idx = st.reset_fill_index.unwrap_or(0);
            st.words[idx] = 0;
            st.reset_fill_index = Some((idx + 1) % self.config.depth);
            st.busy_remaining = 0;
            st.pending = None;
            st.dout_reg = 0;
            return Ok(NvrOutputs::default());
        }
        st.reset_fill_index = None;

        if inputs.en && !inputs.power_reset && inputs.addr >= self.config.depth {
            return Err(NvrFault {
                addr: inputs.addr,
                depth: self.config.depth,
            });
        }

        let mut completed_now = false;
        if st.busy_remaining > 0 {
            let pending = st.pending.as_mut().expect("busy implies a latched access");
            pending.orphaned |= inputs.power_reset;
            let pending = *pending;
            if st.busy_remaining >= 2 && !pending.orphaned {
                let held = inputs.en
                    && inputs.addr == pending.addr
                    && inputs.din == pending.din
                    && inputs.we == pending.we;
                if !held {
                    self.stats.hold_violations += 1;
                }
            }
            st.busy_remaining -= 1;
            if st.busy_remaining == 0 {
                st.pending = None;
                self.complete(pending);
            }
        } else if inputs.en && !inputs.power_reset {
            let access = PendingAccess {
                addr: inputs.addr,
                din: inputs.din,
                we: inputs.we,
                orphaned: false,
            };
            if self.busy_cycles == 0 {
                self.complete(access);
                completed_now = true;
            } else {
                self.state.pending = Some(access);
                self.state.busy_remaining = self.busy_cycles;
            }
        }

        let st = &self.state;
        let busy = st.busy_remaining > 0;
        Ok(NvrOutputs {
            dout: if inputs.power_reset { 0 } else { st.dout_reg },
            busy,
            busy_sig: st.busy_remaining > 1,
            active: busy || completed_now,
        })
    }

    fn complete(&mut self, access: PendingAccess) {
        let st = &mut self.state;
        if access.we {
            st.words[access.addr] = access.din & self.config.word_mask();
            self.stats.writes += 1;
        } else {
            self.stats.reads += 1;
        }
        st.dout_reg = st.words[access.addr];
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nvr(depth: usize, delay_ns: u64) -> Nvr {
        Nvr::new(
            NvrConfig {
                depth,
                word_bits: 32,
                access_delay_ns: delay_ns,
                technology: Technology::FeRam,
            },
            100_000_000,
        )
        .unwrap()
    }

    #[test]
    fn busy_cycle_examples() {
        assert_eq!(busy_cycles(80, 100_000_000), 8);
        assert_eq!(busy_cycles(0, 100_000_000), 0);
        assert_eq!(busy_cycles(0, 1), 0);
        assert_eq!(busy_cycles(55, 100_000_000), 6);
        assert_eq!(busy_cycles(1, 1), 1);
    }

    #[test]
    fn write_timing_and_busy_sig() {
        let mut m = nvr(4, 80);
        let req = NvrInputs::write(2, 0xABCD);
        let mut trace = Vec::new();
        for _ in 0..10 {
            let o = m.step(&req).unwrap();
            trace.push((o.busy, o.busy_sig, m.words()[2]));
        }
        for (t, &(busy, sig, word)) in trace.iter().take(8).enumerate() {
            assert!(busy, "busy at {t}");
            assert_eq!(sig, t < 7, "busy_sig at {t}");
            assert_eq!(word, 0, "not yet committed at {t}");
        }
        // completion cycle: busy falls, word visible
        assert_eq!(trace[8], (false, false, 0xABCD));
        // request still held, nvr idle again -> accepted a second time
        assert_eq!(trace[9], (true, true, 0xABCD));
    }

    #[test]
    fn write_survives_power_reset_mid_busy() {
        let mut m = nvr(4, 80);
        m.step(&NvrInputs::write(2, 77)).unwrap();
        for cycle in 1..=8 {
            let inputs = if cycle >= 4 {
                NvrInputs { power_reset: true, ..NvrInputs::idle() }
            } else {
                NvrInputs::write(2, 77)
            };
            let o = m.step(&inputs).unwrap();
            if cycle >= 4 {
                assert_eq!(o.dout, 0);
            }
        }
        assert_eq!(m.words()[2], 77);
        assert_eq!(m.state().busy_remaining, 0);
    }

    #[test]
    fn dout_is_gated_during_power_reset() {
        let mut m = nvr(4, 0);
        m.preload(&[5, 6, 7, 8]);
        let o = m.step(&NvrInputs::read(1)).unwrap();
        assert_eq!(o.dout, 6);
        let o = m
            .step(&NvrInputs { power_reset: true, ..NvrInputs::read(2) })
            .unwrap();
        assert_eq!(o.dout, 0);
        // the gated request was not accepted
        assert_eq!(m.stats().reads, 1);
        // reset takes precedence over gating: dout follows the cleared register
        let o = m
            .step(&NvrInputs { power_reset: true, reset: true, ..NvrInputs::idle() })
            .unwrap();
        assert_eq!(o, NvrOutputs::default());
    }

    #[test]
    fn zero_delay_completes_in_accept_cycle() {
        let mut m = nvr(2, 0);
        let o = m.step(&NvrInputs::write(1, 9)).unwrap();
        assert!(!o.busy && !o.busy_sig && o.active);
        assert_eq!(o.dout, 9);
        assert_eq!(m.words(), &[0, 9]);
    }

    #[test]
    fn reset_block_zero_fills_one_word_per_cycle() {
        let mut m = nvr(5, 80);
        m.preload(&[1, 2, 3, 4, 5]);
        let rst = NvrInputs { reset: true, ..NvrInputs::idle() };
        for _ in 0..3 {
            m.step(&rst).unwrap();
        }
        assert_eq!(m.words(), &[0, 0, 0, 4, 5]);
        m.step(&NvrInputs::idle()).unwrap();
        // a new reset starts over from address 0
        m.preload(&[1, 2, 3, 4, 5]);
        for _ in 0..5 {
            m.step(&rst).unwrap();
        }
        assert_eq!(m.words(), &[0; 5]);
    }

    #[test]
    fn reset_drops_in_flight_access() {
        let mut m = nvr(3, 80);
        m.step(&NvrInputs::write(2, 1)).unwrap();
        m.step(&NvrInputs { reset: true, ..NvrInputs::idle() }).unwrap();
        assert_eq!(m.state().pending, None);
        for _ in 0..10 {
            m.step(&NvrInputs::idle()).unwrap();
        }
        assert_eq!(m.words()[2], 0);
    }

    #[test]
    fn out_of_range_access_faults() {
        let mut m = nvr(4, 80);
        assert_eq!(
            m.step(&NvrInputs::read(4)),
            Err(NvrFault { addr: 4, depth: 4 })
        );
        // gated by power_reset: the memory never sees it
        assert!(m.step(&NvrInputs { power_reset: true, ..NvrInputs::read(4) }).is_ok());
    }

    #[test]
    fn changed_inputs_while_busy_are_ignored_but_counted() {
        let mut m = nvr(4, 80);
        m.step(&NvrInputs::write(0, 1)).unwrap();
        m.step(&NvrInputs::write(1, 2)).unwrap();
        m.step(&NvrInputs::idle()).unwrap();
        for _ in 0..6 {
            m.step(&NvrInputs::idle()).unwrap();
        }
        assert_eq!(m.words(), &[1, 0, 0, 0]);
        // every busy cycle after the accept except the last one
        assert_eq!(m.stats().hold_violations, 7);
    }

    #[test]
    fn orphaned_access_is_not_a_violation() {
        let mut m = nvr(4, 80);
        m.step(&NvrInputs::write(3, 9)).unwrap();
        m.step(&NvrInputs { power_reset: true, ..NvrInputs::idle() }).unwrap();
        for _ in 0..6 {
            assert!(m.step(&NvrInputs::read(0)).unwrap().busy);
        }
        assert!(!m.step(&NvrInputs::read(0)).unwrap().busy);
        assert_eq!(m.words()[3], 9);
        assert_eq!(m.stats().hold_violations, 0);
    }

    #[test]
    fn words_are_masked_to_width() {
        let mut m = Nvr::new(
            NvrConfig { depth: 1, word_bits: 4, access_delay_ns: 0, technology: Technology::Custom },
            100_000_000,
        )
        .unwrap();
        m.step(&NvrInputs::write(0, 0xFF)).unwrap();
        assert_eq!(m.words(), &[0xF]);
    }

    #[test]
    fn config_validation() {
        let base = NvrConfig { depth: 1, word_bits: 32, access_delay_ns: 0, technology: Technology::FeRam };
        assert_eq!(NvrConfig { depth: 0, ..base.clone() }.validate(), Err(NvrConfigError::ZeroDepth));
        assert_eq!(NvrConfig { word_bits: 65, ..base.clone() }.validate(), Err(NvrConfigError::WordBits(65)));
        assert_eq!(NvrConfig { word_bits: 0, ..base }.validate(), Err(NvrConfigError::WordBits(0)));
    }
}
