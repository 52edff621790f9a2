//! Double-buffered counter snapshots in the NVR.
//!
//! The NVR only guarantees that a single word write is atomic, so a backup
//! of three counters needs its own commit protocol. Two halves of four words
//! each hold `[counter1, counter2, counter3, seq]`. A backup writes the three
//! counters into the half that is not live and then writes `seq`, one more
//! than the live sequence number, last. Recovery reads both sequence words
//! and loads the half with the larger one; a sequence of zero means the half
//! was never committed.
//!
//! Both procedures talk to the NVR through [`AccessPort`], which issues one
//! access at a time and waits for `busy` to fall before the next.

use crate::nvmem::{NvrInputs, NvrOutputs};

pub const SNAPSHOT_WORDS: usize = 4;
pub const REQUIRED_DEPTH: usize = 2 * SNAPSHOT_WORDS;
const SEQ_OFFSET: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Snapshot {
    pub seq: u32,
    pub values: [u32; 3],
}

pub fn half_base(half: usize) -> usize {
    half * SNAPSHOT_WORDS
}

pub fn seq_addr(half: usize) -> usize {
    half_base(half) + SEQ_OFFSET
}

/// Decodes the most recent committed snapshot straight from array contents.
pub fn latest_committed(words: &[u64]) -> Option<(usize, Snapshot)> {
    (0..2)
        .filter_map(|half| {
            let base = half_base(half);
            let seq = *words.get(base + SEQ_OFFSET)? as u32;
            (seq != 0).then(|| {
                let values = [words[base] as u32, words[base + 1] as u32, words[base + 2] as u32];
                (half, Snapshot { seq, values })
            })
        })
        .max_by_key(|(_, s)| s.seq)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Poll {
    /// Nothing in flight and the NVR is free.
    Ready,
    /// Waiting on the NVR; drive these inputs.
    Wait(NvrInputs),
    /// The in-flight access finished; `dout` holds its data.
    Completed(u64),
}

/// Issues one NVR access at a time.
///
/// `prev` is the NVR output of the previous cycle: `busy` there means the
/// NVR starts this cycle with an access in flight. A request is only issued
/// on cycles where the NVR is idle, so it is always accepted.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct AccessPort {
    in_flight: Option<NvrInputs>,
}

impl AccessPort {
    fn poll(&mut self, prev: &NvrOutputs) -> Poll {
        match self.in_flight {
            Some(req) if prev.busy => Poll::Wait(req),
            Some(_) => {
                self.in_flight = None;
                Poll::Completed(prev.dout)
            }
            // Something left over from before a power failure.
            None if prev.busy => Poll::Wait(NvrInputs::idle()),
            None => Poll::Ready,
        }
    }

    fn issue(&mut self, req: NvrInputs) -> NvrInputs {
        self.in_flight = Some(req);
        req
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackupStep {
    /// Drive these inputs this cycle. `commit` is set on the cycle the
    /// sequence word write is issued (and therefore accepted).
    Pending { inputs: NvrInputs, commit: bool },
    Done,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BackupProcedure {
    half: usize,
    snapshot: Snapshot,
    next_word: usize,
    port: AccessPort,
}

impl BackupProcedure {
    pub fn new(target_half: usize, snapshot: Snapshot) -> Self {
        Self {
            half: target_half,
            snapshot,
            next_word: 0,
            port: AccessPort::default(),
        }
    }

    pub fn target_half(&self) -> usize {
        self.half
    }

    pub fn snapshot(&self) -> Snapshot {
        self.snapshot
    }

    fn word(&self, i: usize) -> u64 {
        if i == SEQ_OFFSET {
            u64::from(self.snapshot.seq)
        } else {
            u64::from(self.snapshot.values[i])
        }
    }

    pub fn advance(&mut self, prev: &NvrOutputs) -> BackupStep {
        match self.port.poll(prev) {
            Poll::Wait(inputs) => return BackupStep::Pending { inputs, commit: false },
            Poll::Completed(_) => self.next_word += 1,
            Poll::Ready => {}
        }
        if self.next_word == SNAPSHOT_WORDS {
            return BackupStep::Done;
        }
        let req = NvrInputs::write(half_base(self.half) + self.next_word, self.word(self.next_word));
        BackupStep::Pending {
            inputs: self.port.issue(req),
            commit: self.next_word == SEQ_OFFSET,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecoverStep {
    Pending(NvrInputs),
    /// Recovery finished: the live half and its snapshot, or `None` on a
    /// cold start (nothing ever committed).
    Done(Option<(usize, Snapshot)>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RecoverPhase {
    ReadSeq(usize),
    ReadValue { half: usize, seq: u32, index: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecoverProcedure {
    phase: RecoverPhase,
    seqs: [u32; 2],
    values: [u32; 3],
    port: AccessPort,
}

impl Default for RecoverProcedure {
    fn default() -> Self {
        Self::new()
    }
}

impl RecoverProcedure {
    pub fn new() -> Self {
        Self {
            phase: RecoverPhase::ReadSeq(0),
            seqs: [0; 2],
            values: [0; 3],
            port: AccessPort::default(),
        }
    }

    fn request(&self) -> NvrInputs {
        match self.phase {
            RecoverPhase::ReadSeq(half) => NvrInputs::read(seq_addr(half)),
            RecoverPhase::ReadValue { half, index, .. } => NvrInputs::read(half_base(half) + index),
        }
    }

    pub fn advance(&mut self, prev: &NvrOutputs) -> RecoverStep {
        match self.port.poll(prev) {
            Poll::Wait(inputs) => return RecoverStep::Pending(inputs),
            Poll::Ready => {}
            Poll::Completed(dout) => match self.phase {
                RecoverPhase::ReadSeq(0) => {
                    self.seqs[0] = dout as u32;
                    self.phase = RecoverPhase::ReadSeq(1);
                }
                RecoverPhase::ReadSeq(_) => {
                    self.seqs[1] = dout as u32;
                    if self.seqs == [0, 0] {
                        return RecoverStep::Done(None);
                    }
                    let half = usize::from(self.seqs[1] > self.seqs[0]);
                    self.phase = RecoverPhase::ReadValue {
                        half,
                        seq: self.seqs[half],
                        index: 0,
                    };
                }
                RecoverPhase::ReadValue { half, seq, index } => {
                    self.values[index] = dout as u32;
                    if index + 1 == 3 {
                        return RecoverStep::Done(Some((
                            half,
                            Snapshot {
                                seq,
                                values: self.values,
                            },
                        )));
                    }
                    self.phase = RecoverPhase::ReadValue {
                        half,
                        seq,
                        index: index + 1,
                    };
                }
            },
        }
        RecoverStep::Pending(self.port.issue(self.request()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nvmem::{Nvr, NvrConfig, Technology};

    fn nvr(delay_ns: u64) -> Nvr {
        Nvr::new(
            NvrConfig {
                depth: REQUIRED_DEPTH,
                word_bits: 32,
                access_delay_ns: delay_ns,
                technology: Technology::FeRam,
            },
            100_000_000,
        )
        .unwrap()
    }

    /// Drives a backup to completion; returns the cycle count.
    fn run_backup(m: &mut Nvr, half: usize, snap: Snapshot) -> usize {
        let mut proc = BackupProcedure::new(half, snap);
        let mut prev = NvrOutputs::default();
        for cycle in 0.. {
            match proc.advance(&prev) {
                BackupStep::Pending { inputs, .. } => prev = m.step(&inputs).unwrap(),
                BackupStep::Done => return cycle,
            }
        }
        unreachable!()
    }

    fn run_recover(m: &mut Nvr) -> (Option<(usize, Snapshot)>, usize) {
        let mut proc = RecoverProcedure::new();
        let mut prev = NvrOutputs::default();
        for cycle in 0.. {
            match proc.advance(&prev) {
                RecoverStep::Pending(inputs) => prev = m.step(&inputs).unwrap(),
                RecoverStep::Done(s) => return (s, cycle),
            }
        }
        unreachable!()
    }

    #[test]
    fn backup_then_recover_round_trips() {
        let mut m = nvr(80);
        let snap = Snapshot { seq: 1, values: [7, 3, 1] };
        let cycles = run_backup(&mut m, 0, snap);
        // four accesses, each 8 busy cycles plus the cycle that observes busy low
        assert_eq!(cycles, 4 * (8 + 1));
        assert_eq!(&m.words()[..4], &[7, 3, 1, 1]);
        let (got, cycles) = run_recover(&mut m);
        assert_eq!(got, Some((0, snap)));
        assert_eq!(cycles, 5 * 9);
    }

    #[test]
    fn zero_snapshot_round_trips() {
        let mut m = nvr(80);
        let snap = Snapshot { seq: 1, values: [0, 0, 0] };
        run_backup(&mut m, 1, snap);
        assert_eq!(run_recover(&mut m).0, Some((1, snap)));
    }

    #[test]
    fn cold_start_reads_only_sequence_words() {
        let mut m = nvr(80);
        let (got, cycles) = run_recover(&mut m);
        assert_eq!(got, None);
        assert_eq!(cycles, 2 * 9);
    }

    #[test]
    fn newest_sequence_wins() {
        let mut m = nvr(0);
        m.preload(&[1, 1, 1, 5, 2, 2, 2, 6]);
        assert_eq!(run_recover(&mut m).0, Some((1, Snapshot { seq: 6, values: [2, 2, 2] })));
        m.preload(&[9, 9, 9, 8, 2, 2, 2, 6]);
        assert_eq!(run_recover(&mut m).0, Some((0, Snapshot { seq: 8, values: [9, 9, 9] })));
        assert_eq!(latest_committed(m.words()), Some((0, Snapshot { seq: 8, values: [9, 9, 9] })));
    }

    #[test]
    fn commit_flag_marks_the_sequence_write() {
        let mut m = nvr(20);
        let mut proc = BackupProcedure::new(0, Snapshot { seq: 3, values: [1, 2, 3] });
        let mut prev = NvrOutputs::default();
        let mut commits = Vec::new();
        while let BackupStep::Pending { inputs, commit } = proc.advance(&prev) {
            if commit {
                commits.push(inputs);
            }
            prev = m.step(&inputs).unwrap();
        }
        assert_eq!(commits, vec![NvrInputs::write(3, 3)]);
    }

    #[test]
    fn waits_for_a_leftover_access() {
        let mut m = nvr(80);
        // an access from before a power failure is still in flight
        let prev = m.step(&NvrInputs::write(5, 42)).unwrap();
        let mut proc = RecoverProcedure::new();
        let mut prev = prev;
        let mut waited = 0;
        while let RecoverStep::Pending(inputs) = proc.advance(&prev) {
            if !inputs.en {
                waited += 1;
            }
            prev = m.step(&inputs).unwrap();
        }
        assert_eq!(waited, 8);
        assert_eq!(m.words()[5], 42);
        // still a violation: no power failure orphaned the access
        assert_eq!(m.stats().hold_violations, 7);
    }
}
