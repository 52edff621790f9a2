//! Cycle-accurate simulator for an FPGA intermittent-computing emulator
//! with non-volatile registers.
//!
//! A [`kernel::World`] wires together the intermittency emulator (power
//! failures replayed from a voltage trace), the non-volatile register, the
//! energy approximator and a small workload of three counters guarded by a
//! backup policy. [`harness`] builds worlds from configuration files and
//! runs parameter sweeps.

pub mod energy;
pub mod harness;
pub mod intermittency;
pub mod kernel;
pub mod nvmem;
pub mod trace;
pub mod workload;

pub use kernel::{CategoryCounts, ClockConfig, CycleCategory, ResetLines, SimReport, World, WorldSetup};
