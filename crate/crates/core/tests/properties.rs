use std::sync::Arc;

use proptest::prelude::*;

use norm_core::energy::{EnergyLedger, Entity};
use norm_core::intermittency::{ie_step, IeConfig, IeState};
use norm_core::nvmem::{busy_cycles, Nvr, NvrConfig, NvrInputs, Technology};
use norm_core::trace::{downsample_mean, load_trace_csv, shutdown_fraction, to_csv, VoltageTrace};
use norm_core::workload::BackupPolicy;
use norm_core::{ClockConfig, World, WorldSetup};

fn samples() -> impl Strategy<Value = Vec<u16>> {
    prop::collection::vec(0u16..6000, 1..200)
}

proptest! {
    #[test]
    fn downsample_shape(s in samples(), k in 1usize..40) {
        let t = VoltageTrace::new(s.clone()).unwrap();
        let d = downsample_mean(&t, k).unwrap();
        prop_assert_eq!(d.len(), s.len().div_ceil(k));
        prop_assert!(d.min() >= t.min());
        prop_assert!(d.max() <= t.max());
        for (i, &v) in d.samples().iter().enumerate() {
            let g = &s[i * k..(i * k + k).min(s.len())];
            let mean = g.iter().map(|&x| f64::from(x)).sum::<f64>() / g.len() as f64;
            prop_assert!((f64::from(v) - mean).abs() <= 0.5);
        }
    }

    #[test]
    fn csv_round_trip(s in samples()) {
        let t = VoltageTrace::new(s).unwrap();
        let back = load_trace_csv(to_csv(&t).as_bytes()).unwrap();
        prop_assert_eq!(back.samples(), t.samples());
    }

    #[test]
    fn shutdown_fraction_is_monotone(s in samples(), a in 0u16..7000, b in 0u16..7000) {
        let t = VoltageTrace::new(s).unwrap();
        let (lo, hi) = (a.min(b), a.max(b));
        prop_assert!(shutdown_fraction(&t, lo) <= shutdown_fraction(&t, hi));
    }

    #[test]
    fn comparator_bits_match_brute_force(
        s in samples(),
        thresholds in prop::collection::vec(0u16..6000, 1..6),
        prescale in 1u32..9,
        cycles in 0usize..600,
    ) {
        let t = VoltageTrace::new(s.clone()).unwrap();
        let cfg = IeConfig { thresholds_mv: thresholds.clone(), select_threshold: 0, prescale, wakeup_threshold_mv: None };
        let mut st = IeState::default();
        for c in 0..cycles {
            let out = ie_step(&mut st, &cfg, &t);
            let sample = s[(c / prescale as usize) % s.len()];
            prop_assert_eq!(out.sample_mv, sample);
            for (i, &th) in thresholds.iter().enumerate() {
                prop_assert_eq!(out.threshold_comp[i], sample < th);
            }
            prop_assert_eq!(out.power_reset, sample < thresholds[0]);
        }
    }

    #[test]
    fn hysteresis_only_wakes_above_wakeup(s in samples(), reset in 1000u16..4000, gap in 0u16..1000) {
        let t = VoltageTrace::new(s.clone()).unwrap();
        let wake = reset + gap;
        let cfg = IeConfig { thresholds_mv: vec![reset], select_threshold: 0, prescale: 1, wakeup_threshold_mv: Some(wake) };
        let mut st = IeState::default();
        let mut off = true;
        for c in 0..2 * s.len() {
            let out = ie_step(&mut st, &cfg, &t);
            let v = s[c % s.len()];
            if v < reset { off = true } else if v >= wake { off = false }
            prop_assert_eq!(out.power_reset, off);
        }
    }

    #[test]
    fn busy_cycles_is_a_ceiling(delay in 0u64..2000, mhz in 1u64..500) {
        let hz = mhz * 1_000_000;
        let n = busy_cycles(delay, hz);
        prop_assert_eq!(n == 0, delay == 0);
        // n cycles cover the delay
        prop_assert!(u128::from(n) * 1_000_000_000 >= u128::from(delay) * u128::from(hz));
        if n > 1 {
            prop_assert!(u128::from(n - 1) * 1_000_000_000 < u128::from(delay) * u128::from(hz));
        }
    }

    #[test]
    fn energy_is_count_times_e3c(
        masks in prop::collection::vec(prop::collection::vec(any::<bool>(), 6), 0..500),
        e3c in prop::collection::vec(0u64..1_000_000, 6),
        interval in 1u64..64,
    ) {
        let roster: Vec<(Entity, u64)> = Entity::ALL.iter().copied().zip(e3c.iter().copied()).collect();
        let mut sampled = EnergyLedger::new(&roster, interval).unwrap();
        let mut live = EnergyLedger::new(&roster, 1 << 20).unwrap();
        let mut counts = [0u128; 6];
        for (cycle, m) in masks.iter().enumerate() {
            sampled.ea_step(m).unwrap();
            live.ea_step(m).unwrap();
            for i in 0..6 {
                counts[i] += u128::from(m[i]);
            }
            if (cycle as u64 + 1).is_multiple_of(interval) {
                sampled.sample_and_reset();
            }
        }
        for i in 0..6 {
            let expect = counts[i] * u128::from(e3c[i]);
            prop_assert_eq!(sampled.total_energy_fj(i), expect);
            prop_assert_eq!(live.total_energy_fj(i), expect);
        }
    }

    #[test]
    fn nvr_cell_survives_power_reset(addr in 0usize..8, value in any::<u32>(), wait in 0u64..20) {
        let cfg = NvrConfig { depth: 8, word_bits: 32, access_delay_ns: 80, technology: Technology::FeRam };
        let mut nvr = Nvr::new(cfg, 100_000_000).unwrap();
        let w = NvrInputs::write(addr, u64::from(value));
        while nvr.step(&w).unwrap().busy {}
        let mut off = NvrInputs::idle();
        off.power_reset = true;
        for _ in 0..wait {
            nvr.step(&off).unwrap();
        }
        prop_assert_eq!(nvr.words()[addr], u64::from(value));
    }
}

fn world(samples: Vec<u16>, prescale: u32, policy: BackupPolicy, interval: u64) -> World {
    World::new(WorldSetup {
        clock: ClockConfig::baseline(),
        ie: IeConfig::single(2800, prescale),
        trace: Arc::new(VoltageTrace::new(samples).unwrap()),
        nvr: NvrConfig { depth: 8, word_bits: 32, access_delay_ns: 80, technology: Technology::FeRam },
        roster: Entity::ALL.iter().map(|&e| (e, 1000)).collect(),
        sample_interval: interval,
        policy,
        initial_values: [0; 3],
    })
    .unwrap()
}

fn policy() -> impl Strategy<Value = BackupPolicy> {
    prop_oneof![
        (1u32..20).prop_map(|n| BackupPolicy::Task { task_count: n }),
        (10u64..400).prop_map(|p| BackupPolicy::Constant { period_cycles: p }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn world_invariants(
        s in prop::collection::vec(prop_oneof![2000u16..2800, 2800u16..4000], 1..40),
        prescale in 1u32..60,
        policy in policy(),
        cycles in 0u64..4000,
        interval in 1u64..5000,
    ) {
        let mut a = world(s.clone(), prescale, policy.clone(), interval);
        let mut b = world(s, prescale, policy, 1 << 20);
        let ra = a.run(cycles);
        let rb = b.run(cycles);
        // category cycles partition the run
        prop_assert_eq!(ra.categories.total(), cycles);
        // the sampling interval does not change energy
        prop_assert_eq!(ra.entity_energy_fj, rb.entity_energy_fj);
        prop_assert_eq!(ra.nvr.hold_violations, 0);
        prop_assert!(ra.fault.is_none());
        // every commit belongs to a started backup
        prop_assert!(ra.workload.backups_committed <= ra.workload.backups_started);
    }
}
