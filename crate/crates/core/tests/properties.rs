use dvfsim::experiments::acceptance::{random_profile, random_scenario};
use dvfsim::experiments::{at_level, preset};
use dvfsim::freqopt::{select_optimal, sweep, Metric, TaskProfile};
use dvfsim::netstack::{fragment, StackOverheads};
use dvfsim::powermodel::{CalibrationProfile, Component};
use dvfsim::sim::{self, export_trace, read_trace_file, reintegrate};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn reintegration_is_exact(seed in any::<u64>()) {
        let p = CalibrationProfile::default();
        let sc = random_scenario(&mut ChaCha8Rng::seed_from_u64(seed), &p);
        let (trace, report) = sim::run(&sc, &p).unwrap();
        let rows = sim::read_trace(trace.to_csv(&p).unwrap().as_bytes(), &p).unwrap();
        let again = reintegrate(&rows, &p).unwrap();
        prop_assert_eq!(again.energy_j, report.energy.energy_j);
        prop_assert_eq!(again.component(Component::Radio), report.energy.component(Component::Radio));
    }

    #[test]
    fn transition_time_matches_cache_counters(seed in any::<u64>()) {
        let p = CalibrationProfile::default();
        let sc = random_scenario(&mut ChaCha8Rng::seed_from_u64(seed), &p);
        let (trace, report) = sim::run(&sc, &p).unwrap();
        let total: u64 = trace.mcu.iter().filter(|s| s.label == "transition").map(|s| (s.end - s.start).0).sum();
        let expected = report.cache_misses * p.transition_uncached().0 + report.cache_hits * p.transition_cached().0;
        prop_assert_eq!(total, expected);
    }

    #[test]
    fn runs_are_deterministic(seed in any::<u64>()) {
        let p = CalibrationProfile::default();
        let sc = random_scenario(&mut ChaCha8Rng::seed_from_u64(seed), &p);
        let a = sim::run(&sc, &p).unwrap();
        let b = sim::run(&sc, &p).unwrap();
        prop_assert_eq!(a.0.to_csv(&p).unwrap(), b.0.to_csv(&p).unwrap());
        prop_assert_eq!(a.1, b.1);
    }

    #[test]
    fn fragment_thresholds_hold(mac in 3usize..30, iphc in 2usize..48, coap in 4usize..40, dtls in 13usize..80) {
        let ov = StackOverheads {
            mac_header_bytes: mac,
            sixlowpan_iphc_udp_bytes: iphc,
            coap_base_bytes: coap,
            dtls_record_bytes: dtls,
            ..StackOverheads::default()
        };
        prop_assume!(ov.validate().is_ok());
        prop_assert_eq!(fragment(64, false, &ov).len(), 1);
        prop_assert!(fragment(128, false, &ov).len() > 1);
        prop_assert!(fragment(64, true, &ov).len() > 1);
    }

    #[test]
    fn current_scaling_keeps_optima(seed in any::<u64>(), c in 0.1f64..10.0) {
        let p = random_profile(&mut ChaCha8Rng::seed_from_u64(seed));
        prop_assume!(p.validate().is_ok());
        let scaled = p.scaled_currents(c);
        let levels = p.all_configs();
        let task = TaskProfile::idtx_request(&p, &Default::default()).unwrap();
        let a = sweep(&task, &levels, &p).unwrap();
        let b = sweep(&task, &levels, &scaled).unwrap();
        for (x, y) in a.rows.iter().zip(&b.rows) {
            prop_assert!((y.energy_j - c * x.energy_j).abs() <= 1e-9 * y.energy_j.abs().max(1e-12));
        }
        prop_assert_eq!(select_optimal(&a.rows, Metric::Energy), select_optimal(&b.rows, Metric::Energy));
    }
}

#[test]
fn trace_file_round_trip() {
    let p = CalibrationProfile::default();
    let (trace, report) = sim::run(&preset("dsme_burst").unwrap(), &p).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trace.csv");
    export_trace(&trace, &path, &p).unwrap();
    let rows = read_trace_file(&path, &p).unwrap();
    assert_eq!(reintegrate(&rows, &p).unwrap().energy_j, report.energy.energy_j);
}

#[test]
fn idtx_radio_schedule_ignores_frequency() {
    let p = CalibrationProfile::default();
    let sc = preset("idtx_poll").unwrap();
    let mut reference = None;
    for c in p.all_configs() {
        let (t, r) = sim::run(&at_level(&sc, &c), &p).unwrap();
        if !r.deadline_clean() {
            continue;
        }
        let b = t.radio_boundaries();
        match &reference {
            None => reference = Some(b),
            Some(r0) => assert_eq!(&b, r0, "{}", c.label()),
        }
    }
}

#[test]
fn every_preset_runs_clean_at_fmax() {
    let p = CalibrationProfile::default();
    for name in dvfsim::experiments::preset_names() {
        let (_, r) = sim::run(&preset(name).unwrap(), &p).unwrap();
        assert!(r.deadline_clean(), "{name}");
        assert!(r.energy.energy_j > 0.0, "{name}");
    }
}
