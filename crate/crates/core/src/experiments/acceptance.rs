//! Acceptance checks shared by `dvfsim selftest` and the test suite.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{at_level, burst_report, coap_scenario, dsme_scenario, level_sweep, preset, reference_level, LevelRun};
use crate::clockctl::{execute_transition, TransitionCache, TransitionOutcome};
use crate::error::{Error, Result};
use crate::freqopt::{evaluate, select_optimal, sweep, Metric, SweepRow, TaskProfile, WaitSegment};
use crate::mac::DsmeConfig;
use crate::netstack::{fragment, Method, StackOverheads};
use crate::powermodel::{CalibrationProfile, ClockConfig, Component, RadioState, SourceKind};
use crate::sim::{self, AppSpec, DsmeSpec, ExtraTask, IdtxSpec, MacSpec, PolicySpec, Scenario, SpreadPattern};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionResult {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl std::fmt::Display for CriterionResult {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "[{}] {:>2} {}: {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.detail
        )
    }
}

fn cfg(kind: SourceKind, mhz: u32, p: &CalibrationProfile) -> ClockConfig {
    ClockConfig::new(kind, mhz, p).expect("level of the shipped grid")
}

fn within(x: f64, lo: f64, hi: f64) -> bool {
    x >= lo && x <= hi
}

/// Headline numbers of the calibrated reproduction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub sleep_saving: f64,
    pub idtx_loop_saving: f64,
    pub idtx_rc_extra: f64,
    pub single_request_ratio: f64,
    pub single_request_saving_uj: f64,
    pub fft_static_uj: f64,
    pub fft_delta_uj: f64,
    pub dsme_best_saving: f64,
    pub dsme_best_level: String,
    pub dsme_misses_8mhz: usize,
    pub dsme_misses_24mhz: usize,
    /// `(mac, method, payload) -> saving at 24 MHz RC`.
    pub coap_savings: BTreeMap<String, f64>,
    pub coaps_get_best_saving: f64,
    pub idtx_burst_ms: f64,
    pub idtx_burst_dt_ms: f64,
    pub dsme_burst_ms: f64,
    pub dsme_burst_dt_ms: f64,
}

fn saving(candidate: f64, reference: f64) -> f64 {
    1.0 - candidate / reference
}

fn missing(what: &str, c: ClockConfig) -> Error {
    Error::Config(format!("no {what} at {c}"))
}

fn current_at(runs: &[LevelRun], c: ClockConfig) -> Result<f64> {
    runs.iter()
        .find(|r| r.config == c)
        .map(|r| r.report.average_current_ma)
        .ok_or_else(|| missing("run", c))
}

fn per_request_at(runs: &[LevelRun], c: ClockConfig) -> Result<f64> {
    runs.iter()
        .find(|r| r.config == c)
        .and_then(|r| r.report.per_request_energy_j)
        .ok_or_else(|| missing("deadline-clean request energy", c))
}

fn clean(runs: Vec<LevelRun>) -> Vec<LevelRun> {
    runs.into_iter().filter(|r| r.report.deadline_clean()).collect()
}

fn mac_job_energy(sc: &Scenario, c: ClockConfig, p: &CalibrationProfile) -> Result<f64> {
    let (_, r) = sim::run(&at_level(sc, &c), p)?;
    let e = r.jobs_of(sim::TASK_MAC).next().map(|j| j.energy_j).unwrap_or(0.0);
    Ok(e)
}

pub fn metrics(p: &CalibrationProfile) -> Result<Metrics> {
    let all = p.all_configs();
    let r80 = reference_level(p);
    let rc8 = cfg(SourceKind::Rc, 8, p);
    let rc24 = cfg(SourceKind::Rc, 24, p);
    let pll24 = cfg(SourceKind::Pll, 24, p);

    let sleep = level_sweep(&preset("sleep_baseline")?, &[rc8, r80], p)?;
    let sleep_saving = saving(current_at(&sleep, rc8)?, current_at(&sleep, r80)?);

    let idtx = level_sweep(&preset("idtx_poll")?, &[pll24, rc24, r80], p)?;
    let i80 = current_at(&idtx, r80)?;
    let idtx_loop_saving = saving(current_at(&idtx, pll24)?, i80);
    let idtx_rc_extra = (current_at(&idtx, pll24)? - current_at(&idtx, rc24)?) / i80;

    let req = preset("idtx_request")?;
    let e24 = mac_job_energy(&req, pll24, p)?;
    let e80 = mac_job_energy(&req, r80, p)?;

    let fft_switch = preset("fft_switch")?;
    let fft_energy = |sc: &Scenario| -> Result<f64> {
        let (_, r) = sim::run(sc, p)?;
        let e = r
            .jobs_of("fft")
            .next()
            .map(|j| j.energy_with_transition_j)
            .unwrap_or(0.0);
        Ok(e)
    };
    let fft_dynamic = fft_energy(&fft_switch)?;
    let fft_static = fft_energy(&at_level(&fft_switch, &r80))?;

    let dsme = level_sweep(&dsme_scenario(0, SpreadPattern::Alternate)?, &all, p)?;
    let d80 = current_at(&dsme, r80)?;
    let misses_at = |mhz: u64| -> usize {
        dsme.iter()
            .filter(|r| r.config.core_hz() == mhz * 1_000_000)
            .map(|r| r.report.deadline_misses.len())
            .sum()
    };
    let (dsme_misses_8mhz, dsme_misses_24mhz) = (misses_at(8), misses_at(24));
    let best = dsme
        .iter()
        .filter(|r| r.report.deadline_clean())
        .min_by(|a, b| a.report.average_current_ma.total_cmp(&b.report.average_current_ma))
        .ok_or_else(|| Error::Config("no deadline-clean DSME level".into()))?;
    let dsme_best_saving = saving(best.report.average_current_ma, d80);
    let dsme_best_level = best.config.label();

    let mut cells = Vec::new();
    for mac in ["idtx", "dsme"] {
        for m in [Method::Get, Method::Post] {
            for payload in [16usize, 64] {
                cells.push((mac, m, payload));
            }
        }
    }
    let coap: Vec<(String, f64)> = cells
        .par_iter()
        .map(|&(mac, m, payload)| {
            let runs = level_sweep(&coap_scenario(mac, m, payload, false)?, &[rc24, r80], p)?;
            let s = saving(per_request_at(&runs, rc24)?, per_request_at(&runs, r80)?);
            Ok((format!("{mac}/{m:?}/{payload}").to_lowercase(), s))
        })
        .collect::<Result<_>>()?;
    let coaps: Vec<f64> = ["idtx", "dsme"]
        .iter()
        .flat_map(|mac| super::PAYLOAD_GRID.iter().map(move |p| (*mac, *p)))
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&(mac, payload)| {
            let runs = clean(level_sweep(&coap_scenario(mac, Method::Get, payload, true)?, &all, p)?);
            let refe = per_request_at(&runs, r80)?;
            Ok(runs
                .iter()
                .filter_map(|r| r.report.per_request_energy_j)
                .map(|e| saving(e, refe))
                .fold(f64::NEG_INFINITY, f64::max))
        })
        .collect::<Result<_>>()?;

    let ib = burst_report(&clean(level_sweep(&preset("idtx_burst")?, &all, p)?))?;
    let db = burst_report(&clean(level_sweep(&preset("dsme_burst")?, &all, p)?))?;

    Ok(Metrics {
        sleep_saving,
        idtx_loop_saving,
        idtx_rc_extra,
        single_request_ratio: e24 / e80,
        single_request_saving_uj: (e80 - e24) * 1e6,
        fft_static_uj: fft_static * 1e6,
        fft_delta_uj: (fft_dynamic - fft_static) * 1e6,
        dsme_best_saving,
        dsme_best_level,
        dsme_misses_8mhz,
        dsme_misses_24mhz,
        coap_savings: coap.into_iter().collect(),
        coaps_get_best_saving: coaps.into_iter().fold(f64::NEG_INFINITY, f64::max),
        idtx_burst_ms: ib.tburst_min_ms,
        idtx_burst_dt_ms: ib.max_dt_ms,
        dsme_burst_ms: db.tburst_min_ms,
        dsme_burst_dt_ms: db.max_dt_ms,
    })
}

fn pct(x: f64) -> String {
    format!("{:.1}%", x * 100.0)
}

/// Criteria 1 to 7, judged on precomputed metrics.
pub fn calibrated_criteria(m: &Metrics) -> Vec<CriterionResult> {
    let mut out = Vec::new();
    out.push(CriterionResult {
        id: 1,
        name: "sleep baseline 8 MHz RC vs 80 MHz PLL",
        passed: within(m.sleep_saving, 0.40, 0.50),
        detail: format!("saving {} (target 45% +/- 5 pp)", pct(m.sleep_saving)),
    });
    out.push(CriterionResult {
        id: 2,
        name: "IDTX poll loop 24 MHz",
        passed: within(m.idtx_loop_saving, 0.16, 0.22) && within(m.idtx_rc_extra, 0.03, 0.07),
        detail: format!(
            "PLL saving {} (19% +/- 3 pp), RC extra {} (5% +/- 2 pp)",
            pct(m.idtx_loop_saving),
            pct(m.idtx_rc_extra)
        ),
    });
    out.push(CriterionResult {
        id: 3,
        name: "single IDTX request 24/80 MHz",
        passed: within(m.single_request_ratio, 0.833 - 0.05, 0.833 + 0.05),
        detail: format!("ratio {:.3} (0.833 +/- 0.05)", m.single_request_ratio),
    });
    out.push(CriterionResult {
        id: 4,
        name: "DVFS break-even",
        passed: within(m.fft_delta_uj, 4.0, 6.0) && m.fft_delta_uj < m.single_request_saving_uj,
        detail: format!(
            "switch overhead {:.2} uJ (5 +/- 1), request saving {:.2} uJ",
            m.fft_delta_uj, m.single_request_saving_uj
        ),
    });
    out.push(CriterionResult {
        id: 5,
        name: "DSME idle best level",
        passed: within(m.dsme_best_saving, 0.47, 0.57) && m.dsme_misses_8mhz >= 1 && m.dsme_misses_24mhz == 0,
        detail: format!(
            "saving {} at {} (52% +/- 5 pp), misses 8 MHz {}, 24 MHz {}",
            pct(m.dsme_best_saving),
            m.dsme_best_level,
            m.dsme_misses_8mhz,
            m.dsme_misses_24mhz
        ),
    });
    let band = |prefix: &str, lo: f64, hi: f64| {
        m.coap_savings
            .iter()
            .filter(|(k, _)| k.starts_with(prefix))
            .all(|(_, v)| within(*v, lo, hi))
    };
    let coap_ok = band("dsme", 0.32, 0.40) && band("idtx", 0.22, 0.33) && m.coaps_get_best_saving >= 0.32;
    let list: Vec<String> = m.coap_savings.iter().map(|(k, v)| format!("{k} {}", pct(*v))).collect();
    out.push(CriterionResult {
        id: 6,
        name: "CoAP(S) at 24 MHz",
        passed: coap_ok,
        detail: format!("{}; CoAPS GET best {}", list.join(", "), pct(m.coaps_get_best_saving)),
    });
    out.push(CriterionResult {
        id: 7,
        name: "burst timing",
        passed: (m.idtx_burst_ms - 10_007.0).abs() <= 50.0
            && m.idtx_burst_dt_ms <= 5.0
            && (m.dsme_burst_ms - 2_237.0).abs() <= 50.0
            && m.dsme_burst_dt_ms <= 3.0,
        detail: format!(
            "IDTX {:.1} ms dt {:.2} ms, DSME {:.1} ms dt {:.2} ms",
            m.idtx_burst_ms, m.idtx_burst_dt_ms, m.dsme_burst_ms, m.dsme_burst_dt_ms
        ),
    });
    out
}

// ---------------------------------------------------------------------------
// Calibration-independent properties

/// A random but valid scenario, short enough to run by the thousand.
pub fn random_scenario(rng: &mut ChaCha8Rng, p: &CalibrationProfile) -> Scenario {
    let levels = p.all_configs();
    let pick = |rng: &mut ChaCha8Rng| levels.choose(rng).expect("levels").label();
    let mut tasks = BTreeMap::new();
    for t in [sim::TASK_TIMER, sim::TASK_MAC, sim::TASK_APP, "work"] {
        if rng.gen_bool(0.7) {
            tasks.insert(t.to_string(), pick(rng));
        }
    }
    let mac = match rng.gen_range(0..4) {
        0 => MacSpec::Off,
        1 => MacSpec::Idle,
        2 => MacSpec::Idtx(IdtxSpec {
            config: crate::mac::IdtxConfig {
                poll_interval_s: rng.gen_range(0.05..0.6),
                ..Default::default()
            },
            ..Default::default()
        }),
        _ => {
            let so = rng.gen_range(0..3);
            let mo = so + rng.gen_range(0..3);
            MacSpec::Dsme(DsmeSpec {
                config: DsmeConfig {
                    so,
                    mo,
                    bo: mo,
                    cap_reduction: rng.gen_bool(0.5),
                    wake_margin_us: rng.gen_range(500.0..3000.0),
                    guard_us: rng.gen_range(0.0..300.0),
                    ..Default::default()
                },
                spread: Some(sim::GtsSpread {
                    count: rng.gen_range(2..8),
                    pattern: [SpreadPattern::Tx, SpreadPattern::Rx, SpreadPattern::Alternate][rng.gen_range(0..3)],
                }),
            })
        }
    };
    let app = (!matches!(mac, MacSpec::Off | MacSpec::Dsme(_)) && rng.gen_bool(0.6)).then(|| AppSpec {
        method: if rng.gen_bool(0.5) { Method::Get } else { Method::Post },
        payload_bytes: rng.gen_range(1..300),
        secure: rng.gen_bool(0.5),
        burst: rng.gen_range(1..3),
        start_s: Some(rng.gen_range(0.0..0.2)),
        ..Default::default()
    });
    let n_work = rng.gen_range(0..3);
    let work = (0..n_work)
        .map(|i| ExtraTask {
            id: if i == 0 { "work".into() } else { format!("work{i}") },
            cycles: Some(rng.gen_range(1..400_000)),
            at_s: Some(rng.gen_range(0.0..1.5)),
            after: None,
        })
        .collect();
    Scenario {
        name: "random".into(),
        seed: rng.gen(),
        duration_s: Some(rng.gen_range(0.0..2.0)),
        lpm: rng.gen_bool(0.7),
        timer: rng.gen_bool(0.8),
        timer_phase_s: rng.gen_range(0.0..1.0),
        prewarm_cache: rng.gen_bool(0.5),
        policy: PolicySpec {
            all: pick(rng),
            tasks: tasks.into_iter().filter(|(k, _)| k != "work" || n_work > 0).collect(),
        },
        mac,
        app,
        tasks: work,
        ..Scenario::default()
    }
}

/// Online accumulation vs. re-integration of the exported CSV, bit for bit.
pub fn conservation_check(p: &CalibrationProfile, runs: usize, seed: u64) -> Result<(usize, Vec<String>)> {
    let failures: Vec<String> = (0..runs)
        .into_par_iter()
        .map(|i| -> Result<Option<String>> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
            let sc = random_scenario(&mut rng, p);
            let (trace, report) = sim::run(&sc, p)?;
            let csv = trace.to_csv(p)?;
            let rows = sim::read_trace(csv.as_bytes(), p)?;
            let again = sim::reintegrate(&rows, p)?;
            let same = again.energy_j == report.energy.energy_j
                && [Component::McuCore, Component::Radio]
                    .iter()
                    .all(|c| again.component(*c) == report.energy.component(*c));
            Ok((!same).then(|| {
                format!(
                    "run {i}: {} J online vs {} J offline",
                    report.energy.energy_j, again.energy_j
                )
            }))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    Ok((runs, failures))
}

pub fn determinism_check(p: &CalibrationProfile) -> Result<Vec<String>> {
    let mut bad = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut scenarios = vec![preset("idtx_burst")?, preset("dsme_burst")?, preset("fft_switch")?];
    scenarios.extend((0..20).map(|_| random_scenario(&mut rng, p)));
    for sc in scenarios {
        let a = sim::run(&sc, p)?.0.to_csv(p)?;
        let b = sim::run(&sc, p)?.0.to_csv(p)?;
        if a != b {
            bad.push(sc.name.clone());
        }
    }
    Ok(bad)
}

/// Every overhead configuration in a broad grid that passes validation.
pub fn fragmentation_check() -> (usize, Vec<String>) {
    let mut checked = 0;
    let mut bad = Vec::new();
    for mac in (5..=25).step_by(2) {
        for iphc in (2..=40).step_by(3) {
            for coap in (4..=30).step_by(2) {
                for dtls in (13..=64).step_by(3) {
                    for fragn in [4usize, 5, 6] {
                        let ov = StackOverheads {
                            mac_header_bytes: mac,
                            sixlowpan_iphc_udp_bytes: iphc,
                            coap_base_bytes: coap,
                            dtls_record_bytes: dtls,
                            sixlowpan_fragn_bytes: fragn,
                            ..StackOverheads::default()
                        };
                        if ov.validate().is_err() {
                            continue;
                        }
                        checked += 1;
                        let ok = fragment(64, false, &ov).len() == 1
                            && fragment(128, false, &ov).len() > 1
                            && fragment(64, true, &ov).len() > 1;
                        if !ok {
                            bad.push(format!("{ov:?}"));
                        }
                    }
                }
            }
        }
    }
    (checked, bad)
}

/// Exhaustive reference for `select_optimal`.
pub fn brute_force_optimal(rows: &[SweepRow], metric: Metric) -> Option<ClockConfig> {
    let best = rows.iter().map(|r| metric.of(r)).fold(f64::INFINITY, f64::min);
    let mut tied: Vec<ClockConfig> = rows.iter().filter(|r| metric.of(r) == best).map(|r| r.config).collect();
    tied.sort_by(|a, b| {
        a.core_hz()
            .cmp(&b.core_hz())
            .then((a.kind() == SourceKind::Pll).cmp(&(b.kind() == SourceKind::Pll)))
    });
    tied.first().copied()
}

/// A random profile obeying the monotonicity rules.
pub fn random_profile(rng: &mut ChaCha8Rng) -> CalibrationProfile {
    let mut p = CalibrationProfile {
        name: "random".into(),
        ..CalibrationProfile::default()
    };
    let low = rng.gen_range(0.01..2.0);
    p.mcu_base_current_ma.low = low;
    p.mcu_base_current_ma.high = low + rng.gen_range(0.0..2.0);
    let rc_l = rng.gen_range(0.001..0.2);
    let rc_h = rng.gen_range(0.001..0.2);
    p.mcu_slope_ma_per_mhz.rc.low = rc_l;
    p.mcu_slope_ma_per_mhz.rc.high = rc_h;
    p.mcu_slope_ma_per_mhz.pll.low = rc_l + rng.gen_range(0.0..0.1);
    p.mcu_slope_ma_per_mhz.pll.high = rc_h + rng.gen_range(0.0..0.1);
    p.core_voltage_high_v = p.core_voltage_low_v + rng.gen_range(0.0..0.5);
    p.mcu_lpm_current_ua = rng.gen_range(0.1..10.0);
    p
}

/// Active current strictly increases along the frequency axis, across sources and voltages.
pub fn globally_monotone(p: &CalibrationProfile) -> bool {
    let mut cfgs = p.all_configs();
    cfgs.sort_by_key(|c| c.core_hz());
    cfgs.windows(2)
        .all(|w| w[0].core_hz() == w[1].core_hz() || p.mcu_active_current_ma(&w[0]) < p.mcu_active_current_ma(&w[1]))
}

fn random_task(rng: &mut ChaCha8Rng) -> TaskProfile {
    let wait = if rng.gen_bool(0.2) {
        0.0
    } else {
        rng.gen_range(0.0..0.05)
    };
    TaskProfile {
        label: "random".into(),
        compute_cycles: if wait == 0.0 {
            rng.gen_range(1..10_000_000)
        } else {
            rng.gen_range(0..10_000_000)
        },
        wait_time_s: wait,
        wait_states: vec![WaitSegment {
            state: RadioState::ALL[rng.gen_range(0..RadioState::ALL.len())],
            duration_s: wait * rng.gen_range(0.0..=1.0),
        }],
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct OptimizerCheck {
    pub oracle_mismatches: Vec<String>,
    pub monotone_profiles: usize,
    /// Monotone profiles whose FFT EDP optimum is not f_max.
    pub fft_counterexamples: Vec<String>,
    pub wait_counterexamples: Vec<String>,
}

impl OptimizerCheck {
    pub fn failures(&self) -> Vec<String> {
        let mut all = self.oracle_mismatches.clone();
        all.extend(self.fft_counterexamples.iter().cloned());
        all.extend(self.wait_counterexamples.iter().cloned());
        all
    }
}

pub fn optimizer_check(runs: usize, seed: u64) -> Result<OptimizerCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = OptimizerCheck::default();
    let mut i = 0;
    while i < runs {
        let p = if i % 2 == 0 {
            CalibrationProfile::default()
        } else {
            random_profile(&mut rng)
        };
        if p.validate().is_err() {
            continue;
        }
        let mut levels = p.all_configs();
        levels.shuffle(&mut rng);
        levels.truncate(rng.gen_range(1..=levels.len()));
        let s = sweep(&random_task(&mut rng), &levels, &p)?;
        for metric in [Metric::Energy, Metric::Edp, Metric::Time] {
            if select_optimal(&s.rows, metric) != brute_force_optimal(&s.rows, metric) {
                out.oracle_mismatches
                    .push(format!("run {i}: {metric:?} differs from enumeration"));
            }
        }
        i += 1;
    }
    while out.monotone_profiles < runs {
        let p = random_profile(&mut rng);
        if p.validate().is_err() || !globally_monotone(&p) {
            continue;
        }
        let k = out.monotone_profiles;
        out.monotone_profiles += 1;
        let all = p.all_configs();
        let fmax = p.f_max_mhz() as u64 * 1_000_000;
        let fft = sweep(&TaskProfile::fft(&p), &all, &p)?;
        if let Some(c) = select_optimal(&fft.rows, Metric::Edp).filter(|c| c.core_hz() != fmax) {
            out.fft_counterexamples
                .push(format!("profile {k}: FFT EDP optimum at {}", c.label()));
        }
        let fmin = all.iter().map(|c| c.core_hz()).min();
        let w = sweep(&TaskProfile::wait("wait", 0.01, RadioState::Off), &all, &p)?;
        if select_optimal(&w.rows, Metric::Energy).map(|c| c.core_hz()) != fmin {
            out.wait_counterexamples
                .push(format!("profile {k}: pure-wait energy optimum above f_min"));
        }
    }
    Ok(out)
}

/// MAC baseline runs (no application traffic) at every deadline-clean level.
pub fn radio_invariance_check(p: &CalibrationProfile) -> Result<Vec<String>> {
    let mut bad = Vec::new();
    let all = p.all_configs();
    let mut cases = vec![
        ("idle", preset("radio_listen")?),
        ("idtx", preset("idtx_poll")?),
        ("dsme", dsme_scenario(0, SpreadPattern::Alternate)?),
        ("dsme-gts", dsme_scenario(8, SpreadPattern::Alternate)?),
    ];
    for (_, sc) in cases.iter_mut() {
        sc.duration_s = Some(sc.duration_s.unwrap_or(10.0).min(16.0));
    }
    for (name, sc) in cases {
        let traces: Vec<(ClockConfig, sim::SimTrace, bool)> = all
            .par_iter()
            .map(|c| {
                let (t, r) = sim::run(&at_level(&sc, c), p)?;
                Ok((*c, t, r.deadline_clean()))
            })
            .collect::<Result<_>>()?;
        let clean: Vec<_> = traces.iter().filter(|t| t.2).collect();
        if let Some(first) = clean.first() {
            let reference = first.1.radio_boundaries();
            for t in &clean[1..] {
                if t.1.radio_boundaries() != reference {
                    bad.push(format!("{name}: {} differs from {}", t.0.label(), first.0.label()));
                }
            }
        }
    }
    Ok(bad)
}

/// Independent LRU model: most recent at the end.
struct ReferenceLru {
    cap: usize,
    keys: Vec<(ClockConfig, ClockConfig)>,
    hits: u64,
    misses: u64,
}

impl ReferenceLru {
    fn access(&mut self, key: (ClockConfig, ClockConfig)) -> bool {
        if key.0 == key.1 {
            return false;
        }
        if let Some(i) = self.keys.iter().position(|k| *k == key) {
            let k = self.keys.remove(i);
            self.keys.push(k);
            self.hits += 1;
            true
        } else {
            self.misses += 1;
            if self.keys.len() == self.cap {
                self.keys.remove(0);
            }
            self.keys.push(key);
            false
        }
    }
}

pub fn cache_replay_check(p: &CalibrationProfile, sequences: usize, seed: u64) -> Result<Vec<String>> {
    let all = p.all_configs();
    let bad: Vec<String> = (0..sequences)
        .into_par_iter()
        .map(|i| -> Result<Option<String>> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
            let cap = rng.gen_range(1..=10);
            let n = rng.gen_range(2..=all.len());
            let pool: Vec<ClockConfig> = all.choose_multiple(&mut rng, n).copied().collect();
            let mut cache = TransitionCache::new(cap);
            let mut model = ReferenceLru {
                cap,
                keys: Vec::new(),
                hits: 0,
                misses: 0,
            };
            let mut cur = pool[0];
            for step in 0..rng.gen_range(1..60) {
                let next = *pool.choose(&mut rng).expect("pool");
                let res = execute_transition(&mut cache, cur, next, p)?;
                let hit = model.access((cur, next));
                let outcome_ok = match res.outcome {
                    TransitionOutcome::Identity => cur == next,
                    TransitionOutcome::Hit => hit,
                    TransitionOutcome::Miss => !hit && cur != next,
                };
                let expected = if cur == next {
                    crate::time::Ns::ZERO
                } else if hit {
                    p.transition_cached()
                } else {
                    p.transition_uncached()
                };
                if !outcome_ok || res.elapsed != expected || cache.keys() != model.keys {
                    return Ok(Some(format!("sequence {i} step {step}")));
                }
                cur = next;
            }
            if cache.hits() != model.hits || cache.misses() != model.misses {
                return Ok(Some(format!("sequence {i}: counters")));
            }
            Ok(None)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    Ok(bad)
}

fn verdict(id: u8, name: &'static str, bad: &[String], ok_detail: String) -> CriterionResult {
    CriterionResult {
        id,
        name,
        passed: bad.is_empty(),
        detail: if bad.is_empty() {
            ok_detail
        } else {
            format!("{} failures, first: {}", bad.len(), bad[0])
        },
    }
}

fn error_result(id: u8, name: &'static str, e: crate::error::Error) -> CriterionResult {
    CriterionResult {
        id,
        name,
        passed: false,
        detail: format!("error: {e}"),
    }
}

pub fn property_criteria(p: &CalibrationProfile) -> Vec<CriterionResult> {
    let mut out = Vec::new();
    out.push(match conservation_check(p, 1000, 0xC0FFEE) {
        Ok((n, bad)) => verdict(
            8,
            "energy conservation",
            &bad,
            format!("{n} random runs re-integrate exactly"),
        ),
        Err(e) => error_result(8, "energy conservation", e),
    });
    out.push(match determinism_check(p) {
        Ok(bad) => verdict(9, "determinism", &bad, "byte-identical trace CSV on rerun".into()),
        Err(e) => error_result(9, "determinism", e),
    });
    let (n, bad) = fragmentation_check();
    out.push(verdict(
        10,
        "fragmentation thresholds",
        &bad,
        format!("{n} accepted overhead configurations"),
    ));
    out.push(match optimizer_check(1000, 7) {
        Ok(c) => CriterionResult {
            id: 11,
            name: "optimizer oracle",
            passed: c.failures().is_empty(),
            detail: format!(
                "{} oracle mismatches; over {} monotone profiles: {} FFT EDP optima below f_max, {} pure-wait optima above f_min{}",
                c.oracle_mismatches.len(),
                c.monotone_profiles,
                c.fft_counterexamples.len(),
                c.wait_counterexamples.len(),
                c.failures().first().map(|f| format!(" (first: {f})")).unwrap_or_default()
            ),
        },
        Err(e) => error_result(11, "optimizer oracle", e),
    });
    out.push(match radio_invariance_check(p) {
        Ok(bad) => verdict(
            12,
            "radio schedule invariance",
            &bad,
            "boundaries equal across clean levels".into(),
        ),
        Err(e) => error_result(12, "radio schedule invariance", e),
    });
    out.push(match cache_replay_check(p, 10_000, 11) {
        Ok(bad) => verdict(
            13,
            "transition cache semantics",
            &bad,
            "10000 sequences match the LRU model".into(),
        ),
        Err(e) => error_result(13, "transition cache semantics", e),
    });
    out
}

/// All thirteen criteria in order.
pub fn run_all(p: &CalibrationProfile) -> Vec<CriterionResult> {
    let mut out = match metrics(p) {
        Ok(m) => calibrated_criteria(&m),
        Err(e) => (1..=7)
            .map(|id| error_result(id, "calibrated reproduction", e.clone()))
            .collect(),
    };
    out.extend(property_criteria(p));
    out
}

/// Energy of the IDTX request profile per level, for cross-checking the simulator.
pub fn idtx_profile_energy(p: &CalibrationProfile, c: &ClockConfig) -> Result<f64> {
    let t = TaskProfile::idtx_request(p, &crate::mac::IdtxConfig::default())?;
    Ok(evaluate(&t, c, p)?.energy_j)
}
