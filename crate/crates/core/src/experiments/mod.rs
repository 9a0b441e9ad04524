//! Scenario presets, level sweeps and experiment grids.

pub mod acceptance;

use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::netstack::Method;
use crate::powermodel::{CalibrationProfile, ClockConfig, SourceKind};
use crate::sim::{self, GtsSpread, MacSpec, PolicySpec, RunReport, Scenario, SpreadPattern};

const PRESETS: &[(&str, &str)] = &[
    ("sleep_baseline", include_str!("../../presets/sleep_baseline.json")),
    ("radio_listen", include_str!("../../presets/radio_listen.json")),
    ("idtx_poll", include_str!("../../presets/idtx_poll.json")),
    ("idtx_request", include_str!("../../presets/idtx_request.json")),
    ("fft_switch", include_str!("../../presets/fft_switch.json")),
    ("dsme_idle", include_str!("../../presets/dsme_idle.json")),
    ("dsme_burst", include_str!("../../presets/dsme_burst.json")),
    ("idtx_burst", include_str!("../../presets/idtx_burst.json")),
];

pub fn preset_names() -> Vec<&'static str> {
    PRESETS.iter().map(|p| p.0).collect()
}

pub fn preset(name: &str) -> Result<Scenario> {
    let (_, json) = PRESETS.iter().find(|p| p.0 == name).ok_or_else(|| {
        Error::Config(format!(
            "unknown preset `{name}` (known: {})",
            preset_names().join(", ")
        ))
    })?;
    Scenario::from_json(json)
}

/// Parses `24,pll:80,all`. A bare frequency selects every source offering it.
pub fn parse_levels(spec: &str, profile: &CalibrationProfile) -> Result<Vec<ClockConfig>> {
    let all = profile.all_configs();
    let mut out: Vec<ClockConfig> = Vec::new();
    for tok in spec.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        let found: Vec<ClockConfig> = if tok == "all" {
            all.clone()
        } else if tok.contains(':') {
            vec![ClockConfig::parse_label(tok, profile)?]
        } else {
            let mhz: u64 = tok.parse().map_err(|_| Error::Parse(format!("bad level `{tok}`")))?;
            let v: Vec<ClockConfig> = all.iter().copied().filter(|c| c.core_hz() == mhz * 1_000_000).collect();
            if v.is_empty() {
                return Err(Error::Config(format!("no clock source offers {mhz} MHz")));
            }
            v
        };
        for c in found {
            if !out.contains(&c) {
                out.push(c);
            }
        }
    }
    if out.is_empty() {
        return Err(Error::Config("empty level list".into()));
    }
    Ok(out)
}

/// Highest PLL level; relative results divide by it.
pub fn reference_level(profile: &CalibrationProfile) -> ClockConfig {
    ClockConfig::new(SourceKind::Pll, profile.f_max_mhz(), profile).expect("f_max is a PLL level")
}

/// The scenario with every task pinned to `cfg`.
pub fn at_level(sc: &Scenario, cfg: &ClockConfig) -> Scenario {
    Scenario {
        policy: PolicySpec::uniform(cfg),
        ..sc.clone()
    }
}

#[derive(Debug, Clone)]
pub struct LevelRun {
    pub config: ClockConfig,
    pub report: RunReport,
}

/// Runs the scenario at each level in parallel; results keep level order.
pub fn level_sweep(sc: &Scenario, levels: &[ClockConfig], profile: &CalibrationProfile) -> Result<Vec<LevelRun>> {
    levels
        .par_iter()
        .map(|c| {
            let (_, report) = sim::run(&at_level(sc, c), profile)?;
            Ok(LevelRun { config: *c, report })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BurstRow {
    pub tburst_min_ms: f64,
    pub max_dt_ms: f64,
    pub levels: usize,
}

/// Shortest burst and largest burst-duration spread across levels.
pub fn burst_report(runs: &[LevelRun]) -> Result<BurstRow> {
    let mut durations = Vec::with_capacity(runs.len());
    let n = runs.first().map(|r| r.report.requests.len());
    for r in runs {
        let d = r
            .report
            .burst_duration_s
            .ok_or_else(|| Error::ShapeMismatch(format!("run at {} has no burst", r.config.label())))?;
        if Some(r.report.requests.len()) != n {
            return Err(Error::ShapeMismatch("runs differ in request count".into()));
        }
        durations.push(d * 1e3);
    }
    if durations.is_empty() {
        return Err(Error::ShapeMismatch("no runs".into()));
    }
    let min = durations.iter().copied().fold(f64::INFINITY, f64::min);
    let max = durations.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(BurstRow {
        tburst_min_ms: min,
        max_dt_ms: max - min,
        levels: durations.len(),
    })
}

fn relative(value: f64, reference: Option<f64>) -> Option<f64> {
    reference.map(|r| if value == r { 1.0 } else { value / r })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BaselineRow {
    pub radio: String,
    pub lpm: bool,
    pub config: ClockConfig,
    #[serde(rename = "average_current_mA")]
    pub average_current_ma: f64,
    #[serde(rename = "energy_J")]
    pub energy_j: f64,
    pub relative: Option<f64>,
}

pub fn baseline_grid(profile: &CalibrationProfile, levels: &[ClockConfig]) -> Result<Vec<BaselineRow>> {
    let reference = reference_level(profile);
    let mut rows = Vec::new();
    for (radio, name) in [(MacSpec::Off, "sleep_baseline"), (MacSpec::Idle, "radio_listen")] {
        for lpm in [true, false] {
            let sc = Scenario {
                lpm,
                mac: radio.clone(),
                ..preset(name)?
            };
            let runs = level_sweep(&sc, levels, profile)?;
            let refc = runs
                .iter()
                .find(|r| r.config == reference)
                .map(|r| r.report.average_current_ma);
            for r in runs {
                rows.push(BaselineRow {
                    radio: radio.name().into(),
                    lpm,
                    config: r.config,
                    average_current_ma: r.report.average_current_ma,
                    energy_j: r.report.energy.energy_j,
                    relative: relative(r.report.average_current_ma, refc),
                });
            }
        }
    }
    Ok(rows)
}

pub fn idtx_poll_grid(profile: &CalibrationProfile, levels: &[ClockConfig]) -> Result<Vec<BaselineRow>> {
    let sc = preset("idtx_poll")?;
    let reference = reference_level(profile);
    let runs = level_sweep(&sc, levels, profile)?;
    let refc = runs
        .iter()
        .find(|r| r.config == reference)
        .map(|r| r.report.average_current_ma);
    Ok(runs
        .into_iter()
        .map(|r| BaselineRow {
            radio: "idtx".into(),
            lpm: true,
            config: r.config,
            average_current_ma: r.report.average_current_ma,
            energy_j: r.report.energy.energy_j,
            relative: relative(r.report.average_current_ma, refc),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DsmeRow {
    pub gts: usize,
    pub pattern: SpreadPattern,
    pub config: ClockConfig,
    #[serde(rename = "average_current_mA")]
    pub average_current_ma: f64,
    #[serde(rename = "energy_J")]
    pub energy_j: f64,
    pub deadline_misses: usize,
    pub relative: Option<f64>,
}

pub fn dsme_scenario(gts: usize, pattern: SpreadPattern) -> Result<Scenario> {
    let mut sc = preset("dsme_idle")?;
    if let MacSpec::Dsme(d) = &mut sc.mac {
        d.spread = (gts > 0).then_some(GtsSpread { count: gts, pattern });
    }
    Ok(sc)
}

pub fn dsme_grid(
    profile: &CalibrationProfile,
    gts_counts: &[usize],
    patterns: &[SpreadPattern],
    levels: &[ClockConfig],
) -> Result<Vec<DsmeRow>> {
    let reference = reference_level(profile);
    let mut rows = Vec::new();
    for &gts in gts_counts {
        for &pattern in patterns {
            if gts == 0 && pattern != patterns[0] {
                continue;
            }
            let runs = level_sweep(&dsme_scenario(gts, pattern)?, levels, profile)?;
            let refc = runs
                .iter()
                .find(|r| r.config == reference)
                .map(|r| r.report.average_current_ma);
            for r in runs {
                rows.push(DsmeRow {
                    gts,
                    pattern,
                    config: r.config,
                    average_current_ma: r.report.average_current_ma,
                    energy_j: r.report.energy.energy_j,
                    deadline_misses: r.report.deadline_misses.len(),
                    relative: relative(r.report.average_current_ma, refc),
                });
            }
        }
    }
    Ok(rows)
}

pub const PAYLOAD_GRID: [usize; 5] = [1, 16, 64, 128, 256];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoapRow {
    pub mac: String,
    pub method: Method,
    pub payload_bytes: usize,
    pub secure: bool,
    pub config: ClockConfig,
    #[serde(rename = "per_request_energy_J")]
    pub per_request_energy_j: f64,
    pub burst_ms: f64,
    pub deadline_misses: usize,
    pub relative: Option<f64>,
}

/// Burst of CoAP(S) requests over IDTX (10 requests) or DSME (4 requests).
pub fn coap_scenario(mac: &str, method: Method, payload_bytes: usize, secure: bool) -> Result<Scenario> {
    let mut sc = match mac {
        "idtx" => preset("idtx_burst")?,
        "dsme" => preset("dsme_burst")?,
        other => return Err(Error::Config(format!("unknown MAC mode `{other}` (idtx or dsme)"))),
    };
    let app = sc.app.as_mut().expect("burst presets carry an app");
    app.method = method;
    app.payload_bytes = payload_bytes;
    app.secure = secure;
    sc.name = format!("coap_{mac}");
    Ok(sc)
}

pub fn coap_grid(
    profile: &CalibrationProfile,
    macs: &[&str],
    methods: &[Method],
    payloads: &[usize],
    secure: &[bool],
    levels: &[ClockConfig],
) -> Result<Vec<CoapRow>> {
    let reference = reference_level(profile);
    let mut cells = Vec::new();
    for &mac in macs {
        for &m in methods {
            for &p in payloads {
                for &s in secure {
                    cells.push((mac, m, p, s));
                }
            }
        }
    }
    let groups: Vec<Vec<CoapRow>> = cells
        .par_iter()
        .map(|&(mac, m, p, s)| {
            let sc = coap_scenario(mac, m, p, s)?;
            let runs = level_sweep(&sc, levels, profile)?;
            let refe = runs
                .iter()
                .find(|r| r.config == reference)
                .and_then(|r| r.report.per_request_energy_j);
            Ok(runs
                .into_iter()
                .map(|r| {
                    let e = r.report.per_request_energy_j.unwrap_or(0.0);
                    CoapRow {
                        mac: mac.into(),
                        method: m,
                        payload_bytes: p,
                        secure: s,
                        config: r.config,
                        per_request_energy_j: e,
                        burst_ms: r.report.burst_duration_s.unwrap_or(0.0) * 1e3,
                        deadline_misses: r.report.deadline_misses.len(),
                        relative: relative(e, refe),
                    }
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(groups.into_iter().flatten().collect())
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::powermodel::SourceKind;
    use crate::sim::{self, compare_runs};

    #[test]
    fn level_lists() {
        let p = CalibrationProfile::default();
        let l = parse_levels("24, pll:80", &p).unwrap();
        let labels: Vec<String> = l.iter().map(|c| c.label()).collect();
        assert_eq!(labels, ["rc:24", "pll:24", "pll:80"]);
        assert_eq!(parse_levels("all,80", &p).unwrap().len(), p.all_configs().len());
        assert!(parse_levels("rc:80", &p).is_err());
        assert!(parse_levels("fast", &p).is_err());
        assert!(parse_levels("", &p).is_err());
        assert_eq!(reference_level(&p).kind(), SourceKind::Pll);
    }

    #[test]
    fn every_preset_parses() {
        for name in preset_names() {
            let sc = preset(name).unwrap();
            assert_eq!(sc.name, name);
        }
        assert!(preset("missing").is_err());
    }

    #[test]
    fn compare_needs_same_shape() {
        let p = CalibrationProfile::default();
        let a = sim::run(&preset("idtx_poll").unwrap(), &p).unwrap().1;
        let b = sim::run(&preset("sleep_baseline").unwrap(), &p).unwrap().1;
        assert!(matches!(compare_runs(&a, &b), Err(Error::ShapeMismatch(_))));
        let slow = sim::run(
            &at_level(&preset("idtx_poll").unwrap(), &parse_levels("rc:24", &p).unwrap()[0]),
            &p,
        )
        .unwrap()
        .1;
        let rel = compare_runs(&a, &slow).unwrap();
        assert!(rel.average_current_ratio < 1.0);
        assert_eq!(compare_runs(&a, &a).unwrap().energy_ratio, 1.0);
    }
}
