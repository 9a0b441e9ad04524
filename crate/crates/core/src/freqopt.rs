//! Per-level task evaluation and offline frequency selection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mac::{idtx_poll_transaction, IdtxConfig};
use crate::powermodel::{
    power_of, segment_energy, CalibrationProfile, ClockConfig, ComponentState, McuState, RadioState, SourceKind,
};
use crate::time::Ns;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaitSegment {
    pub state: RadioState,
    pub duration_s: f64,
}

/// A task as fixed compute cycles plus a frequency-independent wait.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskProfile {
    pub label: String,
    pub compute_cycles: u64,
    #[serde(default)]
    pub wait_time_s: f64,
    /// Radio states during the wait; the radio is off for any remainder.
    #[serde(default)]
    pub wait_states: Vec<WaitSegment>,
}

impl TaskProfile {
    pub fn compute(label: &str, cycles: u64) -> Self {
        TaskProfile {
            label: label.into(),
            compute_cycles: cycles,
            wait_time_s: 0.0,
            wait_states: Vec::new(),
        }
    }

    pub fn wait(label: &str, wait_s: f64, radio: RadioState) -> Self {
        TaskProfile {
            label: label.into(),
            compute_cycles: 0,
            wait_time_s: wait_s,
            wait_states: vec![WaitSegment {
                state: radio,
                duration_s: wait_s,
            }],
        }
    }

    /// Signal-processing workload of the default profile.
    pub fn fft(profile: &CalibrationProfile) -> Self {
        TaskProfile::compute("fft", profile.workload_cycles.fft)
    }

    /// One idle IDTX poll round with its pre- and post-processing.
    pub fn idtx_request(profile: &CalibrationProfile, cfg: &IdtxConfig) -> Result<Self> {
        let ops = idtx_poll_transaction(cfg, &[])?;
        let wait_states: Vec<WaitSegment> = ops
            .iter()
            .map(|o| WaitSegment {
                state: o.state,
                duration_s: o.duration.as_secs_f64(),
            })
            .collect();
        let wc = &profile.workload_cycles;
        Ok(TaskProfile {
            label: "idtx_request".into(),
            compute_cycles: wc.idtx_pre + wc.idtx_post,
            wait_time_s: ops
                .iter()
                .map(|o| o.duration)
                .fold(Ns::ZERO, |a, b| a + b)
                .as_secs_f64(),
            wait_states,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.wait_time_s >= 0.0) || self.wait_states.iter().any(|w| !(w.duration_s >= 0.0)) {
            return Err(Error::Config(format!("`{}`: negative wait", self.label)));
        }
        if self.compute_cycles == 0 && self.wait_time_s == 0.0 {
            return Err(Error::Config(format!("`{}`: empty task", self.label)));
        }
        let listed: f64 = self.wait_states.iter().map(|w| w.duration_s).sum();
        if listed > self.wait_time_s * (1.0 + 1e-9) + 1e-12 {
            return Err(Error::Config(format!(
                "`{}`: wait states cover {listed} s of a {} s wait",
                self.label, self.wait_time_s
            )));
        }
        Ok(())
    }

    pub fn scaled(&self, c: f64) -> Self {
        TaskProfile {
            compute_cycles: (self.compute_cycles as f64 * c).round() as u64,
            wait_time_s: self.wait_time_s * c,
            wait_states: self
                .wait_states
                .iter()
                .map(|w| WaitSegment {
                    state: w.state,
                    duration_s: w.duration_s * c,
                })
                .collect(),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub config: ClockConfig,
    pub time_s: f64,
    #[serde(rename = "energy_J")]
    pub energy_j: f64,
    #[serde(rename = "edp_Js")]
    pub edp_js: f64,
    pub cycles_consumed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormalizedRow {
    pub config: ClockConfig,
    pub time: f64,
    pub energy: f64,
    pub edp: f64,
    pub cycles: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sweep {
    pub rows: Vec<SweepRow>,
    pub normalized: Vec<NormalizedRow>,
    pub reference: ClockConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Energy,
    Edp,
    Time,
}

impl Metric {
    pub fn of(self, row: &SweepRow) -> f64 {
        match self {
            Metric::Energy => row.energy_j,
            Metric::Edp => row.edp_js,
            Metric::Time => row.time_s,
        }
    }
}

pub fn evaluate(task: &TaskProfile, config: &ClockConfig, profile: &CalibrationProfile) -> Result<SweepRow> {
    profile.check_level(config)?;
    task.validate()?;
    let compute = Ns::for_cycles(task.compute_cycles, config.core_hz());
    let wait = Ns::from_secs_f64(task.wait_time_s);
    let total = compute + wait;
    let mcu = power_of(&ComponentState::Mcu(McuState::Active(*config)), profile)?;
    let mut energy = segment_energy(mcu, total);
    for w in &task.wait_states {
        let p = power_of(&ComponentState::Radio(w.state), profile)?;
        energy += segment_energy(p, Ns::from_secs_f64(w.duration_s));
    }
    let time_s = total.as_secs_f64();
    Ok(SweepRow {
        config: *config,
        time_s,
        energy_j: energy,
        edp_js: energy * time_s,
        cycles_consumed: task.compute_cycles + (task.wait_time_s * config.core_hz() as f64).round() as u64,
    })
}

/// The row normalization divides by: the PLL at the highest frequency, or
/// the fastest row when that level is absent.
fn reference_index(rows: &[SweepRow]) -> usize {
    let mut best = 0;
    for (i, r) in rows.iter().enumerate() {
        let b = &rows[best];
        let key = |c: &ClockConfig| (c.core_hz(), c.kind() == SourceKind::Pll);
        if key(&r.config) > key(&b.config) {
            best = i;
        }
    }
    best
}

pub fn sweep(task: &TaskProfile, levels: &[ClockConfig], profile: &CalibrationProfile) -> Result<Sweep> {
    if levels.is_empty() {
        return Err(Error::Config("empty level list".into()));
    }
    let rows = levels
        .iter()
        .map(|c| evaluate(task, c, profile))
        .collect::<Result<Vec<_>>>()?;
    let r = rows[reference_index(&rows)];
    let div = |a: f64, b: f64| if a == b { 1.0 } else { a / b };
    let normalized = rows
        .iter()
        .map(|x| NormalizedRow {
            config: x.config,
            time: div(x.time_s, r.time_s),
            energy: div(x.energy_j, r.energy_j),
            edp: div(x.edp_js, r.edp_js),
            cycles: div(x.cycles_consumed as f64, r.cycles_consumed as f64),
        })
        .collect();
    Ok(Sweep {
        rows,
        normalized,
        reference: r.config,
    })
}

/// Ordering used to break metric ties: lower frequency first, then RC.
fn tie_key(c: &ClockConfig) -> (u64, u8) {
    (c.core_hz(), if c.kind() == SourceKind::Rc { 0 } else { 1 })
}

pub fn select_optimal(rows: &[SweepRow], metric: Metric) -> Option<ClockConfig> {
    rows.iter()
        .min_by(|a, b| {
            metric
                .of(a)
                .total_cmp(&metric.of(b))
                .then_with(|| tie_key(&a.config).cmp(&tie_key(&b.config)))
        })
        .map(|r| r.config)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> CalibrationProfile {
        CalibrationProfile::default()
    }

    #[test]
    fn fft_costs_29_5_uj_at_80_mhz() {
        let pr = p();
        let c80 = ClockConfig::new(SourceKind::Pll, 80, &pr).unwrap();
        let row = evaluate(&TaskProfile::fft(&pr), &c80, &pr).unwrap();
        assert!((row.energy_j - 29.5e-6).abs() < 0.01e-6, "{}", row.energy_j);
    }

    #[test]
    fn pure_compute_time() {
        let pr = p();
        let c80 = ClockConfig::new(SourceKind::Pll, 80, &pr).unwrap();
        let row = evaluate(&TaskProfile::compute("x", 1_000_000), &c80, &pr).unwrap();
        assert_eq!(row.time_s, 0.0125);
        assert_eq!(row.cycles_consumed, 1_000_000);
    }

    #[test]
    fn pure_wait_time_is_frequency_independent() {
        let pr = p();
        let t = TaskProfile::wait("w", 1.0, RadioState::Off);
        for c in pr.all_configs() {
            let row = evaluate(&t, &c, &pr).unwrap();
            assert_eq!(row.time_s, 1.0);
            assert_eq!(row.cycles_consumed, c.core_hz());
        }
    }

    #[test]
    fn fft_edp_rises_below_fmax() {
        let pr = p();
        let levels: Vec<ClockConfig> = pr
            .frequency_levels_mhz
            .iter()
            .map(|&f| ClockConfig::new(SourceKind::Pll, f, &pr).unwrap())
            .collect();
        let s = sweep(&TaskProfile::fft(&pr), &levels, &pr).unwrap();
        for w in s.rows.windows(2) {
            assert!(w[0].edp_js > w[1].edp_js);
        }
        assert_eq!(select_optimal(&s.rows, Metric::Edp), Some(*levels.last().unwrap()));
    }

    #[test]
    fn idtx_profile_lower_at_reduced_frequency() {
        let pr = p();
        let t = TaskProfile::idtx_request(&pr, &IdtxConfig::default()).unwrap();
        let c24 = ClockConfig::new(SourceKind::Pll, 24, &pr).unwrap();
        let c80 = ClockConfig::new(SourceKind::Pll, 80, &pr).unwrap();
        let a = evaluate(&t, &c24, &pr).unwrap();
        let b = evaluate(&t, &c80, &pr).unwrap();
        assert!(a.energy_j < b.energy_j);
        let s = sweep(&t, &pr.all_configs(), &pr).unwrap();
        let best = select_optimal(&s.rows, Metric::Energy).unwrap();
        assert!(best.core_hz() < c80.core_hz());
    }

    #[test]
    fn single_level_normalizes_to_one() {
        let pr = p();
        let c = ClockConfig::new(SourceKind::Rc, 16, &pr).unwrap();
        let s = sweep(&TaskProfile::fft(&pr), &[c], &pr).unwrap();
        let n = s.normalized[0];
        assert_eq!((n.time, n.energy, n.edp, n.cycles), (1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn ties_go_to_lower_frequency_then_rc() {
        let pr = p();
        let mk = |k, f| SweepRow {
            config: ClockConfig::new(k, f, &pr).unwrap(),
            time_s: 1.0,
            energy_j: 1.0,
            edp_js: 1.0,
            cycles_consumed: 1,
        };
        let rows = [mk(SourceKind::Pll, 48), mk(SourceKind::Pll, 16), mk(SourceKind::Rc, 16)];
        assert_eq!(select_optimal(&rows, Metric::Energy), Some(rows[2].config));
        assert_eq!(select_optimal(&[], Metric::Time), None);
    }

    #[test]
    fn bad_profiles_rejected() {
        let pr = p();
        let c = ClockConfig::new(SourceKind::Rc, 16, &pr).unwrap();
        assert!(evaluate(&TaskProfile::compute("none", 0), &c, &pr).is_err());
        let mut t = TaskProfile::wait("w", 1.0, RadioState::Tx);
        t.wait_states[0].duration_s = 2.0;
        assert!(evaluate(&t, &c, &pr).is_err());
    }
}
