//! Discrete-event simulation of a node running a scenario.

mod engine;
pub mod report;
pub mod scenario;
pub mod trace;

pub use report::{compare_runs, JobRecord, JobReport, RelativeReport, RequestReport, RequestWindow, RunReport};
pub use scenario::{
    AppSpec, DsmeSpec, ExtraTask, GtsSpread, IdtxSpec, MacSpec, PolicySpec, Scenario, SpreadPattern, TASK_APP,
    TASK_MAC, TASK_TIMER,
};
pub use trace::{energy_within, export_trace, read_trace, read_trace_file, reintegrate, Segment, SimTrace, TraceRow};

use crate::error::Result;
use crate::powermodel::{CalibrationProfile, EnergyReport};
use crate::time::Ns;

/// Clips `[a, b)` to the given sorted windows.
fn clip(a: Ns, b: Ns, windows: &[(Ns, Ns)]) -> Vec<(Ns, Ns)> {
    windows
        .iter()
        .filter_map(|&(wa, wb)| {
            let (lo, hi) = (a.max(wa), b.min(wb));
            (lo < hi).then_some((lo, hi))
        })
        .collect()
}

/// Runs a scenario to completion.
pub fn run(scenario: &Scenario, profile: &CalibrationProfile) -> Result<(SimTrace, RunReport)> {
    let raw = engine::execute(scenario, profile)?;
    let trace = raw.trace;
    let energy = EnergyReport::from_components(raw.per_component, trace.end);
    let average_current_ma = if trace.end > Ns::ZERO {
        energy.energy_j / (profile.supply_voltage_v * energy.duration_s) * 1e3
    } else {
        0.0
    };
    let mut requests = Vec::with_capacity(raw.windows.len());
    for w in &raw.windows {
        let ranges = if raw.cfp.is_empty() {
            vec![(w.start, w.end)]
        } else {
            clip(w.start, w.end, &raw.cfp)
        };
        requests.push(RequestReport {
            id: w.id,
            start_s: w.start.as_secs_f64(),
            end_s: w.end.as_secs_f64(),
            energy: energy_within(&trace, &ranges, profile)?,
        });
    }
    let per_request_energy_j =
        (!requests.is_empty()).then(|| requests.iter().map(|r| r.energy.energy_j).sum::<f64>() / requests.len() as f64);
    let burst_duration_s = match (raw.windows.first(), raw.windows.last()) {
        (Some(a), Some(b)) => Some((b.end - a.start).as_secs_f64()),
        _ => None,
    };
    let mut jobs = Vec::with_capacity(raw.jobs.len());
    for j in &raw.jobs {
        jobs.push(JobReport {
            task: j.task.clone(),
            label: j.label.clone(),
            start_s: j.start.as_secs_f64(),
            exec_start_s: j.exec_start.as_secs_f64(),
            end_s: j.end.as_secs_f64(),
            energy_j: energy_within(&trace, &[(j.exec_start, j.end)], profile)?.energy_j,
            energy_with_transition_j: energy_within(&trace, &[(j.start, j.end)], profile)?.energy_j,
        });
    }
    let report = RunReport {
        scenario: scenario.name.clone(),
        mac: scenario.mac.name().to_string(),
        policy: policy_label(scenario),
        seed: scenario.seed,
        energy,
        average_current_ma,
        requests,
        per_request_energy_j,
        deadline_misses: raw.misses,
        burst_duration_s,
        cache_hits: raw.cache_hits,
        cache_misses: raw.cache_misses,
        jobs,
    };
    Ok((trace, report))
}

fn policy_label(sc: &Scenario) -> String {
    let mut s = sc.policy.all.clone();
    for (k, v) in &sc.policy.tasks {
        s.push_str(&format!(" {k}={v}"));
    }
    s
}
