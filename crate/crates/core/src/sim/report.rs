//! Run reports and their comparison.

use serde::{Deserialize, Serialize};

use crate::clockctl::TransitionOutcome;
use crate::error::{Error, Result};
use crate::mac::DeadlineMiss;
use crate::powermodel::EnergyReport;
use crate::time::Ns;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestWindow {
    pub id: u32,
    pub start: Ns,
    pub end: Ns,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JobRecord {
    pub task: String,
    pub label: String,
    pub release: Ns,
    /// Wake-up or switch begins here.
    pub start: Ns,
    /// The task's own work begins here, after any clock transition.
    pub exec_start: Ns,
    pub end: Ns,
    pub transition: TransitionOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobReport {
    pub task: String,
    pub label: String,
    pub start_s: f64,
    pub exec_start_s: f64,
    pub end_s: f64,
    /// Energy from `exec_start` to `end`.
    #[serde(rename = "energy_J")]
    pub energy_j: f64,
    /// Energy from `start` to `end`, clock transition included.
    #[serde(rename = "energy_with_transition_J")]
    pub energy_with_transition_j: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestReport {
    pub id: u32,
    pub start_s: f64,
    pub end_s: f64,
    pub energy: EnergyReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub mac: String,
    pub policy: String,
    pub seed: u64,
    pub energy: EnergyReport,
    #[serde(rename = "average_current_mA")]
    pub average_current_ma: f64,
    pub requests: Vec<RequestReport>,
    /// Mean per-request energy, if any request completed.
    #[serde(rename = "per_request_energy_J")]
    pub per_request_energy_j: Option<f64>,
    pub deadline_misses: Vec<DeadlineMiss>,
    pub burst_duration_s: Option<f64>,
    pub cache_hits: u64,
    pub cache_misses: u64,
    pub jobs: Vec<JobReport>,
}

impl RunReport {
    pub fn deadline_clean(&self) -> bool {
        self.deadline_misses.is_empty()
    }

    /// Reports of jobs belonging to `task`, in execution order.
    pub fn jobs_of<'a>(&'a self, task: &'a str) -> impl Iterator<Item = &'a JobReport> + 'a {
        self.jobs.iter().filter(move |j| j.task == task)
    }

    pub fn request_end_times(&self) -> Vec<f64> {
        self.requests.iter().map(|r| r.end_s).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelativeReport {
    pub energy_ratio: f64,
    pub average_current_ratio: f64,
    pub per_request_energy_ratio: Option<f64>,
    pub duration_ratio: f64,
    /// Largest difference of matching request completion times.
    pub max_dt_s: f64,
    pub burst_delta_s: Option<f64>,
}

fn ratio(a: f64, b: f64) -> f64 {
    if a == b {
        1.0
    } else {
        a / b
    }
}

/// Candidate relative to reference; both must come from the same scenario shape.
pub fn compare_runs(reference: &RunReport, candidate: &RunReport) -> Result<RelativeReport> {
    if reference.scenario != candidate.scenario
        || reference.mac != candidate.mac
        || reference.requests.len() != candidate.requests.len()
    {
        return Err(Error::ShapeMismatch(format!(
            "`{}` ({}, {} requests) vs `{}` ({}, {} requests)",
            reference.scenario,
            reference.mac,
            reference.requests.len(),
            candidate.scenario,
            candidate.mac,
            candidate.requests.len()
        )));
    }
    let max_dt_s = reference
        .requests
        .iter()
        .zip(&candidate.requests)
        .map(|(a, b)| (a.end_s - b.end_s).abs().max((a.start_s - b.start_s).abs()))
        .fold(0.0, f64::max);
    Ok(RelativeReport {
        energy_ratio: ratio(candidate.energy.energy_j, reference.energy.energy_j),
        average_current_ratio: ratio(candidate.average_current_ma, reference.average_current_ma),
        per_request_energy_ratio: match (candidate.per_request_energy_j, reference.per_request_energy_j) {
            (Some(c), Some(r)) => Some(ratio(c, r)),
            _ => None,
        },
        duration_ratio: ratio(candidate.energy.duration_s, reference.energy.duration_s),
        max_dt_s,
        burst_delta_s: match (candidate.burst_duration_s, reference.burst_duration_s) {
            (Some(c), Some(r)) => Some(c - r),
            _ => None,
        },
    })
}
