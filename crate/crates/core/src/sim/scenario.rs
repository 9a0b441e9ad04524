//! Scenario description loaded from JSON.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::clockctl::DvfsPolicy;
use crate::error::{Error, Result};
use crate::mac::{DsmeConfig, GtsDirection, GtsSlot, IdtxConfig};
use crate::netstack::{Method, StackOverheads};
use crate::powermodel::{CalibrationProfile, ClockConfig};
use crate::time::Ns;

pub const TASK_TIMER: &str = "timer";
pub const TASK_MAC: &str = "mac";
pub const TASK_APP: &str = "app";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum MacSpec {
    /// Radio powered off for the whole run.
    #[default]
    Off,
    /// Radio always listening; uplink via CSMA/CA.
    Idle,
    Idtx(IdtxSpec),
    Dsme(DsmeSpec),
}

impl MacSpec {
    pub fn name(&self) -> &'static str {
        match self {
            MacSpec::Off => "off",
            MacSpec::Idle => "idle",
            MacSpec::Idtx(_) => "idtx",
            MacSpec::Dsme(_) => "dsme",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct IdtxSpec {
    #[serde(flatten)]
    pub config: IdtxConfig,
    /// Time of the first poll; defaults to one poll interval.
    pub first_poll_s: Option<f64>,
    /// Number of polls; unlimited when absent.
    pub polls: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpreadPattern {
    Tx,
    Rx,
    Alternate,
}

/// GTS allocation spread evenly over the CFP slots of one multisuperframe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GtsSpread {
    pub count: usize,
    pub pattern: SpreadPattern,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct DsmeSpec {
    #[serde(flatten)]
    pub config: DsmeConfig,
    pub spread: Option<GtsSpread>,
}

impl DsmeSpec {
    /// The DSME configuration with any spread allocation expanded.
    pub fn resolved(&self) -> Result<DsmeConfig> {
        let mut cfg = self.config.clone();
        cfg.validate()?;
        if let Some(sp) = self.spread {
            let pos = cfg.cfp_positions();
            if sp.count > pos.len() {
                return Err(Error::Config(format!(
                    "{} GTS requested but only {} CFP slots exist",
                    sp.count,
                    pos.len()
                )));
            }
            for j in 0..sp.count {
                let (sf, slot) = pos[j * pos.len() / sp.count];
                let direction = match sp.pattern {
                    SpreadPattern::Tx => GtsDirection::Uplink,
                    SpreadPattern::Rx => GtsDirection::Downlink,
                    SpreadPattern::Alternate if j % 2 == 0 => GtsDirection::Uplink,
                    SpreadPattern::Alternate => GtsDirection::Downlink,
                };
                cfg.gts.push(GtsSlot {
                    direction,
                    superframe_index: sf,
                    slot_index: slot,
                    channel: 0,
                });
            }
            cfg.validate()?;
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AppSpec {
    pub method: Method,
    pub payload_bytes: usize,
    pub secure: bool,
    /// Requests issued back to back.
    pub burst: u32,
    pub block_size: usize,
    /// Issue time of the first request. For DSME the default is the start
    /// of the third uplink GTS.
    pub start_s: Option<f64>,
}

impl Default for AppSpec {
    fn default() -> Self {
        AppSpec {
            method: Method::Get,
            payload_bytes: 16,
            secure: false,
            burst: 1,
            block_size: 64,
            start_s: None,
        }
    }
}

/// Extra compute job, e.g. a signal-processing task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtraTask {
    pub id: String,
    /// Defaults to the profile workload of the same name.
    #[serde(default)]
    pub cycles: Option<u64>,
    /// Absolute release time.
    #[serde(default)]
    pub at_s: Option<f64>,
    /// Release right after the first job of this task completes.
    #[serde(default)]
    pub after: Option<String>,
}

impl ExtraTask {
    pub fn resolved_cycles(&self, profile: &CalibrationProfile) -> Result<u64> {
        if let Some(c) = self.cycles {
            return Ok(c);
        }
        serde_json::to_value(profile.workload_cycles)?
            .get(&self.id)
            .and_then(|v| v.as_u64())
            .ok_or_else(|| Error::Config(format!("task `{}` has no cycles and no profile workload", self.id)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicySpec {
    /// Target of every task not listed in `tasks`.
    pub all: String,
    pub tasks: BTreeMap<String, String>,
}

impl Default for PolicySpec {
    fn default() -> Self {
        PolicySpec {
            all: "pll:80".into(),
            tasks: BTreeMap::new(),
        }
    }
}

impl PolicySpec {
    pub fn uniform(cfg: &ClockConfig) -> Self {
        PolicySpec {
            all: cfg.label(),
            tasks: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    /// Run length; when absent the run ends once the application finishes.
    pub duration_s: Option<f64>,
    /// Upper bound for open-ended runs.
    pub max_duration_s: f64,
    pub lpm: bool,
    pub timer: bool,
    /// First timer wakeup; later ones follow every timer period.
    pub timer_phase_s: f64,
    pub prewarm_cache: bool,
    pub policy: PolicySpec,
    pub mac: MacSpec,
    pub app: Option<AppSpec>,
    pub overheads: Option<StackOverheads>,
    pub tasks: Vec<ExtraTask>,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            name: "scenario".into(),
            seed: 1,
            duration_s: Some(10.0),
            max_duration_s: 120.0,
            lpm: true,
            timer: true,
            timer_phase_s: 0.5,
            prewarm_cache: true,
            policy: PolicySpec::default(),
            mac: MacSpec::Off,
            app: None,
            overheads: None,
            tasks: Vec::new(),
        }
    }
}

impl Scenario {
    pub fn from_json(s: &str) -> Result<Scenario> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn load(path: &std::path::Path) -> Result<Scenario> {
        Scenario::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn task_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = [TASK_TIMER, TASK_MAC, TASK_APP].iter().map(|s| s.to_string()).collect();
        for t in &self.tasks {
            if !ids.contains(&t.id) {
                ids.push(t.id.clone());
            }
        }
        ids
    }

    pub fn build_policy(&self, profile: &CalibrationProfile) -> Result<DvfsPolicy> {
        let ids = self.task_ids();
        let all = ClockConfig::parse_label(&self.policy.all, profile)?;
        let mut task_targets: BTreeMap<String, ClockConfig> = ids.iter().map(|t| (t.clone(), all)).collect();
        for (task, label) in &self.policy.tasks {
            if !ids.contains(task) {
                return Err(Error::UnknownTask(task.clone()));
            }
            task_targets.insert(task.clone(), ClockConfig::parse_label(label, profile)?);
        }
        Ok(DvfsPolicy {
            task_targets,
            default_config: ClockConfig::reset(profile),
        })
    }

    pub fn stack_overheads(&self, profile: &CalibrationProfile) -> Result<StackOverheads> {
        let mut ov = self.overheads.unwrap_or_else(|| StackOverheads::from_profile(profile));
        if let Some(app) = &self.app {
            ov.block_size = app.block_size;
        }
        ov.validate()?;
        Ok(ov)
    }

    pub fn validate(&self, profile: &CalibrationProfile) -> Result<()> {
        self.build_policy(profile)?;
        self.stack_overheads(profile)?;
        let ids = self.task_ids();
        for t in &self.tasks {
            t.resolved_cycles(profile)?;
            if [TASK_TIMER, TASK_MAC, TASK_APP].contains(&t.id.as_str()) {
                return Err(Error::Config(format!("task id `{}` is reserved", t.id)));
            }
            match (&t.at_s, &t.after) {
                (Some(_), None) => {}
                (None, Some(a)) if ids.contains(a) => {}
                (None, Some(a)) => return Err(Error::UnknownTask(a.clone())),
                _ => {
                    return Err(Error::Config(format!(
                        "task `{}` needs exactly one of at_s or after",
                        t.id
                    )))
                }
            }
        }
        if let Some(d) = self.duration_s {
            if !(d >= 0.0) {
                return Err(Error::Config("duration_s must be non-negative".into()));
            }
        }
        if !(self.max_duration_s > 0.0) {
            return Err(Error::Config("max_duration_s must be positive".into()));
        }
        match &self.mac {
            MacSpec::Idtx(s) => s.config.validate()?,
            MacSpec::Dsme(s) => {
                s.resolved()?;
            }
            _ => {}
        }
        if let Some(app) = &self.app {
            if app.payload_bytes == 0 {
                return Err(Error::Config("payload_bytes must be at least 1".into()));
            }
            if matches!(self.mac, MacSpec::Off) && app.burst > 0 {
                return Err(Error::Config("application traffic needs a radio".into()));
            }
        }
        Ok(())
    }

    /// Hard stop of the run.
    pub fn horizon(&self) -> Ns {
        Ns::from_secs_f64(self.duration_s.unwrap_or(self.max_duration_s))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_fill_missing_fields() {
        let sc = Scenario::from_json(r#"{"name": "x", "mac": {"mode": "idtx"}}"#).unwrap();
        assert_eq!(sc.seed, 1);
        assert_eq!(sc.duration_s, Some(10.0));
        assert!(sc.lpm);
        assert_eq!(sc.policy.all, "pll:80");
        assert!(matches!(sc.mac, MacSpec::Idtx(_)));
        let back = Scenario::from_json(&sc.to_json()).unwrap();
        assert_eq!(back, sc);
    }

    #[test]
    fn unknown_policy_task_is_rejected() {
        let p = CalibrationProfile::default();
        let sc = Scenario::from_json(r#"{"name": "x", "policy": {"tasks": {"ghost": "pll:24"}}}"#).unwrap();
        assert!(matches!(sc.validate(&p), Err(Error::UnknownTask(_))));
        let sc = Scenario::from_json(r#"{"name": "x", "policy": {"all": "rc:80"}}"#).unwrap();
        assert!(sc.validate(&p).is_err());
    }
}
