//! DVFS controller model: transition planning, the transition cache and
//! wake-from-sleep handling.

use std::collections::{BTreeMap, VecDeque};

use crate::error::{Error, Result};
use crate::powermodel::{power_of, segment_energy, CalibrationProfile, ClockConfig, ComponentState, McuState};
use crate::time::Ns;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathMode {
    SlowPath,
    CachedPath,
}

/// One abstract reconfiguration step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionOp {
    pub name: &'static str,
    pub duration: Ns,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionPlan {
    pub from: ClockConfig,
    pub to: ClockConfig,
    pub ops: Vec<TransitionOp>,
    pub total_duration: Ns,
    pub mode: PathMode,
}

const SLOW_STEPS: [(&str, u64); 6] = [
    ("resolve_current_tree", 20),
    ("switch_to_safe_source", 10),
    ("set_voltage_range", 15),
    ("configure_pll", 35),
    ("set_flash_latency", 5),
    ("select_core_source", 15),
];

const CACHED_STEPS: [(&str, u64); 2] = [("replay_register_writes", 60), ("await_source_ready", 40)];

fn split(steps: &[(&'static str, u64)], total: Ns) -> Vec<TransitionOp> {
    let weight: u64 = steps.iter().map(|s| s.1).sum();
    let mut ops: Vec<TransitionOp> = steps
        .iter()
        .map(|&(name, w)| TransitionOp {
            name,
            duration: Ns(total.0 * w / weight),
        })
        .collect();
    let assigned: u64 = ops.iter().map(|o| o.duration.0).sum();
    ops.last_mut().expect("non-empty step list").duration.0 += total.0 - assigned;
    ops
}

impl TransitionPlan {
    fn identity(cfg: ClockConfig, mode: PathMode) -> Self {
        TransitionPlan {
            from: cfg,
            to: cfg,
            ops: Vec::new(),
            total_duration: Ns::ZERO,
            mode,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.from == self.to
    }

    /// The replayable variant of this plan.
    fn to_cached(&self, profile: &CalibrationProfile) -> TransitionPlan {
        let total = profile.transition_cached();
        TransitionPlan {
            from: self.from,
            to: self.to,
            ops: split(&CACHED_STEPS, total),
            total_duration: total,
            mode: PathMode::CachedPath,
        }
    }
}

/// Plans a cold transition. Its duration does not depend on the endpoints.
pub fn plan_transition(from: ClockConfig, to: ClockConfig, profile: &CalibrationProfile) -> Result<TransitionPlan> {
    profile.check_level(&from)?;
    profile.check_level(&to)?;
    if from == to {
        return Ok(TransitionPlan::identity(from, PathMode::SlowPath));
    }
    let total = profile.transition_uncached();
    Ok(TransitionPlan {
        from,
        to,
        ops: split(&SLOW_STEPS, total),
        total_duration: total,
        mode: PathMode::SlowPath,
    })
}

/// The endpoint whose active power a transition draws.
pub fn transition_power_config(from: ClockConfig, to: ClockConfig, profile: &CalibrationProfile) -> ClockConfig {
    let key = |c: &ClockConfig| (c.core_hz(), profile.mcu_active_current_ma(c).to_bits());
    if key(&to) >= key(&from) {
        to
    } else {
        from
    }
}

/// Bounded LRU map from (from, to) to a cached plan.
#[derive(Debug, Clone)]
pub struct TransitionCache {
    capacity: usize,
    // Front is least recently used.
    entries: VecDeque<((ClockConfig, ClockConfig), TransitionPlan)>,
    hits: u64,
    misses: u64,
}

impl TransitionCache {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "cache capacity must be positive");
        TransitionCache {
            capacity,
            entries: VecDeque::with_capacity(capacity),
            hits: 0,
            misses: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn hits(&self) -> u64 {
        self.hits
    }

    pub fn misses(&self) -> u64 {
        self.misses
    }

    pub fn contains(&self, from: ClockConfig, to: ClockConfig) -> bool {
        self.entries.iter().any(|(k, _)| *k == (from, to))
    }

    /// Keys from least to most recently used.
    pub fn keys(&self) -> Vec<(ClockConfig, ClockConfig)> {
        self.entries.iter().map(|(k, _)| *k).collect()
    }

    fn take(&mut self, key: (ClockConfig, ClockConfig)) -> Option<TransitionPlan> {
        let pos = self.entries.iter().position(|(k, _)| *k == key)?;
        let entry = self.entries.remove(pos).expect("position is in range");
        let plan = entry.1.clone();
        self.entries.push_back(entry);
        Some(plan)
    }

    fn insert(&mut self, key: (ClockConfig, ClockConfig), plan: TransitionPlan) {
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back((key, plan));
    }

    /// Fills the cache without touching the hit/miss counters.
    pub fn prewarm(&mut self, from: ClockConfig, to: ClockConfig, profile: &CalibrationProfile) -> Result<()> {
        if from == to || self.contains(from, to) {
            return Ok(());
        }
        let plan = plan_transition(from, to, profile)?.to_cached(profile);
        self.insert((from, to), plan);
        Ok(())
    }

    /// Duration the next `from -> to` transition would take, without executing it.
    pub fn peek_duration(&self, from: ClockConfig, to: ClockConfig, profile: &CalibrationProfile) -> Ns {
        if from == to {
            Ns::ZERO
        } else if self.contains(from, to) {
            profile.transition_cached()
        } else {
            profile.transition_uncached()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransitionOutcome {
    Identity,
    Hit,
    Miss,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionResult {
    pub elapsed: Ns,
    pub energy_j: f64,
    pub outcome: TransitionOutcome,
    /// The MCU state drawn while the transition runs.
    pub power_config: ClockConfig,
    pub end_config: ClockConfig,
}

impl TransitionResult {
    pub fn cache_hit(&self) -> bool {
        self.outcome == TransitionOutcome::Hit
    }
}

pub fn execute_transition(
    cache: &mut TransitionCache,
    from: ClockConfig,
    to: ClockConfig,
    profile: &CalibrationProfile,
) -> Result<TransitionResult> {
    profile.check_level(&from)?;
    profile.check_level(&to)?;
    if from == to {
        return Ok(TransitionResult {
            elapsed: Ns::ZERO,
            energy_j: 0.0,
            outcome: TransitionOutcome::Identity,
            power_config: to,
            end_config: to,
        });
    }
    let key = (from, to);
    let (plan, outcome) = match cache.take(key) {
        Some(plan) => {
            cache.hits += 1;
            (plan, TransitionOutcome::Hit)
        }
        None => {
            cache.misses += 1;
            let slow = plan_transition(from, to, profile)?;
            cache.insert(key, slow.to_cached(profile));
            (slow, TransitionOutcome::Miss)
        }
    };
    debug_assert_eq!((plan.from, plan.to), key);
    let power_config = transition_power_config(from, to, profile);
    let power = power_of(&ComponentState::Mcu(McuState::Active(power_config)), profile)?;
    Ok(TransitionResult {
        elapsed: plan.total_duration,
        energy_j: segment_energy(power, plan.total_duration),
        outcome,
        power_config,
        end_config: plan.to,
    })
}

/// Static per-task clock assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct DvfsPolicy {
    pub task_targets: BTreeMap<String, ClockConfig>,
    pub default_config: ClockConfig,
}

impl DvfsPolicy {
    /// Every listed task at the same configuration.
    pub fn uniform(tasks: &[&str], cfg: ClockConfig, profile: &CalibrationProfile) -> Self {
        DvfsPolicy {
            task_targets: tasks.iter().map(|t| (t.to_string(), cfg)).collect(),
            default_config: ClockConfig::reset(profile),
        }
    }

    pub fn target(&self, task: &str) -> Result<ClockConfig> {
        self.task_targets
            .get(task)
            .copied()
            .ok_or_else(|| Error::UnknownTask(task.to_string()))
    }
}

/// Wake-up into `next_task`: a single direct transition from the post-reset
/// configuration to the task's target.
pub fn on_wakeup(
    cache: &mut TransitionCache,
    policy: &DvfsPolicy,
    next_task: &str,
    profile: &CalibrationProfile,
) -> Result<TransitionResult> {
    let target = policy.target(next_task)?;
    execute_transition(cache, policy.default_config, target, profile)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::powermodel::SourceKind;

    fn p() -> CalibrationProfile {
        CalibrationProfile::default()
    }

    fn cfg(kind: SourceKind, mhz: u32) -> ClockConfig {
        ClockConfig::new(kind, mhz, &p()).unwrap()
    }

    #[test]
    fn slow_path_duration_is_constant() {
        let pr = p();
        let plan = plan_transition(cfg(SourceKind::Pll, 24), cfg(SourceKind::Pll, 80), &pr).unwrap();
        assert_eq!(plan.total_duration, Ns::from_ms(25));
        assert_eq!(plan.mode, PathMode::SlowPath);
        let sum: u64 = plan.ops.iter().map(|o| o.duration.0).sum();
        assert_eq!(Ns(sum), plan.total_duration);
        let other = plan_transition(cfg(SourceKind::Rc, 8), cfg(SourceKind::Rc, 48), &pr).unwrap();
        assert_eq!(other.total_duration, Ns::from_ms(25));
        let id = plan_transition(cfg(SourceKind::Rc, 24), cfg(SourceKind::Rc, 24), &pr).unwrap();
        assert!(id.ops.is_empty());
        assert_eq!(id.total_duration, Ns::ZERO);
    }

    #[test]
    fn miss_then_hit() {
        let pr = p();
        let mut cache = TransitionCache::new(8);
        let a = cfg(SourceKind::Pll, 24);
        let b = cfg(SourceKind::Pll, 80);
        let first = execute_transition(&mut cache, a, b, &pr).unwrap();
        let second = execute_transition(&mut cache, a, b, &pr).unwrap();
        assert_eq!(first.outcome, TransitionOutcome::Miss);
        assert_eq!(first.elapsed, Ns::from_ms(25));
        assert!(second.cache_hit());
        assert_eq!(second.elapsed, pr.transition_cached());
        assert_eq!(first.end_config, second.end_config);
        assert_eq!(second.power_config, b);
    }

    #[test]
    fn lru_capacity_one() {
        let pr = p();
        let mut cache = TransitionCache::new(1);
        let a = cfg(SourceKind::Rc, 8);
        let b = cfg(SourceKind::Pll, 48);
        assert!(!execute_transition(&mut cache, a, b, &pr).unwrap().cache_hit());
        assert!(!execute_transition(&mut cache, b, a, &pr).unwrap().cache_hit());
        assert!(!execute_transition(&mut cache, a, b, &pr).unwrap().cache_hit());
        assert_eq!(cache.len(), 1);
        assert_eq!(cache.misses(), 3);
    }

    #[test]
    fn wakeup_is_single_direct_transition() {
        let pr = p();
        let mut cache = TransitionCache::new(8);
        let target = cfg(SourceKind::Pll, 24);
        let policy = DvfsPolicy::uniform(&["net"], target, &pr);
        let r = on_wakeup(&mut cache, &policy, "net", &pr).unwrap();
        assert_eq!(r.outcome, TransitionOutcome::Miss);
        assert_eq!(r.elapsed, Ns::from_ms(25));
        assert_eq!(cache.keys(), vec![(ClockConfig::reset(&pr), target)]);
        assert!(on_wakeup(&mut cache, &policy, "net", &pr).unwrap().cache_hit());
        assert!(matches!(
            on_wakeup(&mut cache, &policy, "nope", &pr),
            Err(Error::UnknownTask(_))
        ));

        let idle = DvfsPolicy::uniform(&["idle"], ClockConfig::reset(&pr), &pr);
        let r = on_wakeup(&mut cache, &idle, "idle", &pr).unwrap();
        assert_eq!(r.outcome, TransitionOutcome::Identity);
        assert_eq!(r.energy_j, 0.0);
    }
}
