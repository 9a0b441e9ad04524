//! Clock configurations, the core-voltage rule and the component-state power model.
//!
//! MCU active current is linear in frequency for a fixed clock source and core
//! voltage: `I = I_base(V) + k_src(V) * f`. Everything else (LPM, radio states)
//! is a tabulated constant current drawn from the supply rail.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::time::Ns;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    #[serde(alias = "rc_direct", alias = "RcDirect")]
    Rc,
    #[serde(alias = "Pll")]
    Pll,
}

impl SourceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SourceKind::Rc => "rc",
            SourceKind::Pll => "pll",
        }
    }

    pub fn parse(s: &str) -> Option<SourceKind> {
        match s.to_ascii_lowercase().as_str() {
            "rc" | "rc_direct" | "rcdirect" => Some(SourceKind::Rc),
            "pll" => Some(SourceKind::Pll),
            _ => None,
        }
    }
}

/// Where the core clock comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ClockSource {
    RcDirect,
    Pll { input_hz: u64 },
}

impl ClockSource {
    pub fn kind(&self) -> SourceKind {
        match self {
            ClockSource::RcDirect => SourceKind::Rc,
            ClockSource::Pll { .. } => SourceKind::Pll,
        }
    }
}

/// A DVFS operating point. The core voltage is always derived from the
/// frequency through [`voltage_rule`]; there is no way to build a config
/// with a free voltage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ClockConfig {
    source: ClockSource,
    core_hz: u64,
    core_mv: u32,
}

impl ClockConfig {
    pub fn new(kind: SourceKind, core_mhz: u32, profile: &CalibrationProfile) -> Result<Self> {
        let core_hz = core_mhz as u64 * 1_000_000;
        let source = match kind {
            SourceKind::Rc => ClockSource::RcDirect,
            SourceKind::Pll => ClockSource::Pll {
                input_hz: (profile.pll_input_mhz * 1e6).round() as u64,
            },
        };
        let volts = voltage_rule(core_hz, profile);
        let cfg = ClockConfig {
            source,
            core_hz,
            core_mv: (volts * 1000.0).round() as u32,
        };
        profile.check_level(&cfg)?;
        Ok(cfg)
    }

    /// Builds a config with an explicitly requested voltage; rejected unless
    /// it matches the voltage rule.
    pub fn with_voltage(kind: SourceKind, core_mhz: u32, volts: f64, profile: &CalibrationProfile) -> Result<Self> {
        let cfg = ClockConfig::new(kind, core_mhz, profile)?;
        if (cfg.core_voltage() - volts).abs() > 1e-9 {
            return Err(Error::invalid(
                &cfg,
                &format!("core voltage {volts} V contradicts the voltage rule"),
            ));
        }
        Ok(cfg)
    }

    /// The post-reset hardware configuration of the profile.
    pub fn reset(profile: &CalibrationProfile) -> Self {
        ClockConfig::new(SourceKind::Rc, profile.reset_mhz, profile).expect("reset configuration is always valid")
    }

    pub fn source(&self) -> ClockSource {
        self.source
    }

    pub fn kind(&self) -> SourceKind {
        self.source.kind()
    }

    pub fn core_hz(&self) -> u64 {
        self.core_hz
    }

    pub fn core_mhz(&self) -> f64 {
        self.core_hz as f64 / 1e6
    }

    pub fn core_voltage(&self) -> f64 {
        self.core_mv as f64 / 1000.0
    }

    /// Compact label such as `pll:80`.
    pub fn label(&self) -> String {
        format!("{}:{}", self.kind().as_str(), self.core_hz / 1_000_000)
    }

    pub fn parse_label(s: &str, profile: &CalibrationProfile) -> Result<Self> {
        let (k, f) = s
            .split_once(':')
            .ok_or_else(|| Error::Parse(format!("bad clock label `{s}`")))?;
        let kind = SourceKind::parse(k).ok_or_else(|| Error::Parse(format!("bad source `{k}`")))?;
        let mhz: u32 = f.parse().map_err(|_| Error::Parse(format!("bad frequency `{f}`")))?;
        ClockConfig::new(kind, mhz, profile)
    }
}

impl Serialize for ClockConfig {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.label())
    }
}

impl fmt::Display for ClockConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} MHz {} @ {:.1} V",
            self.core_hz / 1_000_000,
            self.kind().as_str(),
            self.core_voltage()
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadioState {
    Off,
    Sleep,
    RxListen,
    RxBusy,
    Tx,
}

impl RadioState {
    pub const ALL: [RadioState; 5] = [
        RadioState::Off,
        RadioState::Sleep,
        RadioState::RxListen,
        RadioState::RxBusy,
        RadioState::Tx,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RadioState::Off => "off",
            RadioState::Sleep => "sleep",
            RadioState::RxListen => "rx_listen",
            RadioState::RxBusy => "rx_busy",
            RadioState::Tx => "tx",
        }
    }

    pub fn parse(s: &str) -> Option<RadioState> {
        RadioState::ALL.into_iter().find(|r| r.as_str() == s)
    }

    pub fn is_on(self) -> bool {
        !matches!(self, RadioState::Off | RadioState::Sleep)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum McuState {
    Active(ClockConfig),
    LpmSleep,
}

impl McuState {
    pub fn label(&self) -> String {
        match self {
            McuState::Active(cfg) => format!("active:{}", cfg.label()),
            McuState::LpmSleep => "lpm".to_string(),
        }
    }

    pub fn parse(s: &str, profile: &CalibrationProfile) -> Result<McuState> {
        if s == "lpm" {
            return Ok(McuState::LpmSleep);
        }
        let rest = s
            .strip_prefix("active:")
            .ok_or_else(|| Error::Parse(format!("bad MCU state `{s}`")))?;
        Ok(McuState::Active(ClockConfig::parse_label(rest, profile)?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    McuCore,
    Radio,
}

impl Component {
    pub fn as_str(self) -> &'static str {
        match self {
            Component::McuCore => "mcu",
            Component::Radio => "radio",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ComponentState {
    Mcu(McuState),
    Radio(RadioState),
}

impl ComponentState {
    pub fn component(&self) -> Component {
        match self {
            ComponentState::Mcu(_) => Component::McuCore,
            ComponentState::Radio(_) => Component::Radio,
        }
    }

    pub fn label(&self) -> String {
        match self {
            ComponentState::Mcu(m) => m.label(),
            ComponentState::Radio(r) => r.as_str().to_string(),
        }
    }
}

/// Per-voltage pair of values (low and high core-voltage range).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerVoltage {
    #[serde(rename = "1.0")]
    pub low: f64,
    #[serde(rename = "1.2")]
    pub high: f64,
}

impl PerVoltage {
    fn at(&self, high: bool) -> f64 {
        if high {
            self.high
        } else {
            self.low
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeTable {
    pub rc: PerVoltage,
    pub pll: PerVoltage,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadioCurrents {
    pub off: f64,
    pub sleep: f64,
    pub rx_listen: f64,
    pub rx_busy: f64,
    pub tx: f64,
}

impl RadioCurrents {
    pub fn get(&self, state: RadioState) -> f64 {
        match state {
            RadioState::Off => self.off,
            RadioState::Sleep => self.sleep,
            RadioState::RxListen => self.rx_listen,
            RadioState::RxBusy => self.rx_busy,
            RadioState::Tx => self.tx,
        }
    }

    pub fn get_mut(&mut self, state: RadioState) -> &mut f64 {
        match state {
            RadioState::Off => &mut self.off,
            RadioState::Sleep => &mut self.sleep,
            RadioState::RxListen => &mut self.rx_listen,
            RadioState::RxBusy => &mut self.rx_busy,
            RadioState::Tx => &mut self.tx,
        }
    }
}

/// Cycle budgets of the software running on the node. They are fitted
/// together with the currents, so they live in the same document.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkloadCycles {
    /// MAC work before an indirect-transmission poll goes on air.
    pub idtx_pre: u64,
    /// MAC work after a poll transaction (or per received downlink frame).
    pub idtx_post: u64,
    /// DSME slot preparation that must finish inside the wake margin.
    pub dsme_preprocessing: u64,
    /// Beacon / slot bookkeeping after a DSME activity.
    pub dsme_post: u64,
    /// CoAP message build or parse, per message.
    pub coap_message: u64,
    /// 6LoWPAN / UDP / IPv6 handling, per frame.
    pub sixlowpan_frame: u64,
    pub dtls_per_byte: u64,
    pub dtls_per_record: u64,
    /// The shipped FFT benchmark task.
    pub fft: u64,
}

/// Per-device power calibration. All fitted constants are here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationProfile {
    pub name: String,
    #[serde(rename = "supply_voltage_V")]
    pub supply_voltage_v: f64,
    #[serde(rename = "frequency_levels_MHz")]
    pub frequency_levels_mhz: Vec<u32>,
    #[serde(rename = "rc_levels_MHz")]
    pub rc_levels_mhz: Vec<u32>,
    /// Post-reset RC frequency; valid as a config but not a sweep level.
    #[serde(rename = "reset_MHz")]
    pub reset_mhz: u32,
    #[serde(rename = "pll_input_MHz")]
    pub pll_input_mhz: f64,
    #[serde(rename = "voltage_threshold_MHz")]
    pub voltage_threshold_mhz: f64,
    #[serde(rename = "core_voltage_low_V")]
    pub core_voltage_low_v: f64,
    #[serde(rename = "core_voltage_high_V")]
    pub core_voltage_high_v: f64,
    #[serde(rename = "mcu_base_current_mA")]
    pub mcu_base_current_ma: PerVoltage,
    #[serde(rename = "mcu_slope_mA_per_MHz")]
    pub mcu_slope_ma_per_mhz: SlopeTable,
    #[serde(rename = "mcu_lpm_current_uA")]
    pub mcu_lpm_current_ua: f64,
    #[serde(rename = "radio_current_mA")]
    pub radio_current_ma: RadioCurrents,
    pub timer_wakeup_period_s: f64,
    pub timer_wakeup_cycles: u64,
    pub transition_uncached_ms: f64,
    pub transition_cached_ms: f64,
    /// Which endpoint's active power a transition draws; only
    /// `higher_endpoint` is defined.
    pub transition_active_equivalent: String,
    pub transition_cache_capacity: usize,
    pub workload_cycles: WorkloadCycles,
}

const DEFAULT_PROFILE_JSON: &str = include_str!("../profiles/default.json");

impl Default for CalibrationProfile {
    /// The shipped, fitted profile.
    fn default() -> Self {
        serde_json::from_str(DEFAULT_PROFILE_JSON).expect("shipped profile parses")
    }
}

impl CalibrationProfile {
    pub fn from_json(s: &str) -> Result<Self> {
        let p: CalibrationProfile = serde_json::from_str(s)?;
        p.validate()?;
        Ok(p)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        CalibrationProfile::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("profile serializes")
    }

    pub fn f_max_mhz(&self) -> u32 {
        self.frequency_levels_mhz.iter().copied().max().unwrap_or(0)
    }

    fn levels_for(&self, kind: SourceKind) -> &[u32] {
        match kind {
            SourceKind::Rc => &self.rc_levels_mhz,
            SourceKind::Pll => &self.frequency_levels_mhz,
        }
    }

    pub(crate) fn check_level(&self, cfg: &ClockConfig) -> Result<()> {
        let mhz = cfg.core_hz as f64 / 1e6;
        let whole = cfg.core_hz.is_multiple_of(1_000_000);
        let m = (cfg.core_hz / 1_000_000) as u32;
        let is_reset = cfg.kind() == SourceKind::Rc && m == self.reset_mhz;
        if whole && (self.levels_for(cfg.kind()).contains(&m) || is_reset) {
            Ok(())
        } else {
            Err(Error::UnknownLevel {
                mhz,
                source_kind: cfg.kind().as_str(),
            })
        }
    }

    /// Every valid (source, level) sweep point, ordered by frequency then source.
    pub fn all_configs(&self) -> Vec<ClockConfig> {
        let mut out = Vec::new();
        let mut levels = self.frequency_levels_mhz.clone();
        levels.sort_unstable();
        for mhz in levels {
            for kind in [SourceKind::Rc, SourceKind::Pll] {
                if let Ok(c) = ClockConfig::new(kind, mhz, self) {
                    out.push(c);
                }
            }
        }
        out
    }

    /// Active MCU current in mA.
    pub fn mcu_active_current_ma(&self, cfg: &ClockConfig) -> f64 {
        let high = cfg.core_voltage() >= self.core_voltage_high_v - 1e-9;
        let base = self.mcu_base_current_ma.at(high);
        let slope = match cfg.kind() {
            SourceKind::Rc => self.mcu_slope_ma_per_mhz.rc.at(high),
            SourceKind::Pll => self.mcu_slope_ma_per_mhz.pll.at(high),
        };
        base + slope * cfg.core_mhz()
    }

    /// Multiplies every current by `c`; cycle counts and timings are untouched.
    pub fn scaled_currents(&self, c: f64) -> CalibrationProfile {
        let mut p = self.clone();
        p.mcu_base_current_ma.low *= c;
        p.mcu_base_current_ma.high *= c;
        for pv in [&mut p.mcu_slope_ma_per_mhz.rc, &mut p.mcu_slope_ma_per_mhz.pll] {
            pv.low *= c;
            pv.high *= c;
        }
        p.mcu_lpm_current_ua *= c;
        for s in RadioState::ALL {
            *p.radio_current_ma.get_mut(s) *= c;
        }
        p
    }

    pub fn transition_cached(&self) -> Ns {
        Ns::from_ms_f64(self.transition_cached_ms)
    }

    pub fn transition_uncached(&self) -> Ns {
        Ns::from_ms_f64(self.transition_uncached_ms)
    }

    pub fn timer_period(&self) -> Ns {
        Ns::from_secs_f64(self.timer_wakeup_period_s)
    }

    /// Static share of total active MCU power at the PLL f_max operating point.
    pub fn static_share_at_fmax(&self) -> f64 {
        let cfg = ClockConfig::new(SourceKind::Pll, self.f_max_mhz(), self).expect("f_max is a PLL level");
        self.mcu_base_current_ma.high / self.mcu_active_current_ma(&cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("profile `{}`: {m}", self.name)));
        if self.frequency_levels_mhz.is_empty() {
            return bad("no frequency levels");
        }
        if self
            .rc_levels_mhz
            .iter()
            .any(|l| !self.frequency_levels_mhz.contains(l))
        {
            return bad("RC levels must be a subset of the frequency levels");
        }
        if !(self.supply_voltage_v > 0.0) {
            return bad("supply voltage must be positive");
        }
        if self.core_voltage_high_v < self.core_voltage_low_v {
            return bad("high core voltage below low core voltage");
        }
        let base = self.mcu_base_current_ma;
        let slopes = self.mcu_slope_ma_per_mhz;
        if base.low <= 0.0 || base.high <= 0.0 {
            return bad("base currents must be positive");
        }
        for pv in [slopes.rc, slopes.pll] {
            if pv.low <= 0.0 || pv.high <= 0.0 {
                return bad("active current must strictly increase with frequency");
            }
        }
        if base.high < base.low {
            return bad("I_base(high V) < I_base(low V)");
        }
        if slopes.pll.low < slopes.rc.low || slopes.pll.high < slopes.rc.high {
            return bad("PLL slope below RC slope");
        }
        if self.mcu_lpm_current_ua <= 0.0 {
            return bad("LPM current must be positive");
        }
        let r = self.radio_current_ma;
        if r.off < 0.0 || r.sleep <= 0.0 || r.rx_listen <= 0.0 || r.rx_busy <= 0.0 || r.tx <= 0.0 {
            return bad("radio currents must be positive (off may be zero)");
        }
        if !(r.off <= r.sleep && r.sleep <= r.rx_listen.min(r.rx_busy).min(r.tx)) {
            return bad("radio currents must satisfy off <= sleep <= active states");
        }
        if self.transition_active_equivalent != "higher_endpoint" {
            return bad("transition_active_equivalent must be `higher_endpoint`");
        }
        if self.transition_cached_ms < 0.0 || self.transition_uncached_ms < self.transition_cached_ms {
            return bad("transition durations must satisfy 0 <= cached <= uncached");
        }
        if self.transition_cache_capacity == 0 {
            return bad("transition cache capacity must be at least 1");
        }
        if !(self.timer_wakeup_period_s > 0.0) {
            return bad("timer wakeup period must be positive");
        }
        Ok(())
    }
}

/// Core voltage required by a frequency: the low range below the threshold,
/// the high range at or above it.
pub fn voltage_rule(core_hz: u64, profile: &CalibrationProfile) -> f64 {
    assert!(core_hz > 0, "core frequency must be positive");
    if (core_hz as f64) < profile.voltage_threshold_mhz * 1e6 {
        profile.core_voltage_low_v
    } else {
        profile.core_voltage_high_v
    }
}

/// Supply-side power in watts of one component state.
pub fn power_of(state: &ComponentState, profile: &CalibrationProfile) -> Result<f64> {
    let current_ma = match state {
        ComponentState::Mcu(McuState::Active(cfg)) => {
            profile.check_level(cfg)?;
            profile.mcu_active_current_ma(cfg)
        }
        ComponentState::Mcu(McuState::LpmSleep) => profile.mcu_lpm_current_ua * 1e-3,
        ComponentState::Radio(r) => profile.radio_current_ma.get(*r),
    };
    Ok(profile.supply_voltage_v * current_ma * 1e-3)
}

/// Energy of a constant-power segment. Every energy sum in the crate goes
/// through this so online and offline integration agree bit for bit.
#[inline]
pub fn segment_energy(power_w: f64, dur: Ns) -> f64 {
    power_w * dur.as_secs_f64()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    #[serde(rename = "energy_J")]
    pub energy_j: f64,
    pub duration_s: f64,
    #[serde(rename = "edp_Js")]
    pub edp_js: f64,
    #[serde(rename = "per_component_J")]
    pub per_component_j: BTreeMap<Component, f64>,
}

impl EnergyReport {
    pub fn empty() -> Self {
        EnergyReport::from_components(BTreeMap::new(), Ns::ZERO)
    }

    /// Builds a report whose total is the ordered sum of the component energies.
    pub fn from_components(per_component_j: BTreeMap<Component, f64>, duration: Ns) -> Self {
        let energy_j: f64 = per_component_j.values().sum();
        let duration_s = duration.as_secs_f64();
        EnergyReport {
            energy_j,
            duration_s,
            edp_js: energy_j * duration_s,
            per_component_j,
        }
    }

    pub fn component(&self, c: Component) -> f64 {
        self.per_component_j.get(&c).copied().unwrap_or(0.0)
    }
}

/// Integrates piecewise-constant intervals. Each interval carries at most one
/// state per component; components absent from an interval draw nothing.
pub fn integrate(intervals: &[(Ns, Vec<ComponentState>)], profile: &CalibrationProfile) -> Result<EnergyReport> {
    let mut per: BTreeMap<Component, f64> = BTreeMap::new();
    let mut duration = Ns::ZERO;
    for (index, (dur, states)) in intervals.iter().enumerate() {
        let mut seen = [false; 2];
        for st in states {
            let c = st.component();
            let slot = &mut seen[c as usize];
            if *slot {
                return Err(Error::Overlap {
                    index,
                    component: c.as_str(),
                });
            }
            *slot = true;
            *per.entry(c).or_insert(0.0) += segment_energy(power_of(st, profile)?, *dur);
        }
        duration += *dur;
    }
    Ok(EnergyReport::from_components(per, duration))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile() -> CalibrationProfile {
        CalibrationProfile::default()
    }

    #[test]
    fn voltage_rule_examples() {
        let p = profile();
        assert_eq!(voltage_rule(24_000_000, &p), 1.0);
        assert_eq!(voltage_rule(32_000_000, &p), 1.2);
        assert_eq!(voltage_rule(80_000_000, &p), 1.2);
        assert_eq!(voltage_rule(25_999_999, &p), 1.0);
        assert_eq!(voltage_rule(26_000_000, &p), 1.2);
    }

    #[test]
    fn shipped_profile_is_valid() {
        let p = profile();
        p.validate().unwrap();
        let share = p.static_share_at_fmax();
        assert!((share - 0.10).abs() <= 0.04, "static share {share}");
    }

    #[test]
    fn config_rejects_foreign_voltage_and_levels() {
        let p = profile();
        assert!(ClockConfig::with_voltage(SourceKind::Pll, 80, 1.0, &p).is_err());
        assert!(ClockConfig::with_voltage(SourceKind::Pll, 80, 1.2, &p).is_ok());
        assert!(matches!(
            ClockConfig::new(SourceKind::Rc, 80, &p),
            Err(Error::UnknownLevel { .. })
        ));
        assert!(ClockConfig::new(SourceKind::Pll, 50, &p).is_err());
        assert_eq!(ClockConfig::reset(&p).core_mhz(), 4.0);
        assert!(ClockConfig::new(SourceKind::Pll, 4, &p).is_err());
    }

    #[test]
    fn radio_off_draws_nothing() {
        let mut p = profile();
        p.radio_current_ma.off = 0.0;
        let w = power_of(&ComponentState::Radio(RadioState::Off), &p).unwrap();
        assert_eq!(w, 0.0);
    }

    #[test]
    fn active_power_monotone_over_all_level_pairs() {
        let p = profile();
        let cfgs = p.all_configs();
        for a in &cfgs {
            for b in &cfgs {
                if a.kind() == b.kind() && a.core_hz() < b.core_hz() {
                    let pa = power_of(&ComponentState::Mcu(McuState::Active(*a)), &p).unwrap();
                    let pb = power_of(&ComponentState::Mcu(McuState::Active(*b)), &p).unwrap();
                    assert!(pa < pb, "{a} vs {b}");
                }
            }
        }
        let c24 = ClockConfig::new(SourceKind::Pll, 24, &p).unwrap();
        let c80 = ClockConfig::new(SourceKind::Pll, 80, &p).unwrap();
        let rc24 = ClockConfig::new(SourceKind::Rc, 24, &p).unwrap();
        let pw = |c| power_of(&ComponentState::Mcu(McuState::Active(c)), &p).unwrap();
        assert!(pw(c24) < pw(c80));
        assert!(pw(rc24) < pw(c80));
    }

    #[test]
    fn integrate_piecewise_example() {
        // Radio-only states with currents chosen so the supply power is 10 mW and 1 mW.
        let mut p = profile();
        p.radio_current_ma.tx = 10.0 / p.supply_voltage_v;
        p.radio_current_ma.sleep = 1.0 / p.supply_voltage_v;
        let intervals = vec![
            (Ns::from_ms(1000), vec![ComponentState::Radio(RadioState::Tx)]),
            (Ns::from_ms(2000), vec![ComponentState::Radio(RadioState::Sleep)]),
        ];
        let r = integrate(&intervals, &p).unwrap();
        assert!((r.energy_j - 0.012).abs() < 1e-12);
        assert_eq!(r.duration_s, 3.0);
        assert!((r.edp_js - 0.036).abs() < 1e-12);
        assert_eq!(r.edp_js, r.energy_j * r.duration_s);
    }

    #[test]
    fn integrate_empty_and_overlap() {
        let p = profile();
        let r = integrate(&[], &p).unwrap();
        assert_eq!((r.energy_j, r.duration_s, r.edp_js), (0.0, 0.0, 0.0));
        let bad = vec![(
            Ns::from_ms(1),
            vec![
                ComponentState::Radio(RadioState::Tx),
                ComponentState::Radio(RadioState::Off),
            ],
        )];
        assert!(matches!(integrate(&bad, &p), Err(Error::Overlap { index: 0, .. })));
    }

    #[test]
    fn profile_json_roundtrip() {
        let p = profile();
        let back = CalibrationProfile::from_json(&p.to_json()).unwrap();
        assert_eq!(p, back);
    }
}
