//! IEEE 802.15.4 MAC operating modes as timed radio schedules: idle
//! listening with CSMA/CA, indirect transmissions (polling) and DSME.

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::powermodel::{CalibrationProfile, ClockConfig, RadioState};
use crate::time::Ns;

/// 2.4 GHz O-QPSK PHY constants.
pub struct PhyTiming;

impl PhyTiming {
    pub const SYMBOL: Ns = Ns::from_us(16);
    pub const BYTE: Ns = Ns::from_us(32);
    pub const PHY_OVERHEAD_BYTES: usize = 6;
    pub const TURNAROUND: Ns = Ns::from_us(192);
    pub const MAX_PSDU: usize = 127;
    pub const ACK_PSDU: usize = 5;
    /// 8 symbols.
    pub const CCA: Ns = Ns::from_us(128);
    /// aUnitBackoffPeriod, 20 symbols.
    pub const UNIT_BACKOFF: Ns = Ns::from_us(320);

    pub fn airtime(psdu: usize) -> Ns {
        Ns(PhyTiming::BYTE.0 * (psdu + PhyTiming::PHY_OVERHEAD_BYTES) as u64)
    }

    pub fn check_psdu(psdu: usize) -> Result<()> {
        if psdu > PhyTiming::MAX_PSDU {
            Err(Error::FrameTooLarge(psdu))
        } else {
            Ok(())
        }
    }
}

/// One timed radio state; sequences of these describe frame exchanges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RadioOp {
    pub state: RadioState,
    pub duration: Ns,
    pub label: &'static str,
}

impl RadioOp {
    pub fn new(state: RadioState, duration: Ns, label: &'static str) -> Self {
        RadioOp { state, duration, label }
    }
}

pub fn ops_duration(ops: &[RadioOp]) -> Ns {
    Ns(ops.iter().map(|o| o.duration.0).sum())
}

/// MCU activity as far as the MAC knows it; the clock is picked later.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MacMcu {
    Sleep,
    Awake,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScheduleInterval {
    pub start: Ns,
    pub end: Ns,
    pub mcu: MacMcu,
    pub radio: RadioState,
    pub label: String,
}

/// Cycles that must complete inside a window before a radio activity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeadlineCheck {
    pub at: Ns,
    pub required_cycles: u64,
    pub window: Ns,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeadlineMiss {
    pub at: Ns,
    pub label: String,
    pub needed: Ns,
    pub window: Ns,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MacSchedule {
    pub intervals: Vec<ScheduleInterval>,
    pub deadline_checks: Vec<DeadlineCheck>,
}

impl MacSchedule {
    pub fn horizon(&self) -> Ns {
        self.intervals.last().map(|i| i.end).unwrap_or(Ns::ZERO)
    }

    /// Radio state change points, merged across adjacent equal states.
    pub fn radio_boundaries(&self) -> Vec<(Ns, RadioState)> {
        let mut out: Vec<(Ns, RadioState)> = Vec::new();
        for iv in &self.intervals {
            if out.last().map(|l| l.1) != Some(iv.radio) {
                out.push((iv.start, iv.radio));
            }
        }
        out
    }

    pub fn radio_on_time(&self) -> Ns {
        Ns(self
            .intervals
            .iter()
            .filter(|i| i.radio.is_on())
            .map(|i| (i.end - i.start).0)
            .sum())
    }

    /// Builds a gap-free schedule over `[0, horizon)` from radio activities
    /// placed at absolute times and MCU awake windows. Unscheduled radio time
    /// is `idle_radio`.
    pub fn tile(
        horizon: Ns,
        radio: &[(Ns, Vec<RadioOp>)],
        awake: &[(Ns, Ns)],
        idle_radio: RadioState,
        deadline_checks: Vec<DeadlineCheck>,
    ) -> Result<MacSchedule> {
        let mut radio_iv: Vec<(Ns, Ns, RadioState, &str)> = Vec::new();
        let mut cursor = Ns::ZERO;
        let mut sorted: Vec<&(Ns, Vec<RadioOp>)> = radio.iter().collect();
        sorted.sort_by_key(|r| r.0);
        for (start, ops) in sorted {
            if *start < cursor {
                return Err(Error::Config(format!("radio activities overlap at {start}")));
            }
            if *start > cursor {
                radio_iv.push((cursor, *start, idle_radio, "idle"));
            }
            let mut t = *start;
            for op in ops {
                if op.duration > Ns::ZERO {
                    radio_iv.push((t, t + op.duration, op.state, op.label));
                }
                t += op.duration;
            }
            cursor = t;
        }
        if cursor > horizon {
            return Err(Error::Config("radio activity beyond horizon".into()));
        }
        if cursor < horizon {
            radio_iv.push((cursor, horizon, idle_radio, "idle"));
        }

        let mut wins: Vec<(Ns, Ns)> = awake
            .iter()
            .map(|&(a, b)| (a, b.min(horizon)))
            .filter(|(a, b)| a < b)
            .collect();
        wins.sort();
        let mut merged: Vec<(Ns, Ns)> = Vec::new();
        for w in wins {
            match merged.last_mut() {
                Some(last) if w.0 <= last.1 => last.1 = last.1.max(w.1),
                _ => merged.push(w),
            }
        }

        let mut cuts: BTreeSet<Ns> = BTreeSet::new();
        cuts.insert(Ns::ZERO);
        cuts.insert(horizon);
        for r in &radio_iv {
            cuts.insert(r.0);
            cuts.insert(r.1);
        }
        for w in &merged {
            cuts.insert(w.0);
            cuts.insert(w.1);
        }
        let cuts: Vec<Ns> = cuts.into_iter().collect();
        let mut intervals = Vec::with_capacity(cuts.len());
        let (mut ri, mut wi) = (0usize, 0usize);
        for pair in cuts.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            while radio_iv[ri].1 <= a {
                ri += 1;
            }
            while wi < merged.len() && merged[wi].1 <= a {
                wi += 1;
            }
            let awake_now = wi < merged.len() && merged[wi].0 <= a;
            intervals.push(ScheduleInterval {
                start: a,
                end: b,
                mcu: if awake_now { MacMcu::Awake } else { MacMcu::Sleep },
                radio: radio_iv[ri].2,
                label: radio_iv[ri].3.to_string(),
            });
        }
        Ok(MacSchedule {
            intervals,
            deadline_checks,
        })
    }
}

/// Misses are returned as data; an empty list means every deadline holds.
pub fn check_deadlines(schedule: &MacSchedule, config: &ClockConfig) -> Vec<DeadlineMiss> {
    schedule
        .deadline_checks
        .iter()
        .filter_map(|d| {
            let needed = Ns::for_cycles(d.required_cycles, config.core_hz());
            (needed > d.window).then(|| DeadlineMiss {
                at: d.at,
                label: d.label.clone(),
                needed,
                window: d.window,
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// CSMA/CA

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsmaParams {
    pub min_be: u32,
    pub max_be: u32,
    pub max_backoffs: u32,
}

impl Default for CsmaParams {
    fn default() -> Self {
        CsmaParams {
            min_be: 3,
            max_be: 5,
            max_backoffs: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CsmaState {
    pub nb: u32,
    pub be: u32,
    pub params: CsmaParams,
}

impl CsmaState {
    pub fn new(params: CsmaParams) -> Self {
        CsmaState {
            nb: 0,
            be: params.min_be,
            params,
        }
    }

    /// Records a busy CCA.
    pub fn channel_busy(&mut self) {
        self.nb += 1;
        self.be = (self.be + 1).min(self.params.max_be);
    }
}

/// Draws the random backoff for the current attempt.
pub fn csma_attempt<R: Rng + ?Sized>(rng: &mut R, state: &CsmaState) -> Result<Ns> {
    if state.nb > state.params.max_backoffs {
        return Err(Error::ChannelAccessFailure(state.nb));
    }
    let slots = rng.gen_range(0..(1u64 << state.be));
    Ok(Ns(slots * PhyTiming::UNIT_BACKOFF.0))
}

/// Runs the unslotted CSMA/CA procedure. `busy` is asked for each CCA with
/// the offset since the procedure began. Returns the radio ops up to (not
/// including) the transmission.
pub fn run_csma<R: Rng + ?Sized>(
    rng: &mut R,
    params: CsmaParams,
    mut busy: impl FnMut(Ns) -> bool,
) -> Result<Vec<RadioOp>> {
    let mut state = CsmaState::new(params);
    let mut ops = Vec::new();
    let mut t = Ns::ZERO;
    loop {
        let delay = csma_attempt(rng, &state)?;
        ops.push(RadioOp::new(RadioState::RxListen, delay, "csma_backoff"));
        ops.push(RadioOp::new(RadioState::RxListen, PhyTiming::CCA, "cca"));
        t += delay + PhyTiming::CCA;
        if !busy(t) {
            return Ok(ops);
        }
        state.channel_busy();
    }
}

/// Data frame transmission with acknowledgement, excluding channel access.
pub fn tx_with_ack(psdu: usize) -> Result<Vec<RadioOp>> {
    PhyTiming::check_psdu(psdu)?;
    Ok(vec![
        RadioOp::new(RadioState::Tx, PhyTiming::airtime(psdu), "tx_data"),
        RadioOp::new(RadioState::RxListen, PhyTiming::TURNAROUND, "turnaround"),
        RadioOp::new(RadioState::RxBusy, PhyTiming::airtime(PhyTiming::ACK_PSDU), "rx_ack"),
    ])
}

/// Frame reception (the frame begins right away) followed by our acknowledgement.
pub fn rx_with_ack(psdu: usize) -> Result<Vec<RadioOp>> {
    PhyTiming::check_psdu(psdu)?;
    Ok(vec![
        RadioOp::new(RadioState::RxBusy, PhyTiming::airtime(psdu), "rx_data"),
        RadioOp::new(RadioState::RxListen, PhyTiming::TURNAROUND, "turnaround"),
        RadioOp::new(RadioState::Tx, PhyTiming::airtime(PhyTiming::ACK_PSDU), "tx_ack"),
    ])
}

// ---------------------------------------------------------------------------
// Indirect transmissions

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IdtxConfig {
    pub poll_interval_s: f64,
    pub poll_cmd_psdu_bytes: usize,
    pub ack_psdu_bytes: usize,
}

impl Default for IdtxConfig {
    fn default() -> Self {
        IdtxConfig {
            poll_interval_s: 1.0,
            poll_cmd_psdu_bytes: 12,
            ack_psdu_bytes: 5,
        }
    }
}

impl IdtxConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.poll_interval_s > 0.0) {
            return Err(Error::Config("poll_interval_s must be positive".into()));
        }
        PhyTiming::check_psdu(self.poll_cmd_psdu_bytes)?;
        PhyTiming::check_psdu(self.ack_psdu_bytes)
    }

    pub fn poll_interval(&self) -> Ns {
        Ns::from_secs_f64(self.poll_interval_s)
    }
}

/// Radio ops of one poll round. Each pending downlink frame needs its own
/// poll command; the radio turns off once the coordinator reports nothing
/// more pending.
pub fn idtx_poll_transaction(cfg: &IdtxConfig, pending: &[usize]) -> Result<Vec<RadioOp>> {
    for &p in pending {
        PhyTiming::check_psdu(p)?;
    }
    let ack = PhyTiming::airtime(cfg.ack_psdu_bytes);
    let mut ops = Vec::new();
    let rounds = pending.len().max(1);
    for i in 0..rounds {
        ops.push(RadioOp::new(
            RadioState::Tx,
            PhyTiming::airtime(cfg.poll_cmd_psdu_bytes),
            "tx_poll",
        ));
        ops.push(RadioOp::new(RadioState::RxListen, PhyTiming::TURNAROUND, "turnaround"));
        ops.push(RadioOp::new(RadioState::RxBusy, ack, "rx_poll_ack"));
        if let Some(&psdu) = pending.get(i) {
            ops.push(RadioOp::new(RadioState::RxListen, PhyTiming::TURNAROUND, "await_data"));
            ops.push(RadioOp::new(RadioState::RxBusy, PhyTiming::airtime(psdu), "rx_data"));
            ops.push(RadioOp::new(RadioState::RxListen, PhyTiming::TURNAROUND, "turnaround"));
            ops.push(RadioOp::new(RadioState::Tx, ack, "tx_ack"));
        }
    }
    Ok(ops)
}

// ---------------------------------------------------------------------------
// DSME

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GtsDirection {
    #[serde(alias = "tx", alias = "up")]
    Uplink,
    #[serde(alias = "rx", alias = "down")]
    Downlink,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GtsSlot {
    #[serde(rename = "dir")]
    pub direction: GtsDirection,
    #[serde(rename = "superframe")]
    pub superframe_index: u32,
    #[serde(rename = "slot")]
    pub slot_index: u32,
    #[serde(default)]
    pub channel: u32,
}

pub const SLOTS_PER_SUPERFRAME: u32 = 16;
pub const CAP_SLOTS: u32 = 8;
const BASE_SUPERFRAME_SYMBOLS: u64 = 960;
const BASE_SLOT_SYMBOLS: u64 = 60;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DsmeConfig {
    pub so: u32,
    pub mo: u32,
    pub bo: u32,
    pub cap_reduction: bool,
    pub gts: Vec<GtsSlot>,
    pub guard_us: f64,
    pub wake_margin_us: f64,
    pub preprocessing_cycles: u64,
    pub beacon_psdu_bytes: usize,
    /// Start of the first superframe.
    pub epoch_us: f64,
}

impl Default for DsmeConfig {
    fn default() -> Self {
        DsmeConfig {
            so: 3,
            mo: 10,
            bo: 10,
            cap_reduction: true,
            gts: Vec::new(),
            guard_us: 400.0,
            wake_margin_us: 1000.0,
            preprocessing_cycles: CalibrationProfile::default().workload_cycles.dsme_preprocessing,
            beacon_psdu_bytes: 38,
            epoch_us: 2000.0,
        }
    }
}

pub fn dsme_slot_duration(so: u32) -> Result<Ns> {
    if so > 14 {
        return Err(Error::OutOfRange { name: "SO", value: so });
    }
    Ok(Ns(BASE_SLOT_SYMBOLS * (1u64 << so) * PhyTiming::SYMBOL.0))
}

pub fn dsme_superframe_duration(so: u32) -> Result<Ns> {
    if so > 14 {
        return Err(Error::OutOfRange { name: "SO", value: so });
    }
    Ok(Ns(BASE_SUPERFRAME_SYMBOLS * (1u64 << so) * PhyTiming::SYMBOL.0))
}

pub fn dsme_multisuperframe_duration(mo: u32) -> Result<Ns> {
    if mo > 14 {
        return Err(Error::OutOfRange { name: "MO", value: mo });
    }
    Ok(Ns(BASE_SUPERFRAME_SYMBOLS * (1u64 << mo) * PhyTiming::SYMBOL.0))
}

pub fn superframes_per_multisuperframe(so: u32, mo: u32) -> Result<u64> {
    if so > mo {
        return Err(Error::Config(format!("SO {so} > MO {mo}")));
    }
    dsme_multisuperframe_duration(mo)?;
    Ok(1u64 << (mo - so))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DsmeActivityKind {
    Beacon,
    Cap,
    Gts(GtsSlot),
}

/// One owned activity of the node within the horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DsmeActivity {
    pub kind: DsmeActivityKind,
    /// Absolute superframe number since t = 0.
    pub superframe: u64,
    pub slot_start: Ns,
    pub slot_end: Ns,
    /// When the radio must be up (slot start minus guard for receptions).
    pub radio_start: Ns,
    /// When the MCU must be awake.
    pub wake_at: Ns,
}

impl DsmeActivity {
    pub fn label(&self) -> &'static str {
        match self.kind {
            DsmeActivityKind::Beacon => "beacon",
            DsmeActivityKind::Cap => "cap",
            DsmeActivityKind::Gts(g) => match g.direction {
                GtsDirection::Uplink => "gts_tx",
                GtsDirection::Downlink => "gts_rx",
            },
        }
    }
}

impl DsmeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.so <= self.mo && self.mo <= self.bo && self.bo <= 14) {
            return Err(Error::Config(format!(
                "DSME orders must satisfy 0 <= SO <= MO <= BO <= 14 (got {}, {}, {})",
                self.so, self.mo, self.bo
            )));
        }
        PhyTiming::check_psdu(self.beacon_psdu_bytes)?;
        let per_msf = superframes_per_multisuperframe(self.so, self.mo)?;
        let mut seen = BTreeSet::new();
        let mut times = BTreeSet::new();
        for g in &self.gts {
            if g.superframe_index as u64 >= per_msf {
                return Err(Error::Config(format!(
                    "GTS superframe {} beyond the {per_msf} superframes of a multisuperframe",
                    g.superframe_index
                )));
            }
            if !self.cfp_slots(g.superframe_index as u64).contains(&g.slot_index) {
                return Err(Error::Config(format!(
                    "GTS slot {} is not a CFP slot of superframe {}",
                    g.slot_index, g.superframe_index
                )));
            }
            if !seen.insert((g.superframe_index, g.slot_index, g.channel)) {
                return Err(Error::Config(format!(
                    "duplicate GTS ({}, {}, {})",
                    g.superframe_index, g.slot_index, g.channel
                )));
            }
            if !times.insert((g.superframe_index, g.slot_index)) {
                return Err(Error::Config(format!(
                    "node owns two GTS at superframe {} slot {}",
                    g.superframe_index, g.slot_index
                )));
            }
        }
        let slot = dsme_slot_duration(self.so)?;
        if self.guard() >= slot {
            return Err(Error::Config("guard time must be shorter than a slot".into()));
        }
        if !(self.epoch_us >= 0.0) {
            return Err(Error::Config("epoch_us must be non-negative".into()));
        }
        Ok(())
    }

    pub fn guard(&self) -> Ns {
        Ns::from_us_f64(self.guard_us)
    }

    pub fn epoch(&self) -> Ns {
        Ns::from_us_f64(self.epoch_us)
    }

    pub fn wake_margin(&self) -> Ns {
        Ns::from_us_f64(self.wake_margin_us)
    }

    pub fn slot_duration(&self) -> Ns {
        dsme_slot_duration(self.so).expect("validated SO")
    }

    pub fn superframe_duration(&self) -> Ns {
        dsme_superframe_duration(self.so).expect("validated SO")
    }

    pub fn multisuperframe_duration(&self) -> Ns {
        dsme_multisuperframe_duration(self.mo).expect("validated MO")
    }

    fn superframes_per_msf(&self) -> u64 {
        1u64 << (self.mo - self.so)
    }

    /// Whether superframe `sf` (index within its multisuperframe) carries a CAP.
    pub fn has_cap(&self, sf_in_msf: u64) -> bool {
        !self.cap_reduction || sf_in_msf == 0
    }

    /// CFP slot numbers of a superframe (index within its multisuperframe).
    pub fn cfp_slots(&self, sf_in_msf: u64) -> std::ops::RangeInclusive<u32> {
        if self.has_cap(sf_in_msf) {
            (1 + CAP_SLOTS)..=(SLOTS_PER_SUPERFRAME - 1)
        } else {
            1..=(SLOTS_PER_SUPERFRAME - 1)
        }
    }

    /// All CFP slot positions of one multisuperframe, in time order.
    pub fn cfp_positions(&self) -> Vec<(u32, u32)> {
        (0..self.superframes_per_msf())
            .flat_map(|sf| self.cfp_slots(sf).map(move |s| (sf as u32, s)))
            .collect()
    }

    /// The CFP of every superframe, as absolute time ranges within `horizon`.
    pub fn cfp_windows(&self, horizon: Ns) -> Vec<(Ns, Ns)> {
        let sd = self.superframe_duration();
        let slot = self.slot_duration();
        let per_msf = self.superframes_per_msf();
        let mut out = Vec::new();
        let mut sf = 0u64;
        loop {
            let start = self.epoch() + Ns(sd.0 * sf);
            if start >= horizon {
                break;
            }
            let first = *self.cfp_slots(sf % per_msf).start() as u64;
            let a = start + Ns(slot.0 * first);
            let b = (start + sd).min(horizon);
            if a < b {
                out.push((a, b));
            }
            sf += 1;
        }
        out
    }

    /// Owned activities (beacon receptions, CAPs and GTS) starting inside `horizon`.
    pub fn activities(&self, horizon: Ns) -> Result<Vec<DsmeActivity>> {
        self.validate()?;
        let sd = self.superframe_duration();
        let slot = self.slot_duration();
        let per_msf = self.superframes_per_msf();
        let per_bi = 1u64 << (self.bo - self.so);
        let guard = self.guard();
        let margin = self.wake_margin();
        let mut gts = self.gts.clone();
        gts.sort_by_key(|g| (g.superframe_index, g.slot_index));
        let mut out = Vec::new();
        let mut sf = 0u64;
        loop {
            let sf_start = self.epoch() + Ns(sd.0 * sf);
            if sf_start >= horizon {
                break;
            }
            let in_msf = sf % per_msf;
            let slot_at = |n: u32| sf_start + Ns(slot.0 * n as u64);
            let mut push = |kind, first: u32, count: u32, rx: bool| {
                let slot_start = slot_at(first);
                let radio_start = if rx {
                    slot_start.saturating_sub(guard)
                } else {
                    slot_start
                };
                out.push(DsmeActivity {
                    kind,
                    superframe: sf,
                    slot_start,
                    slot_end: slot_at(first + count),
                    radio_start,
                    wake_at: radio_start.saturating_sub(margin),
                });
            };
            if sf.is_multiple_of(per_bi) {
                push(DsmeActivityKind::Beacon, 0, 1, true);
            }
            if self.has_cap(in_msf) {
                push(DsmeActivityKind::Cap, 1, CAP_SLOTS, false);
            }
            for g in gts.iter().filter(|g| g.superframe_index as u64 == in_msf) {
                push(
                    DsmeActivityKind::Gts(*g),
                    g.slot_index,
                    1,
                    g.direction == GtsDirection::Downlink,
                );
            }
            sf += 1;
        }
        Ok(out)
    }

    /// Radio ops for the beacon slot, starting at `radio_start`.
    pub fn beacon_ops(&self) -> Vec<RadioOp> {
        vec![
            RadioOp::new(RadioState::RxListen, self.guard(), "guard"),
            RadioOp::new(
                RadioState::RxBusy,
                PhyTiming::airtime(self.beacon_psdu_bytes),
                "rx_beacon",
            ),
        ]
    }

    pub fn cap_ops(&self) -> Vec<RadioOp> {
        vec![RadioOp::new(
            RadioState::RxListen,
            Ns(self.slot_duration().0 * CAP_SLOTS as u64),
            "cap_listen",
        )]
    }

    /// Downlink slot: listen for the whole slot when nothing arrives.
    pub fn rx_slot_ops(&self, frame: Option<usize>) -> Result<Vec<RadioOp>> {
        let mut ops = vec![RadioOp::new(RadioState::RxListen, self.guard(), "guard")];
        match frame {
            None => ops.push(RadioOp::new(RadioState::RxListen, self.slot_duration(), "gts_listen")),
            Some(psdu) => ops.extend(rx_with_ack(psdu)?),
        }
        Ok(ops)
    }

    /// Uplink slot: the radio stays off unless a frame is queued.
    pub fn tx_slot_ops(&self, frame: Option<usize>) -> Result<Vec<RadioOp>> {
        match frame {
            None => Ok(Vec::new()),
            Some(psdu) => tx_with_ack(psdu),
        }
    }
}

/// Builds the node's DSME schedule over `horizon`. `traffic` tells, per
/// owned GTS occurrence, whether a frame (and its PSDU size) is exchanged.
pub fn build_dsme_schedule(
    cfg: &DsmeConfig,
    horizon: Ns,
    traffic: impl Fn(&DsmeActivity) -> Option<usize>,
) -> Result<MacSchedule> {
    cfg.validate()?;
    if horizon < cfg.epoch() + cfg.multisuperframe_duration() {
        return Err(Error::Config("horizon shorter than one multisuperframe".into()));
    }
    let mut radio = Vec::new();
    let mut awake = Vec::new();
    let mut checks = Vec::new();
    for act in cfg.activities(horizon)? {
        let ops = match act.kind {
            DsmeActivityKind::Beacon => cfg.beacon_ops(),
            DsmeActivityKind::Cap => cfg.cap_ops(),
            DsmeActivityKind::Gts(g) => match g.direction {
                GtsDirection::Downlink => cfg.rx_slot_ops(traffic(&act))?,
                GtsDirection::Uplink => cfg.tx_slot_ops(traffic(&act))?,
            },
        };
        let end = act.radio_start + ops_duration(&ops);
        if end > horizon {
            continue;
        }
        let is_idle_tx = ops.is_empty();
        if !is_idle_tx {
            radio.push((act.radio_start, ops));
            awake.push((act.wake_at, end));
        }
        let is_tx_slot = matches!(act.kind, DsmeActivityKind::Gts(g) if g.direction == GtsDirection::Uplink);
        if !is_idle_tx || is_tx_slot {
            checks.push(DeadlineCheck {
                at: act.radio_start,
                required_cycles: cfg.preprocessing_cycles,
                window: cfg.wake_margin(),
                label: act.label().to_string(),
            });
        }
    }
    MacSchedule::tile(horizon, &radio, &awake, RadioState::Off, checks)
}

/// Poll-only IDTX schedule: one poll round per interval, the first at one interval.
pub fn build_idtx_schedule(cfg: &IdtxConfig, horizon: Ns) -> Result<MacSchedule> {
    cfg.validate()?;
    let ops = idtx_poll_transaction(cfg, &[])?;
    let span = ops_duration(&ops);
    let period = cfg.poll_interval();
    let mut radio = Vec::new();
    let mut awake = Vec::new();
    let mut t = period;
    while t + span <= horizon {
        radio.push((t, ops.clone()));
        awake.push((t, t + span));
        t += period;
    }
    MacSchedule::tile(horizon, &radio, &awake, RadioState::Off, Vec::new())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::powermodel::SourceKind;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn airtime_formula() {
        assert_eq!(PhyTiming::airtime(127), Ns::from_us(4256));
        assert_eq!(PhyTiming::airtime(12), Ns::from_us(576));
    }

    #[test]
    fn dsme_durations() {
        assert_eq!(dsme_slot_duration(3).unwrap(), Ns::from_us(7680));
        assert_eq!(dsme_slot_duration(0).unwrap(), Ns::from_us(960));
        // Oracle: 60 * 2^1 symbols of 16 us.
        assert_eq!(dsme_slot_duration(1).unwrap(), Ns::from_us(60 * 2 * 16));
        assert_eq!(dsme_multisuperframe_duration(10).unwrap(), Ns::from_us(15_728_640));
        assert_eq!(dsme_multisuperframe_duration(0).unwrap(), Ns::from_us(15_360));
        assert_eq!(superframes_per_multisuperframe(3, 10).unwrap(), 128);
        assert!(matches!(dsme_slot_duration(15), Err(Error::OutOfRange { .. })));
        assert!(dsme_multisuperframe_duration(15).is_err());
    }

    #[test]
    fn idle_poll_is_about_1_12_ms() {
        let ops = idtx_poll_transaction(&IdtxConfig::default(), &[]).unwrap();
        assert_eq!(ops_duration(&ops), Ns::from_us(576 + 192 + 352));
        assert!(matches!(
            idtx_poll_transaction(&IdtxConfig::default(), &[128]),
            Err(Error::FrameTooLarge(128))
        ));
    }

    #[test]
    fn poll_with_full_frame() {
        let cfg = IdtxConfig::default();
        let base = idtx_poll_transaction(&cfg, &[]).unwrap();
        let ops = idtx_poll_transaction(&cfg, &[127]).unwrap();
        let extra: Vec<_> = ops[base.len()..].to_vec();
        assert!(extra
            .iter()
            .any(|o| o.state == RadioState::RxBusy && o.duration == Ns::from_us(4256)));
        assert_eq!(extra.last().unwrap().state, RadioState::Tx);
        let two = idtx_poll_transaction(&cfg, &[40, 40]).unwrap();
        assert_eq!(two.iter().filter(|o| o.label == "tx_poll").count(), 2);
    }

    #[test]
    fn csma_backoff_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let state = CsmaState::new(CsmaParams::default());
        let allowed: Vec<Ns> = (0..8).map(|k| Ns(k * 320_000)).collect();
        let mut seen = BTreeSet::new();
        for _ in 0..400 {
            let d = csma_attempt(&mut rng, &state).unwrap();
            assert!(allowed.contains(&d));
            seen.insert(d);
        }
        assert_eq!(seen.len(), 8);
    }

    #[test]
    fn csma_idle_channel_single_cca_and_seeded() {
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            run_csma(&mut rng, CsmaParams::default(), |_| false).unwrap()
        };
        let a = run(42);
        assert_eq!(a.iter().filter(|o| o.label == "cca").count(), 1);
        assert_eq!(a, run(42));
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut st = CsmaState::new(CsmaParams::default());
        let d1 = csma_attempt(&mut rng, &st).unwrap();
        let d2 = csma_attempt(&mut rng, &st).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        assert_eq!(csma_attempt(&mut rng, &st).unwrap(), d1);
        assert_eq!(csma_attempt(&mut rng, &st).unwrap(), d2);
        for _ in 0..5 {
            st.channel_busy();
        }
        assert_eq!(st.be, 5);
        assert!(matches!(
            csma_attempt(&mut rng, &st),
            Err(Error::ChannelAccessFailure(5))
        ));
    }

    #[test]
    fn csma_busy_channel_fails() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r = run_csma(&mut rng, CsmaParams::default(), |_| true);
        assert!(matches!(r, Err(Error::ChannelAccessFailure(_))));
    }

    fn horizon() -> Ns {
        DsmeConfig::default().epoch() + dsme_multisuperframe_duration(10).unwrap()
    }

    #[test]
    fn dsme_no_gts_one_beacon_one_cap() {
        let cfg = DsmeConfig::default();
        let s = build_dsme_schedule(&cfg, horizon(), |_| None).unwrap();
        let beacons = s.intervals.iter().filter(|i| i.label == "rx_beacon").count();
        let caps = s.intervals.iter().filter(|i| i.label == "cap_listen").count();
        assert_eq!((beacons, caps), (1, 1));
        let on = s.radio_on_time();
        let expected = cfg.guard() + PhyTiming::airtime(38) + Ns(7_680_000 * 8);
        assert_eq!(on, expected);
        assert_eq!(s.horizon(), horizon());
    }

    #[test]
    fn downlink_gts_costs_more_radio_time_than_uplink() {
        let mk = |dir| DsmeConfig {
            gts: vec![GtsSlot {
                direction: dir,
                superframe_index: 3,
                slot_index: 4,
                channel: 0,
            }],
            ..DsmeConfig::default()
        };
        let dl = build_dsme_schedule(&mk(GtsDirection::Downlink), horizon(), |_| None).unwrap();
        let ul = build_dsme_schedule(&mk(GtsDirection::Uplink), horizon(), |_| None).unwrap();
        assert!(dl.radio_on_time() > ul.radio_on_time());
    }

    #[test]
    fn uplink_slot_full_frame() {
        let cfg = DsmeConfig {
            gts: vec![GtsSlot {
                direction: GtsDirection::Uplink,
                superframe_index: 1,
                slot_index: 2,
                channel: 0,
            }],
            ..DsmeConfig::default()
        };
        let s = build_dsme_schedule(&cfg, horizon(), |_| Some(127)).unwrap();
        let slot_start = cfg.epoch() + Ns(cfg.superframe_duration().0 + 2 * cfg.slot_duration().0);
        let tx = s.intervals.iter().find(|i| i.label == "tx_data").unwrap();
        assert_eq!(tx.start, slot_start);
        assert_eq!(tx.end - tx.start, Ns::from_us(4256));
        let off_at = s
            .intervals
            .iter()
            .find(|i| i.start > tx.start && i.radio == RadioState::Off)
            .unwrap()
            .start;
        assert!(off_at < slot_start + cfg.slot_duration());
    }

    #[test]
    fn dsme_config_errors() {
        let bad = DsmeConfig {
            so: 5,
            mo: 4,
            ..DsmeConfig::default()
        };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        let cap_slot = DsmeConfig {
            gts: vec![GtsSlot {
                direction: GtsDirection::Uplink,
                superframe_index: 0,
                slot_index: 3,
                channel: 0,
            }],
            ..DsmeConfig::default()
        };
        assert!(cap_slot.validate().is_err());
        let g = GtsSlot {
            direction: GtsDirection::Uplink,
            superframe_index: 2,
            slot_index: 3,
            channel: 1,
        };
        let dup = DsmeConfig {
            gts: vec![g, g],
            ..DsmeConfig::default()
        };
        assert!(dup.validate().is_err());
        let short = build_dsme_schedule(&DsmeConfig::default(), Ns::from_ms(100), |_| None);
        assert!(short.is_err());
    }

    #[test]
    fn deadlines_by_frequency() {
        let p = CalibrationProfile::default();
        let cfg = DsmeConfig::default();
        let s = build_dsme_schedule(&cfg, horizon(), |_| None).unwrap();
        let c8 = ClockConfig::new(SourceKind::Rc, 8, &p).unwrap();
        let c24 = ClockConfig::new(SourceKind::Rc, 24, &p).unwrap();
        assert!(!check_deadlines(&s, &c8).is_empty());
        assert!(check_deadlines(&s, &c24).is_empty());
        let free = DsmeConfig {
            preprocessing_cycles: 0,
            ..DsmeConfig::default()
        };
        let s0 = build_dsme_schedule(&free, horizon(), |_| None).unwrap();
        for c in p.all_configs() {
            assert!(check_deadlines(&s0, &c).is_empty());
        }
    }

    #[test]
    fn idtx_schedule_tiles() {
        let s = build_idtx_schedule(&IdtxConfig::default(), Ns::from_ms(10_000)).unwrap();
        assert_eq!(s.intervals.first().unwrap().start, Ns::ZERO);
        for w in s.intervals.windows(2) {
            assert_eq!(w[0].end, w[1].start);
        }
        assert_eq!(s.intervals.iter().filter(|i| i.label == "tx_poll").count(), 9);
    }
}
