//! Event-driven execution of a scenario.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, VecDeque};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::clockctl::{execute_transition, on_wakeup, DvfsPolicy, TransitionCache};
use crate::error::{Error, Result};
use crate::mac::{
    idtx_poll_transaction, ops_duration, run_csma, rx_with_ack, tx_with_ack, CsmaParams, DeadlineMiss, DsmeActivity,
    DsmeActivityKind, DsmeConfig, GtsDirection, IdtxConfig, PhyTiming, RadioOp,
};
use crate::netstack::{plan_coap_exchange, TransactionPlan};
use crate::powermodel::{
    power_of, segment_energy, CalibrationProfile, ClockConfig, Component, ComponentState, McuState, RadioState,
};
use crate::time::Ns;

use super::report::{JobRecord, RequestWindow};
use super::scenario::{MacSpec, Scenario, TASK_APP, TASK_MAC, TASK_TIMER};
use super::trace::{Segment, SimTrace};

#[derive(Debug, Clone, PartialEq, Eq)]
enum JobKind {
    Timer,
    Poll { at: Ns },
    Dsme(usize),
    AppTx,
    AppRx,
    IdleRx { at: Ns },
    Extra(usize),
}

#[derive(Debug, Clone)]
struct Job {
    kind: JobKind,
    task: String,
    release: Ns,
}

#[derive(Debug, Clone)]
enum Event {
    Release(Job),
    DsmeWake(usize),
}

#[derive(Debug, Clone, Copy)]
struct QueuedFrame {
    psdu: usize,
    ready: Ns,
}

struct App {
    plan: TransactionPlan,
    burst: u32,
    request: u32,
    block: usize,
    issued: Ns,
    ul_queue: VecDeque<QueuedFrame>,
    dl_queue: VecDeque<QueuedFrame>,
    ul_left: usize,
    dl_left: usize,
    windows: Vec<RequestWindow>,
    done_at: Option<Ns>,
}

/// Everything a finished run produced.
pub(crate) struct RawRun {
    pub trace: SimTrace,
    pub per_component: BTreeMap<Component, f64>,
    pub jobs: Vec<JobRecord>,
    pub misses: Vec<DeadlineMiss>,
    pub windows: Vec<RequestWindow>,
    pub cfp: Vec<(Ns, Ns)>,
    pub cache_hits: u64,
    pub cache_misses: u64,
}

struct Engine<'a> {
    sc: &'a Scenario,
    profile: &'a CalibrationProfile,
    policy: DvfsPolicy,
    cache: TransitionCache,
    rng: ChaCha8Rng,
    heap: BinaryHeap<Reverse<(Ns, u64)>>,
    pending: BTreeMap<u64, Event>,
    seq: u64,
    ready: VecDeque<Job>,
    // MCU
    asleep: bool,
    current: ClockConfig,
    mcu_t: Ns,
    // radio
    radio_rest: RadioState,
    radio_t: Ns,
    trace: SimTrace,
    acc: BTreeMap<Component, f64>,
    jobs: Vec<JobRecord>,
    misses: Vec<DeadlineMiss>,
    idtx: Option<IdtxConfig>,
    dsme: Option<DsmeConfig>,
    activities: Vec<DsmeActivity>,
    app: Option<App>,
    first_done: BTreeMap<String, Ns>,
}

pub(crate) fn execute(sc: &Scenario, profile: &CalibrationProfile) -> Result<RawRun> {
    sc.validate(profile)?;
    let policy = sc.build_policy(profile)?;
    let mut cache = TransitionCache::new(profile.transition_cache_capacity);
    let reset = ClockConfig::reset(profile);
    if sc.prewarm_cache {
        let mut targets: Vec<ClockConfig> = policy.task_targets.values().copied().collect();
        targets.sort_by_key(|c| (c.core_hz(), c.kind()));
        targets.dedup();
        for &to in &targets {
            cache.prewarm(reset, to, profile)?;
        }
        for &from in &targets {
            for &to in &targets {
                cache.prewarm(from, to, profile)?;
            }
        }
    }
    let horizon = sc.horizon();
    let (idtx, dsme) = match &sc.mac {
        MacSpec::Idtx(s) => (Some(s.config), None),
        MacSpec::Dsme(s) => (None, Some(s.resolved()?)),
        _ => (None, None),
    };
    let activities = match &dsme {
        Some(d) => d.activities(horizon)?,
        None => Vec::new(),
    };
    let app = match &sc.app {
        Some(a) if a.burst > 0 => {
            let ov = sc.stack_overheads(profile)?;
            Some(App {
                plan: plan_coap_exchange(a.method, a.payload_bytes, a.secure, &ov)?,
                burst: a.burst,
                request: 0,
                block: 0,
                issued: Ns::ZERO,
                ul_queue: VecDeque::new(),
                dl_queue: VecDeque::new(),
                ul_left: 0,
                dl_left: 0,
                windows: Vec::new(),
                done_at: None,
            })
        }
        _ => None,
    };
    let initial = if sc.lpm { reset } else { policy.target(TASK_TIMER)? };
    let mut eng = Engine {
        sc,
        profile,
        policy,
        cache,
        rng: ChaCha8Rng::seed_from_u64(sc.seed),
        heap: BinaryHeap::new(),
        pending: BTreeMap::new(),
        seq: 0,
        ready: VecDeque::new(),
        asleep: sc.lpm,
        current: initial,
        mcu_t: Ns::ZERO,
        radio_rest: if matches!(sc.mac, MacSpec::Idle) {
            RadioState::RxListen
        } else {
            RadioState::Off
        },
        radio_t: Ns::ZERO,
        trace: SimTrace::default(),
        acc: BTreeMap::new(),
        jobs: Vec::new(),
        misses: Vec::new(),
        idtx,
        dsme,
        activities,
        app,
        first_done: BTreeMap::new(),
    };
    eng.seed_events(horizon)?;
    eng.run_loop(horizon)?;
    let cfp = match &eng.dsme {
        Some(d) => d.cfp_windows(eng.mcu_t.max(eng.radio_t)),
        None => Vec::new(),
    };
    let windows = eng.app.as_ref().map(|a| a.windows.clone()).unwrap_or_default();
    Ok(RawRun {
        trace: eng.trace,
        per_component: eng.acc,
        jobs: eng.jobs,
        misses: eng.misses,
        windows,
        cfp,
        cache_hits: eng.cache.hits(),
        cache_misses: eng.cache.misses(),
    })
}

impl<'a> Engine<'a> {
    fn push(&mut self, at: Ns, ev: Event) {
        self.seq += 1;
        self.heap.push(Reverse((at, self.seq)));
        self.pending.insert(self.seq, ev);
    }

    fn release(&mut self, at: Ns, kind: JobKind, task: &str) {
        let job = Job {
            kind,
            task: task.to_string(),
            release: at,
        };
        self.push(at, Event::Release(job));
    }

    fn seed_events(&mut self, horizon: Ns) -> Result<()> {
        let sc = self.sc;
        if sc.timer {
            let period = self.profile.timer_period();
            let mut t = Ns::from_secs_f64(sc.timer_phase_s);
            while t < horizon && period > Ns::ZERO {
                self.release(t, JobKind::Timer, TASK_TIMER);
                t += period;
            }
        }
        if let (Some(cfg), MacSpec::Idtx(spec)) = (self.idtx, &sc.mac) {
            let target = self.policy.target(TASK_MAC)?;
            let from = if sc.lpm { self.policy.default_config } else { target };
            let lead = self.cache.peek_duration(from, target, self.profile)
                + Ns::for_cycles(self.profile.workload_cycles.idtx_pre, target.core_hz());
            let period = cfg.poll_interval();
            let mut t = spec.first_poll_s.map(Ns::from_secs_f64).unwrap_or(period);
            let mut n = 0u32;
            while t < horizon && spec.polls.is_none_or(|p| n < p) {
                self.release(t.saturating_sub(lead), JobKind::Poll { at: t }, TASK_MAC);
                t += period;
                n += 1;
            }
        }
        for i in 0..self.activities.len() {
            let at = self.activities[i].wake_at;
            self.push(at, Event::DsmeWake(i));
        }
        for (i, t) in sc.tasks.iter().enumerate() {
            if let Some(at) = t.at_s {
                let at = Ns::from_secs_f64(at);
                if at < horizon {
                    self.release(at, JobKind::Extra(i), &t.id.clone());
                }
            }
        }
        if self.app.is_some() {
            let start = self.app_start()?;
            if start < horizon {
                self.release(start, JobKind::AppTx, TASK_APP);
            }
        }
        Ok(())
    }

    fn app_start(&self) -> Result<Ns> {
        let spec = self.sc.app.as_ref().expect("app present");
        if let Some(s) = spec.start_s {
            return Ok(Ns::from_secs_f64(s));
        }
        if self.dsme.is_some() {
            let tx: Vec<Ns> = self
                .activities
                .iter()
                .filter(|a| matches!(a.kind, DsmeActivityKind::Gts(g) if g.direction == GtsDirection::Uplink))
                .map(|a| a.slot_start)
                .collect();
            return tx
                .get(2)
                .or(tx.first())
                .copied()
                .ok_or_else(|| Error::Capacity("DSME application traffic needs an uplink GTS".into()));
        }
        Ok(Ns::ZERO)
    }

    fn stop_time(&self, horizon: Ns) -> Ns {
        match (self.sc.duration_s, self.app.as_ref().and_then(|a| a.done_at)) {
            (None, Some(done)) => done.min(horizon),
            _ => horizon,
        }
    }

    fn run_loop(&mut self, horizon: Ns) -> Result<()> {
        loop {
            let next_ev = self.heap.peek().map(|Reverse((t, _))| *t);
            if let Some(job) = self.ready.front() {
                let start = self.mcu_t.max(job.release);
                if next_ev.is_none_or(|te| start <= te) {
                    let job = self.ready.pop_front().expect("non-empty");
                    self.run_job(job, start)?;
                    continue;
                }
            }
            let Some(Reverse((t, seq))) = self.heap.pop() else {
                break;
            };
            if t >= self.stop_time(horizon) {
                break;
            }
            let ev = self.pending.remove(&seq).expect("event stored");
            self.handle(t, ev)?;
        }
        if self.sc.duration_s.is_none() {
            if let Some(app) = &self.app {
                if app.done_at.is_none() {
                    return Err(Error::Capacity(format!(
                        "application finished {} of {} requests within {} s",
                        app.windows.len(),
                        app.burst,
                        self.sc.max_duration_s
                    )));
                }
            }
        }
        let end = self.stop_time(horizon).max(self.mcu_t).max(self.radio_t);
        let end = if self.sc.duration_s.is_none() {
            self.app
                .as_ref()
                .and_then(|a| a.done_at)
                .unwrap_or(end)
                .max(self.mcu_t)
                .max(self.radio_t)
        } else {
            end
        };
        self.idle_mcu_until(end)?;
        self.radio_fill(end)?;
        self.trace.end = end;
        Ok(())
    }

    fn handle(&mut self, t: Ns, ev: Event) -> Result<()> {
        match ev {
            Event::Release(job) => self.ready.push_back(job),
            Event::DsmeWake(i) => {
                let act = self.activities[i];
                if let DsmeActivityKind::Gts(g) = act.kind {
                    if g.direction == GtsDirection::Uplink {
                        let has = self.app.as_ref().is_some_and(|a| !a.ul_queue.is_empty());
                        if !has {
                            self.trace.events.push((t, "gts_tx_idle".into()));
                            return Ok(());
                        }
                    }
                }
                self.ready.push_back(Job {
                    kind: JobKind::Dsme(i),
                    task: TASK_MAC.to_string(),
                    release: t,
                });
            }
        }
        Ok(())
    }

    // -- timeline primitives --------------------------------------------

    fn push_mcu(&mut self, state: McuState, dur: Ns, label: &str) -> Result<()> {
        if dur == Ns::ZERO {
            return Ok(());
        }
        let st = ComponentState::Mcu(state);
        let p = power_of(&st, self.profile)?;
        *self.acc.entry(Component::McuCore).or_insert(0.0) += segment_energy(p, dur);
        self.trace.mcu.push(Segment {
            start: self.mcu_t,
            end: self.mcu_t + dur,
            state: st,
            label: label.to_string(),
        });
        self.mcu_t += dur;
        Ok(())
    }

    fn push_radio(&mut self, state: RadioState, dur: Ns, label: &str) -> Result<()> {
        if dur == Ns::ZERO {
            return Ok(());
        }
        let st = ComponentState::Radio(state);
        let p = power_of(&st, self.profile)?;
        *self.acc.entry(Component::Radio).or_insert(0.0) += segment_energy(p, dur);
        self.trace.radio.push(Segment {
            start: self.radio_t,
            end: self.radio_t + dur,
            state: st,
            label: label.to_string(),
        });
        self.radio_t += dur;
        Ok(())
    }

    fn idle_mcu_until(&mut self, t: Ns) -> Result<()> {
        if t <= self.mcu_t {
            return Ok(());
        }
        let dur = t - self.mcu_t;
        if self.asleep {
            self.push_mcu(McuState::LpmSleep, dur, "sleep")
        } else {
            self.push_mcu(McuState::Active(self.current), dur, "idle")
        }
    }

    fn radio_fill(&mut self, t: Ns) -> Result<()> {
        if t <= self.radio_t {
            return Ok(());
        }
        let label = if self.radio_rest == RadioState::Off {
            "off"
        } else {
            "listen"
        };
        self.push_radio(self.radio_rest, t - self.radio_t, label)
    }

    fn compute(&mut self, cycles: u64, label: &str) -> Result<()> {
        let dur = Ns::for_cycles(cycles, self.current.core_hz());
        self.push_mcu(McuState::Active(self.current), dur, label)
    }

    fn hold_until(&mut self, t: Ns) -> Result<()> {
        if t > self.mcu_t {
            let dur = t - self.mcu_t;
            self.push_mcu(McuState::Active(self.current), dur, "hold")?;
        }
        Ok(())
    }

    /// Radio ops starting now; the MCU stays active while they run.
    fn radio(&mut self, ops: &[RadioOp]) -> Result<()> {
        let now = self.mcu_t;
        self.radio_fill(now)?;
        debug_assert_eq!(self.radio_t, now);
        for op in ops {
            self.push_radio(op.state, op.duration, op.label)?;
        }
        let span = ops_duration(ops);
        self.push_mcu(McuState::Active(self.current), span, "radio")
    }

    /// Fixed-time radio activity; late starts are recorded as misses.
    fn radio_at(&mut self, at: Ns, ops: &[RadioOp], label: &str, window: Ns, since: Ns) -> Result<()> {
        if self.mcu_t > at {
            self.misses.push(DeadlineMiss {
                at,
                label: label.to_string(),
                needed: self.mcu_t - since,
                window,
            });
        }
        self.hold_until(at)?;
        self.radio(ops)
    }

    // -- jobs -------------------------------------------------------------

    fn run_job(&mut self, job: Job, start: Ns) -> Result<()> {
        if start <= self.mcu_t {
            self.asleep = false;
        }
        self.idle_mcu_until(start)?;
        let target = self.policy.target(&job.task)?;
        let tr = if self.asleep {
            on_wakeup(&mut self.cache, &self.policy, &job.task, self.profile)?
        } else {
            execute_transition(&mut self.cache, self.current, target, self.profile)?
        };
        self.push_mcu(McuState::Active(tr.power_config), tr.elapsed, "transition")?;
        self.asleep = false;
        self.current = tr.end_config;
        let exec_start = self.mcu_t;
        let label = self.execute_body(&job, start)?;
        let end = self.mcu_t;
        self.jobs.push(JobRecord {
            task: job.task.clone(),
            label,
            release: job.release,
            start,
            exec_start,
            end,
            transition: tr.outcome,
        });
        self.trace.events.push((end, format!("{}_done", job.task)));
        if !self.first_done.contains_key(&job.task) {
            self.first_done.insert(job.task.clone(), end);
            for (i, t) in self.sc.tasks.iter().enumerate() {
                if t.after.as_deref() == Some(job.task.as_str()) {
                    let id = t.id.clone();
                    self.release(end, JobKind::Extra(i), &id);
                }
            }
        }
        if self.sc.lpm {
            self.asleep = true;
        }
        Ok(())
    }

    fn execute_body(&mut self, job: &Job, start: Ns) -> Result<String> {
        let wc = self.profile.workload_cycles;
        match job.kind {
            JobKind::Timer => {
                self.compute(self.profile.timer_wakeup_cycles, "timer")?;
                Ok("timer".into())
            }
            JobKind::Extra(i) => {
                let t = &self.sc.tasks[i];
                let (cycles, id) = (t.resolved_cycles(self.profile)?, t.id.clone());
                self.compute(cycles, &id)?;
                Ok(id)
            }
            JobKind::Poll { at } => {
                let cfg = self.idtx.expect("idtx config");
                self.compute(wc.idtx_pre, "mac_pre")?;
                let radio_start = self.mcu_t.max(at);
                let pending: Vec<QueuedFrame> = match &mut self.app {
                    Some(app) => {
                        let n = app.dl_queue.iter().take_while(|f| f.ready <= radio_start).count();
                        app.dl_queue.drain(..n).collect()
                    }
                    None => Vec::new(),
                };
                let psdus: Vec<usize> = pending.iter().map(|f| f.psdu).collect();
                let ops = idtx_poll_transaction(&cfg, &psdus)?;
                self.radio_at(at, &ops, "poll", cfg.poll_interval(), start)?;
                self.compute(wc.idtx_post, "mac_post")?;
                if !pending.is_empty() {
                    self.downlink_received(pending.len())?;
                }
                Ok("poll".into())
            }
            JobKind::IdleRx { at } => {
                let frames: Vec<QueuedFrame> = match &mut self.app {
                    Some(app) => app.dl_queue.drain(..).collect(),
                    None => Vec::new(),
                };
                self.hold_until(at)?;
                let mut ops = Vec::new();
                for (i, f) in frames.iter().enumerate() {
                    if i > 0 {
                        ops.push(RadioOp::new(RadioState::RxListen, PhyTiming::TURNAROUND, "await_data"));
                    }
                    ops.extend(rx_with_ack(f.psdu)?);
                }
                self.radio(&ops)?;
                self.compute(wc.idtx_post, "mac_post")?;
                self.downlink_received(frames.len())?;
                Ok("rx".into())
            }
            JobKind::Dsme(i) => self.dsme_job(i, start),
            JobKind::AppTx => self.app_tx(),
            JobKind::AppRx => self.app_rx(),
        }
    }

    fn dsme_job(&mut self, i: usize, start: Ns) -> Result<String> {
        let act = self.activities[i];
        let cfg = self.dsme.clone().expect("dsme config");
        let wc = self.profile.workload_cycles;
        self.compute(cfg.preprocessing_cycles, "mac_pre")?;
        let radio_start = self.mcu_t.max(act.radio_start);
        let mut received = 0usize;
        let mut sent_last_uplink = false;
        let ops = match act.kind {
            DsmeActivityKind::Beacon => cfg.beacon_ops(),
            DsmeActivityKind::Cap => cfg.cap_ops(),
            DsmeActivityKind::Gts(g) => {
                let frame = self.app.as_mut().and_then(|app| {
                    let q = match g.direction {
                        GtsDirection::Uplink => &mut app.ul_queue,
                        GtsDirection::Downlink => &mut app.dl_queue,
                    };
                    match q.front() {
                        Some(f) if f.ready <= act.slot_start.max(radio_start) => q.pop_front(),
                        _ => None,
                    }
                });
                match g.direction {
                    GtsDirection::Uplink => {
                        if frame.is_some() {
                            let app = self.app.as_mut().expect("frame implies app");
                            app.ul_left -= 1;
                            sent_last_uplink = app.ul_left == 0;
                        }
                        cfg.tx_slot_ops(frame.map(|f| f.psdu))?
                    }
                    GtsDirection::Downlink => {
                        if frame.is_some() {
                            received = 1;
                        }
                        cfg.rx_slot_ops(frame.map(|f| f.psdu))?
                    }
                }
            }
        };
        self.radio_at(act.radio_start, &ops, act.label(), cfg.wake_margin(), start)?;
        if sent_last_uplink {
            let t = self.radio_t;
            self.uplink_delivered(t);
        }
        self.compute(wc.dsme_post, "mac_post")?;
        if received > 0 {
            self.downlink_received(received)?;
        }
        Ok(act.label().into())
    }

    fn app_cycles(&self, frames: usize, extra: u64) -> u64 {
        let wc = &self.profile.workload_cycles;
        wc.coap_message + wc.sixlowpan_frame * frames as u64 + extra / 2
    }

    fn app_tx(&mut self) -> Result<String> {
        let now = self.mcu_t;
        let (frames, cycles) = {
            let app = self.app.as_mut().expect("app job without app");
            if app.block == 0 {
                app.issued = now;
            }
            let ex = app.plan.exchanges[app.block].clone();
            app.ul_left = ex.uplink.len();
            app.dl_left = ex.downlink.len();
            (ex.uplink.clone(), (ex.uplink.len(), ex.cpu_extra_cycles))
        };
        let cycles = self.app_cycles(cycles.0, cycles.1);
        self.compute(cycles, "app_tx")?;
        if self.dsme.is_some() {
            let t = self.mcu_t;
            let app = self.app.as_mut().expect("app");
            for f in &frames {
                app.ul_queue.push_back(QueuedFrame {
                    psdu: f.psdu_bytes,
                    ready: t,
                });
            }
            return Ok("app_tx".into());
        }
        for f in &frames {
            let mut ops = run_csma(&mut self.rng, CsmaParams::default(), |_| false)?;
            ops.extend(tx_with_ack(f.psdu_bytes)?);
            self.radio(&ops)?;
        }
        if let Some(app) = self.app.as_mut() {
            app.ul_left = 0;
        }
        let t = self.radio_t;
        self.uplink_delivered(t);
        Ok("app_tx".into())
    }

    /// The coordinator answers as soon as the whole request arrived.
    fn uplink_delivered(&mut self, t: Ns) {
        let idle = matches!(self.sc.mac, MacSpec::Idle);
        let app = self.app.as_mut().expect("app");
        let ex = &app.plan.exchanges[app.block];
        for f in &ex.downlink {
            app.dl_queue.push_back(QueuedFrame {
                psdu: f.psdu_bytes,
                ready: t,
            });
        }
        self.trace.events.push((t, "uplink_delivered".into()));
        if idle {
            self.release(
                t,
                JobKind::IdleRx {
                    at: t + PhyTiming::TURNAROUND,
                },
                TASK_MAC,
            );
        }
    }

    fn downlink_received(&mut self, n: usize) -> Result<()> {
        let end = self.mcu_t;
        let app = self.app.as_mut().expect("app");
        app.dl_left = app.dl_left.saturating_sub(n);
        if app.dl_left == 0 {
            self.release(end, JobKind::AppRx, TASK_APP);
        }
        Ok(())
    }

    fn app_rx(&mut self) -> Result<String> {
        let (n, extra) = {
            let app = self.app.as_ref().expect("app");
            let ex = &app.plan.exchanges[app.block];
            (ex.downlink.len(), ex.cpu_extra_cycles)
        };
        let cycles = self.app_cycles(n, extra);
        self.compute(cycles, "app_rx")?;
        let end = self.mcu_t;
        let app = self.app.as_mut().expect("app");
        app.block += 1;
        if app.block < app.plan.exchanges.len() {
            self.release(end, JobKind::AppTx, TASK_APP);
            return Ok("app_rx".into());
        }
        app.windows.push(RequestWindow {
            id: app.request,
            start: app.issued,
            end,
        });
        app.block = 0;
        app.request += 1;
        if app.request < app.burst {
            self.release(end, JobKind::AppTx, TASK_APP);
        } else {
            app.done_at = Some(end);
        }
        Ok("app_rx".into())
    }
}
