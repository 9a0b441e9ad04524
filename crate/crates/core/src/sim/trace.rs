//! Simulation traces and their CSV form.

use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::powermodel::{
    integrate, power_of, CalibrationProfile, Component, ComponentState, EnergyReport, McuState, RadioState,
};
use crate::time::Ns;

pub const TRACE_HEADER: [&str; 6] = ["t_start_s", "t_end_s", "component", "state", "power_mW", "label"];

/// A constant-state stretch of one component.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub start: Ns,
    pub end: Ns,
    pub state: ComponentState,
    pub label: String,
}

impl Segment {
    pub fn duration(&self) -> Ns {
        self.end - self.start
    }
}

/// Both components' states over one stretch of time.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceInterval {
    pub start: Ns,
    pub end: Ns,
    pub mcu: McuState,
    pub radio: RadioState,
    pub label: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimTrace {
    /// MCU segments tiling `[0, end)`.
    pub mcu: Vec<Segment>,
    /// Radio segments tiling `[0, end)`.
    pub radio: Vec<Segment>,
    pub events: Vec<(Ns, String)>,
    pub end: Ns,
}

impl SimTrace {
    /// Combined intervals, split wherever either component changes.
    pub fn intervals(&self) -> Vec<TraceInterval> {
        let mut cuts: BTreeSet<Ns> = BTreeSet::new();
        for s in self.mcu.iter().chain(self.radio.iter()) {
            cuts.insert(s.start);
            cuts.insert(s.end);
        }
        let cuts: Vec<Ns> = cuts.into_iter().collect();
        let (mut mi, mut ri) = (0usize, 0usize);
        let mut out = Vec::with_capacity(cuts.len());
        for w in cuts.windows(2) {
            let a = w[0];
            while self.mcu[mi].end <= a {
                mi += 1;
            }
            while self.radio[ri].end <= a {
                ri += 1;
            }
            let (ComponentState::Mcu(m), ComponentState::Radio(r)) = (&self.mcu[mi].state, &self.radio[ri].state)
            else {
                unreachable!("segment lists hold their own component")
            };
            let label = if self.mcu[mi].label == "sleep" || self.mcu[mi].label == "idle" {
                self.radio[ri].label.clone()
            } else {
                self.mcu[mi].label.clone()
            };
            out.push(TraceInterval {
                start: a,
                end: w[1],
                mcu: *m,
                radio: *r,
                label,
            });
        }
        out
    }

    /// Radio state change points, merged across equal neighbours.
    pub fn radio_boundaries(&self) -> Vec<(Ns, RadioState)> {
        let mut out: Vec<(Ns, RadioState)> = Vec::new();
        for s in &self.radio {
            let ComponentState::Radio(r) = s.state else { continue };
            if out.last().map(|l| l.1) != Some(r) {
                out.push((s.start, r));
            }
        }
        out
    }

    pub fn write_csv<W: Write>(&self, w: W, profile: &CalibrationProfile) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(TRACE_HEADER)?;
        let mut rows: Vec<&Segment> = self.mcu.iter().chain(self.radio.iter()).collect();
        rows.sort_by_key(|s| (s.start, s.state.component()));
        for s in rows {
            let p = power_of(&s.state, profile)?;
            wr.write_record([
                s.start.to_decimal_secs(),
                s.end.to_decimal_secs(),
                s.state.component().as_str().to_string(),
                s.state.label(),
                format!("{}", p * 1e3),
                s.label.clone(),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn to_csv(&self, profile: &CalibrationProfile) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf, profile)?;
        Ok(String::from_utf8(buf).expect("csv is utf-8"))
    }
}

pub fn export_trace(trace: &SimTrace, path: &Path, profile: &CalibrationProfile) -> Result<()> {
    let f = std::fs::File::create(path)?;
    trace.write_csv(std::io::BufWriter::new(f), profile)
}

/// One parsed trace row.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub start: Ns,
    pub end: Ns,
    pub state: ComponentState,
    pub power_mw: f64,
    pub label: String,
}

#[derive(Debug, Deserialize, Serialize)]
struct RawRow {
    t_start_s: String,
    t_end_s: String,
    component: String,
    state: String,
    #[serde(rename = "power_mW")]
    power_mw: f64,
    label: String,
}

pub fn read_trace<R: Read>(r: R, profile: &CalibrationProfile) -> Result<Vec<TraceRow>> {
    let mut rd = csv::Reader::from_reader(r);
    let mut rows = Vec::new();
    for rec in rd.deserialize::<RawRow>() {
        let raw = rec?;
        let time = |s: &str| Ns::parse_decimal_secs(s).ok_or_else(|| Error::Parse(format!("bad time `{s}`")));
        let state = match raw.component.as_str() {
            "mcu" => ComponentState::Mcu(McuState::parse(&raw.state, profile)?),
            "radio" => ComponentState::Radio(
                RadioState::parse(&raw.state)
                    .ok_or_else(|| Error::Parse(format!("bad radio state `{}`", raw.state)))?,
            ),
            other => return Err(Error::Parse(format!("bad component `{other}`"))),
        };
        rows.push(TraceRow {
            start: time(&raw.t_start_s)?,
            end: time(&raw.t_end_s)?,
            state,
            power_mw: raw.power_mw,
            label: raw.label,
        });
    }
    Ok(rows)
}

pub fn read_trace_file(path: &Path, profile: &CalibrationProfile) -> Result<Vec<TraceRow>> {
    read_trace(std::fs::File::open(path)?, profile)
}

/// Energy of a parsed trace, integrated from the states it lists.
pub fn reintegrate(rows: &[TraceRow], profile: &CalibrationProfile) -> Result<EnergyReport> {
    let pieces: Vec<(Ns, Vec<ComponentState>)> = rows.iter().map(|r| (r.end - r.start, vec![r.state])).collect();
    let summed = integrate(&pieces, profile)?;
    let end = rows.iter().map(|r| r.end).max().unwrap_or(Ns::ZERO);
    Ok(EnergyReport::from_components(summed.per_component_j, end))
}

/// Energy drawn by the trace within the given disjoint time ranges.
pub fn energy_within(trace: &SimTrace, ranges: &[(Ns, Ns)], profile: &CalibrationProfile) -> Result<EnergyReport> {
    let mut per = std::collections::BTreeMap::new();
    let mut span = Ns::ZERO;
    for &(a, b) in ranges {
        span += b.saturating_sub(a);
    }
    for (c, segs) in [(Component::McuCore, &trace.mcu), (Component::Radio, &trace.radio)] {
        let mut e = 0.0;
        for &(a, b) in ranges {
            let first = segs.partition_point(|s| s.end <= a);
            for s in segs[first..].iter().take_while(|s| s.start < b) {
                let (lo, hi) = (s.start.max(a), s.end.min(b));
                e += crate::powermodel::segment_energy(power_of(&s.state, profile)?, hi - lo);
            }
        }
        per.insert(c, e);
    }
    Ok(EnergyReport::from_components(per, span))
}
