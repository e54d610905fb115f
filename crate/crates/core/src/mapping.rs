//! One-event state transitions `T_{i+1} = F(T_i, x_i, s_{i+1})`.
//!
//! For two lanes both policies are piecewise affine. The rows below are
//! written for an event in lane 1 ("ego" = lane 1, "other" = lane 2); events
//! in lane 2 swap the roles. Domains use the printed inequalities verbatim.
//! Points on a shared boundary that satisfy none of them (measure zero) go to
//! the lowest-numbered region whose closed domain contains them.
//!
//! The FO rows leave `Δd + Δs < T² − T¹ ≤ x + Δd + Δs` with `T¹ ≥ x − Δs`
//! uncovered, as well as states no trajectory can reach. Those points are
//! resolved by replaying the equilibrium from the last vehicle of each lane
//! and are reported as [`Region::Fallback`].

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::micro::MicroState;
use crate::model::{ArrivalEvent, DelayVector, IntersectionSpec, Lane};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    Fifo,
    Fo,
}

impl Policy {
    pub const ALL: [Policy; 2] = [Policy::Fifo, Policy::Fo];

    pub fn region_count(self) -> u8 {
        match self {
            Policy::Fifo => 4,
            Policy::Fo => 8,
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Policy::Fifo => "fifo",
            Policy::Fo => "fo",
        })
    }
}

impl std::str::FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fifo" => Ok(Policy::Fifo),
            "fo" => Ok(Policy::Fo),
            other => Err(Error::InvalidParameter(format!(
                "unknown policy {other:?} (expected fifo or fo)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    Row(u8),
    Fallback,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RegionLabel {
    pub policy: Policy,
    pub region: Region,
}

impl RegionLabel {
    pub fn row(policy: Policy, id: u8) -> Self {
        debug_assert!(id >= 1 && id <= policy.region_count());
        RegionLabel {
            policy,
            region: Region::Row(id),
        }
    }

    pub fn fallback(policy: Policy) -> Self {
        RegionLabel {
            policy,
            region: Region::Fallback,
        }
    }

    pub fn id(&self) -> Option<u8> {
        match self.region {
            Region::Row(id) => Some(id),
            Region::Fallback => None,
        }
    }

    pub fn is_fallback(&self) -> bool {
        self.region == Region::Fallback
    }

    /// Row number, or `"fallback"`.
    pub fn code(&self) -> String {
        match self.region {
            Region::Row(id) => id.to_string(),
            Region::Fallback => "fallback".to_string(),
        }
    }
}

impl fmt::Display for RegionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.policy, self.code())
    }
}

#[derive(Clone, Copy, Debug)]
struct Local {
    ego: f64,
    other: f64,
    gap: f64,
    dd: f64,
    ds: f64,
}

fn fifo_domains(p: &Local, closed: bool) -> [bool; 4] {
    let Local {
        ego: e,
        other: o,
        gap: x,
        dd,
        ds,
    } = *p;
    let lt = |a: f64, b: f64| if closed { a <= b } else { a < b };
    [
        lt(e, x - ds) && lt(o, x - dd),
        e >= x - ds && lt(o, x - dd) && lt(o, e),
        o >= x - dd && lt(o, e),
        o >= x - dd && lt(e, o),
    ]
}

fn fo_domains(p: &Local, closed: bool) -> [bool; 8] {
    let Local {
        ego: e,
        other: o,
        gap: x,
        dd,
        ds,
    } = *p;
    let lt = |a: f64, b: f64| if closed { a <= b } else { a < b };
    let diff = o - e;
    [
        lt(e, x - ds) && lt(o, x - dd),
        e >= x - ds && lt(o, x - dd) && lt(o, e),
        o >= x - dd && lt(o, e),
        o >= x - dd && lt(o, x) && lt(e, o),
        o >= x && lt(o, x + dd) && lt(e, x - ds),
        diff >= dd && diff <= dd + ds && e >= x - ds,
        lt(e, x - ds) && o >= x + dd,
        lt(x + dd + ds, diff) && e >= x - ds,
    ]
}

fn ids(domains: &[bool]) -> Vec<u8> {
    domains
        .iter()
        .enumerate()
        .filter(|(_, &hit)| hit)
        .map(|(i, _)| i as u8 + 1)
        .collect()
}

/// Rows whose printed domain contains the point, for an event in `lane`.
pub fn matching_rows(
    delays: &DelayVector,
    gap: f64,
    lane: Lane,
    spec: &IntersectionSpec,
    policy: Policy,
) -> Result<Vec<u8>> {
    let p = localize(delays, gap, lane, spec)?;
    Ok(match policy {
        Policy::Fifo => ids(&fifo_domains(&p, false)),
        Policy::Fo => ids(&fo_domains(&p, false)),
    })
}

/// Points the FO rows do not cover because of the strict bound in row 8.
pub fn in_fo_sliver(delays: &DelayVector, gap: f64, lane: Lane, spec: &IntersectionSpec) -> bool {
    match localize(delays, gap, lane, spec) {
        Ok(p) => {
            let diff = p.other - p.ego;
            p.ego >= p.gap - p.ds && diff > p.dd + p.ds && diff <= p.gap + p.dd + p.ds
        }
        Err(_) => false,
    }
}

fn localize(delays: &DelayVector, gap: f64, lane: Lane, spec: &IntersectionSpec) -> Result<Local> {
    if spec.lane_count() != 2 {
        return Err(Error::NotTwoLane(spec.lane_count()));
    }
    if delays.len() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            got: delays.len(),
        });
    }
    spec.check_lane(lane)?;
    let ego = lane.index();
    Ok(Local {
        ego: delays[ego],
        other: delays[1 - ego],
        gap,
        dd: spec.delta_d(),
        ds: spec.delta_s(),
    })
}

fn pick(verbatim: &[bool], closed: &[bool]) -> Option<u8> {
    let first = |d: &[bool]| d.iter().position(|&hit| hit).map(|i| i as u8 + 1);
    first(verbatim).or_else(|| first(closed))
}

fn classify_local(p: &Local, policy: Policy) -> Option<u8> {
    match policy {
        Policy::Fifo => pick(&fifo_domains(p, false), &fifo_domains(p, true)),
        Policy::Fo => pick(&fo_domains(p, false), &fo_domains(p, true)),
    }
}

/// The region used for `(T, x)` with an event in `lane`. FO points outside
/// every row come back as [`Region::Fallback`]; a FIFO miss is an error.
pub fn classify_region(
    delays: &DelayVector,
    gap: f64,
    lane: Lane,
    spec: &IntersectionSpec,
    policy: Policy,
) -> Result<RegionLabel> {
    let p = localize(delays, gap, lane, spec)?;
    match (classify_local(&p, policy), policy) {
        (Some(id), _) => Ok(RegionLabel::row(policy, id)),
        (None, Policy::Fo) => Ok(RegionLabel::fallback(policy)),
        (None, Policy::Fifo) => Err(Error::Unclassified {
            policy,
            delays: delays.to_vec(),
            gap,
        }),
    }
}

/// Row value as `(ego, other)`, before clamping.
fn row_value(p: &Local, id: u8) -> (f64, f64) {
    let Local {
        ego: e,
        other: o,
        gap: x,
        dd,
        ds,
    } = *p;
    match id {
        1 => (0.0, -dd),
        2 => (e + ds - x, -dd),
        3 => (e + ds - x, o - x),
        4 => (o + dd - x, o - x),
        5 => (0.0, dd),
        6 => (e - x + ds, e - x + ds + dd),
        7 => (0.0, o - x),
        8 => (e - x + ds, o - x),
        _ => unreachable!("no region {id}"),
    }
}

fn assemble(lane: Lane, ego: f64, other: f64, dd: f64) -> DelayVector {
    let mut out = DelayVector::from_pair(0.0, 0.0);
    out[lane.index()] = ego;
    out[1 - lane.index()] = other;
    out.clamp(dd)
}

/// Two-lane FIFO map.
pub fn fifo_step(
    delays: &DelayVector,
    event: &ArrivalEvent,
    spec: &IntersectionSpec,
) -> Result<(DelayVector, RegionLabel)> {
    let label = classify_region(delays, event.gap, event.lane, spec, Policy::Fifo)?;
    let p = localize(delays, event.gap, event.lane, spec)?;
    let (ego, other) = row_value(&p, label.id().expect("FIFO labels are rows"));
    Ok((assemble(event.lane, ego, other, p.dd), label))
}

/// Two-lane FO map; rows 1–4 coincide with FIFO.
pub fn fo_step(
    delays: &DelayVector,
    event: &ArrivalEvent,
    spec: &IntersectionSpec,
) -> Result<(DelayVector, RegionLabel)> {
    let label = classify_region(delays, event.gap, event.lane, spec, Policy::Fo)?;
    match label.region {
        Region::Row(id) => {
            let p = localize(delays, event.gap, event.lane, spec)?;
            let (ego, other) = row_value(&p, id);
            Ok((assemble(event.lane, ego, other, p.dd), label))
        }
        Region::Fallback => Ok((replay_step(Policy::Fo, delays, event, spec)?, label)),
    }
}

/// FIFO map for any conflict graph: the ego lane waits for its own last
/// vehicle (`+Δs`) and for every conflicting lane (`+Δd`); all other lanes
/// simply age by `x`.
pub fn fifo_step_general(
    delays: &DelayVector,
    event: &ArrivalEvent,
    spec: &IntersectionSpec,
) -> Result<DelayVector> {
    check_dims(delays, spec)?;
    spec.check_lane(event.lane)?;
    let x = event.gap;
    let s = event.lane;
    let mut ego = (delays.lane(s) + spec.delta_s() - x).max(0.0);
    for other in spec.conflicting_lanes(s) {
        ego = ego.max(delays.lane(other) + spec.delta_d() - x);
    }
    let mut out = delays.clone();
    for (k, t) in out.iter_mut().enumerate() {
        *t = if k == s.index() { ego } else { *t - x };
    }
    Ok(out.clamp(spec.delta_d()))
}

/// Map obtained by replaying the equilibrium from one vehicle per lane
/// sitting at its lane delay. Used for FO outside the tabulated rows and for
/// FO with more than two lanes.
pub fn replay_step(
    policy: Policy,
    delays: &DelayVector,
    event: &ArrivalEvent,
    spec: &IntersectionSpec,
) -> Result<DelayVector> {
    let mut state = MicroState::from_lane_delays(policy, spec, delays)?.without_truncation();
    state.push(event.gap, event.lane)?;
    state.lane_delays()
}

fn check_dims(delays: &DelayVector, spec: &IntersectionSpec) -> Result<()> {
    if delays.len() != spec.lane_count() {
        return Err(Error::DimensionMismatch {
            expected: spec.lane_count(),
            got: delays.len(),
        });
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub next: DelayVector,
    /// `None` when the map is not tabulated (more than two lanes).
    pub region: Option<RegionLabel>,
}

/// Advance `delays` by one event under `policy`, using the tabulated maps for
/// two lanes and the general forms otherwise.
pub fn step(
    policy: Policy,
    delays: &DelayVector,
    event: &ArrivalEvent,
    spec: &IntersectionSpec,
) -> Result<StepOutcome> {
    if spec.lane_count() == 2 {
        let (next, label) = match policy {
            Policy::Fifo => fifo_step(delays, event, spec)?,
            Policy::Fo => fo_step(delays, event, spec)?,
        };
        return Ok(StepOutcome {
            next,
            region: Some(label),
        });
    }
    let next = match policy {
        Policy::Fifo => fifo_step_general(delays, event, spec)?,
        Policy::Fo => replay_step(Policy::Fo, delays, event, spec)?,
    };
    Ok(StepOutcome { next, region: None })
}

/// Scalar delay of one event from the lane delays before and after it:
/// the ego lane's new delay plus how far each other lane was pushed back.
/// A lane that was not pushed satisfies `after = max(before − x, −Δd)`.
pub fn scalar_delay(
    before: &DelayVector,
    after: &DelayVector,
    event: &ArrivalEvent,
    spec: &IntersectionSpec,
) -> f64 {
    let s = event.lane.index();
    let dd = spec.delta_d();
    let mut d = after[s];
    for k in 0..after.len() {
        if k != s {
            d += after[k] - (before[k] - event.gap).max(-dd);
        }
    }
    d
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RegionCell {
    pub t1: f64,
    pub t2: f64,
    pub region: RegionLabel,
}

/// Region labels over a `resolution x resolution` grid of
/// `(T¹, T²) ∈ [−Δd, t_max]²` for a lane-1 event with gap `gap`.
pub fn region_grid(
    spec: &IntersectionSpec,
    policy: Policy,
    gap: f64,
    t_max: f64,
    resolution: usize,
) -> Result<Vec<RegionCell>> {
    if resolution < 2 {
        return Err(Error::InvalidParameter("grid resolution must be >= 2".into()));
    }
    let lo = -spec.delta_d();
    if !(t_max > lo) {
        return Err(Error::InvalidParameter(format!(
            "grid maximum {t_max} must exceed {lo}"
        )));
    }
    let step = (t_max - lo) / (resolution - 1) as f64;
    let mut cells = Vec::with_capacity(resolution * resolution);
    for i in 0..resolution {
        for j in 0..resolution {
            let t1 = lo + step * i as f64;
            let t2 = lo + step * j as f64;
            let region =
                classify_region(&DelayVector::from_pair(t1, t2), gap, Lane::new(1), spec, policy)?;
            cells.push(RegionCell { t1, t2, region });
        }
    }
    Ok(cells)
}
