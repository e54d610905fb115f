//! Equilibrium passing times for explicit vehicle sequences.
//!
//! FIFO fixes each vehicle's passing time on arrival:
//! `t̄_i = max(t*_i, D_i, S_i)` with `D_i` the latest conflicting passing time
//! plus `Δd` and `S_i` the latest same-lane passing time plus `Δs`.
//!
//! FO replays arrivals one at a time. The entrant's earliest time is
//! `max(t*_i, same-lane predecessors + Δs)`; all candidate times (previous
//! passing times for everyone else) are sorted, ties broken by vehicle index,
//! and times are reassigned in that order against lower-ranked vehicles only,
//! each one floored at its previous passing time.
//!
//! Both replays drop vehicles from the active set once they can no longer
//! interact with newer arrivals (passing time at least `max(Δd, Δs)` before
//! the newest desired time). Their times are final and kept.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mapping::Policy;
use crate::model::{DelayVector, IntersectionSpec, Lane};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VehicleRecord {
    pub index: usize,
    pub desired_time: f64,
    pub lane: Lane,
}

impl VehicleRecord {
    pub fn new(index: usize, desired_time: f64, lane: Lane) -> Self {
        VehicleRecord {
            index,
            desired_time,
            lane,
        }
    }
}

/// Build records numbered from 1 out of `(desired_time, lane)` pairs.
pub fn vehicles(pairs: &[(f64, usize)]) -> Vec<VehicleRecord> {
    pairs
        .iter()
        .enumerate()
        .map(|(i, &(t, lane))| VehicleRecord::new(i + 1, t, Lane::new(lane)))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumResult {
    /// `t̄_j^{(i)}` for every vehicle, in sequence order.
    pub passing_times: Vec<f64>,
    /// FO only: `order[j]` is the 0-based rank of vehicle `j` in the last
    /// sort of candidate times.
    pub order: Option<Vec<usize>>,
}

/// Incremental equilibrium replay for one policy.
#[derive(Clone, Debug)]
pub struct MicroState {
    policy: Policy,
    spec: IntersectionSpec,
    truncate: bool,
    lanes: Vec<Lane>,
    desired: Vec<f64>,
    passing: Vec<f64>,
    // last candidate used for each vehicle (FO ranking)
    candidates: Vec<f64>,
    active: Vec<usize>,
    retired_lane_max: Vec<f64>,
    lane_max: Vec<f64>,
    newest_desired: f64,
}

impl MicroState {
    pub fn new(policy: Policy, spec: &IntersectionSpec) -> Self {
        let k = spec.lane_count();
        MicroState {
            policy,
            spec: spec.clone(),
            truncate: true,
            lanes: Vec::new(),
            desired: Vec::new(),
            passing: Vec::new(),
            candidates: Vec::new(),
            active: Vec::new(),
            retired_lane_max: vec![f64::NEG_INFINITY; k],
            lane_max: vec![f64::NEG_INFINITY; k],
            newest_desired: f64::NEG_INFINITY,
        }
    }

    /// Keep every vehicle in the active set (reference behaviour for tests).
    pub fn without_truncation(mut self) -> Self {
        self.truncate = false;
        self
    }

    /// One synthetic vehicle per lane, passing at `delays[k]` relative to a
    /// newest desired time of 0. This is the state a delay vector summarises.
    pub fn from_lane_delays(
        policy: Policy,
        spec: &IntersectionSpec,
        delays: &DelayVector,
    ) -> Result<Self> {
        if delays.len() != spec.lane_count() {
            return Err(Error::DimensionMismatch {
                expected: spec.lane_count(),
                got: delays.len(),
            });
        }
        let mut state = MicroState::new(policy, spec);
        for (i, &t) in delays.iter().enumerate() {
            let j = state.passing.len();
            state.lanes.push(Lane::from_index(i));
            state.desired.push(f64::NEG_INFINITY);
            state.passing.push(t);
            state.candidates.push(t);
            state.active.push(j);
            state.lane_max[i] = t;
        }
        state.newest_desired = 0.0;
        Ok(state)
    }

    pub fn len(&self) -> usize {
        self.passing.len()
    }

    pub fn is_empty(&self) -> bool {
        self.passing.is_empty()
    }

    pub fn passing_times(&self) -> &[f64] {
        &self.passing
    }

    pub fn active_len(&self) -> usize {
        self.active.len()
    }

    /// Introduce the next vehicle and move to the new equilibrium.
    pub fn push(&mut self, desired_time: f64, lane: Lane) -> Result<()> {
        self.spec.check_lane(lane)?;
        if !(desired_time > self.newest_desired) {
            return Err(Error::UnsortedVehicles(self.passing.len()));
        }
        self.newest_desired = desired_time;
        if self.truncate {
            self.retire(desired_time);
        }
        match self.policy {
            Policy::Fifo => self.push_fifo(desired_time, lane),
            Policy::Fo => self.push_fo(desired_time, lane),
        }
        Ok(())
    }

    fn retire(&mut self, now: f64) {
        let horizon = self.spec.delta_d().max(self.spec.delta_s());
        let passing = &self.passing;
        let lanes = &self.lanes;
        let retired = &mut self.retired_lane_max;
        self.active.retain(|&j| {
            if passing[j] + horizon <= now {
                let l = lanes[j].index();
                retired[l] = retired[l].max(passing[j]);
                false
            } else {
                true
            }
        });
    }

    fn earliest_time(&self, desired_time: f64, lane: Lane, lane_max: &[f64]) -> f64 {
        let mut t = desired_time.max(lane_max[lane.index()] + self.spec.delta_s());
        for other in self.spec.conflicting_lanes(lane) {
            t = t.max(lane_max[other.index()] + self.spec.delta_d());
        }
        t
    }

    fn push_fifo(&mut self, desired_time: f64, lane: Lane) {
        let t = self.earliest_time(desired_time, lane, &self.lane_max);
        let j = self.passing.len();
        self.lanes.push(lane);
        self.desired.push(desired_time);
        self.passing.push(t);
        self.candidates.push(t);
        self.active.push(j);
        let l = lane.index();
        self.lane_max[l] = self.lane_max[l].max(t);
    }

    fn push_fo(&mut self, desired_time: f64, lane: Lane) {
        let l = lane.index();
        let entrant = desired_time.max(self.lane_max[l] + self.spec.delta_s());
        let j_new = self.passing.len();
        self.lanes.push(lane);
        self.desired.push(desired_time);
        self.passing.push(entrant);
        self.candidates.push(entrant);
        self.active.push(j_new);

        for &j in &self.active {
            self.candidates[j] = self.passing[j];
        }
        let candidates = &self.candidates;
        self.active
            .sort_by(|&a, &b| candidates[a].total_cmp(&candidates[b]).then(a.cmp(&b)));

        let mut assigned = self.retired_lane_max.clone();
        for idx in 0..self.active.len() {
            let j = self.active[idx];
            let lane_j = self.lanes[j];
            let t = self.earliest_time(self.candidates[j], lane_j, &assigned);
            self.passing[j] = t;
            let lj = lane_j.index();
            assigned[lj] = assigned[lj].max(t);
        }
        self.lane_max = assigned;
    }

    /// `T^k = max_{s_j = k} t̄_j − t*_newest`, clamped at `−Δd`; lanes that
    /// have not seen a vehicle sit at the clamp.
    pub fn lane_delays(&self) -> Result<DelayVector> {
        if self.is_empty() {
            return Err(Error::EmptySequence);
        }
        let delays: Vec<f64> = self
            .lane_max
            .iter()
            .map(|&m| m - self.newest_desired)
            .collect();
        Ok(DelayVector::new(&delays).clamp(self.spec.delta_d()))
    }

    pub fn result(&self) -> EquilibriumResult {
        let order = match self.policy {
            Policy::Fifo => None,
            Policy::Fo => {
                let mut ranked: Vec<usize> = (0..self.passing.len()).collect();
                let c = &self.candidates;
                ranked.sort_by(|&a, &b| c[a].total_cmp(&c[b]).then(a.cmp(&b)));
                let mut order = vec![0; ranked.len()];
                for (rank, j) in ranked.into_iter().enumerate() {
                    order[j] = rank;
                }
                Some(order)
            }
        };
        EquilibriumResult {
            passing_times: self.passing.clone(),
            order,
        }
    }
}

fn equilibrium(
    policy: Policy,
    vehicles: &[VehicleRecord],
    spec: &IntersectionSpec,
) -> Result<EquilibriumResult> {
    let mut state = MicroState::new(policy, spec);
    for v in vehicles {
        state.push(v.desired_time, v.lane)?;
    }
    Ok(state.result())
}

/// FIFO equilibrium of the whole sequence. Earlier vehicles never move.
pub fn fifo_equilibrium(
    vehicles: &[VehicleRecord],
    spec: &IntersectionSpec,
) -> Result<EquilibriumResult> {
    equilibrium(Policy::Fifo, vehicles, spec)
}

/// FO equilibrium reached by replaying the sequence one arrival at a time.
pub fn fo_equilibrium(
    vehicles: &[VehicleRecord],
    spec: &IntersectionSpec,
) -> Result<EquilibriumResult> {
    equilibrium(Policy::Fo, vehicles, spec)
}

pub fn lane_delays(
    result: &EquilibriumResult,
    vehicles: &[VehicleRecord],
    spec: &IntersectionSpec,
) -> Result<DelayVector> {
    let newest = vehicles.last().ok_or(Error::EmptySequence)?;
    if result.passing_times.len() != vehicles.len() {
        return Err(Error::MismatchedSequences(format!(
            "{} passing times for {} vehicles",
            result.passing_times.len(),
            vehicles.len()
        )));
    }
    let mut latest = vec![f64::NEG_INFINITY; spec.lane_count()];
    for (v, &t) in vehicles.iter().zip(&result.passing_times) {
        spec.check_lane(v.lane)?;
        let l = v.lane.index();
        latest[l] = latest[l].max(t);
    }
    let delays: Vec<f64> = latest.iter().map(|m| m - newest.desired_time).collect();
    Ok(DelayVector::new(&delays).clamp(spec.delta_d()))
}

/// Total delay introduced by vehicle `i + 1`: the shift of everyone already
/// present plus its own delay. `vehicles` holds all `i + 1` vehicles.
///
/// Under FO individual terms can be negative (a vehicle may be moved ahead of
/// where its candidate time alone would put it); the sum is reported as is.
pub fn event_delay(
    before: &EquilibriumResult,
    after: &EquilibriumResult,
    vehicles: &[VehicleRecord],
) -> Result<f64> {
    let n = before.passing_times.len();
    if after.passing_times.len() != n + 1 || vehicles.len() != n + 1 {
        return Err(Error::MismatchedSequences(format!(
            "before has {n} vehicles, after has {}, sequence has {}",
            after.passing_times.len(),
            vehicles.len()
        )));
    }
    let shift: f64 = before
        .passing_times
        .iter()
        .zip(&after.passing_times)
        .map(|(b, a)| a - b)
        .sum();
    Ok(shift + after.passing_times[n] - vehicles[n].desired_time)
}

pub fn write_vehicles_csv<W: Write>(writer: W, vehicles: &[VehicleRecord]) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    for v in vehicles {
        out.serialize(v)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_vehicles_csv<R: Read>(reader: R) -> Result<Vec<VehicleRecord>> {
    let mut input = csv::Reader::from_reader(reader);
    let mut records = Vec::new();
    for row in input.deserialize() {
        records.push(row?);
    }
    Ok(records)
}
