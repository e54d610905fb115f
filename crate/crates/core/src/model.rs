//! Intersection description, delay state and the merged Poisson arrival stream.
//!
//! Arrivals on lane `k` form a Poisson process with rate `λ_k`; the merged
//! stream has rate `λ = Σ λ_k` and each arrival picks lane `k` with
//! probability `λ_k / λ`. Only inter-arrival gaps are modelled, absolute
//! timestamps never enter the delay dynamics.

use std::fmt;
use std::ops::{Deref, DerefMut};
use std::path::Path;

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{Error, Result};

/// A lane number. Lanes are numbered from 1 in every public interface.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Lane(usize);

impl Lane {
    /// Lane from its 1-based number.
    ///
    /// # Panics
    /// If `number` is zero.
    pub fn new(number: usize) -> Self {
        assert!(number >= 1, "lanes are numbered from 1");
        Lane(number)
    }

    pub fn from_index(index: usize) -> Self {
        Lane(index + 1)
    }

    pub fn number(self) -> usize {
        self.0
    }

    pub fn index(self) -> usize {
        self.0 - 1
    }
}

impl fmt::Display for Lane {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// On-disk form of an [`IntersectionSpec`]; conflict pairs use lane numbers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecDocument {
    pub lane_count: usize,
    pub conflicts: Vec<[usize; 2]>,
    pub delta_d: f64,
    pub delta_s: f64,
    pub lane_rates: Vec<f64>,
}

/// A validated intersection: conflict graph, temporal gaps and lane rates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SpecDocument", into = "SpecDocument")]
pub struct IntersectionSpec {
    lane_count: usize,
    // row-major adjacency, lane_count x lane_count
    conflicts: Vec<bool>,
    delta_d: f64,
    delta_s: f64,
    lane_rates: Vec<f64>,
    total_rate: f64,
}

/// Check every invariant of the document and build the intersection.
pub fn validate_spec(doc: SpecDocument) -> Result<IntersectionSpec> {
    let k = doc.lane_count;
    if k == 0 {
        return Err(Error::NoLanes);
    }
    if doc.lane_rates.len() != k {
        return Err(Error::RateCountMismatch {
            expected: k,
            got: doc.lane_rates.len(),
        });
    }
    for (name, value) in [("delta_d", doc.delta_d), ("delta_s", doc.delta_s)] {
        if !value.is_finite() || value < 0.0 {
            return Err(Error::NegativeGap { name, value });
        }
    }
    for (i, &rate) in doc.lane_rates.iter().enumerate() {
        if !rate.is_finite() || rate < 0.0 {
            return Err(Error::NegativeRate { lane: i + 1, rate });
        }
    }
    let total_rate: f64 = doc.lane_rates.iter().sum();
    if total_rate <= 0.0 {
        return Err(Error::ZeroTotalRate);
    }
    let mut conflicts = vec![false; k * k];
    for &[a, b] in &doc.conflicts {
        for lane in [a, b] {
            if lane == 0 || lane > k {
                return Err(Error::LaneOutOfRange { lane, lane_count: k });
            }
        }
        if a == b {
            return Err(Error::SelfConflict(a));
        }
        conflicts[(a - 1) * k + (b - 1)] = true;
        conflicts[(b - 1) * k + (a - 1)] = true;
    }
    Ok(IntersectionSpec {
        lane_count: k,
        conflicts,
        delta_d: doc.delta_d,
        delta_s: doc.delta_s,
        lane_rates: doc.lane_rates,
        total_rate,
    })
}

impl TryFrom<SpecDocument> for IntersectionSpec {
    type Error = Error;

    fn try_from(doc: SpecDocument) -> Result<Self> {
        validate_spec(doc)
    }
}

impl From<IntersectionSpec> for SpecDocument {
    fn from(spec: IntersectionSpec) -> Self {
        SpecDocument {
            lane_count: spec.lane_count,
            conflicts: spec.conflict_pairs(),
            delta_d: spec.delta_d,
            delta_s: spec.delta_s,
            lane_rates: spec.lane_rates,
        }
    }
}

impl IntersectionSpec {
    pub fn new(
        lane_count: usize,
        conflicts: &[[usize; 2]],
        delta_d: f64,
        delta_s: f64,
        lane_rates: &[f64],
    ) -> Result<Self> {
        validate_spec(SpecDocument {
            lane_count,
            conflicts: conflicts.to_vec(),
            delta_d,
            delta_s,
            lane_rates: lane_rates.to_vec(),
        })
    }

    /// Two conflicting lanes (lane merging).
    pub fn two_lane(lambda_1: f64, lambda_2: f64, delta_d: f64, delta_s: f64) -> Result<Self> {
        Self::new(2, &[[1, 2]], delta_d, delta_s, &[lambda_1, lambda_2])
    }

    /// Two conflicting lanes sharing the total rate equally.
    pub fn symmetric_two_lane(total_rate: f64, delta_d: f64, delta_s: f64) -> Result<Self> {
        Self::two_lane(total_rate / 2.0, total_rate / 2.0, delta_d, delta_s)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serialization cannot fail")
    }

    pub fn lane_count(&self) -> usize {
        self.lane_count
    }

    pub fn delta_d(&self) -> f64 {
        self.delta_d
    }

    pub fn delta_s(&self) -> f64 {
        self.delta_s
    }

    pub fn lane_rates(&self) -> &[f64] {
        &self.lane_rates
    }

    pub fn lane_rate(&self, lane: Lane) -> f64 {
        self.lane_rates[lane.index()]
    }

    /// `λ = Σ λ_k`.
    pub fn total_rate(&self) -> f64 {
        self.total_rate
    }

    /// `P_s(k) = λ_k / λ`.
    pub fn lane_probability(&self, lane: Lane) -> f64 {
        self.lane_rate(lane) / self.total_rate
    }

    pub fn lanes(&self) -> impl Iterator<Item = Lane> {
        (0..self.lane_count).map(Lane::from_index)
    }

    pub fn contains(&self, lane: Lane) -> bool {
        lane.number() <= self.lane_count
    }

    pub fn check_lane(&self, lane: Lane) -> Result<()> {
        if self.contains(lane) {
            Ok(())
        } else {
            Err(Error::LaneOutOfRange {
                lane: lane.number(),
                lane_count: self.lane_count,
            })
        }
    }

    pub fn conflicts(&self, a: Lane, b: Lane) -> bool {
        self.conflicts[a.index() * self.lane_count + b.index()]
    }

    pub fn conflicting_lanes(&self, lane: Lane) -> impl Iterator<Item = Lane> + '_ {
        self.lanes().filter(move |&other| self.conflicts(lane, other))
    }

    /// Conflict edges as `[a, b]` with `a < b`.
    pub fn conflict_pairs(&self) -> Vec<[usize; 2]> {
        let k = self.lane_count;
        let mut pairs = Vec::new();
        for a in 0..k {
            for b in (a + 1)..k {
                if self.conflicts[a * k + b] {
                    pairs.push([a + 1, b + 1]);
                }
            }
        }
        pairs
    }

    /// Same conflict graph and gaps, lane rates rescaled to a new total.
    pub fn with_total_rate(&self, total_rate: f64) -> Result<Self> {
        let scale = total_rate / self.total_rate;
        let rates: Vec<f64> = self.lane_rates.iter().map(|r| r * scale).collect();
        Self::new(
            self.lane_count,
            &self.conflict_pairs(),
            self.delta_d,
            self.delta_s,
            &rates,
        )
    }

    pub fn with_gaps(&self, delta_d: f64, delta_s: f64) -> Result<Self> {
        Self::new(
            self.lane_count,
            &self.conflict_pairs(),
            delta_d,
            delta_s,
            &self.lane_rates,
        )
    }

    /// Exchange the labels of lanes 1 and 2 (rates and conflicts follow).
    pub fn swap_first_two_lanes(&self) -> Result<Self> {
        let swap = |l: usize| match l {
            1 => 2,
            2 => 1,
            other => other,
        };
        let pairs: Vec<[usize; 2]> = self
            .conflict_pairs()
            .into_iter()
            .map(|[a, b]| [swap(a), swap(b)])
            .collect();
        let mut rates = self.lane_rates.clone();
        rates.swap(0, 1);
        Self::new(self.lane_count, &pairs, self.delta_d, self.delta_s, &rates)
    }
}

/// One arrival: gap `x_i = t*_{i+1} - t*_i` and the lane of vehicle `i + 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArrivalEvent {
    pub gap: f64,
    pub lane: Lane,
}

/// Per-lane delays `T_i`, in seconds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DelayVector(SmallVec<[f64; 4]>);

impl DelayVector {
    pub fn new(delays: &[f64]) -> Self {
        DelayVector(SmallVec::from_slice(delays))
    }

    pub fn from_pair(first: f64, second: f64) -> Self {
        DelayVector(SmallVec::from_slice(&[first, second]))
    }

    /// State right after the very first vehicle arrives in `lane`:
    /// zero delay there, every other lane at the clamp value.
    pub fn initial(lane: Lane, spec: &IntersectionSpec) -> Self {
        let mut delays = DelayVector(SmallVec::from_elem(-spec.delta_d(), spec.lane_count()));
        delays[lane.index()] = 0.0;
        delays
    }

    pub fn lane(&self, lane: Lane) -> f64 {
        self.0[lane.index()]
    }

    /// Apply `T^k = max(T^k, -Δd)` to every component.
    pub fn clamp(mut self, delta_d: f64) -> Self {
        for t in self.0.iter_mut() {
            *t = t.max(-delta_d);
        }
        self
    }

    pub fn max_delay(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }
}

impl Deref for DelayVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for DelayVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

/// Independent, reproducible RNG sub-stream `stream` of master seed `seed`.
pub fn sub_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draw one arrival. Consumes exactly two 64-bit words from `rng`, so two
/// consumers fed the same stream see the same events (common random numbers).
pub fn sample_event<R: Rng + ?Sized>(rng: &mut R, spec: &IntersectionSpec) -> ArrivalEvent {
    let u: f64 = rng.sample(Open01);
    let gap = -u.ln() / spec.total_rate();
    let pick = rng.random::<f64>() * spec.total_rate();
    ArrivalEvent {
        gap,
        lane: pick_lane(spec, pick),
    }
}

fn pick_lane(spec: &IntersectionSpec, pick: f64) -> Lane {
    let mut cumulative = 0.0;
    let mut last_positive = None;
    for (i, &rate) in spec.lane_rates().iter().enumerate() {
        if rate > 0.0 {
            cumulative += rate;
            last_positive = Some(i);
            if pick < cumulative {
                return Lane::from_index(i);
            }
        }
    }
    // rounding can leave `pick` a hair above the running sum
    Lane::from_index(last_positive.expect("validated spec has a positive rate"))
}

/// Lazily generated arrival events for a `(seed, spec)` pair.
#[derive(Clone, Debug)]
pub struct EventStream {
    spec: IntersectionSpec,
    seed: u64,
    rng: ChaCha8Rng,
}

impl EventStream {
    pub fn new(spec: IntersectionSpec, seed: u64) -> Self {
        Self::with_stream(spec, seed, 0)
    }

    pub fn with_stream(spec: IntersectionSpec, seed: u64, stream: u64) -> Self {
        EventStream {
            spec,
            seed,
            rng: sub_rng(seed, stream),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn spec(&self) -> &IntersectionSpec {
        &self.spec
    }
}

impl Iterator for EventStream {
    type Item = ArrivalEvent;

    fn next(&mut self) -> Option<ArrivalEvent> {
        Some(sample_event(&mut self.rng, &self.spec))
    }
}
