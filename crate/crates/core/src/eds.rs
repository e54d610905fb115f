//! Event-driven simulation: a particle ensemble approximating the
//! distribution of lane delays, advanced one arrival at a time.

use std::collections::BTreeMap;
use std::io::Write;

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mapping::{scalar_delay, step, Policy, RegionLabel};
use crate::model::{sample_event, sub_rng, DelayVector, EventStream, IntersectionSpec, Lane};

pub const DEFAULT_PARTICLES: usize = 10_000;
pub const DEFAULT_BIN_WIDTH: f64 = 0.1;

/// Sum in a fixed binary tree so the result only depends on the order of
/// `values`, never on how the work was split.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= 32 {
        return values.iter().sum();
    }
    let (a, b) = values.split_at(values.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    pairwise_sum(values) / values.len() as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DelaySample {
    pub iteration: usize,
    pub particle: usize,
    pub delay: f64,
    pub region: Option<RegionLabel>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct IterationStats {
    pub iteration: usize,
    pub mean_total_delay: f64,
    pub mean_event_delay: f64,
    pub fallbacks: u64,
}

#[derive(Clone, Debug)]
pub struct ParticleEnsemble {
    spec: IntersectionSpec,
    policy: Policy,
    seed: u64,
    iteration: usize,
    particles: Vec<DelayVector>,
    rngs: Vec<ChaCha8Rng>,
    last_delays: Vec<f64>,
    fallbacks: u64,
    record: bool,
    samples: Vec<DelaySample>,
    parallel: bool,
}

/// `floor(P_s(1)·N)` particles start at `(0, −Δd)` and the rest at
/// `(−Δd, 0)`. With more lanes the split uses floors of cumulative
/// probabilities, so every lane gets its share rounded down and the last
/// positive-rate lane absorbs the remainder.
pub fn init_ensemble(
    n: usize,
    spec: &IntersectionSpec,
    policy: Policy,
    seed: u64,
) -> Result<ParticleEnsemble> {
    if n == 0 {
        return Err(Error::InvalidParameter("ensemble needs at least one particle".into()));
    }
    let mut particles = Vec::with_capacity(n);
    let mut cumulative = 0.0;
    let mut assigned = 0usize;
    let last = spec
        .lanes()
        .filter(|&l| spec.lane_rate(l) > 0.0)
        .last()
        .expect("validated spec has a positive rate");
    for lane in spec.lanes() {
        cumulative += spec.lane_probability(lane);
        let upto = if lane == last {
            n
        } else {
            ((cumulative * n as f64).floor() as usize).min(n)
        };
        let count = upto.saturating_sub(assigned);
        particles.extend(std::iter::repeat_n(DelayVector::initial(lane, spec), count));
        assigned += count;
        if lane == last {
            break;
        }
    }
    ParticleEnsemble::from_particles(spec, policy, seed, particles)
}

impl ParticleEnsemble {
    /// Ensemble at iteration 1 from explicit particle states.
    pub fn from_particles(
        spec: &IntersectionSpec,
        policy: Policy,
        seed: u64,
        particles: Vec<DelayVector>,
    ) -> Result<Self> {
        if particles.is_empty() {
            return Err(Error::InvalidParameter("ensemble needs at least one particle".into()));
        }
        for p in &particles {
            if p.len() != spec.lane_count() {
                return Err(Error::DimensionMismatch {
                    expected: spec.lane_count(),
                    got: p.len(),
                });
            }
            if p.iter().any(|&t| !t.is_finite() || t < -spec.delta_d()) {
                return Err(Error::InvalidParameter(format!(
                    "particle {:?} violates the clamp at -{}",
                    &p[..],
                    spec.delta_d()
                )));
            }
        }
        let n = particles.len();
        Ok(ParticleEnsemble {
            spec: spec.clone(),
            policy,
            seed,
            iteration: 1,
            rngs: (0..n as u64).map(|i| sub_rng(seed, i)).collect(),
            last_delays: vec![0.0; n],
            particles,
            fallbacks: 0,
            record: false,
            samples: Vec::new(),
            parallel: true,
        })
    }

    /// Keep a [`DelaySample`] for every particle and event from now on.
    pub fn record_samples(mut self, on: bool) -> Self {
        self.record = on;
        self
    }

    /// Spread particles over the rayon pool (default) or stay on this thread.
    /// Results are identical either way.
    pub fn parallel(mut self, on: bool) -> Self {
        self.parallel = on;
        self
    }

    pub fn spec(&self) -> &IntersectionSpec {
        &self.spec
    }

    pub fn policy(&self) -> Policy {
        self.policy
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn particles(&self) -> &[DelayVector] {
        &self.particles
    }

    /// Scalar delay each particle incurred at its most recent event.
    pub fn last_delays(&self) -> &[f64] {
        &self.last_delays
    }

    /// Events resolved by equilibrium replay instead of a tabulated row.
    pub fn fallbacks(&self) -> u64 {
        self.fallbacks
    }

    pub fn samples(&self) -> &[DelaySample] {
        &self.samples
    }

    pub fn take_samples(&mut self) -> Vec<DelaySample> {
        std::mem::take(&mut self.samples)
    }

    pub fn propagate(&mut self, steps: usize) -> Result<()> {
        for _ in 0..steps {
            self.advance()?;
        }
        Ok(())
    }

    fn advance(&mut self) -> Result<()> {
        let spec = &self.spec;
        let policy = self.policy;
        let kernel = |(p, rng): (&mut DelayVector, &mut ChaCha8Rng)| {
            let event = sample_event(rng, spec);
            let out = step(policy, p, &event, spec)?;
            let d = scalar_delay(p, &out.next, &event, spec);
            *p = out.next;
            Ok::<_, Error>((d, out.region))
        };
        let results: Vec<_> = if self.parallel {
            self.particles
                .par_iter_mut()
                .zip(self.rngs.par_iter_mut())
                .map(kernel)
                .collect()
        } else {
            self.particles
                .iter_mut()
                .zip(self.rngs.iter_mut())
                .map(kernel)
                .collect()
        };
        self.iteration += 1;
        for (i, r) in results.into_iter().enumerate() {
            let (d, region) = r?;
            self.last_delays[i] = d;
            if region.is_some_and(|r| r.is_fallback()) {
                self.fallbacks += 1;
            }
            if self.record {
                self.samples.push(DelaySample {
                    iteration: self.iteration,
                    particle: i,
                    delay: d,
                    region,
                });
            }
        }
        Ok(())
    }

    /// Ensemble mean of `Σ_k T^k`.
    pub fn mean_total_delay(&self) -> f64 {
        let totals: Vec<f64> = self.particles.iter().map(|p| p.total()).collect();
        mean(&totals)
    }

    pub fn mean_event_delay(&self) -> f64 {
        mean(&self.last_delays)
    }

    pub fn stats(&self) -> IterationStats {
        IterationStats {
            iteration: self.iteration,
            mean_total_delay: self.mean_total_delay(),
            mean_event_delay: self.mean_event_delay(),
            fallbacks: self.fallbacks,
        }
    }

    /// Fraction of particles satisfying `pred`.
    pub fn fraction(&self, pred: impl Fn(&DelayVector) -> bool) -> f64 {
        self.particles.iter().filter(|p| pred(p)).count() as f64 / self.len() as f64
    }

    /// Histogram of the first two lane delays.
    pub fn histogram(&self, bin_width: f64) -> Result<Histogram2D> {
        Histogram2D::from_points(
            self.particles.iter().map(|p| (p[0], p.get(1).copied().unwrap_or(p[0]))),
            -self.spec.delta_d(),
            bin_width,
        )
    }
}

/// Sparse 2-D histogram on a regular grid anchored at `origin` on both axes.
#[derive(Clone, Debug, PartialEq)]
pub struct Histogram2D {
    origin: f64,
    bin_width: f64,
    counts: BTreeMap<(i64, i64), u64>,
    total: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramCell {
    pub bin_x: f64,
    pub bin_y: f64,
    pub mass: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramDocument {
    pub origin: f64,
    pub bin_width: f64,
    pub particles: u64,
    pub cells: Vec<HistogramCell>,
}

impl Histogram2D {
    pub fn from_points(
        points: impl IntoIterator<Item = (f64, f64)>,
        origin: f64,
        bin_width: f64,
    ) -> Result<Self> {
        if !(bin_width.is_finite() && bin_width > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "bin width must be positive (got {bin_width})"
            )));
        }
        let mut counts = BTreeMap::new();
        let mut total = 0;
        for (x, y) in points {
            let key = (
                ((x - origin) / bin_width).floor() as i64,
                ((y - origin) / bin_width).floor() as i64,
            );
            *counts.entry(key).or_insert(0) += 1;
            total += 1;
        }
        if total == 0 {
            return Err(Error::InvalidParameter("histogram of zero points".into()));
        }
        Ok(Histogram2D {
            origin,
            bin_width,
            counts,
            total,
        })
    }

    pub fn origin(&self) -> f64 {
        self.origin
    }

    pub fn bin_width(&self) -> f64 {
        self.bin_width
    }

    pub fn particles(&self) -> u64 {
        self.total
    }

    pub fn occupied_cells(&self) -> usize {
        self.counts.len()
    }

    fn edge(&self, index: i64) -> f64 {
        self.origin + index as f64 * self.bin_width
    }

    /// Occupied cells as `(lower x edge, lower y edge, mass)`.
    pub fn cells(&self) -> impl Iterator<Item = HistogramCell> + '_ {
        self.counts.iter().map(|(&(i, j), &c)| HistogramCell {
            bin_x: self.edge(i),
            bin_y: self.edge(j),
            mass: c as f64 / self.total as f64,
        })
    }

    pub fn mass_at(&self, x: f64, y: f64) -> f64 {
        let key = (
            ((x - self.origin) / self.bin_width).floor() as i64,
            ((y - self.origin) / self.bin_width).floor() as i64,
        );
        self.counts.get(&key).map_or(0.0, |&c| c as f64 / self.total as f64)
    }

    pub fn total_mass(&self) -> f64 {
        let masses: Vec<f64> = self.cells().map(|c| c.mass).collect();
        pairwise_sum(&masses)
    }

    /// Marginal along `axis` (0 = lane 1, 1 = lane 2) as `(lower edge, mass)`.
    pub fn marginal(&self, axis: usize) -> Vec<(f64, f64)> {
        let mut out: BTreeMap<i64, u64> = BTreeMap::new();
        for (&(i, j), &c) in &self.counts {
            *out.entry(if axis == 0 { i } else { j }).or_insert(0) += c;
        }
        out.into_iter()
            .map(|(k, c)| (self.edge(k), c as f64 / self.total as f64))
            .collect()
    }

    pub fn to_document(&self) -> HistogramDocument {
        HistogramDocument {
            origin: self.origin,
            bin_width: self.bin_width,
            particles: self.total,
            cells: self.cells().collect(),
        }
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for cell in self.cells() {
            w.serialize(cell)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_json<W: Write>(&self, writer: W) -> Result<()> {
        serde_json::to_writer_pretty(writer, &self.to_document())?;
        Ok(())
    }
}

fn same_binning(a: &Histogram2D, b: &Histogram2D) -> Result<()> {
    if a.origin.to_bits() != b.origin.to_bits() || a.bin_width.to_bits() != b.bin_width.to_bits() {
        return Err(Error::BinningMismatch);
    }
    Ok(())
}

/// `Σ |a − b|` over all cells; between 0 and 2.
pub fn l1_distance(a: &Histogram2D, b: &Histogram2D) -> Result<f64> {
    same_binning(a, b)?;
    let (na, nb) = (a.total as f64, b.total as f64);
    let mut diffs = Vec::with_capacity(a.counts.len() + b.counts.len());
    for (key, &ca) in &a.counts {
        let cb = b.counts.get(key).copied().unwrap_or(0);
        diffs.push((ca as f64 / na - cb as f64 / nb).abs());
    }
    for (key, &cb) in &b.counts {
        if !a.counts.contains_key(key) {
            diffs.push(cb as f64 / nb);
        }
    }
    Ok(pairwise_sum(&diffs))
}

/// Same as [`l1_distance`] on the lane-1 and lane-2 marginals summed.
pub fn marginal_l1(a: &[(f64, f64)], b: &[(f64, f64)], bin_width: f64) -> f64 {
    let key = |x: f64| (x / bin_width).round() as i64;
    let mut cells: BTreeMap<i64, f64> = BTreeMap::new();
    for &(x, m) in a {
        *cells.entry(key(x)).or_insert(0.0) += m;
    }
    for &(x, m) in b {
        *cells.entry(key(x)).or_insert(0.0) -= m;
    }
    let diffs: Vec<f64> = cells.values().map(|v| v.abs()).collect();
    pairwise_sum(&diffs)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Never stop before this many propagation steps.
    pub min_iter: usize,
    pub consecutive: usize,
    pub bin_width: f64,
    /// Compare successive distances against `tol` plus the sampling noise of
    /// the ensemble, estimated from the distance between its two halves.
    pub noise_adjusted: bool,
    /// When nonzero, also require the least-squares drift of the mean total
    /// delay over this many trailing iterations to stay within three
    /// standard errors of that mean. Catches slow relaxation that moves the
    /// mean while successive histograms already look alike.
    #[serde(default)]
    pub stationarity_window: usize,
    pub divergence_window: usize,
    /// Least-squares growth of the mean total delay, in seconds per
    /// iteration, above which a non-converged run counts as diverging.
    pub divergence_slope: f64,
}

impl Default for ConvergenceOptions {
    fn default() -> Self {
        ConvergenceOptions {
            tol: 0.05,
            max_iter: 200,
            min_iter: 0,
            consecutive: 3,
            bin_width: DEFAULT_BIN_WIDTH,
            noise_adjusted: false,
            stationarity_window: 0,
            divergence_window: 50,
            divergence_slope: 0.01,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SteadyStateRun {
    pub ensemble: ParticleEnsemble,
    pub iterations_used: usize,
    pub converged: bool,
    pub diverging: bool,
    /// Distance between the histograms after steps `k` and `k + 1`.
    pub l1_history: Vec<f64>,
    pub noise_history: Vec<f64>,
    /// Mean total delay at iterations 1, 2, ...
    pub mean_total_history: Vec<f64>,
}

pub fn run_to_steady_state(
    spec: &IntersectionSpec,
    policy: Policy,
    n: usize,
    tol: f64,
    max_iter: usize,
    seed: u64,
) -> Result<SteadyStateRun> {
    let opts = ConvergenceOptions {
        tol,
        max_iter,
        ..ConvergenceOptions::default()
    };
    run_to_steady_state_with(init_ensemble(n, spec, policy, seed)?, &opts)
}

/// Half-ensemble distance scaled to the size of the whole ensemble.
fn noise_floor(ensemble: &ParticleEnsemble, bin_width: f64) -> Result<f64> {
    if ensemble.len() < 2 {
        return Ok(0.0);
    }
    let origin = -ensemble.spec().delta_d();
    let half = |parity: usize| {
        Histogram2D::from_points(
            ensemble
                .particles()
                .iter()
                .enumerate()
                .filter(|(i, _)| i % 2 == parity)
                .map(|(_, p)| (p[0], p.get(1).copied().unwrap_or(p[0]))),
            origin,
            bin_width,
        )
    };
    Ok(l1_distance(&half(0)?, &half(1)?)? / std::f64::consts::SQRT_2)
}

fn mean_is_settled(ensemble: &ParticleEnsemble, history: &[f64], window: usize) -> bool {
    if window < 2 || ensemble.len() < 2 {
        return true;
    }
    if history.len() < window {
        return false;
    }
    let totals: Vec<f64> = ensemble.particles().iter().map(|p| p.total()).collect();
    let se = sample_sd(&totals) / (totals.len() as f64).sqrt();
    let drift = trend(history, window) * (window - 1) as f64;
    drift.abs() <= 3.0 * se
}

/// Propagate one event at a time until `consecutive` successive histogram
/// distances fall below the tolerance, or `max_iter` steps have been taken.
pub fn run_to_steady_state_with(
    mut ensemble: ParticleEnsemble,
    opts: &ConvergenceOptions,
) -> Result<SteadyStateRun> {
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "tolerance must be positive (got {})",
            opts.tol
        )));
    }
    let mut previous = ensemble.histogram(opts.bin_width)?;
    let mut l1_history = Vec::new();
    let mut noise_history = Vec::new();
    let mut mean_total_history = vec![ensemble.mean_total_delay()];
    let mut streak = 0;
    let mut converged = false;
    let mut steps = 0;
    while steps < opts.max_iter {
        ensemble.propagate(1)?;
        steps += 1;
        let current = ensemble.histogram(opts.bin_width)?;
        let distance = l1_distance(&previous, &current)?;
        let noise = if opts.noise_adjusted {
            noise_floor(&ensemble, opts.bin_width)?
        } else {
            0.0
        };
        l1_history.push(distance);
        noise_history.push(noise);
        mean_total_history.push(ensemble.mean_total_delay());
        streak = if distance < opts.tol + noise { streak + 1 } else { 0 };
        previous = current;
        if streak >= opts.consecutive.max(1)
            && steps >= opts.min_iter
            && mean_is_settled(&ensemble, &mean_total_history, opts.stationarity_window)
        {
            converged = true;
            break;
        }
    }
    let diverging = !converged && trend(&mean_total_history, opts.divergence_window) > opts.divergence_slope;
    log::debug!(
        "{} run: {steps} steps, converged={converged}, diverging={diverging}",
        ensemble.policy()
    );
    Ok(SteadyStateRun {
        ensemble,
        iterations_used: steps,
        converged,
        diverging,
        l1_history,
        noise_history,
        mean_total_history,
    })
}

impl ConvergenceOptions {
    /// Settings for measuring steady-state statistics: distances are judged
    /// against the ensemble's own sampling noise, at least 20 steps run and
    /// the mean total delay must have stopped drifting.
    pub fn steady_state() -> Self {
        ConvergenceOptions {
            max_iter: 500,
            min_iter: 20,
            noise_adjusted: true,
            stationarity_window: 20,
            ..ConvergenceOptions::default()
        }
    }
}

/// Steady-state statistics pooled over `window` steps after convergence.
#[derive(Clone, Debug, Serialize)]
pub struct SteadyStateSummary {
    pub converged: bool,
    pub diverging: bool,
    pub iterations_used: usize,
    /// Fraction of particles whose largest lane delay is exactly 0.
    pub zero_fraction: f64,
    /// Fraction of particles whose largest lane delay is exactly `Δd`.
    pub full_fraction: f64,
    pub mean_delay: f64,
    /// Spread of one ensemble's mean delay; conservative because the
    /// pooled steps are correlated.
    pub standard_error: f64,
    pub mean_total_delay: f64,
    pub fallbacks: u64,
    #[serde(skip)]
    pub delays: Vec<f64>,
}

pub fn steady_state_summary(
    spec: &IntersectionSpec,
    policy: Policy,
    n: usize,
    seed: u64,
    opts: &ConvergenceOptions,
    window: usize,
) -> Result<SteadyStateSummary> {
    let run = run_to_steady_state_with(init_ensemble(n, spec, policy, seed)?, opts)?;
    let mut ensemble = run.ensemble;
    let dd = spec.delta_d();
    let at = |target: f64| move |p: &DelayVector| (p.max_delay() - target).abs() < 1e-9;
    let mut zero = Vec::with_capacity(window);
    let mut full = Vec::with_capacity(window);
    let mut totals = Vec::with_capacity(window);
    let mut delays = Vec::with_capacity(window * n);
    for _ in 0..window.max(1) {
        ensemble.propagate(1)?;
        zero.push(ensemble.fraction(at(0.0)));
        full.push(ensemble.fraction(at(dd)));
        totals.push(ensemble.mean_total_delay());
        delays.extend_from_slice(ensemble.last_delays());
    }
    let standard_error = if delays.len() > 1 {
        sample_sd(&delays) / (n as f64).sqrt()
    } else {
        f64::NAN
    };
    Ok(SteadyStateSummary {
        converged: run.converged,
        diverging: run.diverging,
        iterations_used: run.iterations_used,
        zero_fraction: mean(&zero),
        full_fraction: mean(&full),
        mean_delay: mean(&delays),
        standard_error,
        mean_total_delay: mean(&totals),
        fallbacks: ensemble.fallbacks(),
        delays,
    })
}

/// Least-squares slope of the last `window` values; 0 if there are fewer.
pub fn trend(values: &[f64], window: usize) -> f64 {
    if window < 2 || values.len() < window {
        return 0.0;
    }
    let tail = &values[values.len() - window..];
    let n = window as f64;
    let mx = (n - 1.0) / 2.0;
    let my = mean(tail);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (i, &y) in tail.iter().enumerate() {
        let dx = i as f64 - mx;
        sxy += dx * (y - my);
        sxx += dx * dx;
    }
    sxy / sxx
}

/// Events discarded before time-averaging a single trajectory.
pub fn burn_in(events: usize) -> usize {
    1000.min(events / 2)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ErgodicEstimate {
    pub mean: f64,
    /// Batch-means standard error.
    pub standard_error: f64,
    pub burn_in: usize,
    pub samples: usize,
}

/// Per-event delays along one trajectory; the first vehicle has delay 0.
pub fn trajectory_delays(
    spec: &IntersectionSpec,
    policy: Policy,
    events: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if events == 0 {
        return Err(Error::InvalidParameter("need at least one event".into()));
    }
    let mut stream = EventStream::new(spec.clone(), seed);
    let first: Lane = stream.next().expect("event streams are infinite").lane;
    let mut state = DelayVector::initial(first, spec);
    let mut delays = Vec::with_capacity(events);
    delays.push(0.0);
    for event in stream.take(events - 1) {
        let out = step(policy, &state, &event, spec)?;
        delays.push(scalar_delay(&state, &out.next, &event, spec));
        state = out.next;
    }
    Ok(delays)
}

pub fn ergodic_estimate(
    spec: &IntersectionSpec,
    policy: Policy,
    events: usize,
    seed: u64,
) -> Result<ErgodicEstimate> {
    let delays = trajectory_delays(spec, policy, events, seed)?;
    let skip = burn_in(events);
    let kept = &delays[skip..];
    let batches = 20;
    let standard_error = if kept.len() >= 2 * batches {
        let size = kept.len() / batches;
        let means: Vec<f64> = kept.chunks_exact(size).take(batches).map(mean).collect();
        sample_sd(&means) / (batches as f64).sqrt()
    } else if kept.len() > 1 {
        sample_sd(kept) / (kept.len() as f64).sqrt()
    } else {
        f64::NAN
    };
    Ok(ErgodicEstimate {
        mean: mean(kept),
        standard_error,
        burn_in: skip,
        samples: kept.len(),
    })
}

/// Time average of the per-event delay over one long trajectory, after
/// [`burn_in`] events.
pub fn ergodic_mean_delay(
    spec: &IntersectionSpec,
    policy: Policy,
    events: usize,
    seed: u64,
) -> Result<f64> {
    Ok(ergodic_estimate(spec, policy, events, seed)?.mean)
}

pub fn sample_sd(values: &[f64]) -> f64 {
    let m = mean(values);
    let sq: Vec<f64> = values.iter().map(|v| (v - m) * (v - m)).collect();
    (pairwise_sum(&sq) / (values.len() as f64 - 1.0)).sqrt()
}

pub fn write_samples_csv<W: Write>(writer: W, samples: &[DelaySample]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["iteration", "particle", "delay", "region"])?;
    for s in samples {
        w.write_record([
            s.iteration.to_string(),
            s.particle.to_string(),
            s.delay.to_string(),
            s.region.map_or_else(String::new, |r| r.code()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn asymmetric_two_lane() -> IntersectionSpec {
        IntersectionSpec::two_lane(0.1, 0.5, 2.0, 1.0).unwrap()
    }

    #[test]
    fn initial_split_rounds_down() {
        let sym = IntersectionSpec::two_lane(0.3, 0.3, 2.0, 1.0).unwrap();
        let e = init_ensemble(10_000, &sym, Policy::Fo, 1).unwrap();
        assert_eq!(e.fraction(|p| p[0] == 0.0), 0.5);
        let e = init_ensemble(10_000, &asymmetric_two_lane(), Policy::Fifo, 1).unwrap();
        let first = e.particles().iter().filter(|p| p[0] == 0.0 && p[1] == -2.0).count();
        assert_eq!(first, 1666);
        assert_eq!(e.len(), 10_000);
        assert_eq!(e.iteration(), 1);
        assert!(init_ensemble(0, &asymmetric_two_lane(), Policy::Fifo, 1).is_err());
    }

    #[test]
    fn initial_split_many_lanes() {
        let s = IntersectionSpec::new(3, &[[1, 2]], 2.0, 1.0, &[0.1, 0.0, 0.2]).unwrap();
        let e = init_ensemble(10, &s, Policy::Fifo, 1).unwrap();
        let at = |k: usize| e.particles().iter().filter(|p| p[k] == 0.0).count();
        assert_eq!((at(0), at(1), at(2)), (3, 0, 7));
    }

    #[test]
    fn zero_steps_is_identity_and_runs_are_deterministic() {
        let mut a = init_ensemble(500, &asymmetric_two_lane(), Policy::Fo, 9).unwrap();
        let before = a.particles().to_vec();
        a.propagate(0).unwrap();
        assert_eq!(a.particles(), &before[..]);
        a.propagate(7).unwrap();
        let mut b = init_ensemble(500, &asymmetric_two_lane(), Policy::Fo, 9).unwrap().parallel(false);
        b.propagate(7).unwrap();
        assert_eq!(a.particles(), b.particles());
        assert_eq!(a.mean_total_delay().to_bits(), b.mean_total_delay().to_bits());
        assert_eq!(a.iteration(), 8);
    }

    #[test]
    fn clamp_holds_throughout() {
        let mut e = init_ensemble(2000, &asymmetric_two_lane(), Policy::Fifo, 3).unwrap();
        for _ in 0..30 {
            e.propagate(1).unwrap();
            assert!(e.particles().iter().all(|p| p.iter().all(|&t| t >= -2.0)));
        }
    }

    #[test]
    fn samples_are_recorded_per_event() {
        let mut e = init_ensemble(10, &asymmetric_two_lane(), Policy::Fo, 3).unwrap().record_samples(true);
        e.propagate(3).unwrap();
        assert_eq!(e.samples().len(), 30);
        assert_eq!(e.samples()[0].iteration, 2);
        assert!(e.samples().iter().all(|s| s.delay.is_finite() && s.region.is_some()));
        let mut buf = Vec::new();
        write_samples_csv(&mut buf, e.samples()).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("iteration,particle,delay,region\n"));
    }

    #[test]
    fn histogram_basics() {
        let h = Histogram2D::from_points([(0.05, -1.95)], -2.0, 0.1).unwrap();
        assert_eq!(h.occupied_cells(), 1);
        assert_eq!(h.total_mass(), 1.0);
        assert_eq!(l1_distance(&h, &h).unwrap(), 0.0);
        let g = Histogram2D::from_points([(3.0, 3.0)], -2.0, 0.1).unwrap();
        assert_eq!(l1_distance(&h, &g).unwrap(), 2.0);
        let other = Histogram2D::from_points([(3.0, 3.0)], -2.0, 0.2).unwrap();
        assert!(matches!(l1_distance(&h, &other), Err(Error::BinningMismatch)));
        assert!(Histogram2D::from_points([(0.0, 0.0)], -2.0, 0.0).is_err());
    }

    #[test]
    fn uniform_points_give_flat_histogram() {
        use rand::Rng;
        let mut rng = sub_rng(5, 0);
        let n = 100_000;
        let pts: Vec<(f64, f64)> = (0..n)
            .map(|_| (rng.random::<f64>(), rng.random::<f64>()))
            .collect();
        let h = Histogram2D::from_points(pts, 0.0, 0.25).unwrap();
        assert_eq!(h.occupied_cells(), 16);
        assert!((h.total_mass() - 1.0).abs() < 1e-12);
        // binomial sd of each cell is about 0.0008
        for c in h.cells() {
            assert!((c.mass - 1.0 / 16.0).abs() < 0.004, "{c:?}");
        }
    }

    #[test]
    fn histogram_mass_is_normalized() {
        let mut e = init_ensemble(3333, &asymmetric_two_lane(), Policy::Fo, 4).unwrap();
        e.propagate(5).unwrap();
        let h = e.histogram(0.1).unwrap();
        assert!((h.total_mass() - 1.0).abs() < 1e-12);
        let m: f64 = h.marginal(0).iter().map(|c| c.1).sum();
        assert!((m - 1.0).abs() < 1e-12);
        let mut buf = Vec::new();
        h.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("bin_x,bin_y,mass\n"));
    }

    #[test]
    fn pairwise_sum_is_split_independent() {
        let v: Vec<f64> = (0..1000).map(|i| (i as f64 * 0.37).sin()).collect();
        assert_eq!(pairwise_sum(&v).to_bits(), pairwise_sum(&v.clone()).to_bits());
        assert!((pairwise_sum(&v) - v.iter().sum::<f64>()).abs() < 1e-12);
    }

    #[test]
    fn infinite_tolerance_stops_after_the_required_streak() {
        let run = run_to_steady_state(&asymmetric_two_lane(), Policy::Fo, 100, f64::INFINITY, 50, 1).unwrap();
        assert!(run.converged);
        assert_eq!(run.iterations_used, 3);
        assert!(run_to_steady_state(&asymmetric_two_lane(), Policy::Fo, 100, 0.0, 50, 1).is_err());
    }

    #[test]
    fn slow_relaxation_of_the_mean_delays_convergence() {
        // FIFO histograms look alike long before the mean delay settles
        let plain = ConvergenceOptions {
            stationarity_window: 0,
            ..ConvergenceOptions::steady_state()
        };
        let e = init_ensemble(10_000, &asymmetric_two_lane(), Policy::Fifo, 5).unwrap();
        let early = run_to_steady_state_with(e.clone(), &plain).unwrap();
        let guarded = run_to_steady_state_with(e, &ConvergenceOptions::steady_state()).unwrap();
        assert!(early.converged && guarded.converged);
        assert!(guarded.iterations_used > early.iterations_used + 20);
    }

    #[test]
    fn light_load_converges_quickly() {
        let s = IntersectionSpec::symmetric_two_lane(0.1, 1.0, 0.0).unwrap();
        let run = run_to_steady_state(&s, Policy::Fo, 10_000, 0.05, 100, 2).unwrap();
        assert!(run.converged);
        assert!(run.iterations_used < 10, "{}", run.iterations_used);
    }

    #[test]
    fn trend_of_a_line() {
        let v: Vec<f64> = (0..60).map(|i| 0.5 * i as f64 + 1.0).collect();
        assert!((trend(&v, 50) - 0.5).abs() < 1e-12);
        assert_eq!(trend(&v[..10], 50), 0.0);
    }

    #[test]
    fn no_gaps_means_no_delay() {
        let s = IntersectionSpec::two_lane(0.4, 0.6, 0.0, 0.0).unwrap();
        for policy in Policy::ALL {
            assert_eq!(ergodic_mean_delay(&s, policy, 5000, 1).unwrap(), 0.0);
        }
        assert_eq!(burn_in(100), 50);
        assert_eq!(burn_in(100_000), 1000);
        assert!(ergodic_mean_delay(&s, Policy::Fo, 0, 1).is_err());
    }
}
