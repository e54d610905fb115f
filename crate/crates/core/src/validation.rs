//! Cross-checks between the closed-form maps, brute-force equilibrium
//! replay, the particle engine and the analytic steady state.

use std::fmt::{self, Write as _};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::solve_steady_state;
use crate::eds::{init_ensemble, steady_state_summary, ConvergenceOptions, ErgodicEstimate};
use crate::error::Result;
use crate::mapping::{step, Policy};
use crate::micro::MicroState;
use crate::model::{DelayVector, EventStream, IntersectionSpec};

pub const ORACLE_TOLERANCE: f64 = 1e-9;
pub const PROBABILITY_TOLERANCE: f64 = 0.02;
pub const KOLMOGOROV_TOLERANCE: f64 = 0.02;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    /// `|a − b| ≤ tolerance`
    Within,
    /// `a ≤ b + tolerance`
    AtMost,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub metric: String,
    pub value_a: f64,
    pub value_b: f64,
    pub tolerance: f64,
    pub relation: Relation,
    pub pass: bool,
}

impl Comparison {
    pub fn within(metric: impl Into<String>, a: f64, b: f64, tolerance: f64) -> Self {
        Comparison {
            metric: metric.into(),
            value_a: a,
            value_b: b,
            tolerance,
            relation: Relation::Within,
            pass: (a - b).abs() <= tolerance,
        }
    }

    pub fn at_most(metric: impl Into<String>, a: f64, b: f64, tolerance: f64) -> Self {
        Comparison {
            metric: metric.into(),
            value_a: a,
            value_b: b,
            tolerance,
            relation: Relation::AtMost,
            pass: a <= b + tolerance,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportParameters {
    pub lane_rates: Vec<f64>,
    pub delta_d: f64,
    pub delta_s: f64,
    pub policy: Option<Policy>,
    pub particles: Option<usize>,
    pub seed: u64,
}

impl ReportParameters {
    fn from_spec(spec: &IntersectionSpec, policy: Option<Policy>, particles: Option<usize>, seed: u64) -> Self {
        ReportParameters {
            lane_rates: spec.lane_rates().to_vec(),
            delta_d: spec.delta_d(),
            delta_s: spec.delta_s(),
            policy,
            particles,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub scenario: String,
    pub parameters: ReportParameters,
    pub comparisons: Vec<Comparison>,
    /// Events the closed-form FO map had to resolve by replay.
    pub fallbacks: u64,
    /// Conditions that prevented a comparison, e.g. a run that never settled.
    pub flags: Vec<String>,
    pub notes: Vec<String>,
}

impl ValidationReport {
    fn new(scenario: impl Into<String>, parameters: ReportParameters) -> Self {
        ValidationReport {
            scenario: scenario.into(),
            parameters,
            comparisons: Vec::new(),
            fallbacks: 0,
            flags: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.flags.is_empty() && self.comparisons.iter().all(|c| c.pass)
    }

    pub fn metric(&self, name: &str) -> Option<&Comparison> {
        self.comparisons.iter().find(|c| c.metric == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }

    pub fn to_text(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = &self.parameters;
        writeln!(
            f,
            "{} [{}] rates={:?} delta_d={} delta_s={} seed={}",
            self.scenario,
            if self.passed() { "PASS" } else { "FAIL" },
            p.lane_rates,
            p.delta_d,
            p.delta_s,
            p.seed
        )?;
        for c in &self.comparisons {
            let op = match c.relation {
                Relation::Within => "~",
                Relation::AtMost => "<=",
            };
            writeln!(
                f,
                "  {:<5} {:<32} {:.6} {op} {:.6} (tol {:e})",
                if c.pass { "ok" } else { "FAIL" },
                c.metric,
                c.value_a,
                c.value_b,
                c.tolerance
            )?;
        }
        if self.fallbacks > 0 {
            writeln!(f, "  fallbacks: {}", self.fallbacks)?;
        }
        for flag in &self.flags {
            writeln!(f, "  flag: {flag}")?;
        }
        for note in &self.notes {
            writeln!(f, "  note: {note}")?;
        }
        Ok(())
    }
}

struct TrialOutcome {
    discrepancy: f64,
    fallbacks: u64,
    worst: Option<String>,
}

fn oracle_trial(
    spec: &IntersectionSpec,
    policy: Policy,
    stream_length: usize,
    seed: u64,
    trial: u64,
) -> Result<TrialOutcome> {
    let mut events = EventStream::with_stream(spec.clone(), seed, trial);
    let first = events.next().expect("event streams are infinite");
    let mut oracle = MicroState::new(policy, spec).without_truncation();
    let mut desired = 0.0;
    oracle.push(desired, first.lane)?;
    let mut closed = DelayVector::initial(first.lane, spec);
    let mut outcome = TrialOutcome {
        discrepancy: 0.0,
        fallbacks: 0,
        worst: None,
    };
    for (i, event) in events.take(stream_length.saturating_sub(1)).enumerate() {
        let before = closed.clone();
        let out = step(policy, &closed, &event, spec)?;
        if out.region.is_some_and(|r| r.is_fallback()) {
            outcome.fallbacks += 1;
        }
        closed = out.next;
        desired += event.gap;
        oracle.push(desired, event.lane)?;
        let truth = oracle.lane_delays()?;
        let gap = closed
            .iter()
            .zip(truth.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if gap > outcome.discrepancy {
            outcome.discrepancy = gap;
            if gap > ORACLE_TOLERANCE {
                outcome.worst = Some(format!(
                    "trial {trial} event {}: T={:?} x={} lane={} -> map {:?} ({}), replay {:?}",
                    i + 1,
                    &before[..],
                    event.gap,
                    event.lane,
                    &closed[..],
                    out.region.map_or_else(|| "general".to_string(), |r| r.to_string()),
                    &truth[..]
                ));
            }
        }
    }
    Ok(outcome)
}

/// Run `trials` independent streams of `stream_length` events through the
/// step map and through exact equilibrium replay of the growing prefix, and
/// report the largest componentwise disagreement.
pub fn compare_mapping_vs_oracle(
    spec: &IntersectionSpec,
    policy: Policy,
    stream_length: usize,
    trials: usize,
    seed: u64,
) -> Result<ValidationReport> {
    let outcomes: Vec<TrialOutcome> = (0..trials as u64)
        .into_par_iter()
        .map(|t| oracle_trial(spec, policy, stream_length, seed, t))
        .collect::<Result<_>>()?;
    let mut report = ValidationReport::new(
        "mapping_vs_oracle",
        ReportParameters::from_spec(spec, Some(policy), None, seed),
    );
    let worst = outcomes.iter().map(|o| o.discrepancy).fold(0.0, f64::max);
    report.fallbacks = outcomes.iter().map(|o| o.fallbacks).sum();
    report
        .comparisons
        .push(Comparison::within("max_discrepancy", worst, 0.0, ORACLE_TOLERANCE));
    let failing = outcomes.iter().filter(|o| o.discrepancy > ORACLE_TOLERANCE).count();
    report.notes.push(format!(
        "{trials} trials x {stream_length} events, {failing} trials above tolerance"
    ));
    if let Some(example) = outcomes.iter().find_map(|o| o.worst.clone()) {
        report.notes.push(format!("first disagreement: {example}"));
    }
    Ok(report)
}

/// Largest gap between the empirical CDF of `samples` and `cdf`, checking
/// both one-sided limits at every jump. `cdf_left(t)` is the limit from the
/// left, which differs from `cdf(t)` only at atoms.
pub fn kolmogorov_distance(
    samples: &[f64],
    cdf: impl Fn(f64) -> f64,
    cdf_left: impl Fn(f64) -> f64,
) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut worst: f64 = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let x = sorted[i];
        let mut j = i;
        while j < sorted.len() && sorted[j] == x {
            j += 1;
        }
        let below = i as f64 / n;
        let upto = j as f64 / n;
        worst = worst.max((below - cdf_left(x)).abs()).max((upto - cdf(x)).abs());
        i = j;
    }
    worst
}

/// Run FO to steady state for a symmetric two-lane intersection with no
/// same-lane gap and compare against the closed form.
pub fn compare_eds_vs_analytic(
    lambda: f64,
    delta_d: f64,
    n: usize,
    seed: u64,
) -> Result<ValidationReport> {
    compare_eds_vs_analytic_with(lambda, delta_d, n, seed, &ConvergenceOptions::steady_state(), 20)
}

pub fn compare_eds_vs_analytic_with(
    lambda: f64,
    delta_d: f64,
    n: usize,
    seed: u64,
    opts: &ConvergenceOptions,
    window: usize,
) -> Result<ValidationReport> {
    let solution = solve_steady_state(lambda, delta_d)?;
    let spec = IntersectionSpec::symmetric_two_lane(lambda, delta_d, 0.0)?;
    let mut report = ValidationReport::new(
        "eds_vs_analytic",
        ReportParameters::from_spec(&spec, Some(Policy::Fo), Some(n), seed),
    );
    let summary = steady_state_summary(&spec, Policy::Fo, n, seed, opts, window)?;
    report.fallbacks = summary.fallbacks;
    report.notes.push(format!(
        "{} steps to settle, statistics pooled over {window} more",
        summary.iterations_used
    ));
    if !summary.converged {
        report.flags.push(format!(
            "particle run did not settle within {} steps",
            opts.max_iter
        ));
        return Ok(report);
    }
    // rounding can leave a zero delay at ±1e-16
    let delays: Vec<f64> = summary
        .delays
        .iter()
        .map(|&d| if d.abs() < 1e-9 { 0.0 } else { d })
        .collect();
    let event_zero = delays.iter().filter(|&&d| d == 0.0).count() as f64 / delays.len() as f64;
    let cdf = |t: f64| {
        if t < 0.0 {
            0.0
        } else if t >= delta_d {
            1.0
        } else {
            solution.delay_cdf(t).expect("t is in range")
        }
    };
    let cdf_left = |t: f64| if t <= 0.0 { 0.0 } else { cdf(t) };
    let ks = kolmogorov_distance(&delays, cdf, cdf_left);
    report.comparisons.extend([
        Comparison::within(
            "zero_delay_probability",
            summary.zero_fraction,
            2.0 * solution.mass_at_zero,
            PROBABILITY_TOLERANCE,
        ),
        Comparison::within(
            "full_delay_probability",
            summary.full_fraction,
            2.0 * solution.mass_at_delta_d,
            PROBABILITY_TOLERANCE,
        ),
        Comparison::within(
            "event_zero_delay_probability",
            event_zero,
            2.0 * solution.mass_at_zero,
            PROBABILITY_TOLERANCE,
        ),
        Comparison::within("kolmogorov_distance", ks, 0.0, KOLMOGOROV_TOLERANCE),
        Comparison::within(
            "mean_delay",
            summary.mean_delay,
            solution.expected_delay(),
            PROBABILITY_TOLERANCE,
        ),
    ]);
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PolicyMeans {
    pub mean_total_delay: f64,
    pub mean_event_delay: f64,
}

/// Mean total lane delay and mean per-event delay for FIFO and FO at
/// `iteration`, both driven by the same arrivals.
pub fn policy_means(
    spec: &IntersectionSpec,
    n: usize,
    iteration: usize,
    seed: u64,
) -> Result<(PolicyMeans, PolicyMeans)> {
    let run = |policy| -> Result<PolicyMeans> {
        let mut e = init_ensemble(n, spec, policy, seed)?;
        e.propagate(iteration.saturating_sub(1))?;
        Ok(PolicyMeans {
            mean_total_delay: e.mean_total_delay(),
            mean_event_delay: e.mean_event_delay(),
        })
    };
    Ok((run(Policy::Fifo)?, run(Policy::Fo)?))
}

pub fn compare_policies(
    spec: &IntersectionSpec,
    n: usize,
    iteration: usize,
    seed: u64,
) -> Result<ValidationReport> {
    let (fifo, fo) = policy_means(spec, n, iteration, seed)?;
    let mut report = ValidationReport::new(
        "policy_comparison",
        ReportParameters::from_spec(spec, None, Some(n), seed),
    );
    report.comparisons.extend([
        Comparison::at_most("mean_total_delay_fo_vs_fifo", fo.mean_total_delay, fifo.mean_total_delay, 0.0),
        Comparison::at_most("mean_event_delay_fo_vs_fifo", fo.mean_event_delay, fifo.mean_event_delay, 0.0),
    ]);
    report.notes.push(format!("iteration {iteration}"));
    Ok(report)
}

/// Single-trajectory time average against the steady-state closed form.
pub fn compare_ergodic_vs_analytic(
    lambda: f64,
    delta_d: f64,
    events: usize,
    seed: u64,
) -> Result<(ValidationReport, ErgodicEstimate)> {
    let spec = IntersectionSpec::symmetric_two_lane(lambda, delta_d, 0.0)?;
    let estimate = crate::eds::ergodic_estimate(&spec, Policy::Fo, events, seed)?;
    let exact = solve_steady_state(lambda, delta_d)?.expected_delay();
    let mut report = ValidationReport::new(
        "ergodic_vs_analytic",
        ReportParameters::from_spec(&spec, Some(Policy::Fo), None, seed),
    );
    report
        .comparisons
        .push(Comparison::within("ergodic_mean_delay", estimate.mean, exact, PROBABILITY_TOLERANCE));
    let mut note = String::new();
    let _ = write!(
        note,
        "{} events after a burn-in of {}, standard error {:.4}",
        estimate.samples, estimate.burn_in, estimate.standard_error
    );
    report.notes.push(note);
    Ok((report, estimate))
}
