//! Experiment drivers behind the command-line tool. Every run writes its
//! files into one output directory together with a `manifest.json` that is
//! enough to repeat the run bit for bit.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{low_flow_approx, point_mass_curves, solve_steady_state};
use crate::eds::{
    init_ensemble, l1_distance, steady_state_summary, ConvergenceOptions, DelaySample,
    SteadyStateSummary, DEFAULT_BIN_WIDTH, DEFAULT_PARTICLES,
};
use crate::error::{Error, Result};
use crate::mapping::{region_grid, Policy};
use crate::model::IntersectionSpec;
use crate::validation::{compare_eds_vs_analytic, compare_mapping_vs_oracle, compare_policies, ValidationReport};

/// Environment variable naming the default output root.
pub const OUTPUT_ENV: &str = "INTERSECTION_DELAY_OUT";

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_VALIDATION: u8 = 3;
pub const EXIT_IO: u8 = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Simulate,
    Analyze,
    Validate,
    Sweep,
    Regions,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Analyze => "analyze",
            Command::Validate => "validate",
            Command::Sweep => "sweep",
            Command::Regions => "regions",
        }
    }
}

/// Exit status for an error: I/O problems are distinguished from bad input.
pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Io(_) => EXIT_IO,
        Error::Csv(e) if e.is_io_error() => EXIT_IO,
        _ => EXIT_CONFIG,
    }
}

/// Evenly spaced `start, start + step, ..., end` computed as `start + i·step`
/// so grid points do not accumulate rounding.
pub fn linear_grid(start: f64, end: f64, step: f64) -> Vec<f64> {
    let n = ((end - start) / step + 1e-9).floor() as usize;
    (0..=n).map(|i| ((start + i as f64 * step) * 1e9).round() / 1e9).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: Command,
    pub spec_path: Option<PathBuf>,
    pub spec: IntersectionSpec,
    pub policy: Policy,
    /// Policies covered by `validate` and `sweep`.
    pub policies: Vec<Policy>,
    pub particles: usize,
    pub iterations: usize,
    /// Stream length for the oracle check.
    pub events: usize,
    pub trials: usize,
    pub tol: f64,
    pub seed: u64,
    pub out: PathBuf,
    pub bin_width: f64,
    /// Total rate for the analytic delay CDFs.
    pub lambda: f64,
    /// `Δd` for the analytic expected-delay curve.
    pub delta_d: f64,
    pub gap: f64,
    pub t_max: f64,
    pub resolution: usize,
    pub grid_load: Vec<f64>,
    pub grid_lambda: Vec<f64>,
    pub grid_delta_d: Vec<f64>,
    pub grid_delta_s: Vec<f64>,
}

/// The shipped two-lane sample: lane rates 0.1 and 0.5 per second,
/// `Δd = 2 s`, `Δs = 1 s`.
pub fn sample_spec() -> IntersectionSpec {
    IntersectionSpec::two_lane(0.1, 0.5, 2.0, 1.0).expect("sample spec is valid")
}

pub fn default_output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ENV).map_or_else(|| PathBuf::from("out"), PathBuf::from)
}

impl RunConfig {
    pub fn new(command: Command) -> Self {
        let (iterations, grid_lambda, grid_delta_d) = match command {
            Command::Sweep => (500, linear_grid(0.2, 1.2, 0.2), vec![1.5]),
            Command::Validate => (8, linear_grid(0.1, 4.0, 0.1), vec![1.0, 2.0, 3.0, 4.0]),
            _ => (8, linear_grid(0.1, 4.0, 0.1), vec![1.0, 2.0, 3.0, 4.0]),
        };
        RunConfig {
            command,
            spec_path: None,
            spec: sample_spec(),
            policy: Policy::Fifo,
            policies: Policy::ALL.to_vec(),
            particles: DEFAULT_PARTICLES,
            iterations,
            events: 200,
            trials: 100,
            tol: 0.05,
            seed: 1,
            out: default_output_root().join(command.name()),
            bin_width: DEFAULT_BIN_WIDTH,
            lambda: 1.0,
            delta_d: 1.5,
            gap: 1.0,
            t_max: 8.0,
            resolution: 201,
            grid_load: linear_grid(0.0, 10.0, 0.1),
            grid_lambda,
            grid_delta_d,
            grid_delta_s: vec![0.0],
        }
    }

    /// Load the intersection from a JSON file. A missing file is a
    /// configuration error, not an I/O one.
    pub fn with_spec_file(mut self, path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.is_file() {
            return Err(Error::InvalidParameter(format!(
                "spec file {} does not exist",
                path.display()
            )));
        }
        self.spec = IntersectionSpec::from_json_file(path)?;
        self.spec_path = Some(path.to_path_buf());
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidParameter(msg));
        if self.particles == 0 {
            return fail("--particles must be at least 1".into());
        }
        if self.iterations == 0 {
            return fail("--iterations must be at least 1".into());
        }
        if !(self.tol > 0.0) {
            return fail(format!("--tol must be positive (got {})", self.tol));
        }
        if !(self.bin_width.is_finite() && self.bin_width > 0.0) {
            return fail(format!("--bin-width must be positive (got {})", self.bin_width));
        }
        if self.policies.is_empty() {
            return fail("at least one policy is required".into());
        }
        match self.command {
            Command::Sweep => {
                for (name, grid) in [
                    ("--grid-lambda", &self.grid_lambda),
                    ("--grid-delta-d", &self.grid_delta_d),
                    ("--grid-delta-s", &self.grid_delta_s),
                ] {
                    if grid.is_empty() {
                        return fail(format!("{name} must not be empty"));
                    }
                }
            }
            Command::Regions => {
                if self.spec.lane_count() != 2 {
                    return Err(Error::NotTwoLane(self.spec.lane_count()));
                }
                if !(self.gap.is_finite() && self.gap > 0.0) {
                    return fail(format!("--gap must be positive (got {})", self.gap));
                }
            }
            Command::Validate if self.events < 2 || self.trials == 0 => {
                return fail("--events must be at least 2 and --trials at least 1".into());
            }
            _ => {}
        }
        Ok(())
    }

    pub fn from_manifest(path: impl AsRef<Path>) -> Result<Self> {
        let manifest: Manifest = serde_json::from_reader(File::open(path)?)?;
        Ok(manifest.config)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config: RunConfig,
    pub files: Vec<String>,
    pub summary: serde_json::Value,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub out: PathBuf,
    pub files: Vec<PathBuf>,
    /// False only for a `validate` run with a failing comparison.
    pub passed: bool,
    pub message: String,
}

struct Output {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Output {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Output {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let file = File::create(&path)?;
        self.files.push(path);
        Ok(BufWriter::new(file))
    }

    fn csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<()> {
        let mut w = csv::Writer::from_writer(self.create(name)?);
        for row in rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    fn finish(self, config: &RunConfig, summary: serde_json::Value, passed: bool, message: String) -> Result<RunOutcome> {
        let mut files: Vec<String> = self
            .files
            .iter()
            .map(|p| p.strip_prefix(&self.dir).unwrap_or(p).display().to_string())
            .collect();
        files.push("manifest.json".into());
        let manifest = Manifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config: config.clone(),
            files,
            summary,
        };
        let path = self.dir.join("manifest.json");
        let mut w = BufWriter::new(File::create(&path)?);
        serde_json::to_writer_pretty(&mut w, &manifest)?;
        w.flush()?;
        let mut all = self.files;
        all.push(path);
        Ok(RunOutcome {
            out: self.dir,
            files: all,
            passed,
            message,
        })
    }
}

pub fn run(config: &RunConfig) -> Result<RunOutcome> {
    config.validate()?;
    match config.command {
        Command::Simulate => simulate(config),
        Command::Analyze => analyze(config),
        Command::Validate => validate(config),
        Command::Sweep => sweep(config),
        Command::Regions => regions(config),
    }
}

#[derive(Serialize)]
struct ConvergenceRow {
    iteration: usize,
    l1_previous: Option<f64>,
    below_tol: bool,
    mean_total_delay: f64,
    mean_event_delay: f64,
    fallbacks: u64,
}

#[derive(Serialize)]
struct MarginalRow {
    lane: usize,
    bin_lower: f64,
    mass: f64,
}

fn write_samples(w: &mut csv::Writer<BufWriter<File>>, samples: &[DelaySample]) -> Result<()> {
    for s in samples {
        w.write_record([
            s.iteration.to_string(),
            s.particle.to_string(),
            s.delay.to_string(),
            s.region.map_or_else(String::new, |r| r.code()),
        ])?;
    }
    Ok(())
}

/// Per-iteration histograms, a delay trace, a convergence log and the
/// final-iteration marginals.
pub fn simulate(config: &RunConfig) -> Result<RunOutcome> {
    let mut out = Output::new(&config.out)?;
    let mut ensemble =
        init_ensemble(config.particles, &config.spec, config.policy, config.seed)?.record_samples(true);
    let mut trace = csv::Writer::from_writer(out.create("delays.csv")?);
    trace.write_record(["iteration", "particle", "delay", "region"])?;
    let mut log = Vec::with_capacity(config.iterations);
    let mut previous = None;
    let mut streak = 0;
    let mut settled_at = None;
    for it in 1..=config.iterations {
        if it > 1 {
            ensemble.propagate(1)?;
            write_samples(&mut trace, &ensemble.take_samples())?;
        }
        let hist = ensemble.histogram(config.bin_width)?;
        hist.write_csv(out.create(&format!("histograms/iter_{it:04}.csv"))?)?;
        let l1 = previous.as_ref().map(|p| l1_distance(p, &hist)).transpose()?;
        let below = l1.is_some_and(|d| d < config.tol);
        streak = if below { streak + 1 } else { 0 };
        if streak >= 3 && settled_at.is_none() {
            settled_at = Some(it);
        }
        let stats = ensemble.stats();
        log.push(ConvergenceRow {
            iteration: it,
            l1_previous: l1,
            below_tol: below,
            mean_total_delay: stats.mean_total_delay,
            mean_event_delay: stats.mean_event_delay,
            fallbacks: stats.fallbacks,
        });
        previous = Some(hist);
    }
    trace.flush()?;
    drop(trace);
    out.csv("convergence.csv", &log)?;
    let last = previous.expect("at least one iteration");
    last.write_json(out.create("histogram_final.json")?)?;
    let mut marginals = Vec::new();
    for lane in 0..config.spec.lane_count().min(2) {
        for (bin_lower, mass) in last.marginal(lane) {
            marginals.push(MarginalRow {
                lane: lane + 1,
                bin_lower,
                mass,
            });
        }
    }
    out.csv("marginals_final.csv", &marginals)?;
    let final_row = log.last().expect("at least one iteration");
    let summary = serde_json::json!({
        "final_iteration": ensemble.iteration(),
        "settled_at": settled_at,
        "mean_total_delay": final_row.mean_total_delay,
        "mean_event_delay": final_row.mean_event_delay,
        "fallbacks": ensemble.fallbacks(),
    });
    let message = format!(
        "{} particles, {} iterations under {}: mean total delay {:.4} s, mean event delay {:.4} s",
        config.particles, config.iterations, config.policy, final_row.mean_total_delay, final_row.mean_event_delay
    );
    out.finish(config, summary, true, message)
}

#[derive(Serialize)]
struct CdfRow {
    t: f64,
    cdf: f64,
}

#[derive(Serialize)]
struct ExpectedDelayRow {
    lambda: f64,
    expected_delay: f64,
    low_flow_approx: f64,
}

/// Closed-form curves: point masses against load, delay CDFs for each `Δd`
/// in the grid, and expected delay against total rate.
pub fn analyze(config: &RunConfig) -> Result<RunOutcome> {
    let mut out = Output::new(&config.out)?;
    let masses = point_mass_curves(&config.grid_load)?;
    out.csv("point_masses.csv", &masses)?;
    for &dd in &config.grid_delta_d {
        let s = solve_steady_state(config.lambda, dd)?;
        let rows = (0..=100)
            .map(|i| {
                let t = dd * i as f64 / 100.0;
                Ok(CdfRow { t, cdf: s.delay_cdf(t)? })
            })
            .collect::<Result<Vec<_>>>()?;
        out.csv(&format!("cdf_delta_d_{dd}.csv"), &rows)?;
    }
    let rows = config
        .grid_lambda
        .iter()
        .map(|&l| {
            Ok(ExpectedDelayRow {
                lambda: l,
                expected_delay: solve_steady_state(l, config.delta_d)?.expected_delay(),
                low_flow_approx: low_flow_approx(l, config.delta_d),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    out.csv("expected_delay.csv", &rows)?;
    let summary = serde_json::json!({
        "loads": config.grid_load.len(),
        "cdf_delta_d": config.grid_delta_d,
        "expected_delay_points": rows.len(),
    });
    out.finish(config, summary, true, format!("analytic curves written to {}", config.out.display()))
}

/// Oracle check for every policy, the FIFO/FO comparison, and for symmetric
/// two-lane specs without a same-lane gap the comparison with the closed form.
pub fn validate(config: &RunConfig) -> Result<RunOutcome> {
    let mut out = Output::new(&config.out)?;
    let spec = &config.spec;
    let mut reports: Vec<ValidationReport> = Vec::new();
    for &policy in &config.policies {
        reports.push(compare_mapping_vs_oracle(spec, policy, config.events, config.trials, config.seed)?);
    }
    if spec.lane_count() == 2 {
        reports.push(compare_policies(spec, config.particles, config.iterations, config.seed)?);
        let rates = spec.lane_rates();
        if spec.delta_s() == 0.0 && rates[0] == rates[1] && spec.delta_d() > 0.0 {
            reports.push(compare_eds_vs_analytic(
                spec.total_rate(),
                spec.delta_d(),
                config.particles,
                config.seed,
            )?);
        }
    }
    serde_json::to_writer_pretty(out.create("report.json")?, &reports)?;
    let text: String = reports.iter().map(|r| r.to_text()).collect();
    out.create("report.txt")?.write_all(text.as_bytes())?;
    let passed = reports.iter().all(|r| r.passed());
    let summary = serde_json::json!({
        "passed": passed,
        "reports": reports.iter().map(|r| serde_json::json!({
            "scenario": r.scenario,
            "policy": r.parameters.policy,
            "passed": r.passed(),
        })).collect::<Vec<_>>(),
    });
    out.finish(config, summary, passed, text)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub delta_d: f64,
    pub delta_s: f64,
    pub policy: Policy,
    pub mean_delay: Option<f64>,
    pub standard_error: Option<f64>,
    pub converged: bool,
    pub diverging: bool,
    pub iterations: usize,
    pub analytic: Option<f64>,
    pub error: Option<String>,
}

#[derive(Serialize)]
struct ArgminRow {
    lambda: f64,
    delta_d: f64,
    delta_s: f64,
    policy: Policy,
    mean_delay: f64,
}

#[derive(Serialize)]
struct MonotoneRow {
    delta_d: f64,
    delta_s: f64,
    policy: Policy,
    non_decreasing: bool,
}

fn sweep_cell(
    config: &RunConfig,
    index: usize,
    (lambda, delta_d, delta_s, policy): (f64, f64, f64, Policy),
) -> SweepRow {
    let mut row = SweepRow {
        lambda,
        delta_d,
        delta_s,
        policy,
        mean_delay: None,
        standard_error: None,
        converged: false,
        diverging: false,
        iterations: 0,
        analytic: None,
        error: None,
    };
    let opts = ConvergenceOptions {
        tol: config.tol,
        max_iter: config.iterations,
        bin_width: config.bin_width,
        ..ConvergenceOptions::steady_state()
    };
    let result = (|| -> Result<SteadyStateSummary> {
        let spec = config.spec.with_total_rate(lambda)?.with_gaps(delta_d, delta_s)?;
        let rates = spec.lane_rates();
        if policy == Policy::Fo && spec.lane_count() == 2 && rates[0] == rates[1] && delta_s == 0.0 && delta_d > 0.0 {
            row.analytic = solve_steady_state(lambda, delta_d).ok().map(|s| s.expected_delay());
        }
        steady_state_summary(&spec, policy, config.particles, config.seed ^ index as u64, &opts, 20)
    })();
    match result {
        Ok(s) => {
            row.mean_delay = Some(s.mean_delay);
            row.standard_error = Some(s.standard_error);
            row.converged = s.converged;
            row.diverging = s.diverging;
            row.iterations = s.iterations_used;
        }
        Err(e) => row.error = Some(e.to_string()),
    }
    row
}

/// Run every `(λ, Δd, Δs, policy)` cell to steady state. Cell `i` uses seed
/// `seed ^ i`; a failing cell is recorded and the sweep carries on.
pub fn sweep_rows(config: &RunConfig) -> Vec<SweepRow> {
    let mut cells = Vec::new();
    for &l in &config.grid_lambda {
        for &dd in &config.grid_delta_d {
            for &ds in &config.grid_delta_s {
                for &p in &config.policies {
                    cells.push((l, dd, ds, p));
                }
            }
        }
    }
    cells
        .into_par_iter()
        .enumerate()
        .map(|(i, cell)| sweep_cell(config, i, cell))
        .collect()
}

/// Is the mean delay non-decreasing in λ, allowing two combined standard
/// errors of slack between neighbours?
fn non_decreasing(rows: &[&SweepRow]) -> bool {
    rows.windows(2).all(|w| match (w[0].mean_delay, w[1].mean_delay) {
        (Some(a), Some(b)) => {
            let se = w[0].standard_error.unwrap_or(0.0).hypot(w[1].standard_error.unwrap_or(0.0));
            b >= a - 2.0 * se
        }
        _ => true,
    })
}

pub fn sweep(config: &RunConfig) -> Result<RunOutcome> {
    let mut out = Output::new(&config.out)?;
    let rows = sweep_rows(config);
    out.csv("sweep.csv", &rows)?;

    let mut argmin = Vec::new();
    for &l in &config.grid_lambda {
        let best = rows
            .iter()
            .filter(|r| r.lambda == l && r.converged)
            .filter_map(|r| r.mean_delay.map(|m| (m, r)))
            .min_by(|a, b| a.0.total_cmp(&b.0));
        if let Some((m, r)) = best {
            argmin.push(ArgminRow {
                lambda: l,
                delta_d: r.delta_d,
                delta_s: r.delta_s,
                policy: r.policy,
                mean_delay: m,
            });
        }
    }
    out.csv("argmin.csv", &argmin)?;

    let mut monotone = Vec::new();
    for &dd in &config.grid_delta_d {
        for &ds in &config.grid_delta_s {
            for &p in &config.policies {
                let mut line: Vec<&SweepRow> = rows
                    .iter()
                    .filter(|r| r.delta_d == dd && r.delta_s == ds && r.policy == p)
                    .collect();
                line.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
                monotone.push(MonotoneRow {
                    delta_d: dd,
                    delta_s: ds,
                    policy: p,
                    non_decreasing: non_decreasing(&line),
                });
            }
        }
    }
    out.csv("monotonicity.csv", &monotone)?;
    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    let summary = serde_json::json!({
        "cells": rows.len(),
        "failed_cells": failed,
        "not_converged": rows.iter().filter(|r| !r.converged).count(),
    });
    let message = format!("{} cells ({failed} failed) written to {}", rows.len(), config.out.display());
    out.finish(config, summary, true, message)
}

#[derive(Serialize)]
struct RegionRow {
    t1: f64,
    t2: f64,
    region: String,
}

/// Region labels of both step maps over a `(T¹, T²)` grid for a lane-1
/// arrival with gap `config.gap`.
pub fn regions(config: &RunConfig) -> Result<RunOutcome> {
    let mut out = Output::new(&config.out)?;
    let mut summary = serde_json::Map::new();
    for policy in Policy::ALL {
        let cells = region_grid(&config.spec, policy, config.gap, config.t_max, config.resolution)?;
        let mut labels: Vec<String> = cells.iter().map(|c| c.region.code()).collect();
        let rows: Vec<RegionRow> = cells
            .iter()
            .zip(&labels)
            .map(|(c, l)| RegionRow {
                t1: c.t1,
                t2: c.t2,
                region: l.clone(),
            })
            .collect();
        out.csv(&format!("regions_{policy}.csv"), &rows)?;
        labels.sort();
        labels.dedup();
        summary.insert(policy.to_string(), serde_json::json!(labels));
    }
    out.finish(
        config,
        serde_json::Value::Object(summary),
        true,
        format!("region grids written to {}", config.out.display()),
    )
}
