use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use intersection_delay::commands::{self, Command, RunConfig, EXIT_VALIDATION};
use intersection_delay::Policy;

/// Event-driven delay model for unmanaged intersections.
///
/// Output files go to `--out`, which defaults to `$INTERSECTION_DELAY_OUT/<command>`
/// (or `out/<command>`). Exit status: 0 success, 2 bad configuration,
/// 3 failed validation, 4 I/O error.
#[derive(Parser, Debug)]
#[command(name = "intersection-delay", version)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand, Debug)]
enum Sub {
    /// Propagate a particle ensemble and write per-iteration histograms.
    Simulate(Common),
    /// Write closed-form steady-state curves (symmetric lanes, no same-lane gap).
    Analyze(Common),
    /// Check the step maps against equilibrium replay and the engine against the closed form.
    Validate(Common),
    /// Run a grid of (rate, gap, policy) cells to steady state.
    Sweep(Common),
    /// Write region labels of both step maps over a delay grid.
    Regions(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// Intersection JSON (lane_count, conflicts, delta_d, delta_s, lane_rates).
    /// Defaults to two lanes with rates 0.1 and 0.5, delta_d 2, delta_s 1.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Right-of-way policy.
    #[arg(long, value_parser = ["fifo", "fo"])]
    policy: Option<String>,
    /// Number of particles.
    #[arg(long)]
    particles: Option<usize>,
    /// Iterations to simulate (simulate, validate) or step limit (sweep).
    #[arg(long)]
    iterations: Option<usize>,
    /// Events per oracle stream (validate).
    #[arg(long)]
    events: Option<usize>,
    /// Oracle streams (validate).
    #[arg(long)]
    trials: Option<usize>,
    /// L1 tolerance between successive histograms.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Histogram bin width in seconds.
    #[arg(long)]
    bin_width: Option<f64>,
    /// Total rate for the delay CDFs (analyze).
    #[arg(long)]
    lambda: Option<f64>,
    /// delta_d for the expected-delay curve (analyze).
    #[arg(long)]
    delta_d: Option<f64>,
    /// Inter-arrival gap of the lane-1 event (regions).
    #[arg(long)]
    gap: Option<f64>,
    /// Upper end of the delay grid (regions).
    #[arg(long)]
    t_max: Option<f64>,
    /// Points per axis (regions).
    #[arg(long)]
    resolution: Option<usize>,
    /// Comma-separated load values lambda*delta_d (analyze).
    #[arg(long, value_delimiter = ',')]
    grid_load: Option<Vec<f64>>,
    /// Comma-separated total rates (analyze, sweep).
    #[arg(long, value_delimiter = ',')]
    grid_lambda: Option<Vec<f64>>,
    /// Comma-separated delta_d values (analyze, sweep).
    #[arg(long, value_delimiter = ',')]
    grid_delta_d: Option<Vec<f64>>,
    /// Comma-separated delta_s values (sweep).
    #[arg(long, value_delimiter = ',')]
    grid_delta_s: Option<Vec<f64>>,
}

fn build(command: Command, a: Common) -> intersection_delay::Result<RunConfig> {
    let mut c = RunConfig::new(command);
    if let Some(path) = &a.spec {
        c = c.with_spec_file(path)?;
    }
    if let Some(p) = a.policy {
        let p: Policy = p.parse()?;
        c.policy = p;
        c.policies = vec![p];
    }
    macro_rules! set {
        ($($f:ident),*) => { $( if let Some(v) = a.$f { c.$f = v; } )* };
    }
    set!(particles, iterations, events, trials, tol, seed, out, bin_width, lambda, delta_d, gap, t_max, resolution);
    set!(grid_load, grid_lambda, grid_delta_d, grid_delta_s);
    Ok(c)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (command, args) = match cli.command {
        Sub::Simulate(a) => (Command::Simulate, a),
        Sub::Analyze(a) => (Command::Analyze, a),
        Sub::Validate(a) => (Command::Validate, a),
        Sub::Sweep(a) => (Command::Sweep, a),
        Sub::Regions(a) => (Command::Regions, a),
    };
    let result = build(command, args).and_then(|c| commands::run(&c));
    match result {
        Ok(outcome) => {
            println!("{}", outcome.message.trim_end());
            if outcome.passed {
                ExitCode::SUCCESS
            } else {
                eprintln!("validation failed; see {}", outcome.out.join("report.txt").display());
                ExitCode::from(EXIT_VALIDATION)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_is_well_formed() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn flags_override_defaults() {
        let cli = Cli::try_parse_from([
            "intersection-delay",
            "sweep",
            "--policy",
            "fo",
            "--grid-lambda",
            "0.2,0.4",
            "--seed",
            "9",
        ])
        .unwrap();
        let Sub::Sweep(a) = cli.command else { panic!() };
        let c = build(Command::Sweep, a).unwrap();
        assert_eq!(c.policies, vec![Policy::Fo]);
        assert_eq!(c.grid_lambda, vec![0.2, 0.4]);
        assert_eq!(c.seed, 9);
    }
}
