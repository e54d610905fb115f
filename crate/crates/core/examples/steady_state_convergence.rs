// Convergence of the particle engine, and what divergence looks like when
// arrivals outpace the intersection.

use intersection_delay::eds::{init_ensemble, run_to_steady_state, run_to_steady_state_with, ConvergenceOptions};
use intersection_delay::{IntersectionSpec, Policy, Result};

pub fn run_example() -> Result<(bool, bool)> {
    let light = IntersectionSpec::symmetric_two_lane(0.1, 1.0, 0.0)?;
    let run = run_to_steady_state(&light, Policy::Fo, 10_000, 0.05, 100, 3)?;
    println!(
        "light load: converged={} after {} steps, L1 {:?}",
        run.converged,
        run.iterations_used,
        run.l1_history.iter().map(|d| format!("{d:.3}")).collect::<Vec<_>>()
    );

    let busy = IntersectionSpec::symmetric_two_lane(1.0, 2.0, 0.0)?;
    let opts = ConvergenceOptions::steady_state();
    let run = run_to_steady_state_with(init_ensemble(10_000, &busy, Policy::Fo, 3)?, &opts)?;
    println!(
        "λΔd = 2 with noise-aware stopping: converged={} after {} steps, last L1 {:.3} against noise {:.3}",
        run.converged,
        run.iterations_used,
        run.l1_history.last().unwrap(),
        run.noise_history.last().unwrap()
    );

    let jammed = IntersectionSpec::two_lane(2.0, 2.0, 2.0, 1.0)?;
    let run = run_to_steady_state(&jammed, Policy::Fifo, 2_000, 0.05, 100, 3)?;
    let h = &run.mean_total_history;
    println!(
        "overloaded: converged={} diverging={} mean total delay {:.1} -> {:.1} s",
        run.converged,
        run.diverging,
        h[0],
        h[h.len() - 1]
    );
    Ok((run.converged, run.diverging))
}

fn main() -> Result<()> {
    run_example().map(|_| ())
}
