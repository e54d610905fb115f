// Choosing the conflict gap: sweep Δd at a fixed flow and report the mean
// delay of each policy.

use intersection_delay::commands::{sweep_rows, Command, RunConfig};
use intersection_delay::{IntersectionSpec, Policy, Result};

pub fn run_example() -> Result<usize> {
    let config = RunConfig {
        spec: IntersectionSpec::symmetric_two_lane(0.6, 1.5, 0.0)?,
        particles: 4_000,
        grid_lambda: vec![0.6],
        grid_delta_d: vec![0.5, 1.0, 1.5, 2.0, 2.5],
        grid_delta_s: vec![0.5],
        policies: Policy::ALL.to_vec(),
        ..RunConfig::new(Command::Sweep)
    };
    let rows = sweep_rows(&config);
    for r in &rows {
        println!(
            "Δd {:.1} {:<4}: mean delay {:.3} s (converged {})",
            r.delta_d,
            r.policy,
            r.mean_delay.unwrap_or(f64::NAN),
            r.converged
        );
    }
    let best = rows
        .iter()
        .filter(|r| r.converged)
        .min_by(|a, b| a.mean_delay.unwrap().total_cmp(&b.mean_delay.unwrap()))
        .expect("some cell converges");
    println!("lowest delay: Δd {} under {}", best.delta_d, best.policy);
    Ok(rows.len())
}

fn main() -> Result<()> {
    run_example().map(|_| ())
}
