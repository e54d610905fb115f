// The long-run average delay of one vehicle stream matches the steady-state
// expectation.

use intersection_delay::analytic::expected_delay;
use intersection_delay::eds::ergodic_estimate;
use intersection_delay::{IntersectionSpec, Policy, Result};

pub fn run_example() -> Result<f64> {
    let mut worst: f64 = 0.0;
    for lambda in [0.2, 0.6, 1.0] {
        let spec = IntersectionSpec::symmetric_two_lane(lambda, 1.5, 0.0)?;
        let est = ergodic_estimate(&spec, Policy::Fo, 100_000, 4)?;
        let exact = expected_delay(lambda, 1.5)?;
        println!(
            "λ {lambda}: time average {:.4} ± {:.4} s, closed form {exact:.4} s",
            est.mean, est.standard_error
        );
        worst = worst.max((est.mean - exact).abs());
    }
    Ok(worst)
}

fn main() -> Result<()> {
    run_example().map(|_| ())
}
