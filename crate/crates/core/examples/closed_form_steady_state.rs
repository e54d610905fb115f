// Closed-form steady state for two symmetric lanes without a same-lane gap.

use intersection_delay::analytic::{expected_delay, low_flow_approx, point_mass_curves, solve_steady_state};
use intersection_delay::Result;

pub fn run_example() -> Result<f64> {
    println!("load   P(d = 0)  P(T = Δd)");
    for row in point_mass_curves(&[0.5, 1.0, 2.0, 3.0, 4.0, 5.0])? {
        println!("{:4.1}   {:.6}  {:.6}", row.load, row.zero_delay, row.full_delay);
    }

    let s = solve_steady_state(1.0, 2.0)?;
    println!("λ = 1, Δd = 2: C = {:.6}, normalization {:.12}", s.c, s.normalization());
    for t in [0.0, 0.5, 1.0, 1.5, 2.0] {
        println!("  P(d <= {t}) = {:.6}", s.delay_cdf(t)?);
    }

    println!("λ     E(d)      λΔd²/4   (Δd = 1.5)");
    for l in [0.05, 0.1, 0.5, 1.0, 2.0, 4.0] {
        println!("{l:<5} {:.6}  {:.6}", expected_delay(l, 1.5)?, low_flow_approx(l, 1.5));
    }
    expected_delay(1.0, 1.5)
}

fn main() -> Result<()> {
    run_example().map(|_| ())
}
