// Compare the step maps with brute-force equilibrium replay over random
// arrival streams.

use intersection_delay::validation::compare_mapping_vs_oracle;
use intersection_delay::{IntersectionSpec, Policy, Result};

pub fn run_example() -> Result<Vec<bool>> {
    let mut outcomes = Vec::new();
    for delta_s in [0.0, 1.0] {
        let spec = IntersectionSpec::two_lane(0.2, 0.4, 2.0, delta_s)?;
        for policy in Policy::ALL {
            let report = compare_mapping_vs_oracle(&spec, policy, 200, 100, 11)?;
            print!("{report}");
            outcomes.push(report.passed());
        }
    }
    Ok(outcomes)
}

fn main() -> Result<()> {
    run_example().map(|_| ())
}
