// FIFO against flexible order on the same arrivals.

use intersection_delay::validation::{compare_policies, policy_means};
use intersection_delay::{IntersectionSpec, Result};

pub fn run_example() -> Result<(f64, f64)> {
    let spec = IntersectionSpec::two_lane(0.1, 0.5, 2.0, 1.0)?;
    for iteration in [2, 4, 8, 16, 32] {
        let (fifo, fo) = policy_means(&spec, 10_000, iteration, 5)?;
        println!(
            "iteration {iteration:>2}: mean total delay FIFO {:7.3} FO {:7.3}, mean event delay FIFO {:6.3} FO {:6.3}",
            fifo.mean_total_delay, fo.mean_total_delay, fifo.mean_event_delay, fo.mean_event_delay
        );
    }
    let report = compare_policies(&spec, 10_000, 8, 5)?;
    print!("{report}");
    let c = report.metric("mean_total_delay_fo_vs_fifo").unwrap();
    Ok((c.value_a, c.value_b))
}

fn main() -> Result<()> {
    run_example().map(|_| ())
}
