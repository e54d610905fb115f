// A four-approach intersection where each lane conflicts with its two
// neighbours. Steps use the general FIFO rule and equilibrium replay for FO.

use std::path::Path;

use intersection_delay::eds::init_ensemble;
use intersection_delay::{IntersectionSpec, Lane, Policy, Result};

pub fn run_example() -> Result<Vec<f64>> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/four_way.json");
    let spec = IntersectionSpec::from_json_file(path)?;
    for lane in spec.lanes() {
        let others: Vec<Lane> = spec.conflicting_lanes(lane).collect();
        println!("lane {lane} conflicts with {others:?}");
    }
    let mut means = Vec::new();
    for policy in Policy::ALL {
        let mut e = init_ensemble(5_000, &spec, policy, 2)?;
        e.propagate(30)?;
        println!(
            "{policy:<4}: mean event delay {:.3} s, replayed events {}",
            e.mean_event_delay(),
            e.fallbacks()
        );
        means.push(e.mean_event_delay());
    }
    Ok(means)
}

fn main() -> Result<()> {
    run_example().map(|_| ())
}
