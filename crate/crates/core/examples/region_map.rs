// Which piece of the step map applies where, drawn as a coarse text grid.

use intersection_delay::mapping::region_grid;
use intersection_delay::{IntersectionSpec, Policy, Result};

pub fn run_example() -> Result<Vec<usize>> {
    let spec = IntersectionSpec::two_lane(0.3, 0.3, 2.0, 1.0)?;
    let n = 25;
    let mut distinct = Vec::new();
    for policy in Policy::ALL {
        let cells = region_grid(&spec, policy, 1.0, 8.0, n)?;
        println!("{policy} regions for a lane-1 arrival, x = 1 (T1 across, T2 up):");
        for row in (0..n).rev() {
            let line: String = (0..n)
                .map(|col| {
                    let c = &cells[col * n + row];
                    c.region.id().map_or('*', |id| char::from(b'0' + id))
                })
                .collect();
            println!("  {line}");
        }
        let mut ids: Vec<String> = cells.iter().map(|c| c.region.code()).collect();
        ids.sort();
        ids.dedup();
        println!("  labels: {}", ids.join(" "));
        distinct.push(ids.len());
    }
    Ok(distinct)
}

fn main() -> Result<()> {
    run_example().map(|_| ())
}
