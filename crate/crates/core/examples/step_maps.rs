// One-event transitions of the lane delays, checked against a replay of
// the equilibrium.

use intersection_delay::mapping::{replay_step, step};
use intersection_delay::{ArrivalEvent, DelayVector, IntersectionSpec, Lane, Policy, Result};

pub fn run_example() -> Result<f64> {
    let spec = IntersectionSpec::two_lane(0.3, 0.3, 2.0, 0.0)?;
    let cases = [
        (DelayVector::from_pair(-2.0, -2.0), 3.0, 1),
        (DelayVector::from_pair(0.5, -2.0), 0.2, 1),
        (DelayVector::from_pair(0.0, 1.5), 1.0, 1),
        (DelayVector::from_pair(0.0, 3.0), 2.0, 1),
        (DelayVector::from_pair(4.0, 0.5), 1.0, 2),
    ];
    let mut worst: f64 = 0.0;
    for (t, gap, lane) in cases {
        let event = ArrivalEvent { gap, lane: Lane::new(lane) };
        for policy in Policy::ALL {
            let out = step(policy, &t, &event, &spec)?;
            let replay = replay_step(policy, &t, &event, &spec)?;
            let diff = out.next.iter().zip(replay.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            worst = worst.max(diff);
            println!(
                "{policy:<4} T={:?} x={gap} lane {lane} -> {:?} via {}",
                &t[..],
                &out.next[..],
                out.region.map_or("general".into(), |r| r.to_string())
            );
        }
    }
    println!("largest difference from replay: {worst:e}");
    Ok(worst)
}

fn main() -> Result<()> {
    run_example().map(|_| ())
}
