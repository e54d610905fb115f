// Reproducible Poisson arrival streams split over lanes.

use intersection_delay::{EventStream, IntersectionSpec, Lane, Result};

pub fn run_example() -> Result<Vec<usize>> {
    let spec = IntersectionSpec::from_json_str(
        r#"{"lane_count": 2, "conflicts": [[1, 2]], "delta_d": 2.0, "delta_s": 1.0, "lane_rates": [0.1, 0.5]}"#,
    )?;

    println!("first arrivals (seed 7):");
    for (i, e) in EventStream::new(spec.clone(), 7).take(5).enumerate() {
        println!("  {i}: gap {:.3} s, lane {}", e.gap, e.lane);
    }

    let n = 60_000;
    let mut counts = vec![0usize; spec.lane_count()];
    let mut elapsed = 0.0;
    for e in EventStream::new(spec.clone(), 7).take(n) {
        counts[e.lane.index()] += 1;
        elapsed += e.gap;
    }
    for lane in spec.lanes() {
        println!(
            "lane {lane}: {:.3} of arrivals (expected {:.3})",
            counts[lane.index()] as f64 / n as f64,
            spec.lane_probability(lane)
        );
    }
    println!("mean gap {:.3} s (expected {:.3})", elapsed / n as f64, 1.0 / spec.total_rate());

    // another stream of the same seed is independent
    let a: Vec<Lane> = EventStream::with_stream(spec.clone(), 7, 1).take(5).map(|e| e.lane).collect();
    println!("stream 1 lanes: {a:?}");
    Ok(counts)
}

fn main() -> Result<()> {
    run_example().map(|_| ())
}
