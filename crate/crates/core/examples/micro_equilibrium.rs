// Passing times at equilibrium for a short vehicle sequence under both
// policies, and the lane delays they leave behind.

use intersection_delay::micro::{event_delay, fifo_equilibrium, fo_equilibrium, lane_delays, vehicles};
use intersection_delay::{IntersectionSpec, Result};

pub fn run_example() -> Result<(Vec<f64>, Vec<f64>)> {
    let spec = IntersectionSpec::two_lane(0.1, 0.5, 2.0, 1.0)?;
    // desired time, lane
    let cars = vehicles(&[(0.0, 1), (0.5, 2), (0.6, 1)]);

    let fifo = fifo_equilibrium(&cars, &spec)?;
    let fo = fo_equilibrium(&cars, &spec)?;
    println!("FIFO passing times {:?}", fifo.passing_times);
    println!("FO   passing times {:?} order {:?}", fo.passing_times, fo.order.as_ref().unwrap());
    println!("FIFO lane delays {:?}", &lane_delays(&fifo, &cars, &spec)?[..]);
    println!("FO   lane delays {:?}", &lane_delays(&fo, &cars, &spec)?[..]);

    // delay added by the third car
    let before = fo_equilibrium(&cars[..2], &spec)?;
    println!("FO delay of the last arrival: {:.2} s", event_delay(&before, &fo, &cars)?);
    let before = fifo_equilibrium(&cars[..2], &spec)?;
    println!("FIFO delay of the last arrival: {:.2} s", event_delay(&before, &fifo, &cars)?);

    Ok((fifo.passing_times, fo.passing_times))
}

fn main() -> Result<()> {
    run_example().map(|_| ())
}
