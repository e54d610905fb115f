// Every example must run to completion and produce sensible output.

macro_rules! example {
    ($name:ident) => {
        #[allow(dead_code)]
        mod $name {
            include!(concat!("../examples/", stringify!($name), ".rs"));
        }
    };
}

example!(event_stream);
example!(micro_equilibrium);
example!(step_maps);
example!(two_lane_propagation);
example!(steady_state_convergence);
example!(closed_form_steady_state);
example!(oracle_validation);
example!(policy_comparison);
example!(delta_d_sweep);
example!(four_lane_intersection);
example!(ergodic_average);
example!(region_map);

#[test]
fn event_stream_runs() {
    let counts = event_stream::run_example().unwrap();
    let share = counts[0] as f64 / counts.iter().sum::<usize>() as f64;
    assert!((share - 1.0 / 6.0).abs() < 0.01);
}

#[test]
fn micro_equilibrium_runs() {
    let (fifo, fo) = micro_equilibrium::run_example().unwrap();
    assert_eq!(fifo, vec![0.0, 2.0, 4.0]);
    assert_eq!(fo, vec![0.0, 3.0, 1.0]);
}

#[test]
fn step_maps_runs() {
    assert!(step_maps::run_example().unwrap() < 1e-12);
}

#[test]
fn two_lane_propagation_runs() {
    let [fifo, fo] = two_lane_propagation::run_example().unwrap();
    // the diagonal bands carry most of the mass under either policy
    assert!(fifo > 0.5 && fo > 0.5);
}

#[test]
fn steady_state_convergence_runs() {
    let (converged, diverging) = steady_state_convergence::run_example().unwrap();
    assert!(!converged);
    assert!(diverging);
}

#[test]
fn closed_form_steady_state_runs() {
    let e = closed_form_steady_state::run_example().unwrap();
    assert!((e - 0.505604).abs() < 1e-6);
}

#[test]
fn oracle_validation_runs() {
    let passed = oracle_validation::run_example().unwrap();
    // without a same-lane gap both maps are exact; FIFO stays exact with one
    assert_eq!(&passed[..3], &[true, true, true]);
}

#[test]
fn policy_comparison_runs() {
    let (fo, fifo) = policy_comparison::run_example().unwrap();
    assert!(fo < fifo);
}

#[test]
fn delta_d_sweep_runs() {
    assert_eq!(delta_d_sweep::run_example().unwrap(), 10);
}

#[test]
fn four_lane_intersection_runs() {
    let means = four_lane_intersection::run_example().unwrap();
    assert!(means.iter().all(|m| m.is_finite() && *m >= 0.0));
}

#[test]
fn ergodic_average_runs() {
    assert!(ergodic_average::run_example().unwrap() < 0.02);
}

#[test]
fn region_map_runs() {
    let distinct = region_map::run_example().unwrap();
    assert_eq!(distinct[0], 4);
    assert!(distinct[1] >= 8);
}
