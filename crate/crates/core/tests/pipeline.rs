use patternforge::io::{
    path_bundle, read_path_archive, read_schedule, read_state, read_values, schedule_json, sim_bundle, state_bundle,
    verify_bundle, write_text,
};
use patternforge::parabolic::{
    lambda1, solve_parabolic, staircase_track, ControlSchedule, SimOptions, StaircaseOptions,
};
use patternforge::path_builder::path_to_zero;
use patternforge::steady_synth::{finger_pattern, synthesize_divergence, verify_steady_state};
use patternforge::{default_nonlinearity, l2_distance, Grid, SStarTarget};
use serde_json::json;

#[test]
fn synthesize_store_and_reload() {
    let nl = default_nonlinearity();
    let grid = Grid::unit(513).unwrap();
    let target = SStarTarget::new(vec![0.5, -0.5], vec![0.0, 0.5, 1.0]).unwrap();
    let syn = synthesize_divergence(&target, 0.1, &grid, &nl).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let manifest = state_bundle(&syn.state, "synthesize-div", json!({"eps": 0.1})).unwrap().write(dir.path()).unwrap();
    assert_eq!(manifest.files.len(), 2);
    assert!(verify_bundle(dir.path()).unwrap().is_empty());

    let back = read_state(&dir.path().join("state.csv")).unwrap();
    assert_eq!(back, syn.state);
    assert!(verify_steady_state(&back, &nl) < 1e-6);

    // tampering is detected
    write_text(&dir.path().join("profile.csv"), "x\n").unwrap();
    assert_eq!(verify_bundle(dir.path()).unwrap(), vec!["profile.csv".to_string()]);
}

#[test]
fn path_archive_round_trip() {
    let nl = default_nonlinearity();
    let grid = Grid::unit(129).unwrap();
    let finger = finger_pattern(1, 0.6, &grid, &nl).unwrap();
    let path = path_to_zero(&finger.state, 12, &nl).unwrap();
    assert_eq!(path.len(), 13);
    assert!(path.last().max_abs() < 1e-12);

    let dir = tempfile::tempdir().unwrap();
    path_bundle(&path, json!({"steps": 12})).unwrap().write(dir.path()).unwrap();
    let back = read_path_archive(dir.path()).unwrap();
    assert_eq!(back.params, path.params);
    assert_eq!(back.states, path.states);
}

#[test]
fn simulate_and_track_a_short_path() {
    let nl = default_nonlinearity();
    let grid = Grid::unit(129).unwrap();
    let finger = finger_pattern(1, 0.6, &grid, &nl).unwrap();
    let l1 = lambda1(&finger.state.profile, &nl, &grid).unwrap();
    assert!(l1.is_finite());

    let sched = ControlSchedule::frozen(&finger.state, 0.5).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("schedule.json");
    write_text(&path, &schedule_json(&sched).unwrap()).unwrap();
    let sched = read_schedule(&path).unwrap();
    let sim = solve_parabolic(&finger.state.values, &sched, &grid, &SimOptions { dt: 1e-3, snapshot_every: 0.1 }, &nl)
        .unwrap();
    assert!(sim.times.len() >= 6);
    assert!(l2_distance(&grid, &sim.final_state, &finger.state.values).unwrap() < 1e-3);

    let out = dir.path().join("sim");
    sim_bundle(&sim, Some(&sched), "simulate", json!({})).unwrap().write(&out).unwrap();
    assert!(verify_bundle(&out).unwrap().is_empty());
    let (g, v) = read_values(&out.join("final_state.csv")).unwrap();
    assert_eq!(g, grid);
    assert_eq!(v, sim.final_state);

    let down = path_to_zero(&finger.state, 10, &nl).unwrap();
    let tracked = staircase_track(&finger.state.values, &down, &StaircaseOptions::default(), &nl).unwrap();
    assert_eq!(tracked.sim.constraint_violation, 0.0);
    assert!(tracked.final_error < 1e-2, "final error {}", tracked.final_error);
}
