//! End-to-end pipeline flows that cross module boundaries: in-memory builds
//! vs artifact round-trips, both activation modes, and fail-soft verdicts.

use dictrnn::artifact::{
    read_certificate, read_dictionary, read_grid, read_trajectory, read_weights, write_certificate,
    write_dictionary, write_grid, write_trajectory, write_weights, OutPaths,
};
use dictrnn::config::Config;
use dictrnn::rnn::run;
use dictrnn::verify::{full_suite, Status};

fn cfg(json: &str) -> Config {
    Config::from_json(json).unwrap()
}

#[test]
fn disk_round_trip_replays_bit_identically() {
    let cfg = cfg(r#"{
        "map": {"name": "chebyshev"},
        "l": 1, "k": 16,
        "seed_window": [0.3],
        "train_len": 800,
        "jitter_scale": 0.001,
        "grid_seed": 7,
        "activation": {"mode": "tabulated", "h_seed": 3},
        "horizon": 50
    }"#);
    let parts = dictrnn::verify::build_parts::<f64>(&cfg).unwrap();
    let in_memory = run(&parts.ws, &parts.dict, &parts.grid, cfg.horizon).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let paths = OutPaths::new(dir.path());
    write_trajectory(&paths, &parts.traj).unwrap();
    write_grid(&paths, &parts.grid).unwrap();
    write_dictionary(&paths, &parts.dict).unwrap();
    write_certificate(&paths, &parts.cert).unwrap();
    write_weights(&paths, &parts.ws, &parts.dict).unwrap();

    let traj = read_trajectory(&paths).unwrap();
    let grid = read_grid(&paths).unwrap();
    let dict = read_dictionary(&paths, &grid).unwrap();
    let cert = read_certificate(&paths).unwrap();
    let ws = read_weights(&paths, &dict).unwrap();
    assert_eq!(traj, parts.traj);
    assert_eq!(grid, parts.grid);
    assert_eq!(dict, parts.dict);
    assert_eq!(cert.e_lambda, parts.cert.e_lambda);
    assert_eq!(ws, parts.ws);

    let replayed = run(&ws, &dict, &grid, cfg.horizon).unwrap();
    assert_eq!(replayed, in_memory);
}

#[test]
fn cycle3_suite_is_green_and_periodic() {
    let report = full_suite::<f64>(&cfg(r#"{
        "map": {"name": "cycle", "params": {"p": 3}},
        "l": 3, "k": 4,
        "seed_window": [0.3, -0.3, 0.6],
        "train_len": 16,
        "activation": {"mode": "tabulated", "h_seed": 2},
        "horizon": 9
    }"#));
    assert_eq!(report.exit_code(), 0);
    for s in &report.stages {
        assert_eq!(s.status, Status::Pass, "{}: {}", s.name, s.detail);
    }
    let periodicity = report.stage("ystar_periodicity").unwrap();
    assert!(
        periodicity.detail.contains("period 3"),
        "{}",
        periodicity.detail
    );
}

#[test]
fn analytic_mode_tracks_through_the_quantizer() {
    let report = full_suite::<f64>(&cfg(r#"{
        "map": {"name": "cycle", "params": {"p": 3}},
        "l": 3, "k": 4,
        "seed_window": [0.3, -0.3, 0.6],
        "train_len": 16,
        "activation": {"mode": "analytic", "beta": 0.25},
        "horizon": 9
    }"#));
    assert_eq!(
        report.stage("onehot_residual").unwrap().status,
        Status::Skipped,
        "analytic mode has no exact one-hot invariant"
    );
    for s in &report.stages {
        if s.name != "onehot_residual" {
            assert_eq!(s.status, Status::Pass, "{}: {}", s.name, s.detail);
        }
    }
    assert_eq!(report.exit_code(), 0);
}

#[test]
fn analytic_l1_grids_collapse_and_the_suite_says_so() {
    // For L = 1 the argument matrix sigma*.sigma^T is exactly rank one, so an
    // analytic X = tanh(beta * args) is invertible only through the
    // nonlinearity: a cool beta leaves X numerically rank-deficient, a hot
    // one saturates rows to ±1. Either way verification must flag the build
    // rather than report a healthy network.
    let report = full_suite::<f64>(&cfg(r#"{
        "map": {"name": "chebyshev"},
        "l": 1, "k": 8,
        "seed_window": [0.3],
        "train_len": 800,
        "jitter_scale": 0.001,
        "grid_seed": 7,
        "activation": {"mode": "analytic", "beta": 0.25},
        "horizon": 40
    }"#));
    assert_eq!(report.exit_code(), 1);
    let flagged = ["x_regularity", "weight_residual"]
        .iter()
        .any(|n| report.stage(n).is_some_and(|s| s.status == Status::Fail));
    assert!(flagged, "expected the ill-conditioned solve to be flagged");
}

#[test]
fn the_pipeline_is_generic_over_f32() {
    // Snap-mode tracking is precision-independent: state vectors are exact
    // table columns in f32 too. Only the readout inherits f32 roundoff.
    let cfg = cfg(r#"{
        "map": {"name": "cycle", "params": {"p": 2}},
        "l": 2, "k": 4,
        "seed_window": [0.3, -0.3],
        "train_len": 9,
        "activation": {"mode": "tabulated", "h_seed": 1},
        "horizon": 8
    }"#);
    let parts = dictrnn::verify::build_parts::<f32>(&cfg).unwrap();
    assert_eq!(parts.grid.points(), &[-0.75f32, -0.25, 0.25, 0.75]);
    assert_eq!(parts.ws.w_in, vec![-4.0f32, 4.0]);
    let rec = run(&parts.ws, &parts.dict, &parts.grid, cfg.horizon).unwrap();
    for row in &rec.rows {
        let want = if row.t % 2 == 0 { 0.25f32 } else { -0.25 };
        assert!(
            (row.yhat - want).abs() <= 1e-6,
            "t = {}: {}",
            row.t,
            row.yhat
        );
        assert_eq!(row.n_t, Some(1 + row.t % 2));
    }
}

#[test]
fn transient_orbit_fails_closure_and_skips_downstream() {
    let report = full_suite::<f64>(&cfg(r#"{
        "map": {"name": "decay", "params": {"ratio": -0.6}},
        "l": 1, "k": 8,
        "seed_window": [0.9],
        "train_len": 4,
        "activation": {"mode": "tabulated", "h_seed": 0},
        "horizon": 5
    }"#));
    assert_eq!(report.exit_code(), 1);
    let closure = report.stage("closure").unwrap();
    assert_eq!(closure.status, Status::Fail);
    assert!(closure.detail.contains("(4)"), "{}", closure.detail);
    for name in ["x_regularity", "tracking_equality", "error_bound"] {
        let s = report.stage(name).unwrap();
        assert_eq!(s.status, Status::Skipped, "{}", s.name);
        assert!(s.detail.contains("not evaluated"));
    }
}

#[test]
fn zero_point_grid_blocks_the_suite_at_certification() {
    // Odd K with zero jitter puts a grid point exactly at 0 (no reciprocal);
    // with retries disabled the grid stage must fail and block the rest.
    let report = full_suite::<f64>(&cfg(r#"{
        "map": {"name": "constant", "params": {"c": 0.3}},
        "l": 1, "k": 5,
        "seed_window": [0.3],
        "train_len": 20,
        "max_retries": 0,
        "activation": {"mode": "tabulated", "h_seed": 11},
        "horizon": 5
    }"#));
    assert_eq!(report.exit_code(), 1);
    let grid = report.stage("grid_certification").unwrap();
    assert_eq!(grid.status, Status::Fail);
    for name in ["genericity", "closure", "tracking_equality", "error_bound"] {
        assert_eq!(
            report.stage(name).unwrap().status,
            Status::Skipped,
            "{name}"
        );
    }
}

#[test]
fn domain_escape_prepends_a_failing_stage() {
    let report = full_suite::<f64>(&cfg(r#"{
        "map": {"name": "henon", "params": {"s": 8.0}},
        "l": 2, "k": 8,
        "seed_window": [0.5, 0.5],
        "train_len": 100,
        "activation": {"mode": "tabulated", "h_seed": 0},
        "horizon": 5
    }"#));
    assert_eq!(report.exit_code(), 1);
    assert_eq!(report.stages.len(), 11);
    assert_eq!(report.stages[0].name, "trajectory_generation");
    assert_eq!(report.stages[0].status, Status::Fail);
    assert!(report.stages[0].detail.contains("left [-1, 1]"));
}
