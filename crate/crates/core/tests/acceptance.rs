//! The eight acceptance criteria, one test and one printed verdict line
//! each. Tolerances are pinned in the asserts; every input is seeded, so a
//! pass here is reproducible bit-for-bit.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, resume_unwind, AssertUnwindSafe};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dictrnn::artifact::OutPaths;
use dictrnn::codec::{build_grid, quantize, quantize_series, QuantizedSeries};
use dictrnn::config::Config;
use dictrnn::dictionary::{build_dictionary, check_closure, check_genericity, Key};
use dictrnn::harness::{cmd_build, cmd_generate, cmd_run};
use dictrnn::rnn::{build_weights, run, ActivationRequest, BuildOptions};
use dictrnn::systems::{generate, DelayMap};
use dictrnn::verify::{build_parts, suite_on_parts};
use dictrnn::Matrix64;

fn criterion(n: u32, desc: &str, body: impl FnOnce() -> String) {
    let outcome = catch_unwind(AssertUnwindSafe(body));
    match outcome {
        Ok(detail) => {
            println!("criterion {n}: PASS — {desc}: {detail}");
        }
        Err(panic) => {
            println!("criterion {n}: FAIL — {desc}");
            resume_unwind(panic);
        }
    }
}

fn cheb_cfg() -> Config {
    Config::from_json(
        r#"{
        "map": {"name": "chebyshev"},
        "l": 1, "k": 32,
        "seed_window": [0.3],
        "train_len": 5000,
        "eval_len": 1000,
        "jitter_scale": 0.001,
        "grid_seed": 7,
        "activation": {"mode": "tabulated", "h_seed": 3},
        "horizon": 1000
    }"#,
    )
    .unwrap()
}

fn cycle2_cfg() -> Config {
    Config::from_json(
        r#"{
        "map": {"name": "cycle", "params": {"p": 2}},
        "l": 2, "k": 4,
        "seed_window": [0.3, -0.3],
        "train_len": 9,
        "activation": {"mode": "tabulated", "h_seed": 1},
        "horizon": 8
    }"#,
    )
    .unwrap()
}

fn henon_cfg() -> Config {
    Config::from_json(
        r#"{
        "map": {"name": "henon"},
        "l": 2, "k": 6,
        "seed_window": [0.2, 0.1],
        "train_len": 4000,
        "burn_in": 500,
        "jitter_scale": 0.001,
        "grid_seed": 7,
        "activation": {"mode": "tabulated", "h_seed": 5},
        "horizon": 10
    }"#,
    )
    .unwrap()
}

#[test]
fn c1_exact_tracking() {
    criterion(1, "exact tracking, chebyshev L=1 K=32 T=1000", || {
        let start = Instant::now();
        let cfg = cheb_cfg();
        let parts = build_parts::<f64>(&cfg).unwrap();
        let rec = run(&parts.ws, &parts.dict, &parts.grid, 1000).unwrap();
        assert_eq!(rec.rows.len(), 1001);
        assert_eq!(parts.ystar.values.len(), 1001);
        let mut max_track = 0.0f64;
        for (row, ystar) in rec.rows.iter().zip(&parts.ystar.values) {
            max_track = max_track.max((row.yhat - ystar).abs());
        }
        assert!(max_track <= 1e-12, "tracking {max_track:e}");
        let max_onehot = rec.max_onehot_residual().unwrap();
        assert!(max_onehot <= 1e-8, "onehot {max_onehot:e}");
        let elapsed = start.elapsed();
        assert!(elapsed.as_secs_f64() <= 10.0, "took {elapsed:?}");
        format!(
            "max |ŷ - y*| = {max_track:.3e} (≤ 1e-12), max ‖X⁻¹r - e_n‖∞ = {max_onehot:.3e} (≤ 1e-8), {elapsed:.2?}"
        )
    });
}

#[test]
fn c2_error_bound() {
    criterion(2, "a-priori error bound, analytic e^λ = 4", || {
        let cfg = cheb_cfg();
        let parts = build_parts::<f64>(&cfg).unwrap();
        assert_eq!(parts.cert.e_lambda, 4.0);
        let report = suite_on_parts(&parts, cfg.horizon);
        let bound = report.bound.as_ref().unwrap();
        assert_eq!(bound.rows.len(), 1001);

        let c = parts.grid.radius_x_k();
        assert!(c <= 1.1, "C = {c}");
        // Spot-check the formula at t = 1: (2t+1)·(e^λ)^t·√L·C/K.
        let expect_b1 = 3.0 * 4.0 * 1.0f64.sqrt() * c / 32.0;
        assert_eq!(bound.rows[1].bound, expect_b1);

        let mut active = 0usize;
        for row in &bound.rows {
            if row.bound < 2.0 {
                active += 1;
                assert!(
                    row.abs_err <= row.bound,
                    "t = {}: |ŷ - y| = {} > bound {}",
                    row.t,
                    row.abs_err,
                    row.bound
                );
            }
        }
        assert!(active >= 1);
        let row0 = &bound.rows[0];
        assert!(row0.abs_err <= c / 32.0, "t = 0 err {}", row0.abs_err);
        format!(
            "bound holds outright on {active} active rows, t=0 err {:.3e} ≤ C/32 = {:.3e}, C = {c:.4} ≤ 1.1",
            row0.abs_err,
            c / 32.0
        )
    });
}

#[test]
fn c3_two_key_golden() {
    criterion(3, "period-2 two-key golden case", || {
        let cfg = cycle2_cfg();
        let parts = build_parts::<f64>(&cfg).unwrap();
        let ws = &parts.ws;
        assert_eq!(parts.dict.n(), 2);
        assert_eq!(ws.h_attempts, 0);
        assert_eq!(parts.grid.points(), &[-0.75, -0.25, 0.25, 0.75]);

        // Scan order: t' = 0 first, so entry 1 is (2,3) -> 3, entry 2 is (3,2) -> 2.
        assert_eq!(parts.dict.entry(1).key.lags(), &[2, 3]);
        assert_eq!(parts.dict.entry(1).value_index, 3);
        assert_eq!(parts.dict.entry(2).key.lags(), &[3, 2]);
        assert_eq!(parts.dict.entry(2).value_index, 2);

        // Arguments are exactly ±2 (grid values ±1/4 have exact reciprocals),
        // so the table is indexed by G = [-2, 2] and X is hand-derivable from
        // the seeded draw alone.
        assert_eq!(ws.gset.gammas(), &[-2.0, 2.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h_m2 = 2.0 * rng.random::<f64>() - 1.0;
        let h_p2 = 2.0 * rng.random::<f64>() - 1.0;
        let x_expect = Matrix64::from_raw(2, 2, vec![h_p2, h_m2, h_m2, h_p2]).unwrap();
        assert_eq!(ws.x, x_expect);

        assert_eq!(ws.w_in, vec![-4.0, 4.0]);

        // W X = Y with Y the hand-computed outer product [[-1, 1], [1, -1]].
        let y_hand = [[-1.0, 1.0], [1.0, -1.0]];
        for (i, row) in y_hand.iter().enumerate() {
            for (j, want) in row.iter().enumerate() {
                let wx: f64 = (0..2).map(|m| ws.w.get(i, m) * ws.x.get(m, j)).sum();
                assert!((wx - want).abs() <= 1e-12, "WX[{i}][{j}] = {wx}");
            }
        }

        // Hand-solved readout: w_out = ±0.25/(h(2) - h(-2)).
        let w0 = 0.25 / (h_p2 - h_m2);
        assert!((ws.w_out[0] - w0).abs() <= 1e-12);
        assert!((ws.w_out[1] + w0).abs() <= 1e-12);

        // r(0) = X e_1 exactly, and the output alternates ±0.25.
        assert_eq!(ws.r0, vec![h_p2, h_m2]);
        let rec = run(ws, &parts.dict, &parts.grid, cfg.horizon).unwrap();
        let mut worst = 0.0f64;
        for row in &rec.rows {
            let want = if row.t % 2 == 0 { 0.25 } else { -0.25 };
            worst = worst.max((row.yhat - want).abs());
        }
        assert!(worst <= 1e-12, "alternation error {worst:e}");
        format!(
            "X = [[h(2),h(-2)],[h(-2),h(2)]] exact, W_in = (-4, 4), ŷ alternates ±0.25 within {worst:.3e} (≤ 1e-12)"
        )
    });
}

#[test]
fn c4_rank_bound() {
    criterion(4, "rank(W) ≤ L-1 across L ∈ {1, 2} builds", || {
        // L = 1: W is the empty-sum matrix, exactly zero.
        let cheb = build_parts::<f64>(&cheb_cfg()).unwrap();
        assert_eq!(cheb.ws.rank_w, 0);
        assert_eq!(cheb.ws.w.max_abs(), 0.0);

        // L = 2: numerical rank from the SVD, cross-checked with an
        // independent 2x2-minor oracle (rank ≤ 1 ⟺ all minors vanish).
        let mut l2_ranks = Vec::new();
        for (name, parts) in [
            ("cycle2", build_parts::<f64>(&cycle2_cfg()).unwrap()),
            ("henon", build_parts::<f64>(&henon_cfg()).unwrap()),
        ] {
            assert!(parts.ws.rank_w <= 1, "{name} rank {}", parts.ws.rank_w);
            let w = &parts.ws.w;
            let n = parts.dict.n();
            let scale = w.max_abs().max(f64::MIN_POSITIVE);
            let mut worst_minor = 0.0f64;
            for i in 0..n {
                for j in i + 1..n {
                    for a in 0..n {
                        for b in a + 1..n {
                            let det = w.get(i, a) * w.get(j, b) - w.get(i, b) * w.get(j, a);
                            worst_minor = worst_minor.max(det.abs());
                        }
                    }
                }
            }
            assert!(
                worst_minor <= 1e-10 * scale * scale,
                "{name} minor {worst_minor:e} vs scale {scale:e}"
            );
            l2_ranks.push((name, parts.ws.rank_w));
        }
        format!("chebyshev L=1 W ≡ 0 (rank 0), {l2_ranks:?} all ≤ 1 with 2x2 minors at roundoff")
    });
}

#[test]
fn c5_regularity_almost_everywhere() {
    criterion(
        5,
        "regularity over 100 h-tables and 100 grid jitters",
        || {
            let start = Instant::now();
            let cfg = cheb_cfg();
            let parts = build_parts::<f64>(&cfg).unwrap();

            let mut first_draw_ok = 0;
            for seed in 0..100u64 {
                let opts = BuildOptions {
                    activation: ActivationRequest::Tabulated { h_seed: seed },
                    snap_tolerance: None,
                    max_retries: 0,
                };
                if build_weights::<f64>(&parts.dict, &parts.grid, &parts.ws.init_window, &opts)
                    .is_ok()
                {
                    first_draw_ok += 1;
                }
            }
            assert!(first_draw_ok >= 99, "only {first_draw_ok}/100 regular");

            let map = DelayMap::<f64>::benchmark("chebyshev", &BTreeMap::new()).unwrap();
            let traj = generate(&map, &[0.3], 5000, 1000, 0).unwrap();
            let mut generic_ok = 0;
            for seed in 0..100u64 {
                let g = build_grid(32, &traj.head(2), 1e-3, seed, 16).unwrap();
                let q = quantize_series(&traj, &g, traj.t_min(), 0).unwrap();
                let d = build_dictionary(&q, 1).unwrap();
                if check_genericity(&d, &g).ok {
                    generic_ok += 1;
                }
            }
            assert!(generic_ok >= 99, "only {generic_ok}/100 generic");

            let elapsed = start.elapsed();
            assert!(elapsed.as_secs_f64() <= 60.0, "took {elapsed:?}");
            format!("{first_draw_ok}/100 first-draw regular, {generic_ok}/100 generic (both ≥ 99), {elapsed:.2?}")
        },
    );
}

/// Independent oracle: linear rescan of the quantized training segment,
/// newest window first, first occurrence wins.
fn rescan_oracle(q: &QuantizedSeries, l: usize) -> Vec<(Vec<usize>, usize)> {
    let mut seen: Vec<(Vec<usize>, usize)> = Vec::new();
    let floor = q.t_min() + l as i64;
    let mut tp = 0i64;
    while tp >= floor {
        let key: Vec<usize> = (1..=l as i64)
            .map(|d| q.index_at(tp - d).unwrap())
            .collect();
        if !seen.iter().any(|(k, _)| *k == key) {
            seen.push((key, q.index_at(tp).unwrap()));
        }
        tp -= 1;
    }
    seen
}

#[test]
fn c6_dictionary_laws() {
    // (map, params, l, k, seed_window, train_len, burn_in)
    type Fixture = (
        &'static str,
        Vec<(&'static str, f64)>,
        usize,
        usize,
        Vec<f64>,
        usize,
        usize,
    );
    criterion(
        6,
        "dictionary rescan oracle + closure on every benchmark",
        || {
            let fixtures: Vec<Fixture> = vec![
                ("chebyshev", vec![], 1, 32, vec![0.3], 5000, 0),
                ("tent", vec![], 1, 8, vec![0.37], 400, 0),
                ("henon", vec![], 2, 6, vec![0.2, 0.1], 4000, 500),
                ("constant", vec![("c", 0.3)], 1, 8, vec![0.3], 20, 0),
                ("cycle", vec![("p", 2.0)], 2, 4, vec![0.3, -0.3], 9, 0),
                ("cycle", vec![("p", 3.0)], 3, 4, vec![0.3, -0.3, 0.6], 16, 0),
            ];
            let mut sizes = Vec::new();
            for (name, kv, l, k, seed_w, train, burn) in fixtures {
                let params: BTreeMap<String, f64> =
                    kv.iter().map(|(a, b)| (a.to_string(), *b)).collect();
                let m = DelayMap::<f64>::benchmark(name, &params).unwrap();
                let traj = generate(&m, &seed_w, train, 1, burn).unwrap();
                let g = build_grid(k, &traj.head(l + 1), 1e-3, 7, 16).unwrap();
                let q = quantize_series(&traj, &g, traj.t_min(), 0).unwrap();
                let dict = build_dictionary(&q, l).unwrap();

                let oracle = rescan_oracle(&q, l);
                assert_eq!(dict.n(), oracle.len(), "{name}: entry count");
                for (n, (key, value)) in oracle.iter().enumerate() {
                    let e = dict.entry(n + 1);
                    assert_eq!(
                        e.key.lags(),
                        key.as_slice(),
                        "{name}: key order at n = {}",
                        n + 1
                    );
                    assert_eq!(e.value_index, *value, "{name}: value at n = {}", n + 1);
                }

                let windows = (0i64 - (q.t_min() + l as i64) + 1) as u128;
                let cap = (k as u128).saturating_pow(l as u32);
                assert!(dict.n() as u128 <= cap.min(windows), "{name}: N too large");

                assert!(check_closure(&dict).closed, "{name}: closure");
                assert!(check_genericity(&dict, &g).ok, "{name}: genericity");
                sizes.push((name, dict.n()));
            }

            // Transient-only fixture: the head of the orbit never recurs, so the
            // final window's key is missing and closure must fail on it.
            let m =
                DelayMap::<f64>::benchmark("decay", &BTreeMap::from([("ratio".to_string(), -0.6)]))
                    .unwrap();
            let traj = generate(&m, &[0.9], 4, 1, 0).unwrap();
            let g = build_grid(8, &traj.head(2), 0.0, 1, 8).unwrap();
            let q = quantize_series(&traj, &g, traj.t_min(), 0).unwrap();
            let dict = build_dictionary(&q, 1).unwrap();
            let closure = check_closure(&dict);
            assert!(!closure.closed);
            let missing: Vec<&Key> = closure.failing.iter().map(|(_, k)| k).collect();
            assert_eq!(missing, vec![&Key::new(vec![4])]);

            format!(
                "oracle matches entry-for-entry on {sizes:?}; decay fixture misses exactly key (4)"
            )
        },
    );
}

#[test]
fn c7_quantization_contract() {
    criterion(
        7,
        "quantization error, ties, and fixed points over 10^5 samples",
        || {
            let grids = [
                build_grid::<f64>(4, &[0.3], 0.0, 1, 8).unwrap(),
                build_grid::<f64>(32, &[0.3, 0.82], 1e-3, 7, 16).unwrap(),
                build_grid::<f64>(7, &[0.11, -0.2], 0.004, 3, 16).unwrap(),
            ];
            let mut worst_rel = 0.0f64;
            for g in &grids {
                let k = g.k();
                let radius = g.radius_x_k() / k as f64;
                let mut rng = ChaCha8Rng::seed_from_u64(1234);
                for _ in 0..100_000 {
                    let y = 2.0 * rng.random::<f64>() - 1.0;
                    let idx = quantize(y, g);
                    assert!((1..=k).contains(&idx));
                    let err = (y - g.point(idx)).abs();
                    assert!(err <= radius, "err {err} > C/K {radius} at y = {y}");
                    worst_rel = worst_rel.max(err / radius);
                }
                // Midpoint ties round upward; grid points are fixed points.
                for i in 0..k - 1 {
                    let mid = (g.point(i + 1) + g.point(i + 2)) / 2.0;
                    assert_eq!(quantize(mid, g), i + 2, "tie at midpoint {i}");
                }
                for i in 1..=k {
                    assert_eq!(quantize(g.point(i), g), i);
                }
            }
            format!(
            "3 grids x 10^5 samples: err ≤ C/K with worst err/(C/K) = {worst_rel:.4}, all {} ties upward, all fixed points hold",
            4 - 1 + 32 - 1 + 7 - 1
        )
        },
    );
}

#[test]
fn c8_determinism() {
    criterion(8, "byte-identical artifacts on repeated runs", || {
        let mut compared = 0usize;
        for cfg in [cheb_cfg(), cycle2_cfg()] {
            let dir_a = tempfile::tempdir().unwrap();
            let dir_b = tempfile::tempdir().unwrap();
            for dir in [dir_a.path(), dir_b.path()] {
                let paths = OutPaths::new(dir);
                assert_eq!(cmd_generate(&cfg, &paths).unwrap(), 0);
                assert_eq!(cmd_build(&cfg, &paths).unwrap(), 0);
                assert_eq!(cmd_run(&cfg, &paths).unwrap(), 0);
            }
            let pa = OutPaths::new(dir_a.path());
            let pb = OutPaths::new(dir_b.path());
            for (a, b) in [
                (pa.trajectory_csv(), pb.trajectory_csv()),
                (pa.trajectory_meta(), pb.trajectory_meta()),
                (pa.grid(), pb.grid()),
                (pa.dictionary(), pb.dictionary()),
                (pa.certificate(), pb.certificate()),
                (pa.weights_manifest(), pb.weights_manifest()),
                (pa.weights_bin(), pb.weights_bin()),
                (pa.run_record(), pb.run_record()),
                (pa.bound_report(), pb.bound_report()),
                (pa.ledger(), pb.ledger()),
                (pa.resolved_config(), pb.resolved_config()),
            ] {
                let bytes_a = std::fs::read(&a).unwrap();
                let bytes_b = std::fs::read(&b).unwrap();
                assert_eq!(bytes_a, bytes_b, "{} differs between runs", a.display());
                compared += 1;
            }
        }
        format!("2 configs x 11 artifacts byte-identical across independent runs ({compared} comparisons)")
    });
}
