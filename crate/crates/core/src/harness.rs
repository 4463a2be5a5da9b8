//! Command layer: generate / build / run / verify / report, all working
//! through one artifact directory so stages can be rerun independently.

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::artifact::{self, ledger_line_failed, ArtifactError, OutPaths};
use crate::config::{Config, ConfigError};
use crate::dictionary::generate_ystar;
use crate::systems::{generate, DelayMap, Trajectory};
use crate::verify::{
    build_parts_from_traj, suite_from_failure, suite_on_parts, PipelineFailure, PipelineParts,
    StageResult, SuiteReport,
};

/// Relative output directories are rooted here when set.
pub const OUT_ROOT_ENV: &str = "DICTRNN_OUT_ROOT";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Artifact(#[from] ArtifactError),
    #[error("{message}\nhint: {hint}")]
    Pipeline { message: String, hint: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn pipeline_err(f: &PipelineFailure) -> HarnessError {
    HarnessError::Pipeline {
        message: f.to_string(),
        hint: stage_hint(f.stage).into(),
    }
}

fn stage_hint(stage: &str) -> &'static str {
    match stage {
        "trajectory_generation" => "check map params and seed_window stay inside [-1, 1]",
        "grid_certification" => "raise max_retries, or pick a different grid_seed/jitter_scale",
        "genericity" => "try another grid_seed or a nonzero jitter_scale",
        "closure" => "lengthen train_len so transients leave the window, or lower K",
        "x_regularity" => "raise max_retries for more activation draws, or change h_seed/beta",
        "error_bound" => "use the analytic certificate, or raise lipschitz.n_pairs",
        _ => "inspect the config against the error above",
    }
}

/// `--out` flag beats `output_dir` in the config beats `out`. Relative
/// results are prefixed by `DICTRNN_OUT_ROOT` when that is set.
pub fn resolve_out_dir(flag: Option<&Path>, cfg_dir: Option<&str>) -> PathBuf {
    let chosen: PathBuf = flag
        .map(Into::into)
        .or_else(|| cfg_dir.map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    if chosen.is_absolute() {
        return chosen;
    }
    match std::env::var_os(OUT_ROOT_ENV) {
        Some(root) => PathBuf::from(root).join(chosen),
        None => chosen,
    }
}

fn ensure_dir(paths: &OutPaths) -> Result<(), HarnessError> {
    std::fs::create_dir_all(&paths.dir).map_err(|source| HarnessError::Io {
        path: paths.dir.display().to_string(),
        source,
    })
}

fn write_resolved_config(paths: &OutPaths, cfg: &Config) -> Result<(), HarnessError> {
    let path = paths.resolved_config();
    std::fs::write(&path, cfg.to_canonical_json()).map_err(|source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// The stored trajectory must describe exactly the run the config asks for.
fn check_source(cfg: &Config, traj: &Trajectory<f64>) -> Result<(), HarnessError> {
    let map = DelayMap::<f64>::benchmark(&cfg.map.name, &cfg.map.params).map_err(|e| {
        HarnessError::Config(ConfigError::Invalid {
            field: "map",
            reason: e.to_string(),
        })
    })?;
    let s = traj.source();
    let mismatch = |what: &str| {
        HarnessError::Artifact(ArtifactError::Incompatible {
            reason: format!(
                "stored trajectory {what} does not match the config; re-run `generate`"
            ),
        })
    };
    if s.map_name != cfg.map.name || s.params != map.params() {
        return Err(mismatch("map"));
    }
    if s.seed_window != cfg.seed_window {
        return Err(mismatch("seed_window"));
    }
    if s.train_len != cfg.train_len
        || s.eval_len != cfg.eval_len_effective()
        || s.burn_in != cfg.burn_in
    {
        return Err(mismatch("lengths"));
    }
    Ok(())
}

pub fn print_stages(stages: &[StageResult]) {
    for s in stages {
        println!("[{:^12}] {:<20} {}", s.status.to_string(), s.name, s.detail);
    }
}

fn print_verdict<F: crate::scalar::Scalar>(report: &SuiteReport<F>) {
    if let Some(bound) = &report.bound {
        println!(
            "bound: {} active of {} rows, e^λ = {} ({}), first violation: {:?}",
            bound.active_rows,
            bound.rows.len(),
            bound.e_lambda.as_f64(),
            bound.cert_method,
            bound.first_violation,
        );
    }
    println!("verdict: {}", if report.failed() { "FAIL" } else { "PASS" });
}

/// Generates the trajectory and stores it with the resolved config.
pub fn cmd_generate(cfg: &Config, paths: &OutPaths) -> Result<i32, HarnessError> {
    ensure_dir(paths)?;
    let map = DelayMap::<f64>::benchmark(&cfg.map.name, &cfg.map.params).map_err(|e| {
        pipeline_err(&PipelineFailure {
            stage: "trajectory_generation",
            error: e.to_string(),
        })
    })?;
    let traj = generate(
        &map,
        &cfg.seed_window,
        cfg.train_len,
        cfg.eval_len_effective(),
        cfg.burn_in,
    )
    .map_err(|e| {
        pipeline_err(&PipelineFailure {
            stage: "trajectory_generation",
            error: e.to_string(),
        })
    })?;
    artifact::write_trajectory(paths, &traj)?;
    write_resolved_config(paths, cfg)?;
    println!(
        "generated {} ({} train, {} eval, burn-in {}) -> {}",
        cfg.map.name,
        cfg.train_len,
        cfg.eval_len_effective(),
        cfg.burn_in,
        paths.trajectory_csv().display(),
    );
    Ok(0)
}

/// Builds grid, dictionary, certificate, and weights from the stored
/// trajectory.
pub fn cmd_build(cfg: &Config, paths: &OutPaths) -> Result<i32, HarnessError> {
    ensure_dir(paths)?;
    let traj = artifact::read_trajectory(paths)?;
    check_source(cfg, &traj)?;
    let parts: PipelineParts<f64> =
        build_parts_from_traj(cfg, traj).map_err(|f| pipeline_err(&f))?;
    artifact::write_grid(paths, &parts.grid)?;
    artifact::write_dictionary(paths, &parts.dict)?;
    artifact::write_certificate(paths, &parts.cert)?;
    artifact::write_weights(paths, &parts.ws, &parts.dict)?;
    write_resolved_config(paths, cfg)?;
    println!(
        "built N = {}, L = {}, K = {}: cond_1(X) = {:.3e}, rank(W) = {}, draws = {}, grid seeds advanced = {}",
        parts.dict.n(),
        parts.dict.l(),
        parts.grid.k(),
        parts.ws.cond_estimate,
        parts.ws.rank_w,
        parts.ws.h_attempts + 1,
        parts.grid_rounds,
    );
    Ok(0)
}

/// Loads the built artifacts, replays the run, verifies every stage, and
/// writes run_record.csv, bound_report.csv, and ledger.jsonl.
pub fn cmd_run(cfg: &Config, paths: &OutPaths) -> Result<i32, HarnessError> {
    ensure_dir(paths)?;
    let traj = artifact::read_trajectory(paths)?;
    check_source(cfg, &traj)?;
    let grid = artifact::read_grid(paths)?;
    let dict = artifact::read_dictionary(paths, &grid)?;
    let cert = artifact::read_certificate(paths)?;
    let ws = artifact::read_weights(paths, &dict)?;

    let report = match generate_ystar(&dict, &grid, &ws.init_window, cfg.horizon) {
        Ok(ystar) => {
            let grid_rounds = grid.jitter_seed().wrapping_sub(cfg.grid_seed) as u32;
            let parts = PipelineParts {
                traj,
                grid,
                dict,
                cert,
                ystar,
                ws,
                grid_rounds,
            };
            suite_on_parts(&parts, cfg.horizon)
        }
        Err(e) => suite_from_failure(&PipelineFailure {
            stage: "closure",
            error: e.to_string(),
        }),
    };

    if let Some(rec) = &report.run {
        artifact::write_run_record(paths, rec)?;
    }
    if let Some(bound) = &report.bound {
        artifact::write_bound_report(paths, bound)?;
    }
    artifact::write_ledger(paths, &report.stages)?;
    print_stages(&report.stages);
    print_verdict(&report);
    Ok(report.exit_code())
}

/// Whole pipeline plus verification in memory; writes nothing.
pub fn cmd_verify(cfg: &Config) -> Result<i32, HarnessError> {
    let report = crate::verify::full_suite::<f64>(cfg);
    print_stages(&report.stages);
    print_verdict(&report);
    Ok(report.exit_code())
}

/// Summarizes a run directory from its ledger and manifests.
pub fn cmd_report(paths: &OutPaths) -> Result<i32, HarnessError> {
    let lines = artifact::read_ledger(paths)?;
    println!("run directory: {}", paths.dir.display());
    let mut counts = [0usize; 4];
    for line in &lines {
        let slot = match line.status.as_str() {
            "pass" => 0,
            "fail" => 1,
            "skipped" => 2,
            _ => 3,
        };
        counts[slot] += 1;
        println!(
            "[{:^12}] {:<20} {}",
            line.status, line.invariant, line.detail
        );
    }
    println!(
        "stages: {} pass, {} fail, {} skipped, {} inconclusive",
        counts[0], counts[1], counts[2], counts[3]
    );
    if let Ok(text) = std::fs::read_to_string(paths.weights_manifest()) {
        if let Ok(doc) = serde_json::from_str::<serde_json::Value>(&text) {
            println!(
                "weights: N = {}, L = {}, rank(W) = {}, cond_1(X) = {}, draws = {}",
                doc["n"],
                doc["l"],
                doc["rank_w"],
                doc["cond_estimate"],
                doc["h_attempts"]
                    .as_u64()
                    .map_or_else(|| "?".into(), |v| (v + 1).to_string()),
            );
        }
    }
    let failed = lines.iter().any(ledger_line_failed);
    println!("verdict: {}", if failed { "FAIL" } else { "PASS" });
    Ok(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn constant_cfg(dir: &Path) -> (Config, OutPaths) {
        let cfg = Config::from_json(
            r#"{
                "map": {"name": "constant", "params": {"c": 0.3}},
                "l": 1, "k": 8,
                "seed_window": [0.3],
                "train_len": 20,
                "activation": {"mode": "tabulated", "h_seed": 11},
                "horizon": 12
            }"#,
        )
        .unwrap();
        (cfg, OutPaths::new(dir))
    }

    #[test]
    fn generate_build_run_report_round_trip() {
        let dir = tempdir().unwrap();
        let (cfg, paths) = constant_cfg(dir.path());
        assert_eq!(cmd_generate(&cfg, &paths).unwrap(), 0);
        assert!(paths.trajectory_csv().exists());
        assert!(paths.resolved_config().exists());

        assert_eq!(cmd_build(&cfg, &paths).unwrap(), 0);
        for p in [
            paths.grid(),
            paths.dictionary(),
            paths.certificate(),
            paths.weights_manifest(),
            paths.weights_bin(),
        ] {
            assert!(p.exists(), "{}", p.display());
        }

        assert_eq!(cmd_run(&cfg, &paths).unwrap(), 0);
        for p in [paths.run_record(), paths.bound_report(), paths.ledger()] {
            assert!(p.exists(), "{}", p.display());
        }
        let lines = artifact::read_ledger(&paths).unwrap();
        assert_eq!(lines.len(), 10);
        assert!(lines.iter().all(|l| l.status == "pass"));

        assert_eq!(cmd_report(&paths).unwrap(), 0);
    }

    #[test]
    fn build_without_generate_is_a_clear_error() {
        let dir = tempdir().unwrap();
        let (cfg, paths) = constant_cfg(dir.path());
        match cmd_build(&cfg, &paths) {
            Err(HarnessError::Artifact(ArtifactError::Io { .. })) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn stale_trajectory_is_refused_by_build() {
        let dir = tempdir().unwrap();
        let (cfg, paths) = constant_cfg(dir.path());
        cmd_generate(&cfg, &paths).unwrap();
        let mut changed = cfg.clone();
        changed.train_len = 21;
        changed.validate().unwrap();
        match cmd_build(&changed, &paths) {
            Err(HarnessError::Artifact(ArtifactError::Incompatible { reason })) => {
                assert!(reason.contains("re-run `generate`"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn corrupted_weights_stop_the_run() {
        let dir = tempdir().unwrap();
        let (cfg, paths) = constant_cfg(dir.path());
        cmd_generate(&cfg, &paths).unwrap();
        cmd_build(&cfg, &paths).unwrap();
        let mut bytes = std::fs::read(paths.weights_bin()).unwrap();
        bytes[20] ^= 0xff;
        std::fs::write(paths.weights_bin(), &bytes).unwrap();
        match cmd_run(&cfg, &paths) {
            Err(HarnessError::Artifact(ArtifactError::ChecksumMismatch { .. })) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn failing_run_exits_one_and_ledger_records_it() {
        let dir = tempdir().unwrap();
        let cfg = Config::from_json(
            r#"{
                "map": {"name": "decay", "params": {"ratio": -0.6}},
                "l": 1, "k": 8,
                "seed_window": [0.9],
                "train_len": 4,
                "activation": {"mode": "tabulated", "h_seed": 0},
                "horizon": 5
            }"#,
        )
        .unwrap();
        let _paths = OutPaths::new(dir.path());
        assert_eq!(cmd_verify(&cfg).unwrap(), 1);
    }

    #[test]
    fn out_dir_resolution_precedence() {
        // Absolute flag wins untouched.
        let abs = Path::new("/tmp/x");
        assert_eq!(
            resolve_out_dir(Some(abs), Some("cfg")),
            PathBuf::from("/tmp/x")
        );
        // Flag beats config; both fall back to "out".
        assert_eq!(
            resolve_out_dir(Some(Path::new("a")), Some("b"))
                .file_name()
                .unwrap(),
            "a"
        );
        assert_eq!(resolve_out_dir(None, Some("b")).file_name().unwrap(), "b");
        assert_eq!(resolve_out_dir(None, None).file_name().unwrap(), "out");
    }
}
