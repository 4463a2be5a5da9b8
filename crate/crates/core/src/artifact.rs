//! On-disk artifact formats: CSV for series, JSON for structured metadata,
//! one length-prefixed binary for the weight blobs. Readers revalidate what
//! builders certified, so a tampered or stale artifact cannot run.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::codec::Grid;
use crate::dictionary::{Dictionary, Entry, Key};
use crate::linalg::Matrix;
use crate::rnn::{ActivationMode, ActivationSpec, GSet, RunRecord, WeightSet};
use crate::systems::{CertMethod, LipschitzCertificate, Trajectory, TrajectorySource};
use crate::verify::{BoundReport, StageResult, Status};

const BLOB_MAGIC: &[u8; 4] = b"RNNW";

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: invalid JSON: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}:{line}: {reason}")]
    Csv {
        path: String,
        line: usize,
        reason: String,
    },
    #[error("{path}: blob `{name}`: {reason}")]
    Blob {
        path: String,
        name: String,
        reason: String,
    },
    #[error("{path}: sha256 mismatch: manifest says {expected}, file is {got}")]
    ChecksumMismatch {
        path: String,
        expected: String,
        got: String,
    },
    #[error("artifacts disagree: {reason}")]
    Incompatible { reason: String },
    #[error("{path}: failed revalidation: {reason}")]
    Revalidation { path: String, reason: String },
}

/// File layout inside one run directory.
#[derive(Debug, Clone)]
pub struct OutPaths {
    pub dir: PathBuf,
}

impl OutPaths {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        OutPaths { dir: dir.into() }
    }

    pub fn trajectory_csv(&self) -> PathBuf {
        self.dir.join("trajectory.csv")
    }

    pub fn trajectory_meta(&self) -> PathBuf {
        self.dir.join("trajectory_meta.json")
    }

    pub fn grid(&self) -> PathBuf {
        self.dir.join("grid.json")
    }

    pub fn dictionary(&self) -> PathBuf {
        self.dir.join("dictionary.json")
    }

    pub fn certificate(&self) -> PathBuf {
        self.dir.join("certificate.json")
    }

    pub fn weights_manifest(&self) -> PathBuf {
        self.dir.join("weights.json")
    }

    pub fn weights_bin(&self) -> PathBuf {
        self.dir.join("weights.bin")
    }

    pub fn run_record(&self) -> PathBuf {
        self.dir.join("run_record.csv")
    }

    pub fn bound_report(&self) -> PathBuf {
        self.dir.join("bound_report.csv")
    }

    pub fn ledger(&self) -> PathBuf {
        self.dir.join("ledger.jsonl")
    }

    pub fn resolved_config(&self) -> PathBuf {
        self.dir.join("resolved_config.json")
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), ArtifactError> {
    std::fs::write(path, bytes).map_err(|source| ArtifactError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn read_file(path: &Path) -> Result<Vec<u8>, ArtifactError> {
    std::fs::read(path).map_err(|source| ArtifactError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn read_text(path: &Path) -> Result<String, ArtifactError> {
    std::fs::read_to_string(path).map_err(|source| ArtifactError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn to_json_file<T: Serialize>(path: &Path, value: &T) -> Result<(), ArtifactError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| ArtifactError::Json {
        path: path.display().to_string(),
        source,
    })?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

fn from_json_file<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, ArtifactError> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|source| ArtifactError::Json {
        path: path.display().to_string(),
        source,
    })
}

// ---- trajectory ----

#[derive(Debug, Serialize, Deserialize)]
struct TrajectoryMeta {
    map_name: String,
    params: Vec<(String, f64)>,
    seed_window: Vec<f64>,
    train_len: usize,
    eval_len: usize,
    burn_in: usize,
    t_min: i64,
    len: usize,
}

pub fn write_trajectory(paths: &OutPaths, traj: &Trajectory<f64>) -> Result<(), ArtifactError> {
    let mut csv = String::from("t,y\n");
    for (i, v) in traj.values().iter().enumerate() {
        csv.push_str(&format!("{},{v}\n", traj.t_min() + i as i64));
    }
    write_file(&paths.trajectory_csv(), csv.as_bytes())?;
    let s = traj.source();
    to_json_file(
        &paths.trajectory_meta(),
        &TrajectoryMeta {
            map_name: s.map_name.clone(),
            params: s.params.clone(),
            seed_window: s.seed_window.clone(),
            train_len: s.train_len,
            eval_len: s.eval_len,
            burn_in: s.burn_in,
            t_min: traj.t_min(),
            len: traj.values().len(),
        },
    )
}

pub fn read_trajectory(paths: &OutPaths) -> Result<Trajectory<f64>, ArtifactError> {
    let meta: TrajectoryMeta = from_json_file(&paths.trajectory_meta())?;
    let csv_path = paths.trajectory_csv();
    let text = read_text(&csv_path)?;
    let path = csv_path.display().to_string();
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "t,y")) => {}
        other => {
            return Err(ArtifactError::Csv {
                path,
                line: 1,
                reason: format!("expected header `t,y`, got {:?}", other.map(|(_, l)| l)),
            });
        }
    }
    let mut values = Vec::with_capacity(meta.len);
    for (idx, line) in lines {
        let lineno = idx + 1;
        let (t_str, y_str) = line.split_once(',').ok_or_else(|| ArtifactError::Csv {
            path: path.clone(),
            line: lineno,
            reason: "expected two comma-separated fields".into(),
        })?;
        let t: i64 = t_str.parse().map_err(|e| ArtifactError::Csv {
            path: path.clone(),
            line: lineno,
            reason: format!("bad t: {e}"),
        })?;
        if t != meta.t_min + values.len() as i64 {
            return Err(ArtifactError::Csv {
                path: path.clone(),
                line: lineno,
                reason: format!("t = {t} out of sequence"),
            });
        }
        let y: f64 = y_str.parse().map_err(|e| ArtifactError::Csv {
            path: path.clone(),
            line: lineno,
            reason: format!("bad y: {e}"),
        })?;
        values.push(y);
    }
    if values.len() != meta.len {
        return Err(ArtifactError::Csv {
            path,
            line: 0,
            reason: format!("expected {} rows, found {}", meta.len, values.len()),
        });
    }
    let source = TrajectorySource {
        map_name: meta.map_name,
        params: meta.params,
        seed_window: meta.seed_window,
        train_len: meta.train_len,
        eval_len: meta.eval_len,
        burn_in: meta.burn_in,
    };
    Trajectory::from_parts(values, meta.t_min, source).map_err(|e| ArtifactError::Revalidation {
        path: paths.trajectory_csv().display().to_string(),
        reason: e.to_string(),
    })
}

// ---- grid ----

#[derive(Debug, Serialize, Deserialize)]
struct GridDoc {
    k: usize,
    points: Vec<f64>,
    radius_x_k: f64,
    jitter_seed: u64,
    jitter_scale: f64,
    attempts: u32,
    fingerprint: u64,
}

pub fn write_grid(paths: &OutPaths, grid: &Grid<f64>) -> Result<(), ArtifactError> {
    to_json_file(
        &paths.grid(),
        &GridDoc {
            k: grid.k(),
            points: grid.points().to_vec(),
            radius_x_k: grid.radius_x_k(),
            jitter_seed: grid.jitter_seed(),
            jitter_scale: grid.jitter_scale(),
            attempts: grid.attempts(),
            fingerprint: grid.fingerprint(),
        },
    )
}

pub fn read_grid(paths: &OutPaths) -> Result<Grid<f64>, ArtifactError> {
    let doc: GridDoc = from_json_file(&paths.grid())?;
    let path = paths.grid().display().to_string();
    if doc.points.len() != doc.k {
        return Err(ArtifactError::Revalidation {
            path,
            reason: format!("k = {} but {} points", doc.k, doc.points.len()),
        });
    }
    let grid = Grid::from_parts(doc.points, doc.jitter_seed, doc.jitter_scale, doc.attempts)
        .map_err(|e| ArtifactError::Revalidation {
            path: paths.grid().display().to_string(),
            reason: e.to_string(),
        })?;
    if grid.fingerprint() != doc.fingerprint {
        return Err(ArtifactError::Revalidation {
            path: paths.grid().display().to_string(),
            reason: format!(
                "fingerprint {} does not match recorded {}",
                grid.fingerprint(),
                doc.fingerprint
            ),
        });
    }
    if grid.radius_x_k() != doc.radius_x_k {
        return Err(ArtifactError::Revalidation {
            path: paths.grid().display().to_string(),
            reason: format!(
                "recomputed radius_x_k {} does not match recorded {}",
                grid.radius_x_k(),
                doc.radius_x_k
            ),
        });
    }
    Ok(grid)
}

// ---- dictionary ----

#[derive(Debug, Serialize, Deserialize)]
struct EntryDoc {
    lags: Vec<usize>,
    value_index: usize,
    provenance: i64,
}

#[derive(Debug, Serialize, Deserialize)]
struct DictDoc {
    l: usize,
    k: usize,
    grid_ref: u64,
    fingerprint: u64,
    entries: Vec<EntryDoc>,
}

pub fn write_dictionary(paths: &OutPaths, dict: &Dictionary) -> Result<(), ArtifactError> {
    to_json_file(
        &paths.dictionary(),
        &DictDoc {
            l: dict.l(),
            k: dict.k(),
            grid_ref: dict.grid_ref(),
            fingerprint: dict.fingerprint(),
            entries: dict
                .entries()
                .iter()
                .map(|e| EntryDoc {
                    lags: e.key.lags().to_vec(),
                    value_index: e.value_index,
                    provenance: e.provenance,
                })
                .collect(),
        },
    )
}

pub fn read_dictionary(paths: &OutPaths, grid: &Grid<f64>) -> Result<Dictionary, ArtifactError> {
    let doc: DictDoc = from_json_file(&paths.dictionary())?;
    let path = paths.dictionary().display().to_string();
    if doc.grid_ref != grid.fingerprint() {
        return Err(ArtifactError::Incompatible {
            reason: format!(
                "dictionary was built against grid {}, loaded grid is {}",
                doc.grid_ref,
                grid.fingerprint()
            ),
        });
    }
    let entries = doc
        .entries
        .into_iter()
        .map(|e| Entry {
            key: Key::new(e.lags),
            value_index: e.value_index,
            provenance: e.provenance,
        })
        .collect();
    let dict = Dictionary::from_entries(entries, doc.l, doc.k, doc.grid_ref).map_err(|e| {
        ArtifactError::Revalidation {
            path: path.clone(),
            reason: e.to_string(),
        }
    })?;
    if dict.fingerprint() != doc.fingerprint {
        return Err(ArtifactError::Revalidation {
            path,
            reason: format!(
                "fingerprint {} does not match recorded {}",
                dict.fingerprint(),
                doc.fingerprint
            ),
        });
    }
    Ok(dict)
}

// ---- Lipschitz certificate ----

#[derive(Debug, Serialize, Deserialize)]
struct CertDoc {
    e_lambda: f64,
    method: String,
    sample_count: usize,
}

pub fn write_certificate(
    paths: &OutPaths,
    cert: &LipschitzCertificate<f64>,
) -> Result<(), ArtifactError> {
    to_json_file(
        &paths.certificate(),
        &CertDoc {
            e_lambda: cert.e_lambda,
            method: cert.method.to_string(),
            sample_count: cert.sample_count,
        },
    )
}

pub fn read_certificate(paths: &OutPaths) -> Result<LipschitzCertificate<f64>, ArtifactError> {
    let doc: CertDoc = from_json_file(&paths.certificate())?;
    let method = match doc.method.as_str() {
        "analytic" => CertMethod::Analytic,
        "sampled" => CertMethod::Sampled,
        other => {
            return Err(ArtifactError::Revalidation {
                path: paths.certificate().display().to_string(),
                reason: format!("unknown certificate method `{other}`"),
            });
        }
    };
    if !(doc.e_lambda.is_finite() && doc.e_lambda >= 1.0) {
        return Err(ArtifactError::Revalidation {
            path: paths.certificate().display().to_string(),
            reason: format!("e_lambda must be finite and >= 1, got {}", doc.e_lambda),
        });
    }
    Ok(LipschitzCertificate {
        e_lambda: doc.e_lambda,
        method,
        sample_count: doc.sample_count,
    })
}

// ---- weights ----

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
enum ActivationDoc {
    Tabulated { h_seed: u64, snap_tolerance: f64 },
    Analytic { beta: f64 },
}

#[derive(Debug, Serialize, Deserialize, Clone, Copy)]
struct BlobMeta {
    offset: u64,
    rows: u32,
    cols: u32,
}

#[derive(Debug, Serialize, Deserialize)]
struct WeightsDoc {
    n: usize,
    l: usize,
    k: usize,
    activation: ActivationDoc,
    h_attempts: u32,
    cond_estimate: f64,
    rank_w: usize,
    yhat0: f64,
    init_window: Vec<usize>,
    contains_l_at: usize,
    dict_ref: u64,
    blobs: BTreeMap<String, BlobMeta>,
    bin_sha256: String,
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn push_blob(
    buf: &mut Vec<u8>,
    blobs: &mut BTreeMap<String, BlobMeta>,
    name: &str,
    rows: usize,
    cols: usize,
    data: &[f64],
) {
    assert_eq!(rows * cols, data.len(), "blob {name} shape");
    blobs.insert(
        name.to_string(),
        BlobMeta {
            offset: buf.len() as u64,
            rows: rows as u32,
            cols: cols as u32,
        },
    );
    buf.extend_from_slice(BLOB_MAGIC);
    buf.extend_from_slice(&(rows as u32).to_le_bytes());
    buf.extend_from_slice(&(cols as u32).to_le_bytes());
    for v in data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

fn read_blob(
    bytes: &[u8],
    meta: &BlobMeta,
    path: &str,
    name: &str,
) -> Result<Vec<f64>, ArtifactError> {
    let blob_err = |reason: String| ArtifactError::Blob {
        path: path.to_string(),
        name: name.to_string(),
        reason,
    };
    let start = meta.offset as usize;
    let count = meta.rows as usize * meta.cols as usize;
    let end = start + 12 + count * 8;
    if end > bytes.len() {
        return Err(blob_err(format!(
            "extends to byte {end} but file has {}",
            bytes.len()
        )));
    }
    let body = &bytes[start..end];
    if &body[..4] != BLOB_MAGIC {
        return Err(blob_err("bad magic".into()));
    }
    let rows = u32::from_le_bytes(body[4..8].try_into().unwrap());
    let cols = u32::from_le_bytes(body[8..12].try_into().unwrap());
    if rows != meta.rows || cols != meta.cols {
        return Err(blob_err(format!(
            "header says {rows}x{cols}, manifest says {}x{}",
            meta.rows, meta.cols
        )));
    }
    Ok(body[12..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

pub fn write_weights(
    paths: &OutPaths,
    ws: &WeightSet<f64>,
    dict: &Dictionary,
) -> Result<(), ArtifactError> {
    if ws.dict_ref != dict.fingerprint() {
        return Err(ArtifactError::Incompatible {
            reason: format!(
                "weights were built against dictionary {}, asked to write against {}",
                ws.dict_ref,
                dict.fingerprint()
            ),
        });
    }
    let n = ws.n();
    let mut buf = Vec::new();
    let mut blobs = BTreeMap::new();
    push_blob(&mut buf, &mut blobs, "x", n, n, ws.x.data());
    push_blob(&mut buf, &mut blobs, "w", n, n, ws.w.data());
    push_blob(&mut buf, &mut blobs, "w_in", 1, n, &ws.w_in);
    push_blob(&mut buf, &mut blobs, "w_out", 1, n, &ws.w_out);
    push_blob(&mut buf, &mut blobs, "r0", 1, n, &ws.r0);
    push_blob(
        &mut buf,
        &mut blobs,
        "gammas",
        1,
        ws.gset.len(),
        ws.gset.gammas(),
    );
    let activation = match &ws.activation.mode {
        ActivationMode::Tabulated { h_seed, table } => {
            push_blob(&mut buf, &mut blobs, "h_table", 1, table.len(), table);
            ActivationDoc::Tabulated {
                h_seed: *h_seed,
                snap_tolerance: ws
                    .activation
                    .snap_tolerance
                    .expect("snap tolerance is resolved at build"),
            }
        }
        ActivationMode::Analytic { beta } => ActivationDoc::Analytic { beta: *beta },
    };
    write_file(&paths.weights_bin(), &buf)?;
    to_json_file(
        &paths.weights_manifest(),
        &WeightsDoc {
            n,
            l: ws.l(),
            k: dict.k(),
            activation,
            h_attempts: ws.h_attempts,
            cond_estimate: ws.cond_estimate,
            rank_w: ws.rank_w,
            yhat0: ws.yhat0,
            init_window: ws.init_window.clone(),
            contains_l_at: ws.gset.contains_l_at(),
            dict_ref: ws.dict_ref,
            blobs,
            bin_sha256: sha256_hex(&buf),
        },
    )
}

pub fn read_weights(paths: &OutPaths, dict: &Dictionary) -> Result<WeightSet<f64>, ArtifactError> {
    let doc: WeightsDoc = from_json_file(&paths.weights_manifest())?;
    let bin_path = paths.weights_bin();
    let bytes = read_file(&bin_path)?;
    let got = sha256_hex(&bytes);
    if got != doc.bin_sha256 {
        return Err(ArtifactError::ChecksumMismatch {
            path: bin_path.display().to_string(),
            expected: doc.bin_sha256,
            got,
        });
    }
    if doc.dict_ref != dict.fingerprint() {
        return Err(ArtifactError::Incompatible {
            reason: format!(
                "weights were built against dictionary {}, loaded dictionary is {}",
                doc.dict_ref,
                dict.fingerprint()
            ),
        });
    }
    let path = bin_path.display().to_string();
    let n = doc.n;
    let reval = |reason: String| ArtifactError::Revalidation {
        path: paths.weights_manifest().display().to_string(),
        reason,
    };
    if n != dict.n() || doc.l != dict.l() || doc.k != dict.k() {
        return Err(reval(format!(
            "manifest says N = {n}, L = {}, K = {}; dictionary has N = {}, L = {}, K = {}",
            doc.l,
            doc.k,
            dict.n(),
            dict.l(),
            dict.k()
        )));
    }
    if doc.init_window.len() != doc.l + 1 {
        return Err(reval(format!(
            "init_window has {} indices, want L+1 = {}",
            doc.init_window.len(),
            doc.l + 1
        )));
    }
    if let Some(&bad) = doc.init_window.iter().find(|&&i| i < 1 || i > dict.k()) {
        return Err(reval(format!(
            "init_window index {bad} outside 1..={}",
            dict.k()
        )));
    }

    let fetch = |name: &str, rows: usize, cols: usize| -> Result<Vec<f64>, ArtifactError> {
        let meta = doc.blobs.get(name).ok_or_else(|| ArtifactError::Blob {
            path: path.clone(),
            name: name.to_string(),
            reason: "missing from manifest".into(),
        })?;
        if meta.rows as usize != rows || meta.cols as usize != cols {
            return Err(ArtifactError::Blob {
                path: path.clone(),
                name: name.to_string(),
                reason: format!(
                    "expected {rows}x{cols}, manifest says {}x{}",
                    meta.rows, meta.cols
                ),
            });
        }
        read_blob(&bytes, meta, &path, name)
    };

    let x = Matrix::from_raw(n, n, fetch("x", n, n)?).expect("shape checked");
    let w = Matrix::from_raw(n, n, fetch("w", n, n)?).expect("shape checked");
    let w_in = fetch("w_in", 1, n)?;
    let w_out = fetch("w_out", 1, n)?;
    let r0 = fetch("r0", 1, n)?;
    let gammas_meta = *doc.blobs.get("gammas").ok_or_else(|| ArtifactError::Blob {
        path: path.clone(),
        name: "gammas".into(),
        reason: "missing from manifest".into(),
    })?;
    let gammas = read_blob(&bytes, &gammas_meta, &path, "gammas")?;
    if gammas_meta.rows != 1 || gammas.is_empty() {
        return Err(reval("gammas must be a nonempty row vector".into()));
    }
    if !gammas.windows(2).all(|w| w[1] > w[0]) {
        return Err(reval("gammas must be strictly increasing".into()));
    }
    if doc.contains_l_at >= gammas.len() {
        return Err(reval(format!(
            "contains_l_at = {} outside gammas (len {})",
            doc.contains_l_at,
            gammas.len()
        )));
    }
    let m = gammas.len();
    let gset = GSet::new(gammas, doc.contains_l_at);

    let activation = match &doc.activation {
        ActivationDoc::Tabulated {
            h_seed,
            snap_tolerance,
        } => {
            let table = fetch("h_table", 1, m)?;
            if !(snap_tolerance.is_finite() && *snap_tolerance > 0.0) {
                return Err(reval(format!(
                    "snap_tolerance must be positive and finite, got {snap_tolerance}"
                )));
            }
            ActivationSpec {
                mode: ActivationMode::Tabulated {
                    h_seed: *h_seed,
                    table,
                },
                snap_tolerance: Some(*snap_tolerance),
            }
        }
        ActivationDoc::Analytic { beta } => ActivationSpec {
            mode: ActivationMode::Analytic { beta: *beta },
            snap_tolerance: None,
        },
    };

    Ok(WeightSet {
        x,
        w,
        w_in,
        w_out,
        r0,
        yhat0: doc.yhat0,
        init_window: doc.init_window,
        cond_estimate: doc.cond_estimate,
        rank_w: doc.rank_w,
        activation,
        gset,
        h_attempts: doc.h_attempts,
        dict_ref: doc.dict_ref,
    })
}

// ---- run record, bound report, ledger ----

pub fn write_run_record(paths: &OutPaths, rec: &RunRecord<f64>) -> Result<(), ArtifactError> {
    let mut csv = String::from("t,yhat,n_t,onehot_residual,drift\n");
    for row in &rec.rows {
        let n_t = row.n_t.map(|n| n.to_string()).unwrap_or_default();
        let onehot = row
            .onehot_residual
            .map(|r| r.to_string())
            .unwrap_or_default();
        csv.push_str(&format!(
            "{},{},{n_t},{onehot},{}\n",
            row.t, row.yhat, row.drift
        ));
    }
    write_file(&paths.run_record(), csv.as_bytes())
}

pub fn write_bound_report(paths: &OutPaths, rep: &BoundReport<f64>) -> Result<(), ArtifactError> {
    let mut csv = String::from("t,y,ystar,yhat,abs_err,bound,slack,active\n");
    for r in &rep.rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.t, r.y, r.ystar, r.yhat, r.abs_err, r.bound, r.slack, r.active
        ));
    }
    write_file(&paths.bound_report(), csv.as_bytes())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerLine {
    pub invariant: String,
    pub status: String,
    pub detail: String,
}

pub fn write_ledger(paths: &OutPaths, stages: &[StageResult]) -> Result<(), ArtifactError> {
    let mut text = String::new();
    for s in stages {
        let line = serde_json::to_string(&LedgerLine {
            invariant: s.name.to_string(),
            status: s.status.to_string(),
            detail: s.detail.clone(),
        })
        .expect("ledger line serializes");
        text.push_str(&line);
        text.push('\n');
    }
    write_file(&paths.ledger(), text.as_bytes())
}

pub fn read_ledger(paths: &OutPaths) -> Result<Vec<LedgerLine>, ArtifactError> {
    let path = paths.ledger();
    let text = read_text(&path)?;
    text.lines()
        .map(|line| {
            serde_json::from_str(line).map_err(|source| ArtifactError::Json {
                path: path.display().to_string(),
                source,
            })
        })
        .collect()
}

/// True when `status` parses as a failing ledger status.
pub fn ledger_line_failed(line: &LedgerLine) -> bool {
    line.status == Status::Fail.to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::build_grid;
    use crate::rnn::{build_weights, ActivationRequest, BuildOptions};
    use crate::systems::{generate, DelayMap};
    use tempfile::tempdir;

    fn golden_setup() -> (
        OutPaths,
        tempfile::TempDir,
        Trajectory<f64>,
        Grid<f64>,
        Dictionary,
        WeightSet<f64>,
    ) {
        let dir = tempdir().unwrap();
        let paths = OutPaths::new(dir.path());
        let map =
            DelayMap::<f64>::benchmark("cycle", &[("p".to_string(), 2.0)].into_iter().collect())
                .unwrap();
        let traj = generate(&map, &[0.3, -0.3], 9, 8, 0).unwrap();
        let grid = build_grid(4, &traj.head(3), 0.0, 1, 8).unwrap();
        let q = crate::codec::quantize_series(&traj, &grid, traj.t_min(), 0).unwrap();
        let dict = crate::dictionary::build_dictionary(&q, 2).unwrap();
        let ws = build_weights(
            &dict,
            &grid,
            &[3, 2, 3],
            &BuildOptions {
                activation: ActivationRequest::Tabulated { h_seed: 1 },
                snap_tolerance: None,
                max_retries: 8,
            },
        )
        .unwrap();
        (paths, dir, traj, grid, dict, ws)
    }

    #[test]
    fn trajectory_round_trips_bit_exactly() {
        let (paths, _dir, traj, ..) = golden_setup();
        write_trajectory(&paths, &traj).unwrap();
        let back = read_trajectory(&paths).unwrap();
        assert_eq!(traj, back);
    }

    #[test]
    fn grid_and_dictionary_round_trip_with_revalidation() {
        let (paths, _dir, _traj, grid, dict, _ws) = golden_setup();
        write_grid(&paths, &grid).unwrap();
        write_dictionary(&paths, &dict).unwrap();
        let g = read_grid(&paths).unwrap();
        assert_eq!(grid, g);
        let d = read_dictionary(&paths, &g).unwrap();
        assert_eq!(dict, d);

        // A grid that does not match the dictionary's provenance is refused.
        let other = build_grid::<f64>(4, &[0.3], 1e-3, 9, 8).unwrap();
        assert!(matches!(
            read_dictionary(&paths, &other),
            Err(ArtifactError::Incompatible { .. })
        ));
    }

    #[test]
    fn weights_round_trip_bit_exactly() {
        let (paths, _dir, _traj, _grid, dict, ws) = golden_setup();
        write_weights(&paths, &ws, &dict).unwrap();
        let back = read_weights(&paths, &dict).unwrap();
        assert_eq!(ws, back);
    }

    #[test]
    fn corrupted_weights_bin_is_rejected_by_checksum() {
        let (paths, _dir, _traj, _grid, dict, ws) = golden_setup();
        write_weights(&paths, &ws, &dict).unwrap();
        let mut bytes = std::fs::read(paths.weights_bin()).unwrap();
        let last = bytes.len() - 1;
        bytes[last] ^= 1;
        std::fs::write(paths.weights_bin(), &bytes).unwrap();
        assert!(matches!(
            read_weights(&paths, &dict),
            Err(ArtifactError::ChecksumMismatch { .. })
        ));
    }

    #[test]
    fn weights_for_a_different_dictionary_are_refused() {
        let (paths, _dir, traj, grid, dict, ws) = golden_setup();
        write_weights(&paths, &ws, &dict).unwrap();
        let q = crate::codec::quantize_series(&traj, &grid, traj.t_min(), -1).unwrap();
        let other = crate::dictionary::build_dictionary(
            &crate::codec::QuantizedSeries::from_parts(
                q.indices().to_vec(),
                q.t_min() + 1,
                q.k(),
                q.grid_ref(),
            ),
            2,
        )
        .unwrap();
        assert!(matches!(
            read_weights(&paths, &other),
            Err(ArtifactError::Incompatible { .. })
        ));
        // The same mismatch is caught on the write side before anything hits disk.
        assert!(matches!(
            write_weights(&paths, &ws, &other),
            Err(ArtifactError::Incompatible { .. })
        ));
    }

    #[test]
    fn writers_are_byte_deterministic() {
        let (paths, _dir, traj, grid, dict, ws) = golden_setup();
        write_trajectory(&paths, &traj).unwrap();
        write_grid(&paths, &grid).unwrap();
        write_dictionary(&paths, &dict).unwrap();
        write_weights(&paths, &ws, &dict).unwrap();
        let snapshot: Vec<Vec<u8>> = [
            paths.trajectory_csv(),
            paths.trajectory_meta(),
            paths.grid(),
            paths.dictionary(),
            paths.weights_manifest(),
            paths.weights_bin(),
        ]
        .iter()
        .map(|p| std::fs::read(p).unwrap())
        .collect();
        write_trajectory(&paths, &traj).unwrap();
        write_grid(&paths, &grid).unwrap();
        write_dictionary(&paths, &dict).unwrap();
        write_weights(&paths, &ws, &dict).unwrap();
        let again: Vec<Vec<u8>> = [
            paths.trajectory_csv(),
            paths.trajectory_meta(),
            paths.grid(),
            paths.dictionary(),
            paths.weights_manifest(),
            paths.weights_bin(),
        ]
        .iter()
        .map(|p| std::fs::read(p).unwrap())
        .collect();
        assert_eq!(snapshot, again);
    }

    #[test]
    fn ledger_round_trips_and_flags_failures() {
        let dir = tempdir().unwrap();
        let paths = OutPaths::new(dir.path());
        let stages = vec![
            StageResult {
                name: "closure",
                status: Status::Fail,
                detail: "entry 1 -> (4)".into(),
            },
            StageResult {
                name: "genericity",
                status: Status::Pass,
                detail: "N = 3".into(),
            },
        ];
        write_ledger(&paths, &stages).unwrap();
        let lines = read_ledger(&paths).unwrap();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0].invariant, "closure");
        assert!(ledger_line_failed(&lines[0]));
        assert!(!ledger_line_failed(&lines[1]));
    }

    #[test]
    fn run_and_bound_csvs_have_the_documented_headers() {
        let (paths, _dir, traj, grid, dict, ws) = golden_setup();
        let rec = crate::rnn::run(&ws, &dict, &grid, 5).unwrap();
        write_run_record(&paths, &rec).unwrap();
        let text = std::fs::read_to_string(paths.run_record()).unwrap();
        assert!(text.starts_with("t,yhat,n_t,onehot_residual,drift\n"));
        assert_eq!(text.lines().count(), 7);

        let cert = crate::systems::lipschitz(
            &DelayMap::<f64>::benchmark("cycle", &[("p".to_string(), 2.0)].into_iter().collect())
                .unwrap(),
            CertMethod::Analytic,
            0,
            0,
        )
        .unwrap();
        let init = ws.init_window.clone();
        let ystar = crate::dictionary::generate_ystar(&dict, &grid, &init, 5).unwrap();
        let rep = crate::verify::check_bound(&traj, &rec, &grid, &cert, &ystar, 2);
        write_bound_report(&paths, &rep).unwrap();
        let text = std::fs::read_to_string(paths.bound_report()).unwrap();
        assert!(text.starts_with("t,y,ystar,yhat,abs_err,bound,slack,active\n"));
        assert_eq!(text.lines().count(), 7);
    }
}
