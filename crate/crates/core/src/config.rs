//! Run configuration: one JSON document drives the whole pipeline, so a run
//! is reproducible from its config alone.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rnn::{ActivationRequest, BuildOptions};
use crate::systems::{CertMethod, DelayMap, MIN_SAMPLE_PAIRS};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid JSON in {path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("config field `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapConfig {
    pub name: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ActivationConfig {
    Tabulated {
        #[serde(default)]
        h_seed: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        snap_tolerance: Option<f64>,
    },
    Analytic {
        beta: f64,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum LipschitzConfig {
    #[default]
    Analytic,
    Sampled {
        #[serde(default = "default_n_pairs")]
        n_pairs: usize,
        #[serde(default)]
        seed: u64,
    },
}

fn default_n_pairs() -> usize {
    4096
}

fn default_max_retries() -> u32 {
    64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub map: MapConfig,
    pub l: usize,
    pub k: usize,
    pub seed_window: Vec<f64>,
    pub train_len: usize,
    /// Held-out length; defaults to `horizon`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_len: Option<usize>,
    #[serde(default)]
    pub burn_in: usize,
    #[serde(default)]
    pub jitter_scale: f64,
    #[serde(default)]
    pub grid_seed: u64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    pub activation: ActivationConfig,
    #[serde(default)]
    pub lipschitz: LipschitzConfig,
    pub horizon: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
}

impl Config {
    pub fn from_json(json: &str) -> Result<Self, ConfigError> {
        let cfg: Config = serde_json::from_str(json).map_err(|source| ConfigError::Parse {
            path: "<inline>".into(),
            source,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let cfg: Config = serde_json::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.display().to_string(),
            source,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |field, reason: String| Err(ConfigError::Invalid { field, reason });
        if self.l < 1 {
            return invalid("l", "window length must be >= 1".into());
        }
        if self.k < 2 {
            return invalid("k", format!("grid needs K >= 2, got {}", self.k));
        }
        let map = DelayMap::<f64>::benchmark(&self.map.name, &self.map.params).map_err(|e| {
            ConfigError::Invalid {
                field: "map",
                reason: e.to_string(),
            }
        })?;
        if map.l() != self.l {
            return invalid(
                "l",
                format!(
                    "map `{}` has L = {}, config says {}",
                    map.name(),
                    map.l(),
                    self.l
                ),
            );
        }
        if self.seed_window.len() != self.l {
            return invalid(
                "seed_window",
                format!("need L = {} values, got {}", self.l, self.seed_window.len()),
            );
        }
        if let Some(v) = self.seed_window.iter().find(|v| !(v.abs() <= 1.0)) {
            return invalid("seed_window", format!("value {v} outside [-1, 1]"));
        }
        if self.train_len < self.l + 1 {
            return invalid(
                "train_len",
                format!("need at least L+1 = {}, got {}", self.l + 1, self.train_len),
            );
        }
        if self.horizon < 1 {
            return invalid("horizon", "run horizon must be >= 1".into());
        }
        if self.eval_len_effective() < self.horizon {
            return invalid(
                "eval_len",
                format!(
                    "must cover the horizon {} to score the run, got {}",
                    self.horizon,
                    self.eval_len_effective()
                ),
            );
        }
        let jitter_max = 1.0 / (2.0 * self.k as f64);
        if !self.jitter_scale.is_finite()
            || self.jitter_scale < 0.0
            || self.jitter_scale >= jitter_max
        {
            return invalid(
                "jitter_scale",
                format!(
                    "must lie in [0, {jitter_max}) for K = {}, got {}",
                    self.k, self.jitter_scale
                ),
            );
        }
        match &self.activation {
            ActivationConfig::Tabulated {
                snap_tolerance: Some(tol),
                ..
            } if !(tol.is_finite() && *tol > 0.0) => {
                return invalid(
                    "activation.snap_tolerance",
                    format!("must be a positive finite number, got {tol}"),
                );
            }
            ActivationConfig::Analytic { beta } if !beta.is_finite() => {
                return invalid("activation.beta", format!("must be finite, got {beta}"));
            }
            _ => {}
        }
        if let LipschitzConfig::Sampled { n_pairs, .. } = &self.lipschitz {
            if *n_pairs < MIN_SAMPLE_PAIRS {
                return invalid(
                    "lipschitz.n_pairs",
                    format!("need at least {MIN_SAMPLE_PAIRS} pairs, got {n_pairs}"),
                );
            }
        }
        Ok(())
    }

    pub fn eval_len_effective(&self) -> usize {
        self.eval_len.unwrap_or(self.horizon)
    }

    pub fn build_options(&self) -> BuildOptions {
        let (activation, snap_tolerance) = match &self.activation {
            ActivationConfig::Tabulated {
                h_seed,
                snap_tolerance,
            } => (
                ActivationRequest::Tabulated { h_seed: *h_seed },
                *snap_tolerance,
            ),
            ActivationConfig::Analytic { beta } => {
                (ActivationRequest::Analytic { beta: *beta }, None)
            }
        };
        BuildOptions {
            activation,
            snap_tolerance,
            max_retries: self.max_retries,
        }
    }

    pub fn lipschitz_args(&self) -> (CertMethod, usize, u64) {
        match &self.lipschitz {
            LipschitzConfig::Analytic => (CertMethod::Analytic, 0, 0),
            LipschitzConfig::Sampled { n_pairs, seed } => (CertMethod::Sampled, *n_pairs, *seed),
        }
    }

    /// Stable serialization used for the resolved-config artifact.
    pub fn to_canonical_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }
}
