//! Run configuration, loaded from TOML.

use std::path::{Path, PathBuf};

use chemoblow_core::initial_data::lp_exponent_bound;
use chemoblow_core::{ClassThresholds, DriveOptions, GridSpec, Params, StepControl};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(String),
    #[error("{0}")]
    Invalid(String),
    #[error("unknown preset `{0}` (expected subcritical3d, supercritical3d or steady)")]
    UnknownPreset(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Full,
    Reduced,
    Compare,
}

/// Initial data. `Constant` may carry a cosine ripple of relative size
/// `ripple` on the density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialData {
    Constant {
        u: f64,
        v: f64,
        w: f64,
        #[serde(default)]
        ripple: f64,
    },
    Bump {
        mass: f64,
        sigma: f64,
        v: f64,
        w: f64,
    },
    /// CSV with columns `r,u,v,w` on the configured grid.
    File { path: PathBuf },
}

impl Default for InitialData {
    fn default() -> Self {
        InitialData::Constant {
            u: 1.0,
            v: 1.0,
            w: 1.0,
            ripple: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    pub mass: f64,
    pub a_bound: f64,
    pub k: f64,
    pub eps: f64,
    #[serde(default = "default_p")]
    pub p: f64,
}

fn default_p() -> f64 {
    1.1
}

impl Thresholds {
    pub fn class(&self) -> ClassThresholds {
        ClassThresholds {
            mass: self.mass,
            a_bound: self.a_bound,
            k: self.k,
        }
    }
}

/// Axes of a parameter sweep. An absent axis keeps the base value; an empty
/// list makes the sweep empty.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepAxes {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chi: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub xi: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mass: Option<Vec<f64>>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub mode: Mode,
    pub params: Params,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub control: StepControl,
    #[serde(default)]
    pub initial: InitialData,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thresholds: Option<Thresholds>,
    /// When present, the initial data is first pushed into the blow-up class.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drive: Option<DriveOptions>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    /// Write a snapshot every this many accepted steps; 0 keeps only the
    /// first and last state.
    #[serde(default)]
    pub snapshot_every: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepAxes>,
}

/// A validation failure pinned to a config key.
struct KeyError {
    table: &'static str,
    key: &'static str,
    message: String,
}

fn key_error(table: &'static str, key: &'static str, message: impl Into<String>) -> KeyError {
    KeyError {
        table,
        key,
        message: message.into(),
    }
}

impl KeyError {
    fn name(&self) -> String {
        match (self.table.is_empty(), self.key.is_empty()) {
            (true, _) => self.key.to_string(),
            (false, true) => self.table.to_string(),
            (false, false) => format!("{}.{}", self.table, self.key),
        }
    }
}

/// 1-based line where `key` is assigned inside `[table]` (`""` is the root).
pub fn line_of(source: &str, table: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    for (i, raw) in source.lines().enumerate() {
        let line = raw.trim();
        if line.starts_with('[') {
            current = line
                .trim_matches(|c| c == '[' || c == ']')
                .trim()
                .to_string();
            if current == table && key.is_empty() {
                return Some(i + 1);
            }
            continue;
        }
        if current != table {
            continue;
        }
        if let Some(rest) = line.strip_prefix(key) {
            if rest.trim_start().starts_with('=') {
                return Some(i + 1);
            }
        }
    }
    None
}

impl RunConfig {
    pub fn from_toml_str(source: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig =
            toml::from_str(source).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate_keys().map_err(|e| {
            let location = line_of(source, e.table, e.key)
                .or_else(|| line_of(source, e.table, ""))
                .map(|l| format!("line {l}: "))
                .unwrap_or_default();
            ConfigError::Invalid(format!("{location}{}: {}", e.name(), e.message))
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let source = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_toml_str(&source).map_err(|e| match e {
            ConfigError::Parse(m) | ConfigError::Invalid(m) => {
                ConfigError::Invalid(format!("{}: {m}", path.display()))
            }
            other => other,
        })?;
        // Relative data files are resolved next to the config.
        if let InitialData::File { path: data } = &mut cfg.initial {
            if data.is_relative() {
                if let Some(dir) = path.parent() {
                    *data = dir.join(&*data);
                }
            }
        }
        if let InitialData::File { path: data } = &cfg.initial {
            if !data.exists() {
                let line = line_of(&source, "initial", "path")
                    .map(|l| format!("line {l}: "))
                    .unwrap_or_default();
                return Err(ConfigError::Invalid(format!(
                    "{}: {line}initial.path: {} does not exist",
                    path.display(),
                    data.display()
                )));
            }
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always representable in TOML")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.validate_keys()
            .map_err(|e| ConfigError::Invalid(format!("{}: {}", e.name(), e.message)))
    }

    fn validate_keys(&self) -> Result<(), KeyError> {
        let p = &self.params;
        p.validate()
            .map_err(|e| key_error("params", "chi", e.to_string()))?;
        if self.mode == Mode::Compare {
            if p.beta != p.delta {
                return Err(key_error(
                    "params",
                    "delta",
                    format!(
                        "compare mode needs beta = delta (got {} and {}); the system does not reduce otherwise",
                        p.beta, p.delta
                    ),
                ));
            }
        } else if p.coupling() <= 0.0 {
            return Err(key_error(
                "params",
                "chi",
                format!(
                    "attraction must dominate, chi*alpha > xi*gamma (got {} <= {})",
                    p.chi * p.alpha,
                    p.xi * p.gamma
                ),
            ));
        }
        if self.mode == Mode::Reduced && p.beta != p.delta {
            return Err(key_error(
                "params",
                "delta",
                "reduced mode needs beta = delta",
            ));
        }
        self.grid
            .build()
            .map_err(|e| key_error("grid", "cells", e.to_string()))?;
        self.control
            .validate()
            .map_err(|e| key_error("control", "dt_init", e.to_string()))?;
        self.validate_initial()?;
        if let Some(th) = &self.thresholds {
            let bound = lp_exponent_bound(self.grid.dim);
            if !(th.p > 1.0 && th.p < bound) {
                return Err(key_error(
                    "thresholds",
                    "p",
                    format!(
                        "must lie in (1, {bound}) for n = {}, got {}",
                        self.grid.dim, th.p
                    ),
                ));
            }
            if !(th.mass > 0.0 && th.a_bound > 0.0 && th.eps > 0.0) {
                return Err(key_error(
                    "thresholds",
                    "mass",
                    "mass, a_bound and eps must be > 0",
                ));
            }
            if !th.k.is_finite() {
                return Err(key_error("thresholds", "k", "must be finite"));
            }
        }
        if let Some(opts) = &self.drive {
            if self.thresholds.is_none() {
                return Err(key_error("drive", "", "needs a [thresholds] table"));
            }
            opts.validate(self.grid.dim)
                .map_err(|e| key_error("drive", "ladder_ratio", e.to_string()))?;
        }
        if let Some(sweep) = &self.sweep {
            if sweep.sigma.is_some() && !matches!(self.initial, InitialData::Bump { .. }) {
                return Err(key_error("sweep", "sigma", "needs initial.kind = \"bump\""));
            }
            if sweep.mass.is_some() && matches!(self.initial, InitialData::File { .. }) {
                return Err(key_error("sweep", "mass", "cannot rescale file data"));
            }
        }
        Ok(())
    }

    fn validate_initial(&self) -> Result<(), KeyError> {
        let positive = |key, x: f64| {
            if x.is_finite() && x >= 0.0 {
                Ok(())
            } else {
                Err(key_error(
                    "initial",
                    key,
                    format!("must be finite and >= 0, got {x}"),
                ))
            }
        };
        match &self.initial {
            InitialData::Constant { u, v, w, ripple } => {
                positive("u", *u)?;
                positive("v", *v)?;
                positive("w", *w)?;
                if !(ripple.abs() <= 1.0) {
                    return Err(key_error("initial", "ripple", "must lie in [-1, 1]"));
                }
            }
            InitialData::Bump { mass, sigma, v, w } => {
                positive("mass", *mass)?;
                positive("v", *v)?;
                positive("w", *w)?;
                if !(*sigma > 0.0) {
                    return Err(key_error("initial", "sigma", "must be > 0"));
                }
            }
            InitialData::File { .. } => {}
        }
        Ok(())
    }

    pub fn preset(name: &str) -> Result<Self, ConfigError> {
        let base = RunConfig {
            mode: Mode::Full,
            params: Params::new(2.0, 1.0),
            grid: GridSpec::default(),
            control: StepControl::default(),
            initial: InitialData::default(),
            thresholds: None,
            drive: None,
            output_dir: default_output_dir(),
            seed: 0,
            snapshot_every: 0,
            sweep: None,
        };
        let cfg = match name {
            "subcritical3d" => RunConfig {
                initial: InitialData::Constant {
                    u: 1.0,
                    v: 1.0,
                    w: 0.5,
                    ripple: 0.5,
                },
                snapshot_every: 500,
                ..base
            },
            "supercritical3d" => {
                let mass = 60.0;
                let grid = GridSpec {
                    cells: 512,
                    ..GridSpec::default()
                };
                let volume = grid.build().expect("preset grid is valid").ball_volume();
                RunConfig {
                    grid,
                    control: StepControl {
                        t_end: 5.0,
                        ..StepControl::default()
                    },
                    initial: InitialData::Constant {
                        u: mass / volume,
                        v: 1.0,
                        w: 1.0,
                        ripple: 0.0,
                    },
                    thresholds: Some(Thresholds {
                        mass,
                        a_bound: 100.0,
                        k: 10.0,
                        eps: 60.0,
                        p: default_p(),
                    }),
                    drive: Some(DriveOptions::default()),
                    snapshot_every: 2000,
                    ..base
                }
            }
            "steady" => RunConfig {
                grid: GridSpec {
                    cells: 64,
                    ..GridSpec::default()
                },
                ..base
            },
            other => return Err(ConfigError::UnknownPreset(other.to_string())),
        };
        Ok(cfg)
    }
}
