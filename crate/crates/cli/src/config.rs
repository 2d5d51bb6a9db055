//! Run configuration: a single strict JSON document.

use std::fmt;
use std::path::PathBuf;

use serde::de::{self, Deserializer, Visitor};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use sloppy_core::equilibrium::StateSpec;
use sloppy_core::fim::KernelOptions;
use sloppy_core::models::Boundary;

/// Validation failure tagged with the JSON path it refers to.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() || self.path == "." {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{}: {}", self.path, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryConfig {
    Open,
    Periodic,
}

impl From<BoundaryConfig> for Boundary {
    fn from(b: BoundaryConfig) -> Self {
        match b {
            BoundaryConfig::Open => Boundary::Open,
            BoundaryConfig::Periodic => Boundary::Periodic,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", deny_unknown_fields)]
pub enum ModelConfig {
    #[serde(rename = "tfim_1d")]
    Tfim1d {
        n: usize,
        #[serde(rename = "B0")]
        b0: f64,
        #[serde(rename = "J0")]
        j0: f64,
        boundary: BoundaryConfig,
    },
    #[serde(rename = "tfim_2d")]
    Tfim2d {
        rows: usize,
        cols: usize,
        #[serde(rename = "B0")]
        b0: f64,
        #[serde(rename = "J0")]
        j0: f64,
    },
    #[serde(rename = "hubbard_2d")]
    Hubbard2d {
        rows: usize,
        cols: usize,
        t0: f64,
        #[serde(rename = "U0")]
        u0: f64,
        n_up: usize,
        n_down: usize,
        boundary: BoundaryConfig,
    },
    #[serde(rename = "heisenberg_j1j2")]
    HeisenbergJ1J2 {
        rows: usize,
        cols: usize,
        #[serde(rename = "J0")]
        j0: f64,
        #[serde(rename = "K0")]
        k0: f64,
    },
    #[serde(rename = "random_tfim")]
    RandomTfim {
        n: usize,
        #[serde(rename = "B0")]
        b0: f64,
        #[serde(rename = "J0")]
        j0: f64,
        sigma: f64,
        seed: u64,
    },
}

impl ModelConfig {
    pub fn name(&self) -> &'static str {
        match self {
            ModelConfig::Tfim1d { .. } => "tfim_1d",
            ModelConfig::Tfim2d { .. } => "tfim_2d",
            ModelConfig::Hubbard2d { .. } => "hubbard_2d",
            ModelConfig::HeisenbergJ1J2 { .. } => "heisenberg_j1j2",
            ModelConfig::RandomTfim { .. } => "random_tfim",
        }
    }

    pub fn n_sites(&self) -> usize {
        match *self {
            ModelConfig::Tfim1d { n, .. } | ModelConfig::RandomTfim { n, .. } => n,
            ModelConfig::Tfim2d { rows, cols, .. }
            | ModelConfig::Hubbard2d { rows, cols, .. }
            | ModelConfig::HeisenbergJ1J2 { rows, cols, .. } => rows * cols,
        }
    }

    pub fn is_spin_model(&self) -> bool {
        !matches!(self, ModelConfig::Hubbard2d { .. })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", deny_unknown_fields)]
pub enum ObservableConfig {
    #[serde(rename = "S_z")]
    TotalSz,
    #[serde(rename = "C_z")]
    Zz { i: usize, j: usize },
    #[serde(rename = "D")]
    DoubleOccupancy,
    #[serde(rename = "M_s")]
    StaggeredMagnetization,
}

impl fmt::Display for ObservableConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::TotalSz => f.write_str("S_z"),
            Self::Zz { i, j } => write!(f, "C_z({i},{j})"),
            Self::DoubleOccupancy => f.write_str("D"),
            Self::StaggeredMagnetization => f.write_str("M_s"),
        }
    }
}

/// `"ground"` or an inverse temperature.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StateConfig {
    Ground,
    Thermal(f64),
}

impl From<StateConfig> for StateSpec {
    fn from(s: StateConfig) -> Self {
        match s {
            StateConfig::Ground => StateSpec::Ground,
            StateConfig::Thermal(beta) => StateSpec::Thermal { beta },
        }
    }
}

impl Serialize for StateConfig {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            StateConfig::Ground => s.serialize_str("ground"),
            StateConfig::Thermal(beta) => s.serialize_f64(*beta),
        }
    }
}

impl<'de> Deserialize<'de> for StateConfig {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = StateConfig;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("\"ground\" or an inverse temperature")
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<StateConfig, E> {
                if v == "ground" {
                    Ok(StateConfig::Ground)
                } else {
                    Err(E::invalid_value(de::Unexpected::Str(v), &self))
                }
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<StateConfig, E> {
                Ok(StateConfig::Thermal(v))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<StateConfig, E> {
                Ok(StateConfig::Thermal(v as f64))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<StateConfig, E> {
                Ok(StateConfig::Thermal(v as f64))
            }
        }
        d.deserialize_any(V)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            start: 0.05,
            stop: 1.0,
            points: 40,
        }
    }
}

impl GridConfig {
    /// Evenly spaced values from `start` to `stop` inclusive.
    pub fn values(&self) -> Vec<f64> {
        match self.points {
            0 => Vec::new(),
            1 => vec![self.start],
            p => (0..p)
                .map(|k| {
                    if k == p - 1 {
                        self.stop
                    } else {
                        self.start + (self.stop - self.start) * k as f64 / (p - 1) as f64
                    }
                })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub parameter: String,
    #[serde(default)]
    pub grid: GridConfig,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    #[default]
    Dense,
    Freefermion,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub path: PathBuf,
    #[serde(default)]
    pub format: Format,
}

/// Overrides of the thermal-derivative kernel, mainly for mutation checks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    #[serde(default = "one")]
    pub diagonal_factor: f64,
    #[serde(default = "default_limit")]
    pub limit_threshold: f64,
}

fn one() -> f64 {
    1.0
}

fn default_limit() -> f64 {
    KernelOptions::default().limit_threshold
}

impl From<&KernelConfig> for KernelOptions {
    fn from(k: &KernelConfig) -> Self {
        KernelOptions {
            diagonal_factor: k.diagonal_factor,
            limit_threshold: k.limit_threshold,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub observable: ObservableConfig,
    pub state: StateConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub engine: Engine,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelConfig>,
}

const INTEGER_FIELDS: [&str; 6] = ["n", "rows", "cols", "n_up", "n_down", "seed"];

impl RunConfig {
    /// Parses and validates a configuration document.
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            ConfigError::new(path, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn kernel_options(&self) -> KernelOptions {
        self.kernel.as_ref().map(KernelOptions::from).unwrap_or_default()
    }

    pub fn state_spec(&self) -> StateSpec {
        self.state.into()
    }

    /// Names of the scalar settings a sweep may vary.
    pub fn sweepable_parameters(&self) -> Vec<String> {
        let mut names: Vec<String> = match serde_json::to_value(&self.model) {
            Ok(Value::Object(map)) => map
                .into_iter()
                .filter(|(_, v)| v.is_number())
                .map(|(k, _)| k)
                .collect(),
            _ => Vec::new(),
        };
        if matches!(self.state, StateConfig::Thermal(_)) {
            names.push("beta".into());
        }
        names.sort();
        names
    }

    /// Copy of this configuration with one sweepable setting replaced.
    pub fn with_parameter(&self, name: &str, value: f64) -> Result<Self, ConfigError> {
        let mut out = self.clone();
        let path = format!("sweep.parameter({name})");
        if name == "beta" {
            if !matches!(self.state, StateConfig::Thermal(_)) {
                return Err(ConfigError::new(path, "beta can only be swept for thermal states"));
            }
            out.state = StateConfig::Thermal(value);
        } else {
            let mut model = serde_json::to_value(&self.model).expect("model serializes");
            let slot = model
                .get_mut(name)
                .filter(|v| v.is_number())
                .ok_or_else(|| ConfigError::new(&path, format!("model {} has no parameter {name}", self.model.name())))?;
            *slot = if INTEGER_FIELDS.contains(&name) {
                if value.fract() != 0.0 || value < 0.0 || !value.is_finite() {
                    return Err(ConfigError::new(path, format!("{name} needs a non-negative integer, got {value}")));
                }
                Value::from(value as u64)
            } else {
                Value::from(value)
            };
            out.model = serde_json::from_value(model).map_err(|e| ConfigError::new(&path, e.to_string()))?;
        }
        out.validate()?;
        Ok(out)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let finite = |path: &str, x: f64| {
            if x.is_finite() {
                Ok(())
            } else {
                Err(ConfigError::new(path, format!("must be finite, got {x}")))
            }
        };
        match &self.model {
            ModelConfig::Tfim1d { n, b0, j0, .. } => {
                if *n < 2 {
                    return Err(ConfigError::new("model.n", "needs at least 2 spins"));
                }
                finite("model.B0", *b0)?;
                finite("model.J0", *j0)?;
            }
            ModelConfig::Tfim2d { rows, cols, b0, j0 } => {
                if rows * cols < 2 {
                    return Err(ConfigError::new("model.rows", "lattice needs at least 2 sites"));
                }
                finite("model.B0", *b0)?;
                finite("model.J0", *j0)?;
            }
            ModelConfig::Hubbard2d {
                rows,
                cols,
                t0,
                u0,
                n_up,
                n_down,
                ..
            } => {
                let n = rows * cols;
                if n < 2 {
                    return Err(ConfigError::new("model.rows", "lattice needs at least 2 sites"));
                }
                if *n_up > n || *n_down > n {
                    return Err(ConfigError::new("model.n_up", format!("at most {n} electrons per spin")));
                }
                finite("model.t0", *t0)?;
                finite("model.U0", *u0)?;
            }
            ModelConfig::HeisenbergJ1J2 { rows, cols, j0, k0 } => {
                if rows * cols < 2 {
                    return Err(ConfigError::new("model.rows", "lattice needs at least 2 sites"));
                }
                finite("model.J0", *j0)?;
                finite("model.K0", *k0)?;
            }
            ModelConfig::RandomTfim { n, b0, j0, sigma, .. } => {
                if *n < 2 {
                    return Err(ConfigError::new("model.n", "needs at least 2 spins"));
                }
                finite("model.B0", *b0)?;
                finite("model.J0", *j0)?;
                if !(*sigma >= 0.0) || !sigma.is_finite() {
                    return Err(ConfigError::new("model.sigma", "must be finite and non-negative"));
                }
            }
        }
        let n = self.model.n_sites();
        match &self.observable {
            ObservableConfig::TotalSz | ObservableConfig::StaggeredMagnetization if !self.model.is_spin_model() => {
                return Err(ConfigError::new("observable.name", "spin observables need a spin model"));
            }
            ObservableConfig::Zz { i, j } => {
                if !self.model.is_spin_model() {
                    return Err(ConfigError::new("observable.name", "spin observables need a spin model"));
                }
                if *i == 0 || *j > n || i >= j {
                    return Err(ConfigError::new("observable", format!("need 1 <= i < j <= {n}, got ({i}, {j})")));
                }
            }
            ObservableConfig::DoubleOccupancy if self.model.is_spin_model() => {
                return Err(ConfigError::new("observable.name", "D needs the hubbard_2d model"));
            }
            _ => {}
        }
        if let StateConfig::Thermal(beta) = self.state {
            if !(beta > 0.0) || !beta.is_finite() {
                return Err(ConfigError::new("state", format!("beta must be positive and finite, got {beta}")));
            }
        }
        if self.engine == Engine::Freefermion {
            if !matches!(self.model, ModelConfig::Tfim1d { .. }) {
                return Err(ConfigError::new("engine", "freefermion needs the tfim_1d model"));
            }
            if !matches!(self.observable, ObservableConfig::TotalSz | ObservableConfig::Zz { .. }) {
                return Err(ConfigError::new("engine", "freefermion supports the S_z and C_z observables"));
            }
        }
        if let Some(sweep) = &self.sweep {
            if !self.sweepable_parameters().contains(&sweep.parameter) {
                return Err(ConfigError::new(
                    "sweep.parameter",
                    format!(
                        "{} is not a parameter of {} (choose from {})",
                        sweep.parameter,
                        self.model.name(),
                        self.sweepable_parameters().join(", ")
                    ),
                ));
            }
            finite("sweep.grid.start", sweep.grid.start)?;
            finite("sweep.grid.stop", sweep.grid.stop)?;
        }
        if let Some(k) = &self.kernel {
            finite("kernel.diagonal_factor", k.diagonal_factor)?;
            if !(k.limit_threshold >= 0.0) || !k.limit_threshold.is_finite() {
                return Err(ConfigError::new("kernel.limit_threshold", "must be finite and non-negative"));
            }
        }
        Ok(())
    }
}
