//! Run configurations: an optional JSON file overlaid with command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use ttkoop::dynamics::{FlowConfig, SdeConfig};

use crate::error::{CliError, CliResult};

/// Reads `file` (a JSON object), overlays every flag that was given, and
/// deserializes the result. Unknown or mistyped keys are validation errors.
pub fn resolve<T: DeserializeOwned>(file: Option<&Path>, flags: &impl Serialize) -> CliResult<T> {
    let mut merged = match file {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            match serde_json::from_str::<Value>(&text) {
                Ok(Value::Object(map)) => map,
                Ok(_) => return Err(CliError::validation(format!("{}: config must be a JSON object", path.display()))),
                Err(e) => return Err(CliError::validation(format!("{}: {e}", path.display()))),
            }
        }
        None => Map::new(),
    };
    if let Value::Object(given) = serde_json::to_value(flags).expect("flags serialize") {
        for (key, value) in given {
            if !value.is_null() {
                merged.insert(key, value);
            }
        }
    }
    serde_json::from_value(Value::Object(merged)).map_err(|e| CliError::validation(format!("config: {e}")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SamplingMode {
    #[default]
    Grid,
    Random,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AbcConfig {
    pub n_per_dim: usize,
    pub out: PathBuf,
    #[serde(default = "abc::tau")]
    pub tau: f64,
    #[serde(default = "abc::a")]
    pub a: f64,
    #[serde(default = "abc::b")]
    pub b: f64,
    #[serde(default = "abc::c")]
    pub c: f64,
    #[serde(default = "abc::atol")]
    pub atol: f64,
    #[serde(default = "abc::rtol")]
    pub rtol: f64,
    #[serde(default = "abc::dt_initial")]
    pub dt_initial: f64,
    #[serde(default = "abc::max_steps")]
    pub max_steps: usize,
    #[serde(default)]
    pub sampling: SamplingMode,
    #[serde(default)]
    pub seed: u64,
}

impl AbcConfig {
    pub fn flow(&self) -> FlowConfig {
        FlowConfig {
            a: self.a,
            b: self.b,
            c: self.c,
            tau: self.tau,
            dt_initial: self.dt_initial,
            atol: self.atol,
            rtol: self.rtol,
            max_steps: self.max_steps,
        }
    }
}

mod abc {
    use super::FlowConfig;

    pub fn tau() -> f64 {
        FlowConfig::default().tau
    }
    pub fn a() -> f64 {
        FlowConfig::default().a
    }
    pub fn b() -> f64 {
        FlowConfig::default().b
    }
    pub fn c() -> f64 {
        FlowConfig::default().c
    }
    pub fn atol() -> f64 {
        FlowConfig::default().atol
    }
    pub fn rtol() -> f64 {
        FlowConfig::default().rtol
    }
    pub fn dt_initial() -> f64 {
        FlowConfig::default().dt_initial
    }
    pub fn max_steps() -> usize {
        FlowConfig::default().max_steps
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DoubleWellConfig {
    pub out: PathBuf,
    #[serde(default = "well::frames")]
    pub frames: usize,
    #[serde(default = "well::dt")]
    pub dt: f64,
    #[serde(default = "well::beta")]
    pub beta: f64,
    #[serde(default = "well::stride")]
    pub stride: usize,
    #[serde(default = "well::x0")]
    pub x0: f64,
    #[serde(default)]
    pub seed: u64,
}

impl DoubleWellConfig {
    pub fn sde(&self) -> SdeConfig {
        SdeConfig {
            beta: self.beta,
            dt: self.dt,
            frames: self.frames,
            stride: self.stride,
            x0: self.x0,
            seed: self.seed,
        }
    }
}

mod well {
    use super::SdeConfig;

    pub fn frames() -> usize {
        SdeConfig::default().frames
    }
    pub fn dt() -> f64 {
        SdeConfig::default().dt
    }
    pub fn beta() -> f64 {
        SdeConfig::default().beta
    }
    pub fn stride() -> usize {
        SdeConfig::default().stride
    }
    pub fn x0() -> f64 {
        SdeConfig::default().x0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum MethodName {
    Exact,
    #[default]
    Streamed,
    Hocur,
}

pub const DEFAULT_EPS: f64 = 1e-8;

/// Parameters shared by `edmd` and `cca`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    pub traj: PathBuf,
    pub basis: PathBuf,
    pub out: PathBuf,
    /// Basis for `y` (CCA only); defaults to `basis`.
    #[serde(default)]
    pub basis_y: Option<PathBuf>,
    /// Integer frame lag for single trajectories.
    #[serde(default)]
    pub lag: Option<usize>,
    /// Explicit 1-based snapshot indices, used instead of `lag`.
    #[serde(default)]
    pub x_index: Option<Vec<usize>>,
    #[serde(default)]
    pub y_index: Option<Vec<usize>>,
    /// Physical lag time; only used for implied timescales.
    #[serde(default)]
    pub tau_phys: Option<f64>,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default)]
    pub method: MethodName,
    /// Cross ranks: one value for all, or one per dimension.
    #[serde(default)]
    pub ranks: Option<Vec<usize>>,
    #[serde(default = "default_sweeps")]
    pub sweeps: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub q: Option<usize>,
    #[serde(default)]
    pub symmetrize: bool,
    /// Eigenfunction values at the `x` snapshots, one row per eigenfunction.
    #[serde(default)]
    pub phi: Option<PathBuf>,
    /// CCA only: snapshot coordinates followed by eigenfunction values.
    #[serde(default)]
    pub grid_eval: Option<PathBuf>,
}

fn default_eps() -> f64 {
    DEFAULT_EPS
}

fn default_sweeps() -> usize {
    2
}

fn default_alpha() -> f64 {
    2.0
}
