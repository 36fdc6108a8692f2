use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use ttkoop::amuset::{amuset_cca, amuset_edmd, implied_timescales, CcaOptions, EdmdOptions, Method};
use ttkoop::dynamics::{generate_abc_dataset, simulate_double_well, Sampling};
use ttkoop::{BasisSpec, HocurConfig, SpectralKind, SpectralResult, Timescale, TrajectoryPair};

use crate::config::{AbcConfig, AnalysisConfig, DoubleWellConfig, MethodName, SamplingMode};
use crate::error::{CliError, CliResult};
use crate::trajectory::{self, format_float, Trajectory};

pub const SCHEMA_VERSION: u32 = 1;

/// `<file>.json` next to a trajectory file.
pub fn sidecar_path(traj: &Path) -> PathBuf {
    let mut name = traj.as_os_str().to_owned();
    name.push(".json");
    PathBuf::from(name)
}

fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("output serializes");
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Sidecar {
    pub schema_version: u32,
    pub system: String,
    pub parameters: Value,
    pub seed: Option<u64>,
    pub dim: usize,
    pub snapshots: usize,
    pub paired: bool,
    /// Physical time between `x` and `y` of a paired file.
    #[serde(default)]
    pub pair_time: Option<f64>,
    /// Physical time between consecutive frames of a single trajectory.
    #[serde(default)]
    pub frame_time: Option<f64>,
}

pub fn generate_abc(cfg: &AbcConfig) -> CliResult<()> {
    let sampling = match cfg.sampling {
        SamplingMode::Grid => Sampling::Grid,
        SamplingMode::Random => Sampling::Random { seed: cfg.seed },
    };
    let pair = generate_abc_dataset(cfg.n_per_dim, &cfg.flow(), sampling)?;
    let traj = Trajectory::Paired(pair.x()?, pair.y()?);
    trajectory::write(&cfg.out, &traj)?;
    let sidecar = Sidecar {
        schema_version: SCHEMA_VERSION,
        system: "abc".into(),
        parameters: serde_json::to_value(cfg).expect("config serializes"),
        seed: (cfg.sampling == SamplingMode::Random).then_some(cfg.seed),
        dim: traj.dim(),
        snapshots: traj.len(),
        paired: true,
        pair_time: Some(cfg.tau),
        frame_time: None,
    };
    write_json(&sidecar_path(&cfg.out), &sidecar)
}

pub fn generate_double_well(cfg: &DoubleWellConfig) -> CliResult<()> {
    let z = simulate_double_well(&cfg.sde())?;
    let traj = Trajectory::Single(z);
    trajectory::write(&cfg.out, &traj)?;
    let sidecar = Sidecar {
        schema_version: SCHEMA_VERSION,
        system: "double-well".into(),
        parameters: serde_json::to_value(cfg).expect("config serializes"),
        seed: Some(cfg.seed),
        dim: 1,
        snapshots: traj.len(),
        paired: false,
        pair_time: None,
        frame_time: Some(cfg.dt * cfg.stride as f64),
    };
    write_json(&sidecar_path(&cfg.out), &sidecar)
}

fn read_sidecar(traj: &Path) -> Option<Sidecar> {
    let text = fs::read_to_string(sidecar_path(traj)).ok()?;
    serde_json::from_str(&text).ok()
}

fn read_basis(path: &Path) -> CliResult<BasisSpec> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    BasisSpec::from_json(&text).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Complex {
    pub re: f64,
    pub im: f64,
}

#[derive(Debug, Serialize)]
pub struct Results {
    pub schema_version: u32,
    pub kind: SpectralKind,
    pub config: AnalysisConfig,
    pub basis: BasisSpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub basis_y: Option<BasisSpec>,
    pub snapshots: usize,
    pub basis_dims: Vec<usize>,
    pub eigenvalues: Vec<Complex>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub singular_values: Vec<f64>,
    pub tau_phys: Option<f64>,
    pub implied_timescales: Vec<Timescale>,
    pub ranks: Vec<usize>,
    pub retained_rank: usize,
    pub eps: f64,
    pub method: &'static str,
    pub symmetrized: bool,
    pub warnings: Vec<String>,
    pub wall_time_s: f64,
}

/// Lag time used for timescales: the explicit value, else what the sidecar
/// implies, else one step per frame.
fn resolve_tau(cfg: &AnalysisConfig, traj: &Trajectory, sidecar: Option<&Sidecar>) -> Option<f64> {
    if cfg.tau_phys.is_some() {
        return cfg.tau_phys;
    }
    if traj.is_paired() {
        return Some(sidecar.and_then(|s| s.pair_time).unwrap_or(1.0));
    }
    let lag = cfg.lag? as f64;
    Some(lag * sidecar.and_then(|s| s.frame_time).unwrap_or(1.0))
}

fn build_pair(traj: Trajectory, cfg: &AnalysisConfig) -> CliResult<TrajectoryPair> {
    let explicit = cfg.x_index.is_some() || cfg.y_index.is_some();
    match traj {
        Trajectory::Paired(x, y) => {
            if cfg.lag.is_some() || explicit {
                return Err(CliError::validation("keys `lag`, `x_index`, `y_index` do not apply to a paired trajectory file"));
            }
            Ok(TrajectoryPair::paired(x, y)?)
        }
        Trajectory::Single(z) => match (&cfg.lag, &cfg.x_index, &cfg.y_index) {
            (Some(lag), None, None) => Ok(TrajectoryPair::lagged(z, *lag)?),
            (None, Some(xi), Some(yi)) => Ok(TrajectoryPair::indexed(z, xi.clone(), yi.clone())?),
            (None, None, None) => Err(CliError::validation("missing key `lag` (or `x_index` and `y_index`)")),
            _ => Err(CliError::validation("give either `lag` or both `x_index` and `y_index`")),
        },
    }
}

fn build_method(cfg: &AnalysisConfig, spec: &BasisSpec, snapshots: usize) -> CliResult<Method> {
    if cfg.method != MethodName::Hocur {
        if cfg.ranks.is_some() {
            return Err(CliError::validation("key `ranks` applies to method hocur only"));
        }
        return Ok(match cfg.method {
            MethodName::Exact => Method::Exact,
            _ => Method::Streamed,
        });
    }
    let ranks = cfg.ranks.as_deref().ok_or_else(|| CliError::validation("method hocur needs key `ranks`"))?;
    let dims = spec.dims();
    let mut hocur = match ranks {
        [r] => HocurConfig::uniform(*r, &dims, snapshots),
        _ => HocurConfig::new(ranks.to_vec()),
    };
    hocur.sweeps = cfg.sweeps;
    hocur.alpha = cfg.alpha;
    hocur.validate(&dims, snapshots)?;
    Ok(Method::Hocur(hocur))
}

pub fn analyse(kind: SpectralKind, mut cfg: AnalysisConfig) -> CliResult<()> {
    match kind {
        SpectralKind::Edmd if cfg.basis_y.is_some() => {
            return Err(CliError::validation("key `basis_y` applies to cca only"))
        }
        SpectralKind::Edmd if cfg.grid_eval.is_some() => {
            return Err(CliError::validation("key `grid_eval` applies to cca only"))
        }
        SpectralKind::Cca if cfg.symmetrize => return Err(CliError::validation("key `symmetrize` applies to edmd only")),
        _ => {}
    }
    if !(cfg.eps >= 0.0 && cfg.eps.is_finite()) {
        return Err(CliError::validation(format!("eps must be non-negative, got {}", cfg.eps)));
    }
    if let Some(tau) = cfg.tau_phys {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(CliError::validation(format!("tau_phys must be positive, got {tau}")));
        }
    }
    let traj = trajectory::read(&cfg.traj)?;
    let sidecar = read_sidecar(&cfg.traj);
    let spec = read_basis(&cfg.basis)?;
    let spec_y = cfg.basis_y.as_deref().map(read_basis).transpose()?;
    let tau = resolve_tau(&cfg, &traj, sidecar.as_ref());
    cfg.tau_phys = tau;
    let pair = build_pair(traj, &cfg)?;
    let method = build_method(&cfg, &spec, pair.len())?;

    let start = Instant::now();
    let result = match kind {
        SpectralKind::Edmd => {
            let opts = EdmdOptions { eps: cfg.eps, method: method.clone(), q: cfg.q, symmetrize: cfg.symmetrize };
            amuset_edmd(&pair, &spec, &opts)?
        }
        SpectralKind::Cca => {
            let opts = CcaOptions { eps: cfg.eps, method: method.clone(), q: cfg.q };
            amuset_cca(&pair.x()?, &pair.y()?, &spec, spec_y.as_ref().unwrap_or(&spec), &opts)?
        }
    };
    let wall_time_s = start.elapsed().as_secs_f64();

    let mut warnings = result.warnings.clone();
    let implied = match tau {
        Some(t) if t > 0.0 => implied_timescales(&result.values, t)?,
        _ => {
            warnings.push("lag time is zero; no implied timescales".into());
            Vec::new()
        }
    };
    if let Some(path) = &cfg.phi {
        write_phi(path, &result)?;
    }
    if let Some(path) = &cfg.grid_eval {
        write_grid_eval(path, &pair.x()?, &result)?;
    }
    let results = Results {
        schema_version: SCHEMA_VERSION,
        kind,
        snapshots: pair.len(),
        basis_dims: spec.dims(),
        basis: spec,
        basis_y: spec_y,
        eigenvalues: result.values.iter().map(|v| Complex { re: v.re, im: v.im }).collect(),
        singular_values: result.singular_values.clone(),
        tau_phys: tau,
        implied_timescales: implied,
        ranks: result.ranks.clone(),
        retained_rank: result.retained_rank,
        eps: result.eps,
        method: method.name(),
        symmetrized: result.symmetrized,
        warnings,
        wall_time_s,
        config: cfg,
    };
    write_json(&results.config.out, &results)
}

/// Real rows of `Φ`. A conjugate pair `λ, λ̄` occupies two rows holding the
/// real and imaginary parts of the eigenfunction of `λ`, which span the same
/// real space as the pair; row count always equals the eigenvalue count.
pub fn real_rows(result: &SpectralResult) -> Vec<Vec<f64>> {
    let phi = &result.eigenfunctions;
    let values = &result.values;
    let row = |k: usize, imag: bool| -> Vec<f64> {
        (0..phi.ncols()).map(|t| if imag { phi[(k, t)].im } else { phi[(k, t)].re }).collect()
    };
    let mut rows = Vec::with_capacity(values.len());
    let mut k = 0;
    while k < values.len() {
        let v = values[k];
        let partner = values.get(k + 1).is_some_and(|w| {
            v.im > 0.0 && (w.re - v.re).abs() <= 1e-12 * v.norm() && (w.im + v.im).abs() <= 1e-12 * v.norm()
        });
        rows.push(row(k, false));
        if partner {
            rows.push(row(k, true));
            k += 2;
        } else {
            k += 1;
        }
    }
    rows
}

fn csv_writer(path: &Path) -> CliResult<csv::Writer<BufWriter<fs::File>>> {
    let file = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    Ok(csv::WriterBuilder::new().has_headers(false).from_writer(BufWriter::new(file)))
}

fn finish(path: &Path, w: csv::Writer<BufWriter<fs::File>>) -> CliResult<()> {
    w.into_inner().map_err(|e| CliError::io(path, e))?.flush().map_err(|e| CliError::io(path, e))
}

fn write_phi(path: &Path, result: &SpectralResult) -> CliResult<()> {
    let mut w = csv_writer(path)?;
    for row in real_rows(result) {
        w.write_record(row.iter().map(|v| format_float(*v))).map_err(|e| CliError::io(path, e))?;
    }
    finish(path, w)
}

/// Header `x1..xd, phi1..phiq`, one row per `x` snapshot.
fn write_grid_eval(path: &Path, x: &ttkoop::Snapshots, result: &SpectralResult) -> CliResult<()> {
    let rows = real_rows(result);
    let mut w = csv_writer(path)?;
    let header = (1..=x.dim()).map(|k| format!("x{k}")).chain((1..=rows.len()).map(|k| format!("phi{k}")));
    w.write_record(header).map_err(|e| CliError::io(path, e))?;
    for (t, snap) in x.iter().enumerate() {
        let fields = snap.iter().copied().chain(rows.iter().map(|r| r[t])).map(format_float);
        w.write_record(fields).map_err(|e| CliError::io(path, e))?;
    }
    finish(path, w)
}

/// Recomputes the implied timescales of a results file for lag time `tau`.
pub fn timescales(results: &Path, tau: f64, out: Option<&Path>) -> CliResult<()> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(CliError::validation(format!("tau must be positive, got {tau}")));
    }
    let text = fs::read_to_string(results).map_err(|e| CliError::io(results, e))?;
    let mut doc: Value =
        serde_json::from_str(&text).map_err(|e| CliError::validation(format!("{}: {e}", results.display())))?;
    let values: Vec<Complex> = doc
        .get("eigenvalues")
        .cloned()
        .ok_or_else(|| CliError::validation(format!("{}: missing key `eigenvalues`", results.display())))
        .and_then(|v| {
            serde_json::from_value(v).map_err(|e| CliError::validation(format!("{}: eigenvalues: {e}", results.display())))
        })?;
    let values: Vec<_> = values.iter().map(|c| ttkoop::c64::new(c.re, c.im)).collect();
    let implied = implied_timescales(&values, tau)?;
    doc["implied_timescales"] = json!(implied);
    doc["tau_phys"] = json!(tau);
    if let Some(cfg) = doc.get_mut("config").and_then(Value::as_object_mut) {
        cfg.insert("tau_phys".into(), json!(tau));
    }
    match out {
        Some(path) => write_json(path, &doc),
        None => {
            println!("{}", serde_json::to_string_pretty(&doc).expect("output serializes"));
            Ok(())
        }
    }
}
