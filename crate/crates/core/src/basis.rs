//! Univariate basis families and the transformed data tensor built from them.

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::data::Snapshots;
use crate::error::{Error, Result};
use crate::linalg;
use crate::tt::{Core, DenseCore, SweepConfig, TensorTrain, TtSegment, DENSE_LIMIT};

/// Limit on `m · max n_k` for the structured exact transform.
pub const EXACT_TRANSFORM_LIMIT: usize = 200_000_000;

/// A function of one scalar coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BasisFunction {
    Constant,
    /// `exp(-(x - c)² / (2 s))`.
    Gaussian {
        #[serde(rename = "c")]
        center: f64,
        #[serde(rename = "s")]
        scale: f64,
    },
    /// `exp(-sin²((x - c) / 2) / (2 s))`, 2π-periodic.
    PeriodicGaussian {
        #[serde(rename = "c")]
        center: f64,
        #[serde(rename = "s")]
        scale: f64,
    },
    Identity,
    Monomial { degree: u32 },
}

impl BasisFunction {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            BasisFunction::Constant => 1.0,
            BasisFunction::Gaussian { center, scale } => (-(x - center).powi(2) / (2.0 * scale)).exp(),
            BasisFunction::PeriodicGaussian { center, scale } => {
                (-(0.5 * (x - center)).sin().powi(2) / (2.0 * scale)).exp()
            }
            BasisFunction::Identity => x,
            BasisFunction::Monomial { degree } => x.powi(degree as i32),
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            BasisFunction::Gaussian { center, scale } | BasisFunction::PeriodicGaussian { center, scale } => {
                if !center.is_finite() {
                    return Err(Error::Validation(format!("Gaussian center {center} is not finite")));
                }
                if !(scale > 0.0 && scale.is_finite()) {
                    return Err(Error::Validation(format!("Gaussian scale must be positive, got {scale}")));
                }
                Ok(())
            }
            BasisFunction::Monomial { degree } if degree > i32::MAX as u32 => {
                Err(Error::Validation(format!("monomial degree {degree} too large")))
            }
            _ => Ok(()),
        }
    }
}

/// One tensor dimension: a list of functions reading one coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisDimension {
    /// 1-based snapshot coordinate.
    pub coordinate: usize,
    pub functions: Vec<BasisFunction>,
}

/// Product basis: the trial space is spanned by all products of one function
/// per dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisSpec {
    pub dimensions: Vec<BasisDimension>,
}

impl BasisSpec {
    pub fn new(dimensions: Vec<BasisDimension>) -> Result<Self> {
        let spec = BasisSpec { dimensions };
        spec.validate()?;
        Ok(spec)
    }

    /// Coordinate-major layout: dimension `k` reads coordinate `k`.
    pub fn coordinate_major(per_coordinate: Vec<Vec<BasisFunction>>) -> Result<Self> {
        Self::new(
            per_coordinate
                .into_iter()
                .enumerate()
                .map(|(k, functions)| BasisDimension { coordinate: k + 1, functions })
                .collect(),
        )
    }

    /// `count` Gaussians with variance `scale` and centers equally spaced on
    /// `[lo, hi]`, one dimension per coordinate.
    pub fn gaussian_grid(coordinates: usize, count: usize, lo: f64, hi: f64, scale: f64) -> Result<Self> {
        let centers = linspace(lo, hi, count);
        let funcs: Vec<_> = centers.iter().map(|&center| BasisFunction::Gaussian { center, scale }).collect();
        Self::coordinate_major(vec![funcs; coordinates])
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: BasisSpec =
            serde_json::from_str(text).map_err(|e| Error::Validation(format!("basis spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("basis spec serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimensions.is_empty() {
            return Err(Error::Validation("basis spec has no dimensions".into()));
        }
        for (k, dim) in self.dimensions.iter().enumerate() {
            if dim.coordinate == 0 {
                return Err(Error::Validation(format!("dimension {}: coordinates are 1-based", k + 1)));
            }
            if dim.functions.is_empty() {
                return Err(Error::Validation(format!("dimension {} has no functions", k + 1)));
            }
            for f in &dim.functions {
                f.validate()?;
            }
        }
        Ok(())
    }

    /// `p`.
    pub fn order(&self) -> usize {
        self.dimensions.len()
    }

    /// `(n_1, …, n_p)`.
    pub fn dims(&self) -> Vec<usize> {
        self.dimensions.iter().map(|d| d.functions.len()).collect()
    }

    /// `N = ∏ n_k`.
    pub fn size(&self) -> usize {
        self.dims().iter().product()
    }

    pub fn max_coordinate(&self) -> usize {
        self.dimensions.iter().map(|d| d.coordinate).max().unwrap_or(0)
    }

    fn check_data(&self, x: &Snapshots) -> Result<()> {
        self.validate()?;
        if self.max_coordinate() > x.dim() {
            return Err(Error::Validation(format!(
                "basis reads coordinate {} but snapshots have dimension {}",
                self.max_coordinate(),
                x.dim()
            )));
        }
        if x.is_empty() {
            return Err(Error::Data("no snapshots".into()));
        }
        Ok(())
    }
}

pub(crate) fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..count).map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64).collect(),
    }
}

/// `[ψ_{k,1}(x), …, ψ_{k,n_k}(x)]` for one snapshot; `k` is 1-based.
pub fn eval_basis_dim(spec: &BasisSpec, k: usize, x: &[f64]) -> Result<Vec<f64>> {
    let dim = spec
        .dimensions
        .get(k.wrapping_sub(1))
        .ok_or_else(|| Error::bounds(format!("dimension {k} outside 1..={}", spec.order())))?;
    let v = *x
        .get(dim.coordinate.wrapping_sub(1))
        .ok_or_else(|| Error::bounds(format!("snapshot has no coordinate {}", dim.coordinate)))?;
    if !v.is_finite() {
        return Err(Error::Data(format!("non-finite coordinate {} = {v}", dim.coordinate)));
    }
    Ok(dim.functions.iter().map(|f| f.eval(v)).collect())
}

/// Per-dimension evaluation tables `n_k × m`.
#[derive(Debug, Clone)]
pub struct BasisTable {
    tables: Vec<Mat<f64>>,
    snapshots: usize,
}

impl BasisTable {
    pub fn new(spec: &BasisSpec, x: &Snapshots) -> Result<Self> {
        spec.check_data(x)?;
        let m = x.len();
        let tables = spec
            .dimensions
            .iter()
            .map(|dim| {
                let c = dim.coordinate - 1;
                Mat::from_fn(dim.functions.len(), m, |i, t| dim.functions[i].eval(x.snapshot(t)[c]))
            })
            .collect();
        Ok(BasisTable { tables, snapshots: m })
    }

    /// Table of dimension `k` (0-based), entry `(i, t)` = `ψ_{k,i}(x_t)`.
    pub fn dim(&self, k: usize) -> &Mat<f64> {
        &self.tables[k]
    }

    pub fn order(&self) -> usize {
        self.tables.len()
    }

    pub fn snapshots(&self) -> usize {
        self.snapshots
    }

    pub fn dims(&self) -> Vec<usize> {
        self.tables.iter().map(|t| t.nrows()).collect()
    }
}

/// Dense `N × m` transformed data matrix; column `t` is the first-index-fastest
/// vectorization of `ψ_1(x_t) ⊗ … ⊗ ψ_p(x_t)`.
pub fn dense_transform(x: &Snapshots, spec: &BasisSpec) -> Result<Mat<f64>> {
    spec.check_data(x)?;
    let n = spec.size();
    let m = x.len();
    if n.saturating_mul(m) > DENSE_LIMIT {
        return Err(Error::Capacity { what: "dense transformed data matrix", requested: n.saturating_mul(m), limit: DENSE_LIMIT });
    }
    let table = BasisTable::new(spec, x)?;
    let mut out = Mat::<f64>::zeros(n, m);
    for t in 0..m {
        let mut col = vec![1.0];
        for k in 0..table.order() {
            let tab = table.dim(k);
            let mut next = Vec::with_capacity(col.len() * tab.nrows());
            for i in 0..tab.nrows() {
                let f = tab[(i, t)];
                next.extend(col.iter().map(|c| c * f));
            }
            col = next;
        }
        for (i, v) in col.into_iter().enumerate() {
            out[(i, t)] = v;
        }
    }
    Ok(out)
}

/// Exact TT representation of the transformed data tensor, order `p + 1`.
///
/// The first core holds `ψ_1(x_t)` for every snapshot, interior cores are
/// block diagonal in the snapshot index (stored as `n_k × m` tables) and the
/// last core selects the snapshot.
pub fn transform_exact(x: &Snapshots, spec: &BasisSpec) -> Result<TensorTrain> {
    spec.check_data(x)?;
    let m = x.len();
    let widest = spec.dims().into_iter().max().unwrap_or(1);
    if widest.saturating_mul(m) > EXACT_TRANSFORM_LIMIT {
        return Err(Error::Capacity {
            what: "exact transform (use the streamed build)",
            requested: widest.saturating_mul(m),
            limit: EXACT_TRANSFORM_LIMIT,
        });
    }
    transform_from_table(&BasisTable::new(spec, x)?)
}

pub(crate) fn transform_from_table(table: &BasisTable) -> Result<TensorTrain> {
    let m = table.snapshots();
    let mut cores = Vec::with_capacity(table.order() + 1);
    let first = table.dim(0);
    cores.push(Core::Dense(DenseCore::new(
        1,
        first.nrows(),
        m,
        (0..m).flat_map(|t| (0..first.nrows()).map(move |i| first[(i, t)])).collect(),
    )?));
    for k in 1..table.order() {
        cores.push(Core::Diagonal(table.dim(k).clone()));
    }
    cores.push(Core::Selector(m));
    TensorTrain::new(cores)
}

/// Left-orthonormal cores of the transformed data tensor plus the `r_p × m`
/// interface whose rows are time series of the retained basis.
#[derive(Debug, Clone)]
pub struct StreamedBuild {
    pub u_cores: TtSegment,
    pub interface: Mat<f64>,
}

impl StreamedBuild {
    /// `(1, r_1, …, r_p)`.
    pub fn ranks(&self) -> Vec<usize> {
        self.u_cores.ranks()
    }
}

/// Builds the orthonormal cores one dimension at a time without forming the
/// exact cores; peak memory is `O(r_{k-1}·n_k·m)`.
pub fn transform_streamed(x: &Snapshots, spec: &BasisSpec, cfg: &SweepConfig) -> Result<StreamedBuild> {
    let table = BasisTable::new(spec, x)?;
    streamed_from_table(&table, cfg)
}

pub(crate) fn streamed_from_table(table: &BasisTable, cfg: &SweepConfig) -> Result<StreamedBuild> {
    if !(cfg.eps >= 0.0 && cfg.eps.is_finite()) {
        return Err(Error::argument(format!("eps must be a finite non-negative number, got {}", cfg.eps)));
    }
    let eps = if cfg.truncate_sweep { cfg.eps } else { 0.0 };
    let m = table.snapshots();
    let mut interface = Mat::from_fn(1, m, |_, _| 1.0);
    let mut cores = Vec::with_capacity(table.order());
    for k in 0..table.order() {
        let vals = table.dim(k);
        let r = interface.nrows();
        let n = vals.nrows();
        let b = Mat::from_fn(r * n, m, |row, t| interface[(row % r, t)] * vals[(row / r, t)]);
        let cap = cfg.max_ranks.as_ref().and_then(|c| c.get(k).copied());
        let svd = linalg::truncated_svd(b.as_ref(), eps, cap)?;
        cores.push(DenseCore::from_left_unfolding(svd.u.as_ref(), r, n)?);
        interface = svd.s_vt();
    }
    Ok(StreamedBuild { u_cores: TtSegment::new(cores)?, interface })
}
