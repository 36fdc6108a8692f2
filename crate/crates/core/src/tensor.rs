//! Dense tensors, multi-index arithmetic and mode-k unfoldings.
//!
//! Every grouped index in this crate is linearized with the **first index
//! varying fastest**. Multi-indices and flat tensor indices are 1-based in the
//! public API; storage is 0-based and never exposed.

use faer::{Mat, MatRef};

use crate::error::{Error, Result};
use crate::linalg;

/// A 1-based multi-index `(i_1, …, i_p)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MultiIndex(pub Vec<usize>);

impl MultiIndex {
    pub fn new(indices: impl Into<Vec<usize>>) -> Self {
        MultiIndex(indices.into())
    }

    /// The empty multi-index, used as the seed of nested index sets.
    pub fn empty() -> Self {
        MultiIndex(Vec::new())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    /// Concatenation `(self, other)`.
    pub fn join(&self, other: &MultiIndex) -> MultiIndex {
        let mut v = self.0.clone();
        v.extend_from_slice(&other.0);
        MultiIndex(v)
    }

    pub(crate) fn check(&self, dims: &[usize]) -> Result<()> {
        if self.0.len() != dims.len() {
            return Err(Error::bounds(format!(
                "multi-index has {} entries, tensor has {} modes",
                self.0.len(),
                dims.len()
            )));
        }
        for (k, (&i, &n)) in self.0.iter().zip(dims).enumerate() {
            if i == 0 || i > n {
                return Err(Error::bounds(format!("index {i} in mode {} outside 1..={n}", k + 1)));
            }
        }
        Ok(())
    }
}

impl From<Vec<usize>> for MultiIndex {
    fn from(v: Vec<usize>) -> Self {
        MultiIndex(v)
    }
}

fn product(dims: &[usize]) -> usize {
    dims.iter().product()
}

/// `ī = 1 + Σ_k (i_k − 1)·∏_{l<k} n_l`.
pub fn multi_to_single(mi: &MultiIndex, dims: &[usize]) -> Result<usize> {
    mi.check(dims)?;
    let mut flat = 0usize;
    let mut stride = 1usize;
    for (&i, &n) in mi.0.iter().zip(dims) {
        flat += (i - 1) * stride;
        stride *= n;
    }
    Ok(flat + 1)
}

/// Inverse of [`multi_to_single`].
pub fn single_to_multi(i: usize, dims: &[usize]) -> Result<MultiIndex> {
    let total = product(dims);
    if i == 0 || i > total {
        return Err(Error::bounds(format!("flat index {i} outside 1..={total}")));
    }
    let mut rest = i - 1;
    let mut out = Vec::with_capacity(dims.len());
    for &n in dims {
        out.push(rest % n + 1);
        rest /= n;
    }
    Ok(MultiIndex(out))
}

/// A real tensor stored densely, first mode fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    dims: Vec<usize>,
    data: Vec<f64>,
}

impl DenseTensor {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if dims.is_empty() || dims.iter().any(|&n| n == 0) {
            return Err(Error::argument(format!("mode sizes must be positive, got {dims:?}")));
        }
        if data.len() != product(&dims) {
            return Err(Error::argument(format!(
                "data length {} does not match dims {dims:?}",
                data.len()
            )));
        }
        Ok(DenseTensor { dims, data })
    }

    pub fn zeros(dims: Vec<usize>) -> Result<Self> {
        let n = product(&dims);
        Self::new(dims, vec![0.0; n])
    }

    /// Builds a tensor from a function of the (1-based) multi-index.
    pub fn from_fn(dims: Vec<usize>, mut f: impl FnMut(&[usize]) -> f64) -> Result<Self> {
        let mut t = Self::zeros(dims)?;
        let mut idx = vec![1usize; t.dims.len()];
        for slot in t.data.iter_mut() {
            *slot = f(&idx);
            for (k, i) in idx.iter_mut().enumerate() {
                if *i < t.dims[k] {
                    *i += 1;
                    break;
                }
                *i = 1;
            }
        }
        Ok(t)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn order(&self) -> usize {
        self.dims.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, mi: &MultiIndex) -> Result<f64> {
        Ok(self.data[multi_to_single(mi, &self.dims)? - 1])
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Largest absolute entrywise difference; errors when dims differ.
    pub fn max_abs_diff(&self, other: &DenseTensor) -> Result<f64> {
        if self.dims != other.dims {
            return Err(Error::argument(format!("dims {:?} vs {:?}", self.dims, other.dims)));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }
}

/// Mode-k unfolding: rows linearize modes `1..=k`, columns modes `k+1..=p`.
pub fn unfold(t: &DenseTensor, k: usize) -> Result<Mat<f64>> {
    let p = t.order();
    if k == 0 || k >= p.max(1) {
        return Err(Error::argument(format!("split position {k} outside 1..={}", p.saturating_sub(1))));
    }
    let rows = product(&t.dims[..k]);
    let cols = product(&t.dims[k..]);
    // with first-index-fastest storage the unfolding is a column-major view
    Ok(Mat::from_fn(rows, cols, |i, j| t.data[i + rows * j]))
}

/// Inverse of [`unfold`]. `k = p` is accepted and reads an `N × 1` column.
pub fn fold(m: MatRef<'_, f64>, dims: &[usize], k: usize) -> Result<DenseTensor> {
    let p = dims.len();
    if k == 0 || k > p {
        return Err(Error::argument(format!("split position {k} outside 1..={p}")));
    }
    let rows = product(&dims[..k]);
    let cols = product(&dims[k..]);
    if m.nrows() != rows || m.ncols() != cols {
        return Err(Error::argument(format!(
            "matrix is {}x{}, dims {dims:?} split at {k} need {rows}x{cols}",
            m.nrows(),
            m.ncols()
        )));
    }
    let mut data = vec![0.0; rows * cols];
    for j in 0..cols {
        for i in 0..rows {
            data[i + rows * j] = m[(i, j)];
        }
    }
    DenseTensor::new(dims.to_vec(), data)
}

/// Matrix whose columns are an orthonormal basis of a subspace of `ℝ^N`.
#[derive(Debug, Clone)]
pub struct OrthonormalBasis {
    columns: Mat<f64>,
}

/// Gram-matrix tolerance for accepting a basis as orthonormal.
pub const ORTHONORMAL_TOL: f64 = 1e-8;

impl OrthonormalBasis {
    /// Validates `columnsᵀ·columns = I` within [`ORTHONORMAL_TOL`].
    pub fn new(columns: Mat<f64>) -> Result<Self> {
        let dev = linalg::gram_deviation(columns.as_ref());
        if dev > ORTHONORMAL_TOL {
            return Err(Error::Validation(format!(
                "basis columns are not orthonormal (Gram deviation {dev:.3e})"
            )));
        }
        Ok(OrthonormalBasis { columns })
    }

    /// Orthonormal basis of the column span of `a` (which must have full
    /// column rank).
    pub fn from_span(a: MatRef<'_, f64>) -> Result<Self> {
        let svd = linalg::truncated_svd(a, 1e-12, None)?;
        if svd.rank() < a.ncols() || svd.s[0] == 0.0 {
            return Err(Error::degenerate(format!(
                "spanning set has rank {} < {} columns",
                svd.rank(),
                a.ncols()
            )));
        }
        Ok(OrthonormalBasis { columns: svd.u })
    }

    pub fn columns(&self) -> MatRef<'_, f64> {
        self.columns.as_ref()
    }

    pub fn ambient_dim(&self) -> usize {
        self.columns.nrows()
    }

    pub fn dim(&self) -> usize {
        self.columns.ncols()
    }

    /// Basis of `span(self) ⊗ ℝ^{n}` in the first-index-fastest layout: the
    /// vector for `(column c, unit e_j)` has entry `F[i, c]` at `i + N·j`.
    pub fn tensor_with_identity(&self, n: usize) -> OrthonormalBasis {
        let big_n = self.ambient_dim();
        let r = self.dim();
        let mut out = Mat::<f64>::zeros(big_n * n, r * n);
        for j in 0..n {
            for c in 0..r {
                for i in 0..big_n {
                    out[(i + big_n * j, c + r * j)] = self.columns[(i, c)];
                }
            }
        }
        OrthonormalBasis { columns: out }
    }
}

/// `d(F, G) = ‖(I − G·Gᵀ)·F‖₂`, the largest distance of a unit vector of `F`
/// to the subspace `G`.
pub fn subspace_distance(f: &OrthonormalBasis, g: &OrthonormalBasis) -> Result<f64> {
    if f.ambient_dim() != g.ambient_dim() {
        return Err(Error::argument(format!(
            "ambient dimensions differ: {} vs {}",
            f.ambient_dim(),
            g.ambient_dim()
        )));
    }
    let gf = g.columns().transpose() * f.columns();
    let residual = f.columns() - g.columns() * &gf;
    Ok(linalg::spectral_norm(residual.as_ref())?.clamp(0.0, 1.0))
}
