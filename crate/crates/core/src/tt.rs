//! Tensor trains, left-orthonormalization sweeps and the global SVD of the
//! last unfolding.
//!
//! Cores have shape `r_{k-1} × n_k × r_k` and are stored with the first index
//! fastest, so the `(r_{k-1}·n_k) × r_k` unfolding of a core is a plain
//! column-major view of its data. Two structured core kinds exist for the
//! transformed data tensor, whose interior cores are block diagonal in the
//! snapshot index and would be quadratic in `m` if stored densely.

use faer::{Mat, MatRef};
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{self, TruncatedSvd};
use crate::tensor::{fold, DenseTensor, MultiIndex};

/// Upper bound on entries materialized by dense conversions.
pub const DENSE_LIMIT: usize = 10_000_000;

/// A dense order-3 core, first index fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseCore {
    r_left: usize,
    n: usize,
    r_right: usize,
    data: Vec<f64>,
}

impl DenseCore {
    pub fn new(r_left: usize, n: usize, r_right: usize, data: Vec<f64>) -> Result<Self> {
        if r_left == 0 || n == 0 || r_right == 0 {
            return Err(Error::argument(format!("core shape {r_left}x{n}x{r_right} has a zero extent")));
        }
        if data.len() != r_left * n * r_right {
            return Err(Error::argument(format!(
                "core data has {} entries, shape {r_left}x{n}x{r_right}",
                data.len()
            )));
        }
        Ok(DenseCore { r_left, n, r_right, data })
    }

    pub fn zeros(r_left: usize, n: usize, r_right: usize) -> Self {
        DenseCore { r_left, n, r_right, data: vec![0.0; r_left * n * r_right] }
    }

    /// Folds a `(r_left·n) × r_right` matrix (row index `l + r_left·i`).
    pub fn from_left_unfolding(m: MatRef<'_, f64>, r_left: usize, n: usize) -> Result<Self> {
        if m.nrows() != r_left * n {
            return Err(Error::argument(format!(
                "unfolding has {} rows, expected {r_left}·{n}",
                m.nrows()
            )));
        }
        let r_right = m.ncols();
        let mut data = Vec::with_capacity(m.nrows() * r_right);
        for j in 0..r_right {
            for i in 0..m.nrows() {
                data.push(m[(i, j)]);
            }
        }
        DenseCore::new(r_left, n, r_right, data)
    }

    /// Folds a `r_left × (n·r_right)` matrix (column index `i + n·r`).
    pub fn from_right_unfolding(m: MatRef<'_, f64>, n: usize, r_right: usize) -> Result<Self> {
        if m.ncols() != n * r_right {
            return Err(Error::argument(format!(
                "unfolding has {} columns, expected {n}·{r_right}",
                m.ncols()
            )));
        }
        let r_left = m.nrows();
        let mut data = Vec::with_capacity(r_left * m.ncols());
        for j in 0..m.ncols() {
            for i in 0..r_left {
                data.push(m[(i, j)]);
            }
        }
        DenseCore::new(r_left, n, r_right, data)
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.r_left, self.n, self.r_right)
    }

    /// 0-based entry access.
    pub fn at(&self, l: usize, i: usize, r: usize) -> f64 {
        self.data[l + self.r_left * (i + self.n * r)]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// `(r_left·n) × r_right` unfolding.
    pub fn left_unfolding(&self) -> Mat<f64> {
        let rows = self.r_left * self.n;
        Mat::from_fn(rows, self.r_right, |i, j| self.data[i + rows * j])
    }

    /// `r_left × (n·r_right)` unfolding.
    pub fn right_unfolding(&self) -> Mat<f64> {
        Mat::from_fn(self.r_left, self.n * self.r_right, |i, j| self.data[i + self.r_left * j])
    }

    /// Slice `core[:, i, :]` as an `r_left × r_right` matrix (0-based `i`).
    pub fn slice(&self, i: usize) -> Mat<f64> {
        Mat::from_fn(self.r_left, self.r_right, |a, b| self.at(a, i, b))
    }
}

/// One TT core.
#[derive(Debug, Clone, PartialEq)]
pub enum Core {
    Dense(DenseCore),
    /// `m × n × m` core with `core[a, i, b] = δ_ab · values[(i, a)]`; `values`
    /// is `n × m`.
    Diagonal(Mat<f64>),
    /// `m × m × 1` core stacking the unit vectors: `core[a, t, 0] = δ_at`.
    Selector(usize),
}

impl Core {
    /// `(r_left, n, r_right)`.
    pub fn shape(&self) -> (usize, usize, usize) {
        match self {
            Core::Dense(c) => c.shape(),
            Core::Diagonal(v) => (v.ncols(), v.nrows(), v.ncols()),
            Core::Selector(m) => (*m, *m, 1),
        }
    }

    /// 0-based entry access.
    pub fn at(&self, l: usize, i: usize, r: usize) -> f64 {
        match self {
            Core::Dense(c) => c.at(l, i, r),
            Core::Diagonal(v) => {
                if l == r {
                    v[(i, l)]
                } else {
                    0.0
                }
            }
            Core::Selector(_) => {
                if l == i && r == 0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Row vector times the slice `core[:, i, :]`.
    fn apply_slice(&self, v: &[f64], i: usize) -> Vec<f64> {
        match self {
            Core::Dense(c) => {
                let (rl, _, rr) = c.shape();
                (0..rr).map(|b| (0..rl).map(|a| v[a] * c.at(a, i, b)).sum()).collect()
            }
            Core::Diagonal(vals) => v.iter().enumerate().map(|(a, x)| x * vals[(i, a)]).collect(),
            Core::Selector(_) => vec![v[i]],
        }
    }

    /// `out[(l + rows·i), b] = Σ_a left[l, a] · core[a, i, b]`, the
    /// `(rows·n) × r_right` matrix obtained by absorbing `left` into the core.
    pub fn absorb_left(&self, left: MatRef<'_, f64>) -> Result<Mat<f64>> {
        let (rl, n, rr) = self.shape();
        if left.ncols() != rl {
            return Err(Error::argument(format!(
                "cannot absorb a matrix with {} columns into a core with left rank {rl}",
                left.ncols()
            )));
        }
        let rows = left.nrows();
        Ok(match self {
            Core::Dense(c) => {
                // left · (r_left × n·r_right unfolding) has the same column-major
                // data as the (rows·n) × r_right result
                let t = left * c.right_unfolding();
                Mat::from_fn(rows * n, rr, |i, j| {
                    let flat = i + rows * n * j;
                    t[(flat % rows, flat / rows)]
                })
            }
            Core::Diagonal(vals) => Mat::from_fn(rows * n, rr, |i, b| left[(i % rows, b)] * vals[(i / rows, b)]),
            Core::Selector(_) => Mat::from_fn(rows * n, 1, |i, _| left[(i % rows, i / rows)]),
        })
    }

    pub fn to_dense(&self) -> DenseCore {
        match self {
            Core::Dense(c) => c.clone(),
            other => {
                let (rl, n, rr) = other.shape();
                let mut data = Vec::with_capacity(rl * n * rr);
                for b in 0..rr {
                    for i in 0..n {
                        for a in 0..rl {
                            data.push(other.at(a, i, b));
                        }
                    }
                }
                DenseCore { r_left: rl, n, r_right: rr, data }
            }
        }
    }
}

impl From<DenseCore> for Core {
    fn from(c: DenseCore) -> Self {
        Core::Dense(c)
    }
}

fn check_chain(shapes: impl Iterator<Item = (usize, usize, usize)>) -> Result<Vec<(usize, usize, usize)>> {
    let shapes: Vec<_> = shapes.collect();
    if shapes.is_empty() {
        return Err(Error::argument("a tensor train needs at least one core"));
    }
    if shapes[0].0 != 1 {
        return Err(Error::argument(format!("first rank must be 1, got {}", shapes[0].0)));
    }
    for (k, w) in shapes.windows(2).enumerate() {
        if w[0].2 != w[1].0 {
            return Err(Error::argument(format!(
                "rank mismatch between cores {} and {}: {} vs {}",
                k + 1,
                k + 2,
                w[0].2,
                w[1].0
            )));
        }
    }
    Ok(shapes)
}

/// A tensor in TT format with `r_0 = r_p = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorTrain {
    cores: Vec<Core>,
}

impl TensorTrain {
    pub fn new(cores: Vec<Core>) -> Result<Self> {
        let shapes = check_chain(cores.iter().map(Core::shape))?;
        let last = shapes.last().map(|s| s.2).unwrap_or(1);
        if last != 1 {
            return Err(Error::argument(format!("last rank must be 1, got {last}")));
        }
        Ok(TensorTrain { cores })
    }

    pub fn from_dense_cores(cores: Vec<DenseCore>) -> Result<Self> {
        Self::new(cores.into_iter().map(Core::Dense).collect())
    }

    /// Random cores with entries uniform in `[-1, 1]`.
    pub fn random<R: Rng + ?Sized>(dims: &[usize], ranks: &[usize], rng: &mut R) -> Result<Self> {
        if ranks.len() != dims.len() + 1 {
            return Err(Error::argument("ranks must have one more entry than dims"));
        }
        let cores = dims
            .iter()
            .enumerate()
            .map(|(k, &n)| {
                let len = ranks[k] * n * ranks[k + 1];
                DenseCore::new(ranks[k], n, ranks[k + 1], (0..len).map(|_| rng.random_range(-1.0..1.0)).collect())
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_dense_cores(cores)
    }

    pub fn cores(&self) -> &[Core] {
        &self.cores
    }

    pub fn into_cores(self) -> Vec<Core> {
        self.cores
    }

    pub fn order(&self) -> usize {
        self.cores.len()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.cores.iter().map(|c| c.shape().1).collect()
    }

    /// `(r_0, …, r_p)`.
    pub fn ranks(&self) -> Vec<usize> {
        let mut r = vec![1];
        r.extend(self.cores.iter().map(|c| c.shape().2));
        r
    }
}

/// Entry at a 1-based multi-index via the product chain of core slices.
pub fn tt_entry(tt: &TensorTrain, mi: &MultiIndex) -> Result<f64> {
    mi.check(&tt.dims())?;
    let mut v = vec![1.0];
    for (core, &i) in tt.cores.iter().zip(mi.as_slice()) {
        v = core.apply_slice(&v, i - 1);
    }
    Ok(v[0])
}

/// Contracts `left` (rows × r_0 of the first core) through `cores`, giving the
/// `(rows·∏n_k) × r_last` matrix with the row index first-fastest.
fn contract_all(cores: &[Core], capacity: usize) -> Result<Mat<f64>> {
    let mut acc = Mat::from_fn(1, 1, |_, _| 1.0);
    for core in cores {
        let (_, n, rr) = core.shape();
        let need = acc.nrows() * n * rr.max(core.shape().0);
        if need > capacity {
            return Err(Error::Capacity { what: "dense tensor-train contraction", requested: need, limit: capacity });
        }
        let next = core.absorb_left(acc.as_ref())?;
        acc = next;
    }
    Ok(acc)
}

/// Materializes a tensor train (at most [`DENSE_LIMIT`] entries).
pub fn tt_to_dense(tt: &TensorTrain) -> Result<DenseTensor> {
    let dims = tt.dims();
    let total: usize = dims.iter().product();
    if total > DENSE_LIMIT {
        return Err(Error::Capacity { what: "dense tensor", requested: total, limit: DENSE_LIMIT });
    }
    let flat = contract_all(tt.cores(), DENSE_LIMIT)?;
    DenseTensor::new(dims, (0..total).map(|i| flat[(i, 0)]).collect())
}

/// TT-SVD of a dense tensor: sequential truncated SVDs, each keeping singular
/// values `σ ≥ eps·σ_max` of its split.
pub fn tt_from_dense(t: &DenseTensor, eps: f64) -> Result<TensorTrain> {
    if eps < 0.0 {
        return Err(Error::argument("eps must be non-negative"));
    }
    let dims = t.dims().to_vec();
    let p = dims.len();
    let mut cores = Vec::with_capacity(p);
    let mut rest: usize = dims.iter().product();
    // current (r·n_k) × rest matrix; data stays in one column-major buffer
    let mut data = t.data().to_vec();
    let mut r = 1usize;
    for &n in dims.iter().take(p - 1) {
        rest /= n;
        let rows = r * n;
        let m = Mat::from_fn(rows, rest, |i, j| data[i + rows * j]);
        let svd = linalg::truncated_svd(m.as_ref(), eps, None)?;
        cores.push(DenseCore::from_left_unfolding(svd.u.as_ref(), r, n)?);
        let next = svd.s_vt();
        r = svd.rank();
        data = Vec::with_capacity(r * rest);
        for j in 0..rest {
            for i in 0..r {
                data.push(next[(i, j)]);
            }
        }
    }
    cores.push(DenseCore::new(r, dims[p - 1], 1, data)?);
    TensorTrain::from_dense_cores(cores)
}

/// Truncation settings for orthonormalization sweeps.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    /// Relative threshold: singular values below `eps·σ_max` of a split are
    /// discarded. `0` keeps everything above floating-point noise.
    pub eps: f64,
    /// Apply `eps` at every sweep split (otherwise only the final SVD of a
    /// global SVD truncates).
    pub truncate_sweep: bool,
    /// Optional hard rank caps `r_1, r_2, …` for the sweep splits.
    pub max_ranks: Option<Vec<usize>>,
}

impl SweepConfig {
    pub fn new(eps: f64) -> Self {
        SweepConfig { eps, truncate_sweep: true, max_ranks: None }
    }

    pub fn with_max_ranks(mut self, ranks: Vec<usize>) -> Self {
        self.max_ranks = Some(ranks);
        self
    }

    pub fn final_only(mut self) -> Self {
        self.truncate_sweep = false;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.eps >= 0.0) || !self.eps.is_finite() {
            return Err(Error::argument(format!("eps must be a finite non-negative number, got {}", self.eps)));
        }
        Ok(())
    }

    fn split_eps(&self) -> f64 {
        if self.truncate_sweep {
            self.eps
        } else {
            0.0
        }
    }

    fn cap(&self, k: usize) -> Option<usize> {
        self.max_ranks.as_ref().and_then(|r| r.get(k).copied())
    }
}

/// A TT segment of shape `n_1 × … × n_q × r`: `r_0 = 1`, open last rank.
#[derive(Debug, Clone, PartialEq)]
pub struct TtSegment {
    cores: Vec<DenseCore>,
}

impl TtSegment {
    pub fn new(cores: Vec<DenseCore>) -> Result<Self> {
        check_chain(cores.iter().map(DenseCore::shape))?;
        Ok(TtSegment { cores })
    }

    pub fn cores(&self) -> &[DenseCore] {
        &self.cores
    }

    pub fn dims(&self) -> Vec<usize> {
        self.cores.iter().map(|c| c.n).collect()
    }

    /// `(1, r_1, …, r_q)`.
    pub fn ranks(&self) -> Vec<usize> {
        let mut r = vec![1];
        r.extend(self.cores.iter().map(|c| c.r_right));
        r
    }

    pub fn out_rank(&self) -> usize {
        self.cores.last().map(|c| c.r_right).unwrap_or(1)
    }

    /// `Uᵀ·U` computed core by core, without forming the dense segment.
    pub fn gram(&self) -> Mat<f64> {
        let mut g = Mat::from_fn(1, 1, |_, _| 1.0);
        for core in &self.cores {
            let mut next = Mat::<f64>::zeros(core.r_right, core.r_right);
            for i in 0..core.n {
                let s = core.slice(i);
                next += s.transpose() * (&g * &s);
            }
            g = next;
        }
        g
    }

    /// Largest deviation of `Uᵀ·U` from the identity.
    pub fn orthonormality_error(&self) -> f64 {
        let g = self.gram();
        let mut worst: f64 = 0.0;
        for i in 0..g.nrows() {
            for j in 0..g.ncols() {
                let t = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g[(i, j)] - t).abs());
            }
        }
        worst
    }

    /// Dense `(∏ n_k) × r` matrix of the segment (guarded).
    pub fn to_matrix(&self) -> Result<Mat<f64>> {
        let total: usize = self.dims().iter().product::<usize>() * self.out_rank();
        if total > DENSE_LIMIT {
            return Err(Error::Capacity { what: "dense TT segment", requested: total, limit: DENSE_LIMIT });
        }
        let cores: Vec<Core> = self.cores.iter().cloned().map(Core::Dense).collect();
        contract_all(&cores, DENSE_LIMIT)
    }

    /// Multiplies the open last rank by `m` (`r × r'`).
    pub fn times_right(&self, m: MatRef<'_, f64>) -> Result<TtSegment> {
        let mut cores = self.cores.clone();
        let last = cores.pop().ok_or_else(|| Error::argument("empty segment"))?;
        let unf = last.left_unfolding();
        if unf.ncols() != m.nrows() {
            return Err(Error::argument("rank mismatch in times_right"));
        }
        let prod = &unf * m;
        cores.push(DenseCore::from_left_unfolding(prod.as_ref(), last.r_left, last.n)?);
        TtSegment::new(cores)
    }
}

/// Left-orthonormal segment plus the remaining coefficient matrix.
///
/// For a tensor train of order `q+1` this holds cores `1..=q` (left
/// orthonormal) and the last core as an `r_q × n_{q+1}` matrix, so that the
/// mode-`q` unfolding equals `segment · last`.
#[derive(Debug, Clone)]
pub struct LeftOrthonormalForm {
    pub segment: TtSegment,
    pub last: Mat<f64>,
}

impl LeftOrthonormalForm {
    /// Sweep ranks `(1, r_1, …, r_q)`.
    pub fn ranks(&self) -> Vec<usize> {
        self.segment.ranks()
    }
}

/// Exact right-to-left QR pass leaving orthonormal rows in the right
/// unfolding of every core but the first. After it, the singular values seen
/// at each split of a left-to-right sweep are those of the tensor itself, so
/// truncating them is bounded relative to the whole tensor.
fn right_orthonormalized(cores: &[Core]) -> Result<Vec<Core>> {
    let mut out: Vec<DenseCore> = cores.iter().map(Core::to_dense).collect();
    for k in (1..out.len()).rev() {
        let (_, n, r_right) = out[k].shape();
        let qr = out[k].right_unfolding().transpose().qr();
        let q = qr.compute_thin_Q();
        let r = qr.thin_R().to_owned();
        out[k] = DenseCore::from_right_unfolding(q.transpose(), n, r_right)?;
        let (pl, pn, _) = out[k - 1].shape();
        let merged = out[k - 1].left_unfolding() * r.transpose();
        out[k - 1] = DenseCore::from_left_unfolding(merged.as_ref(), pl, pn)?;
    }
    Ok(out.into_iter().map(Core::Dense).collect())
}

/// Runs the orthonormalizing sweep over all cores but the last and returns
/// the segment together with the reshaped last core.
pub fn left_orthonormal_form(tt: &TensorTrain, cfg: &SweepConfig) -> Result<LeftOrthonormalForm> {
    cfg.validate()?;
    let cores = tt.cores();
    if cores.len() < 2 {
        return Err(Error::argument("need a tensor train of order >= 2"));
    }
    let gauged;
    let cores = if cores.iter().all(|c| matches!(c, Core::Dense(_))) {
        gauged = right_orthonormalized(cores)?;
        &gauged[..]
    } else {
        cores
    };
    let (head, tail) = cores.split_at(cores.len() - 1);
    let mut segment = Vec::with_capacity(head.len());
    let mut carry = Mat::from_fn(1, 1, |_, _| 1.0);
    for (k, core) in head.iter().enumerate() {
        let b = core.absorb_left(carry.as_ref())?;
        let svd = linalg::truncated_svd(b.as_ref(), cfg.split_eps(), cfg.cap(k))?;
        segment.push(DenseCore::from_left_unfolding(svd.u.as_ref(), carry.nrows(), core.shape().1)?);
        carry = svd.s_vt();
    }
    let last_core = &tail[0];
    let flat = last_core.absorb_left(carry.as_ref())?;
    let r = carry.nrows();
    let n = last_core.shape().1;
    let last = Mat::from_fn(r, n, |a, t| flat[(a + r * t, 0)]);
    Ok(LeftOrthonormalForm { segment: TtSegment::new(segment)?, last })
}

/// Left-orthonormalizes all cores but the last; see [`SweepConfig`] for the
/// truncation semantics.
pub fn left_orthonormalize(tt: &TensorTrain, eps: f64) -> Result<TensorTrain> {
    if tt.order() == 1 {
        return Ok(TensorTrain::from_dense_cores(vec![tt.cores()[0].to_dense()])?);
    }
    let form = left_orthonormal_form(tt, &SweepConfig::new(eps))?;
    let mut cores: Vec<Core> = form.segment.cores.into_iter().map(Core::Dense).collect();
    let (r, n) = (form.last.nrows(), form.last.ncols());
    cores.push(Core::Dense(DenseCore::from_right_unfolding(form.last.as_ref(), n, 1)?));
    debug_assert_eq!(cores.last().map(|c| c.shape().0), Some(r));
    TensorTrain::new(cores)
}

/// SVD of the last unfolding of a tensor train: `unfold = U · diag(σ) · Vᵀ`.
#[derive(Debug, Clone)]
pub struct GlobalSvd {
    pub u_segment: TtSegment,
    pub sigma: Vec<f64>,
    /// `n_{q+1} × r`, orthonormal columns.
    pub v: Mat<f64>,
    /// Sweep ranks before the final SVD, `(1, r_1, …, r_q)`.
    pub sweep_ranks: Vec<usize>,
}

impl GlobalSvd {
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    /// Dense `U · diag(σ) · Vᵀ` (guarded).
    pub fn reconstruct_unfolding(&self) -> Result<Mat<f64>> {
        let u = self.u_segment.to_matrix()?;
        let sv = Mat::from_fn(self.rank(), self.v.nrows(), |i, j| self.sigma[i] * self.v[(j, i)]);
        Ok(u * sv)
    }
}

/// Splits the last-core matrix of a left-orthonormal form by a truncated SVD.
pub fn global_svd_from_form(form: &LeftOrthonormalForm, eps: f64) -> Result<GlobalSvd> {
    let TruncatedSvd { u, s, v } = linalg::truncated_svd(form.last.as_ref(), eps, None)?;
    if s[0] <= 0.0 {
        return Err(Error::degenerate("tensor is zero; no positive singular values"));
    }
    Ok(GlobalSvd {
        u_segment: form.segment.times_right(u.as_ref())?,
        sigma: s,
        v,
        sweep_ranks: form.ranks(),
    })
}

/// Global SVD of a tensor train of order `q+1` (mode-`q` unfolding).
pub fn global_svd(tt: &TensorTrain, eps: f64) -> Result<GlobalSvd> {
    global_svd_with(tt, &SweepConfig::new(eps))
}

pub fn global_svd_with(tt: &TensorTrain, cfg: &SweepConfig) -> Result<GlobalSvd> {
    let form = left_orthonormal_form(tt, cfg)?;
    global_svd_from_form(&form, cfg.eps)
}

/// Re-folds a mode-k unfolding given in matrix form (test and oracle helper).
pub fn dense_from_unfolding(m: MatRef<'_, f64>, dims: &[usize], k: usize) -> Result<DenseTensor> {
    fold(m, dims, k)
}
