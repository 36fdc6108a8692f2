//! EDMD and CCA spectra: dense reference solvers and their tensor-train
//! counterparts, plus implied timescales and simple post-processing.

use faer::{c64, Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::basis::{transform_exact, transform_streamed, BasisSpec};
use crate::data::Snapshots;
use crate::error::{Error, Result};
use crate::hocur::{hocur_transform, HocurConfig};
use crate::linalg::{self, TruncatedSvd};
use crate::tensor::{subspace_distance, OrthonormalBasis};
use crate::tt::{left_orthonormal_form, SweepConfig, TtSegment, DENSE_LIMIT};

/// Snapshot pairs `(x_t, y_t)`, either given directly or as columns of one
/// trajectory matrix.
#[derive(Debug, Clone)]
pub enum TrajectoryPair {
    Paired { x: Snapshots, y: Snapshots },
    /// `x = z[x_index]`, `y = z[y_index]` with 1-based positions.
    Indexed { z: Snapshots, x_index: Vec<usize>, y_index: Vec<usize> },
}

impl TrajectoryPair {
    pub fn paired(x: Snapshots, y: Snapshots) -> Result<Self> {
        if x.len() != y.len() || x.dim() != y.dim() {
            return Err(Error::Validation(format!(
                "X is {}x{} but Y is {}x{}",
                x.dim(),
                x.len(),
                y.dim(),
                y.len()
            )));
        }
        if x.is_empty() {
            return Err(Error::Data("no snapshot pairs".into()));
        }
        Ok(TrajectoryPair::Paired { x, y })
    }

    pub fn indexed(z: Snapshots, x_index: Vec<usize>, y_index: Vec<usize>) -> Result<Self> {
        if x_index.len() != y_index.len() {
            return Err(Error::Validation(format!(
                "index sets have different sizes {} and {}",
                x_index.len(),
                y_index.len()
            )));
        }
        if x_index.is_empty() {
            return Err(Error::Data("no snapshot pairs".into()));
        }
        let m = z.len();
        if let Some(&bad) = x_index.iter().chain(&y_index).find(|&&i| i == 0 || i > m) {
            return Err(Error::bounds(format!("snapshot index {bad} outside 1..={m}")));
        }
        Ok(TrajectoryPair::Indexed { z, x_index, y_index })
    }

    /// Sliding window with an integer frame lag: `x = z[1..=m-lag]`,
    /// `y = z[1+lag..=m]`.
    pub fn lagged(z: Snapshots, lag: usize) -> Result<Self> {
        let m = z.len();
        if lag >= m {
            return Err(Error::Validation(format!("lag {lag} must be smaller than the trajectory length {m}")));
        }
        Self::indexed(z, (1..=m - lag).collect(), (1 + lag..=m).collect())
    }

    /// Number of pairs.
    pub fn len(&self) -> usize {
        match self {
            TrajectoryPair::Paired { x, .. } => x.len(),
            TrajectoryPair::Indexed { x_index, .. } => x_index.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn x(&self) -> Result<Snapshots> {
        match self {
            TrajectoryPair::Paired { x, .. } => Ok(x.clone()),
            TrajectoryPair::Indexed { z, x_index, .. } => z.select(x_index),
        }
    }

    pub fn y(&self) -> Result<Snapshots> {
        match self {
            TrajectoryPair::Paired { y, .. } => Ok(y.clone()),
            TrajectoryPair::Indexed { z, y_index, .. } => z.select(y_index),
        }
    }

    /// `(Z, I_X, I_Y)` with 0-based indices; a direct pair becomes `Z = [X Y]`.
    fn combined(&self) -> Result<(Snapshots, Vec<usize>, Vec<usize>)> {
        match self {
            TrajectoryPair::Paired { x, y } => {
                let m = x.len();
                Ok((x.concat(y)?, (0..m).collect(), (m..2 * m).collect()))
            }
            TrajectoryPair::Indexed { z, x_index, y_index } => Ok((
                z.clone(),
                x_index.iter().map(|i| i - 1).collect(),
                y_index.iter().map(|i| i - 1).collect(),
            )),
        }
    }
}

/// How the transformed data tensor is built.
#[derive(Debug, Clone, PartialEq)]
pub enum Method {
    Exact,
    Streamed,
    Hocur(HocurConfig),
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Exact => "exact",
            Method::Streamed => "streamed",
            Method::Hocur(_) => "hocur",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpectralKind {
    Edmd,
    Cca,
}

/// Reduced factors of the eigentensors: `Ξ = segment · coefficients`.
#[derive(Debug, Clone)]
pub struct Eigentensor {
    pub segment: TtSegment,
    /// `r_p × q`, equal to `U_X · Σ⁻¹ · W`.
    pub coefficients: Mat<c64>,
}

impl Eigentensor {
    /// Dense `N × q` matrix of eigenvectors (guarded).
    pub fn to_dense(&self) -> Result<Mat<c64>> {
        let u = to_complex(self.segment.to_matrix()?.as_ref());
        Ok(u * &self.coefficients)
    }
}

/// Output of the spectral solvers.
#[derive(Debug, Clone)]
pub struct SpectralResult {
    pub kind: SpectralKind,
    /// Eigenvalues (EDMD) or squared singular values (CCA), sorted.
    pub values: Vec<c64>,
    /// CCA singular values `σ_k`; empty for EDMD.
    pub singular_values: Vec<f64>,
    /// `W`, the leading `q` eigenvectors or right singular vectors of the
    /// reduced matrix.
    pub reduced_vectors: Mat<c64>,
    /// `q × m` eigenfunction values at the `x` snapshots.
    pub eigenfunctions: Mat<c64>,
    /// Sweep ranks `r_1, …, r_p` (dense solvers report none).
    pub ranks: Vec<usize>,
    /// Dimension of the retained subspace (rank of the reduced matrix).
    pub retained_rank: usize,
    pub eps: f64,
    pub symmetrized: bool,
    /// Largest deviation of the whitened mass matrices from the identity
    /// (dense CCA only).
    pub whitening_residual: Option<f64>,
    pub eigentensor: Option<Eigentensor>,
    pub warnings: Vec<String>,
}

impl SpectralResult {
    pub fn real_values(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.re).collect()
    }
}

fn to_complex(a: MatRef<'_, f64>) -> Mat<c64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| c64::new(a[(i, j)], 0.0))
}

fn check_positive(svd: &TruncatedSvd, what: &str) -> Result<()> {
    if !(svd.s[0] > 0.0) {
        return Err(Error::degenerate(format!("{what} is zero")));
    }
    Ok(())
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(Error::argument(format!("eps must be a finite non-negative number, got {eps}")));
    }
    Ok(())
}

fn resolve_q(q: Option<usize>, available: usize) -> Result<usize> {
    match q {
        None => Ok(available),
        Some(0) => Err(Error::argument("q must be positive")),
        Some(q) if q > available => {
            Err(Error::argument(format!("q = {q} exceeds the retained rank {available}")))
        }
        Some(q) => Ok(q),
    }
}

/// `M = V_Xᵀ · Y_coordsᵀ · U_X · Σ⁻¹` for `X_coords = U_X Σ V_Xᵀ`.
fn reduced_edmd_matrix(svd: &TruncatedSvd, y_coords: MatRef<'_, f64>) -> Mat<f64> {
    let left = svd.v.transpose() * y_coords.transpose();
    let mut m = left * &svd.u;
    for j in 0..m.ncols() {
        let inv = 1.0 / svd.s[j];
        for i in 0..m.nrows() {
            m[(i, j)] *= inv;
        }
    }
    m
}

struct EdmdCore {
    values: Vec<c64>,
    vectors: Mat<c64>,
    eigenfunctions: Mat<c64>,
}

fn solve_reduced_edmd(m: Mat<f64>, v_x: MatRef<'_, f64>, symmetrize: bool, q: usize) -> Result<EdmdCore> {
    let m = if symmetrize {
        Mat::from_fn(m.nrows(), m.ncols(), |i, j| 0.5 * (m[(i, j)] + m[(j, i)]))
    } else {
        m
    };
    let (vals, vecs) = linalg::sorted_eigen(m.as_ref(), symmetrize)?;
    let w = vecs.get(.., 0..q).to_owned();
    // Φ = Wᵀ · V_Xᵀ (transpose, not conjugate transpose)
    let phi = w.transpose() * to_complex(v_x.transpose());
    Ok(EdmdCore { values: vals[..q].to_vec(), vectors: w, eigenfunctions: phi })
}

/// Dense EDMD from the `N × m` transformed data matrices. Returns the result
/// and the back-transform `U · Σ⁻¹`, so that the eigenvectors are
/// `back_transform · W`.
pub fn amuse_dense(
    psi_x: MatRef<'_, f64>,
    psi_y: MatRef<'_, f64>,
    trunc: f64,
    symmetrize: bool,
) -> Result<(SpectralResult, Mat<f64>)> {
    check_eps(trunc)?;
    if psi_x.nrows() != psi_y.nrows() || psi_x.ncols() != psi_y.ncols() {
        return Err(Error::argument("Psi(X) and Psi(Y) must have the same shape"));
    }
    let svd = linalg::truncated_svd(psi_x, trunc, None)?;
    check_positive(&svd, "Psi(X)")?;
    let m = reduced_edmd_matrix(&svd, psi_y);
    let r = svd.rank();
    let core = solve_reduced_edmd(m, svd.v.as_ref(), symmetrize, r)?;
    let back = Mat::from_fn(svd.u.nrows(), r, |i, j| svd.u[(i, j)] / svd.s[j]);
    Ok((
        SpectralResult {
            kind: SpectralKind::Edmd,
            values: core.values,
            singular_values: Vec::new(),
            reduced_vectors: core.vectors,
            eigenfunctions: core.eigenfunctions,
            ranks: Vec::new(),
            retained_rank: r,
            eps: trunc,
            symmetrized: symmetrize,
            whitening_residual: None,
            eigentensor: None,
            warnings: Vec::new(),
        },
        back,
    ))
}

/// `max |T Tᵀ − I|` with `T = Σ⁻¹ Uᵀ Ψ`.
fn whitening_residual(svd: &TruncatedSvd, psi: MatRef<'_, f64>) -> f64 {
    let mut t = svd.u.transpose() * psi;
    for i in 0..t.nrows() {
        let inv = 1.0 / svd.s[i];
        for j in 0..t.ncols() {
            t[(i, j)] *= inv;
        }
    }
    let g = &t * t.transpose();
    let mut worst: f64 = 0.0;
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - target).abs());
        }
    }
    worst
}

struct CcaCore {
    sigma: Vec<f64>,
    vectors: Mat<c64>,
    eigenfunctions: Mat<c64>,
}

fn solve_reduced_cca(v_x: MatRef<'_, f64>, v_y: MatRef<'_, f64>) -> Result<CcaCore> {
    let m = v_y.transpose() * v_x;
    let svd = linalg::thin_svd(m.as_ref())?;
    let phi = (v_x * &svd.v).transpose().to_owned();
    Ok(CcaCore { sigma: svd.s, vectors: to_complex(svd.v.as_ref()), eigenfunctions: to_complex(phi.as_ref()) })
}

fn cca_result(core: CcaCore, q: usize, ranks: Vec<usize>, eps: f64, whitening: Option<f64>, warnings: Vec<String>) -> SpectralResult {
    let sigma: Vec<f64> = core.sigma[..q].to_vec();
    SpectralResult {
        kind: SpectralKind::Cca,
        values: sigma.iter().map(|s| c64::new(s * s, 0.0)).collect(),
        singular_values: sigma,
        reduced_vectors: core.vectors.get(.., 0..q).to_owned(),
        eigenfunctions: core.eigenfunctions.get(0..q, ..).to_owned(),
        ranks,
        retained_rank: core.sigma.len(),
        eps,
        symmetrized: false,
        whitening_residual: whitening,
        eigentensor: None,
        warnings,
    }
}

/// Dense CCA of the forward-backward problem from the transformed data
/// matrices; also reports how far the whitened mass matrices are from the
/// identity.
pub fn cca_dense(psi_x: MatRef<'_, f64>, psi_y: MatRef<'_, f64>, trunc: f64) -> Result<SpectralResult> {
    check_eps(trunc)?;
    if psi_x.ncols() != psi_y.ncols() {
        return Err(Error::argument("Psi(X) and Psi(Y) must have the same number of snapshots"));
    }
    let sx = linalg::truncated_svd(psi_x, trunc, None)?;
    check_positive(&sx, "Psi(X)")?;
    let sy = linalg::truncated_svd(psi_y, trunc, None)?;
    check_positive(&sy, "Psi(Y)")?;
    let residual = whitening_residual(&sx, psi_x).max(whitening_residual(&sy, psi_y));
    let core = solve_reduced_cca(sx.v.as_ref(), sy.v.as_ref())?;
    let q = core.sigma.len();
    Ok(cca_result(core, q, Vec::new(), trunc, Some(residual), Vec::new()))
}

/// Left-orthonormal segment and `r_p × m` interface of `Ψ(x)`.
struct Interface {
    segment: TtSegment,
    matrix: Mat<f64>,
    warnings: Vec<String>,
}

fn build_interface(x: &Snapshots, spec: &BasisSpec, eps: f64, method: &Method) -> Result<Interface> {
    let cfg = SweepConfig::new(eps);
    match method {
        Method::Exact => {
            let form = left_orthonormal_form(&transform_exact(x, spec)?, &cfg)?;
            Ok(Interface { segment: form.segment, matrix: form.last, warnings: Vec::new() })
        }
        Method::Streamed => {
            let build = transform_streamed(x, spec, &cfg)?;
            Ok(Interface { segment: build.u_cores, matrix: build.interface, warnings: Vec::new() })
        }
        Method::Hocur(hc) => {
            let out = hocur_transform(x, spec, hc)?;
            let form = left_orthonormal_form(&out.tt, &cfg)?;
            Ok(Interface { segment: form.segment, matrix: form.last, warnings: out.warnings })
        }
    }
}

/// Options for [`amuset_edmd`].
#[derive(Debug, Clone, PartialEq)]
pub struct EdmdOptions {
    pub eps: f64,
    pub method: Method,
    /// Number of eigenpairs to return; all retained ones by default.
    pub q: Option<usize>,
    /// Replace the reduced matrix by its symmetric part (reversible data).
    pub symmetrize: bool,
}

impl EdmdOptions {
    pub fn new(eps: f64, method: Method) -> Self {
        EdmdOptions { eps, method, q: None, symmetrize: false }
    }
}

/// EDMD on the tensor-train representation of `Ψ(Z)`.
pub fn amuset_edmd(data: &TrajectoryPair, spec: &BasisSpec, opts: &EdmdOptions) -> Result<SpectralResult> {
    check_eps(opts.eps)?;
    let (z, ix, iy) = data.combined()?;
    let iface = build_interface(&z, spec, opts.eps, &opts.method)?;
    let m_x = linalg::select_cols(iface.matrix.as_ref(), &ix);
    let m_y = linalg::select_cols(iface.matrix.as_ref(), &iy);
    let svd = linalg::truncated_svd(m_x.as_ref(), opts.eps, None)?;
    check_positive(&svd, "Psi(X)")?;
    let r = svd.rank();
    let q = resolve_q(opts.q, r)?;
    let m = reduced_edmd_matrix(&svd, m_y.as_ref());
    let core = solve_reduced_edmd(m, svd.v.as_ref(), opts.symmetrize, q)?;
    let scaled = Mat::from_fn(svd.u.nrows(), r, |i, j| svd.u[(i, j)] / svd.s[j]);
    let coefficients = to_complex(scaled.as_ref()) * &core.vectors;
    Ok(SpectralResult {
        kind: SpectralKind::Edmd,
        values: core.values,
        singular_values: Vec::new(),
        reduced_vectors: core.vectors,
        eigenfunctions: core.eigenfunctions,
        ranks: iface.segment.ranks()[1..].to_vec(),
        retained_rank: r,
        eps: opts.eps,
        symmetrized: opts.symmetrize,
        whitening_residual: None,
        eigentensor: Some(Eigentensor { segment: iface.segment, coefficients }),
        warnings: iface.warnings,
    })
}

/// Options for [`amuset_cca`].
#[derive(Debug, Clone, PartialEq)]
pub struct CcaOptions {
    pub eps: f64,
    pub method: Method,
    pub q: Option<usize>,
}

impl CcaOptions {
    pub fn new(eps: f64, method: Method) -> Self {
        CcaOptions { eps, method, q: None }
    }
}

/// CCA from separate global SVDs of `Ψ(X)` and `Ψ(Y)`.
pub fn amuset_cca(
    x: &Snapshots,
    y: &Snapshots,
    spec_x: &BasisSpec,
    spec_y: &BasisSpec,
    opts: &CcaOptions,
) -> Result<SpectralResult> {
    check_eps(opts.eps)?;
    if x.len() != y.len() {
        return Err(Error::Validation(format!("X has {} snapshots, Y has {}", x.len(), y.len())));
    }
    let fx = build_interface(x, spec_x, opts.eps, &opts.method)?;
    let fy = build_interface(y, spec_y, opts.eps, &opts.method)?;
    let sx = linalg::truncated_svd(fx.matrix.as_ref(), opts.eps, None)?;
    check_positive(&sx, "Psi(X)")?;
    let sy = linalg::truncated_svd(fy.matrix.as_ref(), opts.eps, None)?;
    check_positive(&sy, "Psi(Y)")?;
    let core = solve_reduced_cca(sx.v.as_ref(), sy.v.as_ref())?;
    let q = resolve_q(opts.q, core.sigma.len())?;
    let mut ranks = fx.segment.ranks()[1..].to_vec();
    ranks.extend_from_slice(&fy.segment.ranks()[1..]);
    let mut warnings = fx.warnings;
    warnings.extend(fy.warnings);
    Ok(cca_result(core, q, ranks, opts.eps, None, warnings))
}

/// Relaxation time implied by one eigenvalue.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "value", rename_all = "lowercase")]
pub enum Timescale {
    Finite(f64),
    Infinite,
    Undefined,
}

/// Relative imaginary part above which an eigenvalue has no timescale.
pub const COMPLEX_TOL: f64 = 1e-6;

/// `t_k = −τ / ln(Re λ_k)`; `λ ≥ 1` is infinite, `λ ≤ 0` or genuinely complex
/// `λ` is undefined.
pub fn implied_timescales(values: &[c64], tau: f64) -> Result<Vec<Timescale>> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::argument(format!("lag time must be positive, got {tau}")));
    }
    Ok(values
        .iter()
        .map(|v| {
            let norm = v.norm();
            if norm == 0.0 || v.im.abs() / norm > COMPLEX_TOL || v.re <= 0.0 {
                Timescale::Undefined
            } else if v.re >= 1.0 {
                Timescale::Infinite
            } else {
                Timescale::Finite(-tau / v.re.ln())
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum State {
    A,
    B,
}

/// Two-state labels from the sign of a median-centered eigenfunction; values
/// equal to the median go to `A`.
pub fn assign_two_state(phi2: &[f64]) -> Result<Vec<State>> {
    if phi2.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite eigenfunction value".into()));
    }
    let mut sorted = phi2.to_vec();
    sorted.sort_by(f64::total_cmp);
    match (sorted.first(), sorted.last()) {
        (Some(lo), Some(hi)) if lo < hi => {}
        _ => return Err(Error::degenerate("eigenfunction is constant")),
    }
    let n = sorted.len();
    let median = if n % 2 == 1 { sorted[n / 2] } else { 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]) };
    Ok(phi2.iter().map(|&v| if v - median < 0.0 { State::B } else { State::A }).collect())
}

/// Settings for [`empirical_subspace_convergence`].
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceConfig {
    pub eps: f64,
    /// Ascending sample counts; each run uses the first `m` snapshots.
    pub sample_counts: Vec<usize>,
    /// Fixed sweep ranks; taken from the largest run when absent.
    pub ranks: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub sample_counts: Vec<usize>,
    pub distances: Vec<f64>,
    pub ranks: Vec<usize>,
}

/// Distance between the subspace selected by the streamed build on the first
/// `m` snapshots and a reference subspace (the largest run, unless given),
/// for each `m` at fixed ranks.
pub fn empirical_subspace_convergence(
    data: &Snapshots,
    spec: &BasisSpec,
    cfg: &ConvergenceConfig,
    reference: Option<&OrthonormalBasis>,
) -> Result<ConvergenceReport> {
    check_eps(cfg.eps)?;
    let counts = &cfg.sample_counts;
    if counts.len() < 2 || counts.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::argument("sample counts must be strictly ascending with at least two entries"));
    }
    let largest = *counts.last().unwrap_or(&0);
    if counts[0] == 0 || largest > data.len() {
        return Err(Error::argument(format!("sample counts must lie in 1..={}", data.len())));
    }
    let n = spec.size();
    let ranks = match &cfg.ranks {
        Some(r) if r.len() == spec.order() => r.clone(),
        Some(r) => {
            return Err(Error::argument(format!("expected {} ranks, got {}", spec.order(), r.len())));
        }
        None => {
            let head = data.select(&(1..=largest).collect::<Vec<_>>())?;
            transform_streamed(&head, spec, &SweepConfig::new(cfg.eps))?.ranks()[1..].to_vec()
        }
    };
    let r = *ranks.last().unwrap_or(&1);
    if n.saturating_mul(r) > DENSE_LIMIT {
        return Err(Error::Capacity { what: "subspace basis", requested: n.saturating_mul(r), limit: DENSE_LIMIT });
    }
    let fixed = SweepConfig::new(0.0).with_max_ranks(ranks.clone());
    let bases = counts
        .iter()
        .map(|&m| {
            let head = data.select(&(1..=m).collect::<Vec<_>>())?;
            let build = transform_streamed(&head, spec, &fixed)?;
            OrthonormalBasis::from_span(build.u_cores.to_matrix()?.as_ref())
        })
        .collect::<Result<Vec<_>>>()?;
    let target = reference.unwrap_or_else(|| bases.last().expect("at least two runs"));
    let distances = bases.iter().map(|b| subspace_distance(b, target)).collect::<Result<Vec<_>>>()?;
    Ok(ConvergenceReport { sample_counts: counts.clone(), distances, ranks })
}
