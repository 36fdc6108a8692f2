//! Thin wrappers around the dense kernels used everywhere else: truncated SVD
//! with a reproducible sign convention, small linear solves, and sorted
//! eigendecompositions.

use faer::linalg::solvers::{DenseSolveCore, Solve};
use faer::{c64, Mat, MatRef, Side};

use crate::error::{Error, Result};

/// Relative threshold used when the caller asks for `eps = 0`: singular values
/// below this fraction of the largest one are floating-point noise.
pub const EXACT_FLOOR: f64 = 1e-14;

/// Effective relative threshold for a user-facing truncation parameter.
pub fn effective_threshold(eps: f64) -> f64 {
    eps.max(EXACT_FLOOR)
}

/// `A ≈ u · diag(s) · vᵀ` with `u: m×r`, `v: n×r`.
#[derive(Debug, Clone)]
pub struct TruncatedSvd {
    pub u: Mat<f64>,
    pub s: Vec<f64>,
    pub v: Mat<f64>,
}

impl TruncatedSvd {
    pub fn rank(&self) -> usize {
        self.s.len()
    }

    /// `diag(s) · vᵀ`, the coefficient matrix carried to the next sweep step.
    pub fn s_vt(&self) -> Mat<f64> {
        Mat::from_fn(self.rank(), self.v.nrows(), |i, j| self.s[i] * self.v[(j, i)])
    }
}

fn backend<E: std::fmt::Debug>(what: &str) -> impl FnOnce(E) -> Error + '_ {
    move |e| Error::Backend(format!("{what}: {e:?}"))
}

/// Thin SVD of `a`, keeping singular values `σ ≥ eps·σ₁` (with `eps` floored at
/// [`EXACT_FLOOR`]) and at most `max_rank` of them. At least one triple is
/// always kept, even for a zero matrix; callers that need a positive spectrum
/// check `s[0]` themselves.
///
/// Each left singular vector is flipped so that its entry of largest
/// magnitude is positive (the right vector is flipped along with it).
pub fn truncated_svd(a: MatRef<'_, f64>, eps: f64, max_rank: Option<usize>) -> Result<TruncatedSvd> {
    svd_impl(a, Some(effective_threshold(eps)), max_rank)
}

/// Thin SVD keeping all `min(rows, cols)` triples, with the same sign
/// convention as [`truncated_svd`].
pub fn thin_svd(a: MatRef<'_, f64>) -> Result<TruncatedSvd> {
    svd_impl(a, None, None)
}

fn svd_impl(a: MatRef<'_, f64>, threshold: Option<f64>, max_rank: Option<usize>) -> Result<TruncatedSvd> {
    let (nr, nc) = (a.nrows(), a.ncols());
    if nr == 0 || nc == 0 {
        return Err(Error::argument("SVD of an empty matrix"));
    }
    // faer is faster on tall inputs; factor the transpose of wide matrices.
    let wide = nc > nr;
    let svd = if wide {
        a.transpose().thin_svd()
    } else {
        a.thin_svd()
    }
    .map_err(backend("thin SVD"))?;
    let (u_full, v_full) = if wide { (svd.V(), svd.U()) } else { (svd.U(), svd.V()) };
    let s_full = svd.S().column_vector();

    let k = nr.min(nc);
    let s0 = s_full[0];
    let mut r = match threshold {
        Some(t) => (0..k).take_while(|&i| s_full[i] >= t * s0 && s_full[i] > 0.0).count().max(1),
        None => k,
    };
    if let Some(cap) = max_rank {
        r = r.min(cap.max(1));
    }

    let mut u = u_full.get(.., 0..r).to_owned();
    let mut v = v_full.get(.., 0..r).to_owned();
    for j in 0..r {
        let mut best = 0usize;
        let mut best_abs = -1.0;
        for i in 0..nr {
            let x = u[(i, j)].abs();
            if x > best_abs {
                best_abs = x;
                best = i;
            }
        }
        if u[(best, j)] < 0.0 {
            for i in 0..nr {
                u[(i, j)] = -u[(i, j)];
            }
            for i in 0..nc {
                v[(i, j)] = -v[(i, j)];
            }
        }
    }
    let s = (0..r).map(|i| s_full[i]).collect();
    Ok(TruncatedSvd { u, s, v })
}

/// All singular values, descending.
pub fn singular_values(a: MatRef<'_, f64>) -> Result<Vec<f64>> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Ok(Vec::new());
    }
    a.singular_values().map_err(backend("singular values"))
}

/// Spectral norm (largest singular value); zero for empty matrices.
pub fn spectral_norm(a: MatRef<'_, f64>) -> Result<f64> {
    Ok(singular_values(a)?.first().copied().unwrap_or(0.0))
}

pub fn frobenius(a: MatRef<'_, f64>) -> f64 {
    a.norm_l2()
}

/// Reciprocal condition estimate of a square matrix from its singular values.
pub fn rcond(a: MatRef<'_, f64>) -> Result<f64> {
    let s = singular_values(a)?;
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if hi > 0.0 => Ok(lo / hi),
        _ => Ok(0.0),
    }
}

/// Solves `X · A = B` for `X` (i.e. `X = B · A⁻¹`) with square `A`.
///
/// When `A` is numerically singular the solve falls back to a ridge
/// regularised normal equation with `λ = 1e-12·‖B‖_F`; the returned flag
/// reports whether that happened.
pub fn solve_right(b: MatRef<'_, f64>, a: MatRef<'_, f64>) -> Result<(Mat<f64>, bool)> {
    // X A = B  <=>  Aᵀ Xᵀ = Bᵀ
    let (xt, reg) = solve_left(a.transpose(), b.transpose())?;
    Ok((xt.transpose().to_owned(), reg))
}

/// Solves `A · X = B` for `X` with square `A`; see [`solve_right`] for the
/// regularisation fallback.
pub fn solve_left(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> Result<(Mat<f64>, bool)> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n {
        return Err(Error::argument(format!(
            "solve: shapes {}x{} and {}x{} do not match",
            n,
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    if rcond(a)? > 1e-14 {
        let lu = a.partial_piv_lu();
        return Ok((lu.solve(b), false));
    }
    let lambda = 1e-12 * frobenius(b).max(frobenius(a));
    let mut normal = a.transpose() * a;
    for i in 0..n {
        normal[(i, i)] += lambda * lambda;
    }
    let rhs = a.transpose() * b;
    let lu = normal.partial_piv_lu();
    Ok((lu.solve(&rhs), true))
}

/// Inverse of a small well-conditioned square matrix.
pub fn inverse(a: MatRef<'_, f64>) -> Result<Mat<f64>> {
    if rcond(a)? <= 1e-14 {
        return Err(Error::Singular(format!("{}x{} matrix is not invertible", a.nrows(), a.ncols())));
    }
    Ok(a.partial_piv_lu().inverse())
}

/// Orders eigenvalues by descending real part, then descending magnitude,
/// then descending imaginary part (so conjugate pairs are adjacent with the
/// positive imaginary part first).
pub fn eigen_order(a: &c64, b: &c64) -> std::cmp::Ordering {
    b.re.total_cmp(&a.re)
        .then_with(|| b.norm().total_cmp(&a.norm()))
        .then_with(|| b.im.total_cmp(&a.im))
}

/// Eigendecomposition of a real square matrix, sorted with [`eigen_order`].
///
/// Eigenvectors are normalised to unit length and rotated so that their
/// entry of largest magnitude is real and positive. With `symmetric` the
/// self-adjoint solver is used and the results are real.
pub fn sorted_eigen(a: MatRef<'_, f64>, symmetric: bool) -> Result<(Vec<c64>, Mat<c64>)> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::argument("eigendecomposition of a non-square matrix"));
    }
    let (vals, vecs): (Vec<c64>, Mat<c64>) = if symmetric {
        let evd = a.self_adjoint_eigen(Side::Lower).map_err(backend("symmetric eigendecomposition"))?;
        let s = evd.S().column_vector();
        let u = evd.U();
        (
            (0..n).map(|i| c64::new(s[i], 0.0)).collect(),
            Mat::from_fn(n, n, |i, j| c64::new(u[(i, j)], 0.0)),
        )
    } else {
        let evd = a.eigen().map_err(backend("eigendecomposition"))?;
        let s = evd.S().column_vector();
        ((0..n).map(|i| s[i]).collect(), evd.U().to_owned())
    };

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eigen_order(&vals[i], &vals[j]));
    let sorted_vals = order.iter().map(|&i| vals[i]).collect();
    let mut sorted_vecs = Mat::<c64>::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let norm = (0..n).map(|i| vecs[(i, src)].norm_sqr()).sum::<f64>().sqrt();
        let mut pivot = 0;
        for i in 0..n {
            if vecs[(i, src)].norm() > vecs[(pivot, src)].norm() {
                pivot = i;
            }
        }
        let p = vecs[(pivot, src)];
        // multiply by conj(p)/|p| / norm so the pivot becomes real positive
        let phase = if p.norm() > 0.0 { p.conj() / p.norm() } else { c64::new(1.0, 0.0) };
        let scale = if norm > 0.0 { 1.0 / norm } else { 1.0 };
        for i in 0..n {
            sorted_vecs[(i, dst)] = vecs[(i, src)] * phase * scale;
        }
    }
    Ok((sorted_vals, sorted_vecs))
}

/// Copies the selected columns of `a` into a new matrix.
pub fn select_cols(a: MatRef<'_, f64>, cols: &[usize]) -> Mat<f64> {
    Mat::from_fn(a.nrows(), cols.len(), |i, j| a[(i, cols[j])])
}

/// Copies the selected rows of `a` into a new matrix.
pub fn select_rows(a: MatRef<'_, f64>, rows: &[usize]) -> Mat<f64> {
    Mat::from_fn(rows.len(), a.ncols(), |i, j| a[(rows[i], j)])
}

/// Maximum of `|Aᵀ A − I|` entrywise.
pub fn gram_deviation(a: MatRef<'_, f64>) -> f64 {
    let g = a.transpose() * a;
    let mut worst: f64 = 0.0;
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - target).abs());
        }
    }
    worst
}
