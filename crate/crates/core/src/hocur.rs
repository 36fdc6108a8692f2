//! Maximum-volume row selection and higher-order CUR (cross) approximation of
//! the transformed data tensor.
//!
//! Modes are numbered `1..=P` with `P = p + 1`; mode `P` is the snapshot
//! index. Row sets `I_q` hold multi-indices over modes `1..=q`, column sets
//! `J_q` hold multi-indices over modes `q..=P`, so the last component of a
//! column multi-index is always a snapshot.
//!
//! Matrix positions (rows picked by [`maxvol`], columns picked by
//! [`independent_columns`], flat picks passed to [`extend_row_set`]) are
//! 0-based, while the multi-indices themselves are 1-based.

use std::collections::HashSet;

use faer::{Mat, MatRef};
use rayon::prelude::*;

use crate::basis::{BasisSpec, BasisTable};
use crate::data::Snapshots;
use crate::error::{Error, Result};
use crate::linalg;
use crate::tensor::MultiIndex;
use crate::tt::{Core, DenseCore, TensorTrain};

/// An ordered list of distinct multi-indices of equal length.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexSet {
    entries: Vec<MultiIndex>,
}

impl IndexSet {
    pub fn new(entries: Vec<MultiIndex>) -> Result<Self> {
        let len = entries.first().map(MultiIndex::len).unwrap_or(0);
        if entries.iter().any(|e| e.len() != len) {
            return Err(Error::argument("index set entries have different lengths"));
        }
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert(e.as_slice()) {
                return Err(Error::argument(format!("duplicate multi-index {:?}", e.as_slice())));
            }
        }
        Ok(IndexSet { entries })
    }

    /// `{∅}`, the single empty multi-index.
    pub fn root() -> Self {
        IndexSet { entries: vec![MultiIndex::empty()] }
    }

    pub fn entries(&self) -> &[MultiIndex] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Length of each multi-index.
    pub fn depth(&self) -> usize {
        self.entries.first().map(MultiIndex::len).unwrap_or(0)
    }

    /// Every entry with its last component dropped lies in `parent`.
    pub fn extends_prefixes_of(&self, parent: &IndexSet) -> bool {
        let set: HashSet<&[usize]> = parent.entries.iter().map(MultiIndex::as_slice).collect();
        self.entries.iter().all(|e| e.len() >= 1 && set.contains(&e.as_slice()[..e.len() - 1]))
    }

    /// Every entry with its first component dropped lies in `parent`.
    pub fn extends_suffixes_of(&self, parent: &IndexSet) -> bool {
        let set: HashSet<&[usize]> = parent.entries.iter().map(MultiIndex::as_slice).collect();
        self.entries.iter().all(|e| e.len() >= 1 && set.contains(&e.as_slice()[1..]))
    }
}

/// Row selection returned by [`maxvol`].
#[derive(Debug, Clone, PartialEq)]
pub struct MaxvolResult {
    /// 0-based row positions, one per column of the input.
    pub rows: Vec<usize>,
    pub swaps: usize,
    /// `max |A · A_I⁻¹|` at exit.
    pub certificate: f64,
    /// `false` when the iteration cap was hit before the certificate held.
    pub converged: bool,
}

/// Default dominance tolerance δ.
pub const MAXVOL_TOL: f64 = 5e-2;
pub const MAXVOL_MAX_ITER: usize = 100;
/// Relative pivot size below which a matrix is treated as rank deficient.
pub const RANK_TOL: f64 = 1e-10;

fn pivoted_qr(a: MatRef<'_, f64>) -> (Vec<usize>, Vec<f64>) {
    let qr = a.col_piv_qr();
    let perm = qr.P().arrays().0.to_vec();
    let r = qr.thin_R();
    let diag = (0..r.nrows().min(r.ncols())).map(|i| r[(i, i)].abs()).collect();
    (perm, diag)
}

/// Rows of a tall `k × r` matrix spanning a submatrix of (locally) maximal
/// volume: every entry of `A · A_I⁻¹` is at most `1 + tol` in magnitude.
pub fn maxvol(a: MatRef<'_, f64>, tol: f64, max_iter: usize) -> Result<MaxvolResult> {
    let (k, r) = (a.nrows(), a.ncols());
    if r == 0 || k < r {
        return Err(Error::argument(format!("maxvol needs a tall matrix, got {k}x{r}")));
    }
    if !(tol >= 0.0) {
        return Err(Error::argument("maxvol tolerance must be non-negative"));
    }
    if a.norm_max() == 0.0 {
        return Err(Error::Singular(format!("maxvol input ({k}x{r}) is zero")));
    }
    let (perm, diag) = pivoted_qr(a.transpose());
    if !(diag[0] > 0.0) || !(diag[r - 1] > RANK_TOL * diag[0]) {
        return Err(Error::Singular(format!("maxvol input ({k}x{r}) is rank deficient")));
    }
    let mut rows: Vec<usize> = perm[..r].to_vec();
    let square = linalg::select_rows(a, &rows);
    let (mut b, _) = linalg::solve_right(a, square.as_ref())?;
    let mut swaps = 0;
    loop {
        let (mut bi, mut bj, mut best) = (0, 0, 0.0);
        for j in 0..r {
            for i in 0..k {
                let v = b[(i, j)].abs();
                if v > best {
                    best = v;
                    bi = i;
                    bj = j;
                }
            }
        }
        if best <= 1.0 + tol {
            return Ok(MaxvolResult { rows, swaps, certificate: best, converged: true });
        }
        if swaps >= max_iter {
            return Ok(MaxvolResult { rows, swaps, certificate: best, converged: false });
        }
        // row bi replaces rows[bj]; B ← B − B[:, bj]·(B[bi, :] − e_bj) / B[bi, bj]
        let pivot = b[(bi, bj)];
        let col: Vec<f64> = (0..k).map(|i| b[(i, bj)]).collect();
        let mut row: Vec<f64> = (0..r).map(|j| b[(bi, j)]).collect();
        row[bj] -= 1.0;
        for j in 0..r {
            let f = row[j] / pivot;
            if f != 0.0 {
                for i in 0..k {
                    b[(i, j)] -= col[i] * f;
                }
            }
        }
        rows[bj] = bi;
        swaps += 1;
    }
}

/// Columns of `m` chosen by pivoted QR, in pivot order, whose pivots exceed
/// `tol · |R₁₁|`; at most `max_count` of them.
pub fn independent_columns(m: MatRef<'_, f64>, tol: f64, max_count: usize) -> Result<Vec<usize>> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Err(Error::argument("independent_columns of an empty matrix"));
    }
    if m.norm_max() == 0.0 {
        return Err(Error::degenerate("matrix is zero; no independent columns"));
    }
    let (perm, diag) = pivoted_qr(m);
    if !(diag[0] > 0.0) {
        return Err(Error::degenerate("matrix is zero; no independent columns"));
    }
    let count = diag.iter().take_while(|&&d| d > tol * diag[0]).count().min(max_count);
    Ok(perm[..count].to_vec())
}

/// Extends each row multi-index by one mode: flat pick `c` (0-based, row
/// block index fastest) maps to `(rows[c % |rows|], c / |rows| + 1)`.
pub fn extend_row_set(rows: &IndexSet, picks: &[usize], n: usize) -> Result<IndexSet> {
    let len = rows.len();
    let entries = picks
        .iter()
        .map(|&c| {
            if c >= len * n {
                return Err(Error::bounds(format!("pick {c} outside 0..{}", len * n)));
            }
            Ok(rows.entries[c % len].join(&MultiIndex::new(vec![c / len + 1])))
        })
        .collect::<Result<Vec<_>>>()?;
    IndexSet::new(entries)
}

/// Prepends one mode to each column multi-index: flat pick `c` (0-based, mode
/// index fastest) maps to `(c % n + 1, cols[c / n])`.
pub fn extend_column_set(cols: &IndexSet, picks: &[usize], n: usize) -> Result<IndexSet> {
    let len = cols.len();
    let entries = picks
        .iter()
        .map(|&c| {
            if c >= len * n {
                return Err(Error::bounds(format!("pick {c} outside 0..{}", len * n)));
            }
            Ok(MultiIndex::new(vec![c % n + 1]).join(&cols.entries[c / n]))
        })
        .collect::<Result<Vec<_>>>()?;
    IndexSet::new(entries)
}

fn mode_size(table: &BasisTable, mode: usize) -> usize {
    if mode <= table.order() {
        table.dim(mode - 1).nrows()
    } else {
        table.snapshots()
    }
}

fn check_sets(table: &BasisTable, rows: &IndexSet, cols: &IndexSet, q: usize) -> Result<()> {
    let last = table.order() + 1;
    if q >= last {
        return Err(Error::bounds(format!("q = {q} outside 0..{last}")));
    }
    for e in rows.entries() {
        if e.len() != q {
            return Err(Error::bounds(format!("row multi-index {:?} must cover modes 1..={q}", e.as_slice())));
        }
        for (a, &i) in e.as_slice().iter().enumerate() {
            if i == 0 || i > mode_size(table, a + 1) {
                return Err(Error::bounds(format!("row multi-index {:?} out of range", e.as_slice())));
            }
        }
    }
    for e in cols.entries() {
        if e.len() != last - q - 1 {
            return Err(Error::bounds(format!(
                "column multi-index {:?} must cover modes {}..={last}",
                e.as_slice(),
                q + 2
            )));
        }
        for (a, &i) in e.as_slice().iter().enumerate() {
            if i == 0 || i > mode_size(table, q + 2 + a) {
                return Err(Error::bounds(format!("column multi-index {:?} out of range", e.as_slice())));
            }
        }
    }
    Ok(())
}

/// `(|I|·n_{q+1}) × |J|` submatrix of the transformed data tensor, row index
/// `l + |I|·i`. Only the required basis values are read.
pub(crate) fn subtensor(table: &BasisTable, rows: &IndexSet, cols: &IndexSet, q: usize) -> Mat<f64> {
    let p = table.order();
    let nr = rows.len();
    let n = mode_size(table, q + 1);
    let columns: Vec<Vec<f64>> = cols
        .entries()
        .par_iter()
        .map(|col| {
            let col = col.as_slice();
            let mut out = vec![0.0; nr * n];
            let prefix = |t: usize, row: &[usize]| -> f64 {
                row.iter().enumerate().map(|(a, &i)| table.dim(a)[(i - 1, t)]).product()
            };
            if q < p {
                let t = col[col.len() - 1] - 1;
                let suffix: f64 = col[..col.len() - 1]
                    .iter()
                    .enumerate()
                    .map(|(a, &i)| table.dim(q + 1 + a)[(i - 1, t)])
                    .product();
                let here = table.dim(q);
                for (l, row) in rows.entries().iter().enumerate() {
                    let pre = prefix(t, row.as_slice()) * suffix;
                    for i in 0..n {
                        out[l + nr * i] = pre * here[(i, t)];
                    }
                }
            } else {
                for (l, row) in rows.entries().iter().enumerate() {
                    for t in 0..n {
                        out[l + nr * t] = prefix(t, row.as_slice());
                    }
                }
            }
            out
        })
        .collect();
    Mat::from_fn(nr * n, cols.len(), |i, j| columns[j][i])
}

/// Submatrix of the transformed data tensor at the crosses `(I, mode q+1, J)`.
pub fn eval_subtensor(x: &Snapshots, spec: &BasisSpec, rows: &IndexSet, cols: &IndexSet, q: usize) -> Result<Mat<f64>> {
    let table = BasisTable::new(spec, x)?;
    check_sets(&table, rows, cols, q)?;
    Ok(subtensor(&table, rows, cols, q))
}

/// Settings for [`hocur_transform`].
#[derive(Debug, Clone, PartialEq)]
pub struct HocurConfig {
    /// `(r_1, …, r_p)`.
    pub max_ranks: Vec<usize>,
    /// Number of forward/backward sweep pairs.
    pub sweeps: usize,
    /// Multiplier for the size of the initial column sets; must exceed 1.
    pub alpha: f64,
    pub maxvol_tol: f64,
    pub maxvol_max_iter: usize,
    /// Relative pivot threshold of the first-sweep column pruning.
    pub column_tol: f64,
}

impl HocurConfig {
    pub fn new(max_ranks: Vec<usize>) -> Self {
        HocurConfig {
            max_ranks,
            sweeps: 2,
            alpha: 2.0,
            maxvol_tol: MAXVOL_TOL,
            maxvol_max_iter: MAXVOL_MAX_ITER,
            column_tol: RANK_TOL,
        }
    }

    /// Every rank set to `rank`, reduced where needed so that
    /// `r_q ≤ n_{q+1}·r_{q+1}` (with `n_{p+1} = m`, `r_{p+1} = 1`).
    pub fn uniform(rank: usize, dims: &[usize], snapshots: usize) -> Self {
        let p = dims.len();
        let mut ranks = vec![rank.max(1); p];
        let mut next = snapshots;
        for q in (0..p).rev() {
            ranks[q] = ranks[q].min(next);
            if q > 0 {
                next = dims[q].saturating_mul(ranks[q]);
            }
        }
        HocurConfig::new(ranks)
    }

    pub fn validate(&self, dims: &[usize], snapshots: usize) -> Result<()> {
        let p = dims.len();
        if self.max_ranks.len() != p {
            return Err(Error::Validation(format!("expected {p} HOCUR ranks, got {}", self.max_ranks.len())));
        }
        if self.max_ranks.iter().any(|&r| r == 0) {
            return Err(Error::Validation("HOCUR ranks must be positive".into()));
        }
        for q in 0..p {
            let bound = if q + 1 < p { dims[q + 1] * self.max_ranks[q + 1] } else { snapshots };
            if self.max_ranks[q] > bound {
                return Err(Error::Validation(format!(
                    "rank r_{} = {} exceeds n_{}·r_{} = {bound}",
                    q + 1,
                    self.max_ranks[q],
                    q + 2,
                    q + 2
                )));
            }
        }
        if self.sweeps == 0 {
            return Err(Error::Validation("at least one HOCUR sweep is required".into()));
        }
        if !(self.alpha > 1.0 && self.alpha.is_finite()) {
            return Err(Error::Validation(format!("alpha must exceed 1, got {}", self.alpha)));
        }
        if !(self.maxvol_tol >= 0.0) || !(self.column_tol > 0.0) {
            return Err(Error::Validation("maxvol and column tolerances must be positive".into()));
        }
        Ok(())
    }
}

/// Result of [`hocur_transform`].
#[derive(Debug, Clone)]
pub struct HocurOutcome {
    pub tt: TensorTrain,
    /// `I_0, …, I_p`.
    pub row_sets: Vec<IndexSet>,
    /// `J_2, …, J_{p+2}`.
    pub col_sets: Vec<IndexSet>,
    pub sweeps_run: usize,
    /// Largest maxvol certificate over the forward sweep of the last pass.
    pub max_certificate: f64,
    pub warnings: Vec<String>,
}

struct Selection {
    picks: Vec<usize>,
    certificate: f64,
}

fn select_rows(m: MatRef<'_, f64>, cfg: &HocurConfig, what: &str, warnings: &mut Vec<String>) -> Result<Selection> {
    match maxvol(m, cfg.maxvol_tol, cfg.maxvol_max_iter) {
        Ok(res) => {
            if !res.converged {
                warnings.push(format!("{what}: maxvol stopped after {} swaps", res.swaps));
            }
            Ok(Selection { picks: res.rows, certificate: res.certificate })
        }
        Err(Error::Singular(_)) => {
            // rank-deficient cross: fall back to the QR pivots and a ridge solve
            warnings.push(format!("{what}: rank-deficient submatrix, using pivoted-QR rows"));
            let (perm, _) = pivoted_qr(m.transpose());
            Ok(Selection { picks: perm[..m.ncols()].to_vec(), certificate: f64::NAN })
        }
        Err(e) => Err(e),
    }
}

fn interpolate(m: MatRef<'_, f64>, picks: &[usize], what: &str, warnings: &mut Vec<String>) -> Result<Mat<f64>> {
    let square = linalg::select_rows(m, picks);
    let (out, regularized) = linalg::solve_right(m, square.as_ref())?;
    if regularized {
        warnings.push(format!("{what}: singular intersection matrix, ridge-regularized"));
    }
    Ok(out)
}

/// `r × (n·c)` reshape of an `(r·n) × c` matrix.
fn to_right_unfolding(m: MatRef<'_, f64>, r: usize, n: usize) -> Mat<f64> {
    Mat::from_fn(r, n * m.ncols(), |a, col| m[(a + r * (col % n), col / n)])
}

/// Cross approximation of the transformed data tensor with capped ranks.
pub fn hocur_transform(x: &Snapshots, spec: &BasisSpec, cfg: &HocurConfig) -> Result<HocurOutcome> {
    let table = BasisTable::new(spec, x)?;
    hocur_from_table(&table, cfg)
}

pub(crate) fn hocur_from_table(table: &BasisTable, cfg: &HocurConfig) -> Result<HocurOutcome> {
    let p = table.order();
    let m = table.snapshots();
    let big_p = p + 1;
    let dims: Vec<usize> = (1..=big_p).map(|mode| mode_size(table, mode)).collect();
    cfg.validate(&dims[..p], m)?;
    let mut warnings = Vec::new();

    // col_sets[l] = J_l for l in 2..=P+1 (slots 0, 1 unused)
    let mut col_sets: Vec<IndexSet> = vec![IndexSet::root(); big_p + 2];
    for l in (2..=big_p).rev() {
        let target = (cfg.alpha * cfg.max_ranks[l - 2] as f64).ceil() as usize;
        let n = dims[l - 1];
        let len = col_sets[l + 1].len();
        let count = target.min(n * len);
        // prefix in the order (j fastest, then i), so short prefixes still
        // cover many distinct snapshots; pick i + n·j in the unfolding layout
        let picks: Vec<usize> = (0..count).map(|c| c / len + n * (c % len)).collect();
        col_sets[l] = extend_column_set(&col_sets[l + 1], &picks, n)?;
    }
    // row_sets[q] = I_q for q in 0..=p
    let mut row_sets: Vec<IndexSet> = vec![IndexSet::root(); big_p];
    let mut cores: Vec<Core> = Vec::new();
    let mut sweeps_run = 0;
    let mut max_certificate = 0.0;

    for sweep in 0..cfg.sweeps {
        let before = (row_sets.clone(), col_sets.clone());
        max_certificate = 0.0f64;
        for l in 1..big_p {
            let what = format!("sweep {} forward core {l}", sweep + 1);
            let mut sub = subtensor(table, &row_sets[l - 1], &col_sets[l + 1], l - 1);
            if sweep == 0 {
                let keep = independent_columns(sub.as_ref(), cfg.column_tol, cfg.max_ranks[l - 1])
                    .map_err(|e| Error::degenerate(format!("{what}: {e}")))?;
                sub = linalg::select_cols(sub.as_ref(), &keep);
            }
            let sel = select_rows(sub.as_ref(), cfg, &what, &mut warnings)?;
            if sel.certificate.is_finite() {
                max_certificate = max_certificate.max(sel.certificate);
            } else {
                max_certificate = f64::NAN;
            }
            row_sets[l] = extend_row_set(&row_sets[l - 1], &sel.picks, dims[l - 1])?;
        }
        let mut backward: Vec<Core> = Vec::with_capacity(p);
        for l in (2..=big_p).rev() {
            let what = format!("sweep {} backward core {l}", sweep + 1);
            let r = row_sets[l - 1].len();
            let n = dims[l - 1];
            let sub = subtensor(table, &row_sets[l - 1], &col_sets[l + 1], l - 1);
            let wide = to_right_unfolding(sub.as_ref(), r, n);
            let tall = wide.transpose().to_owned();
            let sel = select_rows(tall.as_ref(), cfg, &what, &mut warnings)?;
            col_sets[l] = extend_column_set(&col_sets[l + 1], &sel.picks, n)?;
            // core = M'[:, J]⁻¹ · M', computed as (Mᵀ · (Mᵀ)_J⁻¹)ᵀ
            let core_t = interpolate(tall.as_ref(), &sel.picks, &what, &mut warnings)?;
            let core = core_t.transpose().to_owned();
            backward.push(Core::Dense(DenseCore::from_right_unfolding(core.as_ref(), n, col_sets[l + 1].len())?));
        }
        backward.reverse();
        let first = subtensor(table, &row_sets[0], &col_sets[2], 0);
        cores = vec![Core::Dense(DenseCore::from_left_unfolding(first.as_ref(), 1, dims[0])?)];
        cores.extend(backward);
        sweeps_run = sweep + 1;
        if before.0 == row_sets && before.1 == col_sets {
            break;
        }
    }
    Ok(HocurOutcome {
        tt: TensorTrain::new(cores)?,
        row_sets,
        col_sets: col_sets.split_off(2),
        sweeps_run,
        max_certificate,
        warnings,
    })
}
