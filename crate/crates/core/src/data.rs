//! Snapshot matrices.

use crate::error::{Error, Result};

/// A `d × m` data matrix stored snapshot by snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshots {
    dim: usize,
    data: Vec<f64>,
}

impl Snapshots {
    /// `data` holds `m` consecutive snapshots of length `dim`. Every entry must
    /// be finite.
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::argument("snapshot dimension must be positive"));
        }
        if data.len() % dim != 0 {
            return Err(Error::Data(format!("{} values do not split into snapshots of length {dim}", data.len())));
        }
        if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite value in snapshot {} coordinate {}",
                pos / dim + 1,
                pos % dim + 1
            )));
        }
        Ok(Snapshots { dim, data })
    }

    pub fn from_snapshots(snaps: &[Vec<f64>]) -> Result<Self> {
        let dim = snaps.first().map(Vec::len).unwrap_or(0);
        if snaps.iter().any(|s| s.len() != dim) {
            return Err(Error::Data("snapshots have different lengths".into()));
        }
        Self::new(dim, snaps.concat())
    }

    /// `d`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `m`.
    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Snapshot `t` (0-based).
    pub fn snapshot(&self, t: usize) -> &[f64] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Coordinate `c` (1-based) of every snapshot.
    pub fn coordinate(&self, c: usize) -> Result<Vec<f64>> {
        if c == 0 || c > self.dim {
            return Err(Error::bounds(format!("coordinate {c} outside 1..={}", self.dim)));
        }
        Ok(self.iter().map(|s| s[c - 1]).collect())
    }

    /// Snapshots at the given 1-based positions, in order.
    pub fn select(&self, idx: &[usize]) -> Result<Snapshots> {
        let m = self.len();
        let mut data = Vec::with_capacity(idx.len() * self.dim);
        for &t in idx {
            if t == 0 || t > m {
                return Err(Error::bounds(format!("snapshot index {t} outside 1..={m}")));
            }
            data.extend_from_slice(self.snapshot(t - 1));
        }
        Ok(Snapshots { dim: self.dim, data })
    }

    /// `[self other]`.
    pub fn concat(&self, other: &Snapshots) -> Result<Snapshots> {
        if self.dim != other.dim {
            return Err(Error::Data(format!("cannot join snapshots of dimension {} and {}", self.dim, other.dim)));
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(Snapshots { dim: self.dim, data })
    }
}
