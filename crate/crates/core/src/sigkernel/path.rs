use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A multivariate path sampled at `len` time steps over `dim` channels,
/// stored row-major (one row per time step).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PathRepr", into = "PathRepr")]
pub struct Path {
    values: Vec<f64>,
    len: usize,
    dim: usize,
}

#[derive(Serialize, Deserialize)]
struct PathRepr {
    len: usize,
    dim: usize,
    values: Vec<f64>,
}

impl TryFrom<PathRepr> for Path {
    type Error = Error;

    fn try_from(r: PathRepr) -> Result<Self> {
        Path::new(r.values, r.len, r.dim)
    }
}

impl From<Path> for PathRepr {
    fn from(p: Path) -> Self {
        PathRepr {
            len: p.len,
            dim: p.dim,
            values: p.values,
        }
    }
}

impl Path {
    pub fn new(values: Vec<f64>, len: usize, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidPath("dimension must be at least 1".into()));
        }
        if len < 2 {
            return Err(Error::InvalidPath(format!(
                "a path needs at least 2 time steps, got {len}"
            )));
        }
        if values.len() != len * dim {
            return Err(Error::InvalidPath(format!(
                "expected {} values for a {len}x{dim} path, got {}",
                len * dim,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidPath("non-finite entry".into()));
        }
        Ok(Self { values, len, dim })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: bad.len(),
            });
        }
        Self::new(rows.concat(), rows.len(), dim)
    }

    /// A one-channel path.
    pub fn from_scalars(values: &[f64]) -> Result<Self> {
        Self::new(values.to_vec(), values.len(), 1)
    }

    /// Number of time steps.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, t: usize) -> &[f64] {
        &self.values[t * self.dim..(t + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.dim)
    }

    /// Row-major flattening, the vector used for Euclidean window distances.
    pub fn as_flat(&self) -> &[f64] {
        &self.values
    }

    pub fn into_flat(self) -> Vec<f64> {
        self.values
    }

    pub fn same_shape(&self, other: &Path) -> bool {
        self.len == other.len && self.dim == other.dim
    }

    /// True when every increment is exactly zero.
    pub fn is_constant(&self) -> bool {
        self.points().all(|p| p == self.point(0))
    }

    /// Total increment from the first to the last sample.
    pub fn increment(&self) -> Vec<f64> {
        let first = self.point(0);
        let last = self.point(self.len - 1);
        last.iter().zip(first).map(|(b, a)| b - a).collect()
    }

    /// Subdivide every time step into `factor` linear sub-steps.
    pub fn refine(&self, factor: usize) -> Path {
        if factor <= 1 {
            return self.clone();
        }
        let d = self.dim;
        let len = (self.len - 1) * factor + 1;
        let mut values = Vec::with_capacity(len * d);
        for t in 0..self.len - 1 {
            let a = self.point(t);
            let b = self.point(t + 1);
            for k in 0..factor {
                let s = k as f64 / factor as f64;
                values.extend(a.iter().zip(b).map(|(a, b)| a + s * (b - a)));
            }
        }
        values.extend_from_slice(self.point(self.len - 1));
        Path {
            values,
            len,
            dim: d,
        }
    }

    pub(crate) fn euclidean_distance(&self, other: &Path) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}
