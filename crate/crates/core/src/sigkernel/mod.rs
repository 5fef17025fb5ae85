//! Signature kernel between multivariate paths.
//!
//! The kernel is obtained from the Goursat problem
//! `∂²κ/∂s∂t = ⟨dX_s, dY_t⟩ κ` with unit boundary values, discretised by the
//! explicit first-order scheme
//!
//! ```text
//! κ[i+1][j+1] = κ[i+1][j] + κ[i][j+1] + (C - 1) κ[i][j]
//! C = θ(x[i+1], y[j+1]) - θ(x[i], y[j+1]) - θ(x[i+1], y[j]) + θ(x[i], y[j])
//! ```
//!
//! where θ is a static kernel lifting individual samples. Both paths are first
//! refined by linear interpolation so that each time step is split into
//! `refinement` cells.

mod path;
pub mod truncated;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};

pub use path::Path;

/// Fallback RBF width used when every training window coincides.
pub const DEFAULT_FALLBACK_WIDTH: f64 = 1.0;
/// Diagonal jitter guaranteeing an invertible Gram matrix.
pub const DEFAULT_JITTER: f64 = 1e-8;

/// RBF parameters: `θ(a, b) = exp(-‖a - b‖² / (2 width²))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StaticKernelConfig {
    pub width: f64,
    pub fallback_width: f64,
}

impl StaticKernelConfig {
    pub fn new(width: f64) -> Result<Self> {
        if !(width > 0.0 && width.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "RBF width must be positive, got {width}"
            )));
        }
        Ok(Self {
            width,
            fallback_width: DEFAULT_FALLBACK_WIDTH,
        })
    }
}

/// Pointwise kernel lifting raw samples before the signature construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StaticKernel {
    Rbf {
        width: f64,
    },
    /// Plain dot product; the signature kernel then equals the inner product
    /// of the ordinary path signatures.
    Linear,
}

impl From<StaticKernelConfig> for StaticKernel {
    fn from(cfg: StaticKernelConfig) -> Self {
        StaticKernel::Rbf { width: cfg.width }
    }
}

impl StaticKernel {
    #[inline]
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            StaticKernel::Rbf { width } => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-d2 / (2.0 * width * width)).exp()
            }
            StaticKernel::Linear => a.iter().zip(b).map(|(x, y)| x * y).sum(),
        }
    }
}

/// Finite-difference solver settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SigKernelConfig {
    pub refinement: usize,
    pub normalise: bool,
}

impl Default for SigKernelConfig {
    fn default() -> Self {
        Self {
            refinement: 2,
            normalise: true,
        }
    }
}

/// RBF static kernel `exp(-‖a - b‖² / (2σ²))`.
pub fn static_kernel(a: &[f64], b: &[f64], cfg: &StaticKernelConfig) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(StaticKernel::from(*cfg).eval(a, b))
}

/// Mean Euclidean distance between time points pooled over all windows.
///
/// This is the scale the static kernel actually sees. At most `max_points`
/// points enter, evenly spaced over the pool. Returns `fallback_width` when
/// the mean is numerically zero.
pub fn point_width_heuristic(
    windows: &[Path],
    max_points: usize,
    fallback_width: f64,
) -> Result<f64> {
    let pool: Vec<&[f64]> = windows.iter().flat_map(|w| w.points()).collect();
    if pool.len() < 2 || max_points < 2 {
        return Err(Error::InsufficientData(format!(
            "width heuristic needs at least 2 points, got {}",
            pool.len().min(max_points)
        )));
    }
    let dim = pool[0].len();
    if let Some(p) = pool.iter().find(|p| p.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: p.len(),
        });
    }
    let m = pool.len().min(max_points);
    let picked: Vec<&[f64]> = (0..m)
        .map(|i| pool[i * (pool.len() - 1) / (m - 1).max(1)])
        .collect();
    let mut total = 0.0;
    for i in 0..m {
        for j in (i + 1)..m {
            let d2: f64 = picked[i]
                .iter()
                .zip(picked[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            total += d2.sqrt();
        }
    }
    let mean = total / (m * (m - 1) / 2) as f64;
    Ok(if mean < 1e-12 { fallback_width } else { mean })
}

/// Mean Euclidean distance between the flattened windows, over all pairs.
///
/// Returns `fallback_width` when the mean is numerically zero.
pub fn rbf_width_heuristic(windows: &[Path], fallback_width: f64) -> Result<f64> {
    if windows.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "width heuristic needs at least 2 windows, got {}",
            windows.len()
        )));
    }
    let first = &windows[0];
    if let Some(w) = windows.iter().find(|w| !w.same_shape(first)) {
        return Err(Error::DimensionMismatch {
            expected: first.as_flat().len(),
            got: w.as_flat().len(),
        });
    }
    let n = windows.len();
    let mut total = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            total += windows[i].euclidean_distance(&windows[j]);
        }
    }
    let mean = total / (n * (n - 1) / 2) as f64;
    Ok(if mean < 1e-12 { fallback_width } else { mean })
}

/// Unnormalised signature kernel of two paths.
pub fn signature_kernel(
    x: &Path,
    y: &Path,
    static_kernel: &StaticKernel,
    cfg: &SigKernelConfig,
) -> Result<f64> {
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch {
            expected: x.dim(),
            got: y.dim(),
        });
    }
    if cfg.refinement == 0 {
        return Err(Error::InvalidArgument(
            "refinement must be at least 1".into(),
        ));
    }
    let x = x.refine(cfg.refinement);
    let y = y.refine(cfg.refinement);
    solve_goursat(&x, &y, static_kernel)
}

/// One step of the recursion: fill `k_cur` from `k_prev` and two adjacent rows
/// of static-kernel values.
#[inline]
fn goursat_row(theta_prev: &[f64], theta_cur: &[f64], k_prev: &[f64], k_cur: &mut [f64]) {
    k_cur[0] = 1.0;
    for j in 0..k_cur.len() - 1 {
        let c = theta_cur[j + 1] - theta_prev[j + 1] - theta_cur[j] + theta_prev[j];
        k_cur[j + 1] = k_cur[j] + k_prev[j + 1] + (c - 1.0) * k_prev[j];
    }
}

fn finite(value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite)
    }
}

/// Run the recursion on already-refined paths, keeping two rows of θ and κ.
fn solve_goursat(x: &Path, y: &Path, theta: &StaticKernel) -> Result<f64> {
    let m = y.len();
    let ys: Vec<&[f64]> = y.points().collect();

    let mut theta_prev: Vec<f64> = ys.iter().map(|b| theta.eval(x.point(0), b)).collect();
    let mut theta_cur = vec![0.0; m];
    let mut k_prev = vec![1.0; m];
    let mut k_cur = vec![1.0; m];

    for i in 0..x.len() - 1 {
        let a = x.point(i + 1);
        for (t, b) in theta_cur.iter_mut().zip(&ys) {
            *t = theta.eval(a, b);
        }
        goursat_row(&theta_prev, &theta_cur, &k_prev, &mut k_cur);
        std::mem::swap(&mut theta_prev, &mut theta_cur);
        std::mem::swap(&mut k_prev, &mut k_cur);
    }
    finite(k_prev[m - 1])
}

/// Recursion over rows `start..start + rows` of a precomputed row-major
/// static-kernel grid with `cols` columns.
fn solve_goursat_grid(grid: &[f64], cols: usize, start: usize, rows: usize) -> Result<f64> {
    let mut k_prev = vec![1.0; cols];
    let mut k_cur = vec![1.0; cols];
    for i in start..start + rows - 1 {
        let theta_prev = &grid[i * cols..(i + 1) * cols];
        let theta_cur = &grid[(i + 1) * cols..(i + 2) * cols];
        goursat_row(theta_prev, theta_cur, &k_prev, &mut k_cur);
        std::mem::swap(&mut k_prev, &mut k_cur);
    }
    finite(k_prev[cols - 1])
}

/// `kxy / sqrt(kxx kyy)`: unit-norm features in the kernel space.
pub fn normalise_kernel(kxy: f64, kxx: f64, kyy: f64) -> Result<f64> {
    if !(kxx > 0.0) {
        return Err(Error::NonPositiveSelfKernel(kxx));
    }
    if !(kyy > 0.0) {
        return Err(Error::NonPositiveSelfKernel(kyy));
    }
    Ok(kxy / (kxx * kyy).sqrt())
}

/// Kernel matrix over a set of windows.
#[derive(Debug, Clone)]
pub struct GramMatrix {
    /// Symmetric entries, jitter already added to the diagonal.
    pub entries: Matrix,
    pub jitter: f64,
    /// Unnormalised self-kernels `κ(x_i, x_i)`.
    pub self_kernels: Vec<f64>,
    /// Smallest eigenvalue of `entries`.
    pub min_eigenvalue: f64,
}

impl GramMatrix {
    pub fn len(&self) -> usize {
        self.entries.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Principal submatrix on `idx`, keeping jitter and self-kernels aligned.
    pub fn select(&self, idx: &[usize]) -> GramMatrix {
        let entries = Matrix::from_fn(idx.len(), idx.len(), |i, j| self.entries[(idx[i], idx[j])]);
        let min_eigenvalue = linalg::min_eigenvalue(&entries);
        GramMatrix {
            entries,
            jitter: self.jitter,
            self_kernels: idx.iter().map(|&i| self.self_kernels[i]).collect(),
            min_eigenvalue,
        }
    }
}

/// A configured signature kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignatureKernel {
    pub static_kernel: StaticKernel,
    pub config: SigKernelConfig,
}

impl SignatureKernel {
    pub fn new(static_kernel: StaticKernel, config: SigKernelConfig) -> Self {
        Self {
            static_kernel,
            config,
        }
    }

    pub fn raw(&self, x: &Path, y: &Path) -> Result<f64> {
        signature_kernel(x, y, &self.static_kernel, &self.config)
    }

    pub fn self_kernels(&self, paths: &[Path]) -> Result<Vec<f64>> {
        paths.par_iter().map(|p| self.raw(p, p)).collect()
    }

    /// Kernel value given precomputed self-kernels, normalised if configured.
    pub fn eval_with(&self, x: &Path, kxx: f64, y: &Path, kyy: f64) -> Result<f64> {
        let kxy = self.raw(x, y)?;
        if self.config.normalise {
            normalise_kernel(kxy, kxx, kyy)
        } else {
            Ok(kxy)
        }
    }

    pub fn eval(&self, x: &Path, y: &Path) -> Result<f64> {
        let kxx = self.raw(x, x)?;
        let kyy = self.raw(y, y)?;
        self.eval_with(x, kxx, y, kyy)
    }

    /// Gram matrix over `windows` with `jitter` added to the diagonal.
    ///
    /// Only the upper triangle is evaluated; entries are independent so the
    /// result does not depend on thread scheduling.
    pub fn gram(&self, windows: &[Path], jitter: f64) -> Result<GramMatrix> {
        let n = windows.len();
        if n < 2 {
            return Err(Error::InsufficientData(format!(
                "gram matrix needs at least 2 windows, got {n}"
            )));
        }
        if !(jitter >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "jitter must be nonnegative, got {jitter}"
            )));
        }
        let self_k = self.self_kernels(windows)?;
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                ((i + 1)..n)
                    .map(|j| self.eval_with(&windows[i], self_k[i], &windows[j], self_k[j]))
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<_>>()?;

        let mut entries = Matrix::zeros(n, n);
        for (i, row) in rows.iter().enumerate() {
            entries[(i, i)] = if self.config.normalise {
                1.0
            } else {
                self_k[i]
            };
            for (off, &v) in row.iter().enumerate() {
                entries[(i, i + 1 + off)] = v;
                entries[(i + 1 + off, i)] = v;
            }
        }
        finish_gram(entries, jitter, self_k)
    }

    /// Rectangular matrix `κ(rows[i], cols[j])` from precomputed self-kernels.
    pub fn cross(
        &self,
        rows: &[Path],
        row_self: &[f64],
        cols: &[Path],
        col_self: &[f64],
    ) -> Result<Matrix> {
        let data: Vec<Vec<f64>> = rows
            .par_iter()
            .zip(row_self)
            .map(|(x, &kxx)| {
                cols.iter()
                    .zip(col_self)
                    .map(|(y, &kyy)| self.eval_with(x, kxx, y, kyy))
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<_>>()?;
        Ok(Matrix::from_fn(rows.len(), cols.len(), |i, j| data[i][j]))
    }

    /// Kernel between every window `[o, o + len)` of a long `series`
    /// (`o = 0, stride, 2·stride, …`) and each of `cols`.
    ///
    /// Overlapping windows share their static-kernel values, so these are
    /// computed once per column over the whole refined series. Returns the
    /// kernel matrix (normalised if configured) and the raw self-kernels of
    /// the windows. Values equal those of [`SignatureKernel::cross`] on the
    /// extracted windows.
    pub fn sliding_cross(
        &self,
        series: &Path,
        len: usize,
        stride: usize,
        cols: &[Path],
        col_self: &[f64],
    ) -> Result<(Matrix, Vec<f64>)> {
        if len < 2 || stride < 1 || series.len() < len {
            return Err(Error::InvalidArgument(format!(
                "cannot cut windows of length {len} with stride {stride} from {} steps",
                series.len()
            )));
        }
        if let Some(c) = cols.iter().find(|c| c.dim() != series.dim()) {
            return Err(Error::DimensionMismatch {
                expected: series.dim(),
                got: c.dim(),
            });
        }
        let r = self.config.refinement;
        if r == 0 {
            return Err(Error::InvalidArgument(
                "refinement must be at least 1".into(),
            ));
        }
        let count = (series.len() - len) / stride + 1;
        let windows: Vec<Path> = (0..count)
            .map(|i| {
                let o = i * stride;
                Path::new(
                    series.as_flat()[o * series.dim()..(o + len) * series.dim()].to_vec(),
                    len,
                    series.dim(),
                )
            })
            .collect::<Result<_>>()?;
        let row_self = self.self_kernels(&windows)?;

        let refined = series.refine(r);
        let rows = (len - 1) * r + 1;
        let columns: Vec<Vec<f64>> = cols
            .par_iter()
            .zip(col_self)
            .map(|(c, &kyy)| {
                let c = c.refine(r);
                let m = c.len();
                let mut grid = Vec::with_capacity(refined.len() * m);
                for a in refined.points() {
                    grid.extend(c.points().map(|b| self.static_kernel.eval(a, b)));
                }
                (0..count)
                    .map(|i| {
                        let kxy = solve_goursat_grid(&grid, m, i * stride * r, rows)?;
                        if self.config.normalise {
                            normalise_kernel(kxy, row_self[i], kyy)
                        } else {
                            Ok(kxy)
                        }
                    })
                    .collect()
            })
            .collect::<Result<_>>()?;
        Ok((
            Matrix::from_fn(count, cols.len(), |i, j| columns[j][i]),
            row_self,
        ))
    }
}

/// Symmetrise, add jitter and eigen-check an assembled kernel matrix.
pub fn finish_gram(mut entries: Matrix, jitter: f64, self_kernels: Vec<f64>) -> Result<GramMatrix> {
    let asym = linalg::symmetrise(&mut entries);
    if asym > 1e-6 {
        warn!("kernel matrix asymmetry {asym:e} before symmetrisation");
    }
    for i in 0..entries.nrows() {
        entries[(i, i)] += jitter;
    }
    let min_eigenvalue = linalg::min_eigenvalue(&entries);
    if !(min_eigenvalue > 0.0) {
        return Err(Error::NotPositiveDefinite { min_eigenvalue });
    }
    Ok(GramMatrix {
        entries,
        jitter,
        self_kernels,
        min_eigenvalue,
    })
}

/// Normalised signature-kernel Gram matrix over `windows`.
pub fn gram_matrix(
    windows: &[Path],
    static_kernel: &StaticKernel,
    sig_cfg: &SigKernelConfig,
    jitter: f64,
) -> Result<GramMatrix> {
    SignatureKernel::new(*static_kernel, *sig_cfg).gram(windows, jitter)
}
