//! Data-adjacency graph, graph Laplacian and the effective kernel that carries
//! manifold regularisation into the dual problem.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::sigkernel::Path;

pub const DEFAULT_K_NEIGHBOURS: usize = 5;

/// Symmetric nonnegative edge weights with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencyGraph {
    pub weights: Matrix,
    pub k_neighbours: usize,
}

impl AdjacencyGraph {
    /// Graph without edges on `n` nodes.
    pub fn empty(n: usize) -> Self {
        Self {
            weights: Matrix::zeros(n, n),
            k_neighbours: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.weights.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn edge_count(&self) -> usize {
        let n = self.len();
        (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .filter(|&(i, j)| self.weights[(i, j)] > 0.0)
            .count()
    }
}

/// `L = D - W`.
#[derive(Debug, Clone, PartialEq)]
pub struct Laplacian {
    pub entries: Matrix,
}

impl Laplacian {
    pub fn trace(&self) -> f64 {
        self.entries.trace()
    }
}

/// `Q = (4 c3 K L + I)⁻¹ K`.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveKernel {
    pub q: Matrix,
    pub c3: f64,
    /// `max |Q - Qᵀ|` of the raw solve, before symmetrisation.
    pub raw_asymmetry: f64,
}

/// Union k-nearest-neighbour graph over flattened windows with Gaussian weights.
///
/// Edge `(i, j)` exists when `j` is among the `k` nearest windows of `i` or
/// `i` is among those of `j`; its weight is `exp(-‖w_i - w_j‖² / (2 width²))`.
/// Distance ties are broken by index.
pub fn build_knn_graph(windows: &[Path], k: usize, width: f64) -> Result<AdjacencyGraph> {
    let n = windows.len();
    if k < 1 || k >= n {
        return Err(Error::InvalidArgument(format!(
            "k_neighbours must satisfy 1 <= k < n = {n}, got {k}"
        )));
    }
    if !(width > 0.0 && width.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "graph width must be positive, got {width}"
        )));
    }
    let first = &windows[0];
    if let Some(w) = windows.iter().find(|w| !w.same_shape(first)) {
        return Err(Error::DimensionMismatch {
            expected: first.as_flat().len(),
            got: w.as_flat().len(),
        });
    }

    let dist = Matrix::from_fn(n, n, |i, j| windows[i].euclidean_distance(&windows[j]));
    let mut weights = Matrix::zeros(n, n);
    for i in 0..n {
        let mut order: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        order.sort_by(|&a, &b| dist[(i, a)].total_cmp(&dist[(i, b)]).then(a.cmp(&b)));
        for &j in &order[..k] {
            let d = dist[(i, j)];
            let w = (-d * d / (2.0 * width * width)).exp();
            weights[(i, j)] = w;
            weights[(j, i)] = w;
        }
    }
    Ok(AdjacencyGraph {
        weights,
        k_neighbours: k,
    })
}

pub fn laplacian(g: &AdjacencyGraph) -> Laplacian {
    let n = g.len();
    let mut entries = -g.weights.clone();
    for i in 0..n {
        let degree: f64 = (0..n).filter(|&j| j != i).map(|j| g.weights[(i, j)]).sum();
        entries[(i, i)] = degree;
    }
    Laplacian { entries }
}

/// Effective kernel by a pivoted linear solve against `K`; `K` is never inverted.
pub fn effective_kernel(k: &Matrix, l: &Laplacian, c3: f64) -> Result<EffectiveKernel> {
    let n = k.nrows();
    if k.ncols() != n || l.entries.nrows() != n || l.entries.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: l.entries.nrows(),
        });
    }
    if !(c3 >= 0.0 && c3.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "c3 must be nonnegative, got {c3}"
        )));
    }
    if c3 == 0.0 {
        return Ok(EffectiveKernel {
            q: k.clone(),
            c3,
            raw_asymmetry: 0.0,
        });
    }
    let system = (k * &l.entries) * (4.0 * c3) + Matrix::identity(n, n);
    let mut q = linalg::solve(&system, k, "4 c3 K L + I")?;
    let raw_asymmetry = linalg::symmetrise(&mut q);
    Ok(EffectiveKernel {
        q,
        c3,
        raw_asymmetry,
    })
}

/// Outcome of checking the effective kernel against its analytic properties:
/// symmetric positive definite, and strictly smaller trace than `K` whenever
/// regularisation is active on a graph with at least one edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectiveKernelReport {
    pub c3: f64,
    pub symmetry_residual: f64,
    pub min_eigenvalue: f64,
    pub trace_k: f64,
    pub trace_q: f64,
    pub trace_gap: f64,
    pub flags: Vec<String>,
}

impl EffectiveKernelReport {
    pub fn ok(&self) -> bool {
        self.flags.is_empty()
    }
}

pub fn verify_effective_kernel(
    k: &Matrix,
    q: &Matrix,
    c3: f64,
    l: &Laplacian,
) -> EffectiveKernelReport {
    let symmetry_residual = linalg::asymmetry(q);
    let min_eigenvalue = linalg::min_eigenvalue(q);
    let trace_k = k.trace();
    let trace_q = q.trace();
    let trace_gap = trace_k - trace_q;

    let mut flags = Vec::new();
    if !(min_eigenvalue > 0.0) {
        flags.push(format!(
            "Q is not positive definite (min eigenvalue {min_eigenvalue:e})"
        ));
    }
    if c3 > 0.0 && l.trace() > 0.0 && !(trace_gap > 0.0) {
        flags.push(format!(
            "trace(K) - trace(Q) = {trace_gap:e} is not positive"
        ));
    }
    if c3 == 0.0 && trace_gap.abs() > 1e-8 {
        flags.push(format!("c3 = 0 but trace gap is {trace_gap:e}"));
    }
    EffectiveKernelReport {
        c3,
        symmetry_residual,
        min_eigenvalue,
        trace_k,
        trace_q,
        trace_gap,
        flags,
    }
}

/// Upper bound `(Λ/n) sqrt(tr M)` on the empirical Rademacher complexity of
/// kernel functions with RKHS norm at most `Λ`.
pub fn rademacher_bound(lambda_cap: f64, m: &Matrix) -> Result<f64> {
    if !(lambda_cap > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "lambda must be positive, got {lambda_cap}"
        )));
    }
    let trace = m.trace();
    if !(trace > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "trace must be positive, got {trace}"
        )));
    }
    Ok(lambda_cap / m.nrows() as f64 * trace.sqrt())
}

/// `2 sqrt(max_i K_ii)`: the norm of η = 2C when the centre lies within the
/// convex hull of unit-norm features.
pub fn default_lambda_cap(k: &Matrix) -> f64 {
    2.0 * k.diagonal().iter().copied().fold(0.0, f64::max).sqrt()
}
