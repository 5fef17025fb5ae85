use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};

/// Trade-off parameters of the large-margin ℓp-SVDD.
///
/// The model is parameterised by the dual exponent `q`; the primal slack
/// exponent is `p = q / (q - 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub q: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub nu: f64,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            q: 2.0,
            c1: 1.0,
            c2: 1.0,
            c3: 0.25,
            nu: 2.0,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: String| Err(Error::InvalidArgument(what));
        if !(self.q > 1.0 && self.q.is_finite()) {
            return bad(format!("q must exceed 1, got {}", self.q));
        }
        if !(self.c1 > 0.0 && self.c2 > 0.0) {
            return bad(format!(
                "c1, c2 must be positive, got {}, {}",
                self.c1, self.c2
            ));
        }
        if !(self.c3 >= 0.0 && self.c3.is_finite()) {
            return bad(format!("c3 must be nonnegative, got {}", self.c3));
        }
        if !(self.nu > 1.0 && self.nu.is_finite()) {
            return bad(format!("nu must exceed 1, got {}", self.nu));
        }
        Ok(())
    }

    pub fn p(&self) -> f64 {
        self.q / (self.q - 1.0)
    }
}

/// Coefficients of the q-norm terms in the dual.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyConstants {
    pub c1: f64,
    pub c2: f64,
    pub p: f64,
}

/// `c' = ((p - 1)/p) (c p)^(-1/(p-1))` for both classes, with `p = q/(q-1)`.
pub fn penalty_constants(q: f64, c1: f64, c2: f64) -> Result<PenaltyConstants> {
    if !(q > 1.0) {
        return Err(Error::InvalidArgument(format!("q must exceed 1, got {q}")));
    }
    let p = q / (q - 1.0);
    let c = |c: f64| (p - 1.0) / p * (c * p).powf(-1.0 / (p - 1.0));
    Ok(PenaltyConstants {
        c1: c(c1),
        c2: c(c2),
        p,
    })
}

/// The dual objective
///
/// ```text
/// f(ρ) = c1' ‖(1 + y) ⊙ ρ‖_q^q + c2' ‖(1 - y) ⊙ ρ‖_q^q + (y ⊙ ρ)ᵀ Q (y ⊙ ρ)
/// ```
///
/// over labels `y ∈ {-1, +1}ⁿ`, with `Q` the effective kernel.
#[derive(Debug, Clone)]
pub struct DualProblem<'a> {
    q_mat: &'a Matrix,
    labels: &'a Vector,
    /// Per-sample weight of `ρ_j^q`: `c1' 2^q` for targets, `c2' 2^q` otherwise.
    weights: Vector,
    exponent: f64,
}

impl<'a> DualProblem<'a> {
    pub fn new(q_mat: &'a Matrix, labels: &'a Vector, hp: &HyperParams) -> Result<Self> {
        let n = labels.len();
        if q_mat.nrows() != n || q_mat.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: q_mat.nrows(),
            });
        }
        check_labels(labels)?;
        let pc = penalty_constants(hp.q, hp.c1, hp.c2)?;
        let scale = 2f64.powf(hp.q);
        let weights = labels.map(|y| {
            if y > 0.0 {
                pc.c1 * scale
            } else {
                pc.c2 * scale
            }
        });
        Ok(Self {
            q_mat,
            labels,
            weights,
            exponent: hp.q,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &Vector {
        self.labels
    }

    pub(crate) fn q_mat(&self) -> &Matrix {
        self.q_mat
    }

    /// The `ρ_j^q` term at `r`.
    pub(crate) fn penalty(&self, j: usize, r: f64) -> f64 {
        self.weights[j] * r.max(0.0).powf(self.exponent)
    }

    /// Derivative of the `ρ_j^q` term at `r`.
    pub(crate) fn penalty_slope(&self, j: usize, r: f64) -> f64 {
        if r > 0.0 {
            self.exponent * self.weights[j] * r.powf(self.exponent - 1.0)
        } else {
            0.0
        }
    }

    fn signed(&self, rho: &Vector) -> Vector {
        rho.component_mul(self.labels)
    }

    pub fn objective(&self, rho: &Vector) -> f64 {
        let s = self.signed(rho);
        let norm_terms: f64 = rho
            .iter()
            .zip(self.weights.iter())
            .map(|(r, w)| w * r.max(0.0).powf(self.exponent))
            .sum();
        norm_terms + s.dot(&(self.q_mat * &s))
    }

    pub fn gradient(&self, rho: &Vector) -> Vector {
        let s = self.signed(rho);
        let qs = self.q_mat * &s;
        Vector::from_fn(rho.len(), |j, _| {
            self.penalty_slope(j, rho[j]) + 2.0 * self.labels[j] * qs[j]
        })
    }
}

pub(crate) fn check_labels(labels: &Vector) -> Result<()> {
    if labels.iter().any(|&y| y != 1.0 && y != -1.0) {
        return Err(Error::InvalidArgument("labels must be +1 or -1".into()));
    }
    Ok(())
}

pub fn dual_objective(
    rho: &Vector,
    labels: &Vector,
    q_mat: &Matrix,
    hp: &HyperParams,
) -> Result<f64> {
    Ok(DualProblem::new(q_mat, labels, hp)?.objective(rho))
}

pub fn dual_gradient(
    rho: &Vector,
    labels: &Vector,
    q_mat: &Matrix,
    hp: &HyperParams,
) -> Result<Vector> {
    Ok(DualProblem::new(q_mat, labels, hp)?.gradient(rho))
}
