use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::manifold::Laplacian;
use crate::sigkernel::{Path, SignatureKernel};
use crate::svdd::dual::HyperParams;

/// `β = (2 c3 L K + ½ I)⁻¹ (y ⊙ ρ)`; exactly `2 (y ⊙ ρ)` when `c3 = 0`.
pub fn recover_beta(
    rho: &Vector,
    labels: &Vector,
    k: &Matrix,
    l: &Laplacian,
    c3: f64,
) -> Result<Vector> {
    let signed = rho.component_mul(labels);
    if c3 == 0.0 {
        return Ok(signed * 2.0);
    }
    let n = rho.len();
    let system = (&l.entries * k) * (2.0 * c3) + Matrix::identity(n, n) * 0.5;
    linalg::solve_vec(&system, &signed, "2 c3 L K + I/2")
}

/// Slacks from stationarity: `ζ_j = (ρ_j / (c p))^(1/(p-1))` with `c = c1` for
/// targets and `c2` for non-targets.
pub fn slack_values(rho: &Vector, labels: &Vector, p: f64, c1: f64, c2: f64) -> Vector {
    Vector::from_fn(rho.len(), |j, _| {
        let r = rho[j].max(0.0);
        if r == 0.0 {
            return 0.0;
        }
        let c = if labels[j] > 0.0 { c1 } else { c2 };
        (r / (c * p)).powf(1.0 / (p - 1.0))
    })
}

/// Radius and margin recovered from complementary slackness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadiusMargin {
    pub r2: f64,
    pub tau2: f64,
    pub target_support: usize,
    pub non_target_support: usize,
    /// One class had no support vector; `r2` comes from the other and `tau2 = 0`.
    pub fallback: bool,
}

/// Support vectors are samples with `ρ_j > 1e-8 ν`.
pub fn support_threshold(nu: f64) -> f64 {
    1e-8 * nu
}

/// With `A` the mean of `d² - ζ` over target support vectors and `B` the mean
/// of `d² + ζ` over non-target ones, `r² - τ² = A` and `r² + τ² = B`.
pub fn radius_and_margin(
    rho: &Vector,
    labels: &Vector,
    zeta: &Vector,
    distances: &Vector,
    nu: f64,
) -> Result<RadiusMargin> {
    let threshold = support_threshold(nu);
    let mean = |positive: bool| {
        let vals: Vec<f64> = (0..rho.len())
            .filter(|&j| rho[j] > threshold && (labels[j] > 0.0) == positive)
            .map(|j| {
                if positive {
                    distances[j] - zeta[j]
                } else {
                    distances[j] + zeta[j]
                }
            })
            .collect();
        let count = vals.len();
        (
            count,
            if count > 0 {
                Some(vals.iter().sum::<f64>() / count as f64)
            } else {
                None
            },
        )
    };
    let (target_support, a) = mean(true);
    let (non_target_support, b) = mean(false);
    let (r2, tau2, fallback) = match (a, b) {
        (Some(a), Some(b)) => (0.5 * (a + b), 0.5 * (b - a), false),
        (Some(a), None) => (a, 0.0, true),
        (None, Some(b)) => (b, 0.0, true),
        (None, None) => {
            return Err(Error::InsufficientData("no support vectors".into()));
        }
    };
    if fallback {
        log::warn!("radius recovered from one class only");
    }
    Ok(RadiusMargin {
        r2,
        tau2,
        target_support,
        non_target_support,
        fallback,
    })
}

/// Trained data description.
///
/// Scoring needs the kernel, the training windows with their raw self-kernels,
/// the expansion coefficients and the constant `βᵀKβ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub kernel: SignatureKernel,
    pub hyperparams: HyperParams,
    pub windows: Vec<Path>,
    pub self_kernels: Vec<f64>,
    pub beta: Vec<f64>,
    pub beta_k_beta: f64,
    pub r2: f64,
    pub tau2: f64,
    /// Added to `r²` in the decision rule; zero unless configured.
    #[serde(default)]
    pub decision_offset: f64,
}

impl Model {
    pub fn window_len(&self) -> usize {
        self.windows[0].len()
    }

    pub fn channels(&self) -> usize {
        self.windows[0].dim()
    }

    fn check_input(&self, x: &Path) -> Result<()> {
        if !x.same_shape(&self.windows[0]) {
            return Err(Error::DimensionMismatch {
                expected: self.windows[0].as_flat().len(),
                got: x.as_flat().len(),
            });
        }
        Ok(())
    }

    /// `‖φ(x) - C‖² = κ(x,x) - Σ β_j κ(x, x_j) + ¼ βᵀKβ`.
    pub fn distance_squared(&self, x: &Path) -> Result<f64> {
        self.check_input(x)?;
        let kxx = self.kernel.raw(x, x)?;
        let mut cross = 0.0;
        for ((w, &kw), &b) in self.windows.iter().zip(&self.self_kernels).zip(&self.beta) {
            if b != 0.0 {
                cross += b * self.kernel.eval_with(x, kxx, w, kw)?;
            }
        }
        let self_term = if self.kernel.config.normalise {
            1.0
        } else {
            kxx
        };
        Ok(self_term - cross + 0.25 * self.beta_k_beta)
    }

    /// `d²(x) - r² - offset`; positive means anomalous.
    pub fn score(&self, x: &Path) -> Result<f64> {
        Ok(self.distance_squared(x)? - self.r2 - self.decision_offset)
    }

    pub fn score_many(&self, xs: &[Path]) -> Result<Vec<f64>> {
        xs.par_iter().map(|x| self.score(x)).collect()
    }

    pub fn is_anomaly(&self, x: &Path) -> Result<bool> {
        Ok(self.score(x)? > 0.0)
    }
}

/// Squared distances from precomputed kernel rows `kx[i, j] = κ(x_i, x_j)`.
pub fn distances_from_kernel_rows(
    kx: &Matrix,
    self_values: &[f64],
    beta: &Vector,
    beta_k_beta: f64,
) -> Vector {
    let cross = kx * beta;
    Vector::from_fn(kx.nrows(), |i, _| {
        self_values[i] - cross[i] + 0.25 * beta_k_beta
    })
}
