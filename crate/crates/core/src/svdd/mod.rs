//! Large-margin ℓp-SVDD with manifold regularisation, solved in the dual.
//!
//! The dual problem is
//!
//! ```text
//! min_ρ  c1' ‖(1 + y) ⊙ ρ‖_q^q + c2' ‖(1 - y) ⊙ ρ‖_q^q + (y ⊙ ρ)ᵀ Q (y ⊙ ρ)
//! s.t.   yᵀρ = 1,  1ᵀρ = ν,  ρ ≥ 0
//! ```
//!
//! with `Q` the effective kernel. The description centre is recovered as
//! `C = ½ Σ β_j φ(x_j)` and a window is anomalous when its squared distance to
//! the centre exceeds the squared radius.

mod dual;
mod model;
mod projection;
mod solver;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::linalg::{Matrix, Vector};
use crate::manifold::{effective_kernel, EffectiveKernel, Laplacian};
use crate::sigkernel::{GramMatrix, Path, SignatureKernel};

pub use dual::{
    dual_gradient, dual_objective, penalty_constants, DualProblem, HyperParams, PenaltyConstants,
};
pub use model::{
    distances_from_kernel_rows, radius_and_margin, recover_beta, slack_values, support_threshold,
    Model, RadiusMargin,
};
pub use projection::{class_masses, constraint_residuals, project_feasible};
pub use solver::{kkt_report, solve_dual, DualSolve, KktReport, SolverOptions};

/// Everything recovered from one dual solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualSolution {
    pub rho: Vec<f64>,
    pub beta: Vec<f64>,
    pub zeta: Vec<f64>,
    pub r2: f64,
    pub tau2: f64,
    pub objective: f64,
    pub kkt_residual: f64,
    pub converged: bool,
    pub iterations: usize,
    pub radius: RadiusMargin,
    /// `βᵀKβ`, reused by every distance evaluation.
    pub beta_k_beta: f64,
    /// Squared distances of the training samples to the centre.
    pub train_distances: Vec<f64>,
}

/// Solve the dual for a prepared effective kernel and recover β, ζ, r², τ².
pub fn solve_with_effective(
    k: &Matrix,
    effective: &EffectiveKernel,
    laplacian: &Laplacian,
    labels: &Vector,
    hp: &HyperParams,
    opts: &SolverOptions,
) -> Result<DualSolution> {
    let solve = solve_dual(&effective.q, labels, hp, opts)?;
    let kkt = kkt_report(&solve.rho, &effective.q, labels, hp)?;
    let beta = recover_beta(&solve.rho, labels, k, laplacian, hp.c3)?;
    let zeta = slack_values(&solve.rho, labels, hp.p(), hp.c1, hp.c2);
    let k_beta = k * &beta;
    let beta_k_beta = beta.dot(&k_beta);
    let train_distances = Vector::from_fn(labels.len(), |j, _| {
        k[(j, j)] - k_beta[j] + 0.25 * beta_k_beta
    });
    let radius = radius_and_margin(&solve.rho, labels, &zeta, &train_distances, hp.nu)?;
    Ok(DualSolution {
        rho: solve.rho.iter().copied().collect(),
        beta: beta.iter().copied().collect(),
        zeta: zeta.iter().copied().collect(),
        r2: radius.r2,
        tau2: radius.tau2,
        objective: solve.objective,
        kkt_residual: kkt.residual(),
        converged: solve.converged,
        iterations: solve.iterations,
        radius,
        beta_k_beta,
        train_distances: train_distances.iter().copied().collect(),
    })
}

/// A trained model together with its solve diagnostics.
#[derive(Debug, Clone)]
pub struct Fitted {
    pub model: Model,
    pub solution: DualSolution,
    pub effective: EffectiveKernel,
}

/// Train on labelled windows given their Gram matrix and graph Laplacian.
pub fn fit(
    kernel: SignatureKernel,
    windows: &[Path],
    labels: &Vector,
    gram: &GramMatrix,
    laplacian: &Laplacian,
    hp: &HyperParams,
    opts: &SolverOptions,
) -> Result<Fitted> {
    hp.validate()?;
    let effective = effective_kernel(&gram.entries, laplacian, hp.c3)?;
    let solution = solve_with_effective(&gram.entries, &effective, laplacian, labels, hp, opts)?;
    let model = Model {
        kernel,
        hyperparams: *hp,
        windows: windows.to_vec(),
        self_kernels: gram.self_kernels.clone(),
        beta: solution.beta.clone(),
        beta_k_beta: solution.beta_k_beta,
        r2: solution.r2,
        tau2: solution.tau2,
        decision_offset: 0.0,
    };
    Ok(Fitted {
        model,
        solution,
        effective,
    })
}
