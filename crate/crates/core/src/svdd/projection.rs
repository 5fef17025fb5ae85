//! Euclidean projection onto `{ρ ≥ 0, yᵀρ = 1, 1ᵀρ = ν}`.
//!
//! Adding and subtracting the two equalities fixes the mass of each class:
//! `Σ_{y=+1} ρ = (ν + 1)/2` and `Σ_{y=-1} ρ = (ν - 1)/2`. The feasible set is
//! therefore a product of two scaled simplices and the projection splits into
//! two exact simplex projections.

use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::svdd::dual::check_labels;

/// Required `(target, non-target)` masses for the given `ν`.
pub fn class_masses(nu: f64) -> (f64, f64) {
    (0.5 * (nu + 1.0), 0.5 * (nu - 1.0))
}

fn check_feasible(labels: &Vector, nu: f64) -> Result<()> {
    check_labels(labels)?;
    let positives = labels.iter().filter(|&&y| y > 0.0).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::Infeasible(format!(
            "both classes are required ({positives} targets, {negatives} non-targets)"
        )));
    }
    if !(nu >= 1.0 && nu.is_finite()) {
        return Err(Error::Infeasible(format!(
            "nu must be at least 1, got {nu}"
        )));
    }
    Ok(())
}

/// Projection of `v` onto `{x ≥ 0, Σx = mass}` (sort-and-threshold).
fn project_simplex(v: &[f64], mass: f64) -> Vec<f64> {
    if mass <= 0.0 {
        return vec![0.0; v.len()];
    }
    // the projection ignores a common offset; removing the largest entry keeps
    // huge gradient steps from cancelling away the O(mass) answer
    let top = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let v: Vec<f64> = v.iter().map(|&x| x - top).collect();
    let mut sorted = v.clone();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut shift = 0.0;
    for (k, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let candidate = (cumulative - mass) / (k + 1) as f64;
        if u - candidate > 0.0 {
            shift = candidate;
        } else {
            break;
        }
    }
    v.iter().map(|&x| (x - shift).max(0.0)).collect()
}

pub fn project_feasible(v: &Vector, labels: &Vector, nu: f64) -> Result<Vector> {
    if v.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: labels.len(),
            got: v.len(),
        });
    }
    check_feasible(labels, nu)?;
    let (pos_mass, neg_mass) = class_masses(nu);
    let mut out = Vector::zeros(v.len());
    for (positive, mass) in [(true, pos_mass), (false, neg_mass)] {
        let idx: Vec<usize> = (0..v.len())
            .filter(|&j| (labels[j] > 0.0) == positive)
            .collect();
        let block: Vec<f64> = idx.iter().map(|&j| v[j]).collect();
        for (&j, x) in idx.iter().zip(project_simplex(&block, mass)) {
            out[j] = x;
        }
    }
    Ok(out)
}

/// Residuals `(|yᵀρ - 1|, |1ᵀρ - ν|, max(0, -min ρ))`.
pub fn constraint_residuals(rho: &Vector, labels: &Vector, nu: f64) -> (f64, f64, f64) {
    let y_dot = rho.dot(labels);
    let total = rho.sum();
    let min = rho.iter().copied().fold(f64::INFINITY, f64::min);
    ((y_dot - 1.0).abs(), (total - nu).abs(), (-min).max(0.0))
}
