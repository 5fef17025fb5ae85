use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::svdd::dual::{DualProblem, HyperParams};
use crate::svdd::projection::{constraint_residuals, project_feasible};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub max_iters: usize,
    /// Stop once `‖ρ_{t+1} - ρ_t‖ ≤ tol`.
    pub tol: f64,
    /// Keep the objective value of every accepted iterate.
    #[serde(default)]
    pub record_trace: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iters: 20_000,
            tol: 1e-11,
            record_trace: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualSolve {
    pub rho: Vector,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<f64>,
}

const ARMIJO: f64 = 1e-4;
const STEP_MIN: f64 = 1e-14;
const STEP_MAX: f64 = 1e12;
/// Projected steps hand over to pairwise moves once `STALL_WINDOW` of them
/// gain less than this fraction of the objective, or after `PROJECTED_BUDGET`
/// steps: a crawl that keeps gaining a little is still a crawl.
const STALL_DECREASE: f64 = 1e-7;
const STALL_WINDOW: usize = 100;
const PROJECTED_BUDGET: usize = 1000;
/// Largest gradient gap tolerated between two samples of one class that could
/// trade mass, relative to the gradient scale.
const PAIR_TOL: f64 = 1e-10;

/// Projected gradient descent with Barzilai–Borwein trial steps and a
/// monotone Armijo backtracking line search along the projected direction,
/// finished by exact pairwise moves until no two samples of a class can trade
/// mass profitably.
///
/// Starts from the projection of the uniform vector `ν/n · 1`, so the result is
/// a deterministic function of the inputs. Every accepted step decreases the
/// objective.
pub fn solve_dual(
    q_mat: &Matrix,
    labels: &Vector,
    hp: &HyperParams,
    opts: &SolverOptions,
) -> Result<DualSolve> {
    hp.validate()?;
    let problem = DualProblem::new(q_mat, labels, hp)?;
    let n = labels.len();
    let mut rho = project_feasible(&Vector::repeat(n, hp.nu / n as f64), labels, hp.nu)?;
    let mut f = problem.objective(&rho);
    let mut grad = problem.gradient(&rho);
    let mut trace = if opts.record_trace {
        vec![f]
    } else {
        Vec::new()
    };

    // first trial step from a Gershgorin bound on the quadratic curvature
    let gersh = (0..n)
        .map(|i| q_mat.row(i).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let mut step = (1.0 / (2.0 * gersh.max(1e-12))).clamp(STEP_MIN, STEP_MAX);

    let mut iterations = 0;
    let mut checkpoint = f;
    while iterations < opts.max_iters.min(PROJECTED_BUDGET) {
        iterations += 1;
        if iterations % STALL_WINDOW == 0 {
            if checkpoint - f <= STALL_DECREASE * f.abs().max(1.0) {
                break;
            }
            checkpoint = f;
        }
        let target = project_feasible(&(&rho - &grad * step), labels, hp.nu)?;
        let direction = &target - &rho;
        let slope = grad.dot(&direction);
        if direction.norm() <= opts.tol || slope >= 0.0 {
            break;
        }

        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let candidate = &rho + &direction * alpha;
            let fc = problem.objective(&candidate);
            if fc <= f + ARMIJO * alpha * slope {
                accepted = Some((candidate, fc));
                break;
            }
            alpha *= 0.5;
        }
        let Some((next, f_next)) = accepted else {
            // no decrease representable in floating point
            break;
        };

        let grad_next = problem.gradient(&next);
        let s = &next - &rho;
        let moved = s.norm();
        let y = &grad_next - &grad;
        let sy = s.dot(&y);
        step = if sy > 0.0 {
            (s.norm_squared() / sy).clamp(STEP_MIN, STEP_MAX)
        } else {
            STEP_MAX
        };

        rho = next;
        f = f_next;
        grad = grad_next;
        if opts.record_trace {
            trace.push(f);
        }
        if moved <= opts.tol {
            break;
        }
    }

    // Projected steps crawl when a multiplier settles next to zero and q is
    // close to 1, where the penalty curvature blows up; exact pairwise moves
    // do not care about curvature and finish the job. A move costs O(n)
    // against O(n²) for a projected step, hence the larger budget.
    let polish = polish_pairs(
        &problem,
        &mut rho,
        opts.max_iters.saturating_mul(n.max(1)),
        PAIR_TOL,
    );
    iterations += polish.moves;
    if polish.moves > 0 {
        f = problem.objective(&rho);
        if opts.record_trace {
            trace.push(f);
        }
    }
    let converged = polish.resolved || polish.gap <= PAIR_TOL * polish.scale;

    if !converged {
        warn!(
            "dual solver stopped after {iterations} iterations without meeting tol {:e}",
            opts.tol
        );
    }
    Ok(DualSolve {
        rho,
        objective: f,
        iterations,
        converged,
        trace,
    })
}

struct Polish {
    moves: usize,
    gap: f64,
    scale: f64,
    /// Stopped because no violating pair had a representable improving move.
    resolved: bool,
}

/// Most violating same-class pair `(gap, receiver, donor)` outside `blocked`.
fn violating_pair(
    g: &[f64],
    rho: &Vector,
    y: &Vector,
    blocked: &[(usize, usize)],
) -> Option<(f64, usize, usize)> {
    let n = g.len();
    let mut pick: Option<(f64, usize, usize)> = None;
    let mut offer = |gap: f64, i: usize, j: usize| {
        if i != j && pick.is_none_or(|(best, _, _)| gap > best) {
            pick = Some((gap, i, j));
        }
    };
    for class in [1.0, -1.0] {
        let members: Vec<usize> = (0..n).filter(|&j| y[j] == class).collect();
        if blocked.is_empty() {
            let lo = members
                .iter()
                .copied()
                .min_by(|&a, &b| g[a].total_cmp(&g[b]));
            let hi = members
                .iter()
                .copied()
                .filter(|&j| rho[j] > 0.0)
                .max_by(|&a, &b| g[a].total_cmp(&g[b]));
            if let (Some(i), Some(j)) = (lo, hi) {
                offer(g[j] - g[i], i, j);
            }
        } else {
            for &j in members.iter().filter(|&&j| rho[j] > 0.0) {
                for &i in &members {
                    if !blocked.contains(&(i, j)) {
                        offer(g[j] - g[i], i, j);
                    }
                }
            }
        }
    }
    pick
}

/// Sequential minimal optimisation over same-class pairs: mass moves from the
/// sample with the largest gradient to the one with the smallest, by the exact
/// minimiser of the objective along that direction. Both equality
/// constraints are untouched by such a move. A move whose rounded effect does
/// not lower the objective blocks its pair until some other move succeeds.
fn polish_pairs(problem: &DualProblem, rho: &mut Vector, max_moves: usize, tol: f64) -> Polish {
    let q = problem.q_mat();
    let y = problem.labels();
    let n = rho.len();
    let mut qs = q * rho.component_mul(y);
    let grad =
        |j: usize, rho: &Vector, qs: &Vector| problem.penalty_slope(j, rho[j]) + 2.0 * y[j] * qs[j];
    let mut g: Vec<f64> = (0..n).map(|j| grad(j, rho, &qs)).collect();
    let mut blocked = Vec::new();
    let mut moves = 0;
    let level = problem.objective(rho).abs().max(1.0);
    let window = n.max(STALL_WINDOW);
    let mut window_gain = 0.0;
    loop {
        let scale = g.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let Some((gap, i, j)) = violating_pair(&g, rho, y, &blocked) else {
            let resolved = !blocked.is_empty();
            return Polish {
                moves,
                gap: 0.0,
                scale,
                resolved,
            };
        };
        if gap <= tol * scale || moves >= max_moves {
            return Polish {
                moves,
                gap,
                scale,
                resolved: false,
            };
        }

        let curvature = 2.0 * (q[(i, i)] - 2.0 * q[(i, j)] + q[(j, j)]);
        let (ri, rj) = (rho[i], rho[j]);
        let base = 2.0 * y[i] * (qs[i] - qs[j]);
        let slope = |t: f64| {
            problem.penalty_slope(i, ri + t) - problem.penalty_slope(j, rj - t)
                + base
                + curvature * t
        };
        let t = if slope(rj) <= 0.0 {
            rj
        } else {
            let (mut a, mut b) = (0.0, rj);
            for _ in 0..200 {
                let mid = 0.5 * (a + b);
                if mid <= a || mid >= b {
                    break;
                }
                if slope(mid) < 0.0 {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            a
        };
        let (ni, nj) = (ri + t, if t == rj { 0.0 } else { rj - t });
        // objective change of the move as rounded
        let (di, dj) = (y[i] * (ni - ri), y[j] * (nj - rj));
        let change = problem.penalty(i, ni) - problem.penalty(i, ri) + problem.penalty(j, nj)
            - problem.penalty(j, rj)
            + 2.0 * (di * qs[i] + dj * qs[j])
            + di * di * q[(i, i)]
            + 2.0 * di * dj * q[(i, j)]
            + dj * dj * q[(j, j)];
        if !(change < 0.0) {
            blocked.push((i, j));
            continue;
        }
        blocked.clear();
        window_gain -= change;
        if moves > 0 && moves % window == 0 {
            if window_gain <= f64::EPSILON * level {
                // only rounding-level gains left
                return Polish {
                    moves,
                    gap,
                    scale,
                    resolved: true,
                };
            }
            window_gain = 0.0;
        }
        rho[i] = ni;
        rho[j] = nj;
        for k in 0..n {
            qs[k] += di * q[(k, i)] + dj * q[(k, j)];
        }
        for (k, gk) in g.iter_mut().enumerate() {
            *gk = grad(k, rho, &qs);
        }
        moves += 1;
    }
}

/// Optimality diagnostics of a dual point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    /// `|yᵀρ - 1|`
    pub label_residual: f64,
    /// `|1ᵀρ - ν|`
    pub sum_residual: f64,
    pub min_rho: f64,
    /// Norm of `-∇f` projected onto the tangent cone of the feasible set at ρ;
    /// zero exactly at the optimum of the convex dual.
    pub projected_gradient: f64,
}

impl KktReport {
    pub fn residual(&self) -> f64 {
        self.label_residual
            .max(self.sum_residual)
            .max((-self.min_rho).max(0.0))
            .max(self.projected_gradient)
    }
}

/// Project `v` onto `{d : Σ d = 0, d_j ≥ 0 for active j}`.
fn project_block_tangent(v: &[f64], active: &[bool]) -> Vec<f64> {
    let eval = |shift: f64| -> (Vec<f64>, f64) {
        let d: Vec<f64> = v
            .iter()
            .zip(active)
            .map(|(&x, &a)| if a { (x - shift).max(0.0) } else { x - shift })
            .collect();
        let s = d.iter().sum();
        (d, s)
    };
    if v.is_empty() {
        return Vec::new();
    }
    // Σ d(shift) is nonincreasing in shift; bracket and bisect for its root.
    let lo0 = v.iter().copied().fold(f64::INFINITY, f64::min) - 1.0;
    let hi0 = v.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 1.0;
    if eval(hi0).1 >= 0.0 {
        // every coordinate is active and clamped at zero
        return vec![0.0; v.len()];
    }
    let (mut lo, mut hi) = (lo0, hi0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if eval(mid).1 > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    eval(0.5 * (lo + hi)).0
}

pub fn kkt_report(
    rho: &Vector,
    q_mat: &Matrix,
    labels: &Vector,
    hp: &HyperParams,
) -> Result<KktReport> {
    let problem = DualProblem::new(q_mat, labels, hp)?;
    let (label_residual, sum_residual, _) = constraint_residuals(rho, labels, hp.nu);
    let min_rho = rho.iter().copied().fold(f64::INFINITY, f64::min);
    let neg_grad = -problem.gradient(rho);
    let active_tol = 1e-12 * hp.nu.max(1.0);

    let mut norm_sq = 0.0;
    for positive in [true, false] {
        let idx: Vec<usize> = (0..rho.len())
            .filter(|&j| (labels[j] > 0.0) == positive)
            .collect();
        let v: Vec<f64> = idx.iter().map(|&j| neg_grad[j]).collect();
        let active: Vec<bool> = idx.iter().map(|&j| rho[j] <= active_tol).collect();
        norm_sq += project_block_tangent(&v, &active)
            .iter()
            .map(|d| d * d)
            .sum::<f64>();
    }
    if !norm_sq.is_finite() {
        return Err(Error::NonFinite);
    }
    Ok(KktReport {
        label_residual,
        sum_residual,
        min_rho,
        projected_gradient: norm_sq.sqrt(),
    })
}
