//! Instance generators and brute-force oracles shared by the integration
//! tests and the acceptance harness.
#![allow(dead_code)]

use mrsvdd::{Matrix, Path, Vector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// `AAᵀ + shift·I` with standard normal-ish entries.
pub fn random_pd(rng: &mut ChaCha8Rng, n: usize, shift: f64) -> Matrix {
    let a = Matrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    &a * a.transpose() + Matrix::identity(n, n) * shift
}

/// ±1 labels with at least one of each class.
pub fn random_labels(rng: &mut ChaCha8Rng, n: usize) -> Vector {
    assert!(n >= 2);
    let negatives = rng.random_range(1..n);
    let mut y: Vec<f64> = (0..n)
        .map(|i| if i < negatives { -1.0 } else { 1.0 })
        .collect();
    y.shuffle(rng);
    Vector::from_vec(y)
}

/// Random walk with increments of norm at most `max_norm`.
pub fn random_path(rng: &mut ChaCha8Rng, steps: usize, dim: usize, max_norm: f64) -> Path {
    let mut rows = vec![vec![0.0; dim]];
    for _ in 0..steps {
        let inc: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let norm = inc.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        let scale = rng.random_range(0.1..1.0) * max_norm / norm;
        let last = rows.last().unwrap().clone();
        rows.push(last.iter().zip(&inc).map(|(a, b)| a + b * scale).collect());
    }
    Path::from_rows(&rows).unwrap()
}

/// Strictly positive point with the class masses `(ν+1)/2` and `(ν-1)/2`.
pub fn random_interior_point(rng: &mut ChaCha8Rng, labels: &Vector, nu: f64) -> Vector {
    let mut rho = Vector::from_fn(labels.len(), |_, _| rng.random_range(0.2..1.0));
    for (class, mass) in [(1.0, (nu + 1.0) / 2.0), (-1.0, (nu - 1.0) / 2.0)] {
        let total: f64 = rho
            .iter()
            .zip(labels.iter())
            .filter(|(_, &y)| y == class)
            .map(|(r, _)| r)
            .sum();
        for (r, &y) in rho.iter_mut().zip(labels.iter()) {
            if y == class {
                *r *= mass / total;
            }
        }
    }
    rho
}

/// Central differences of `f` at `x` with step `h`.
pub fn central_differences(f: impl Fn(&Vector) -> f64, x: &Vector, h: f64) -> Vector {
    Vector::from_fn(x.len(), |i, _| {
        let mut up = x.clone();
        let mut down = x.clone();
        up[i] += h;
        down[i] -= h;
        (f(&up) - f(&down)) / (2.0 * h)
    })
}

/// Minimum of the q = 2 dual objective over a grid of resolution `step` on
/// the feasible polytope. With `p = 2` the per-sample penalty weight reduces
/// to `1/c`, so the objective is `Σ ρ_j²/c_{y_j} + sᵀQs` with `s = y ⊙ ρ`.
///
/// Each class block walks the multiples of `step`, its last entry taking the
/// remaining mass.
pub fn grid_optimum_q2(
    q_mat: &Matrix,
    labels: &Vector,
    nu: f64,
    c1: f64,
    c2: f64,
    step: f64,
) -> f64 {
    let n = labels.len();
    let mut order: Vec<usize> = (0..n).filter(|&i| labels[i] > 0.0).collect();
    let split = order.len();
    order.extend((0..n).filter(|&i| labels[i] < 0.0));
    let q: Vec<f64> = (0..n * n)
        .map(|t| q_mat[(order[t / n], order[t % n])])
        .collect();
    let search = Search {
        q,
        n,
        split,
        masses: [(nu + 1.0) / 2.0, (nu - 1.0) / 2.0],
        weights: [1.0 / c1, 1.0 / c2],
        step,
    };
    let mut rho = vec![0.0; n];
    let mut best = f64::INFINITY;
    search.walk(0, 0.0, &mut rho, &mut best);
    best
}

struct Search {
    q: Vec<f64>,
    n: usize,
    split: usize,
    masses: [f64; 2],
    weights: [f64; 2],
    step: f64,
}

impl Search {
    fn block(&self, i: usize) -> (usize, usize) {
        if i < self.split {
            (0, self.split - 1)
        } else {
            (1, self.n - 1)
        }
    }

    fn walk(&self, i: usize, used: f64, rho: &mut [f64], best: &mut f64) {
        if i == self.n {
            *best = best.min(self.objective(rho));
            return;
        }
        let (class, last) = self.block(i);
        let mass = self.masses[class];
        let next_used = |v: f64| if i == last { 0.0 } else { used + v };
        if i == last {
            rho[i] = (mass - used).max(0.0);
            self.walk(i + 1, next_used(rho[i]), rho, best);
            return;
        }
        let units = ((mass - used) / self.step + 1e-9).floor() as usize;
        for u in 0..=units {
            rho[i] = u as f64 * self.step;
            self.walk(i + 1, next_used(rho[i]), rho, best);
        }
    }

    fn objective(&self, rho: &[f64]) -> f64 {
        let n = self.n;
        let mut total = 0.0;
        for i in 0..n {
            let si = if i < self.split { rho[i] } else { -rho[i] };
            let w = if i < self.split {
                self.weights[0]
            } else {
                self.weights[1]
            };
            total += w * rho[i] * rho[i];
            let mut row = 0.0;
            for (j, &r) in rho.iter().enumerate() {
                let sj = if j < self.split { r } else { -r };
                row += self.q[i * n + j] * sj;
            }
            total += si * row;
        }
        total
    }
}

/// Relative error `‖a - b‖ / max(‖b‖, 1e-12)`.
pub fn rel_err(a: &Vector, b: &Vector) -> f64 {
    (a - b).norm() / b.norm().max(1e-12)
}
