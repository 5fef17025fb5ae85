mod common;

use common::*;
use mrsvdd::manifold::{build_knn_graph, effective_kernel, laplacian};
use mrsvdd::svdd::{
    dual_gradient, dual_objective, kkt_report, project_feasible, recover_beta, solve_dual,
};
use mrsvdd::{AdjacencyGraph, HyperParams, Matrix, SolverOptions, Vector};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn hp(q: f64, nu: f64, c3: f64) -> HyperParams {
    HyperParams {
        q,
        c1: 1.0,
        c2: 1.0,
        c3,
        nu,
    }
}

#[test]
fn matches_grid_optimum_for_four_samples() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for _ in 0..10 {
        let q_mat = random_pd(&mut rng, 4, 0.1);
        let labels = random_labels(&mut rng, 4);
        let nu = rng.random_range(1.1..2.5);
        let h = hp(2.0, nu, 0.0);
        let sol = solve_dual(&q_mat, &labels, &h, &SolverOptions::default()).unwrap();
        let grid = grid_optimum_q2(&q_mat, &labels, nu, 1.0, 1.0, 5e-3);
        assert!(sol.objective <= grid + 1e-9, "{} > {grid}", sol.objective);
        assert!(
            (sol.objective - dual_objective(&sol.rho, &labels, &q_mat, &h).unwrap()).abs() < 1e-12
        );
        assert!(
            kkt_report(&sol.rho, &q_mat, &labels, &h)
                .unwrap()
                .residual()
                <= 1e-6
        );
    }
}

#[test]
fn gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for q in [16.0 / 15.0, 4.0 / 3.0, 2.0, 4.0] {
        for _ in 0..10 {
            let n = rng.random_range(2..=8);
            let q_mat = random_pd(&mut rng, n, 0.1);
            let labels = random_labels(&mut rng, n);
            let h = hp(q, rng.random_range(1.1..10.0), 0.0);
            let rho = random_interior_point(&mut rng, &labels, h.nu);
            let g = dual_gradient(&rho, &labels, &q_mat, &h).unwrap();
            let fd = central_differences(
                |r| dual_objective(r, &labels, &q_mat, &h).unwrap(),
                &rho,
                1e-6,
            );
            assert!(rel_err(&fd, &g) <= 1e-5, "q={q}: {}", rel_err(&fd, &g));
        }
    }
}

#[test]
fn edgeless_graph_reduces_to_plain_kernel() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..10 {
        let n = rng.random_range(2..=10);
        let k = random_pd(&mut rng, n, 0.1);
        let labels = random_labels(&mut rng, n);
        let l = laplacian(&AdjacencyGraph::empty(n));
        let plain = solve_dual(&k, &labels, &hp(2.0, 2.0, 0.0), &SolverOptions::default()).unwrap();
        let q = effective_kernel(&k, &l, 2.5).unwrap().q;
        let reg = solve_dual(&q, &labels, &hp(2.0, 2.0, 2.5), &SolverOptions::default()).unwrap();
        assert!((&plain.rho - &reg.rho).amax() <= 1e-8);
        let beta = recover_beta(&reg.rho, &labels, &k, &l, 2.5).unwrap();
        assert!((beta - reg.rho.component_mul(&labels) * 2.0).amax() <= 1e-12);
    }
}

#[test]
fn centre_identity_holds_on_regularised_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..10 {
        let n = rng.random_range(6..=20);
        let windows: Vec<_> = (0..n).map(|_| random_path(&mut rng, 4, 2, 0.5)).collect();
        let k = random_pd(&mut rng, n, 0.5);
        let l = laplacian(&build_knn_graph(&windows, 2, 1.0).unwrap());
        for c3 in [0.25, 2.5, 25.0] {
            let h = hp(4.0 / 3.0, 4.0, c3);
            let q = effective_kernel(&k, &l, c3).unwrap().q;
            let labels = random_labels(&mut rng, n);
            let sol = solve_dual(&q, &labels, &h, &SolverOptions::default()).unwrap();
            let beta = recover_beta(&sol.rho, &labels, &k, &l, c3).unwrap();
            let lhs = &k * beta;
            let rhs = &q * sol.rho.component_mul(&labels) * 2.0;
            assert!((lhs - rhs).amax() <= 1e-6);
        }
    }
}

fn instance() -> impl Strategy<Value = (usize, u64, f64, f64)> {
    (
        2usize..8,
        any::<u64>(),
        1.05f64..10.0,
        prop::sample::select(vec![16.0 / 15.0, 8.0 / 7.0, 4.0 / 3.0, 2.0, 4.0, 8.0, 16.0]),
    )
}

fn build(n: usize, seed: u64) -> (Matrix, Vector) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (random_pd(&mut rng, n, 0.05), random_labels(&mut rng, n))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn solution_is_feasible_and_stationary((n, inst, nu, q) in instance()) {
        let (q_mat, labels) = build(n, inst);
        let h = hp(q, nu, 0.0);
        let sol = solve_dual(&q_mat, &labels, &h, &SolverOptions::default()).unwrap();
        let kkt = kkt_report(&sol.rho, &q_mat, &labels, &h).unwrap();
        prop_assert!(kkt.label_residual <= 1e-9 && kkt.sum_residual <= 1e-9, "{:?}", kkt);
        prop_assert!(kkt.min_rho >= 0.0);
        prop_assert!(sol.converged, "{} iterations", sol.iterations);
        // Below q = 4/3 the penalty gradient ρ^(q-1) is so steep near zero that a
        // multiplier of order 1e-14 can only be placed to within one ulp of its
        // donors, which caps the attainable residual.
        let scale = dual_gradient(&sol.rho, &labels, &q_mat, &h).unwrap().amax().max(1.0);
        if q >= 4.0 / 3.0 {
            prop_assert!(kkt.projected_gradient <= 1e-6 * scale, "{} at scale {scale}", kkt.projected_gradient);
        }
    }

    #[test]
    fn no_feasible_point_does_better((n, inst, nu, q) in instance(), seed in any::<u64>()) {
        let (q_mat, labels) = build(n, inst);
        let h = hp(q, nu, 0.0);
        let sol = solve_dual(&q_mat, &labels, &h, &SolverOptions::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..20 {
            let v = Vector::from_fn(labels.len(), |_, _| rng.random_range(-1.0..3.0));
            let other = project_feasible(&v, &labels, nu).unwrap();
            let f = dual_objective(&other, &labels, &q_mat, &h).unwrap();
            prop_assert!(sol.objective <= f + 1e-12 * f.abs().max(1.0), "{} > {f}", sol.objective);
        }
    }

    #[test]
    fn objective_is_convex_along_segments((n, inst, nu, q) in instance(), seed in any::<u64>(), t in 0.0f64..1.0) {
        let (q_mat, labels) = build(n, inst);
        let h = hp(q, nu, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_interior_point(&mut rng, &labels, nu);
        let b = random_interior_point(&mut rng, &labels, nu);
        let f = |r: &Vector| dual_objective(r, &labels, &q_mat, &h).unwrap();
        let mid = &a * t + &b * (1.0 - t);
        let chord = t * f(&a) + (1.0 - t) * f(&b);
        prop_assert!(f(&mid) <= chord + 1e-12 * chord.abs(), "{} > {chord}", f(&mid));
    }

    #[test]
    fn relabelling_permutes_the_solution((n, inst, nu, q) in instance(), seed in any::<u64>()) {
        let (q_mat, labels) = build(n, inst);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let pq = Matrix::from_fn(n, n, |i, j| q_mat[(perm[i], perm[j])]);
        let pl = Vector::from_fn(n, |i, _| labels[perm[i]]);
        let h = hp(q, nu, 0.0);
        let a = solve_dual(&q_mat, &labels, &h, &SolverOptions::default()).unwrap();
        let b = solve_dual(&pq, &pl, &h, &SolverOptions::default()).unwrap();
        prop_assert!((a.objective - b.objective).abs() <= 1e-8 * a.objective.abs().max(1.0), "{} vs {}", a.objective, b.objective);
    }
}
