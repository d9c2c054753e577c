use proptest::prelude::*;
use subcol_core::numlin::{solve_spd, Matrix, Rng};
use subcol_core::selfexpress::*;

fn kinds() -> Vec<RegKind> {
    vec![
        RegKind::Ssc,
        RegKind::Ensc { tau_en: DEFAULT_ENSC_TAU },
        RegKind::Frobenius,
        RegKind::Nuclear,
        RegKind::SchattenP { p: 1.5 },
        RegKind::SchattenP { p: 2.0 },
        RegKind::SchattenP { p: 3.0 },
    ]
}

/// `½‖W − V‖² + t·θ(W)` computed from the definition of θ.
fn prox_objective(w: &Matrix, v: &Matrix, t: f64, reg: &Regularizer) -> f64 {
    0.5 * (w - v).frobenius_norm_sq() + t * regularizer_value(w, reg).unwrap()
}

fn perturbation(rng: &mut Rng, n: usize, zero_diag: bool, scale: f64) -> Matrix {
    let mut e = rng.normal_matrix(n, n).scale(scale);
    if zero_diag {
        e.zero_diagonal();
    }
    e
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    // The prox output must beat every nearby feasible point.
    #[test]
    fn prox_is_a_local_minimizer(seed in any::<u64>(), n in 2usize..6, t in 0.01f64..2.0) {
        let mut rng = Rng::seed_from(seed);
        let v = rng.normal_matrix(n, n);
        for kind in kinds() {
            let sep = matches!(kind, RegKind::Ssc | RegKind::Ensc { .. });
            let reg = Regularizer::new(kind, 1.0).unwrap().with_zero_diag(sep).unwrap();
            let w = prox(&v, t, &reg).unwrap();
            let base = prox_objective(&w, &v, t, &reg);
            for scale in [1e-2, 1e-4] {
                for _ in 0..10 {
                    let e = perturbation(&mut rng, n, reg.zero_diag, scale);
                    let other = prox_objective(&(&w + &e), &v, t, &reg);
                    prop_assert!(base <= other + 1e-10 * (1.0 + base), "{kind:?}: {base} > {other}");
                }
            }
        }
    }

    #[test]
    fn soft_threshold_matches_scalar_minimizer(x in -5.0f64..5.0, t in 0.0f64..3.0) {
        // minimize ½(w − x)² + t|w| over a fine grid around the candidate
        let w = soft_threshold(x, t);
        let f = |u: f64| 0.5 * (u - x) * (u - x) + t * u.abs();
        for k in -50..=50 {
            let u = w + k as f64 * 1e-3;
            prop_assert!(f(w) <= f(u) + 1e-12);
        }
    }

    #[test]
    fn lp_prox_zero_region(seed in any::<u64>(), p in 1.1f64..4.0) {
        let mut rng = Rng::seed_from(seed);
        let s: Vec<f64> = (0..4).map(|_| rng.uniform(0.0, 1.0)).collect();
        let q = p / (p - 1.0);
        let dual: f64 = s.iter().map(|x| x.powf(q)).sum::<f64>().powf(1.0 / q);
        prop_assert!(prox_lp_norm(&s, dual * 1.0001, p).iter().all(|&w| w == 0.0));
        prop_assert!(prox_lp_norm(&s, dual * 0.5, p).iter().any(|&w| w > 0.0));
    }

    #[test]
    fn fista_history_never_increases(seed in any::<u64>(), d in 1usize..4, n in 3usize..9, lam in 0.01f64..1.0) {
        let z = Rng::seed_from(seed).normal_matrix(d, n);
        for kind in [RegKind::Ssc, RegKind::Nuclear, RegKind::SchattenP { p: 1.5 }] {
            let reg = Regularizer::new(kind, lam).unwrap();
            let opts = SolverOptions { max_iters: 300, ..SolverOptions::default() };
            let sol = solve_c_fixed_z(&z, &reg, &opts).unwrap();
            for w in sol.history.windows(2) {
                prop_assert!(w[1] <= w[0], "{kind:?}: {} -> {}", w[0], w[1]);
            }
        }
    }
}

/// Plain gradient descent on the smooth Frobenius problem, written
/// independently of the library solvers.
fn frobenius_by_gradient_descent(z: &Matrix, lam: f64, zero_diag: bool) -> Matrix {
    let n = z.cols();
    let g = z.tr_matmul(z);
    let mut l = 0.0;
    for i in 0..n {
        l += g[(i, i)];
    }
    let step = 1.0 / (l + lam);
    let mut c = Matrix::zeros(n, n);
    for _ in 0..200_000 {
        // ZᵀZ(C − I) + λC
        let mut grad = g.matmul(&c);
        grad -= &g;
        grad.axpy(lam, &c);
        c.axpy(-step, &grad);
        if zero_diag {
            c.zero_diagonal();
        }
        if grad.max_abs() < 1e-13 {
            break;
        }
    }
    c
}

#[test]
fn frobenius_closed_form_matches_gradient_descent() {
    let z = Rng::seed_from(5).normal_matrix(3, 6);
    let lam = 0.3;
    let reg = Regularizer::new(RegKind::Frobenius, lam).unwrap();
    let closed = solve_c_fixed_z(&z, &reg, &SolverOptions::default()).unwrap();
    assert_eq!(closed.iterations, 0);
    let gd = frobenius_by_gradient_descent(&z, lam, false);
    assert!(closed.c.matrix().max_abs_diff(&gd) < 1e-8);
}

#[test]
fn frobenius_zero_diagonal_matches_per_column_normal_equations() {
    let z = Rng::seed_from(9).normal_matrix(3, 5);
    let (n, lam) = (5, 0.2);
    let reg = Regularizer::new(RegKind::Frobenius, lam).unwrap().with_zero_diag(true).unwrap();
    let iter = solve_c_fixed_z(&z, &reg, &SolverOptions::default()).unwrap();
    assert!(iter.converged);
    // Column i solves (Z₋ᵢᵀZ₋ᵢ + λI) c = Z₋ᵢᵀ zᵢ over the other columns.
    let mut exact = Matrix::zeros(n, n);
    for i in 0..n {
        let others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        let zo = z.select_columns(&others);
        let mut a = zo.tr_matmul(&zo);
        for k in 0..n - 1 {
            a[(k, k)] += lam;
        }
        let x = solve_spd(&a, &zo.tr_matmul(&z.select_columns(&[i]))).unwrap();
        for (k, &j) in others.iter().enumerate() {
            exact[(j, i)] = x[(k, 0)];
        }
    }
    assert!(iter.c.matrix().max_abs_diff(&exact) < 1e-7);
    assert!(iter.c.matrix().max_abs_diff(&frobenius_by_gradient_descent(&z, lam, true)) < 1e-6);
}

#[test]
fn ssc_on_duplicate_pair_uses_the_copy() {
    // z₁ = z₂ in R¹: the only sensible code is C = swap with tiny shrinkage.
    let z = Matrix::from_rows(&[&[1.0, 1.0]]);
    let lam = 1e-3;
    let sol = solve_c_fixed_z(&z, &Regularizer::ssc(lam).unwrap(), &SolverOptions::default()).unwrap();
    assert!(sol.converged);
    // Each column minimizes ½(1 − c)² + λ|c|, so c = 1 − λ.
    let want = Matrix::from_rows(&[&[0.0, 1.0 - lam], &[1.0 - lam, 0.0]]);
    assert!(sol.c.matrix().max_abs_diff(&want) < 1e-9);
}

#[test]
fn zero_embedding_gives_zero_code() {
    let z = Matrix::zeros(2, 4);
    let sol = solve_c_fixed_z(&z, &Regularizer::ssc(0.1).unwrap(), &SolverOptions::default()).unwrap();
    assert_eq!(sol.c.matrix(), &Matrix::zeros(4, 4));
    assert_eq!(sol.objective.total, 0.0);
}

#[test]
fn iteration_cap_is_reported_not_raised() {
    let z = Rng::seed_from(1).normal_matrix(3, 20);
    let opts = SolverOptions { max_iters: 3, ..SolverOptions::default() };
    let sol = solve_c_fixed_z(&z, &Regularizer::ssc(1e-3).unwrap(), &opts).unwrap();
    assert!(!sol.converged);
    assert_eq!(sol.iterations, 3);
}

#[test]
fn nonzero_diagonal_is_infeasible_for_ssc() {
    let reg = Regularizer::ssc(1.0).unwrap();
    assert_eq!(regularizer_value(&Matrix::identity(2), &reg).unwrap(), f64::INFINITY);
    assert!(SelfExpression::new(Matrix::identity(2), true).is_err());
    assert!(reg.with_zero_diag(false).is_err());
}
