use proptest::prelude::*;
use subcol_core::numlin::{pinv, solve_spd, svd, sym_eig, Matrix, Rng};

fn ortho_err(q: &Matrix) -> f64 {
    q.tr_matmul(q).max_abs_diff(&Matrix::identity(q.cols()))
}

#[test]
fn svd_round_trip_over_many_shapes() {
    let mut rng = Rng::seed_from(2024);
    for case in 0..200 {
        let rows = 1 + rng.index(50);
        let cols = 1 + rng.index(50);
        let m = rng.normal_matrix(rows, cols);
        let r = svd(&m).unwrap();
        let rel = (&r.reconstruct() - &m).frobenius_norm() / m.frobenius_norm();
        assert!(rel <= 1e-10, "case {case} ({rows}x{cols}): relative error {rel:e}");
        assert!(ortho_err(&r.u) < 1e-10, "case {case}: U not orthonormal");
        assert!(ortho_err(&r.vt.transpose()) < 1e-10, "case {case}: V not orthonormal");
        assert!(r.s.windows(2).all(|w| w[0] >= w[1]) && r.s.iter().all(|&s| s >= 0.0));
    }
}

#[test]
fn svd_of_seeded_5x4() {
    let m = Rng::seed_from(7).normal_matrix(5, 4);
    let r = svd(&m).unwrap();
    assert!((&r.reconstruct() - &m).frobenius_norm() / m.frobenius_norm() <= 1e-10);
}

#[test]
fn rank_deficient_svd_has_zero_tail() {
    let mut rng = Rng::seed_from(3);
    let a = rng.normal_matrix(6, 2);
    let b = rng.normal_matrix(2, 5);
    let r = svd(&a.matmul(&b)).unwrap();
    assert!(r.s[2..].iter().all(|&s| s < 1e-12 * r.s[0]));
}

#[test]
fn pinv_satisfies_penrose_identity() {
    let mut rng = Rng::seed_from(11);
    let m = rng.normal_matrix(4, 7);
    let p = pinv(&m, 1e-12).unwrap();
    assert!(m.matmul(&p).matmul(&m).max_abs_diff(&m) < 1e-10);
    assert!(p.matmul(&m).matmul(&p).max_abs_diff(&p) < 1e-10);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sym_eig_diagonalizes(seed in any::<u64>(), n in 1usize..12) {
        let g = Rng::seed_from(seed).normal_matrix(n, n);
        let a = &g + &g.transpose();
        let e = sym_eig(&a).unwrap();
        prop_assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(ortho_err(&e.vectors) < 1e-10);
        // A V = V Λ
        let av = a.matmul(&e.vectors);
        let vl = e.vectors.matmul(&Matrix::diag(&e.values));
        prop_assert!(av.max_abs_diff(&vl) < 1e-9 * (1.0 + a.max_abs()));
    }

    #[test]
    fn spd_solve_recovers_rhs(seed in any::<u64>(), n in 1usize..10, k in 1usize..4) {
        let mut rng = Rng::seed_from(seed);
        let g = rng.normal_matrix(n, n);
        let mut a = g.tr_matmul(&g);
        for i in 0..n {
            a[(i, i)] += 1.0;
        }
        let b = rng.normal_matrix(n, k);
        let x = solve_spd(&a, &b).unwrap();
        prop_assert!(a.matmul(&x).max_abs_diff(&b) < 1e-9 * (1.0 + b.max_abs()));
    }

    #[test]
    fn singular_values_are_invariant_under_transpose(seed in any::<u64>(), r in 1usize..9, c in 1usize..9) {
        let m = Rng::seed_from(seed).normal_matrix(r, c);
        let s1 = svd(&m).unwrap().s;
        let s2 = svd(&m.transpose()).unwrap().s;
        for (a, b) in s1.iter().zip(&s2) {
            prop_assert!((a - b).abs() < 1e-10 * (1.0 + s1[0]));
        }
    }
}
