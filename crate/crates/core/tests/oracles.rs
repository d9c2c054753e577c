use proptest::prelude::*;
use subcol_core::numlin::{Matrix, Rng};
use subcol_core::oracles::*;
use subcol_core::selfexpress::{evaluate_f, RegKind, Regularizer, SelfExpression};

fn signed_perm_apply(z: &Matrix, c: &SelfExpression, sp: &SignedPermutation) -> (Matrix, SelfExpression) {
    let p = sp.matrix();
    let zp = z.matmul(&p);
    let cp = SelfExpression::projected(p.tr_matmul(c.matrix()).matmul(&p), c.zero_diag());
    (zp, cp)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    // Relabeling points and flipping their signs leaves every metric unchanged.
    #[test]
    fn metrics_invariant_under_signed_permutation(seed in any::<u64>(), d in 1usize..4, n in 2usize..12) {
        let mut rng = Rng::seed_from(seed);
        let z = rng.normal_matrix(d, n);
        let mut cm = rng.normal_matrix(n, n);
        cm.zero_diagonal();
        let c = SelfExpression::new(cm, true).unwrap();
        let sp = SignedPermutation::random(n, &mut rng);
        let (zp, cp) = signed_perm_apply(&z, &c, &sp);
        // Z P C' = Z C P for C' = PᵀCP, so the residual is preserved too.
        prop_assert!(zp.matmul(cp.matrix()).max_abs_diff(&z.matmul(c.matrix()).matmul(&sp.matrix())) < 1e-12);
        let a = degeneracy_metrics(&z, &c).unwrap();
        let b = degeneracy_metrics(&zp, &cp).unwrap();
        prop_assert!((a.norm_concentration - b.norm_concentration).abs() < 1e-12);
        prop_assert!((a.top1_sv_ratio - b.top1_sv_ratio).abs() < 1e-10);
        prop_assert!((a.min_pair_gap - b.min_pair_gap).abs() < 1e-12);
        prop_assert!((a.c_top2_mass - b.c_top2_mass).abs() < 1e-12);
    }

    // No feasible Z does better than the σ_min construction for a fixed C.
    #[test]
    fn sigma_min_embedding_beats_random_feasible(seed in any::<u64>(), n in 2usize..6) {
        let mut rng = Rng::seed_from(seed);
        let d = 2;
        let tau = 1.3;
        let c = SelfExpression::projected(rng.normal_matrix(n, n).scale(0.5), false);
        let reg = Regularizer::new(RegKind::Frobenius, 0.1).unwrap();
        let best = sigma_min_objective(&c, tau, &reg).unwrap();
        for _ in 0..50 {
            let mut z = rng.normal_matrix(d, n);
            let s = (tau / z.frobenius_norm_sq()).sqrt();
            z.scale_in_place(s);
            let f = evaluate_f(&z, &c, &reg).unwrap().total;
            prop_assert!(best <= f + 1e-10, "σ_min bound {best} beaten by {f}");
        }
    }

    #[test]
    fn two_point_canonical_is_optimal_and_detected(seed in any::<u64>(), n in 3usize..12, d in 1usize..4) {
        let s = thm2_canonical(n, d, 1.0, Problem::P1, seed).unwrap();
        prop_assert_eq!(s.z_star.matmul(s.c_star.matrix()), s.z_star.clone());
        let r = two_point_collapse_check(&s.z_star, 0.05, 0.999).unwrap();
        prop_assert!(r.passes);
        let m = degeneracy_metrics(&s.z_star, &s.c_star).unwrap();
        prop_assert_eq!(m.norm_concentration, 1.0);
        prop_assert_eq!(m.c_top2_mass, 1.0);
    }
}

#[test]
fn thm1_construction_attains_the_bound() {
    let mut rng = Rng::seed_from(21);
    let n = 5;
    let c = SelfExpression::projected(rng.normal_matrix(n, n).scale(0.4), false);
    let reg = Regularizer::new(RegKind::Nuclear, 0.2).unwrap();
    let tau = 2.0;
    let b = Matrix::from_rows(&[&[1.0], &[1.0]]);
    let z = thm1_optimal_z(&c, tau, Problem::P1, &b).unwrap();
    let f = evaluate_f(&z, &c, &reg).unwrap().total;
    assert!((f - sigma_min_objective(&c, tau, &reg).unwrap()).abs() < 1e-10);
}

#[test]
fn brute_force_small_cases_never_beat_two() {
    for (n, d) in [(3, 1), (3, 2)] {
        let r = thm2_brute_force(n, d, 1.0, 400, 5).unwrap();
        assert!(r.best >= 2.0 - 1e-6, "({n},{d}) found {}", r.best);
        assert!(r.candidates >= 400);
    }
}

#[test]
fn rank_one_random_search_small() {
    for p in [1.0, 2.0] {
        let s = thm3_canonical(3, 2, 1.0, p, 1).unwrap();
        assert!((s.objective - 1.0).abs() < 1e-10);
        let r = thm3_random_search(3, 2, p, 2000, 2).unwrap();
        assert!(r.best >= 1.0 - 1e-6, "p={p}: {}", r.best);
    }
}

#[test]
fn lemma1_no_duplicate_exceeds_one() {
    let mut rng = Rng::seed_from(8);
    let mut zs = rng.normal_matrix(3, 6);
    for j in 0..6 {
        let col = zs.column(j);
        let nrm = subcol_core::numlin::norm2(&col);
        zs.set_column(j, &col.iter().map(|v| v / nrm).collect::<Vec<_>>());
    }
    let target = zs.select_columns(&[0]);
    let rest = zs.select_columns(&[1, 2, 3, 4, 5]);
    let v = lemma1_min_l1(&rest, &target).unwrap();
    assert!(v > 1.0 + 1e-4, "{v}");
}

#[test]
fn pairing_check_on_signed_copies() {
    let h = 0.5f64.sqrt();
    let z = Matrix::from_rows(&[&[h, -h, 1.0, 1.0], &[h, -h, 0.0, 0.0]]);
    let mut c = Matrix::zeros(4, 4);
    c[(1, 0)] = -1.0;
    c[(0, 1)] = -1.0;
    c[(3, 2)] = 1.0;
    c[(2, 3)] = 1.0;
    let r = thm4_check(&z, &SelfExpression::new(c, true).unwrap(), 1.0, 1e-9).unwrap();
    assert!(r.is_degenerate);
    assert_eq!(r.fraction_paired(1e-9), 1.0);
    assert_eq!(r.fraction_l1_in(0.8, 1.2), 1.0);
}
