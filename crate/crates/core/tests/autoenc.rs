use proptest::prelude::*;
use subcol_core::autoenc::*;
use subcol_core::numlin::{Matrix, Rng};
use subcol_core::selfexpress::{evaluate_f, Regularizer, SelfExpression};

fn random_setup(seed: u64) -> (Matrix, AutoencoderParams, SelfExpression) {
    let mut rng = Rng::seed_from(seed);
    let x = rng.normal_matrix(4, 20);
    let p = AutoencoderParams::random(4, 16, 3, 16, &mut rng);
    let mut c = rng.normal_matrix(20, 20).scale(0.1);
    c.zero_diagonal();
    (x, p, SelfExpression::new(c, true).unwrap())
}

fn reconstruction(x: &Matrix, p: &AutoencoderParams, c: &SelfExpression) -> Matrix {
    decode(&encode(x, p).unwrap().matmul(c.matrix()), p).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn attack_scales_embedding_and_keeps_reconstruction(seed in any::<u64>(), alpha in 0.01f64..10.0) {
        let (x, p, c) = random_setup(seed);
        let q = scaling_attack(&p, alpha).unwrap();
        let z = encode(&x, &p).unwrap();
        let zq = encode(&x, &q).unwrap();
        prop_assert!(zq.max_abs_diff(&z.scale(alpha)) <= 1e-12 * (1.0 + z.max_abs() * alpha));
        let r = reconstruction(&x, &p, &c);
        let rq = reconstruction(&x, &q, &c);
        prop_assert!(r.max_abs_diff(&rq) <= 1e-12 * (1.0 + r.max_abs()));
    }

    #[test]
    fn joint_attack_shrinks_both_terms(seed in any::<u64>(), alpha in 0.05f64..0.9, mu in 0.05f64..0.9) {
        let (x, p, c) = random_setup(seed);
        let reg = Regularizer::ssc(0.1).unwrap();
        let (q, cq) = scaling_attack_joint(&p, Some(&c), alpha, mu).unwrap();
        let cq = cq.unwrap();
        prop_assert!(cq.matrix().diagonal().iter().all(|&d| d == 0.0));
        let before = evaluate_f(&encode(&x, &p).unwrap(), &c, &reg).unwrap();
        let after = evaluate_f(&encode(&x, &q).unwrap(), &cq, &reg).unwrap();
        prop_assert!(after.penalty <= mu * before.penalty * (1.0 + 1e-12));
        let r = reconstruction(&x, &p, &c);
        prop_assert!(r.max_abs_diff(&reconstruction(&x, &q, &cq)) <= 1e-11 * (1.0 + r.max_abs()));
    }
}

#[test]
fn repeated_attack_drives_f_term_to_zero() {
    let (x, mut p, c) = random_setup(7);
    let reg = Regularizer::ssc(0.1).unwrap();
    let f0 = evaluate_f(&encode(&x, &p).unwrap(), &c, &reg).unwrap().residual;
    let r0 = reconstruction(&x, &p, &c);
    for k in 1..=6 {
        p = scaling_attack(&p, 0.1).unwrap();
        let z = encode(&x, &p).unwrap();
        let f = evaluate_f(&z, &c, &reg).unwrap().residual;
        // the residual is quadratic in Z
        let want = f0 * 0.01f64.powi(k);
        assert!((f - want).abs() <= 1e-9 * want, "step {k}: {f} vs {want}");
        assert!(reconstruction(&x, &p, &c).max_abs_diff(&r0) <= 1e-9 * (1.0 + r0.max_abs()));
    }
    assert!(evaluate_f(&encode(&x, &p).unwrap(), &c, &reg).unwrap().residual < 1e-10 * f0);
}

#[test]
fn attack_rejects_nonpositive_factors() {
    let (_, p, _) = random_setup(1);
    assert!(scaling_attack(&p, 0.0).is_err());
    assert!(scaling_attack(&p, -1.0).is_err());
    assert!(scaling_attack_joint(&p, None, 1.0, f64::NAN).is_err());
}

#[test]
fn identity_construction_collapses_small_example() {
    let x = Matrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]);
    let p = identity_construction(&x, 1.0, 1e-4, 2, BetaPolicy::NormTarget).unwrap();
    let z = encode(&x, &p).unwrap();
    let gap: f64 = (0..2).map(|i| (z[(i, 0)] - z[(i, 1)]).powi(2)).sum::<f64>().sqrt();
    assert!(gap <= 1e-2, "gap {gap}");
    for n in z.column_norms() {
        assert!((n - 1.0).abs() <= 1e-2, "norm {n}");
    }
    assert!(decode(&z, &p).unwrap().max_abs_diff(&x) <= 1e-8);
}

#[test]
fn identity_construction_handles_negative_data_and_padding() {
    let x = Rng::seed_from(3).normal_matrix(3, 10);
    for alpha in [1.0, 1e-2, 1e-5] {
        let p = identity_construction(&x, 2.0, alpha, 5, BetaPolicy::NormTarget).unwrap();
        let z = encode(&x, &p).unwrap();
        assert!(decode(&z, &p).unwrap().max_abs_diff(&x) <= 1e-6 / alpha.sqrt().max(1e-3));
    }
    assert!(identity_construction(&x, 1.0, 0.1, 2, BetaPolicy::NormTarget).is_err());
    assert!(identity_construction(&x, 1.0, 0.1, 3, BetaPolicy::Fixed(-1.0)).is_err());
}

#[test]
fn parameter_tensors_round_trip() {
    let (_, p, _) = random_setup(4);
    let tensors = p.tensors().into_iter().map(|(n, m)| (n.to_string(), m)).collect();
    assert_eq!(AutoencoderParams::from_tensors(tensors).unwrap(), p);
    let mut q = p.zeros_like();
    q.assign_flat(&p.flatten());
    assert_eq!(q, p);
    assert_eq!(p.flatten().len(), p.num_params());
}
