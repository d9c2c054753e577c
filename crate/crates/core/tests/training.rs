use subcol_core::autoenc::{scaling_attack, AutoencoderParams, LossWeights};
use subcol_core::numlin::Matrix;
use subcol_core::sedsc::*;
use subcol_core::selfexpress::{RegKind, Regularizer, SelfExpression, SolverOptions};
use subcol_core::synthdata::gen_two_parabolas;

fn config(norm: NormalizationScheme, lr: f64, pre: usize, joint: usize) -> TrainConfig {
    TrainConfig {
        gamma: 2.0,
        reg: Regularizer::ssc(1e-4).unwrap(),
        norm,
        hidden: 100,
        embed_dim: 2,
        pretrain_iters: pre,
        joint_iters: joint,
        lr,
        seed: 1,
        c_solver: SolverOptions::default(),
    }
}

fn parabolas() -> Matrix {
    gen_two_parabolas(50, 0.0, 1).unwrap().x
}

#[test]
fn pretraining_reduces_reconstruction() {
    // 2-100-2 net on the noiseless parabolas. The losses are summed over
    // points, so the step has to be smaller than with averaged losses.
    let cfg = config(NormalizationScheme::None, 1e-4, 2000, 1);
    let r = pretrain(&parabolas(), &cfg).unwrap();
    assert_eq!(r.status, RunStatus::Completed);
    assert_eq!(r.trace.len(), 2000);
    let first = r.trace.rows[0].recon_loss;
    let last = r.trace.last().unwrap().recon_loss;
    assert!(last < 0.1 * first, "{first} -> {last}");
}

#[test]
fn same_seed_gives_identical_traces() {
    let x = parabolas();
    let cfg = config(NormalizationScheme::Dataset { tau: 1.0 }, 1e-3, 50, 50);
    let a = run_pipeline(&x, &cfg).unwrap();
    let b = run_pipeline(&x, &cfg).unwrap();
    assert_eq!(a.pretrain_trace.to_csv(), b.pretrain_trace.to_csv());
    assert_eq!(a.joint.trace.to_csv(), b.joint.trace.to_csv());
    assert_eq!(a.joint.params, b.joint.params);
    let other = run_pipeline(&x, &TrainConfig { seed: 2, ..cfg }).unwrap();
    assert_ne!(a.joint.trace.to_csv(), other.joint.trace.to_csv());
}

#[test]
fn exact_identity_net_keeps_zero_reconstruction() {
    let x = Matrix::from_rows(&[&[1.0, 2.0, 0.5, 3.0], &[0.2, 1.0, 4.0, 2.0]]);
    let p = identity_net();
    let mut cfg = config(NormalizationScheme::None, 1e-3, 200, 1);
    cfg.hidden = 2;
    let r = pretrain_from(&x, p, &cfg).unwrap();
    assert!(r.trace.rows.iter().all(|row| row.recon_loss <= 1e-12));
}

fn identity_net() -> AutoencoderParams {
    let id = Matrix::identity(2);
    AutoencoderParams::new(
        id.clone(),
        vec![0.0; 2],
        id.clone(),
        vec![0.0; 2],
        id.clone(),
        vec![0.0; 2],
        id,
        vec![0.0; 2],
    )
    .unwrap()
}

#[test]
fn zero_gamma_at_exact_reconstruction_freezes_c() {
    // With γ = 0 the prox is the identity and C only sees the reconstruction
    // gradient, which vanishes here, so the penalty can never grow.
    let x = Matrix::from_rows(&[&[1.0, 2.0, 0.5, 3.0], &[0.2, 1.0, 4.0, 2.0]]);
    let mut cfg = config(NormalizationScheme::None, 1e-3, 1, 100);
    cfg.gamma = 0.0;
    cfg.hidden = 2;
    cfg.reg = Regularizer::new(RegKind::Nuclear, 1e-4).unwrap().with_zero_diag(false).unwrap();
    let r = train_joint(&x, identity_net(), SelfExpression::identity(4), &cfg).unwrap();
    for w in r.trace.rows.windows(2) {
        assert!(w[1].f_penalty <= w[0].f_penalty);
    }
    assert_eq!(r.c.matrix(), &Matrix::identity(4));
}

#[test]
fn zero_gamma_skips_the_shrinkage() {
    // Away from exact reconstruction C still moves with the decoder, so its
    // ℓ1 mass is free to change; only the λθ shrinkage is switched off.
    let x = parabolas();
    let mut cfg = config(NormalizationScheme::Dataset { tau: 1.0 }, 1e-3, 100, 20);
    cfg.gamma = 0.0;
    let pre = pretrain(&x, &cfg).unwrap();
    let c0 = SelfExpression::projected(Matrix::from_fn(100, 100, |i, j| 0.01 * ((i + 2 * j) % 7) as f64), true);
    let with = train_joint(&x, pre.params.clone(), c0.clone(), &TrainConfig { gamma: 2.0, ..cfg.clone() }).unwrap();
    let without = train_joint(&x, pre.params, c0, &cfg).unwrap();
    assert!(without.trace.rows.iter().all(|r| r.f_residual.is_finite()));
    assert!(without.c.matrix().l1_norm() > with.c.matrix().l1_norm());
}

#[test]
fn scaling_attack_lowers_objective_along_unnormalized_run() {
    let x = parabolas();
    let mut cfg = config(NormalizationScheme::None, 1e-4, 200, 50);
    let pre = pretrain(&x, &cfg).unwrap();
    let z = embed(&x, &pre.params, &cfg.norm).unwrap();
    let c0 = init_c(&z, &cfg.reg, &cfg.c_solver).unwrap().c;
    let (mut p, mut c) = (pre.params, c0);
    let weights = LossWeights { gamma: cfg.gamma, gamma2: 0.0, tau: 1.0, grad_c: false };
    for _ in 0..10 {
        let here = evaluate(&x, &p, &c, &weights, &cfg.norm, Some(&cfg.reg)).unwrap().total;
        let q = scaling_attack(&p, 0.9).unwrap();
        let attacked = evaluate(&x, &q, &c, &weights, &cfg.norm, Some(&cfg.reg)).unwrap().total;
        assert!(attacked < here, "{attacked} !< {here}");
        let r = train_joint(&x, p, c, &cfg).unwrap();
        (p, c) = (r.params, r.c);
        cfg.seed += 1;
    }
}

#[test]
fn normalization_constraints_hold_every_iteration() {
    let x = parabolas();
    let tau = 1.7;
    let r = run_pipeline(&x, &config(NormalizationScheme::Dataset { tau }, 1e-3, 50, 200)).unwrap();
    for row in r.pretrain_trace.rows.iter().chain(&r.joint.trace.rows) {
        assert!((row.z_frobenius_norm.powi(2) - tau).abs() < 1e-10);
    }

    let cfg = config(NormalizationScheme::Channel { tau: 2.0 }, 1e-3, 50, 50);
    let r = run_pipeline(&x, &cfg).unwrap();
    let z = embed(&x, &r.joint.params, &cfg.norm).unwrap();
    for n in z.row_norms() {
        assert!((n * n - 1.0).abs() < 1e-10, "{n}");
    }
}

#[test]
fn small_steps_descend() {
    let x = parabolas();
    let cfg = config(NormalizationScheme::Dataset { tau: 1.0 }, 1e-5, 300, 300);
    let r = run_pipeline(&x, &cfg).unwrap();
    for w in r.pretrain_trace.rows.windows(2) {
        assert!(w[1].objective <= w[0].objective + 1e-9, "pretrain step {}", w[1].iteration);
    }
    // proximal gradient with a step below 1/L decreases the full objective
    for w in r.joint.trace.rows.windows(2) {
        assert!(w[1].objective <= w[0].objective + 1e-9, "joint step {}", w[1].iteration);
    }
}

#[test]
fn huge_step_reports_divergence_with_partial_trace() {
    let x = parabolas();
    let r = pretrain(&x, &config(NormalizationScheme::None, 10.0, 500, 1)).unwrap();
    let RunStatus::Diverged { iteration } = r.status else { panic!("expected divergence, got {:?}", r.status) };
    assert!(iteration < 500);
    assert_eq!(r.trace.len(), iteration);
    assert!(r.trace.rows.iter().all(|row| row.objective <= DIVERGENCE_THRESHOLD));
}

#[test]
fn joint_rejects_mismatched_c() {
    let x = parabolas();
    let cfg = config(NormalizationScheme::None, 1e-3, 1, 1);
    let p = init_params(2, &cfg);
    assert!(train_joint(&x, p, SelfExpression::identity(3), &cfg).is_err());
    assert!(pretrain(&x, &TrainConfig { lr: 0.0, ..cfg }).is_err());
}

#[test]
fn trace_csv_has_one_line_per_row() {
    let x = parabolas();
    let r = pretrain(&x, &config(NormalizationScheme::None, 1e-4, 7, 1)).unwrap();
    let csv = r.trace.to_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 8);
    assert!(lines[0].starts_with("iteration,recon_loss"));
    let cols = lines[0].split(',').count();
    assert!(lines.iter().all(|l| l.split(',').count() == cols));
}
