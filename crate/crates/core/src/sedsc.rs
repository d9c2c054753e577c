//! Joint training of the autoencoder and the self-expression matrix:
//!
//! ```text
//! min ‖X − Φ_D(ZC)‖²_F + γ (½‖ZC − Z‖²_F + λθ(C)) [+ γ₂ Σᵢ (‖Zᵢ‖² − τ)²],   Z = N(Φ_E(X))
//! ```
//!
//! where `N` is an optional normalization layer. Training runs a reconstruction
//! pretraining phase, initializes `C` by solving the fixed-`Z` problem, then
//! alternates a gradient step on every smooth term with a prox step on `λθ(C)`.

use std::fmt::Write as _;

use crate::autoenc::{encoder_backward, encoder_pass, head_backward, AutoencoderParams, Gradients, LossTerms, LossWeights};
use crate::error::{Error, Result};
use crate::numlin::{Matrix, Rng};
use crate::oracles::{degeneracy_metrics, DegeneracyMetrics};
use crate::selfexpress::{prox, regularizer_value, solve_c_fixed_z, CSolution, Regularizer, SelfExpression, SolverOptions};

/// Loss above which a run is declared divergent.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NormalizationScheme {
    None,
    /// Rescale the whole embedding to `‖Z‖²_F = τ`.
    Dataset { tau: f64 },
    /// Rescale each embedding row to `‖Zⁱ‖² = τ/d`.
    Channel { tau: f64 },
    /// Penalize `γ₂ Σᵢ (‖Zᵢ‖² − τ)²`.
    InstancePenalty { tau: f64, gamma2: f64 },
}

impl NormalizationScheme {
    pub fn validate(&self) -> Result<()> {
        let bad_tau = |tau: f64| !(tau > 0.0) || !tau.is_finite();
        match *self {
            NormalizationScheme::None => Ok(()),
            NormalizationScheme::Dataset { tau } | NormalizationScheme::Channel { tau } if bad_tau(tau) => {
                Err(Error::InvalidArgument(format!("normalization tau must be positive, got {tau}")))
            }
            NormalizationScheme::InstancePenalty { tau, .. } if bad_tau(tau) => {
                Err(Error::InvalidArgument(format!("normalization tau must be positive, got {tau}")))
            }
            NormalizationScheme::InstancePenalty { gamma2, .. } if !(gamma2 >= 0.0) => {
                Err(Error::InvalidArgument(format!("gamma2 must be >= 0, got {gamma2}")))
            }
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            NormalizationScheme::None => "none",
            NormalizationScheme::Dataset { .. } => "dataset",
            NormalizationScheme::Channel { .. } => "channel",
            NormalizationScheme::InstancePenalty { .. } => "instance",
        }
    }

    fn instance_weights(&self) -> (f64, f64) {
        match *self {
            NormalizationScheme::InstancePenalty { tau, gamma2 } => (gamma2, tau),
            _ => (0.0, 1.0),
        }
    }
}

/// Output of the normalization layer.
#[derive(Debug, Clone)]
pub struct Normalized {
    pub z: Matrix,
    /// Rows left at zero because they had no norm to rescale (Channel only).
    pub zero_rows: usize,
}

pub fn normalize(y: &Matrix, scheme: &NormalizationScheme) -> Normalized {
    match *scheme {
        NormalizationScheme::Dataset { tau } => {
            let n = y.frobenius_norm();
            let z = if n > 0.0 { y.scale(tau.sqrt() / n) } else { y.clone() };
            Normalized { z, zero_rows: usize::from(n == 0.0) * y.rows() }
        }
        NormalizationScheme::Channel { tau } => {
            let target = (tau / y.rows() as f64).sqrt();
            let mut z = y.clone();
            let mut zero_rows = 0;
            for (i, n) in y.row_norms().into_iter().enumerate() {
                if n > 0.0 {
                    z.row_mut(i).iter_mut().for_each(|v| *v *= target / n);
                } else {
                    zero_rows += 1;
                }
            }
            Normalized { z, zero_rows }
        }
        NormalizationScheme::None | NormalizationScheme::InstancePenalty { .. } => {
            Normalized { z: y.clone(), zero_rows: 0 }
        }
    }
}

/// Jacobian-transpose of `v ↦ s·v/‖v‖` applied to `g`: `(s/‖v‖)(g − u⟨u, g⟩)`, `u = v/‖v‖`.
fn rescale_backward(v: &[f64], g: &[f64], s: f64, out: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n == 0.0 {
        out.iter_mut().for_each(|o| *o = 0.0);
        return;
    }
    let proj = v.iter().zip(g).map(|(a, b)| a * b).sum::<f64>() / (n * n);
    for ((o, &vi), &gi) in out.iter_mut().zip(v).zip(g) {
        *o = (s / n) * (gi - vi * proj);
    }
}

pub fn normalize_backward(y: &Matrix, d_z: &Matrix, scheme: &NormalizationScheme) -> Matrix {
    match *scheme {
        NormalizationScheme::Dataset { tau } => {
            let mut out = Matrix::zeros(y.rows(), y.cols());
            rescale_backward(y.as_slice(), d_z.as_slice(), tau.sqrt(), out.as_mut_slice());
            out
        }
        NormalizationScheme::Channel { tau } => {
            let s = (tau / y.rows() as f64).sqrt();
            let mut out = Matrix::zeros(y.rows(), y.cols());
            for i in 0..y.rows() {
                rescale_backward(y.row(i), d_z.row(i), s, out.row_mut(i));
            }
            out
        }
        NormalizationScheme::None | NormalizationScheme::InstancePenalty { .. } => d_z.clone(),
    }
}

/// Embedding `Z = N(Φ_E(X))`.
pub fn embed(x: &Matrix, p: &AutoencoderParams, scheme: &NormalizationScheme) -> Result<Matrix> {
    Ok(normalize(&encoder_pass(x, p)?.out, scheme).z)
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    /// Weight `γ` of the self-expressive term.
    pub gamma: f64,
    pub reg: Regularizer,
    pub norm: NormalizationScheme,
    pub hidden: usize,
    pub embed_dim: usize,
    pub pretrain_iters: usize,
    pub joint_iters: usize,
    pub lr: f64,
    pub seed: u64,
    /// Solver settings for the initial `C`.
    pub c_solver: SolverOptions,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.norm.validate()?;
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::InvalidArgument(format!("lr must be positive, got {}", self.lr)));
        }
        if !(self.gamma >= 0.0) {
            return Err(Error::InvalidArgument(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        if self.pretrain_iters == 0 || self.joint_iters == 0 {
            return Err(Error::InvalidArgument("iteration counts must be at least 1".into()));
        }
        if self.hidden == 0 || self.embed_dim == 0 {
            return Err(Error::InvalidArgument("network widths must be positive".into()));
        }
        Ok(())
    }

    fn loss_weights(&self, gamma: f64, grad_c: bool) -> LossWeights {
        let (gamma2, tau) = self.norm.instance_weights();
        LossWeights { gamma, gamma2, tau, grad_c }
    }
}

/// Full objective at one point, with gradients of its smooth part.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub terms: LossTerms,
    /// `λθ(C)`, zero when no regularizer is given.
    pub penalty: f64,
    /// Recon + γ·F-residual + γ₂·instance.
    pub smooth: f64,
    /// `smooth + γ·penalty`
    pub total: f64,
    pub z: Matrix,
    pub x_hat: Matrix,
    pub zero_rows: usize,
    pub grads: Gradients,
}

pub fn evaluate(
    x: &Matrix,
    p: &AutoencoderParams,
    c: &SelfExpression,
    weights: &LossWeights,
    scheme: &NormalizationScheme,
    reg: Option<&Regularizer>,
) -> Result<Evaluation> {
    let pass = encoder_pass(x, p)?;
    let normed = normalize(&pass.out, scheme);
    let head = head_backward(x, &normed.z, c.matrix(), p, weights)?;
    let d_y = normalize_backward(&pass.out, &head.d_z, scheme);
    let enc = encoder_backward(x, p, &pass, &d_y);
    let terms = head.terms;
    let x_hat = head.x_hat.clone();
    let grads = Gradients::assemble(enc, head);
    let penalty = match reg {
        Some(r) => r.lambda * regularizer_value(c.matrix(), r)?,
        None => 0.0,
    };
    let smooth = terms.smooth(weights);
    Ok(Evaluation {
        terms,
        penalty,
        smooth,
        total: smooth + weights.gamma * penalty,
        z: normed.z,
        x_hat,
        zero_rows: normed.zero_rows,
        grads,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub recon_loss: f64,
    /// `½‖ZC − Z‖²_F`
    pub f_residual: f64,
    /// `λθ(C)`
    pub f_penalty: f64,
    pub objective: f64,
    pub z_frobenius_norm: f64,
    /// Norm of the smooth-part gradient over all parameters and `C`.
    pub grad_norm: f64,
    pub metrics: DegeneracyMetrics,
    /// Set when a channel renormalization met an all-zero row.
    pub flagged: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainTrace {
    pub rows: Vec<TraceRow>,
}

const TRACE_HEADER: &str = "iteration,recon_loss,f_residual,f_penalty,objective,z_frobenius_norm,grad_norm,\
norm_concentration,top1_sv_ratio,min_pair_gap,c_top2_mass,flagged";

impl TrainTrace {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::with_capacity(64 * (self.rows.len() + 1));
        s.push_str(TRACE_HEADER);
        s.push('\n');
        for r in &self.rows {
            let m = &r.metrics;
            let _ = writeln!(
                s,
                "{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{}",
                r.iteration,
                r.recon_loss,
                r.f_residual,
                r.f_penalty,
                r.objective,
                r.z_frobenius_norm,
                r.grad_norm,
                m.norm_concentration,
                m.top1_sv_ratio,
                m.min_pair_gap,
                m.c_top2_mass,
                u8::from(r.flagged)
            );
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RunStatus {
    Completed,
    /// Loss exceeded [`DIVERGENCE_THRESHOLD`] or became non-finite at this iteration.
    Diverged { iteration: usize },
}

#[derive(Debug, Clone)]
pub struct PretrainResult {
    pub params: AutoencoderParams,
    pub trace: TrainTrace,
    pub status: RunStatus,
}

#[derive(Debug, Clone)]
pub struct JointResult {
    pub params: AutoencoderParams,
    pub c: SelfExpression,
    pub trace: TrainTrace,
    pub status: RunStatus,
}

fn is_divergent(e: &Evaluation) -> bool {
    !e.total.is_finite() || e.total > DIVERGENCE_THRESHOLD || !e.grads.norm().is_finite()
}

fn trace_row(iteration: usize, e: &Evaluation, c: &SelfExpression) -> Result<TraceRow> {
    let metrics = degeneracy_metrics(&e.z, c).unwrap_or(DegeneracyMetrics::UNDEFINED);
    Ok(TraceRow {
        iteration,
        recon_loss: e.terms.recon,
        f_residual: e.terms.f_residual,
        f_penalty: e.penalty,
        objective: e.total,
        z_frobenius_norm: e.z.frobenius_norm(),
        grad_norm: e.grads.norm(),
        metrics,
        flagged: e.zero_rows > 0,
    })
}

/// Fresh network for the config's architecture, seeded by `cfg.seed`.
pub fn init_params(dx: usize, cfg: &TrainConfig) -> AutoencoderParams {
    let mut rng = Rng::seed_from(cfg.seed);
    AutoencoderParams::random(dx, cfg.hidden, cfg.embed_dim, cfg.hidden, &mut rng)
}

/// Reconstruction-only gradient descent from a seeded initialization, with
/// `γ = 0` and `C = I`. The normalization layer (or instance penalty) stays on.
pub fn pretrain(x: &Matrix, cfg: &TrainConfig) -> Result<PretrainResult> {
    cfg.validate()?;
    pretrain_from(x, init_params(x.rows(), cfg), cfg)
}

/// [`pretrain`] starting from given parameters.
pub fn pretrain_from(x: &Matrix, mut params: AutoencoderParams, cfg: &TrainConfig) -> Result<PretrainResult> {
    cfg.validate()?;
    if !x.is_finite() {
        return Err(Error::NumericalFailure("input data has non-finite entries".into()));
    }
    let c = SelfExpression::identity(x.cols());
    let weights = cfg.loss_weights(0.0, false);
    let mut trace = TrainTrace::default();
    for it in 0..cfg.pretrain_iters {
        let e = evaluate(x, &params, &c, &weights, &cfg.norm, None)?;
        if is_divergent(&e) {
            log::warn!("pretraining diverged at iteration {it}");
            return Ok(PretrainResult { params, trace, status: RunStatus::Diverged { iteration: it } });
        }
        trace.rows.push(trace_row(it, &e, &c)?);
        params.axpy(-cfg.lr, &e.grads.params);
    }
    Ok(PretrainResult { params, trace, status: RunStatus::Completed })
}

/// Initial `C`: the fixed-`Z` self-expressive solution on the pretrained embedding.
pub fn init_c(z: &Matrix, reg: &Regularizer, opts: &SolverOptions) -> Result<CSolution> {
    let sol = solve_c_fixed_z(z, reg, opts)?;
    if !sol.converged {
        log::warn!("C initialization stopped after {} iterations without converging", sol.iterations);
    }
    Ok(sol)
}

/// Proximal gradient descent on the joint objective. Each iteration takes a
/// gradient step of size `lr` on every smooth term (network weights and `C`)
/// and then applies the prox of `lr·γ·λθ` to `C`.
pub fn train_joint(
    x: &Matrix,
    p0: AutoencoderParams,
    c0: SelfExpression,
    cfg: &TrainConfig,
) -> Result<JointResult> {
    cfg.validate()?;
    if c0.n() != x.cols() {
        return Err(Error::dims("train_joint", format!("C of size {}", x.cols()), c0.n().to_string()));
    }
    let mut params = p0;
    let mut c = c0;
    let zero_diag = cfg.reg.zero_diag;
    let weights = cfg.loss_weights(cfg.gamma, true);
    let mut trace = TrainTrace::default();
    for it in 0..cfg.joint_iters {
        let e = evaluate(x, &params, &c, &weights, &cfg.norm, Some(&cfg.reg))?;
        if is_divergent(&e) {
            log::warn!("joint training diverged at iteration {it}");
            return Ok(JointResult { params, c, trace, status: RunStatus::Diverged { iteration: it } });
        }
        trace.rows.push(trace_row(it, &e, &c)?);
        params.axpy(-cfg.lr, &e.grads.params);
        let d_c = e.grads.c.as_ref().expect("C gradient requested");
        let mut stepped = c.matrix().clone();
        stepped.axpy(-cfg.lr, d_c);
        c = if cfg.gamma > 0.0 {
            SelfExpression::projected(prox(&stepped, cfg.lr * cfg.gamma, &cfg.reg)?, zero_diag)
        } else {
            SelfExpression::projected(stepped, zero_diag)
        };
    }
    Ok(JointResult { params, c, trace, status: RunStatus::Completed })
}

/// Pretraining, `C` initialization and joint training in sequence.
#[derive(Debug, Clone)]
pub struct PipelineResult {
    pub pretrained: AutoencoderParams,
    pub pretrain_trace: TrainTrace,
    pub c_init: CSolution,
    pub joint: JointResult,
}

pub fn run_pipeline(x: &Matrix, cfg: &TrainConfig) -> Result<PipelineResult> {
    let pre = pretrain(x, cfg)?;
    if let RunStatus::Diverged { iteration } = pre.status {
        return Err(Error::NumericalFailure(format!("pretraining diverged at iteration {iteration}")));
    }
    let z = embed(x, &pre.params, &cfg.norm)?;
    let c_init = init_c(&z, &cfg.reg, &cfg.c_solver)?;
    let joint = train_joint(x, pre.params.clone(), c_init.c.clone(), cfg)?;
    Ok(PipelineResult { pretrained: pre.params, pretrain_trace: pre.trace, c_init, joint })
}
