//! Self-expressive objective `F(Z, C) = ½‖ZC − Z‖²_F + λ θ(C)`, its
//! regularizers and their proximal operators, and solvers for `C` with the
//! embedding `Z` held fixed.

use crate::error::{Error, Result};
use crate::numlin::{gram_spectral_norm, solve_spd, svd, Matrix};

/// Regularizer family for the coefficient matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RegKind {
    /// `‖C‖₁` with zero diagonal.
    Ssc,
    /// `‖C‖₁ + τ‖C‖²_F` with zero diagonal.
    Ensc { tau_en: f64 },
    /// `½‖C‖²_F`.
    Frobenius,
    /// `‖C‖_*`, the sum of singular values.
    Nuclear,
    /// `(Σ σᵢᵖ)^{1/p}`, `p ≥ 1`.
    SchattenP { p: f64 },
}

pub const DEFAULT_ENSC_TAU: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Regularizer {
    pub kind: RegKind,
    pub lambda: f64,
    pub zero_diag: bool,
}

impl Regularizer {
    /// Zero-diagonal constraint defaults to on for SSC/EnSC and off otherwise.
    pub fn new(kind: RegKind, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidArgument(format!("lambda must be positive, got {lambda}")));
        }
        match kind {
            RegKind::Ensc { tau_en } if !(tau_en >= 0.0) => {
                return Err(Error::InvalidArgument(format!("EnSC tau must be >= 0, got {tau_en}")));
            }
            RegKind::SchattenP { p } if !(p >= 1.0) || !p.is_finite() => {
                return Err(Error::InvalidArgument(format!("Schatten p must be >= 1, got {p}")));
            }
            _ => {}
        }
        let zero_diag = matches!(kind, RegKind::Ssc | RegKind::Ensc { .. });
        Ok(Regularizer { kind, lambda, zero_diag })
    }

    pub fn ssc(lambda: f64) -> Result<Self> {
        Self::new(RegKind::Ssc, lambda)
    }

    pub fn with_zero_diag(mut self, zero_diag: bool) -> Result<Self> {
        if !zero_diag && matches!(self.kind, RegKind::Ssc | RegKind::Ensc { .. }) {
            return Err(Error::InvalidArgument(
                "SSC and EnSC always constrain the diagonal to zero".into(),
            ));
        }
        self.zero_diag = zero_diag;
        Ok(self)
    }
}

/// Coefficient matrix `C` together with its zero-diagonal flag.
#[derive(Debug, Clone, PartialEq)]
pub struct SelfExpression {
    c: Matrix,
    zero_diag: bool,
}

impl SelfExpression {
    /// Fails if `c` is not square or `zero_diag` is set but the diagonal is not exactly zero.
    pub fn new(c: Matrix, zero_diag: bool) -> Result<Self> {
        if !c.is_square() {
            return Err(Error::dims("SelfExpression", "square matrix", format!("{:?}", c.shape())));
        }
        if zero_diag && c.diagonal().iter().any(|&x| x != 0.0) {
            return Err(Error::InvalidArgument("diagonal must be zero".into()));
        }
        Ok(SelfExpression { c, zero_diag })
    }

    /// Zeroes the diagonal when `zero_diag` is set.
    pub fn projected(mut c: Matrix, zero_diag: bool) -> Self {
        assert!(c.is_square());
        if zero_diag {
            c.zero_diagonal();
        }
        SelfExpression { c, zero_diag }
    }

    pub fn zeros(n: usize, zero_diag: bool) -> Self {
        SelfExpression { c: Matrix::zeros(n, n), zero_diag }
    }

    /// `C = I`, the pretraining pass-through (never zero-diagonal).
    pub fn identity(n: usize) -> Self {
        SelfExpression { c: Matrix::identity(n), zero_diag: false }
    }

    pub fn matrix(&self) -> &Matrix {
        &self.c
    }

    pub fn into_matrix(self) -> Matrix {
        self.c
    }

    pub fn zero_diag(&self) -> bool {
        self.zero_diag
    }

    pub fn n(&self) -> usize {
        self.c.rows()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Objective {
    pub total: f64,
    /// `½‖ZC − Z‖²_F`
    pub residual: f64,
    /// `λ θ(C)`
    pub penalty: f64,
}

/// `½‖ZC − Z‖²_F`
pub fn residual(z: &Matrix, c: &Matrix) -> f64 {
    let mut r = z.matmul(c);
    r -= z;
    0.5 * r.frobenius_norm_sq()
}

pub fn evaluate_f(z: &Matrix, c: &SelfExpression, reg: &Regularizer) -> Result<Objective> {
    if z.cols() != c.n() {
        return Err(Error::dims(
            "evaluate_f",
            format!("C of size {0}x{0}", z.cols()),
            format!("{0}x{0}", c.n()),
        ));
    }
    let residual = residual(z, c.matrix());
    let penalty = reg.lambda * evaluate_regularizer(c, reg)?;
    Ok(Objective { total: residual + penalty, residual, penalty })
}

/// `θ(C)` without the `λ` weight. Returns `+∞` when the regularizer requires a
/// zero diagonal and `c` has a nonzero one.
pub fn evaluate_regularizer(c: &SelfExpression, reg: &Regularizer) -> Result<f64> {
    regularizer_value(c.matrix(), reg)
}

pub fn regularizer_value(c: &Matrix, reg: &Regularizer) -> Result<f64> {
    if reg.zero_diag && c.diagonal().iter().any(|&x| x != 0.0) {
        return Ok(f64::INFINITY);
    }
    Ok(match reg.kind {
        RegKind::Ssc => c.l1_norm(),
        RegKind::Ensc { tau_en } => c.l1_norm() + tau_en * c.frobenius_norm_sq(),
        RegKind::Frobenius => 0.5 * c.frobenius_norm_sq(),
        RegKind::Nuclear => svd(c)?.s.iter().sum(),
        RegKind::SchattenP { p } => schatten_norm(c, p)?,
    })
}

/// Schatten-p norm, the ℓp norm of the singular values.
pub fn schatten_norm(c: &Matrix, p: f64) -> Result<f64> {
    let s = svd(c)?.s;
    Ok(lp_norm(&s, p))
}

fn lp_norm(v: &[f64], p: f64) -> f64 {
    if p == 1.0 {
        return v.iter().map(|x| x.abs()).sum();
    }
    if p == 2.0 {
        return v.iter().map(|x| x * x).sum::<f64>().sqrt();
    }
    let m = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if m == 0.0 {
        return 0.0;
    }
    m * v.iter().map(|x| (x.abs() / m).powf(p)).sum::<f64>().powf(1.0 / p)
}

#[inline]
pub fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// `argmin_W ½‖W − C‖²_F + step·λ·θ(W)`, with the diagonal projected to zero
/// afterwards when `reg.zero_diag` is set.
pub fn prox(c: &Matrix, step: f64, reg: &Regularizer) -> Result<Matrix> {
    if !(step > 0.0) {
        return Err(Error::InvalidArgument(format!("prox step must be positive, got {step}")));
    }
    let t = step * reg.lambda;
    let mut w = match reg.kind {
        RegKind::Ssc => c.map(|x| soft_threshold(x, t)),
        RegKind::Ensc { tau_en } => {
            let shrink = 1.0 / (1.0 + 2.0 * t * tau_en);
            c.map(|x| soft_threshold(x, t) * shrink)
        }
        RegKind::Frobenius => c.scale(1.0 / (1.0 + t)),
        RegKind::Nuclear => spectral_prox(c, |s| s.iter().map(|&x| (x - t).max(0.0)).collect())?,
        RegKind::SchattenP { p } if p == 1.0 => {
            spectral_prox(c, |s| s.iter().map(|&x| (x - t).max(0.0)).collect())?
        }
        RegKind::SchattenP { p } if p == 2.0 => {
            // ‖·‖_{S_2} is the Frobenius norm: block soft-thresholding
            let n = c.frobenius_norm();
            if n <= t {
                Matrix::zeros(c.rows(), c.cols())
            } else {
                c.scale(1.0 - t / n)
            }
        }
        RegKind::SchattenP { p } => spectral_prox(c, |s| prox_lp_norm(s, t, p))?,
    };
    if reg.zero_diag {
        w.zero_diagonal();
    }
    Ok(w)
}

fn spectral_prox(c: &Matrix, shrink: impl Fn(&[f64]) -> Vec<f64>) -> Result<Matrix> {
    let r = svd(c)?;
    let s = shrink(&r.s);
    let mut us = r.u.clone();
    for i in 0..us.rows() {
        for (x, &sv) in us.row_mut(i).iter_mut().zip(&s) {
            *x *= sv;
        }
    }
    Ok(us.matmul(&r.vt))
}

/// Proximal map of `t‖·‖_p` on a nonnegative vector, `1 < p < ∞`.
///
/// For a fixed norm value `ν` the optimality conditions decouple into
/// `wᵢ + t ν^{1-p} wᵢ^{p-1} = σᵢ`, each solved by safeguarded Newton; an
/// outer bisection then finds the self-consistent `ν = ‖w(ν)‖_p`.
pub fn prox_lp_norm(sigma: &[f64], t: f64, p: f64) -> Vec<f64> {
    assert!(p > 1.0 && t >= 0.0);
    if t == 0.0 {
        return sigma.to_vec();
    }
    let q = p / (p - 1.0);
    if lp_norm(sigma, q) <= t {
        return vec![0.0; sigma.len()];
    }
    let solve_all = |nu: f64| -> Vec<f64> {
        let kappa = t * nu.powf(1.0 - p);
        sigma.iter().map(|&s| solve_component(s, kappa, p)).collect()
    };
    // g(ν) = ‖w(ν)‖_p − ν is positive near 0 and negative at ‖σ‖_p
    let mut hi = lp_norm(sigma, p);
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if lp_norm(&solve_all(mid), p) > mid {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    solve_all(0.5 * (lo + hi))
}

/// Root of `w + κ w^{p-1} = s` on `[0, s]`.
fn solve_component(s: f64, kappa: f64, p: f64) -> f64 {
    if s <= 0.0 {
        return 0.0;
    }
    let phi = |w: f64| w + kappa * w.powf(p - 1.0) - s;
    let (mut lo, mut hi) = (0.0, s);
    let mut w = s / (1.0 + kappa * s.powf(p - 2.0)).max(1.0);
    for _ in 0..100 {
        let f = phi(w);
        if f.abs() <= 1e-12 * s {
            return w;
        }
        if f > 0.0 {
            hi = w;
        } else {
            lo = w;
        }
        let df = 1.0 + kappa * (p - 1.0) * w.powf(p - 2.0);
        let mut next = w - f / df;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if (next - w).abs() <= 1e-16 * s {
            return next;
        }
        w = next;
    }
    w
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub max_iters: usize,
    /// Stop once an accepted prox-gradient step moves the point by at most
    /// `tolerance · max(1, ‖C‖_F)`.
    pub tolerance: f64,
    /// Monotone FISTA when set, plain ISTA otherwise.
    pub accelerated: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { max_iters: 20_000, tolerance: 1e-10, accelerated: true }
    }
}

#[derive(Debug, Clone)]
pub struct CSolution {
    pub c: SelfExpression,
    pub objective: Objective,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after every iteration (empty for closed-form solves).
    pub history: Vec<f64>,
}

/// Minimizes `F(Z, ·)` over `C`.
///
/// Frobenius without a diagonal constraint is solved in closed form,
/// `C = (ZᵀZ + λI)⁻¹ZᵀZ`. Everything else runs proximal gradient with step
/// `1/λ_max(ZᵀZ)`. Hitting `max_iters` is not an error: the best iterate is
/// returned with `converged = false`.
pub fn solve_c_fixed_z(z: &Matrix, reg: &Regularizer, opts: &SolverOptions) -> Result<CSolution> {
    if !z.is_finite() {
        return Err(Error::NumericalFailure("embedding has non-finite entries".into()));
    }
    let n = z.cols();
    let gram = z.tr_matmul(z);

    if reg.kind == RegKind::Frobenius && !reg.zero_diag {
        let mut a = gram.clone();
        for i in 0..n {
            a[(i, i)] += reg.lambda;
        }
        let c = SelfExpression::projected(solve_spd(&a, &gram)?, false);
        let objective = evaluate_f(z, &c, reg)?;
        return Ok(CSolution { c, objective, iterations: 0, converged: true, history: Vec::new() });
    }

    let lip = gram_spectral_norm(z)?;
    if lip == 0.0 {
        let c = SelfExpression::zeros(n, reg.zero_diag);
        let objective = evaluate_f(z, &c, reg)?;
        return Ok(CSolution { c, objective, iterations: 0, converged: true, history: Vec::new() });
    }
    let step = 1.0 / lip;
    let objective_of = |c: &Matrix| -> Result<f64> {
        Ok(residual(z, c) + reg.lambda * regularizer_value(c, reg)?)
    };
    // ∇ ½‖ZC − Z‖² = ZᵀZ (C − I)
    let grad = |c: &Matrix| -> Matrix {
        let mut g = gram.matmul(c);
        g -= &gram;
        g
    };

    let mut x = Matrix::zeros(n, n);
    let mut f_x = objective_of(&x)?;
    let mut y = x.clone();
    let mut t_k = 1.0_f64;
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    for it in 0..opts.max_iters {
        iterations = it + 1;
        let mut arg = y.clone();
        arg.axpy(-step, &grad(&y));
        let cand = prox(&arg, step, reg)?;
        let f_cand = objective_of(&cand)?;

        let accepted = f_cand <= f_x;
        // Size of the gradient mapping at y; zero exactly at a minimizer.
        let moved = (&cand - &y).frobenius_norm();
        let small_step = moved <= opts.tolerance * cand.frobenius_norm().max(1.0);
        if opts.accelerated {
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t_k * t_k).sqrt());
            let (x_new, f_new) = if accepted { (cand.clone(), f_cand) } else { (x.clone(), f_x) };
            // y = x + (t_k/t_{k+1})(cand − x) + ((t_k − 1)/t_{k+1})(x − x_prev)
            let mut y_next = x_new.clone();
            y_next.axpy(t_k / t_next, &(&cand - &x_new));
            y_next.axpy((t_k - 1.0) / t_next, &(&x_new - &x));
            x = x_new;
            f_x = f_new;
            y = y_next;
            t_k = t_next;
        } else {
            // ISTA with step 1/L never increases the objective
            x = cand;
            f_x = f_cand;
            y = x.clone();
        }
        history.push(f_x);

        if accepted && small_step {
            converged = true;
            break;
        }
    }

    let c = SelfExpression::projected(x, reg.zero_diag);
    let objective = evaluate_f(z, &c, reg)?;
    Ok(CSolution { c, objective, iterations, converged, history })
}
