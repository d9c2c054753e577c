//! Single-hidden-layer affine + ReLU encoder and decoder:
//!
//! ```text
//! Φ_E(X) = W_e² (W_e¹ X + b_e¹)₊ + b_e²
//! Φ_D(Z) = W_d² (W_d¹ Z + b_d¹)₊ + b_d²
//! ```
//!
//! with hand-written backpropagation, the weight-rescaling attack that
//! shrinks the embedding without touching the reconstruction, and the explicit
//! weight construction that collapses every embedded point onto one spot of
//! norm `τ` while still decoding exactly.

use crate::error::{Error, Result};
use crate::numlin::{Matrix, Rng};
use crate::selfexpress::SelfExpression;

#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderParams {
    /// `h × d_x`
    pub enc_w1: Matrix,
    pub enc_b1: Vec<f64>,
    /// `d × h`
    pub enc_w2: Matrix,
    pub enc_b2: Vec<f64>,
    /// `h_d × d`
    pub dec_w1: Matrix,
    pub dec_b1: Vec<f64>,
    /// `d_x × h_d`
    pub dec_w2: Matrix,
    pub dec_b2: Vec<f64>,
}

/// Tensor names in serialization and flattening order.
pub const TENSOR_NAMES: [&str; 8] =
    ["enc_w1", "enc_b1", "enc_w2", "enc_b2", "dec_w1", "dec_b1", "dec_w2", "dec_b2"];

impl AutoencoderParams {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        enc_w1: Matrix,
        enc_b1: Vec<f64>,
        enc_w2: Matrix,
        enc_b2: Vec<f64>,
        dec_w1: Matrix,
        dec_b1: Vec<f64>,
        dec_w2: Matrix,
        dec_b2: Vec<f64>,
    ) -> Result<Self> {
        let p = AutoencoderParams { enc_w1, enc_b1, enc_w2, enc_b2, dec_w1, dec_b1, dec_w2, dec_b2 };
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        let (h, dx) = self.enc_w1.shape();
        let d = self.enc_w2.rows();
        let hd = self.dec_w1.rows();
        let checks = [
            ("enc_b1", (self.enc_b1.len(), 1), (h, 1)),
            ("enc_w2", self.enc_w2.shape(), (d, h)),
            ("enc_b2", (self.enc_b2.len(), 1), (d, 1)),
            ("dec_w1", self.dec_w1.shape(), (hd, d)),
            ("dec_b1", (self.dec_b1.len(), 1), (hd, 1)),
            ("dec_w2", self.dec_w2.shape(), (dx, hd)),
            ("dec_b2", (self.dec_b2.len(), 1), (dx, 1)),
        ];
        for (name, got, want) in checks {
            if got != want {
                return Err(Error::dims(name, format!("{want:?}"), format!("{got:?}")));
            }
        }
        if h == 0 || dx == 0 || d == 0 || hd == 0 {
            return Err(Error::InvalidArgument("autoencoder widths must be positive".into()));
        }
        if !self.is_finite() {
            return Err(Error::NumericalFailure("autoencoder parameters are not finite".into()));
        }
        Ok(())
    }

    /// Uniform in `[−1/√fan_in, 1/√fan_in]` for every weight and bias.
    pub fn random(dx: usize, hidden: usize, d: usize, dec_hidden: usize, rng: &mut Rng) -> Self {
        let mut layer = |rows: usize, cols: usize| {
            let s = 1.0 / (cols as f64).sqrt();
            let w = rng.uniform_matrix(rows, cols, -s, s);
            let b = (0..rows).map(|_| rng.uniform(-s, s)).collect::<Vec<_>>();
            (w, b)
        };
        let (enc_w1, enc_b1) = layer(hidden, dx);
        let (enc_w2, enc_b2) = layer(d, hidden);
        let (dec_w1, dec_b1) = layer(dec_hidden, d);
        let (dec_w2, dec_b2) = layer(dx, dec_hidden);
        AutoencoderParams { enc_w1, enc_b1, enc_w2, enc_b2, dec_w1, dec_b1, dec_w2, dec_b2 }
    }

    pub fn input_dim(&self) -> usize {
        self.enc_w1.cols()
    }

    pub fn hidden(&self) -> usize {
        self.enc_w1.rows()
    }

    pub fn embed_dim(&self) -> usize {
        self.enc_w2.rows()
    }

    pub fn dec_hidden(&self) -> usize {
        self.dec_w1.rows()
    }

    pub fn zeros_like(&self) -> Self {
        let z = |m: &Matrix| Matrix::zeros(m.rows(), m.cols());
        let zv = |v: &Vec<f64>| vec![0.0; v.len()];
        AutoencoderParams {
            enc_w1: z(&self.enc_w1),
            enc_b1: zv(&self.enc_b1),
            enc_w2: z(&self.enc_w2),
            enc_b2: zv(&self.enc_b2),
            dec_w1: z(&self.dec_w1),
            dec_b1: zv(&self.dec_b1),
            dec_w2: z(&self.dec_w2),
            dec_b2: zv(&self.dec_b2),
        }
    }

    /// The eight tensors in [`TENSOR_NAMES`] order; biases as column vectors.
    pub fn tensors(&self) -> Vec<(&'static str, Matrix)> {
        let col = |v: &Vec<f64>| Matrix::column_vector(v);
        vec![
            ("enc_w1", self.enc_w1.clone()),
            ("enc_b1", col(&self.enc_b1)),
            ("enc_w2", self.enc_w2.clone()),
            ("enc_b2", col(&self.enc_b2)),
            ("dec_w1", self.dec_w1.clone()),
            ("dec_b1", col(&self.dec_b1)),
            ("dec_w2", self.dec_w2.clone()),
            ("dec_b2", col(&self.dec_b2)),
        ]
    }

    /// Inverse of [`tensors`](Self::tensors); order must match [`TENSOR_NAMES`].
    pub fn from_tensors(tensors: Vec<(String, Matrix)>) -> Result<Self> {
        if tensors.len() != TENSOR_NAMES.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} tensors, got {}",
                TENSOR_NAMES.len(),
                tensors.len()
            )));
        }
        let mut it = tensors.into_iter().zip(TENSOR_NAMES);
        let mut next = || -> Result<Matrix> {
            let ((name, m), want) = it.next().expect("length checked");
            if name != want {
                return Err(Error::InvalidArgument(format!("expected tensor {want}, found {name}")));
            }
            Ok(m)
        };
        let vecify = |m: Matrix| -> Result<Vec<f64>> {
            if m.cols() != 1 {
                return Err(Error::dims("bias", "column vector", format!("{:?}", m.shape())));
            }
            Ok(m.into_vec())
        };
        let enc_w1 = next()?;
        let enc_b1 = vecify(next()?)?;
        let enc_w2 = next()?;
        let enc_b2 = vecify(next()?)?;
        let dec_w1 = next()?;
        let dec_b1 = vecify(next()?)?;
        let dec_w2 = next()?;
        let dec_b2 = vecify(next()?)?;
        Self::new(enc_w1, enc_b1, enc_w2, enc_b2, dec_w1, dec_b1, dec_w2, dec_b2)
    }

    fn slices(&self) -> [&[f64]; 8] {
        [
            self.enc_w1.as_slice(),
            &self.enc_b1,
            self.enc_w2.as_slice(),
            &self.enc_b2,
            self.dec_w1.as_slice(),
            &self.dec_b1,
            self.dec_w2.as_slice(),
            &self.dec_b2,
        ]
    }

    fn slices_mut(&mut self) -> [&mut [f64]; 8] {
        [
            self.enc_w1.as_mut_slice(),
            &mut self.enc_b1,
            self.enc_w2.as_mut_slice(),
            &mut self.enc_b2,
            self.dec_w1.as_mut_slice(),
            &mut self.dec_b1,
            self.dec_w2.as_mut_slice(),
            &mut self.dec_b2,
        ]
    }

    pub fn num_params(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.slices().concat()
    }

    /// Overwrites every parameter from a vector laid out as [`flatten`](Self::flatten).
    pub fn assign_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.num_params());
        let mut off = 0;
        for s in self.slices_mut() {
            s.copy_from_slice(&flat[off..off + s.len()]);
            off += s.len();
        }
    }

    /// `self += a · other`
    pub fn axpy(&mut self, a: f64, other: &AutoencoderParams) {
        for (dst, src) in self.slices_mut().into_iter().zip(other.slices()) {
            assert_eq!(dst.len(), src.len());
            for (x, y) in dst.iter_mut().zip(src) {
                *x += a * y;
            }
        }
    }

    pub fn norm_sq(&self) -> f64 {
        self.slices().iter().flat_map(|s| s.iter()).map(|x| x * x).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|x| x.is_finite()))
    }
}

/// Intermediate values of one affine → ReLU → affine block.
#[derive(Debug, Clone)]
pub struct Pass {
    /// Hidden pre-activations `W¹·input + b¹`.
    pub pre: Matrix,
    /// `pre₊`
    pub act: Matrix,
    pub out: Matrix,
}

fn block_forward(input: &Matrix, w1: &Matrix, b1: &[f64], w2: &Matrix, b2: &[f64]) -> Pass {
    let mut pre = w1.matmul(input);
    pre.add_column_broadcast(b1);
    let act = pre.map(|v| v.max(0.0));
    let mut out = w2.matmul(&act);
    out.add_column_broadcast(b2);
    Pass { pre, act, out }
}

struct BlockGrad {
    w1: Matrix,
    b1: Vec<f64>,
    w2: Matrix,
    b2: Vec<f64>,
    input: Matrix,
}

fn block_backward(input: &Matrix, w1: &Matrix, w2: &Matrix, pass: &Pass, d_out: &Matrix) -> BlockGrad {
    let gw2 = d_out.matmul_tr(&pass.act);
    let gb2 = d_out.row_sums();
    let mut d_pre = w2.tr_matmul(d_out);
    // subgradient 0 at the kink
    for (g, &p) in d_pre.as_mut_slice().iter_mut().zip(pass.pre.as_slice()) {
        if p <= 0.0 {
            *g = 0.0;
        }
    }
    let gw1 = d_pre.matmul_tr(input);
    let gb1 = d_pre.row_sums();
    let gin = w1.tr_matmul(&d_pre);
    BlockGrad { w1: gw1, b1: gb1, w2: gw2, b2: gb2, input: gin }
}

pub fn encoder_pass(x: &Matrix, p: &AutoencoderParams) -> Result<Pass> {
    if x.rows() != p.input_dim() {
        return Err(Error::dims("encode", format!("{} input rows", p.input_dim()), x.rows().to_string()));
    }
    Ok(block_forward(x, &p.enc_w1, &p.enc_b1, &p.enc_w2, &p.enc_b2))
}

pub fn decoder_pass(z: &Matrix, p: &AutoencoderParams) -> Result<Pass> {
    if z.rows() != p.embed_dim() {
        return Err(Error::dims("decode", format!("{} embedding rows", p.embed_dim()), z.rows().to_string()));
    }
    Ok(block_forward(z, &p.dec_w1, &p.dec_b1, &p.dec_w2, &p.dec_b2))
}

pub fn encode(x: &Matrix, p: &AutoencoderParams) -> Result<Matrix> {
    Ok(encoder_pass(x, p)?.out)
}

pub fn decode(z: &Matrix, p: &AutoencoderParams) -> Result<Matrix> {
    Ok(decoder_pass(z, p)?.out)
}

/// Weights of the smooth joint loss
/// `‖X − Φ_D(ZC)‖²_F + γ·½‖ZC − Z‖²_F + γ₂ Σᵢ (‖Zᵢ‖² − τ)²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub gamma: f64,
    pub gamma2: f64,
    /// Target squared norm of each embedded point in the instance penalty.
    pub tau: f64,
    pub grad_c: bool,
}

impl LossWeights {
    pub fn reconstruction_only() -> Self {
        LossWeights { gamma: 0.0, gamma2: 0.0, tau: 1.0, grad_c: false }
    }
}

/// Unweighted loss components.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossTerms {
    /// `‖X − Φ_D(ZC)‖²_F`
    pub recon: f64,
    /// `½‖ZC − Z‖²_F`
    pub f_residual: f64,
    /// `Σᵢ (‖Zᵢ‖² − τ)²`
    pub instance: f64,
}

impl LossTerms {
    pub fn smooth(&self, w: &LossWeights) -> f64 {
        self.recon + w.gamma * self.f_residual + w.gamma2 * self.instance
    }
}

/// Everything downstream of the embedding: decoder gradients, `∂/∂Z` and
/// optionally `∂/∂C`.
#[derive(Debug, Clone)]
pub struct HeadGrad {
    pub terms: LossTerms,
    pub x_hat: Matrix,
    pub d_z: Matrix,
    pub d_c: Option<Matrix>,
    pub dec_w1: Matrix,
    pub dec_b1: Vec<f64>,
    pub dec_w2: Matrix,
    pub dec_b2: Vec<f64>,
}

/// Loss and gradients of the smooth joint objective given the embedding `z`.
pub fn head_backward(
    x: &Matrix,
    z: &Matrix,
    c: &Matrix,
    p: &AutoencoderParams,
    w: &LossWeights,
) -> Result<HeadGrad> {
    let n = x.cols();
    if z.cols() != n || c.shape() != (n, n) {
        return Err(Error::dims(
            "backprop",
            format!("Z with {n} columns and C {n}x{n}"),
            format!("Z {:?}, C {:?}", z.shape(), c.shape()),
        ));
    }
    let s = z.matmul(c);
    let pass = decoder_pass(&s, p)?;
    let diff = &pass.out - x;
    let recon = diff.frobenius_norm_sq();
    let d_xhat = diff.scale(2.0);
    let g = block_backward(&s, &p.dec_w1, &p.dec_w2, &pass, &d_xhat);

    let resid = &s - z;
    let f_residual = 0.5 * resid.frobenius_norm_sq();
    let mut d_s = g.input;
    d_s.axpy(w.gamma, &resid);

    let mut d_z = d_s.matmul_tr(c);
    d_z.axpy(-w.gamma, &resid);

    let mut instance = 0.0;
    let norms_sq: Vec<f64> = z.column_norms().iter().map(|v| v * v).collect();
    for (j, &ns) in norms_sq.iter().enumerate() {
        let e = ns - w.tau;
        instance += e * e;
        if w.gamma2 != 0.0 {
            let k = 4.0 * w.gamma2 * e;
            for i in 0..z.rows() {
                d_z[(i, j)] += k * z[(i, j)];
            }
        }
    }

    let d_c = w.grad_c.then(|| z.tr_matmul(&d_s));
    Ok(HeadGrad {
        terms: LossTerms { recon, f_residual, instance },
        x_hat: pass.out,
        d_z,
        d_c,
        dec_w1: g.w1,
        dec_b1: g.b1,
        dec_w2: g.w2,
        dec_b2: g.b2,
    })
}

#[derive(Debug, Clone)]
pub struct EncoderGrad {
    pub enc_w1: Matrix,
    pub enc_b1: Vec<f64>,
    pub enc_w2: Matrix,
    pub enc_b2: Vec<f64>,
}

/// Pulls `∂/∂(encoder output)` back through the encoder.
pub fn encoder_backward(x: &Matrix, p: &AutoencoderParams, pass: &Pass, d_out: &Matrix) -> EncoderGrad {
    let g = block_backward(x, &p.enc_w1, &p.enc_w2, pass, d_out);
    EncoderGrad { enc_w1: g.w1, enc_b1: g.b1, enc_w2: g.w2, enc_b2: g.b2 }
}

/// Parameter-shaped gradient plus `∂/∂C` when requested.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub params: AutoencoderParams,
    pub c: Option<Matrix>,
}

impl Gradients {
    pub fn assemble(enc: EncoderGrad, head: HeadGrad) -> Self {
        Gradients {
            params: AutoencoderParams {
                enc_w1: enc.enc_w1,
                enc_b1: enc.enc_b1,
                enc_w2: enc.enc_w2,
                enc_b2: enc.enc_b2,
                dec_w1: head.dec_w1,
                dec_b1: head.dec_b1,
                dec_w2: head.dec_w2,
                dec_b2: head.dec_b2,
            },
            c: head.d_c,
        }
    }

    pub fn norm(&self) -> f64 {
        let c = self.c.as_ref().map_or(0.0, |m| m.frobenius_norm_sq());
        (self.params.norm_sq() + c).sqrt()
    }
}

/// Exact gradients of the smooth joint loss with `Z = Φ_E(X)` taken as is.
pub fn backprop(
    x: &Matrix,
    p: &AutoencoderParams,
    c: &SelfExpression,
    w: &LossWeights,
) -> Result<(LossTerms, Gradients)> {
    let pass = encoder_pass(x, p)?;
    let head = head_backward(x, &pass.out, c.matrix(), p, w)?;
    let enc = encoder_backward(x, p, &pass, &head.d_z);
    let terms = head.terms;
    Ok((terms, Gradients::assemble(enc, head)))
}

/// Scales the encoder's final affine layer by `alpha` and the decoder's first
/// weight by `1/alpha`: the embedding shrinks to `alpha·Z` while
/// `Φ_D(Φ_E(X)·C)` is unchanged for every `C`.
pub fn scaling_attack(p: &AutoencoderParams, alpha: f64) -> Result<AutoencoderParams> {
    scaling_attack_joint(p, None, alpha, 1.0).map(|(q, _)| q)
}

/// Rescales embedding by `alpha` and `C` by `mu`, compensating in the decoder's
/// first weight by `1/(alpha·mu)`. `½‖ZC − Z‖²` then shrinks with `alpha²`,
/// `θ(C)` shrinks with `mu`, and the reconstruction is unchanged.
pub fn scaling_attack_joint(
    p: &AutoencoderParams,
    c: Option<&SelfExpression>,
    alpha: f64,
    mu: f64,
) -> Result<(AutoencoderParams, Option<SelfExpression>)> {
    if !(alpha > 0.0) || !(mu > 0.0) || !alpha.is_finite() || !mu.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "scaling factors must be positive, got alpha={alpha}, mu={mu}"
        )));
    }
    let mut q = p.clone();
    q.enc_w2.scale_in_place(alpha);
    q.enc_b2.iter_mut().for_each(|b| *b *= alpha);
    q.dec_w1.scale_in_place(1.0 / (alpha * mu));
    let c = c.map(|c| SelfExpression::projected(c.matrix().scale(mu), c.zero_diag()));
    Ok((q, c))
}

/// How the output scale `β` of the collapsing construction is picked.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BetaPolicy {
    /// `β = τ / ‖W̃_e² b̃_e¹‖` so every embedded point approaches norm `τ`.
    /// Hidden biases get a margin of 1 above the smallest admissible value.
    NormTarget,
    /// Fixed `β`, hidden biases at the smallest admissible value (zero for
    /// nonnegative data).
    Fixed(f64),
}

/// Builds encoder/decoder weights with `Φ_E(Xᵢ) = αβXᵢ + βW̃_e²b̃_e¹` and
/// `Φ_D(Φ_E(X)) = X`. As `alpha → 0` every embedded point approaches the same
/// vector of norm `tau`.
pub fn identity_construction(
    x: &Matrix,
    tau: f64,
    alpha: f64,
    hidden: usize,
    beta_policy: BetaPolicy,
) -> Result<AutoencoderParams> {
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument(format!("tau must be positive, got {tau}")));
    }
    if !(alpha > 0.0) {
        return Err(Error::InvalidArgument(format!("alpha must be positive, got {alpha}")));
    }
    let dx = x.rows();
    if hidden < dx {
        return Err(Error::InvalidArgument(format!(
            "{hidden} hidden units cannot express the identity on {dx}-dimensional data"
        )));
    }
    let margin = match beta_policy {
        BetaPolicy::NormTarget => 1.0,
        BetaPolicy::Fixed(b) if b > 0.0 => 0.0,
        BetaPolicy::Fixed(b) => {
            return Err(Error::InvalidArgument(format!("beta must be positive, got {b}")));
        }
    };

    // W̃¹ = [I; 0] (hidden × d), W̃² = [I 0] (d × hidden)
    let lift = Matrix::from_fn(hidden, dx, |i, j| if i == j { 1.0 } else { 0.0 });
    let proj = lift.transpose();

    // smallest bias keeping every pre-activation nonnegative, plus margin
    let nonneg_bias = |pre: &Matrix| -> Vec<f64> {
        (0..pre.rows())
            .map(|k| {
                let lo = pre.row(k).iter().fold(f64::INFINITY, |m, &v| m.min(v));
                (-lo).max(0.0) + margin
            })
            .collect()
    };

    let b_e1 = nonneg_bias(&lift.matmul(x).scale(alpha));
    let offset = proj.matmul(&Matrix::column_vector(&b_e1));
    let beta = match beta_policy {
        BetaPolicy::Fixed(b) => b,
        BetaPolicy::NormTarget => {
            let n = offset.frobenius_norm();
            if n == 0.0 {
                return Err(Error::NumericalFailure("encoder offset vanished".into()));
            }
            tau / n
        }
    };

    let enc_w1 = lift.scale(alpha);
    let enc_w2 = proj.scale(beta);
    let enc_b2 = vec![0.0; dx];
    let z = {
        let mut pre = enc_w1.matmul(x);
        pre.add_column_broadcast(&b_e1);
        enc_w2.matmul(&pre)
    };

    let dec_w1 = lift.scale(1.0 / beta);
    let b_d1 = nonneg_bias(&dec_w1.matmul(&z));
    let dec_w2 = proj.scale(1.0 / alpha);
    // b_d² = −α⁻¹ W̃_d² [W̃_d¹ W̃_e² b̃_e¹ + b̃_d¹]
    let inner = &lift.matmul(&offset) + &Matrix::column_vector(&b_d1);
    let b_d2 = proj.matmul(&inner).scale(-1.0 / alpha).into_vec();

    AutoencoderParams::new(enc_w1, b_e1, enc_w2, enc_b2, dec_w1, b_d1, dec_w2, b_d2)
}
