//! Closed-form degenerate optima of the normalized self-expressive problem,
//! independent checks that nothing beats them on small instances, and
//! scalar diagnostics of how collapsed an embedding is.
//!
//! With `Z` constrained by `‖Z‖²_F ≥ τ` (whole embedding, [`Problem::P1`]) or
//! `‖Zⁱ‖² ≥ τ/d` (every row, [`Problem::P2`]):
//!
//! * for any `C`, the best `Z` is `B·Qᵀ` with `Q` spanning the left singular
//!   space of the smallest singular value of `C − I`;
//! * under `ℓ1` with zero diagonal, two copied points and zeros elsewhere;
//! * under any Schatten-p norm, a rank-one `Z = z qᵀ`, `C = q qᵀ`;
//! * with every point on the sphere of radius `√τ`, each point paired with a
//!   ±copy of itself.

use crate::error::{Error, Result};
use crate::numlin::{pinv, sigma_min_space, solve_spd, svd, Matrix, Rng, DEFAULT_MULTIPLICITY_TOL};
use crate::selfexpress::{regularizer_value, schatten_norm, soft_threshold, Regularizer, SelfExpression};

/// Which norm constraint bounds the embedding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Problem {
    /// `‖Z‖²_F ≥ τ`
    P1,
    /// `‖Zⁱ‖² ≥ τ/d` for every row `i`
    P2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TheoremTag {
    SigmaMin,
    TwoPoint,
    RankOne,
    Pairing,
}

#[derive(Debug, Clone)]
pub struct DegenerateSolution {
    pub z_star: Matrix,
    pub c_star: SelfExpression,
    /// `θ(C*)`; the self-expression residual is zero.
    pub objective: f64,
    pub tag: TheoremTag,
}

/// `P` with `P[perm[i], i] = signs[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignedPermutation {
    pub perm: Vec<usize>,
    pub signs: Vec<f64>,
}

impl SignedPermutation {
    pub fn identity(n: usize) -> Self {
        SignedPermutation { perm: (0..n).collect(), signs: vec![1.0; n] }
    }

    pub fn random(n: usize, rng: &mut Rng) -> Self {
        let mut perm: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut perm);
        let signs = (0..n).map(|_| if rng.coin() { 1.0 } else { -1.0 }).collect();
        SignedPermutation { perm, signs }
    }

    pub fn matrix(&self) -> Matrix {
        let n = self.perm.len();
        let mut p = Matrix::zeros(n, n);
        for (i, (&r, &s)) in self.perm.iter().zip(&self.signs).enumerate() {
            p[(r, i)] = s;
        }
        p
    }
}

/// `½ σ_min²(C − I) τ + λθ(C)`: the best achievable objective for a fixed `C`.
pub fn sigma_min_objective(c: &SelfExpression, tau: f64, reg: &Regularizer) -> Result<f64> {
    let n = c.n();
    let m = c.matrix() - &Matrix::identity(n);
    let s = sigma_min_space(&m, DEFAULT_MULTIPLICITY_TOL)?;
    Ok(0.5 * s.sigma_min * s.sigma_min * tau + reg.lambda * regularizer_value(c.matrix(), reg)?)
}

/// Optimal embedding `Z* = B·Qᵀ` for a fixed `C*`.
///
/// `b_choice` must be `d × r` with `r` the multiplicity of `σ_min(C* − I)`,
/// and must satisfy the norm constraint of `scheme`: with equality when
/// `σ_min > 0`, as a lower bound when `σ_min = 0`.
pub fn thm1_optimal_z(c_star: &SelfExpression, tau: f64, scheme: Problem, b_choice: &Matrix) -> Result<Matrix> {
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument(format!("tau must be positive, got {tau}")));
    }
    let n = c_star.n();
    let m = c_star.matrix() - &Matrix::identity(n);
    let space = sigma_min_space(&m, DEFAULT_MULTIPLICITY_TOL)?;
    let r = space.multiplicity;
    if b_choice.cols() != r {
        return Err(Error::dims("thm1_optimal_z", format!("B with {r} columns"), b_choice.cols().to_string()));
    }
    let tight = space.sigma_min > DEFAULT_MULTIPLICITY_TOL * space.basis.max_abs().max(1.0);
    let check = |value: f64, target: f64, what: &str| -> Result<()> {
        let slack = 1e-10 * target.max(1.0);
        let ok = if tight { (value - target).abs() <= slack } else { value >= target - slack };
        if ok {
            Ok(())
        } else {
            let rel = if tight { "=" } else { ">=" };
            Err(Error::InvalidArgument(format!("{what} is {value}, constraint requires {rel} {target}")))
        }
    };
    match scheme {
        Problem::P1 => check(b_choice.frobenius_norm_sq(), tau, "‖B‖²_F")?,
        Problem::P2 => {
            let d = b_choice.rows() as f64;
            for (i, rn) in b_choice.row_norms().into_iter().enumerate() {
                check(rn * rn, tau / d, &format!("squared norm of row {i} of B"))?;
            }
        }
    }
    Ok(b_choice.matmul_tr(&space.basis))
}

/// Two copies of `z = √(τ/2d)·𝟙` and `n − 2` zero columns, with
/// `C = Pᵀ (swap ⊕ 0) P` for a seeded signed permutation `P`.
pub fn thm2_canonical(n: usize, d: usize, tau: f64, scheme: Problem, perm_seed: u64) -> Result<DegenerateSolution> {
    let mut rng = Rng::seed_from(perm_seed);
    thm2_with_permutation(d, tau, scheme, &SignedPermutation::random(n, &mut rng))
}

pub fn thm2_with_permutation(d: usize, tau: f64, scheme: Problem, perm: &SignedPermutation) -> Result<DegenerateSolution> {
    let n = perm.perm.len();
    if n < 2 || d < 1 || !(tau > 0.0) {
        return Err(Error::InvalidArgument(format!("need n >= 2, d >= 1, tau > 0; got n={n}, d={d}, tau={tau}")));
    }
    // the same z is feasible for both schemes: ‖z‖² = τ/2 and zᵢ² = τ/(2d)
    let _ = scheme;
    let zval = (tau / (2.0 * d as f64)).sqrt();
    let z0 = Matrix::from_fn(d, n, |_, j| if j < 2 { zval } else { 0.0 });
    let mut c0 = Matrix::zeros(n, n);
    c0[(0, 1)] = 1.0;
    c0[(1, 0)] = 1.0;
    let p = perm.matrix();
    let z_star = z0.matmul(&p);
    let c_star = SelfExpression::new(p.tr_matmul(&c0).matmul(&p), true)?;
    let objective = c_star.matrix().l1_norm();
    Ok(DegenerateSolution { z_star, c_star, objective, tag: TheoremTag::TwoPoint })
}

/// Rank-one solution `C = qqᵀ`, `Z = z qᵀ` with `z = √(τ/d)·𝟙` and a seeded
/// random unit `q`.
pub fn thm3_canonical(n: usize, d: usize, tau: f64, p: f64, q_seed: u64) -> Result<DegenerateSolution> {
    if n < 1 {
        return Err(Error::InvalidArgument("need n >= 1".into()));
    }
    let mut rng = Rng::seed_from(q_seed);
    let mut q: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
    let norm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    q.iter_mut().for_each(|v| *v /= norm);
    thm3_with_q(&q, d, tau, p)
}

pub fn thm3_with_q(q: &[f64], d: usize, tau: f64, p: f64) -> Result<DegenerateSolution> {
    if d < 1 || !(tau > 0.0) || !(p >= 1.0) {
        return Err(Error::InvalidArgument(format!("need d >= 1, tau > 0, p >= 1; got d={d}, tau={tau}, p={p}")));
    }
    let qn = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    if (qn - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidArgument(format!("q must be a unit vector, has norm {qn}")));
    }
    let n = q.len();
    let zval = (tau / d as f64).sqrt();
    let z_star = Matrix::from_fn(d, n, |_, j| zval * q[j]);
    let c_star = SelfExpression::projected(Matrix::from_fn(n, n, |i, j| q[i] * q[j]), false);
    let objective = schatten_norm(c_star.matrix(), p)?;
    Ok(DegenerateSolution { z_star, c_star, objective, tag: TheoremTag::RankOne })
}

/// Best value found by a search, and how many candidates it examined.
#[derive(Debug, Clone)]
pub struct SearchReport {
    pub best: f64,
    pub best_z: Matrix,
    pub best_c: Option<Matrix>,
    pub candidates: usize,
}

/// `min ‖c‖₁ s.t. a·c = b` by enumerating every support of at most
/// `rank` linearly independent columns, the vertices of the feasible
/// polytope. Returns `+∞` when `b` is outside the column span.
pub fn basis_pursuit_enumerate(a: &Matrix, b: &[f64]) -> (f64, Vec<f64>) {
    let m = a.cols();
    let bn = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if bn == 0.0 {
        return (0.0, vec![0.0; m]);
    }
    let max_k = a.rows().min(m);
    let mut best = (f64::INFINITY, vec![0.0; m]);
    let mut support = Vec::with_capacity(max_k);
    for k in 1..=max_k {
        combinations(m, k, &mut support, 0, &mut |s| {
            let sub = a.select_columns(s);
            let gram = sub.tr_matmul(&sub);
            // vertices use linearly independent columns only
            if gram_condition_too_large(&gram) {
                return;
            }
            let rhs = sub.tr_matmul(&Matrix::column_vector(b));
            let Ok(sol) = solve_spd(&gram, &rhs) else { return };
            let fit = sub.matmul(&sol);
            let resid = fit.as_slice().iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
            if resid > 1e-9 * bn {
                return;
            }
            let l1 = sol.l1_norm();
            if l1 < best.0 {
                let mut full = vec![0.0; m];
                for (t, &j) in s.iter().enumerate() {
                    full[j] = sol[(t, 0)];
                }
                best = (l1, full);
            }
        });
    }
    best
}

fn gram_condition_too_large(gram: &Matrix) -> bool {
    match crate::numlin::sym_eig(gram) {
        Ok(e) => {
            let hi = e.values.last().copied().unwrap_or(0.0);
            let lo = e.values.first().copied().unwrap_or(0.0);
            !(lo > 1e-12 * hi)
        }
        Err(_) => true,
    }
}

fn combinations(m: usize, k: usize, cur: &mut Vec<usize>, start: usize, f: &mut impl FnMut(&[usize])) {
    if cur.len() == k {
        f(cur);
        return;
    }
    for j in start..m {
        if m - j < k - cur.len() {
            break;
        }
        cur.push(j);
        combinations(m, k, cur, j + 1, f);
        cur.pop();
    }
}

/// `min ‖C‖₁ s.t. ZC = Z, diag(C) = 0` for a fixed `Z`, solved exactly one
/// column at a time by [`basis_pursuit_enumerate`].
pub fn min_l1_self_expression(z: &Matrix) -> (f64, Matrix) {
    let n = z.cols();
    let mut c = Matrix::zeros(n, n);
    let mut total = 0.0;
    for j in 0..n {
        let others: Vec<usize> = (0..n).filter(|&i| i != j).collect();
        let a = z.select_columns(&others);
        let (v, col) = basis_pursuit_enumerate(&a, &z.column(j));
        if v.is_infinite() {
            return (f64::INFINITY, c);
        }
        total += v;
        for (t, &i) in others.iter().enumerate() {
            c[(i, j)] = col[t];
        }
    }
    (total, c)
}

/// Searches over nonzero embeddings `Z` (`d × n`, scaled to `‖Z‖²_F = τ`) for
/// the smallest `‖C‖₁` with `ZC = Z`, `diag(C) = 0`. The inner problem is
/// solved exactly per `Z`; the outer search mixes random, structured
/// (zeroed, copied and near-copied columns) and locally refined candidates.
pub fn thm2_brute_force(n: usize, d: usize, tau: f64, candidates: usize, seed: u64) -> Result<SearchReport> {
    if n < 2 || d < 1 || !(tau > 0.0) {
        return Err(Error::InvalidArgument(format!("need n >= 2, d >= 1, tau > 0; got n={n}, d={d}, tau={tau}")));
    }
    let mut rng = Rng::seed_from(seed);
    let mut report = SearchReport { best: f64::INFINITY, best_z: Matrix::zeros(d, n), best_c: None, candidates: 0 };
    let mut pool: Vec<(f64, Matrix)> = Vec::new();
    let consider = |z: Matrix, report: &mut SearchReport, pool: &mut Vec<(f64, Matrix)>| {
        let nz = z.frobenius_norm();
        if nz == 0.0 {
            return;
        }
        let z = z.scale(tau.sqrt() / nz);
        let (v, c) = min_l1_self_expression(&z);
        report.candidates += 1;
        if v < report.best {
            report.best = v;
            report.best_z = z.clone();
            report.best_c = Some(c);
        }
        if v.is_finite() {
            pool.push((v, z));
            if pool.len() > 64 {
                pool.sort_by(|a, b| a.0.total_cmp(&b.0));
                pool.truncate(32);
            }
        }
    };

    let random_phase = candidates / 2;
    let mut k = 0;
    while report.candidates < random_phase {
        k += 1;
        let mut z = rng.normal_matrix(d, n);
        match k % 4 {
            0 => {}
            1 => {
                // zero out some columns
                let zeros = rng.index(n - 1);
                for _ in 0..zeros {
                    let j = rng.index(n);
                    z.set_column(j, &vec![0.0; d]);
                }
            }
            2 => {
                // exact ±scaled copies
                let src = rng.index(n);
                let dst = (src + 1 + rng.index(n - 1)) % n;
                let s = rng.uniform(-2.0, 2.0);
                let col: Vec<f64> = z.column(src).iter().map(|v| v * s).collect();
                z.set_column(dst, &col);
            }
            _ => {
                // rank one
                let u: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
                let v: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
                z = Matrix::from_fn(d, n, |i, j| u[i] * v[j]);
            }
        }
        consider(z, &mut report, &mut pool);
    }

    // local refinement around the best candidates
    pool.sort_by(|a, b| a.0.total_cmp(&b.0));
    pool.truncate(16);
    let starts: Vec<Matrix> = pool.iter().map(|(_, z)| z.clone()).collect();
    let per_start = (candidates - report.candidates).div_ceil(starts.len().max(1));
    for start in starts {
        let mut cur = start;
        let mut cur_v = min_l1_self_expression(&cur).0;
        let mut step = 0.3;
        for _ in 0..per_start {
            if report.candidates >= candidates {
                break;
            }
            let mut trial = cur.clone();
            trial.axpy(step, &rng.normal_matrix(d, n));
            let before = report.candidates;
            let mut local = Vec::new();
            consider(trial.clone(), &mut report, &mut local);
            if report.candidates == before {
                continue;
            }
            let v = local.last().map_or(f64::INFINITY, |(v, _)| *v);
            if v < cur_v {
                cur_v = v;
                cur = trial;
            } else {
                step = (step * 0.97).max(1e-6);
            }
        }
    }
    Ok(report)
}

/// Random search over feasible `(Z, C)` with `ZC = Z` enforced by projecting
/// a random `C` onto `{C : ZC = Z}` via `C + Z⁺(Z − ZC)`; scores `‖C‖_{S_p}`.
pub fn thm3_random_search(n: usize, d: usize, p: f64, candidates: usize, seed: u64) -> Result<SearchReport> {
    if n < 1 || d < 1 || !(p >= 1.0) {
        return Err(Error::InvalidArgument(format!("need n, d >= 1 and p >= 1; got n={n}, d={d}, p={p}")));
    }
    let mut rng = Rng::seed_from(seed);
    let mut report = SearchReport { best: f64::INFINITY, best_z: Matrix::zeros(d, n), best_c: None, candidates: 0 };
    let scales = [1e-3, 1e-1, 1.0, 10.0];
    for k in 0..candidates {
        let z = if k % 3 == 2 {
            let u: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
            let v: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
            Matrix::from_fn(d, n, |i, j| u[i] * v[j])
        } else {
            rng.normal_matrix(d, n)
        };
        if z.frobenius_norm() == 0.0 {
            continue;
        }
        let c0 = rng.normal_matrix(n, n).scale(scales[k % scales.len()]);
        let zp = pinv(&z, 1e-12)?;
        let mut c = c0.clone();
        c += &zp.matmul(&(&z - &z.matmul(&c0)));
        let resid = (&z.matmul(&c) - &z).frobenius_norm() / z.frobenius_norm();
        if resid > 1e-9 {
            continue;
        }
        let v = schatten_norm(&c, p)?;
        report.candidates += 1;
        if v < report.best {
            report.best = v;
            report.best_z = z;
            report.best_c = Some(c);
        }
    }
    Ok(report)
}

/// `min ‖c‖₁ s.t. z_vec = z_mat·c`, for columns sharing one norm.
///
/// Solved by a homotopy on `½‖z_mat·c − z_vec‖² + λ‖c‖₁` with `λ` from 1e-2
/// down to 1e-8, warm-starting accelerated proximal gradient at each stage,
/// then refitting exactly on the recovered support. Returns `+∞` when no
/// `c` reaches a residual of 1e-8.
pub fn lemma1_min_l1(z_mat: &Matrix, z_vec: &Matrix) -> Result<f64> {
    if z_vec.cols() != 1 || z_vec.rows() != z_mat.rows() {
        return Err(Error::dims(
            "lemma1_min_l1",
            format!("{}x1 target", z_mat.rows()),
            format!("{:?}", z_vec.shape()),
        ));
    }
    let b = z_vec.column(0);
    let bn = crate::numlin::norm2(&b);
    if bn == 0.0 {
        return Err(Error::InvalidArgument("target vector is zero".into()));
    }
    for (j, cn) in z_mat.column_norms().into_iter().enumerate() {
        if (cn - bn).abs() > 1e-6 * bn {
            return Err(Error::InvalidArgument(format!("column {j} has norm {cn}, target has {bn}")));
        }
    }
    let m = z_mat.cols();
    let lip = crate::numlin::gram_spectral_norm(z_mat)?;
    if lip == 0.0 {
        return Ok(f64::INFINITY);
    }
    let step = 1.0 / lip;
    let atb = z_mat.tr_matmul(z_vec).into_vec();
    let gram = z_mat.tr_matmul(z_mat);
    let objective = |c: &[f64], lam: f64| -> f64 {
        let fit = z_mat.matvec(c);
        0.5 * fit.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>()
            + lam * c.iter().map(|v| v.abs()).sum::<f64>()
    };

    let mut c = vec![0.0; m];
    let mut lam = 1e-2;
    while lam >= 1e-8 * 0.999 {
        // warm-started monotone FISTA
        let mut y = c.clone();
        let mut t = 1.0_f64;
        let mut f = objective(&c, lam);
        for _ in 0..20_000 {
            let g: Vec<f64> = gram.matvec(&y).iter().zip(&atb).map(|(a, b)| a - b).collect();
            let cand: Vec<f64> =
                y.iter().zip(&g).map(|(yi, gi)| soft_threshold(yi - step * gi, step * lam)).collect();
            let fc = objective(&cand, lam);
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let (x_new, f_new) = if fc <= f { (cand.clone(), fc) } else { (c.clone(), f) };
            for i in 0..m {
                y[i] = x_new[i] + (t / t_next) * (cand[i] - x_new[i]) + ((t - 1.0) / t_next) * (x_new[i] - c[i]);
            }
            let done = fc <= f && (f - f_new).abs() <= 1e-15 * f_new.max(f64::MIN_POSITIVE);
            c = x_new;
            f = f_new;
            t = t_next;
            if done {
                break;
            }
        }
        lam /= 10f64.sqrt();
    }

    let residual = |c: &[f64]| -> f64 {
        let fit = z_mat.matvec(c);
        fit.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
    };
    let mut best = f64::INFINITY;
    if residual(&c) <= 1e-8 {
        best = c.iter().map(|v| v.abs()).sum();
    }
    // exact refit on the support
    let cmax = c.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let support: Vec<usize> = (0..m).filter(|&j| cmax > 0.0 && c[j].abs() > 1e-6 * cmax).collect();
    if !support.is_empty() {
        let sub = z_mat.select_columns(&support);
        let sol = pinv(&sub, 1e-12)?.matmul(z_vec);
        let mut full = vec![0.0; m];
        for (t, &j) in support.iter().enumerate() {
            full[j] = sol[(t, 0)];
        }
        if residual(&full) <= 1e-8 {
            best = best.min(full.iter().map(|v| v.abs()).sum());
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColumnReport {
    pub index: usize,
    pub norm_sq: f64,
    /// Nearest ±copy: `(j, sign, ‖Zᵢ − sign·Z_j‖ / √τ)`.
    pub nearest: Option<(usize, f64, f64)>,
    /// `‖Cᵢ‖₁`, the ℓ1 norm of column `i`.
    pub c_l1: f64,
    /// Every significant coefficient in column `i` points at a ±copy of `Zᵢ`.
    pub support_consistent: bool,
    pub passes: bool,
}

#[derive(Debug, Clone)]
pub struct PairingReport {
    pub is_degenerate: bool,
    pub columns: Vec<ColumnReport>,
}

impl PairingReport {
    pub fn failing_columns(&self) -> Vec<usize> {
        self.columns.iter().filter(|c| !c.passes).map(|c| c.index).collect()
    }

    /// Share of columns whose nearest ±copy lies within `gap` (relative to `√τ`).
    pub fn fraction_paired(&self, gap: f64) -> f64 {
        let k = self.columns.iter().filter(|c| c.nearest.is_some_and(|(_, _, g)| g <= gap)).count();
        k as f64 / self.columns.len().max(1) as f64
    }

    /// Share of columns with `‖Cᵢ‖₁ ∈ [lo, hi]`.
    pub fn fraction_l1_in(&self, lo: f64, hi: f64) -> f64 {
        let k = self.columns.iter().filter(|c| c.c_l1 >= lo && c.c_l1 <= hi).count();
        k as f64 / self.columns.len().max(1) as f64
    }
}

/// Checks the pairing structure for embeddings with every `‖Zᵢ‖² ≈ τ`: each
/// column has a ±duplicate within `tol·√τ`, each `‖Cᵢ‖₁ ∈ [1 − tol, 1 + tol]`,
/// and `|C_{ji}| > tol` only where `Z_j = ±Zᵢ` within `tol·√τ`.
pub fn thm4_check(z: &Matrix, c: &SelfExpression, tau: f64, tol: f64) -> Result<PairingReport> {
    let n = z.cols();
    if c.n() != n {
        return Err(Error::dims("thm4_check", format!("C of size {n}"), c.n().to_string()));
    }
    if !(tau > 0.0) || !(tol >= 0.0) {
        return Err(Error::InvalidArgument(format!("need tau > 0 and tol >= 0; got {tau}, {tol}")));
    }
    let cols: Vec<Vec<f64>> = (0..n).map(|j| z.column(j)).collect();
    let st = tau.sqrt();
    let signed_gap = |i: usize, j: usize| -> (f64, f64) {
        let mut best = (f64::INFINITY, 1.0);
        for s in [1.0, -1.0] {
            let g = cols[i].iter().zip(&cols[j]).map(|(a, b)| (a - s * b) * (a - s * b)).sum::<f64>().sqrt();
            if g < best.0 {
                best = (g, s);
            }
        }
        (best.0 / st, best.1)
    };
    let cm = c.matrix();
    let mut columns = Vec::with_capacity(n);
    for i in 0..n {
        let norm_sq = cols[i].iter().map(|v| v * v).sum::<f64>();
        let nearest = (0..n)
            .filter(|&j| j != i)
            .map(|j| {
                let (g, s) = signed_gap(i, j);
                (j, s, g)
            })
            .min_by(|a, b| a.2.total_cmp(&b.2));
        let c_l1: f64 = (0..n).map(|j| cm[(j, i)].abs()).sum();
        let support_consistent = (0..n).filter(|&j| j != i && cm[(j, i)].abs() > tol).all(|j| signed_gap(i, j).0 <= tol);
        let norm_ok = (norm_sq - tau).abs() <= tol * tau;
        let dup_ok = nearest.is_some_and(|(_, _, g)| g <= tol);
        let l1_ok = (c_l1 - 1.0).abs() <= tol;
        columns.push(ColumnReport {
            index: i,
            norm_sq,
            nearest,
            c_l1,
            support_consistent,
            passes: norm_ok && dup_ok && l1_ok && support_consistent,
        });
    }
    let is_degenerate = columns.iter().all(|c| c.passes);
    Ok(PairingReport { is_degenerate, columns })
}

/// Outcome of the two-point collapse test.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoPointReport {
    pub passes: bool,
    /// Indices of the two largest-norm columns.
    pub survivors: (usize, usize),
    /// Largest norm among the remaining columns, relative to the largest norm.
    pub rest_ratio: f64,
    /// `|cos|` of the angle between the two survivors.
    pub cosine: f64,
}

/// Two-point collapse: all but the two largest columns have norm at most
/// `small_ratio` of the largest, and the two survivors satisfy
/// `|cos ∠| ≥ min_cosine`.
pub fn two_point_collapse_check(z: &Matrix, small_ratio: f64, min_cosine: f64) -> Result<TwoPointReport> {
    let n = z.cols();
    if n < 2 {
        return Err(Error::InvalidArgument("need at least two columns".into()));
    }
    let norms = z.column_norms();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]).then(a.cmp(&b)));
    let (i, j) = (order[0], order[1]);
    let top = norms[i];
    if top == 0.0 {
        return Err(Error::InvalidArgument("embedding is identically zero".into()));
    }
    let rest_ratio = order.get(2).map_or(0.0, |&k| norms[k] / top);
    let cosine = if norms[j] == 0.0 {
        0.0
    } else {
        (crate::numlin::dot(&z.column(i), &z.column(j)) / (top * norms[j])).abs()
    };
    Ok(TwoPointReport {
        passes: rest_ratio <= small_ratio && cosine >= min_cosine,
        survivors: (i, j),
        rest_ratio,
        cosine,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegeneracyMetrics {
    /// Share of `Σ‖Zᵢ‖²` carried by the two largest columns.
    pub norm_concentration: f64,
    /// `σ₁² / Σσᵢ²`
    pub top1_sv_ratio: f64,
    /// `minᵢ min_{j≠i, ±} ‖Zᵢ ∓ Z_j‖ / ‖Zᵢ‖`, over nonzero columns `i`.
    pub min_pair_gap: f64,
    /// Share of `‖C‖₁` in the two largest `|C|` entries.
    pub c_top2_mass: f64,
}

impl DegeneracyMetrics {
    /// Placeholder recorded when the metrics are undefined (all-zero `Z`).
    pub const UNDEFINED: DegeneracyMetrics =
        DegeneracyMetrics { norm_concentration: 0.0, top1_sv_ratio: 0.0, min_pair_gap: 0.0, c_top2_mass: 0.0 };
}

fn top2_sum(values: impl Iterator<Item = f64>) -> f64 {
    let (mut a, mut b) = (0.0_f64, 0.0_f64);
    for v in values {
        if v > a {
            b = a;
            a = v;
        } else if v > b {
            b = v;
        }
    }
    a + b
}

pub fn degeneracy_metrics(z: &Matrix, c: &SelfExpression) -> Result<DegeneracyMetrics> {
    let n = z.cols();
    if c.n() != n {
        return Err(Error::dims("degeneracy_metrics", format!("C of size {n}"), c.n().to_string()));
    }
    if n < 2 {
        return Err(Error::InvalidArgument("degeneracy metrics need at least two columns".into()));
    }
    let norms = z.column_norms();
    let total: f64 = norms.iter().map(|v| v * v).sum();
    if total == 0.0 {
        return Err(Error::InvalidArgument("embedding is identically zero".into()));
    }
    let norm_concentration = (top2_sum(norms.iter().map(|v| v * v)) / total).min(1.0);

    let s = svd(z)?.s;
    let s_total: f64 = s.iter().map(|v| v * v).sum();
    let top1_sv_ratio = (s[0] * s[0] / s_total).min(1.0);

    let d = z.rows();
    let zt = z.transpose();
    let mut min_pair_gap = f64::INFINITY;
    for i in 0..n {
        if norms[i] == 0.0 {
            continue;
        }
        let zi = zt.row(i);
        for j in 0..n {
            if j == i {
                continue;
            }
            let zj = zt.row(j);
            let (mut minus, mut plus) = (0.0, 0.0);
            for k in 0..d {
                minus += (zi[k] - zj[k]) * (zi[k] - zj[k]);
                plus += (zi[k] + zj[k]) * (zi[k] + zj[k]);
            }
            min_pair_gap = min_pair_gap.min(minus.min(plus).sqrt() / norms[i]);
        }
    }

    let l1 = c.matrix().l1_norm();
    let c_top2_mass = if l1 == 0.0 {
        0.0
    } else {
        (top2_sum(c.matrix().as_slice().iter().map(|v| v.abs())) / l1).min(1.0)
    };
    Ok(DegeneracyMetrics { norm_concentration, top1_sv_ratio, min_pair_gap, c_top2_mass })
}
