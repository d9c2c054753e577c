//! Dense linear algebra kernel: matrix arithmetic, SVD, symmetric
//! eigendecomposition, SPD solves and a seeded RNG.
//!
//! Sized for matrices up to a few hundred rows and columns. Everything here
//! is pure and deterministic for a given input.

mod chol;
mod eig;
mod matrix;
mod rng;
mod svd;

pub use chol::solve_spd;
pub use eig::{sym_eig, SymEig};
pub use matrix::{dot, norm2, Matrix};
pub use rng::Rng;
pub use svd::{sigma_min_space, svd, SigmaMinSpace, SvdResult, DEFAULT_MULTIPLICITY_TOL};

/// Largest eigenvalue of `zᵀz`, i.e. `σ_max(z)²`.
pub fn gram_spectral_norm(z: &Matrix) -> crate::Result<f64> {
    let s = svd(z)?.max_singular();
    Ok(s * s)
}

/// Moore-Penrose pseudo-inverse via SVD, treating singular values below
/// `rcond · s_max` as zero.
pub fn pinv(m: &Matrix, rcond: f64) -> crate::Result<Matrix> {
    let r = svd(m)?;
    let cut = rcond * r.max_singular();
    let k = r.s.len();
    // V · diag(1/s) · Uᵀ
    let mut v_scaled = r.vt.transpose();
    for i in 0..v_scaled.rows() {
        for j in 0..k {
            let s = r.s[j];
            v_scaled[(i, j)] = if s > cut && s > 0.0 { v_scaled[(i, j)] / s } else { 0.0 };
        }
    }
    Ok(v_scaled.matmul_tr(&r.u))
}
