//! One-sided (Hestenes) Jacobi SVD.
//!
//! Column pairs are rotated until every pair is orthogonal to working
//! precision; the column norms are then the singular values. Accurate for
//! small and moderately sized dense matrices and fully deterministic.

use super::matrix::{dot, Matrix};
use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 80;

/// Thin SVD `m = u · diag(s) · vt` with `k = min(rows, cols)` singular triplets.
#[derive(Debug, Clone)]
pub struct SvdResult {
    /// `rows × k`, orthonormal columns.
    pub u: Matrix,
    /// Non-increasing, nonnegative.
    pub s: Vec<f64>,
    /// `k × cols`, orthonormal rows.
    pub vt: Matrix,
}

impl SvdResult {
    pub fn reconstruct(&self) -> Matrix {
        let mut us = self.u.clone();
        for i in 0..us.rows() {
            for (x, s) in us.row_mut(i).iter_mut().zip(&self.s) {
                *x *= s;
            }
        }
        us.matmul(&self.vt)
    }

    /// Largest singular value (0 for an empty spectrum).
    pub fn max_singular(&self) -> f64 {
        self.s.first().copied().unwrap_or(0.0)
    }
}

pub fn svd(m: &Matrix) -> Result<SvdResult> {
    if m.rows() == 0 || m.cols() == 0 {
        return Err(Error::InvalidArgument(format!(
            "svd of empty {}x{} matrix",
            m.rows(),
            m.cols()
        )));
    }
    if !m.is_finite() {
        return Err(Error::NumericalFailure("svd input has non-finite entries".into()));
    }
    if m.rows() >= m.cols() {
        jacobi_tall(m)
    } else {
        // m = (mᵀ)ᵀ = (U S Vᵀ)ᵀ = V S Uᵀ
        let t = jacobi_tall(&m.transpose())?;
        let mut out = SvdResult {
            u: t.vt.transpose(),
            s: t.s,
            vt: t.u.transpose(),
        };
        canonical_signs(&mut out);
        Ok(out)
    }
}

/// Jacobi SVD for `rows >= cols`. Works on columns stored contiguously.
fn jacobi_tall(m: &Matrix) -> Result<SvdResult> {
    let (rows, n) = m.shape();
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| m.column(j)).collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();

    let eps = f64::EPSILON;
    let floor = eps * eps * m.frobenius_norm_sq();
    // Rounding in a length-`rows` dot product is about `rows·eps`.
    let tol = eps * rows as f64;
    let mut converged = n < 2;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let alpha = dot(&cols[p], &cols[p]);
                let beta = dot(&cols[q], &cols[q]);
                let gamma = dot(&cols[p], &cols[q]);
                // Columns at rounding level relative to the whole matrix are
                // left alone; rotating them against each other can cycle.
                if gamma == 0.0 || gamma.abs() <= tol * (alpha * beta).sqrt() || alpha.min(beta) <= floor {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let (lo, hi) = cols.split_at_mut(q);
                rotate(&mut lo[p], &mut hi[0], c, s);
                let (lo, hi) = v.split_at_mut(q);
                rotate(&mut lo[p], &mut hi[0], c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NumericalFailure(format!(
            "Jacobi SVD did not converge within {MAX_SWEEPS} sweeps"
        )));
    }

    let norms: Vec<f64> = cols.iter().map(|c| dot(c, c).sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    // stable: equal singular values keep column order
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]));

    let s: Vec<f64> = order.iter().map(|&j| norms[j]).collect();
    let s_max = s[0];
    let negligible = s_max * 1e-13;

    let mut u_cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut pending = Vec::new();
    for (k, &j) in order.iter().enumerate() {
        if s[k] > negligible && s[k] > 0.0 {
            u_cols.push(cols[j].iter().map(|x| x / s[k]).collect());
        } else {
            u_cols.push(vec![0.0; rows]);
            pending.push(k);
        }
    }
    complete_orthonormal(&mut u_cols, &pending);

    let u = Matrix::from_columns(&u_cols);
    let vt = Matrix::from_fn(n, n, |k, i| v[order[k]][i]);
    let mut out = SvdResult { u, s, vt };
    canonical_signs(&mut out);
    Ok(out)
}

#[inline]
fn rotate(a: &mut [f64], b: &mut [f64], c: f64, s: f64) {
    for (x, y) in a.iter_mut().zip(b.iter_mut()) {
        let (xa, yb) = (*x, *y);
        *x = c * xa - s * yb;
        *y = s * xa + c * yb;
    }
}

/// Fills the listed (zero) columns with unit vectors orthogonal to all other
/// columns, by Gram-Schmidt over the standard basis.
pub(crate) fn complete_orthonormal(cols: &mut [Vec<f64>], pending: &[usize]) {
    if pending.is_empty() {
        return;
    }
    let dim = cols[0].len();
    let mut basis_idx = 0;
    for &k in pending {
        loop {
            assert!(basis_idx < dim, "cannot complete basis");
            let mut cand = vec![0.0; dim];
            cand[basis_idx] = 1.0;
            basis_idx += 1;
            // two passes of modified Gram-Schmidt
            for _ in 0..2 {
                for (j, other) in cols.iter().enumerate() {
                    if j == k || other.iter().all(|&x| x == 0.0) {
                        continue;
                    }
                    let proj = dot(&cand, other);
                    cand.iter_mut().zip(other).for_each(|(c, o)| *c -= proj * o);
                }
            }
            let nrm = dot(&cand, &cand).sqrt();
            if nrm > 1e-8 {
                cols[k] = cand.into_iter().map(|x| x / nrm).collect();
                break;
            }
        }
    }
}

/// Makes the first non-negligible entry of every left singular vector
/// nonnegative, flipping the matching right vector with it.
fn canonical_signs(r: &mut SvdResult) {
    for k in 0..r.s.len() {
        let first = (0..r.u.rows())
            .map(|i| r.u[(i, k)])
            .find(|x| x.abs() > 1e-12)
            .unwrap_or(0.0);
        if first < 0.0 {
            for i in 0..r.u.rows() {
                r.u[(i, k)] = -r.u[(i, k)];
            }
            r.vt.row_mut(k).iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// Smallest singular value, its multiplicity, and an orthonormal basis of the
/// associated left singular subspace.
#[derive(Debug, Clone)]
pub struct SigmaMinSpace {
    pub sigma_min: f64,
    pub multiplicity: usize,
    /// `rows × multiplicity`
    pub basis: Matrix,
}

pub const DEFAULT_MULTIPLICITY_TOL: f64 = 1e-8;

/// Singular values within `tol · s_max` of the smallest one count toward its
/// multiplicity. For tall inputs only the `cols` thin left vectors are
/// considered.
pub fn sigma_min_space(m: &Matrix, tol: f64) -> Result<SigmaMinSpace> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tol must be positive, got {tol}")));
    }
    let r = svd(m)?;
    let sigma_min = *r.s.last().expect("nonempty spectrum");
    let s_max = r.s[0];
    let idx: Vec<usize> = (0..r.s.len())
        .filter(|&k| r.s[k] - sigma_min <= tol * s_max)
        .collect();
    Ok(SigmaMinSpace {
        sigma_min,
        multiplicity: idx.len(),
        basis: r.u.select_columns(&idx),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numlin::Rng;

    fn ortho_err(q: &Matrix) -> f64 {
        q.tr_matmul(q).max_abs_diff(&Matrix::identity(q.cols()))
    }

    #[test]
    fn identity_has_unit_spectrum() {
        let r = svd(&Matrix::identity(3)).unwrap();
        assert_eq!(r.s, vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn diagonal_input_gives_identity_factors() {
        let r = svd(&Matrix::diag(&[3.0, 2.0, 1.0])).unwrap();
        assert_eq!(r.s, vec![3.0, 2.0, 1.0]);
        assert!(r.u.max_abs_diff(&Matrix::identity(3)) < 1e-15);
        assert!(r.vt.max_abs_diff(&Matrix::identity(3)) < 1e-15);
    }

    #[test]
    fn unsorted_diagonal_is_sorted() {
        let r = svd(&Matrix::diag(&[1.0, -5.0, 2.0])).unwrap();
        assert_eq!(r.s, vec![5.0, 2.0, 1.0]);
        assert!(r.reconstruct().max_abs_diff(&Matrix::diag(&[1.0, -5.0, 2.0])) < 1e-15);
    }

    #[test]
    fn random_5x4_seed7_reconstructs() {
        let mut rng = Rng::seed_from(7);
        let m = rng.normal_matrix(5, 4);
        let r = svd(&m).unwrap();
        let rel = (&r.reconstruct() - &m).frobenius_norm() / m.frobenius_norm();
        assert!(rel <= 1e-10, "{rel}");
        assert!(ortho_err(&r.u) <= 1e-10);
        assert!(ortho_err(&r.vt.transpose()) <= 1e-10);
    }

    #[test]
    fn wide_and_rank_deficient_inputs() {
        let mut rng = Rng::seed_from(11);
        let a = rng.normal_matrix(3, 7);
        let r = svd(&a).unwrap();
        assert_eq!(r.u.shape(), (3, 3));
        assert_eq!(r.vt.shape(), (3, 7));
        assert!(r.reconstruct().max_abs_diff(&a) < 1e-12);

        // rank one, 4x4
        let q = [1.0, 2.0, -1.0, 0.5];
        let m = Matrix::from_fn(4, 4, |i, j| q[i] * q[j]);
        let r = svd(&m).unwrap();
        assert!(r.s[1] < 1e-14);
        assert!(ortho_err(&r.u) < 1e-12);
        assert!(r.reconstruct().max_abs_diff(&m) < 1e-12);
    }

    #[test]
    fn zero_matrix_gets_full_orthonormal_basis() {
        let r = svd(&Matrix::zeros(3, 3)).unwrap();
        assert_eq!(r.s, vec![0.0; 3]);
        assert!(ortho_err(&r.u) < 1e-15);
        assert!(ortho_err(&r.vt.transpose()) < 1e-15);
    }

    #[test]
    fn sign_convention_is_canonical() {
        let mut rng = Rng::seed_from(3);
        let m = rng.normal_matrix(6, 6);
        let r = svd(&m).unwrap();
        for k in 0..6 {
            let first = r.u.column(k).into_iter().find(|x| x.abs() > 1e-12).unwrap();
            assert!(first > 0.0);
        }
        // flipping the input sign flips only the right vectors
        let r2 = svd(&m.scale(-1.0)).unwrap();
        assert!(r2.u.max_abs_diff(&r.u) < 1e-12);
        assert!(r2.vt.max_abs_diff(&r.vt.scale(-1.0)) < 1e-12);
    }

    #[test]
    fn rejects_non_finite_and_empty() {
        assert!(svd(&Matrix::zeros(0, 3)).is_err());
        let mut m = Matrix::identity(2);
        m[(0, 1)] = f64::NAN;
        assert!(matches!(svd(&m), Err(Error::NumericalFailure(_))));
    }

    #[test]
    fn sigma_min_space_swap_matrix() {
        // C - I for C = [[0,1],[1,0]]; singular values are 2 and 0 (hand check)
        let m = Matrix::from_rows(&[&[-1.0, 1.0], &[1.0, -1.0]]);
        let s = sigma_min_space(&m, DEFAULT_MULTIPLICITY_TOL).unwrap();
        assert!(s.sigma_min.abs() < 1e-15);
        assert_eq!(s.multiplicity, 1);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((s.basis[(0, 0)] - h).abs() < 1e-14);
        assert!((s.basis[(1, 0)] - h).abs() < 1e-14);
    }

    #[test]
    fn sigma_min_space_zero_and_diagonal() {
        let s = sigma_min_space(&Matrix::zeros(3, 3), DEFAULT_MULTIPLICITY_TOL).unwrap();
        assert_eq!((s.sigma_min, s.multiplicity), (0.0, 3));
        assert!(ortho_err(&s.basis) < 1e-15);

        let s = sigma_min_space(&Matrix::diag(&[2.0, 2.0, 5.0]), DEFAULT_MULTIPLICITY_TOL).unwrap();
        assert_eq!((s.sigma_min, s.multiplicity), (2.0, 2));
        assert_eq!(s.basis.shape(), (3, 2));
        // basis spans e1, e2
        assert!(s.basis.row(2).iter().all(|x| x.abs() < 1e-15));
    }

    #[test]
    fn sigma_min_space_rejects_bad_tol() {
        assert!(sigma_min_space(&Matrix::identity(2), 0.0).is_err());
    }
}
