//! Cyclic Jacobi eigensolver for real symmetric matrices.

use super::matrix::Matrix;
use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 100;

#[derive(Debug, Clone)]
pub struct SymEig {
    /// Ascending.
    pub values: Vec<f64>,
    /// Column `k` is the unit eigenvector for `values[k]`.
    pub vectors: Matrix,
}

pub fn sym_eig(a: &Matrix) -> Result<SymEig> {
    if !a.is_square() || a.rows() == 0 {
        return Err(Error::dims("sym_eig", "nonempty square matrix", format!("{:?}", a.shape())));
    }
    if !a.is_finite() {
        return Err(Error::NumericalFailure("sym_eig input has non-finite entries".into()));
    }
    if !a.is_symmetric(1e-10) {
        return Err(Error::InvalidArgument("sym_eig input is not symmetric".into()));
    }
    let n = a.rows();
    let mut m = a.clone();
    let mut v = Matrix::identity(n);

    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum();
        let total = m.frobenius_norm_sq();
        if off <= f64::EPSILON * f64::EPSILON * total || off == 0.0 {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // A ← Jᵀ A J, touching rows/cols p and q
                for k in 0..n {
                    let akp = m[(k, p)];
                    let akq = m[(k, q)];
                    m[(k, p)] = c * akp - s * akq;
                    m[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = m[(p, k)];
                    let aqk = m[(q, k)];
                    m[(p, k)] = c * apk - s * aqk;
                    m[(q, k)] = s * apk + c * aqk;
                }
                m[(p, q)] = 0.0;
                m[(q, p)] = 0.0;
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    if !converged {
        return Err(Error::NumericalFailure(format!(
            "Jacobi eigensolver did not converge within {MAX_SWEEPS} sweeps"
        )));
    }

    let diag = m.diagonal();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| diag[a].total_cmp(&diag[b]));
    let values = order.iter().map(|&k| diag[k]).collect();
    let mut vectors = v.select_columns(&order);
    for k in 0..n {
        let first = (0..n).map(|i| vectors[(i, k)]).find(|x| x.abs() > 1e-12).unwrap_or(0.0);
        if first < 0.0 {
            for i in 0..n {
                vectors[(i, k)] = -vectors[(i, k)];
            }
        }
    }
    Ok(SymEig { values, vectors })
}
