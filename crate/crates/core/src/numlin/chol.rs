use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Solves `a · x = b` for symmetric positive definite `a` by Cholesky
/// factorization. `b` may have several right-hand-side columns.
pub fn solve_spd(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    let n = a.rows();
    if !a.is_square() || b.rows() != n {
        return Err(Error::dims(
            "solve_spd",
            format!("square a and b with {} rows", a.rows()),
            format!("a {:?}, b {:?}", a.shape(), b.shape()),
        ));
    }
    if !a.is_symmetric(1e-12) {
        return Err(Error::InvalidArgument("solve_spd: matrix is not symmetric".into()));
    }

    // lower-triangular factor, row-major
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) {
            return Err(Error::NotPositiveDefinite { row: j, pivot: d });
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }

    let mut x = b.clone();
    for col in 0..b.cols() {
        // L y = b
        for i in 0..n {
            let mut s = x[(i, col)];
            for k in 0..i {
                s -= l[(i, k)] * x[(k, col)];
            }
            x[(i, col)] = s / l[(i, i)];
        }
        // Lᵀ x = y
        for i in (0..n).rev() {
            let mut s = x[(i, col)];
            for k in (i + 1)..n {
                s -= l[(k, i)] * x[(k, col)];
            }
            x[(i, col)] = s / l[(i, i)];
        }
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numlin::Rng;

    #[test]
    fn identity_returns_rhs() {
        let b = Matrix::from_rows(&[&[1.0, -2.0], &[3.5, 0.25], &[7.0, 1e-3]]);
        assert_eq!(solve_spd(&Matrix::identity(3), &b).unwrap(), b);
    }

    #[test]
    fn scaled_identity() {
        let x = solve_spd(&Matrix::identity(4).scale(2.0), &Matrix::identity(4)).unwrap();
        assert!(x.max_abs_diff(&Matrix::identity(4).scale(0.5)) < 1e-15);
    }

    #[test]
    fn random_spd_residual() {
        let mut rng = Rng::seed_from(5);
        let g = rng.normal_matrix(6, 6);
        let a = &g.tr_matmul(&g) + &Matrix::identity(6).scale(0.1);
        let b = rng.normal_matrix(6, 3);
        let x = solve_spd(&a, &b).unwrap();
        let res = (&a.matmul(&x) - &b).frobenius_norm() / b.frobenius_norm();
        assert!(res <= 1e-9, "{res}");
    }

    #[test]
    fn indefinite_is_detected() {
        let a = Matrix::from_rows(&[&[1.0, 2.0], &[2.0, 1.0]]);
        assert!(matches!(
            solve_spd(&a, &Matrix::identity(2)),
            Err(Error::NotPositiveDefinite { row: 1, .. })
        ));
    }
}
