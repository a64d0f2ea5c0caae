//! Small dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

pub fn zeros(n: usize) -> Vector {
    Vector::zeros(n)
}

pub fn vector(values: &[f64]) -> Vector {
    Vector::from_column_slice(values)
}

/// Row-major constructor, which reads better in tests than nalgebra's column-major slice.
pub fn matrix(rows: usize, cols: usize, row_major: &[f64]) -> Matrix {
    Matrix::from_row_slice(rows, cols, row_major)
}

pub fn expm(a: &Matrix) -> Matrix {
    a.clone().exp()
}

/// `φ₁(A) b = Σ_k A^k b / (k+1)!`, i.e. `A⁻¹(e^A − I) b` extended continuously to singular `A`.
///
/// Read off the top-right block of the exponential of the augmented matrix `[[A, b], [0, 0]]`.
pub fn phi1_apply(a: &Matrix, b: &Vector) -> Vector {
    let n = a.nrows();
    let mut aug = Matrix::zeros(n + 1, n + 1);
    aug.view_mut((0, 0), (n, n)).copy_from(a);
    aug.view_mut((0, n), (n, 1)).copy_from(b);
    let e = aug.exp();
    e.view((0, n), (n, 1)).column(0).into_owned()
}

/// Moore-Penrose pseudo-inverse with singular values below `rel_tol * σ_max` discarded.
pub fn pinv(a: &Matrix, rel_tol: f64) -> Matrix {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0_f64, f64::max);
    let eps = (rel_tol * smax).max(f64::MIN_POSITIVE);
    svd.pseudo_inverse(eps).unwrap_or_else(|_| Matrix::zeros(a.ncols(), a.nrows()))
}

/// Solves `a x = b` by LU; fails when `a` is numerically singular.
pub fn solve(a: &Matrix, b: &Vector, t: f64) -> Result<Vector> {
    let lu = a.clone().lu();
    if lu.determinant().abs() < 1e-300 {
        return Err(Error::Singular { t });
    }
    lu.solve(b).ok_or(Error::Singular { t })
}

pub fn max_abs(v: &Vector) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

pub fn is_finite(v: &Vector) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Central-difference Jacobian of `f` at `x` with step `h`.
pub fn fd_jacobian(f: &dyn Fn(&Vector) -> Vector, x: &Vector, h: f64) -> Matrix {
    let n = x.len();
    let m = f(x).len();
    let mut jac = Matrix::zeros(m, n);
    for j in 0..n {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += h;
        xm[j] -= h;
        let col = (f(&xp) - f(&xm)) / (2.0 * h);
        jac.set_column(j, &col);
    }
    jac
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phi1_matches_inverse_formula_for_invertible_matrix() {
        let a = matrix(2, 2, &[-0.3, 0.2, 0.1, 0.4]);
        let b = vector(&[1.0, -2.0]);
        let direct = a.clone().try_inverse().unwrap() * (expm(&a) - Matrix::identity(2, 2)) * &b;
        assert!((phi1_apply(&a, &b) - direct).norm() < 1e-12);
    }

    #[test]
    fn phi1_of_zero_is_identity() {
        let b = vector(&[0.5, 3.0]);
        assert!((phi1_apply(&Matrix::zeros(2, 2), &b) - &b).norm() < 1e-15);
    }

    #[test]
    fn phi1_of_nilpotent_truncates_series() {
        // N² = 0 so φ₁(N) = I + N/2.
        let n = matrix(2, 2, &[0.0, 0.0, 0.7, 0.0]);
        let b = vector(&[2.0, 1.0]);
        let expected = &b + &n * &b * 0.5;
        assert!((phi1_apply(&n, &b) - expected).norm() < 1e-14);
    }

    #[test]
    fn expm_of_nilpotent_is_exact() {
        let n = matrix(2, 2, &[0.0, 0.0, 1.3, 0.0]);
        let e = expm(&n);
        assert!((e - matrix(2, 2, &[1.0, 0.0, 1.3, 1.0])).norm() < 1e-14);
    }

    #[test]
    fn pinv_inverts_regular_and_drops_null_directions() {
        let a = matrix(2, 2, &[2.0, 0.0, 0.0, 4.0]);
        assert!((pinv(&a, 1e-12) - matrix(2, 2, &[0.5, 0.0, 0.0, 0.25])).norm() < 1e-14);
        let s = matrix(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert!((pinv(&s, 1e-12) - s).norm() < 1e-14);
    }
}
