//! Small dense linear-algebra helpers shared across the crate.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Condition number above which a matrix is treated as numerically singular.
pub const SINGULAR_COND: f64 = 1e12;

/// Relative term size at which the phi-function series is truncated.
const SERIES_TOL: f64 = 1e-14;

/// Matrix exponential `e^A` (scaling-and-squaring with Padé approximation).
pub fn expm(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let m = a.clone().exp();
    if m.iter().all(|v| v.is_finite()) {
        Ok(m)
    } else {
        Err(Error::numerical(
            "matrix exponential produced non-finite entries",
        ))
    }
}

/// Two-norm condition number estimate from singular values.
pub fn condition_number(a: &DMatrix<f64>) -> f64 {
    let sv = a.clone().singular_values();
    let max = sv.max();
    let min = sv.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Computes `(e^{A dt}, Γ)` where `Γ = A^{-1}(e^{A dt} - I)`.
///
/// For a well-conditioned `A` the inverse route is used; otherwise `Γ` is
/// evaluated through the everywhere-convergent series
/// `Γ = dt Σ_{k≥0} (A dt)^k / (k+1)!`, truncated once terms fall below
/// `1e-14` relative size. Both routes agree for invertible `A`.
pub fn exp_and_phi(a: &DMatrix<f64>, dt: f64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if dt <= 0.0 {
        return Err(Error::invalid("dt must be positive"));
    }
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::dims("exp_and_phi requires a square matrix"));
    }
    let m = expm(&(a * dt))?;
    let gamma = if condition_number(a) < SINGULAR_COND {
        let lu = a.clone().lu();
        let rhs = &m - DMatrix::<f64>::identity(n, n);
        lu.solve(&rhs)
            .ok_or_else(|| Error::numerical("LU solve failed in exp_and_phi"))?
    } else {
        phi_series(a, dt)
    };
    if gamma.iter().all(|v| v.is_finite()) {
        Ok((m, gamma))
    } else {
        Err(Error::numerical("phi function produced non-finite entries"))
    }
}

fn phi_series(a: &DMatrix<f64>, dt: f64) -> DMatrix<f64> {
    let n = a.nrows();
    let adt = a * dt;
    let mut term = DMatrix::<f64>::identity(n, n);
    let mut sum = term.clone();
    // term_k = (A dt)^k / (k+1)!
    for k in 1..200 {
        term = (&adt * &term) / (k as f64 + 1.0);
        sum += &term;
        if term.norm() <= SERIES_TOL * sum.norm() {
            break;
        }
    }
    sum * dt
}

/// `0.5 (M + Mᵀ)`, used to keep covariance recursions symmetric.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    0.5 * (m + m.transpose())
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_symmetric_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone().symmetric_eigenvalues().min()
}

/// `ln det M` for symmetric positive definite `M`, via Cholesky.
pub fn log_det_spd(m: &DMatrix<f64>) -> Result<f64> {
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::numerical("matrix is not positive definite"))?;
    let l = chol.l();
    let mut acc = 0.0;
    for i in 0..m.nrows() {
        acc += l[(i, i)].ln();
    }
    Ok(2.0 * acc)
}

/// Spectral radius (largest eigenvalue modulus) of a real square matrix.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .complex_eigenvalues()
        .iter()
        .map(|c| c.norm())
        .fold(0.0, f64::max)
}

/// True when every entry of the matrix is finite.
pub fn all_finite(m: &DMatrix<f64>) -> bool {
    m.iter().all(|v| v.is_finite())
}

/// True when every entry of the vector is finite.
pub fn vec_all_finite(v: &DVector<f64>) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Checks that `m` is symmetric positive definite (within `tol` asymmetry).
pub fn is_spd(m: &DMatrix<f64>, tol: f64) -> bool {
    if m.nrows() != m.ncols() {
        return false;
    }
    let asym = (m - m.transpose()).norm();
    if asym > tol * (1.0 + m.norm()) {
        return false;
    }
    m.clone().cholesky().is_some()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn expm_matches_scalar_exponential() {
        let a = DMatrix::from_row_slice(2, 2, &[-0.3, 0.0, 0.0, 0.7]);
        let m = expm(&a).unwrap();
        assert_relative_eq!(m[(0, 0)], (-0.3f64).exp(), max_relative = 1e-14);
        assert_relative_eq!(m[(1, 1)], 0.7f64.exp(), max_relative = 1e-14);
        assert_eq!(m[(0, 1)], 0.0);
    }

    #[test]
    fn phi_series_handles_nilpotent_matrix() {
        // A = [[0,1],[0,0]] is singular; Γ = dt (I + A dt / 2) exactly.
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let dt = 0.25;
        let (_, gamma) = exp_and_phi(&a, dt).unwrap();
        assert_relative_eq!(gamma[(0, 0)], dt, max_relative = 1e-14);
        assert_relative_eq!(gamma[(0, 1)], dt * dt / 2.0, max_relative = 1e-14);
        assert_relative_eq!(gamma[(1, 1)], dt, max_relative = 1e-14);
        assert_eq!(gamma[(1, 0)], 0.0);
    }

    #[test]
    fn inverse_and_series_phi_agree() {
        let a = DMatrix::from_row_slice(2, 2, &[-1.2, 0.4, -0.3, -0.8]);
        let dt = 0.1;
        let (_, gamma) = exp_and_phi(&a, dt).unwrap();
        let series = phi_series(&a, dt);
        assert!((gamma - series).norm() < 1e-12);
    }

    #[test]
    fn log_det_spd_matches_diagonal() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0, 4.0]));
        assert_relative_eq!(log_det_spd(&m).unwrap(), 24.0f64.ln(), max_relative = 1e-12);
    }

    #[test]
    fn spectral_radius_of_rotation_like_matrix() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, -0.5, 0.5, 0.0]);
        assert_relative_eq!(spectral_radius(&m), 0.5, max_relative = 1e-12);
    }
}
