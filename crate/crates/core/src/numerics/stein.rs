use super::{ensure_finite, ensure_square, operator_norm, spectral_radius, Matrix, Tolerance};
use crate::error::{Error, Result};

/// Above this size the Kronecker system gets too large; switch to doubling.
pub const VECTORIZE_MAX: usize = 60;

fn vectorized(s: &Matrix, psi: &Matrix) -> Option<Matrix> {
    let n = s.nrows();
    let kron = s.kronecker(s) - Matrix::identity(n * n, n * n);
    let rhs = -nalgebra::DVector::from_column_slice(psi.as_slice());
    let w = kron.lu().solve(&rhs)?;
    Some(Matrix::from_column_slice(n, n, w.as_slice()))
}

fn doubling(s: &Matrix, psi: &Matrix) -> Matrix {
    // W = Σ S^k Ψ S^k accumulated in squared chunks
    let mut w = psi.clone();
    let mut sk = s.clone();
    for _ in 0..64 {
        let inc = &sk * &w * &sk;
        w += &inc;
        sk = &sk * &sk;
        if operator_norm(&sk) < 1e-18 || inc.amax() <= 1e-17 * w.amax() {
            break;
        }
    }
    w
}

/// Solves S W S − W + Ψ = 0 for symmetric S with spectral radius below one.
pub fn solve_symmetric_stein(s: &Matrix, psi: &Matrix, tol: &Tolerance) -> Result<Matrix> {
    ensure_square(s, "Stein coefficient")?;
    ensure_square(psi, "Stein forcing")?;
    ensure_finite(s, "Stein coefficient")?;
    ensure_finite(psi, "Stein forcing")?;
    if s.nrows() != psi.nrows() {
        return Err(Error::Dimension("Stein coefficient and forcing differ in size".into()));
    }
    let n = s.nrows();
    if n == 0 {
        return Ok(Matrix::zeros(0, 0));
    }
    let rho = spectral_radius(s);
    if rho >= 1.0 {
        return Err(Error::Unstable(rho));
    }
    let w = if n <= VECTORIZE_MAX {
        vectorized(s, psi).ok_or(Error::Singular("Stein vectorization"))?
    } else {
        doubling(s, psi)
    };
    let w = (&w + w.transpose()) * 0.5;
    let resid = (s * &w * s - &w + psi).amax();
    let bound = tol.residual_tol * (1.0 + operator_norm(psi));
    if resid > bound {
        return Err(Error::Model(format!("Stein residual {resid:.2e} exceeds {bound:.2e}")));
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_identity() {
        let w = solve_symmetric_stein(&(Matrix::identity(2, 2) * 0.5), &Matrix::identity(2, 2), &Tolerance::default()).unwrap();
        assert!((w - Matrix::identity(2, 2) * (4.0 / 3.0)).amax() < 1e-14);
    }

    #[test]
    fn zero_coefficient_returns_forcing() {
        let psi = Matrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let w = solve_symmetric_stein(&Matrix::zeros(2, 2), &psi, &Tolerance::default()).unwrap();
        assert!((w - psi).amax() < 1e-15);
    }

    #[test]
    fn unstable_is_rejected() {
        let r = solve_symmetric_stein(&Matrix::identity(2, 2), &Matrix::identity(2, 2), &Tolerance::default());
        assert!(matches!(r, Err(Error::Unstable(_))));
    }

    #[test]
    fn doubling_matches_vectorized() {
        let s = Matrix::from_row_slice(3, 3, &[0.5, 0.1, 0.0, 0.1, -0.3, 0.2, 0.0, 0.2, 0.6]);
        let psi = Matrix::from_row_slice(3, 3, &[1.0, 0.2, 0.1, 0.2, 2.0, 0.0, 0.1, 0.0, 0.5]);
        let a = vectorized(&s, &psi).unwrap();
        let b = doubling(&s, &psi);
        assert!((a - b).amax() < 1e-12);
    }
}
