use super::{ensure_finite, ensure_square, Matrix};
use crate::error::{Error, Result};

// Padé(13) coefficients and the matching theta for scaling and squaring.
const B13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

fn norm1(m: &Matrix) -> f64 {
    m.column_iter().map(|c| c.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

fn expm_raw(a: &Matrix) -> Matrix {
    let n = a.nrows();
    let nrm = norm1(a);
    let s = if nrm > THETA13 { (nrm / THETA13).log2().ceil() as i32 } else { 0 };
    let a = a / 2f64.powi(s);
    let id = Matrix::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a2 * &a4;
    let b = &B13;
    let u_inner = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9]) + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &id * b[1];
    let u = &a * u_inner;
    let v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8]) + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &id * b[0];
    let p = &v + &u;
    let q = &v - &u;
    let mut r = q.lu().solve(&p).expect("Padé denominator is nonsingular for scaled input");
    for _ in 0..s {
        r = &r * &r;
    }
    r
}

/// e^{At} by Padé(13) scaling and squaring.
pub fn matrix_exponential(a: &Matrix, t: f64) -> Result<Matrix> {
    ensure_square(a, "matrix_exponential input")?;
    ensure_finite(a, "matrix_exponential input")?;
    if !t.is_finite() {
        return Err(Error::NonFinite("matrix_exponential time"));
    }
    if a.nrows() == 0 {
        return Ok(Matrix::zeros(0, 0));
    }
    Ok(expm_raw(&(a * t)))
}

/// ∫₀^t e^{As} ds, read off the augmented exponential of [[A, I], [0, 0]].
pub fn exp_integral(a: &Matrix, t: f64) -> Result<Matrix> {
    ensure_square(a, "exp_integral input")?;
    let n = a.nrows();
    let mut h = Matrix::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(a);
    h.view_mut((0, n), (n, n)).fill_with_identity();
    let e = matrix_exponential(&h, t)?;
    Ok(e.view((0, n), (n, n)).into_owned())
}

/// V = ∫₀^τ e^{Ac μ} N Nᵀ e^{Acᵀ μ} dμ via Van Loan's block exponential.
pub fn noise_gramian(ac: &Matrix, n: &Matrix, tau: f64) -> Result<Matrix> {
    ensure_square(ac, "gramian drift")?;
    if ac.nrows() != n.nrows() {
        return Err(Error::Dimension(format!(
            "gramian drift is {}x{} but diffusion has {} rows",
            ac.nrows(),
            ac.ncols(),
            n.nrows()
        )));
    }
    if !(tau > 0.0) {
        return Err(Error::Config(format!("gramian horizon must be positive, got {tau}")));
    }
    ensure_finite(n, "gramian diffusion")?;
    let p = ac.nrows();
    if p == 0 {
        return Ok(Matrix::zeros(0, 0));
    }
    let mut h = Matrix::zeros(2 * p, 2 * p);
    h.view_mut((0, 0), (p, p)).copy_from(&(-ac));
    h.view_mut((0, p), (p, p)).copy_from(&(n * n.transpose()));
    h.view_mut((p, p), (p, p)).copy_from(&ac.transpose());
    let e = matrix_exponential(&h, tau)?;
    let f12 = e.view((0, p), (p, p));
    let f22 = e.view((p, p), (p, p));
    let v = f22.transpose() * f12;
    Ok((&v + v.transpose()) * 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    #[test]
    fn exp_of_zero_is_identity() {
        let e = matrix_exponential(&Matrix::zeros(3, 3), 7.5).unwrap();
        assert_eq!(e, Matrix::identity(3, 3));
    }

    #[test]
    fn exp_of_diagonal() {
        let a = Matrix::from_diagonal(&DVector::from_vec(vec![-1.0, -2.0]));
        let e = matrix_exponential(&a, 1.0).unwrap();
        assert!((e[(0, 0)] - (-1f64).exp()).abs() < 1e-15);
        assert!((e[(1, 1)] - (-2f64).exp()).abs() < 1e-15);
        assert_eq!(e[(0, 1)], 0.0);
    }

    #[test]
    fn exp_rejects_bad_input() {
        assert!(matrix_exponential(&Matrix::zeros(2, 3), 1.0).is_err());
        let mut a = Matrix::zeros(2, 2);
        a[(0, 1)] = f64::NAN;
        assert!(matrix_exponential(&a, 1.0).is_err());
    }

    #[test]
    fn large_norm_rotation() {
        // exp of a skew matrix is a rotation; needs many squarings
        let w = 40.0;
        let a = Matrix::from_row_slice(2, 2, &[0.0, -w, w, 0.0]);
        let e = matrix_exponential(&a, 1.0).unwrap();
        assert!((e[(0, 0)] - w.cos()).abs() < 1e-11);
        assert!((e[(1, 0)] - w.sin()).abs() < 1e-11);
    }

    #[test]
    fn scalar_gramian_closed_form() {
        let (a, c, tau) = (1.7, 0.3, 0.8);
        let v = noise_gramian(&Matrix::from_element(1, 1, -a), &Matrix::from_element(1, 1, c), tau).unwrap();
        let exact = c * c * (1.0 - (-2.0 * a * tau).exp()) / (2.0 * a);
        assert!((v[(0, 0)] - exact).abs() < 1e-15);
    }

    #[test]
    fn zero_noise_gramian() {
        let ac = Matrix::from_row_slice(2, 2, &[-1.0, 2.0, 0.0, -3.0]);
        let v = noise_gramian(&ac, &Matrix::zeros(2, 1), 1.0).unwrap();
        assert_eq!(v.amax(), 0.0);
        assert!(noise_gramian(&ac, &Matrix::zeros(3, 1), 1.0).is_err());
    }

    #[test]
    fn exp_integral_scalar() {
        let i = exp_integral(&Matrix::from_element(1, 1, -2.0), 0.5).unwrap();
        assert!((i[(0, 0)] - (1.0 - (-1f64).exp()) / 2.0).abs() < 1e-15);
    }
}
