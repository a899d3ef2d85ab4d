//! Dense linear-algebra kernels: exponentials, Gramians, pole placement,
//! kernels, PSD square roots and the symmetric Stein equation.

mod expm;
mod place;
mod stein;

pub use expm::{exp_integral, matrix_exponential, noise_gramian};
pub use place::{ackermann, place_poles};
pub use stein::{solve_symmetric_stein, VECTORIZE_MAX};

use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;
pub type C64 = Complex<f64>;

/// Rank and residual cutoffs used by every rank-revealing decision.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    /// Relative singular-value cutoff (times the largest singular value).
    pub rank_tol: f64,
    /// Absolute residual bound.
    pub residual_tol: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance { rank_tol: 1e-9, residual_tol: 1e-8 }
    }
}

impl Tolerance {
    pub fn new(rank_tol: f64, residual_tol: f64) -> Result<Self> {
        if !(rank_tol > 0.0 && residual_tol > 0.0) {
            return Err(Error::Config("tolerances must be strictly positive".into()));
        }
        Ok(Tolerance { rank_tol, residual_tol })
    }
}

pub(crate) fn ensure_finite(m: &Matrix, what: &'static str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

pub(crate) fn ensure_square(m: &Matrix, what: &str) -> Result<()> {
    if m.is_square() {
        Ok(())
    } else {
        Err(Error::Dimension(format!("{what} must be square, got {}x{}", m.nrows(), m.ncols())))
    }
}

/// Singular values sorted descending together with the full right singular basis
/// (columns of V, same order). Works for any shape by zero-padding rows.
pub(crate) fn full_svd(m: &Matrix) -> (Vec<f64>, Matrix) {
    let (r, c) = m.shape();
    let padded = if r < c {
        let mut p = Matrix::zeros(c, c);
        p.view_mut((0, 0), (r, c)).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = padded.svd(false, true);
    let vt = svd.v_t.expect("requested V^T");
    let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
    idx.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let sv: Vec<f64> = idx.iter().map(|&i| svd.singular_values[i]).collect();
    let mut v = Matrix::zeros(c, c);
    for (k, &i) in idx.iter().enumerate() {
        v.set_column(k, &vt.row(i).transpose());
    }
    (sv, v)
}

/// Largest singular value; 0 for empty matrices.
pub fn operator_norm(m: &Matrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.max()
}

fn numeric_rank(sv: &[f64], tol: &Tolerance) -> usize {
    let smax = sv.first().copied().unwrap_or(0.0);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > tol.rank_tol * smax).count()
}

pub fn rank(m: &Matrix, tol: &Tolerance) -> usize {
    if m.is_empty() {
        return 0;
    }
    let (sv, _) = full_svd(m);
    numeric_rank(&sv[..m.nrows().min(m.ncols())], tol)
}

/// Flip each column so that its largest-magnitude entry (first one on ties) is negative.
fn canonical_sign(mut b: Matrix) -> Matrix {
    for mut col in b.column_iter_mut() {
        let amax = col.amax();
        if let Some(p) = col.iter().position(|v| v.abs() >= amax * (1.0 - 1e-9)) {
            if col[p] > 0.0 {
                col.neg_mut();
            }
        }
    }
    b
}

/// Orthonormal basis of ker(M) (b×k). Sign convention: each column's pivot entry is negative.
pub fn kernel_base(m: &Matrix, tol: &Tolerance) -> Matrix {
    let b = m.ncols();
    if b == 0 {
        return Matrix::zeros(0, 0);
    }
    if m.nrows() == 0 {
        return canonical_sign(Matrix::identity(b, b));
    }
    let (sv, v) = full_svd(m);
    let r = numeric_rank(&sv[..m.nrows().min(b)], tol);
    canonical_sign(v.columns(r, b - r).into_owned())
}

/// Orthonormal basis of the orthogonal complement of range(B) for B with orthonormal columns.
pub fn orthonormal_complement(b: &Matrix, tol: &Tolerance) -> Matrix {
    kernel_base(&b.transpose(), tol)
}

pub fn psd_sqrt(m: &Matrix, tol: &Tolerance) -> Result<Matrix> {
    ensure_square(m, "psd_sqrt input")?;
    ensure_finite(m, "psd_sqrt input")?;
    let n = m.nrows();
    if n == 0 {
        return Ok(Matrix::zeros(0, 0));
    }
    let scale = 1.0 + operator_norm(m);
    if (m - m.transpose()).amax() > tol.residual_tol * scale {
        return Err(Error::Dimension("psd_sqrt input is not symmetric".into()));
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let lmin = eig.eigenvalues.min();
    if lmin < -tol.rank_tol * scale {
        return Err(Error::Indefinite(lmin));
    }
    let d = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let q = &eig.eigenvectors;
    let s = q * Matrix::from_diagonal(&d) * q.transpose();
    Ok((&s + s.transpose()) * 0.5)
}

pub fn eigenvalues(m: &Matrix) -> Vec<C64> {
    if m.is_empty() {
        return Vec::new();
    }
    m.complex_eigenvalues().iter().copied().collect()
}

pub fn spectral_radius(m: &Matrix) -> f64 {
    eigenvalues(m).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Largest distance between two multisets of complex numbers under greedy nearest matching.
pub fn multiset_distance(a: &[C64], b: &[C64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    let mut used = vec![false; b.len()];
    let mut worst = 0.0_f64;
    for x in a {
        let mut best = (f64::INFINITY, usize::MAX);
        for (j, y) in b.iter().enumerate() {
            if !used[j] && (x - y).norm() < best.0 {
                best = ((x - y).norm(), j);
            }
        }
        used[best.1] = true;
        worst = worst.max(best.0);
    }
    worst
}

/// Block-diagonal assembly of square or rectangular blocks.
pub fn block_diag(blocks: &[Matrix]) -> Matrix {
    let r: usize = blocks.iter().map(|b| b.nrows()).sum();
    let c: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Matrix::zeros(r, c);
    let (mut i, mut j) = (0, 0);
    for b in blocks {
        out.view_mut((i, j), b.shape()).copy_from(b);
        i += b.nrows();
        j += b.ncols();
    }
    out
}

/// Vertical concatenation; all blocks share the column count `cols`.
pub fn vstack(blocks: &[Matrix], cols: usize) -> Matrix {
    let r: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = Matrix::zeros(r, cols);
    let mut i = 0;
    for b in blocks {
        out.view_mut((i, 0), b.shape()).copy_from(b);
        i += b.nrows();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn norm_of_identity_and_diag() {
        assert_eq!(operator_norm(&Matrix::identity(3, 3)), 1.0);
        let d = Matrix::from_diagonal(&Vector::from_vec(vec![3.0, -5.0]));
        assert!((operator_norm(&d) - 5.0).abs() < 1e-14);
    }

    #[test]
    fn kernel_of_identity_is_empty() {
        let k = kernel_base(&Matrix::identity(4, 4), &Tolerance::default());
        assert_eq!(k.shape(), (4, 0));
    }

    #[test]
    fn kernel_of_rank_one() {
        let m = Matrix::from_row_slice(2, 2, &[1.0, 1.0, 2.0, 2.0]);
        let k = kernel_base(&m, &Tolerance::default());
        assert_eq!(k.ncols(), 1);
        let s = 1.0 / 2f64.sqrt();
        assert!((k[(0, 0)].abs() - s).abs() < 1e-12);
        assert!((k[(0, 0)] + k[(1, 0)]).abs() < 1e-12);
    }

    #[test]
    fn kernel_of_wide_matrix() {
        let m = Matrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0]);
        let k = kernel_base(&m, &Tolerance::default());
        assert_eq!(k.shape(), (3, 2));
        assert!((m * &k).amax() < 1e-14);
    }

    #[test]
    fn sqrt_of_diag() {
        let m = Matrix::from_diagonal(&Vector::from_vec(vec![4.0, 9.0]));
        let s = psd_sqrt(&m, &Tolerance::default()).unwrap();
        assert!((s - Matrix::from_diagonal(&Vector::from_vec(vec![2.0, 3.0]))).amax() < 1e-14);
        let i = psd_sqrt(&Matrix::identity(3, 3), &Tolerance::default()).unwrap();
        assert!((i - Matrix::identity(3, 3)).amax() < 1e-15);
    }

    #[test]
    fn sqrt_rejects_indefinite() {
        let m = Matrix::from_diagonal(&Vector::from_vec(vec![1.0, -1.0]));
        assert!(matches!(psd_sqrt(&m, &Tolerance::default()), Err(Error::Indefinite(_))));
    }

    #[test]
    fn rank_cutoff_is_relative() {
        let m = Matrix::from_diagonal(&Vector::from_vec(vec![1e3, 1e-4, 1e-5]));
        assert_eq!(rank(&m, &Tolerance::default()), 3);
        let m = Matrix::from_diagonal(&Vector::from_vec(vec![1e3, 1e-4, 1e-13]));
        assert_eq!(rank(&m, &Tolerance::default()), 2);
    }
}
