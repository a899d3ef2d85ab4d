//! Pole placement for observer gains.
//!
//! Multi-output pairs use the Kautsky–Nichols–Van Dooren eigenvector
//! assignment (orthogonalisation sweeps, complex arithmetic with
//! conjugate columns tied together). Single-output pairs use Ackermann.

use nalgebra::DMatrix;

use super::{eigenvalues, ensure_finite, ensure_square, multiset_distance, orthonormal_complement, Matrix, Tolerance, C64};
use crate::error::{Error, Result};

type CMatrix = DMatrix<C64>;

const CONJ_TOL: f64 = 1e-9;
const SWEEPS: usize = 60;

fn check_self_conjugate(poles: &[C64]) -> Result<()> {
    for p in poles.iter().filter(|p| p.im.abs() > CONJ_TOL) {
        let want = p.conj();
        let n_p = poles.iter().filter(|q| (*q - p).norm() <= CONJ_TOL).count();
        let n_c = poles.iter().filter(|q| (*q - want).norm() <= CONJ_TOL).count();
        if n_p != n_c {
            return Err(Error::Placement(format!("pole {p} has no conjugate partner")));
        }
    }
    Ok(())
}

fn controllability(a: &Matrix, b: &Matrix) -> Matrix {
    let n = a.nrows();
    let m = b.ncols();
    let mut out = Matrix::zeros(n, n * m);
    let mut blk = b.clone();
    for k in 0..n {
        out.view_mut((0, k * m), (n, m)).copy_from(&blk);
        blk = a * blk;
    }
    out
}

/// Real coefficients c₀..c_n (monic) of Π (s − λ).
fn char_poly(poles: &[C64]) -> Vec<f64> {
    let mut c = vec![C64::new(1.0, 0.0)];
    for &l in poles {
        let mut next = vec![C64::new(0.0, 0.0); c.len() + 1];
        for (k, &ck) in c.iter().enumerate() {
            next[k + 1] += ck;
            next[k] -= ck * l;
        }
        c = next;
    }
    c.iter().map(|z| z.re).collect()
}

/// Single-input state feedback k (1×n) with eig(A − b k) = poles.
pub fn ackermann(a: &Matrix, b: &Matrix, poles: &[C64]) -> Result<Matrix> {
    let n = a.nrows();
    if b.shape() != (n, 1) || poles.len() != n {
        return Err(Error::Dimension("ackermann needs an n×1 input and n poles".into()));
    }
    let ctrb = controllability(a, b);
    let coeffs = char_poly(poles);
    let mut phi = Matrix::identity(n, n) * coeffs[n];
    for k in (0..n).rev() {
        phi = a * phi + Matrix::identity(n, n) * coeffs[k];
    }
    let mut en = Matrix::zeros(n, 1);
    en[(n - 1, 0)] = 1.0;
    let w = ctrb
        .transpose()
        .lu()
        .solve(&en)
        .ok_or(Error::Unobservable { rank: super::rank(&ctrb, &Tolerance::default()), n })?;
    Ok(w.transpose() * phi)
}

fn complex_null(m: &CMatrix) -> CMatrix {
    let (r, c) = m.shape();
    if r == 0 {
        return CMatrix::identity(c, c);
    }
    let mut padded = CMatrix::zeros(r.max(c), c);
    padded.view_mut((0, 0), (r, c)).copy_from(m);
    let svd = padded.svd(false, true);
    let vt = svd.v_t.expect("requested V^H");
    let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
    idx.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let smax = svd.singular_values.max();
    let rank = idx.iter().filter(|&&i| svd.singular_values[i] > 1e-12 * smax.max(1e-300)).count().min(r);
    let mut out = CMatrix::zeros(c, c - rank);
    for (k, &i) in idx[rank..].iter().enumerate() {
        out.set_column(k, &vt.row(i).adjoint());
    }
    out
}

/// Real matrix with the given (self-conjugate) spectrum: 2×2 rotation blocks for pairs.
fn real_companion_blocks(poles: &[C64]) -> Matrix {
    let n = poles.len();
    let mut m = Matrix::zeros(n, n);
    let mut used = vec![false; n];
    let mut k = 0;
    for j in 0..n {
        if used[j] {
            continue;
        }
        used[j] = true;
        let z = poles[j];
        if z.im.abs() <= CONJ_TOL {
            m[(k, k)] = z.re;
            k += 1;
        } else {
            if let Some(q) = (0..n).find(|&q| !used[q] && (poles[q] - z.conj()).norm() <= CONJ_TOL) {
                used[q] = true;
            }
            m[(k, k)] = z.re;
            m[(k + 1, k + 1)] = z.re;
            m[(k, k + 1)] = z.im;
            m[(k + 1, k)] = -z.im;
            k += 2;
        }
    }
    m
}

fn knv(a: &Matrix, u0: &Matrix, poles: &[C64]) -> Result<Matrix> {
    let n = a.nrows();
    let m = u0.ncols();
    if m == n {
        // full input rank: any closed-loop matrix is reachable
        return Ok(u0.transpose() * (a - real_companion_blocks(poles)));
    }
    let tol = Tolerance::default();
    let u1 = orthonormal_complement(u0, &tol);
    let ac = a.map(|v| C64::new(v, 0.0));
    let u1h = u1.transpose().map(|v| C64::new(v, 0.0));

    // partner[j] = index of the conjugate column for complex poles
    let mut partner: Vec<Option<usize>> = vec![None; n];
    let mut taken = vec![false; n];
    for j in 0..n {
        if taken[j] || poles[j].im.abs() <= CONJ_TOL {
            continue;
        }
        let q = (0..n)
            .find(|&q| q != j && !taken[q] && (poles[q] - poles[j].conj()).norm() <= CONJ_TOL)
            .ok_or_else(|| Error::Placement(format!("pole {} has no conjugate partner", poles[j])))?;
        partner[j] = Some(q);
        partner[q] = Some(j);
        taken[j] = true;
        taken[q] = true;
    }

    let mut bases = Vec::with_capacity(n);
    let mut x = CMatrix::zeros(n, n);
    for j in 0..n {
        let l = poles[j];
        let shifted = &ac - CMatrix::identity(n, n) * l;
        let s = complex_null(&(&u1h * shifted));
        if s.ncols() == 0 {
            return Err(Error::Placement(format!("no admissible eigenvector for pole {l}")));
        }
        let occurrence = (0..j).filter(|&q| (poles[q] - l).norm() <= CONJ_TOL).count();
        if occurrence >= s.ncols() {
            return Err(Error::Placement(format!(
                "pole {l} requested {} times but at most {} can be assigned with {m} outputs",
                occurrence + 1,
                s.ncols()
            )));
        }
        // start from the projection of e_j so coinciding subspaces still give independent columns
        let proj = &s * s.row(j).adjoint();
        let start = if proj.norm() > 1e-6 { proj.normalize() } else { s.column(occurrence).into_owned() };
        x.set_column(j, &start);
        bases.push(s);
    }
    for (j, p) in partner.iter().enumerate() {
        if let Some(q) = *p {
            if q < j {
                let c = x.column(q).map(|z| z.conj());
                x.set_column(j, &c);
            }
        }
    }

    for _ in 0..SWEEPS {
        let mut moved = 0.0_f64;
        for j in 0..n {
            if matches!(partner[j], Some(q) if q < j) {
                continue;
            }
            let mut others = CMatrix::zeros(n, n - 1);
            for (k, c) in (0..n).filter(|&c| c != j).enumerate() {
                others.set_column(k, &x.column(c));
            }
            let y = complex_null(&others.adjoint());
            if y.ncols() == 0 {
                continue;
            }
            let y = y.column(0).into_owned();
            let s = &bases[j];
            let proj = s * (s.adjoint() * &y);
            let nrm = proj.norm();
            if nrm < 1e-12 {
                continue;
            }
            let proj = proj / C64::new(nrm, 0.0);
            // align phase with the previous column before measuring movement
            let phase = proj.dotc(&x.column(j));
            let proj = if phase.norm() > 0.0 { proj * (phase / phase.norm()) } else { proj };
            moved = moved.max((&proj - x.column(j)).norm());
            x.set_column(j, &proj);
            if let Some(q) = partner[j] {
                x.set_column(q, &proj.map(|z| z.conj()));
            }
        }
        if moved < 1e-13 {
            break;
        }
    }

    let lambda = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(poles.to_vec()));
    let xinv = x
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Placement("eigenvector matrix is singular".into()))?;
    let closed = &x * lambda * xinv;
    let u0h = u0.transpose().map(|v| C64::new(v, 0.0));
    let k = u0h * (&ac - closed);
    let imag = k.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    let real = k.map(|z| z.re);
    if imag > 1e-6 * (1.0 + real.amax()) {
        return Err(Error::Placement(format!("gain has a residual imaginary part {imag:.2e}")));
    }
    Ok(real)
}

/// Observer gain L (p×r) with eig(A22 − L·C2) = `desired` (as a multiset).
pub fn place_poles(a22: &Matrix, c2: &Matrix, desired: &[C64]) -> Result<Matrix> {
    ensure_square(a22, "placement state matrix")?;
    ensure_finite(a22, "placement state matrix")?;
    ensure_finite(c2, "placement output matrix")?;
    let p = a22.nrows();
    if c2.ncols() != p {
        return Err(Error::Dimension(format!("C2 has {} columns, A22 is {p}x{p}", c2.ncols())));
    }
    if desired.len() != p {
        return Err(Error::Dimension(format!("{} poles requested for a {p}-dimensional subsystem", desired.len())));
    }
    if desired.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite("requested poles"));
    }
    check_self_conjugate(desired)?;
    let tol = Tolerance::default();
    let w = crate::observer::observability_matrix(c2, a22);
    let rk = super::rank(&w, &tol);
    if rk < p {
        return Err(Error::Unobservable { rank: rk, n: p });
    }

    // dual state-feedback problem: eig(Aᵀ − C2ᵀ K) with L = Kᵀ
    let a = a22.transpose();
    let b = c2.transpose();
    let svd = b.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let keep: Vec<usize> = order.into_iter().filter(|&i| svd.singular_values[i] > tol.rank_tol * smax).collect();
    let u = svd.u.as_ref().unwrap();
    let vt = svd.v_t.as_ref().unwrap();
    let m = keep.len();
    let mut ur = Matrix::zeros(p, m);
    let mut back = Matrix::zeros(b.ncols(), m); // V_r S_r^{-1}
    for (k, &i) in keep.iter().enumerate() {
        ur.set_column(k, &u.column(i));
        back.set_column(k, &(vt.row(i).transpose() / svd.singular_values[i]));
    }

    let kr = if m == 1 { ackermann(&a, &ur, desired)? } else { knv(&a, &ur, desired)? };
    let k = back * kr;
    let l = k.transpose();

    let got = eigenvalues(&(a22 - &l * c2));
    let scale = desired.iter().map(|z| z.norm()).fold(1.0, f64::max);
    let err = multiset_distance(&got, desired);
    if !(err <= 1e-6 * scale) {
        return Err(Error::Placement(format!("closed-loop poles off by {err:.2e} from the request")));
    }
    Ok(l)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn re(v: &[f64]) -> Vec<C64> {
        v.iter().map(|&x| C64::new(x, 0.0)).collect()
    }

    #[test]
    fn scalar_case() {
        let l = place_poles(&Matrix::from_element(1, 1, 0.0), &Matrix::from_element(1, 1, 1.0), &re(&[-4.0])).unwrap();
        assert!((l[(0, 0)] - 4.0).abs() < 1e-12);
        let l = place_poles(&Matrix::from_element(1, 1, 2.5), &Matrix::from_element(1, 1, 1.0), &re(&[-1.5])).unwrap();
        assert!((l[(0, 0)] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn complex_pair_multi_output() {
        let a = Matrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0, -2.0, 0.5]);
        let c = Matrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        let want = vec![C64::new(-1.0, 2.0), C64::new(-1.0, -2.0), C64::new(-3.0, 0.0)];
        let l = place_poles(&a, &c, &want).unwrap();
        assert!(multiset_distance(&eigenvalues(&(&a - &l * &c)), &want) < 1e-8);
    }

    #[test]
    fn repeated_pole_within_output_count() {
        let a = Matrix::from_row_slice(2, 2, &[0.0, 1.0, 3.0, 0.0]);
        let l = place_poles(&a, &Matrix::identity(2, 2), &re(&[-2.0, -2.0])).unwrap();
        assert!(multiset_distance(&eigenvalues(&(&a - &l)), &re(&[-2.0, -2.0])) < 1e-8);
    }

    #[test]
    fn rejects_unobservable_and_unpaired() {
        let a = Matrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 2.0]));
        let c = Matrix::from_row_slice(1, 2, &[1.0, 0.0]);
        assert!(matches!(place_poles(&a, &c, &re(&[-1.0, -2.0])), Err(Error::Unobservable { .. })));
        let c = Matrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let bad = vec![C64::new(-1.0, 1.0), C64::new(-2.0, 0.0)];
        assert!(matches!(place_poles(&a, &c, &bad), Err(Error::Placement(_))));
    }

    #[test]
    fn too_many_repeats_for_multi_output() {
        let a = Matrix::zeros(3, 3);
        let c = Matrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        // a zero A with two outputs is not even observable; use a chain instead
        let a2 = Matrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        let c2 = Matrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        assert!(place_poles(&a, &c, &re(&[-1.0, -1.0, -1.0])).is_err());
        assert!(matches!(place_poles(&a2, &c2, &re(&[-1.0, -1.0, -1.0])), Err(Error::Placement(_))));
    }
}
