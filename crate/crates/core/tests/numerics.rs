use proptest::prelude::*;

use shs_core::numerics::{
    ackermann, eigenvalues, exp_integral, kernel_base, matrix_exponential, multiset_distance, noise_gramian, operator_norm, place_poles,
    psd_sqrt, rank, solve_symmetric_stein, spectral_radius, Matrix, Tolerance, C64, VECTORIZE_MAX,
};
use shs_core::observer::observability_matrix;
use shs_core::Error;

fn tol() -> Tolerance {
    Tolerance::default()
}

fn mat(n: usize, m: usize, v: &[f64]) -> Matrix {
    Matrix::from_row_slice(n, m, v)
}

// ---- oracles ----

/// Taylor series on A·t/2^s followed by s squarings.
fn series_expm(a: &Matrix, t: f64) -> Matrix {
    let n = a.nrows();
    let norm = (a * t).amax() * n as f64;
    let s = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let x = a * (t / 2f64.powi(s));
    let mut term = Matrix::identity(n, n);
    let mut sum = term.clone();
    for k in 1..40 {
        term = &term * &x / k as f64;
        sum += &term;
    }
    for _ in 0..s {
        sum = &sum * &sum;
    }
    sum
}

/// Classical RK4 on Ẋ = AX from X(0) = I.
fn rk4_expm(a: &Matrix, t: f64, steps: usize) -> Matrix {
    let h = t / steps as f64;
    let mut x = Matrix::identity(a.nrows(), a.nrows());
    for _ in 0..steps {
        let k1 = a * &x;
        let k2 = a * (&x + &k1 * (h / 2.0));
        let k3 = a * (&x + &k2 * (h / 2.0));
        let k4 = a * (&x + &k3 * h);
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    x
}

/// Composite Simpson rule for a matrix-valued integrand on [0, t].
fn simpson(f: impl Fn(f64) -> Matrix, t: f64, intervals: usize) -> Matrix {
    let h = t / intervals as f64;
    let mut acc = f(0.0) + f(t);
    for i in 1..intervals {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += f(i as f64 * h) * w;
    }
    acc * (h / 3.0)
}

/// Characteristic polynomial coefficients (monic, highest first) via Faddeev–LeVerrier.
fn charpoly(a: &Matrix) -> Vec<f64> {
    let n = a.nrows();
    let mut c = vec![1.0];
    let mut m = Matrix::zeros(n, n);
    for k in 1..=n {
        m = a * &m + Matrix::identity(n, n) * c[k - 1];
        let ck = -(a * &m).trace() / k as f64;
        c.push(ck);
    }
    c
}

fn poly_from_roots(roots: &[f64]) -> Vec<f64> {
    let mut c = vec![1.0];
    for r in roots {
        let mut next = c.clone();
        next.push(0.0);
        for i in 1..next.len() {
            next[i] -= r * c[i - 1];
        }
        c = next;
    }
    c
}

fn power_iteration(m: &Matrix, iters: usize) -> f64 {
    let mut v = Matrix::from_element(m.nrows(), 1, 1.0);
    let mut lam = 0.0;
    for _ in 0..iters {
        let w = m * &v;
        lam = w.norm() / v.norm();
        v = &w / w.norm();
    }
    lam
}

// ---- strategies ----

fn square(max: usize, scale: f64) -> impl Strategy<Value = Matrix> {
    (1..=max).prop_flat_map(move |n| prop::collection::vec(-scale..scale, n * n).prop_map(move |v| Matrix::from_vec(n, n, v)))
}

fn observable_pair() -> impl Strategy<Value = (Matrix, Matrix, Vec<f64>)> {
    (2usize..=5, 1usize..=3)
        .prop_flat_map(|(n, m)| {
            let m = m.min(n);
            (
                prop::collection::vec(-2.0..2.0, n * n),
                prop::collection::vec(-2.0..2.0, m * n),
                prop::collection::vec(0.5f64..6.0, n),
                Just((n, m)),
            )
        })
        .prop_map(|(a, c, p, (n, m))| (Matrix::from_vec(n, n, a), Matrix::from_vec(m, n, c), p.iter().map(|x| -x).collect()))
        .prop_filter("observable", |(a, c, _)| rank(&observability_matrix(c, a), &Tolerance::default()) == a.nrows())
}

// ---- matrix exponential ----

#[test]
fn expm_of_rotation_generator() {
    let w = 3.0;
    let a = mat(2, 2, &[0.0, w, -w, 0.0]);
    let e = matrix_exponential(&a, 0.7).unwrap();
    let (c, s) = ((w * 0.7).cos(), (w * 0.7).sin());
    assert!((e - mat(2, 2, &[c, s, -s, c])).amax() < 1e-13);
}

#[test]
fn expm_rejects_non_square_and_nan() {
    assert!(matches!(matrix_exponential(&Matrix::zeros(2, 3), 1.0), Err(Error::Dimension(_))));
    assert!(matches!(matrix_exponential(&mat(1, 1, &[f64::NAN]), 1.0), Err(Error::NonFinite(_))));
}

#[test]
fn expm_matches_rk4_on_swing_like_system() {
    let a = mat(4, 4, &[0.0, 1.0, 0.0, 0.0, -10.5, -0.1, 10.5, 0.0, 0.0, 0.0, 0.0, 1.0, 21.4, 0.0, -21.4, -0.18]);
    let e = matrix_exponential(&a, 0.6261).unwrap();
    let r = rk4_expm(&a, 0.6261, 4000);
    assert!((e - &r).amax() < 1e-9 * (1.0 + r.amax()));
}

proptest! {
    #[test]
    fn expm_matches_series(a in square(5, 3.0), t in 0.0f64..2.0) {
        let e = matrix_exponential(&a, t).unwrap();
        let s = series_expm(&a, t);
        prop_assert!((&e - &s).amax() <= 1e-9 * (1.0 + s.amax()));
    }

    #[test]
    fn expm_semigroup(a in square(4, 2.0), s in 0.0f64..1.0, t in 0.0f64..1.0) {
        let lhs = matrix_exponential(&a, s + t).unwrap();
        let rhs = matrix_exponential(&a, s).unwrap() * matrix_exponential(&a, t).unwrap();
        prop_assert!((&lhs - &rhs).amax() <= 1e-10 * (1.0 + lhs.amax()));
    }

    #[test]
    fn exp_integral_matches_simpson(a in square(4, 2.0), t in 0.01f64..1.5) {
        let got = exp_integral(&a, t).unwrap();
        let want = simpson(|s| series_expm(&a, s), t, 400);
        prop_assert!((&got - &want).amax() <= 1e-8 * (1.0 + want.amax()));
    }

    #[test]
    fn gramian_matches_simpson(a in square(4, 2.0), g in prop::collection::vec(-1.0f64..1.0, 8), t in 0.01f64..1.0) {
        let n = a.nrows();
        let ac = &a - Matrix::identity(n, n) * 3.0;
        let nm = Matrix::from_fn(n, 2, |i, j| g[(i * 2 + j) % g.len()]);
        let got = noise_gramian(&ac, &nm, t).unwrap();
        let want = simpson(|s| { let e = series_expm(&ac, s); &e * &nm * nm.transpose() * e.transpose() }, t, 400);
        prop_assert!((&got - &want).amax() <= 1e-8 * (1.0 + want.amax()));
        prop_assert!((&got - got.transpose()).amax() == 0.0);
    }
}

#[test]
fn gramian_scalar_closed_form() {
    let (a, s, t) = (-2.0f64, 0.3, 0.8);
    let v = noise_gramian(&mat(1, 1, &[a]), &mat(1, 1, &[s]), t).unwrap();
    let want = s * s * ((2.0 * a * t).exp() - 1.0) / (2.0 * a);
    assert!((v[(0, 0)] - want).abs() < 1e-14);
}

// ---- kernels, square roots, spectra ----

#[test]
fn kernel_pivot_is_negative() {
    let m = mat(1, 3, &[1.0, 0.0, -1.0]);
    let k = kernel_base(&m, &tol());
    assert_eq!(k.ncols(), 2);
    assert!((&m * &k).amax() < 1e-14);
    for col in k.column_iter() {
        let p = col.iter().position(|v| v.abs() >= col.amax() * (1.0 - 1e-9)).unwrap();
        assert!(col[p] < 0.0);
    }
}

proptest! {
    #[test]
    fn kernel_is_orthonormal_null_space(v in prop::collection::vec(-3.0f64..3.0, 12), rows in 1usize..=3) {
        let m = Matrix::from_fn(rows, 4, |i, j| v[i * 4 + j]);
        let k = kernel_base(&m, &tol());
        prop_assert_eq!(k.ncols() + rank(&m, &tol()), 4);
        prop_assert!((&m * &k).amax() <= 1e-10 * (1.0 + m.amax()));
        prop_assert!((k.transpose() * &k - Matrix::identity(k.ncols(), k.ncols())).amax() < 1e-12);
    }

    #[test]
    fn psd_sqrt_squares_back(v in prop::collection::vec(-2.0f64..2.0, 16)) {
        let x = Matrix::from_vec(4, 4, v);
        let m = &x * x.transpose();
        let q = psd_sqrt(&m, &tol()).unwrap();
        prop_assert!((&q * &q - &m).amax() <= 1e-10 * (1.0 + m.amax()));
        prop_assert!(nalgebra::SymmetricEigen::new(q).eigenvalues.min() >= -1e-10);
    }

    #[test]
    fn spectral_radius_matches_power_iteration(v in prop::collection::vec(0.01f64..1.0, 25)) {
        // positive matrices have a simple dominant Perron root
        let m = Matrix::from_vec(5, 5, v);
        let r = spectral_radius(&m);
        prop_assert!((r - power_iteration(&m, 500)).abs() <= 1e-8 * r);
    }
}

#[test]
fn operator_norm_of_empty_is_zero() {
    assert_eq!(operator_norm(&Matrix::zeros(0, 3)), 0.0);
    assert_eq!(operator_norm(&mat(2, 2, &[3.0, 0.0, 0.0, -4.0])), 4.0);
}

// ---- pole placement ----

#[test]
fn ackermann_matches_characteristic_polynomial() {
    let a = mat(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, -1.0, -2.0, -0.5]);
    let b = mat(3, 1, &[0.3, -1.0, 2.0]);
    let roots = [-1.0, -2.0, -3.5];
    let k = ackermann(&a, &b, &roots.map(|r| C64::new(r, 0.0))).unwrap();
    let got = charpoly(&(&a - &b * &k));
    let want = poly_from_roots(&roots);
    for (g, w) in got.iter().zip(&want) {
        assert!((g - w).abs() < 1e-9 * (1.0 + w.abs()), "{got:?} vs {want:?}");
    }
}

#[test]
fn placement_errors() {
    let a = mat(2, 2, &[0.0, 1.0, 0.0, 0.0]);
    let unobs = mat(1, 2, &[0.0, 1.0]);
    assert!(matches!(place_poles(&a, &unobs, &[C64::new(-1.0, 0.0); 2]), Err(Error::Unobservable { .. })));
    let c = mat(1, 2, &[1.0, 0.0]);
    assert!(place_poles(&a, &c, &[C64::new(-1.0, 1.0), C64::new(-2.0, 0.0)]).is_err());
    assert!(matches!(place_poles(&a, &c, &[C64::new(-1.0, 0.0)]), Err(Error::Dimension(_))));
}

#[test]
fn multi_output_complex_and_repeated_poles() {
    let a = mat(4, 4, &[0.0, 1.0, 0.0, 0.0, 7.8, -0.1, -7.8, 0.0, 0.0, 0.0, 0.0, 1.0, -20.4, 0.0, 20.4, -0.18]);
    let c = mat(2, 4, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
    for want in [
        vec![C64::new(-2.0, 1.5), C64::new(-2.0, -1.5), C64::new(-3.0, 0.0), C64::new(-4.0, 0.0)],
        vec![C64::new(-3.0, 0.0), C64::new(-3.0, 0.0), C64::new(-5.0, 0.0), C64::new(-5.0, 0.0)],
    ] {
        let l = place_poles(&a, &c, &want).unwrap();
        assert!(multiset_distance(&eigenvalues(&(&a - &l * &c)), &want) < 1e-6 * 5.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]
    #[test]
    fn placement_round_trip((a, c, poles) in observable_pair()) {
        let want: Vec<C64> = poles.iter().map(|&p| C64::new(p, 0.0)).collect();
        let l = place_poles(&a, &c, &want).unwrap();
        let got = eigenvalues(&(&a - &l * &c));
        prop_assert!(multiset_distance(&got, &want) <= 1e-6 * 6.0);
    }
}

// ---- Stein equation ----

fn stable_symmetric(v: &[f64], n: usize, radius: f64) -> Matrix {
    let x = Matrix::from_fn(n, n, |i, j| v[(i * n + j) % v.len()]);
    let s = (&x + x.transpose()) * 0.5;
    let r = nalgebra::SymmetricEigen::new(s.clone()).eigenvalues.amax().max(1e-12);
    s * (radius / r)
}

proptest! {
    #[test]
    fn stein_matches_fixed_point_series(v in prop::collection::vec(-1.0f64..1.0, 36), n in 1usize..=6, r in 0.05f64..0.9) {
        let s = stable_symmetric(&v, n, r);
        let y = Matrix::from_fn(n, n, |i, j| v[(j * n + i + 3) % v.len()]);
        let psi = &y * y.transpose();
        let w = solve_symmetric_stein(&s, &psi, &tol()).unwrap();
        let mut it = psi.clone();
        for _ in 0..2000 {
            it = &s * &it * &s + &psi;
        }
        prop_assert!((&w - &it).amax() <= 1e-8 * (1.0 + it.amax()));
    }
}

#[test]
fn stein_large_system_uses_doubling() {
    let n = VECTORIZE_MAX + 5;
    let s = Matrix::from_fn(n, n, |i, j| if i == j { 0.5 } else if i.abs_diff(j) == 1 { 0.1 } else { 0.0 });
    let psi = Matrix::identity(n, n);
    let w = solve_symmetric_stein(&s, &psi, &tol()).unwrap();
    assert!((&s * &w * &s - &w + &psi).amax() < 1e-9);
}

#[test]
fn stein_rejects_unstable() {
    let s = Matrix::identity(2, 2) * 1.01;
    assert!(matches!(solve_symmetric_stein(&s, &Matrix::identity(2, 2), &tol()), Err(Error::Unstable(_))));
}
