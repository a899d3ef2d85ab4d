//! Contraction factor, admissible sampling interval and steady-state variance.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{self, matrix_exponential, noise_gramian, operator_norm, psd_sqrt, solve_symmetric_stein, spectral_radius, Matrix, Tolerance};
use crate::observer::{design_observer, CoordinatedObserver, ObserverSpec, SubsystemDecomposition};
use crate::shs::ScenarioSet;

/// Interval filter-error covariance V and its square root Q.
#[derive(Clone, Debug)]
pub struct IntervalVariance {
    pub v: Matrix,
    pub q: Matrix,
    /// Whether Ac was Hurwitz (the covariance formula assumes it).
    pub hurwitz: bool,
}

pub fn interval_variance(ac: &Matrix, l: &Matrix, sigma: &Matrix, tau: f64, tol: &Tolerance) -> Result<IntervalVariance> {
    if l.ncols() != sigma.nrows() {
        return Err(Error::Dimension(format!("gain has {} columns, noise matrix is {}x{}", l.ncols(), sigma.nrows(), sigma.ncols())));
    }
    let v = noise_gramian(ac, &(l * sigma), tau)?;
    let q = psd_sqrt(&v, tol)?;
    let hurwitz = numerics::eigenvalues(ac).iter().all(|z| z.re < 0.0);
    Ok(IntervalVariance { v, q, hurwitz })
}

/// h(τ) = ‖F e^{Aτ} Φ‖.
pub fn h_function(a: &Matrix, f: &Matrix, phi: &Matrix, tau: f64) -> Result<f64> {
    Ok(operator_norm(&(f * matrix_exponential(a, tau)? * phi)))
}

/// Admissible sampling intervals; `None` means no bound inside the scan window.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TauMax {
    /// Largest τ for which the error recursion is mean-square contractive
    /// (ρ(E ΠᵀΠ) < 1) in the limit of arbitrarily fast subsystem filters,
    /// where the one-interval map of scenario i is Π_i = M_i e^{A11 τ} G_i.
    pub ideal: Option<f64>,
    /// Largest τ with q_max·h(τ') < 1 for all τ' ≤ τ.
    pub sufficient: Option<f64>,
}

pub const TAU_SCAN_END: f64 = 100.0;

fn scan_grid() -> Vec<f64> {
    let mut g = vec![0.0];
    let mut t = 1e-6;
    while t < 0.1 {
        g.push(t);
        t *= 2.0;
    }
    g.extend((1..=1000).map(|k| 0.1 * k as f64));
    g
}

/// sup{τ : ok(τ') for all τ' ≤ τ} on [0, TAU_SCAN_END], refined by bisection.
fn first_failure(ok: impl Fn(f64) -> Result<bool>) -> Result<Option<f64>> {
    let grid = scan_grid();
    let mut prev = 0.0;
    for &t in &grid {
        if !ok(t)? {
            if t == 0.0 {
                return Ok(Some(0.0));
            }
            let (mut lo, mut hi) = (prev, t);
            while hi - lo > 1e-7 * hi.max(1e-3) {
                let mid = 0.5 * (lo + hi);
                if ok(mid)? {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            return Ok(Some(lo));
        }
        prev = t;
    }
    Ok(None)
}

fn stacked_f(decomps: &[SubsystemDecomposition], n: usize, tol: &Tolerance) -> Result<(Matrix, Matrix)> {
    let f = numerics::vstack(&decomps.iter().map(|d| d.f.clone()).collect::<Vec<_>>(), n);
    let rank = numerics::rank(&f, tol);
    if rank < n {
        return Err(Error::CombinedRank { rank, n });
    }
    let phi = (f.transpose() * &f).lu().solve(&f.transpose()).ok_or(Error::Singular("stacked reconstruction"))?;
    Ok((f, phi))
}

pub fn compute_tau_max(a: &Matrix, set: &ScenarioSet, decomps: &[SubsystemDecomposition], tol: &Tolerance) -> Result<TauMax> {
    let n = a.nrows();
    let p = set.probabilities();
    let q_max = p.iter().map(|pi| 1.0 - pi).fold(0.0, f64::max);
    if q_max >= 1.0 {
        return Err(Error::Config("a scenario has zero probability".into()));
    }
    let (f, phi) = stacked_f(decomps, n, tol)?;
    let sufficient = first_failure(|t| Ok(q_max * h_function(a, &f, &phi, t)? < 1.0))?;
    let limit = |t: f64| -> Result<bool> {
        let mut m = Matrix::zeros(n, n);
        for (d, pi) in decomps.iter().zip(&p) {
            if d.n_i == n {
                continue;
            }
            let pi_map = &d.m * matrix_exponential(&d.a11, t)? * &d.g;
            m += pi_map.transpose() * &pi_map * *pi;
        }
        Ok(nalgebra::SymmetricEigen::new(m).eigenvalues.max() < 1.0)
    };
    let ideal = first_failure(limit)?;
    Ok(TauMax { ideal, sufficient })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub tau: f64,
    /// E‖Λ_k‖ = Σ p_j‖Λ(j)‖.
    pub gamma_exact: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub tau_max: Option<f64>,
    pub tau_max_sufficient: Option<f64>,
    /// ρ(M) < 1 with M = Σ p_j Λ(j)ᵀΛ(j).
    pub stable: bool,
    pub spectral_radius_m: f64,
    /// ρ(Σ p_j Ψ_j⊗Ψ_j) of the state-error maps: below 1 iff E‖ε_k‖² converges.
    pub mean_square_radius: f64,
    pub h_tau: f64,
    pub lambda_norms: Vec<f64>,
    pub probabilities: Vec<f64>,
}

fn m_matrix(obs: &CoordinatedObserver) -> Matrix {
    let ns = obs.n_s();
    obs.lambda.iter().zip(&obs.probabilities).fold(Matrix::zeros(ns, ns), |acc, (l, p)| acc + l.transpose() * l * *p)
}

fn kron_sum(obs: &CoordinatedObserver) -> Matrix {
    let n = obs.n();
    obs.error_map.iter().zip(&obs.probabilities).fold(Matrix::zeros(n * n, n * n), |acc, (e, p)| acc + e.kronecker(e) * *p)
}

pub fn contraction(obs: &CoordinatedObserver, set: &ScenarioSet, tol: &Tolerance) -> Result<ConvergenceReport> {
    let lambda_norms: Vec<f64> = obs.lambda.iter().map(operator_norm).collect();
    let p = &obs.probabilities;
    let gamma_exact = lambda_norms.iter().zip(p).map(|(l, p)| l * p).sum();
    let gamma1 = obs
        .exp_ac_tau
        .iter()
        .zip(p)
        .filter_map(|(e, p)| e.as_ref().map(|e| p * operator_norm(e)))
        .fold(0.0, f64::max);
    let open = &obs.f * &obs.exp_a_tau * &obs.phi;
    let mut dq = open.clone();
    for (j, d) in obs.decomps.iter().enumerate() {
        let mut rows = dq.rows_mut(obs.offsets[j], d.n_i);
        rows *= 1.0 - p[j];
    }
    let gamma2 = operator_norm(&dq);
    let spectral_radius_m = nalgebra::SymmetricEigen::new(m_matrix(obs)).eigenvalues.amax();
    let tm = compute_tau_max(&obs.a, set, &obs.decomps, tol)?;
    Ok(ConvergenceReport {
        tau: obs.tau,
        gamma_exact,
        gamma1,
        gamma2,
        tau_max: tm.ideal,
        tau_max_sufficient: tm.sufficient,
        stable: spectral_radius_m < 1.0,
        spectral_radius_m,
        mean_square_radius: spectral_radius(&kron_sum(obs)),
        h_tau: operator_norm(&open),
        lambda_norms,
        probabilities: p.clone(),
    })
}

#[derive(Clone, Debug)]
pub struct SteadyState {
    pub m: Matrix,
    pub s: Matrix,
    pub psi: Matrix,
    pub w_inf: Matrix,
    pub mu_inf: f64,
    /// Trace(Φ W∞ Φᵀ): the bound expressed for the state error.
    pub mu_state: f64,
    /// Exact stationary E‖ε‖² of the switched error recursion (when mean-square stable).
    pub mu_state_exact: Option<f64>,
    pub residual: f64,
}

pub fn steady_state(obs: &CoordinatedObserver, tol: &Tolerance) -> Result<SteadyState> {
    let ns = obs.n_s();
    let m = m_matrix(obs);
    let m = (&m + m.transpose()) * 0.5;
    let s = psd_sqrt(&m, tol)?;
    let psi = obs
        .noise_factor
        .iter()
        .zip(&obs.probabilities)
        .fold(Matrix::zeros(ns, ns), |acc, (q, p)| acc + q.transpose() * q * *p);
    let psi = (&psi + psi.transpose()) * 0.5;
    let rho = spectral_radius(&m);
    if rho >= 1.0 {
        return Err(Error::Unstable(rho));
    }
    let w_inf = solve_symmetric_stein(&s, &psi, tol)?;
    let residual = (&s * &w_inf * &s - &w_inf + &psi).amax();
    let mu_state = (&obs.phi * &w_inf * obs.phi.transpose()).trace();

    let n = obs.n();
    let k = kron_sum(obs);
    let mu_state_exact = if spectral_radius(&k) < 1.0 {
        let forcing = obs.error_cov.iter().zip(&obs.probabilities).fold(Matrix::zeros(n, n), |acc, (v, p)| acc + v * *p);
        let lhs = Matrix::identity(n * n, n * n) - k;
        lhs.lu()
            .solve(&nalgebra::DVector::from_column_slice(forcing.as_slice()))
            .map(|v| (0..n).map(|i| v[i * n + i]).sum())
    } else {
        None
    };
    Ok(SteadyState { mu_inf: w_inf.trace(), m, s, psi, w_inf, mu_state, mu_state_exact, residual })
}

/// μ_k from μ_{k+1} = Trace(S W_k S + Ψ), W_{k+1} = S W_k S + Ψ.
pub fn trace_recursion(s: &Matrix, psi: &Matrix, w0: &Matrix, steps: usize) -> Vec<f64> {
    let mut w = w0.clone();
    let mut out = Vec::with_capacity(steps + 1);
    out.push(w.trace());
    for _ in 0..steps {
        w = s * &w * s + psi;
        out.push(w.trace());
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TradeoffRow {
    pub scale: f64,
    pub gamma_exact: f64,
    pub stable: bool,
    pub mu_inf: Option<f64>,
    pub mu_state: Option<f64>,
}

/// Rebuilds the observer with every pole multiplied by each scale.
pub fn tradeoff_sweep(a: &Matrix, set: &ScenarioSet, spec: &ObserverSpec, scales: &[f64], tol: &Tolerance) -> Result<Vec<TradeoffRow>> {
    scales
        .par_iter()
        .map(|&scale| {
            let mut sp = spec.clone();
            sp.poles = spec.poles.scaled(scale);
            let obs = design_observer(a, set, &sp, tol)?;
            let m = m_matrix(&obs);
            let stable = spectral_radius(&m) < 1.0;
            let gamma_exact = obs.lambda.iter().zip(&obs.probabilities).map(|(l, p)| p * operator_norm(l)).sum();
            let ss = if stable { Some(steady_state(&obs, tol)?) } else { None };
            Ok(TradeoffRow { scale, gamma_exact, stable, mu_inf: ss.as_ref().map(|s| s.mu_inf), mu_state: ss.as_ref().map(|s| s.mu_state) })
        })
        .collect()
}
