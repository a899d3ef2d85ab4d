use serde::{Deserialize, Serialize};

use super::{Recombination, SubsystemDecomposition};
use crate::error::{Error, Result};
use crate::numerics::{self, exp_integral, matrix_exponential, noise_gramian, psd_sqrt, Matrix, Tolerance, Vector};
use crate::shs::ScenarioSet;

/// Coordinated observer with its one-interval error maps.
///
/// `lambda[j]` acts on the stacked subsystem error e = Fε (n_s entries) for
/// scenario j; `error_map[j]` is the same interval map written for the
/// state error ε = x̂ − x.
#[derive(Clone, Debug)]
pub struct CoordinatedObserver {
    pub tau: f64,
    pub mode: Recombination,
    pub a: Matrix,
    pub decomps: Vec<SubsystemDecomposition>,
    pub probabilities: Vec<f64>,
    pub f: Matrix,
    pub phi: Matrix,
    /// First row of each scenario's block in F (blocks of width n_i).
    pub offsets: Vec<usize>,
    pub exp_a_tau: Matrix,
    pub exp_ac_tau: Vec<Option<Matrix>>,
    pub lambda: Vec<Matrix>,
    /// Γ(j)Γ(j)ᵀ: covariance of the interval noise in stacked coordinates.
    pub noise_cov: Vec<Matrix>,
    /// Q^j, the symmetric square root of `noise_cov[j]`.
    pub noise_factor: Vec<Matrix>,
    pub error_map: Vec<Matrix>,
    pub error_cov: Vec<Matrix>,
}

impl CoordinatedObserver {
    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_s(&self) -> usize {
        self.f.nrows()
    }

    pub fn scenarios(&self) -> usize {
        self.decomps.len()
    }
}

pub fn build(a: &Matrix, set: &ScenarioSet, decomps: Vec<SubsystemDecomposition>, tau: f64, mode: Recombination, tol: &Tolerance) -> Result<CoordinatedObserver> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::Config(format!("sampling interval must be positive, got {tau}")));
    }
    if decomps.len() != set.len() {
        return Err(Error::Dimension("one decomposition per scenario is required".into()));
    }
    let n = a.nrows();
    for d in &decomps {
        if d.n_i > 0 && d.outputs() > 0 && d.gain.is_none() {
            return Err(Error::Config(format!("scenario {} has no observer gain", d.index)));
        }
    }
    let mut offsets = Vec::with_capacity(decomps.len());
    let mut acc = 0;
    for d in &decomps {
        offsets.push(acc);
        acc += d.n_i;
    }
    let n_s = acc;
    let f = numerics::vstack(&decomps.iter().map(|d| d.f.clone()).collect::<Vec<_>>(), n);
    let rank = numerics::rank(&f, tol);
    if rank < n {
        return Err(Error::CombinedRank { rank, n });
    }
    let ftf = f.transpose() * &f;
    let phi = ftf.lu().solve(&f.transpose()).ok_or(Error::Singular("stacked reconstruction"))?;
    let exp_a_tau = matrix_exponential(a, tau)?;
    let open_rows = &f * &exp_a_tau * &phi;

    let mut exp_ac_tau = Vec::new();
    let mut lambda = Vec::new();
    let mut noise_cov = Vec::new();
    let mut error_map = Vec::new();
    let mut error_cov = Vec::new();
    for (j, (d, sc)) in decomps.iter().zip(&set.scenarios).enumerate() {
        let eac = match &d.ac {
            Some(ac) => Some(matrix_exponential(ac, tau)?),
            None => None,
        };
        match mode {
            Recombination::Transform => {
                let lbar = d.state_gain();
                let (psi, v) = if d.gain.is_some() {
                    let acl = a - &lbar * &sc.c;
                    (matrix_exponential(&acl, tau)?, noise_gramian(&acl, &(&lbar * &sc.sigma), tau)?)
                } else {
                    (exp_a_tau.clone(), Matrix::zeros(n, n))
                };
                lambda.push(&f * &psi * &phi);
                noise_cov.push(&f * &v * f.transpose());
                error_map.push(psi);
                error_cov.push(v);
            }
            Recombination::Stacked => {
                let mut lam = open_rows.clone();
                let mut cov = Matrix::zeros(n_s, n_s);
                if let (Some(e), Some(ac), Some(l)) = (&eac, &d.ac, &d.gain) {
                    let o = offsets[j];
                    lam.rows_mut(o, d.n_i).fill(0.0);
                    lam.view_mut((o, o), (d.n_i, d.n_i)).copy_from(e);
                    let v = noise_gramian(ac, &(l * &d.sigma), tau)?;
                    cov.view_mut((o, o), (d.n_i, d.n_i)).copy_from(&v);
                }
                error_map.push(&phi * &lam * &f);
                error_cov.push(&phi * &cov * phi.transpose());
                lambda.push(lam);
                noise_cov.push(cov);
            }
        }
        exp_ac_tau.push(eac);
    }
    let noise_factor = noise_cov.iter().map(|c| psd_sqrt(c, tol)).collect::<Result<Vec<_>>>()?;
    Ok(CoordinatedObserver {
        tau,
        mode,
        a: a.clone(),
        decomps,
        probabilities: set.probabilities(),
        f,
        phi,
        offsets,
        exp_a_tau,
        exp_ac_tau,
        lambda,
        noise_cov,
        noise_factor,
        error_map,
        error_cov,
    })
}

/// How a measurement increment over one substep relates to the state.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasurementModel {
    /// Δy = C∫x dt + σΔw over the substep (exact for the linear truth).
    #[default]
    Integrated,
    /// Δy = C x(t_s) h + σΔw.
    LeftPoint,
}

#[derive(Clone, Debug)]
struct FilterStep {
    prop: Matrix,
    sense: Matrix,
    gain: Matrix,
}

/// Substep matrices shared by the truth simulation and the estimator.
#[derive(Clone, Debug)]
pub struct Discretization {
    pub n_sub: usize,
    pub h: f64,
    pub model: MeasurementModel,
    pub exp_a_h: Matrix,
    /// Per scenario: maps x(t_s) to the noiseless increment Δy.
    pub sense: Vec<Matrix>,
    filters: Vec<Option<FilterStep>>,
}

impl CoordinatedObserver {
    /// Filter recursion per substep: z ← e^{Ah}z + K(Δy − H z) with K = (∫₀ʰe^{A_c s}ds)·L/h,
    /// which keeps a perfectly initialised estimate exact and matches the
    /// continuous filter's mean and covariance to second order in h.
    pub fn discretize(&self, n_sub: usize, model: MeasurementModel) -> Result<Discretization> {
        if n_sub == 0 {
            return Err(Error::Config("n_sub must be at least 1".into()));
        }
        let h = self.tau / n_sub as f64;
        let a = &self.a;
        let exp_a_h = matrix_exponential(a, h)?;
        let int_a = exp_integral(a, h)?;
        let mut sense = Vec::new();
        let mut filters = Vec::new();
        for d in &self.decomps {
            let cx = &d.c;
            let hx = match model {
                MeasurementModel::Integrated => cx * &int_a,
                MeasurementModel::LeftPoint => cx * h,
            };
            sense.push(hx.clone());
            let step = match (&d.gain, &d.ac) {
                (Some(l), Some(ac)) => Some(match self.mode {
                    Recombination::Transform => {
                        let lbar = d.state_gain();
                        let acl = a - &lbar * cx;
                        FilterStep { prop: exp_a_h.clone(), sense: hx, gain: exp_integral(&acl, h)? * lbar / h }
                    }
                    Recombination::Stacked => {
                        let s22 = match model {
                            MeasurementModel::Integrated => &d.c2 * exp_integral(&d.a22, h)?,
                            MeasurementModel::LeftPoint => &d.c2 * h,
                        };
                        FilterStep { prop: matrix_exponential(&d.a22, h)?, sense: s22, gain: exp_integral(ac, h)? * l / h }
                    }
                }),
                _ => None,
            };
            filters.push(step);
        }
        Ok(Discretization { n_sub, h, model, exp_a_h, sense, filters })
    }

    /// One sampling interval of the estimator under scenario `alpha` (0-based).
    pub fn step_estimate(&self, disc: &Discretization, xhat: &Vector, increments: &[Vector], alpha: usize) -> Result<Vector> {
        let d = self.decomps.get(alpha).ok_or_else(|| Error::Config(format!("unknown scenario position {alpha}")))?;
        if increments.len() != disc.n_sub {
            return Err(Error::Dimension(format!("{} increments for {} substeps", increments.len(), disc.n_sub)));
        }
        if let Some(bad) = increments.iter().find(|dy| dy.len() != d.outputs()) {
            return Err(Error::Dimension(format!("increment of length {} for a scenario with {} outputs", bad.len(), d.outputs())));
        }
        let Some(fs) = &disc.filters[alpha] else {
            return Ok(&self.exp_a_tau * xhat);
        };
        let run = |mut z: Vector| {
            for dy in increments {
                let innov = dy - &fs.sense * &z;
                z = &fs.prop * z + &fs.gain * innov;
            }
            z
        };
        match self.mode {
            Recombination::Transform => Ok(run(xhat.clone())),
            Recombination::Stacked => {
                let mut stacked = &self.f * (&self.exp_a_tau * xhat);
                let phi_i = run(&d.f * xhat);
                stacked.rows_mut(self.offsets[alpha], d.n_i).copy_from(&phi_i);
                Ok(&self.phi * stacked)
            }
        }
    }
}

