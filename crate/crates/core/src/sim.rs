//! Truth/measurement simulation and the Monte Carlo harness.
//!
//! Replica r uses seed `replica_seed(seed, r)`; its switching path comes from
//! the SWITCHING stream of that seed (or of `replica_seed(switching_seed, r)`
//! when a separate switching seed is given) and its measurement noise from the
//! NOISE stream. Each substep consumes exactly `max_outputs` normal draws
//! whatever the active scenario, so noise is aligned by substep index.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Vector;
use crate::observer::{CoordinatedObserver, Discretization, MeasurementModel};
use crate::rng;
use crate::shs::{sample_skeleton, ScenarioSet};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub x0: Vec<f64>,
    pub xhat0: Vec<f64>,
    /// Number of sampling intervals.
    pub k: usize,
    pub n_sub: usize,
    pub replicas: usize,
    pub seed: u64,
    #[serde(default)]
    pub switching_seed: Option<u64>,
    #[serde(default)]
    pub measurement: MeasurementModel,
    /// Fixed scenario path (0-based positions) replacing the random one.
    #[serde(default)]
    pub forced_path: Option<Vec<usize>>,
}

impl SimConfig {
    pub fn validate(&self, n: usize, scenarios: usize) -> Result<()> {
        if self.k == 0 || self.n_sub == 0 || self.replicas == 0 {
            return Err(Error::Config("k, n_sub and replicas must all be at least 1".into()));
        }
        if self.x0.len() != n || self.xhat0.len() != n {
            return Err(Error::Dimension(format!("initial states must have {n} entries")));
        }
        if self.x0.iter().chain(&self.xhat0).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("initial state"));
        }
        if let Some(p) = &self.forced_path {
            if p.len() != self.k || p.iter().any(|&a| a >= scenarios) {
                return Err(Error::Config("forced path must list k valid scenario positions".into()));
            }
        }
        Ok(())
    }
}

/// Exact truth propagation plus measurement increments, one interval at a time.
pub struct TruthSim<'a> {
    set: &'a ScenarioSet,
    disc: &'a Discretization,
    noise: ChaCha8Rng,
    draws: usize,
    pub x: Vector,
}

impl<'a> TruthSim<'a> {
    pub fn new(set: &'a ScenarioSet, disc: &'a Discretization, x0: Vector, noise_seed: u64) -> Self {
        TruthSim { set, disc, noise: rng::stream(noise_seed, rng::NOISE), draws: set.max_outputs(), x: x0 }
    }

    /// Advances one interval under scenario `alpha`, returning the increments.
    pub fn interval(&mut self, alpha: usize) -> Vec<Vector> {
        let sc = &self.set.scenarios[alpha];
        let hx = &self.disc.sense[alpha];
        let r = sc.outputs();
        let sq = self.disc.h.sqrt();
        let mut out = Vec::with_capacity(self.disc.n_sub);
        let mut xi = vec![0.0; self.draws];
        for _ in 0..self.disc.n_sub {
            for v in xi.iter_mut() {
                *v = StandardNormal.sample(&mut self.noise);
            }
            let noise = &sc.sigma * Vector::from_column_slice(&xi[..r]) * sq;
            out.push(hx * &self.x + noise);
            self.x = &self.disc.exp_a_h * &self.x;
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct TruthPath {
    /// x at interval boundaries (K+1 entries).
    pub states: Vec<Vector>,
    pub increments: Vec<Vec<Vector>>,
}

pub fn simulate_truth(set: &ScenarioSet, disc: &Discretization, x0: &Vector, path: &[usize], noise_seed: u64) -> TruthPath {
    let mut sim = TruthSim::new(set, disc, x0.clone(), noise_seed);
    let mut states = vec![x0.clone()];
    let mut increments = Vec::with_capacity(path.len());
    for &a in path {
        increments.push(sim.interval(a));
        states.push(sim.x.clone());
    }
    TruthPath { states, increments }
}

#[derive(Clone, Debug)]
pub struct Replica {
    pub path: Vec<usize>,
    /// ε_k = x̂_k − x_k, k = 0..K.
    pub errors: Vec<Vector>,
}

impl Replica {
    pub fn err_sq(&self) -> Vec<f64> {
        self.errors.iter().map(|e| e.norm_squared()).collect()
    }
}

pub fn run_replica(obs: &CoordinatedObserver, disc: &Discretization, set: &ScenarioSet, cfg: &SimConfig, index: u64) -> Result<Replica> {
    let base = rng::replica_seed(cfg.seed, index);
    let path = match &cfg.forced_path {
        Some(p) => p.clone(),
        None => sample_skeleton(set, cfg.k, cfg.switching_seed.map_or(base, |s| rng::replica_seed(s, index))),
    };
    let mut truth = TruthSim::new(set, disc, Vector::from_column_slice(&cfg.x0), base);
    let mut xhat = Vector::from_column_slice(&cfg.xhat0);
    let mut errors = Vec::with_capacity(cfg.k + 1);
    errors.push(&xhat - &truth.x);
    for &a in &path {
        let inc = truth.interval(a);
        xhat = obs.step_estimate(disc, &xhat, &inc, a)?;
        errors.push(&xhat - &truth.x);
    }
    Ok(Replica { path, errors })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ErrorTrajectory {
    pub tau: f64,
    pub mean_err_sq: Vec<f64>,
    /// Sample variance of ‖ε_k‖² across replicas (0 for a single replica).
    pub var_err_sq: Vec<f64>,
    /// mean_state_sq[k][i] = mean of ε_{k,i}².
    pub mean_state_sq: Vec<Vec<f64>>,
    pub replica_err_sq: Vec<Vec<f64>>,
    pub paths: Vec<Vec<usize>>,
}

impl ErrorTrajectory {
    pub fn len(&self) -> usize {
        self.mean_err_sq.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean_err_sq.is_empty()
    }

    /// First k with mean ‖ε_k‖² below `frac` times the initial value.
    pub fn time_to_fraction(&self, frac: f64) -> Option<usize> {
        let target = frac * self.mean_err_sq[0];
        self.mean_err_sq.iter().position(|&v| v < target)
    }

    /// Mean of mean ‖ε_k‖² over k in [from, to].
    pub fn window_mean(&self, from: usize, to: usize) -> f64 {
        let w = &self.mean_err_sq[from..=to.min(self.len() - 1)];
        w.iter().sum::<f64>() / w.len() as f64
    }
}

/// Sum in a fixed pairwise tree so the result does not depend on scheduling.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    match v.len() {
        0 => 0.0,
        1 => v[0],
        n => pairwise_sum(&v[..n / 2]) + pairwise_sum(&v[n / 2..]),
    }
}

pub fn monte_carlo(obs: &CoordinatedObserver, set: &ScenarioSet, cfg: &SimConfig) -> Result<ErrorTrajectory> {
    cfg.validate(obs.n(), set.len())?;
    let disc = obs.discretize(cfg.n_sub, cfg.measurement)?;
    let reps: Vec<Replica> = (0..cfg.replicas as u64).into_par_iter().map(|r| run_replica(obs, &disc, set, cfg, r)).collect::<Result<_>>()?;
    let n = obs.n();
    let kk = cfg.k + 1;
    let rr = reps.len() as f64;
    let replica_err_sq: Vec<Vec<f64>> = reps.iter().map(Replica::err_sq).collect();
    let mut mean_err_sq = Vec::with_capacity(kk);
    let mut var_err_sq = Vec::with_capacity(kk);
    let mut mean_state_sq = Vec::with_capacity(kk);
    let mut col = vec![0.0; reps.len()];
    for k in 0..kk {
        for (c, e) in col.iter_mut().zip(&replica_err_sq) {
            *c = e[k];
        }
        let mean = pairwise_sum(&col) / rr;
        for c in col.iter_mut() {
            *c = (*c - mean).powi(2);
        }
        let var = if reps.len() > 1 { pairwise_sum(&col) / (rr - 1.0) } else { 0.0 };
        mean_err_sq.push(mean);
        var_err_sq.push(var);
        let per: Vec<f64> = (0..n)
            .map(|i| {
                let v: Vec<f64> = reps.iter().map(|r| r.errors[k][i].powi(2)).collect();
                pairwise_sum(&v) / rr
            })
            .collect();
        mean_state_sq.push(per);
    }
    Ok(ErrorTrajectory { tau: obs.tau, mean_err_sq, var_err_sq, mean_state_sq, replica_err_sq, paths: reps.into_iter().map(|r| r.path).collect() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_sum_matches_plain_sum_on_integers() {
        let v: Vec<f64> = (1..=100).map(|k| k as f64).collect();
        assert_eq!(pairwise_sum(&v), 5050.0);
        assert_eq!(pairwise_sum(&[]), 0.0);
    }
}
