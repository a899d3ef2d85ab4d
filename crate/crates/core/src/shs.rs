//! Sensor contingencies: the scenario alphabet and the i.i.d. switching sequence.

use rand::distr::{weighted::WeightedIndex, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Vector};
use crate::rng;

pub const MAX_CHANNELS: usize = 16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensorChannel {
    pub name: String,
    pub row: Vec<f64>,
    pub delivery_ratio: f64,
    pub noise_std: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    /// 1-based, in enumeration order; index 1 has every channel up.
    pub index: usize,
    pub c: Matrix,
    pub sigma: Matrix,
    pub probability: f64,
    /// Names of the channels delivering in this scenario.
    pub up: Vec<String>,
}

impl Scenario {
    pub fn outputs(&self) -> usize {
        self.c.nrows()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioSet {
    pub scenarios: Vec<Scenario>,
    pub n: usize,
}

impl ScenarioSet {
    /// Single scenario with probability one.
    pub fn single(c: Matrix, sigma: Matrix) -> Result<Self> {
        let n = c.ncols();
        let set = ScenarioSet { scenarios: vec![Scenario { index: 1, c, sigma, probability: 1.0, up: Vec::new() }], n };
        set.validate()?;
        Ok(set)
    }

    pub fn from_parts(n: usize, parts: Vec<(Matrix, Matrix, f64)>) -> Result<Self> {
        let scenarios = parts
            .into_iter()
            .enumerate()
            .map(|(k, (c, sigma, probability))| Scenario { index: k + 1, c, sigma, probability, up: Vec::new() })
            .collect();
        let set = ScenarioSet { scenarios, n };
        set.validate()?;
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.scenarios.iter().map(|s| s.probability).collect()
    }

    pub fn max_outputs(&self) -> usize {
        self.scenarios.iter().map(|s| s.outputs()).max().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        let total: f64 = self.scenarios.iter().map(|s| s.probability).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!("scenario probabilities sum to {total}")));
        }
        for s in &self.scenarios {
            if !(s.probability > 0.0) {
                return Err(Error::Config(format!("scenario {} has non-positive probability", s.index)));
            }
            if s.c.ncols() != self.n && s.c.nrows() > 0 {
                return Err(Error::Dimension(format!("scenario {} output matrix has {} columns, expected {}", s.index, s.c.ncols(), self.n)));
            }
            if s.sigma.shape() != (s.c.nrows(), s.c.nrows()) {
                return Err(Error::Dimension(format!("scenario {} noise matrix is {:?}", s.index, s.sigma.shape())));
            }
        }
        Ok(())
    }

    /// Replaces scenario `index`'s noise matrix by diag(values); a single value is broadcast.
    pub fn override_sigma(&mut self, index: usize, values: &[f64]) -> Result<()> {
        let s = self
            .scenarios
            .iter_mut()
            .find(|s| s.index == index)
            .ok_or_else(|| Error::Config(format!("no scenario {index} to override")))?;
        let r = s.outputs();
        let diag: Vec<f64> = match values.len() {
            1 => vec![values[0]; r],
            k if k == r => values.to_vec(),
            k => return Err(Error::Config(format!("scenario {index} has {r} outputs but {k} noise values"))),
        };
        if diag.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::Config("noise intensities must be non-negative".into()));
        }
        s.sigma = Matrix::from_diagonal(&Vector::from_vec(diag));
        Ok(())
    }
}

/// Every up/down subset of the channels as a scenario; zero-probability subsets are dropped.
pub fn scenarios_from_channels(channels: &[SensorChannel]) -> Result<ScenarioSet> {
    let c = channels.len();
    if c == 0 {
        return Err(Error::Config("at least one sensor channel is required".into()));
    }
    if c > MAX_CHANNELS {
        return Err(Error::Config(format!("{c} channels exceed the limit of {MAX_CHANNELS}")));
    }
    let n = channels[0].row.len();
    for ch in channels {
        if ch.row.len() != n {
            return Err(Error::Dimension(format!("channel {} has {} entries, expected {n}", ch.name, ch.row.len())));
        }
        if ch.row.iter().all(|v| *v == 0.0) || ch.row.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config(format!("channel {} has an invalid selector row", ch.name)));
        }
        if !(ch.delivery_ratio > 0.0 && ch.delivery_ratio <= 1.0) {
            return Err(Error::Config(format!("channel {} delivery ratio must lie in (0, 1]", ch.name)));
        }
        if !(ch.noise_std >= 0.0) {
            return Err(Error::Config(format!("channel {} noise must be non-negative", ch.name)));
        }
    }
    let mut scenarios = Vec::new();
    for down in 0..(1usize << c) {
        // bit (c-1-k) of `down` marks channel k as lost
        let is_up = |k: usize| down & (1 << (c - 1 - k)) == 0;
        let p: f64 = (0..c)
            .map(|k| if is_up(k) { channels[k].delivery_ratio } else { 1.0 - channels[k].delivery_ratio })
            .product();
        if p <= 0.0 {
            continue;
        }
        let ups: Vec<usize> = (0..c).filter(|&k| is_up(k)).collect();
        let mut cm = Matrix::zeros(ups.len(), n);
        for (r, &k) in ups.iter().enumerate() {
            cm.set_row(r, &nalgebra::RowDVector::from_row_slice(&channels[k].row));
        }
        let sigma = Matrix::from_diagonal(&Vector::from_iterator(ups.len(), ups.iter().map(|&k| channels[k].noise_std)));
        scenarios.push(Scenario {
            index: scenarios.len() + 1,
            c: cm,
            sigma,
            probability: p,
            up: ups.iter().map(|&k| channels[k].name.clone()).collect(),
        });
    }
    let set = ScenarioSet { scenarios, n };
    set.validate()?;
    Ok(set)
}

/// α₀..α_{K−1} (0-based scenario positions), drawn i.i.d. from the scenario probabilities.
pub fn sample_skeleton(set: &ScenarioSet, k: usize, seed: u64) -> Vec<usize> {
    let mut rng = rng::stream(seed, rng::SWITCHING);
    if set.len() == 1 {
        return vec![0; k];
    }
    let dist = WeightedIndex::new(set.probabilities()).expect("validated probabilities");
    (0..k).map(|_| dist.sample(&mut rng)).collect()
}
