//! Run configuration (JSON) and its resolution into model objects.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{self, find_equilibrium, linearize, GridModel, LinearizedSystem};
use crate::numerics::Matrix;
use crate::observer::{MeasurementModel, ObserverSpec, PoleSpec};
use crate::shs::{scenarios_from_channels, ScenarioSet, SensorChannel};
use crate::sim::SimConfig;

/// Where the state matrix comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemSource {
    /// Built-in grid (`two_bus`, `ieee5`, `ieee33`), linearized at its equilibrium.
    Grid(String),
    /// Grid JSON file, linearized.
    GridFile(PathBuf),
    /// MATPOWER case file plus an optional JSON overlay naming the dynamic buses.
    Matpower { case: PathBuf, dynamics: Option<PathBuf> },
    /// Built-in state matrix (`ieee5_reference`, `ieee33_reference`).
    StateSpace(String),
    /// State-matrix JSON file with `a` and optional `state_labels`.
    StateSpaceFile(PathBuf),
    /// Inline state matrix.
    Matrix { a: Vec<Vec<f64>>, #[serde(default)] state_labels: Vec<String> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    /// `"<bus>.<delta|omega>"`, resolved against the state labels.
    #[serde(default)]
    pub measure: Option<String>,
    /// Explicit selector row (used when `measure` is absent).
    #[serde(default)]
    pub row: Option<Vec<f64>>,
    pub rho: f64,
    pub sigma: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SimSection {
    /// Initial estimation error; x̂₀ = x₀ + e0.
    #[serde(default)]
    pub e0: Option<Vec<f64>>,
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    #[serde(default)]
    pub xhat0: Option<Vec<f64>>,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub switching_seed: Option<u64>,
    #[serde(default)]
    pub n_sub: Option<usize>,
    #[serde(default)]
    pub measurement: MeasurementModel,
}

fn default_k() -> usize {
    60
}
fn default_replicas() -> usize {
    30
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OutputSection {
    #[serde(default)]
    pub directory: Option<PathBuf>,
    #[serde(default)]
    pub gnuplot: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default)]
    pub description: String,
    pub system: SystemSource,
    #[serde(default)]
    pub channels: Vec<ChannelSpec>,
    /// 1-based scenario index → diagonal noise values (one value is broadcast).
    #[serde(default)]
    pub scenario_sigma_overrides: BTreeMap<usize, Vec<f64>>,
    #[serde(default)]
    pub observer: Option<ObserverSpec>,
    #[serde(default)]
    pub sim: SimSection,
    #[serde(default)]
    pub outputs: OutputSection,
    /// Sweep of pole scale factors for tradeoff reports.
    #[serde(default)]
    pub pole_scales: Vec<f64>,
    /// Named modifications run side by side (e.g. several delivery ratios).
    #[serde(default)]
    pub variants: Vec<Variant>,
}

/// Overrides applied on top of a base config; unset fields keep the base value.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Variant {
    pub label: String,
    /// Per-channel delivery ratios, in channel order.
    #[serde(default)]
    pub rho: Option<Vec<f64>>,
    #[serde(default)]
    pub channels: Option<Vec<ChannelSpec>>,
    #[serde(default)]
    pub poles: Option<PoleSpec>,
    #[serde(default)]
    pub tau: Option<f64>,
    #[serde(default)]
    pub scenario_sigma_overrides: Option<BTreeMap<usize, Vec<f64>>>,
}

/// A resolved state matrix, with the grid artifacts when it came from a grid.
#[derive(Clone, Debug)]
pub struct System {
    pub a: Matrix,
    pub state_labels: Vec<String>,
    pub grid: Option<GridModel>,
    pub linearized: Option<LinearizedSystem>,
}

#[derive(Deserialize)]
struct StateSpaceFile {
    a: Vec<Vec<f64>>,
    #[serde(default)]
    state_labels: Vec<String>,
}

const IEEE5_REFERENCE: &str = include_str!("../data/ieee5_reference.json");
const IEEE33_REFERENCE: &str = include_str!("../data/ieee33_reference.json");
pub const BUILTIN_STATE_SPACES: [&str; 2] = ["ieee5_reference", "ieee33_reference"];

pub fn rows_to_matrix(rows: &[Vec<f64>]) -> Result<Matrix> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        return Err(Error::Config("ragged matrix rows".into()));
    }
    let m = Matrix::from_fn(r, c, |i, j| rows[i][j]);
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("configured matrix"));
    }
    Ok(m)
}

pub fn matrix_to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn state_space(text: &str) -> Result<(Matrix, Vec<String>)> {
    let f: StateSpaceFile = serde_json::from_str(text)?;
    let a = rows_to_matrix(&f.a)?;
    if !a.is_square() {
        return Err(Error::Config("state matrix must be square".into()));
    }
    Ok((a, f.state_labels))
}

pub fn builtin_state_space(name: &str) -> Result<(Matrix, Vec<String>)> {
    match name {
        "ieee5_reference" => state_space(IEEE5_REFERENCE),
        "ieee33_reference" => state_space(IEEE33_REFERENCE),
        other => Err(Error::Config(format!("unknown builtin state matrix `{other}` (expected one of {BUILTIN_STATE_SPACES:?})"))),
    }
}

fn default_labels(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("x{i}")).collect()
}

fn read(base: &Path, p: &Path) -> Result<String> {
    let full = if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
    std::fs::read_to_string(&full).map_err(|e| Error::Config(format!("cannot read {}: {e}", full.display())))
}

pub fn load_grid(base: &Path, src: &SystemSource) -> Result<Option<GridModel>> {
    Ok(match src {
        SystemSource::Grid(name) => Some(grid::builtin(name)?),
        SystemSource::GridFile(p) => Some(GridModel::from_json(&read(base, p)?)?),
        SystemSource::Matpower { case, dynamics } => {
            let mut g = grid::matpower::parse_case(&read(base, case)?)?;
            if let Some(d) = dynamics {
                grid::matpower::apply_dynamics(&mut g, &read(base, d)?)?;
            }
            g.validate()?;
            Some(g)
        }
        _ => None,
    })
}

impl RunConfig {
    /// A config with only a system source and defaults elsewhere.
    pub fn for_system(system: SystemSource) -> Self {
        RunConfig {
            description: String::new(),
            system,
            channels: Vec::new(),
            scenario_sigma_overrides: BTreeMap::new(),
            observer: None,
            sim: SimSection { k: default_k(), replicas: default_replicas(), ..SimSection::default() },
            outputs: OutputSection::default(),
            pole_scales: Vec::new(),
            variants: Vec::new(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: RunConfig = serde_json::from_str(text)?;
        c.check()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    fn check(&self) -> Result<()> {
        if let Some(o) = &self.observer {
            if !(o.tau > 0.0 && o.tau.is_finite()) {
                return Err(Error::Config("observer.tau must be positive".into()));
            }
        }
        Ok(())
    }

    /// Resolves the system; relative paths are taken from `base`.
    pub fn system(&self, base: &Path) -> Result<System> {
        if let Some(g) = load_grid(base, &self.system)? {
            let eq = find_equilibrium(&g)?;
            let lin = linearize(&g, &eq)?;
            return Ok(System { a: lin.a.clone(), state_labels: lin.state_labels.clone(), grid: Some(g), linearized: Some(lin) });
        }
        let (a, labels) = match &self.system {
            SystemSource::StateSpace(name) => builtin_state_space(name)?,
            SystemSource::StateSpaceFile(p) => state_space(&read(base, p)?)?,
            SystemSource::Matrix { a, state_labels } => {
                let m = rows_to_matrix(a)?;
                if !m.is_square() {
                    return Err(Error::Config("state matrix must be square".into()));
                }
                (m, state_labels.clone())
            }
            _ => unreachable!("grid sources handled above"),
        };
        let labels = if labels.len() == a.nrows() { labels } else { default_labels(a.nrows()) };
        Ok(System { a, state_labels: labels, grid: None, linearized: None })
    }

    pub fn channels(&self, labels: &[String]) -> Result<Vec<SensorChannel>> {
        let n = labels.len();
        self.channels
            .iter()
            .map(|c| {
                let (name, row) = match (&c.measure, &c.row) {
                    (Some(m), _) => {
                        let i = labels
                            .iter()
                            .position(|l| l == m)
                            .ok_or_else(|| Error::Config(format!("channel `{m}` matches no state (states: {labels:?})")))?;
                        let mut row = vec![0.0; n];
                        row[i] = 1.0;
                        (m.clone(), row)
                    }
                    (None, Some(r)) => (format!("row{:?}", r), r.clone()),
                    (None, None) => return Err(Error::Config("channel needs `measure` or `row`".into())),
                };
                Ok(SensorChannel { name, row, delivery_ratio: c.rho, noise_std: c.sigma })
            })
            .collect()
    }

    pub fn scenario_set(&self, labels: &[String]) -> Result<ScenarioSet> {
        let mut set = scenarios_from_channels(&self.channels(labels)?)?;
        for (idx, vals) in &self.scenario_sigma_overrides {
            set.override_sigma(*idx, vals)?;
        }
        Ok(set)
    }

    /// The config with `v` applied and the variant list cleared.
    pub fn with_variant(&self, v: &Variant) -> Result<RunConfig> {
        let mut c = self.clone();
        c.variants.clear();
        if let Some(ch) = &v.channels {
            c.channels = ch.clone();
        }
        if let Some(rho) = &v.rho {
            if rho.len() != c.channels.len() {
                return Err(Error::Config(format!("variant `{}`: {} delivery ratios for {} channels", v.label, rho.len(), c.channels.len())));
            }
            for (ch, r) in c.channels.iter_mut().zip(rho) {
                ch.rho = *r;
            }
        }
        if let Some(o) = &v.scenario_sigma_overrides {
            c.scenario_sigma_overrides = o.clone();
        }
        if v.poles.is_some() || v.tau.is_some() {
            let spec = c.observer.as_mut().ok_or_else(|| Error::Config(format!("variant `{}` needs an observer section", v.label)))?;
            if let Some(p) = &v.poles {
                spec.poles = p.clone();
            }
            if let Some(t) = v.tau {
                spec.tau = t;
            }
        }
        c.check()?;
        Ok(c)
    }

    /// `(label, config)` for each variant, or the config itself when there are none.
    pub fn expand(&self) -> Result<Vec<(String, RunConfig)>> {
        if self.variants.is_empty() {
            return Ok(vec![("base".to_string(), self.clone())]);
        }
        self.variants.iter().map(|v| Ok((v.label.clone(), self.with_variant(v)?))).collect()
    }

    pub fn observer_spec(&self) -> Result<&ObserverSpec> {
        self.observer.as_ref().ok_or_else(|| Error::Config("config has no `observer` section".into()))
    }

    pub fn sim_config(&self, n: usize) -> Result<SimConfig> {
        let s = &self.sim;
        let x0 = s.x0.clone().unwrap_or_else(|| vec![0.0; n]);
        let xhat0 = match (&s.xhat0, &s.e0) {
            (Some(x), _) => x.clone(),
            (None, Some(e)) => {
                if e.len() != n {
                    return Err(Error::Dimension(format!("e0 has {} entries, expected {n}", e.len())));
                }
                x0.iter().zip(e).map(|(a, b)| a + b).collect()
            }
            (None, None) => x0.clone(),
        };
        let n_sub = s.n_sub.or(self.observer.as_ref().map(|o| o.n_sub)).unwrap_or(64);
        let cfg = SimConfig {
            x0,
            xhat0,
            k: s.k,
            n_sub,
            replicas: s.replicas,
            seed: s.seed,
            switching_seed: s.switching_seed,
            measurement: s.measurement,
            forced_path: None,
        };
        Ok(cfg)
    }
}
