//! Power-network models: buses, lines, power flow, equilibrium and linearization.

mod flow;
mod linearize;
pub mod matpower;

pub use flow::{bus_injections, line_flow, solve_network, solve_network_from, NetworkSolution};
pub use linearize::{angle_difference, find_equilibrium, linearize, state_derivative, Equilibrium, LinearizedSystem};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BusKind {
    Dynamic,
    NonDynamic,
    Slack,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: usize,
    pub kind: BusKind,
    /// Fixed magnitude (or flat-start guess when free), pu.
    #[serde(default = "one")]
    pub voltage_magnitude: f64,
    /// Slack angle / initial guess, rad.
    #[serde(default)]
    pub angle: f64,
    #[serde(default)]
    pub inertia: f64,
    #[serde(default)]
    pub damping: f64,
    #[serde(default)]
    pub p_load: f64,
    #[serde(default)]
    pub q_load: f64,
    #[serde(default)]
    pub p_in: f64,
    #[serde(default)]
    pub voltage_fixed: bool,
    /// Non-dynamic injection treated as a control input (a B2 column).
    #[serde(default)]
    pub dispatchable: bool,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub from: usize,
    pub to: usize,
    pub r: f64,
    pub x: f64,
    /// Total line-charging admittance magnitude, split equally between the ends.
    #[serde(default)]
    pub shunt_admittance: f64,
    #[serde(default)]
    pub shunt_angle: f64,
}

impl Line {
    pub fn z(&self) -> f64 {
        self.r.hypot(self.x)
    }
    pub fn theta(&self) -> f64 {
        self.x.atan2(self.r)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridModel {
    #[serde(default)]
    pub name: String,
    pub buses: Vec<Bus>,
    pub lines: Vec<Line>,
    #[serde(default = "default_mva")]
    pub base_mva: f64,
    #[serde(default)]
    pub base_kv: f64,
}

fn default_mva() -> f64 {
    100.0
}

impl GridModel {
    pub fn from_json(text: &str) -> Result<Self> {
        let g: GridModel = serde_json::from_str(text)?;
        g.validate()?;
        Ok(g)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("grid serializes")
    }

    pub fn index_of(&self, id: usize) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    pub fn dynamic_buses(&self) -> Vec<usize> {
        (0..self.buses.len()).filter(|&i| self.buses[i].kind == BusKind::Dynamic).collect()
    }

    pub fn slack(&self) -> Option<usize> {
        self.buses.iter().position(|b| b.kind == BusKind::Slack)
    }

    /// Angle reference when there is no slack bus: the first dynamic bus.
    pub fn angle_reference(&self) -> Option<usize> {
        match self.slack() {
            Some(_) => None,
            None => self.dynamic_buses().first().copied(),
        }
    }

    pub fn state_dim(&self) -> usize {
        2 * self.dynamic_buses().len()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Model(m));
        if self.buses.is_empty() {
            return bad("grid has no buses".into());
        }
        let mut ids: Vec<usize> = self.buses.iter().map(|b| b.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return bad("duplicate bus id".into());
        }
        if self.buses.iter().filter(|b| b.kind == BusKind::Slack).count() > 1 {
            return bad("more than one slack bus".into());
        }
        for b in &self.buses {
            let vals = [b.voltage_magnitude, b.angle, b.inertia, b.damping, b.p_load, b.q_load, b.p_in];
            if vals.iter().any(|v| !v.is_finite()) {
                return bad(format!("bus {} has non-finite data", b.id));
            }
            if b.kind == BusKind::Dynamic && !(b.inertia > 0.0 && b.damping > 0.0) {
                return bad(format!("dynamic bus {} needs positive inertia and damping", b.id));
            }
            if !(b.voltage_magnitude > 0.0) {
                return bad(format!("bus {} has non-positive voltage", b.id));
            }
        }
        for l in &self.lines {
            if self.index_of(l.from).is_none() || self.index_of(l.to).is_none() {
                return bad(format!("line {}-{} references an unknown bus", l.from, l.to));
            }
            if l.from == l.to {
                return bad(format!("line {}-{} is a self loop", l.from, l.to));
            }
            if !(l.z() > 0.0) || !l.z().is_finite() {
                return bad(format!("line {}-{} has zero impedance", l.from, l.to));
            }
        }
        // connectivity by flood fill
        let n = self.buses.len();
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for l in &self.lines {
                let (a, b) = (self.index_of(l.from).unwrap(), self.index_of(l.to).unwrap());
                for (p, q) in [(a, b), (b, a)] {
                    if p == i && !seen[q] {
                        seen[q] = true;
                        stack.push(q);
                    }
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return bad("grid is not connected".into());
        }
        Ok(())
    }

    /// Copy with every input and load zeroed.
    pub fn unloaded(&self) -> GridModel {
        let mut g = self.clone();
        for b in &mut g.buses {
            b.p_in = 0.0;
            b.p_load = 0.0;
            b.q_load = 0.0;
        }
        g
    }
}

const TWO_BUS: &str = include_str!("../../data/two_bus.json");
const IEEE5: &str = include_str!("../../data/ieee5.json");
const CASE33: &str = include_str!("../../data/case33bw.m");
const IEEE33_DYNAMICS: &str = include_str!("../../data/ieee33_dynamics.json");

pub const BUILTIN_GRIDS: [&str; 3] = ["two_bus", "ieee5", "ieee33"];

pub fn builtin(name: &str) -> Result<GridModel> {
    let g = match name {
        "two_bus" => GridModel::from_json(TWO_BUS)?,
        "ieee5" => GridModel::from_json(IEEE5)?,
        "ieee33" => {
            let mut g = matpower::parse_case(CASE33)?;
            matpower::apply_dynamics(&mut g, IEEE33_DYNAMICS)?;
            g.name = "ieee33".into();
            g
        }
        other => return Err(Error::Config(format!("unknown builtin grid `{other}` (expected one of {BUILTIN_GRIDS:?})"))),
    };
    g.validate()?;
    Ok(g)
}
