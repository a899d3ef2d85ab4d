//! Per-scenario observability decomposition, subsystem gain design and the
//! coordinated observer that recombines the subsystem estimates.

mod coordinated;

pub use coordinated::{build, CoordinatedObserver, Discretization, MeasurementModel};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{self, kernel_base, orthonormal_complement, place_poles, Matrix, Tolerance, C64};
use crate::shs::{Scenario, ScenarioSet};

/// [C; CA; …; CA^{n−1}]
pub fn observability_matrix(c: &Matrix, a: &Matrix) -> Matrix {
    let n = a.nrows();
    let r = c.nrows();
    let mut w = Matrix::zeros(n * r, n);
    let mut blk = c.clone();
    for k in 0..n {
        w.view_mut((k * r, 0), (r, n)).copy_from(&blk);
        blk = &blk * a;
    }
    w
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankReport {
    pub n: usize,
    pub combined_rank: usize,
    /// Observable dimension n_i per scenario.
    pub scenario_ranks: Vec<usize>,
}

impl RankReport {
    pub fn full(&self) -> bool {
        self.combined_rank == self.n
    }
}

pub fn check_combined_observability(set: &ScenarioSet, a: &Matrix, tol: &Tolerance) -> RankReport {
    let n = a.nrows();
    let ws: Vec<Matrix> = set.scenarios.iter().map(|s| observability_matrix(&s.c, a)).collect();
    let scenario_ranks = ws.iter().map(|w| numerics::rank(w, tol)).collect();
    let stacked = numerics::vstack(&ws, n);
    RankReport { n, combined_rank: numerics::rank(&stacked, tol), scenario_ranks }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Completion {
    /// N spans the orthogonal complement of ker W, so T is orthogonal.
    #[default]
    Orthonormal,
    /// N is made of identity columns outside the kernel's pivot coordinates.
    PaperIdentity,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Recombination {
    /// The active scenario's subsystem filter corrects x̂ through T_i; x̂_{k+1} = T_i[ψ̂; φ̂].
    #[default]
    Transform,
    /// All blocks stacked, inactive ones propagated open loop, x̂_{k+1} = Φφ̂.
    Stacked,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SubsystemDecomposition {
    pub index: usize,
    pub c: Matrix,
    pub w: Matrix,
    pub n_i: usize,
    pub m: Matrix,
    pub nmat: Matrix,
    pub t: Matrix,
    pub t_inv: Matrix,
    pub g: Matrix,
    pub f: Matrix,
    pub a11: Matrix,
    pub a12: Matrix,
    pub a22: Matrix,
    pub c2: Matrix,
    pub sigma: Matrix,
    pub gain: Option<Matrix>,
    pub ac: Option<Matrix>,
    pub poles: Vec<C64>,
    /// True when a longer pole list was cut down to n_i entries.
    pub poles_truncated: bool,
    /// ‖(T⁻¹AT)₂₁‖ and ‖(CT)_{:,1..n−n_i}‖ — zero up to rounding.
    pub structural_residual: (f64, f64),
}

impl SubsystemDecomposition {
    pub fn outputs(&self) -> usize {
        self.c2.nrows()
    }

    /// State-space gain N·L of the subsystem filter (n×r), zero when there is no filter.
    pub fn state_gain(&self) -> Matrix {
        match &self.gain {
            Some(l) => &self.nmat * l,
            None => Matrix::zeros(self.t.nrows(), self.outputs()),
        }
    }
}

fn identity_completion(m: &Matrix) -> Result<Matrix> {
    let n = m.nrows();
    let mut pivots: Vec<usize> = Vec::new();
    for col in m.column_iter() {
        let free: Vec<usize> = (0..n).filter(|i| !pivots.contains(i)).collect();
        let top = free.iter().map(|&i| col[i].abs()).fold(0.0, f64::max);
        // first coordinate within rounding of the largest magnitude
        let p = free
            .into_iter()
            .find(|&i| col[i].abs() >= top * (1.0 - 1e-9))
            .ok_or_else(|| Error::Model("kernel wider than the state".into()))?;
        pivots.push(p);
    }
    let rest: Vec<usize> = (0..n).filter(|i| !pivots.contains(i)).collect();
    let mut nm = Matrix::zeros(n, rest.len());
    for (k, &i) in rest.iter().enumerate() {
        nm[(i, k)] = 1.0;
    }
    Ok(nm)
}

pub fn decompose(a: &Matrix, scenario: &Scenario, completion: Completion, tol: &Tolerance) -> Result<SubsystemDecomposition> {
    let n = a.nrows();
    let c = &scenario.c;
    let r = c.nrows();
    let w = if r == 0 { Matrix::zeros(0, n) } else { observability_matrix(c, a) };
    let n_i = if r == 0 { 0 } else { numerics::rank(&w, tol) };
    let k = n - n_i;
    let (m, nmat) = if n_i == n {
        (Matrix::zeros(n, 0), Matrix::identity(n, n))
    } else if n_i == 0 {
        (Matrix::identity(n, n), Matrix::zeros(n, 0))
    } else {
        let m = kernel_base(&w, tol);
        let nm = match completion {
            Completion::Orthonormal => orthonormal_complement(&m, tol),
            Completion::PaperIdentity => identity_completion(&m)?,
        };
        (m, nm)
    };
    let mut t = Matrix::zeros(n, n);
    t.view_mut((0, 0), (n, k)).copy_from(&m);
    t.view_mut((0, k), (n, n_i)).copy_from(&nmat);
    let t_inv = match completion {
        Completion::Orthonormal => t.transpose(),
        Completion::PaperIdentity => t.clone().try_inverse().ok_or(Error::Singular("identity completion"))?,
    };
    let at = &t_inv * a * &t;
    let ct = if r == 0 { Matrix::zeros(0, n) } else { c * &t };
    let structural_residual = (numerics::operator_norm(&at.view((k, 0), (n_i, k)).into_owned()), numerics::operator_norm(&ct.view((0, 0), (r, k)).into_owned()));
    Ok(SubsystemDecomposition {
        index: scenario.index,
        c: if r == 0 { Matrix::zeros(0, n) } else { c.clone() },
        w,
        n_i,
        g: t_inv.rows(0, k).into_owned(),
        f: t_inv.rows(k, n_i).into_owned(),
        a11: at.view((0, 0), (k, k)).into_owned(),
        a12: at.view((0, k), (k, n_i)).into_owned(),
        a22: at.view((k, k), (n_i, n_i)).into_owned(),
        c2: ct.view((0, k), (r, n_i)).into_owned(),
        sigma: scenario.sigma.clone(),
        m,
        nmat,
        t,
        t_inv,
        gain: None,
        ac: None,
        poles: Vec::new(),
        poles_truncated: false,
        structural_residual,
    })
}

/// A pole given either as a real number or as `[re, im]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Pole {
    Real(f64),
    Complex([f64; 2]),
}

impl Pole {
    pub fn value(&self) -> C64 {
        match *self {
            Pole::Real(r) => C64::new(r, 0.0),
            Pole::Complex([re, im]) => C64::new(re, im),
        }
    }

    fn scaled(&self, s: f64) -> Pole {
        match *self {
            Pole::Real(r) => Pole::Real(r * s),
            Pole::Complex([re, im]) => Pole::Complex([re * s, im * s]),
        }
    }
}

/// Desired closed-loop poles: one list for every scenario, optionally overridden per scenario (1-based).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PoleSpec {
    #[serde(default)]
    pub common: Vec<Pole>,
    #[serde(default)]
    pub per_scenario: BTreeMap<usize, Vec<Pole>>,
}

impl PoleSpec {
    pub fn real(poles: &[f64]) -> Self {
        PoleSpec { common: poles.iter().map(|&p| Pole::Real(p)).collect(), per_scenario: BTreeMap::new() }
    }

    pub fn scaled(&self, s: f64) -> Self {
        let sc = |v: &Vec<Pole>| v.iter().map(|p| p.scaled(s)).collect::<Vec<_>>();
        PoleSpec { common: sc(&self.common), per_scenario: self.per_scenario.iter().map(|(k, v)| (*k, sc(v))).collect() }
    }

    fn for_scenario(&self, index: usize, n_i: usize) -> Result<(Vec<C64>, bool)> {
        let list = self.per_scenario.get(&index).unwrap_or(&self.common);
        let all: Vec<C64> = list.iter().map(Pole::value).collect();
        match all.len().cmp(&n_i) {
            std::cmp::Ordering::Equal => Ok((all, false)),
            std::cmp::Ordering::Greater => Ok((all[..n_i].to_vec(), true)),
            std::cmp::Ordering::Less => Err(Error::Config(format!(
                "scenario {index} needs {n_i} poles but {} were given",
                all.len()
            ))),
        }
    }
}

pub fn design_gains(decomps: &mut [SubsystemDecomposition], poles: &PoleSpec) -> Result<()> {
    for d in decomps.iter_mut() {
        if d.n_i == 0 || d.outputs() == 0 {
            d.gain = None;
            d.ac = None;
            continue;
        }
        let (want, truncated) = poles.for_scenario(d.index, d.n_i)?;
        let l = place_poles(&d.a22, &d.c2, &want).map_err(|e| match e {
            Error::Unobservable { .. } => Error::Model(format!("scenario {}: reduced pair lost observability", d.index)),
            other => other,
        })?;
        d.ac = Some(&d.a22 - &l * &d.c2);
        d.gain = Some(l);
        d.poles = want;
        d.poles_truncated = truncated;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObserverSpec {
    pub tau: f64,
    #[serde(default = "default_nsub")]
    pub n_sub: usize,
    pub poles: PoleSpec,
    #[serde(default)]
    pub completion: Completion,
    #[serde(default)]
    pub recombination: Recombination,
}

fn default_nsub() -> usize {
    64
}

impl ObserverSpec {
    pub fn new(tau: f64, poles: PoleSpec) -> Self {
        ObserverSpec { tau, n_sub: default_nsub(), poles, completion: Completion::default(), recombination: Recombination::default() }
    }
}

/// decompose → combined-rank check → gains → assembly.
pub fn design_observer(a: &Matrix, set: &ScenarioSet, spec: &ObserverSpec, tol: &Tolerance) -> Result<CoordinatedObserver> {
    let report = check_combined_observability(set, a, tol);
    if !report.full() {
        return Err(Error::CombinedRank { rank: report.combined_rank, n: report.n });
    }
    let mut decomps = set.scenarios.iter().map(|s| decompose(a, s, spec.completion, tol)).collect::<Result<Vec<_>>>()?;
    design_gains(&mut decomps, &spec.poles)?;
    build(a, set, decomps, spec.tau, spec.recombination, tol)
}
