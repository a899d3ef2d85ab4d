use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::flow::{finish, newton, Layout, PfState};
use super::{solve_network_from, BusKind, GridModel, NetworkSolution};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Operating point: interleaved state [δ₁, ω₁, δ₂, ω₂, …] plus the network solution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Equilibrium {
    pub state: Vec<f64>,
    pub network: NetworkSolution,
    /// Real-power input per bus actually used (the angle-reference input is solved for on slack-free grids).
    pub p_in: Vec<f64>,
    /// (bus id, solved input, configured input) for the balancing bus of a slack-free grid.
    pub balancing: Option<(usize, f64, f64)>,
}

#[derive(Clone, Debug)]
pub struct LinearizedSystem {
    pub a: Matrix,
    pub b1: Matrix,
    pub b2: Matrix,
    pub d1: Matrix,
    pub d2: Matrix,
    pub equilibrium: Equilibrium,
    pub state_labels: Vec<String>,
    /// ∞-norm of ẋ at the equilibrium.
    pub equilibrium_residual: f64,
    /// Finite-difference step that passed the Richardson check, and the observed gap.
    pub fd_step: f64,
    pub richardson_gap: f64,
}

pub fn find_equilibrium(grid: &GridModel) -> Result<Equilibrium> {
    grid.validate()?;
    let dy = grid.dynamic_buses();
    if dy.is_empty() {
        return Err(Error::Model("grid has no dynamic buses".into()));
    }
    let lay = Layout::equilibrium(grid);
    let mut st = PfState::flat(grid);
    if let Some(r) = grid.angle_reference() {
        st.ang[r] = grid.buses[r].angle;
    }
    let (it, res) = newton(grid, &lay, &mut st, "equilibrium").map_err(|e| match e {
        Error::NoConvergence { iterations, residual } => {
            Error::Model(format!("no equilibrium in the operating range ({iterations} iterations, residual {residual:.3e})"))
        }
        other => other,
    })?;
    let network = finish(grid, &st, it, res);
    let mut state = Vec::with_capacity(2 * dy.len());
    for &i in &dy {
        state.push(st.ang[i]);
        state.push(0.0);
    }
    let balancing = lay.balance.map(|b| (grid.buses[b].id, st.p_in[b], grid.buses[b].p_in));
    Ok(Equilibrium { state, network, p_in: st.p_in, balancing })
}

fn omega_dot(grid: &GridModel, p_in: &[f64], loads: &[f64], net: &NetworkSolution, omega: &[f64]) -> Vec<f64> {
    grid.dynamic_buses()
        .iter()
        .enumerate()
        .map(|(k, &i)| {
            let b = &grid.buses[i];
            (p_in[i] - loads[i] - net.p_net[i] - b.damping * omega[k]) / b.inertia
        })
        .collect()
}

/// Nonlinear right-hand side ẋ = f(x) with the network re-solved at x's angles.
pub fn state_derivative(grid: &GridModel, eq: &Equilibrium, x: &[f64]) -> Result<Vec<f64>> {
    let g = grid.dynamic_buses().len();
    if x.len() != 2 * g {
        return Err(Error::Dimension(format!("state has {} entries, expected {}", x.len(), 2 * g)));
    }
    let angles: Vec<f64> = (0..g).map(|k| x[2 * k]).collect();
    let omega: Vec<f64> = (0..g).map(|k| x[2 * k + 1]).collect();
    let net = solve_network_from(grid, &angles, &eq.network)?;
    let loads: Vec<f64> = grid.buses.iter().map(|b| b.p_load).collect();
    let wd = omega_dot(grid, &eq.p_in, &loads, &net, &omega);
    let mut out = Vec::with_capacity(2 * g);
    for k in 0..g {
        out.push(omega[k]);
        out.push(wd[k]);
    }
    Ok(out)
}

#[derive(Clone, Copy)]
enum Coord {
    Angle(usize),
    Load(usize),
    Input(usize),
}

/// ω̇ of every dynamic bus after moving one coordinate by `h` (ω held at zero).
fn perturbed(grid: &GridModel, eq: &Equilibrium, c: Coord, h: f64) -> Result<Vec<f64>> {
    let dy = grid.dynamic_buses();
    let mut angles: Vec<f64> = dy.iter().map(|&i| eq.network.angles[i]).collect();
    let mut g = grid.clone();
    match c {
        Coord::Angle(k) => angles[k] += h,
        Coord::Load(i) => g.buses[i].p_load += h,
        Coord::Input(i) => g.buses[i].p_in += h,
    }
    let mut p_in = eq.p_in.clone();
    if let Coord::Input(i) = c {
        p_in[i] += h;
    }
    let net = solve_network_from(&g, &angles, &eq.network)?;
    let loads: Vec<f64> = g.buses.iter().map(|b| b.p_load).collect();
    Ok(omega_dot(&g, &p_in, &loads, &net, &vec![0.0; dy.len()]))
}

fn central(grid: &GridModel, eq: &Equilibrium, c: Coord, h: f64) -> Result<Vec<f64>> {
    let up = perturbed(grid, eq, c, h)?;
    let dn = perturbed(grid, eq, c, -h)?;
    Ok(up.iter().zip(&dn).map(|(u, d)| (u - d) / (2.0 * h)).collect())
}

const FD_STEPS: [f64; 4] = [1e-5, 1e-4, 1e-3, 1e-6];
const RICHARDSON_REL: f64 = 1e-4;

/// Central difference validated by comparing steps h and h/2.
fn derivative(grid: &GridModel, eq: &Equilibrium, c: Coord) -> Result<(Vec<f64>, f64, f64)> {
    let mut best: Option<(Vec<f64>, f64, f64)> = None;
    for &h in &FD_STEPS {
        let d1 = central(grid, eq, c, h)?;
        let d2 = central(grid, eq, c, h / 2.0)?;
        let scale = d2.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1e-12);
        let gap = d1.iter().zip(&d2).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs())) / scale;
        if gap <= RICHARDSON_REL {
            return Ok((d2, h, gap));
        }
        if best.as_ref().is_none_or(|b| gap < b.2) {
            best = Some((d2, h, gap));
        }
    }
    let (_, h, gap) = best.unwrap();
    Err(Error::Model(format!("finite-difference derivative did not settle (best relative gap {gap:.2e} at h={h:e})")))
}

/// Directional second-order difference of ω̇ along an angle direction (for convergence checks).
pub fn angle_difference(grid: &GridModel, eq: &Equilibrium, dir: &[f64], h: f64) -> Result<Vec<f64>> {
    let dy = grid.dynamic_buses();
    let eval = |s: f64| -> Result<Vec<f64>> {
        let angles: Vec<f64> = dy.iter().enumerate().map(|(k, &i)| eq.network.angles[i] + s * dir[k]).collect();
        let net = solve_network_from(grid, &angles, &eq.network)?;
        let loads: Vec<f64> = grid.buses.iter().map(|b| b.p_load).collect();
        Ok(omega_dot(grid, &eq.p_in, &loads, &net, &vec![0.0; dy.len()]))
    };
    let (u, d) = (eval(h)?, eval(-h)?);
    Ok(u.iter().zip(&d).map(|(a, b)| (a - b) / (2.0 * h)).collect())
}

pub fn linearize(grid: &GridModel, eq: &Equilibrium) -> Result<LinearizedSystem> {
    let dy = grid.dynamic_buses();
    let g = dy.len();
    let n = 2 * g;
    let nd: Vec<usize> = (0..grid.buses.len()).filter(|&i| grid.buses[i].kind == BusKind::NonDynamic).collect();
    let disp: Vec<usize> = nd.iter().copied().filter(|&i| grid.buses[i].dispatchable).collect();

    let mut coords: Vec<Coord> = (0..g).map(Coord::Angle).collect();
    coords.extend(nd.iter().map(|&i| Coord::Load(i)));
    coords.extend(disp.iter().map(|&i| Coord::Input(i)));
    let cols: Vec<(Vec<f64>, f64, f64)> = coords.par_iter().map(|&c| derivative(grid, eq, c)).collect::<Result<_>>()?;

    let mut a = Matrix::zeros(n, n);
    let mut b1 = Matrix::zeros(n, g);
    let mut d1 = Matrix::zeros(n, g);
    let mut b2 = Matrix::zeros(n, disp.len());
    let mut d2 = Matrix::zeros(n, nd.len());
    for (k, &i) in dy.iter().enumerate() {
        let bus = &grid.buses[i];
        a[(2 * k, 2 * k + 1)] = 1.0;
        a[(2 * k + 1, 2 * k + 1)] = -bus.damping / bus.inertia;
        b1[(2 * k + 1, k)] = 1.0 / bus.inertia;
        d1[(2 * k + 1, k)] = -1.0 / bus.inertia;
    }
    let (mut step, mut gap) = (0.0_f64, 0.0_f64);
    for (c, (col, h, gp)) in coords.iter().zip(&cols) {
        step = step.max(*h);
        gap = gap.max(*gp);
        let target = match *c {
            Coord::Angle(k) => (&mut a, 2 * k),
            Coord::Load(i) => (&mut d2, nd.iter().position(|&j| j == i).unwrap()),
            Coord::Input(i) => (&mut b2, disp.iter().position(|&j| j == i).unwrap()),
        };
        for (r, v) in col.iter().take(g).enumerate() {
            target.0[(2 * r + 1, target.1)] = *v;
        }
    }

    let f = state_derivative(grid, eq, &eq.state)?;
    let equilibrium_residual = f.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let state_labels = dy
        .iter()
        .flat_map(|&i| {
            let id = grid.buses[i].id;
            [format!("{id}.delta"), format!("{id}.omega")]
        })
        .collect();
    Ok(LinearizedSystem { a, b1, b2, d1, d2, equilibrium: eq.clone(), state_labels, equilibrium_residual, fd_step: step, richardson_gap: gap })
}
