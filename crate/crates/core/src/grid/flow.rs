use serde::{Deserialize, Serialize};

use super::{BusKind, GridModel, Line};
use crate::error::{Error, Result};
use crate::numerics::{Matrix, Vector};

pub(crate) const PF_TOL: f64 = 1e-11;
const PF_MAX_ITER: usize = 50;

/// Sending-end (P, Q) on `line` from bus i to bus j; |Z| is the impedance magnitude.
pub fn line_flow(vi: f64, di: f64, vj: f64, dj: f64, line: &Line) -> (f64, f64) {
    let (z, th) = (line.z(), line.theta());
    let a = th + di - dj;
    let p = vi * vi / z * th.cos() - vi * vj / z * a.cos();
    let q = vi * vi / z * th.sin() - vi * vj / z * a.sin();
    (p, q)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkSolution {
    /// Bus angles in grid order, rad.
    pub angles: Vec<f64>,
    pub voltages: Vec<f64>,
    /// Net real / reactive power leaving each bus into the network (lines + shunts).
    pub p_net: Vec<f64>,
    pub q_net: Vec<f64>,
    /// Injection absorbed by the slack bus (P, Q), when there is one.
    pub slack_power: Option<(f64, f64)>,
    pub iterations: usize,
    pub residual: f64,
}

fn endpoints(grid: &GridModel, l: &Line) -> (usize, usize) {
    (grid.index_of(l.from).unwrap(), grid.index_of(l.to).unwrap())
}

/// Net power leaving every bus for the given phasors.
pub fn bus_injections(grid: &GridModel, ang: &[f64], v: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = grid.buses.len();
    let (mut p, mut q) = (vec![0.0; n], vec![0.0; n]);
    for l in &grid.lines {
        let (a, b) = endpoints(grid, l);
        let (pab, qab) = line_flow(v[a], ang[a], v[b], ang[b], l);
        let (pba, qba) = line_flow(v[b], ang[b], v[a], ang[a], l);
        p[a] += pab;
        q[a] += qab;
        p[b] += pba;
        q[b] += qba;
        let y = 0.5 * l.shunt_admittance;
        for k in [a, b] {
            p[k] += v[k] * v[k] * y * l.shunt_angle.cos();
            q[k] -= v[k] * v[k] * y * l.shunt_angle.sin();
        }
    }
    (p, q)
}

/// Dense Jacobians dP/dδ, dP/dV, dQ/dδ, dQ/dV over all buses.
fn injection_jacobian(grid: &GridModel, ang: &[f64], v: &[f64]) -> [Matrix; 4] {
    let n = grid.buses.len();
    let mut pd = Matrix::zeros(n, n);
    let mut pv = Matrix::zeros(n, n);
    let mut qd = Matrix::zeros(n, n);
    let mut qv = Matrix::zeros(n, n);
    for l in &grid.lines {
        let (a, b) = endpoints(grid, l);
        let (z, th) = (l.z(), l.theta());
        for (i, j) in [(a, b), (b, a)] {
            let arg = th + ang[i] - ang[j];
            let (s, c) = arg.sin_cos();
            let vv = v[i] * v[j] / z;
            pd[(i, i)] += vv * s;
            pd[(i, j)] -= vv * s;
            pv[(i, i)] += 2.0 * v[i] / z * th.cos() - v[j] / z * c;
            pv[(i, j)] -= v[i] / z * c;
            qd[(i, i)] -= vv * c;
            qd[(i, j)] += vv * c;
            qv[(i, i)] += 2.0 * v[i] / z * th.sin() - v[j] / z * s;
            qv[(i, j)] -= v[i] / z * s;
        }
        let y = 0.5 * l.shunt_admittance;
        for k in [a, b] {
            pv[(k, k)] += 2.0 * v[k] * y * l.shunt_angle.cos();
            qv[(k, k)] -= 2.0 * v[k] * y * l.shunt_angle.sin();
        }
    }
    [pd, pv, qd, qv]
}

/// Which quantities are unknown and which balances are enforced.
pub(crate) struct Layout {
    pub ang: Vec<usize>,
    pub volt: Vec<usize>,
    pub p_rows: Vec<usize>,
    pub q_rows: Vec<usize>,
    /// Bus whose real-power input is solved for (no-slack grids).
    pub balance: Option<usize>,
}

impl Layout {
    pub fn network(grid: &GridModel) -> Layout {
        let nd: Vec<usize> = (0..grid.buses.len()).filter(|&i| grid.buses[i].kind == BusKind::NonDynamic).collect();
        let volt: Vec<usize> = nd.iter().copied().filter(|&i| !grid.buses[i].voltage_fixed).collect();
        Layout { ang: nd.clone(), volt: volt.clone(), p_rows: nd, q_rows: volt, balance: None }
    }

    pub fn equilibrium(grid: &GridModel) -> Layout {
        let mut l = Layout::network(grid);
        let reference = grid.angle_reference();
        for i in grid.dynamic_buses() {
            if Some(i) != reference {
                l.ang.push(i);
            }
            l.p_rows.push(i);
        }
        l.balance = reference;
        l
    }

    fn unknowns(&self) -> usize {
        self.ang.len() + self.volt.len() + usize::from(self.balance.is_some())
    }
}

pub(crate) struct PfState {
    pub ang: Vec<f64>,
    pub v: Vec<f64>,
    pub p_in: Vec<f64>,
}

impl PfState {
    pub fn flat(grid: &GridModel) -> PfState {
        let ang = grid.buses.iter().map(|b| if b.kind == BusKind::Slack { b.angle } else { 0.0 }).collect();
        let v = grid.buses.iter().map(|b| b.voltage_magnitude).collect();
        let p_in = grid.buses.iter().map(|b| b.p_in).collect();
        PfState { ang, v, p_in }
    }
}

fn residual(grid: &GridModel, lay: &Layout, st: &PfState) -> Vector {
    let (p, q) = bus_injections(grid, &st.ang, &st.v);
    let mut r = Vec::with_capacity(lay.p_rows.len() + lay.q_rows.len());
    for &i in &lay.p_rows {
        r.push(p[i] - (st.p_in[i] - grid.buses[i].p_load));
    }
    for &i in &lay.q_rows {
        r.push(q[i] + grid.buses[i].q_load);
    }
    Vector::from_vec(r)
}

fn jacobian(grid: &GridModel, lay: &Layout, st: &PfState) -> Matrix {
    let [pd, pv, qd, qv] = injection_jacobian(grid, &st.ang, &st.v);
    let rows = lay.p_rows.len() + lay.q_rows.len();
    let mut j = Matrix::zeros(rows, lay.unknowns());
    let q0 = lay.p_rows.len();
    for (r, &i) in lay.p_rows.iter().enumerate() {
        for (c, &k) in lay.ang.iter().enumerate() {
            j[(r, c)] = pd[(i, k)];
        }
        for (c, &k) in lay.volt.iter().enumerate() {
            j[(r, lay.ang.len() + c)] = pv[(i, k)];
        }
        if lay.balance == Some(i) {
            j[(r, lay.unknowns() - 1)] = -1.0;
        }
    }
    for (r, &i) in lay.q_rows.iter().enumerate() {
        for (c, &k) in lay.ang.iter().enumerate() {
            j[(q0 + r, c)] = qd[(i, k)];
        }
        for (c, &k) in lay.volt.iter().enumerate() {
            j[(q0 + r, lay.ang.len() + c)] = qv[(i, k)];
        }
    }
    j
}

fn apply(lay: &Layout, st: &mut PfState, dx: &Vector, scale: f64) {
    for (c, &k) in lay.ang.iter().enumerate() {
        st.ang[k] += scale * dx[c];
    }
    for (c, &k) in lay.volt.iter().enumerate() {
        st.v[k] += scale * dx[lay.ang.len() + c];
    }
    if let Some(b) = lay.balance {
        st.p_in[b] += scale * dx[lay.unknowns() - 1];
    }
}

/// Newton–Raphson with step halving on residual growth.
pub(crate) fn newton(grid: &GridModel, lay: &Layout, st: &mut PfState, what: &'static str) -> Result<(usize, f64)> {
    if lay.unknowns() != lay.p_rows.len() + lay.q_rows.len() {
        return Err(Error::Model(format!("{what}: {} unknowns for {} equations", lay.unknowns(), lay.p_rows.len() + lay.q_rows.len())));
    }
    let mut r = residual(grid, lay, st);
    let mut norm = r.amax();
    for it in 0..PF_MAX_ITER {
        if norm <= PF_TOL {
            return Ok((it, norm));
        }
        let j = jacobian(grid, lay, st);
        let dx = j.lu().solve(&(-&r)).ok_or(Error::Singular(what))?;
        if dx.iter().any(|v| !v.is_finite()) {
            return Err(Error::Singular(what));
        }
        let mut scale = 1.0;
        loop {
            apply(lay, st, &dx, scale);
            let trial = residual(grid, lay, st);
            if trial.amax() < norm || scale < 1e-3 {
                r = trial;
                norm = r.amax();
                break;
            }
            apply(lay, st, &dx, -scale);
            scale *= 0.5;
        }
        if lay.volt.iter().any(|&k| !(st.v[k] > 0.0)) {
            return Err(Error::NoConvergence { iterations: it + 1, residual: norm });
        }
    }
    if norm <= PF_TOL {
        Ok((PF_MAX_ITER, norm))
    } else {
        Err(Error::NoConvergence { iterations: PF_MAX_ITER, residual: norm })
    }
}

pub(crate) fn finish(grid: &GridModel, st: &PfState, iterations: usize, residual: f64) -> NetworkSolution {
    let (p, q) = bus_injections(grid, &st.ang, &st.v);
    let slack_power = grid.slack().map(|s| (p[s] + grid.buses[s].p_load, q[s] + grid.buses[s].q_load));
    NetworkSolution { angles: st.ang.clone(), voltages: st.v.clone(), p_net: p, q_net: q, slack_power, iterations, residual }
}

fn place_dynamic(grid: &GridModel, st: &mut PfState, dynamic_angles: &[f64]) -> Result<()> {
    let dy = grid.dynamic_buses();
    if dy.len() != dynamic_angles.len() {
        return Err(Error::Dimension(format!("{} dynamic angles for {} dynamic buses", dynamic_angles.len(), dy.len())));
    }
    for (k, &i) in dy.iter().enumerate() {
        st.ang[i] = dynamic_angles[k];
    }
    Ok(())
}

/// Solves the algebraic bus equations for fixed dynamic-bus angles, from a flat start.
pub fn solve_network(grid: &GridModel, dynamic_angles: &[f64]) -> Result<NetworkSolution> {
    let mut st = PfState::flat(grid);
    place_dynamic(grid, &mut st, dynamic_angles)?;
    let lay = Layout::network(grid);
    let (it, res) = newton(grid, &lay, &mut st, "network solve")?;
    Ok(finish(grid, &st, it, res))
}

/// As [`solve_network`] but warm-started from a previous solution.
pub fn solve_network_from(grid: &GridModel, dynamic_angles: &[f64], guess: &NetworkSolution) -> Result<NetworkSolution> {
    let mut st = PfState::flat(grid);
    st.ang.clone_from(&guess.angles);
    st.v.clone_from(&guess.voltages);
    for (i, b) in grid.buses.iter().enumerate() {
        if b.voltage_fixed || b.kind != BusKind::NonDynamic {
            st.v[i] = b.voltage_magnitude;
        }
    }
    place_dynamic(grid, &mut st, dynamic_angles)?;
    let lay = Layout::network(grid);
    let (it, res) = newton(grid, &lay, &mut st, "network solve")?;
    Ok(finish(grid, &st, it, res))
}
