//! Reader for MATPOWER-style case files (`mpc.baseMVA`, `mpc.bus`, `mpc.branch`, `mpc.gen`).
//!
//! Branch impedances are taken as per-unit on the file's base; Pd/Qd/Pg are
//! in MW/MVAr and divided by `baseMVA`. Out-of-service branches are skipped.

use serde::Deserialize;

use super::{Bus, BusKind, GridModel, Line};
use crate::error::{Error, Result};

fn strip_comment(line: &str) -> &str {
    match line.find('%') {
        Some(i) => &line[..i],
        None => line,
    }
}

fn scalar(text: &str, key: &str) -> Option<f64> {
    for raw in text.lines() {
        let line = strip_comment(raw).trim();
        if let Some(rest) = line.strip_prefix(key) {
            let rest = rest.trim_start();
            if let Some(v) = rest.strip_prefix('=') {
                return v.trim().trim_end_matches(';').trim().parse().ok();
            }
        }
    }
    None
}

fn table(text: &str, key: &str) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::new();
    let mut inside = false;
    for raw in text.lines() {
        let line = strip_comment(raw).trim();
        if !inside {
            if let Some(rest) = line.strip_prefix(key) {
                if rest.trim_start().starts_with('=') && line.contains('[') {
                    inside = true;
                    let after = &line[line.find('[').unwrap() + 1..];
                    if after.contains(']') {
                        break;
                    }
                }
            }
            continue;
        }
        if line.starts_with(']') {
            return Ok(rows);
        }
        for chunk in line.split(';') {
            let vals: std::result::Result<Vec<f64>, _> = chunk
                .split(|c: char| c.is_whitespace() || c == ',')
                .filter(|s| !s.is_empty())
                .map(str::parse::<f64>)
                .collect();
            let vals = vals.map_err(|e| Error::Config(format!("bad number in {key}: {e}")))?;
            if !vals.is_empty() {
                rows.push(vals);
            }
        }
    }
    if inside {
        Err(Error::Config(format!("unterminated table {key}")))
    } else {
        Ok(rows)
    }
}

fn col(row: &[f64], i: usize, what: &str) -> Result<f64> {
    row.get(i).copied().ok_or_else(|| Error::Config(format!("{what} row has only {} columns", row.len())))
}

/// Parses the case; all non-reference buses come out non-dynamic.
pub fn parse_case(text: &str) -> Result<GridModel> {
    let base = scalar(text, "mpc.baseMVA").ok_or_else(|| Error::Config("missing mpc.baseMVA".into()))?;
    let bus_rows = table(text, "mpc.bus")?;
    let branch_rows = table(text, "mpc.branch")?;
    let gen_rows = table(text, "mpc.gen")?;
    if bus_rows.is_empty() {
        return Err(Error::Config("case has no buses".into()));
    }
    let mut base_kv = 0.0;
    let mut buses = Vec::with_capacity(bus_rows.len());
    for r in &bus_rows {
        let id = col(r, 0, "bus")? as usize;
        let kind_code = col(r, 1, "bus")? as i64;
        let kind = match kind_code {
            3 => BusKind::Slack,
            1 | 2 => BusKind::NonDynamic,
            4 => continue,
            k => return Err(Error::Config(format!("bus {id}: unknown type {k}"))),
        };
        base_kv = col(r, 9, "bus").unwrap_or(base_kv);
        buses.push(Bus {
            id,
            kind,
            voltage_magnitude: col(r, 7, "bus")?,
            angle: col(r, 8, "bus")?.to_radians(),
            inertia: 0.0,
            damping: 0.0,
            p_load: col(r, 2, "bus")? / base,
            q_load: col(r, 3, "bus")? / base,
            p_in: 0.0,
            voltage_fixed: kind_code != 1,
            dispatchable: false,
        });
    }
    for g in &gen_rows {
        let id = col(g, 0, "gen")? as usize;
        let on = g.get(7).copied().unwrap_or(1.0) > 0.0;
        if let (true, Some(b)) = (on, buses.iter_mut().find(|b| b.id == id)) {
            if b.kind != BusKind::Slack {
                b.p_in += col(g, 1, "gen")? / base;
                if let Some(&vg) = g.get(5) {
                    b.voltage_magnitude = vg;
                }
            }
        }
    }
    let mut lines = Vec::new();
    for r in &branch_rows {
        if r.get(10).copied().unwrap_or(1.0) <= 0.0 {
            continue;
        }
        let b = col(r, 4, "branch")?;
        lines.push(Line {
            from: col(r, 0, "branch")? as usize,
            to: col(r, 1, "branch")? as usize,
            r: col(r, 2, "branch")?,
            x: col(r, 3, "branch")?,
            shunt_admittance: b.abs(),
            shunt_angle: if b >= 0.0 { std::f64::consts::FRAC_PI_2 } else { -std::f64::consts::FRAC_PI_2 },
        });
    }
    Ok(GridModel { name: String::new(), buses, lines, base_mva: base, base_kv })
}

#[derive(Deserialize)]
struct DynamicBus {
    bus: usize,
    inertia: f64,
    damping: f64,
    p_in: f64,
    #[serde(default)]
    voltage_magnitude: Option<f64>,
}

#[derive(Deserialize)]
struct Overlay {
    dynamic: Vec<DynamicBus>,
}

/// Marks buses as dynamic (generator swing dynamics, fixed |V|) from a JSON overlay.
pub fn apply_dynamics(grid: &mut GridModel, overlay_json: &str) -> Result<()> {
    let ov: Overlay = serde_json::from_str(overlay_json)?;
    for d in ov.dynamic {
        let b = grid
            .buses
            .iter_mut()
            .find(|b| b.id == d.bus)
            .ok_or_else(|| Error::Config(format!("overlay references unknown bus {}", d.bus)))?;
        b.kind = BusKind::Dynamic;
        b.inertia = d.inertia;
        b.damping = d.damping;
        b.p_in = d.p_in;
        b.voltage_fixed = true;
        if let Some(v) = d.voltage_magnitude {
            b.voltage_magnitude = v;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const TINY: &str = "function mpc = tiny
mpc.version = '2';
mpc.baseMVA = 10;
%% bus data
mpc.bus = [
	1	3	0	0	0	0	1	1	0	12.66	1	1.1	0.9;
	2	1	1.0	0.5	0	0	1	1	0	12.66	1	1.1	0.9; % load
	3	1	2	1	0	0	1	1	0	12.66	1	1.1	0.9;
];
mpc.gen = [
	1	0	0	10	-10	1	100	1	10	0;
];
mpc.branch = [
	1	2	0.01	0.02	0	0	0	0	0	0	1	-360	360;
	2	3	0.01	0.02	0.001	0	0	0	0	0	1	-360	360;
	1	3	0.01	0.02	0	0	0	0	0	0	0	-360	360;
];
";

    #[test]
    fn parses_tables_and_scales_loads() {
        let g = parse_case(TINY).unwrap();
        assert_eq!(g.buses.len(), 3);
        assert_eq!(g.lines.len(), 2, "out-of-service branch skipped");
        assert_eq!(g.base_mva, 10.0);
        assert_eq!(g.base_kv, 12.66);
        assert_eq!(g.buses[0].kind, BusKind::Slack);
        assert!((g.buses[1].p_load - 0.1).abs() < 1e-15);
        assert!((g.buses[2].q_load - 0.1).abs() < 1e-15);
        assert!(!g.buses[1].voltage_fixed);
        assert!((g.lines[1].shunt_admittance - 0.001).abs() < 1e-15);
        g.validate().unwrap();
    }

    #[test]
    fn overlay_marks_dynamic() {
        let mut g = parse_case(TINY).unwrap();
        apply_dynamics(&mut g, r#"{"dynamic":[{"bus":3,"inertia":2.0,"damping":0.1,"p_in":0.05}]}"#).unwrap();
        assert_eq!(g.buses[2].kind, BusKind::Dynamic);
        assert!(g.buses[2].voltage_fixed);
        assert!(apply_dynamics(&mut g, r#"{"dynamic":[{"bus":9,"inertia":2.0,"damping":0.1,"p_in":0.0}]}"#).is_err());
    }

    #[test]
    fn missing_sections_are_errors() {
        assert!(parse_case("mpc.bus = [\n1 3 0 0 0 0 1 1 0 1 1 1 1;\n];").is_err());
        assert!(parse_case("mpc.baseMVA = 1;\nmpc.bus = [\n1 3 0 0 0 0 1 1 0 1 1 1 1;\n").is_err());
    }
}
