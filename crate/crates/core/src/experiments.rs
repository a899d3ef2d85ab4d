//! Canned experiments on the 5-bus and 33-bus models, each with a check of the
//! qualitative behaviour it is meant to show.

use std::path::Path;

use serde::Serialize;

use crate::analysis::{contraction, steady_state, ConvergenceReport};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::numerics::Tolerance;
use crate::observer::design_observer;
use crate::sim::{monte_carlo, ErrorTrajectory};

pub const NAMES: [&str; 6] = ["fig3", "fig4", "fig5", "fig6", "fig7", "fig8"];

const FIG3: &str = include_str!("../data/experiments/fig3.json");
const FIG4: &str = include_str!("../data/experiments/fig4.json");
const FIG5: &str = include_str!("../data/experiments/fig5.json");
const FIG6: &str = include_str!("../data/experiments/fig6.json");
const FIG7: &str = include_str!("../data/experiments/fig7.json");
const FIG8: &str = include_str!("../data/experiments/fig8.json");

pub fn canned(name: &str) -> Result<RunConfig> {
    let text = match name {
        "fig3" => FIG3,
        "fig4" => FIG4,
        "fig5" => FIG5,
        "fig6" => FIG6,
        "fig7" => FIG7,
        "fig8" => FIG8,
        other => return Err(Error::Config(format!("unknown experiment `{other}` (expected one of {NAMES:?})"))),
    };
    RunConfig::from_json(text)
}

/// Analysis and Monte Carlo results for one variant.
#[derive(Clone, Debug, Serialize)]
pub struct VariantRun {
    pub label: String,
    pub report: ConvergenceReport,
    /// `None` when the mean-square recursion is unstable.
    pub mu_inf: Option<f64>,
    pub mu_state: Option<f64>,
    pub mu_state_exact: Option<f64>,
    pub trajectory: ErrorTrajectory,
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct Reproduction {
    pub name: String,
    pub description: String,
    pub config: RunConfig,
    pub runs: Vec<VariantRun>,
    pub checks: Vec<Check>,
}

impl Reproduction {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn run(&self, label: &str) -> Option<&VariantRun> {
        self.runs.iter().find(|r| r.label == label)
    }
}

/// Designs, analyses and simulates one (variant-free) config.
pub fn run_variant(label: &str, cfg: &RunConfig, base: &Path, tol: &Tolerance) -> Result<VariantRun> {
    let sys = cfg.system(base)?;
    let set = cfg.scenario_set(&sys.state_labels)?;
    let obs = design_observer(&sys.a, &set, cfg.observer_spec()?, tol)?;
    let report = contraction(&obs, &set, tol)?;
    let (mu_inf, mu_state, mu_state_exact) = match steady_state(&obs, tol) {
        Ok(s) => (Some(s.mu_inf), Some(s.mu_state), s.mu_state_exact),
        Err(Error::Unstable(_)) => (None, None, None),
        Err(e) => return Err(e),
    };
    let sim = cfg.sim_config(sys.a.nrows())?;
    let trajectory = monte_carlo(&obs, &set, &sim)?;
    Ok(VariantRun { label: label.to_string(), report, mu_inf, mu_state, mu_state_exact, trajectory })
}

/// Runs every variant of `cfg` (or `cfg` itself when it has none).
pub fn run_all(cfg: &RunConfig, base: &Path, tol: &Tolerance) -> Result<Vec<VariantRun>> {
    cfg.expand()?.iter().map(|(label, c)| run_variant(label, c, base, tol)).collect()
}

/// Runs a canned experiment; `seed` and `replicas` override the stored values.
pub fn reproduce(name: &str, seed: Option<u64>, replicas: Option<usize>) -> Result<Reproduction> {
    let mut cfg = canned(name)?;
    if let Some(s) = seed {
        cfg.sim.seed = s;
    }
    if let Some(r) = replicas {
        cfg.sim.replicas = r;
    }
    let tol = Tolerance::default();
    let runs = run_all(&cfg, Path::new("."), &tol)?;
    let checks = checks_for(name, &runs);
    Ok(Reproduction { name: name.to_string(), description: cfg.description.clone(), config: cfg, runs, checks })
}

fn check(name: &str, passed: bool, detail: String) -> Check {
    Check { name: name.to_string(), passed, detail }
}

/// Time (in intervals, log-linearly interpolated) at which the mean squared
/// error first falls below `frac` of its initial value.
pub fn crossing_time(t: &ErrorTrajectory, frac: f64) -> Option<f64> {
    let target = frac * t.mean_err_sq[0];
    let k = t.time_to_fraction(frac)?;
    if k == 0 {
        return Some(0.0);
    }
    let (a, b) = (t.mean_err_sq[k - 1], t.mean_err_sq[k]);
    let s = (a.ln() - target.ln()) / (a.ln() - b.ln());
    Some((k - 1) as f64 + s.clamp(0.0, 1.0))
}

fn tail_mean(t: &ErrorTrajectory) -> f64 {
    let k = t.len() - 1;
    t.window_mean(k - k / 4, k)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or("unbounded".into(), |x| format!("{x:.4}"))
}

fn checks_for(name: &str, runs: &[VariantRun]) -> Vec<Check> {
    let by = |l: &str| runs.iter().find(|r| r.label == l).expect("canned variant");
    match name {
        "fig3" => {
            let r = &runs[0];
            let t = crossing_time(&r.trajectory, 0.01);
            vec![
                check("contraction", r.report.gamma_exact < 1.0, format!("gamma_exact = {:.4}", r.report.gamma_exact)),
                check(
                    "converges below 1% within 30 intervals",
                    t.is_some_and(|t| t <= 30.0),
                    format!("crossing at {} intervals", fmt_opt(t)),
                ),
            ]
        }
        "fig4" => {
            let (b, a) = (by("baseline"), by("aggressive"));
            let mu = match (a.mu_inf, b.mu_inf) {
                (Some(x), Some(y)) => check("larger noise floor", x > y, format!("mu_inf {x:.5} vs baseline {y:.5}")),
                _ => check("larger noise floor", false, "a design is mean-square unstable".into()),
            };
            let (ta, tb) = (tail_mean(&a.trajectory), tail_mean(&b.trajectory));
            vec![
                check(
                    "faster initial decay",
                    a.report.gamma_exact < b.report.gamma_exact,
                    format!("gamma_exact {:.4} vs baseline {:.4}", a.report.gamma_exact, b.report.gamma_exact),
                ),
                mu,
                check("larger simulated steady error", ta > tb, format!("tail mean {ta:.5} vs baseline {tb:.5}")),
            ]
        }
        "fig5" => {
            // variants are stored in decreasing delivery ratio
            let times: Vec<Option<f64>> = runs.iter().map(|r| crossing_time(&r.trajectory, 0.01)).collect();
            let ok = times.iter().all(Option::is_some) && times.windows(2).all(|w| w[0].unwrap() <= w[1].unwrap());
            let detail = runs.iter().zip(&times).map(|(r, t)| format!("{}: {}", r.label, fmt_opt(*t))).collect::<Vec<_>>().join(", ");
            vec![check("higher delivery ratio converges no slower", ok, detail)]
        }
        "fig6" => {
            let (c1, c4) = (by("case1"), by("case4"));
            let (t1, t4) = (tail_mean(&c1.trajectory), tail_mean(&c4.trajectory));
            let degraded = !c4.report.stable || t4 > 10.0 * t1;
            vec![
                check(
                    "larger contraction factor",
                    c4.report.gamma_exact > c1.report.gamma_exact,
                    format!("gamma_exact {:.4} vs {:.4}", c4.report.gamma_exact, c1.report.gamma_exact),
                ),
                check(
                    "unstable or degraded",
                    degraded,
                    format!("rho(M) = {:.4}, tail mean {t4:.4e} vs {t1:.4e}", c4.report.spectral_radius_m),
                ),
            ]
        }
        "fig7" => {
            let (a, b) = (by("delta1_delta2"), by("delta1_omega1"));
            let diff = a
                .trajectory
                .mean_err_sq
                .iter()
                .zip(&b.trajectory.mean_err_sq)
                .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(f64::MIN_POSITIVE))
                .fold(0.0, f64::max);
            vec![check("sensor selection changes the error", diff > 0.05, format!("max relative difference {diff:.3}"))]
        }
        "fig8" => {
            let r = &runs[0];
            let tail = tail_mean(&r.trajectory);
            let init = r.trajectory.mean_err_sq[0];
            vec![check(
                "converges toward zero",
                tail < 0.01 * init,
                format!("tail mean {tail:.4e} vs initial {init:.3}; gamma_exact = {:.4}, rho(M) = {:.3}", r.report.gamma_exact, r.report.spectral_radius_m),
            )]
        }
        _ => Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_canned_config_parses() {
        for n in NAMES {
            let c = canned(n).unwrap();
            assert!(c.observer.is_some(), "{n}");
            for (_, v) in c.expand().unwrap() {
                assert!(v.variants.is_empty());
            }
        }
        assert!(canned("fig9").is_err());
    }
}
