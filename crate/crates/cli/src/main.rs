use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use shs_core::analysis::{contraction, steady_state, tradeoff_sweep};
use shs_core::config::{matrix_to_rows, RunConfig, SystemSource};
use shs_core::experiments::{self, Reproduction};
use shs_core::numerics::{eigenvalues, Tolerance};
use shs_core::observer::{check_combined_observability, design_observer};
use shs_core::sim::{monte_carlo, ErrorTrajectory};
use shs_core::Error;

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser, Debug)]
#[command(name = "shs", version, about = "Coordinated state estimation under random sensor loss")]
struct Cli {
    /// Output directory.
    #[arg(long, global = true, env = "SHS_OUTPUT_DIR", default_value = "shs-out")]
    out: PathBuf,
    /// Worker threads (default: all cores). Results do not depend on this.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Master seed; overrides the config value.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Solve the equilibrium and write A, B1, B2, D1, D2.
    Linearize {
        /// Builtin grid (two_bus, ieee5, ieee33) or a grid JSON file.
        #[arg(long, conflicts_with_all = ["config", "matpower"])]
        grid: Option<String>,
        /// MATPOWER case file.
        #[arg(long, conflicts_with = "config")]
        matpower: Option<PathBuf>,
        /// Dynamics overlay for --matpower.
        #[arg(long, requires = "matpower")]
        dynamics: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Convergence report and steady-state error for a config.
    Analyze {
        #[arg(long)]
        config: PathBuf,
    },
    /// Per-scenario decomposition and observer gains.
    Design {
        #[arg(long)]
        config: PathBuf,
    },
    /// Monte Carlo estimation-error trajectory.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        replicas: Option<usize>,
        /// Number of intervals.
        #[arg(long)]
        k: Option<usize>,
        /// Also write a gnuplot script.
        #[arg(long)]
        gnuplot: bool,
    },
    /// Run a canned experiment and check its expected behaviour.
    Reproduce {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(experiments::NAMES))]
        name: String,
        #[arg(long)]
        replicas: Option<usize>,
        #[arg(long)]
        gnuplot: bool,
    },
}

enum Failure {
    Usage(String),
    Model(String),
    Acceptance(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Io(_) | Error::Parse(_) => Failure::Usage(e.to_string()),
            other => Failure::Model(other.to_string()),
        }
    }
}

type Out<T> = std::result::Result<T, Failure>;

fn io_err(path: &Path, e: std::io::Error) -> Failure {
    Failure::Usage(format!("{}: {e}", path.display()))
}

fn write(dir: &Path, name: &str, body: &str) -> Out<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let p = dir.join(name);
    fs::write(&p, body).map_err(|e| io_err(&p, e))?;
    Ok(p)
}

fn write_json(dir: &Path, name: &str, v: &Value) -> Out<PathBuf> {
    write(dir, name, &(serde_json::to_string_pretty(v).expect("serializable") + "\n"))
}

fn load_config(path: &Path) -> Out<(RunConfig, PathBuf)> {
    let cfg = RunConfig::load(path)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((cfg, base))
}

fn manifest(cli: &Cli, command: &str, cfg: Option<&RunConfig>, outputs: &[PathBuf]) -> Value {
    json!({
        "tool": "shs",
        "version": VERSION,
        "command": command,
        "seed": cli.seed,
        "workers": cli.workers,
        "config": cfg,
        "outputs": outputs.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
    })
}

/// `k, t_seconds, mean_err_sq, var_err_sq, mean_e1..n`
fn trajectory_csv(t: &ErrorTrajectory) -> String {
    let n = t.mean_state_sq.first().map_or(0, Vec::len);
    let mut s = String::from("k,t_seconds,mean_err_sq,var_err_sq");
    for i in 1..=n {
        write!(s, ",mean_e{i}").unwrap();
    }
    s.push('\n');
    for k in 0..t.len() {
        write!(s, "{k},{:.6},{:.10e},{:.10e}", k as f64 * t.tau, t.mean_err_sq[k], t.var_err_sq[k]).unwrap();
        for v in &t.mean_state_sq[k] {
            write!(s, ",{v:.10e}").unwrap();
        }
        s.push('\n');
    }
    s
}

fn gnuplot_script(title: &str, series: &[(String, String)]) -> String {
    let mut s = format!(
        "set datafile separator ','\nset key autotitle columnhead\nset xlabel 'time (s)'\nset ylabel 'mean squared error'\nset logscale y\nset title '{title}'\nplot "
    );
    let parts: Vec<String> = series.iter().map(|(file, label)| format!("'{file}' using 2:3 with lines title '{label}'")).collect();
    s.push_str(&parts.join(", \\\n     "));
    s.push('\n');
    s
}

fn cmd_linearize(cli: &Cli, grid: &Option<String>, mp: &Option<PathBuf>, dynamics: &Option<PathBuf>, config: &Option<PathBuf>) -> Out<()> {
    let (cfg, base) = match (grid, mp, config) {
        (Some(g), _, _) => {
            let src = if Path::new(g).exists() { SystemSource::GridFile(g.into()) } else { SystemSource::Grid(g.clone()) };
            (RunConfig::for_system(src), PathBuf::new())
        }
        (None, Some(case), _) => {
            let src = SystemSource::Matpower { case: case.clone(), dynamics: dynamics.clone() };
            (RunConfig::for_system(src), PathBuf::new())
        }
        (None, None, Some(p)) => load_config(p)?,
        _ => return Err(Failure::Usage("linearize needs --grid, --matpower or --config".into())),
    };
    let sys = cfg.system(&base)?;
    let lin = sys.linearized.ok_or_else(|| Failure::Usage("linearize needs a grid source, not a state matrix".into()))?;
    let eig: Vec<[f64; 2]> = eigenvalues(&lin.a).iter().map(|z| [z.re, z.im]).collect();
    let body = json!({
        "state_labels": lin.state_labels,
        "a": matrix_to_rows(&lin.a),
        "b1": matrix_to_rows(&lin.b1),
        "b2": matrix_to_rows(&lin.b2),
        "d1": matrix_to_rows(&lin.d1),
        "d2": matrix_to_rows(&lin.d2),
        "eigenvalues": eig,
        "equilibrium": lin.equilibrium,
        "equilibrium_residual": lin.equilibrium_residual,
        "fd_step": lin.fd_step,
        "richardson_gap": lin.richardson_gap,
    });
    let p = write_json(&cli.out, "linearization.json", &body)?;
    let m = write_json(&cli.out, "manifest.json", &manifest(cli, "linearize", Some(&cfg), std::slice::from_ref(&p)))?;
    println!("states: {:?}", lin.state_labels);
    for row in lin.a.row_iter() {
        println!("  {}", row.iter().map(|v| format!("{v:>12.4}")).collect::<String>());
    }
    println!("wrote {} and {}", p.display(), m.display());
    Ok(())
}

fn cmd_analyze(cli: &Cli, path: &Path) -> Out<()> {
    let (cfg, base) = load_config(path)?;
    let tol = Tolerance::default();
    let sys = cfg.system(&base)?;
    let set = cfg.scenario_set(&sys.state_labels)?;
    let spec = cfg.observer_spec()?;
    let ranks = check_combined_observability(&set, &sys.a, &tol);
    let obs = design_observer(&sys.a, &set, spec, &tol)?;
    let report = contraction(&obs, &set, &tol)?;
    let steady = match steady_state(&obs, &tol) {
        Ok(s) => json!({
            "mu_inf": s.mu_inf,
            "mu_state": s.mu_state,
            "mu_state_exact": s.mu_state_exact,
            "stein_residual": s.residual,
            "w_inf": matrix_to_rows(&s.w_inf),
        }),
        Err(Error::Unstable(r)) => json!({ "unstable": true, "spectral_radius_m": r }),
        Err(e) => return Err(e.into()),
    };
    let tradeoff = if cfg.pole_scales.is_empty() { None } else { Some(tradeoff_sweep(&sys.a, &set, spec, &cfg.pole_scales, &tol)?) };
    let body = json!({
        "scenario_probabilities": set.probabilities(),
        "ranks": ranks,
        "report": report,
        "steady_state": steady,
        "tradeoff": tradeoff,
    });
    let p = write_json(&cli.out, "analysis.json", &body)?;
    write_json(&cli.out, "manifest.json", &manifest(cli, "analyze", Some(&cfg), std::slice::from_ref(&p)))?;
    let opt = |v: Option<f64>| v.map_or("unbounded".to_string(), |x| format!("{x:.4}"));
    println!("probabilities: {:?}", set.probabilities());
    println!("tau = {}, tau_max = {} (sufficient: {})", report.tau, opt(report.tau_max), opt(report.tau_max_sufficient));
    println!("gamma_exact = {:.4}, gamma1 = {:.4}, gamma2 = {:.4}", report.gamma_exact, report.gamma1, report.gamma2);
    println!("rho(M) = {:.4}, stable = {}", report.spectral_radius_m, report.stable);
    println!("steady state: {steady}");
    println!("wrote {}", p.display());
    Ok(())
}

fn cmd_design(cli: &Cli, path: &Path) -> Out<()> {
    let (cfg, base) = load_config(path)?;
    let tol = Tolerance::default();
    let sys = cfg.system(&base)?;
    let set = cfg.scenario_set(&sys.state_labels)?;
    let obs = design_observer(&sys.a, &set, cfg.observer_spec()?, &tol)?;
    let scen: Vec<Value> = obs
        .decomps
        .iter()
        .zip(&obs.lambda)
        .map(|(d, lam)| {
            json!({
                "index": d.index,
                "probability": set.scenarios[d.index - 1].probability,
                "observable_dim": d.n_i,
                "t": matrix_to_rows(&d.t),
                "t_inv": matrix_to_rows(&d.t_inv),
                "g": matrix_to_rows(&d.g),
                "f": matrix_to_rows(&d.f),
                "a22": matrix_to_rows(&d.a22),
                "gain": d.gain.as_ref().map(matrix_to_rows),
                "poles": d.poles.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>(),
                "poles_truncated": d.poles_truncated,
                "structural_residual": d.structural_residual,
                "lambda": matrix_to_rows(lam),
            })
        })
        .collect();
    let body = json!({ "tau": obs.tau, "f": matrix_to_rows(&obs.f), "phi": matrix_to_rows(&obs.phi), "scenarios": scen });
    let p = write_json(&cli.out, "design.json", &body)?;
    write_json(&cli.out, "manifest.json", &manifest(cli, "design", Some(&cfg), std::slice::from_ref(&p)))?;
    for d in &obs.decomps {
        println!("scenario {}: observable dim {}, poles truncated: {}", d.index, d.n_i, d.poles_truncated);
    }
    println!("wrote {}", p.display());
    Ok(())
}

fn cmd_simulate(cli: &Cli, path: &Path, replicas: Option<usize>, k: Option<usize>, gnuplot: bool) -> Out<()> {
    let (mut cfg, base) = load_config(path)?;
    if let Some(s) = cli.seed {
        cfg.sim.seed = s;
    }
    if let Some(r) = replicas {
        cfg.sim.replicas = r;
    }
    if let Some(k) = k {
        cfg.sim.k = k;
    }
    let tol = Tolerance::default();
    let dir = cfg.outputs.directory.clone().map(|d| if d.is_absolute() { d } else { base.join(d) }).unwrap_or_else(|| cli.out.clone());
    let mut outputs = Vec::new();
    let mut series = Vec::new();
    for (label, c) in cfg.expand()? {
        let sys = c.system(&base)?;
        let set = c.scenario_set(&sys.state_labels)?;
        let obs = design_observer(&sys.a, &set, c.observer_spec()?, &tol)?;
        let traj = monte_carlo(&obs, &set, &c.sim_config(sys.a.nrows())?)?;
        let name = format!("trajectory_{label}.csv");
        outputs.push(write(&dir, &name, &trajectory_csv(&traj))?);
        println!("{label}: mean_err_sq {:.4} -> {:.4e} after {} intervals", traj.mean_err_sq[0], traj.mean_err_sq[traj.len() - 1], traj.len() - 1);
        series.push((name, label));
    }
    if gnuplot || cfg.outputs.gnuplot {
        outputs.push(write(&dir, "plot.gp", &gnuplot_script("estimation error", &series))?);
    }
    let m = write_json(&dir, "manifest.json", &manifest(cli, "simulate", Some(&cfg), &outputs))?;
    println!("wrote {}", m.display());
    Ok(())
}

fn cmd_reproduce(cli: &Cli, name: &str, replicas: Option<usize>, gnuplot: bool) -> Out<()> {
    let rep: Reproduction = experiments::reproduce(name, cli.seed, replicas)?;
    let mut outputs = Vec::new();
    let mut series = Vec::new();
    for r in &rep.runs {
        let file = format!("{name}_{}.csv", r.label);
        outputs.push(write(&cli.out, &file, &trajectory_csv(&r.trajectory))?);
        series.push((file, r.label.clone()));
    }
    if gnuplot || rep.config.outputs.gnuplot {
        outputs.push(write(&cli.out, &format!("{name}.gp"), &gnuplot_script(name, &series))?);
    }
    let summary: Vec<Value> = rep
        .runs
        .iter()
        .map(|r| json!({ "label": r.label, "report": r.report, "mu_inf": r.mu_inf, "mu_state": r.mu_state, "mu_state_exact": r.mu_state_exact }))
        .collect();
    let mut man = manifest(cli, &format!("reproduce {name}"), Some(&rep.config), &outputs);
    man["runs"] = json!(summary);
    man["checks"] = json!(rep.checks);
    man["passed"] = json!(rep.passed());
    write_json(&cli.out, &format!("{name}_manifest.json"), &man)?;
    println!("{name}: {}", rep.description);
    for c in &rep.checks {
        println!("  {} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    if rep.passed() {
        Ok(())
    } else {
        Err(Failure::Acceptance(format!("{name}: check failed")))
    }
}

fn run(cli: &Cli) -> Out<()> {
    if let Some(w) = cli.workers {
        if w == 0 {
            return Err(Failure::Usage("--workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(w).build_global().map_err(|e| Failure::Model(e.to_string()))?;
    }
    match &cli.cmd {
        Cmd::Linearize { grid, matpower, dynamics, config } => cmd_linearize(cli, grid, matpower, dynamics, config),
        Cmd::Analyze { config } => cmd_analyze(cli, config),
        Cmd::Design { config } => cmd_design(cli, config),
        Cmd::Simulate { config, replicas, k, gnuplot } => cmd_simulate(cli, config, *replicas, *k, *gnuplot),
        Cmd::Reproduce { name, replicas, gnuplot } => cmd_reproduce(cli, name, *replicas, *gnuplot),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Usage(m) => eprintln!("error: {m}"),
                Failure::Model(m) => eprintln!("model error: {m}"),
                Failure::Acceptance(m) => eprintln!("{m}"),
            }
            ExitCode::from(exit_code(&f))
        }
    }
}

fn exit_code(f: &Failure) -> u8 {
    match f {
        Failure::Usage(_) => 1,
        Failure::Model(_) => 2,
        Failure::Acceptance(_) => 3,
    }
}
