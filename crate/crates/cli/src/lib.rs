//! Batch front end: reads an experiment config, runs one pipeline and writes its tables.

pub mod config;
pub mod output;

use std::path::PathBuf;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use hmfg_core::couplings::CostField;
use hmfg_core::hjb_grid::solve_hjb;
use hmfg_core::mfg::{mild_certificate, solve_equilibrium, spread_probes, MfgProblem, MfgStatus};
use hmfg_core::ocp::{control_bound, solve_direct, solve_pmp_shooting, value, DirectOptions, OcpProblem, ShootingOptions, ValueOptions};
use hmfg_core::validate::validate;

use config::{ConfigError, ExperimentConfig};
use output::{float, OutputDir, Summary};

pub const RESOLVED_CONFIG: &str = "resolved_config.toml";
pub const SUMMARY: &str = "summary.txt";

#[derive(Debug, Parser)]
#[command(name = "hmfg", version, about = "Mean field game equilibria on Heisenberg-type structures")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Experiment config (TOML); defaults apply to every missing field.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides `output` in the config.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Overrides `seed` in the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; overrides `threads` in the config.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Optimal control from one point: path, costate, control and cost.
    Ocp,
    /// Grid value function with slices.
    Hjb,
    /// Equilibrium with ε continuation and the mild-solution certificate.
    Mfg,
    /// The invariant suite of every module.
    Validate,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Ocp => "ocp",
            Command::Hjb => "hjb",
            Command::Mfg => "mfg",
            Command::Validate => "validate",
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot write output: {0}")]
    Io(#[from] std::io::Error),
    #[error("solver failed: {0}")]
    Solver(String),
    /// Outputs were written but the run did not reach its target.
    #[error("{0}")]
    NotConverged(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) | RunError::Io(_) => 1,
            RunError::Solver(_) | RunError::NotConverged(_) => 2,
        }
    }
}

impl From<hmfg_core::Error> for RunError {
    fn from(e: hmfg_core::Error) -> Self {
        use hmfg_core::Error as E;
        match e {
            E::InvalidParameter { .. } | E::Structure { .. } | E::Dimension { .. } | E::Precondition(_) => RunError::Config(e.into()),
            other => RunError::Solver(other.to_string()),
        }
    }
}

/// Loads and resolves the config, applying command-line overrides.
pub fn resolve_config(cli: &Cli) -> Result<ExperimentConfig, ConfigError> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(t) = cli.threads {
        cfg.threads = Some(t);
    }
    let out = cli.out.clone().or(cfg.output.clone()).unwrap_or_else(|| PathBuf::from("output").join(cli.command.name()));
    cfg.output = Some(out);
    cfg.resolve()
}

/// Runs one subcommand; the summary is also returned for printing.
pub fn run(cli: &Cli) -> Result<String, RunError> {
    let cfg = resolve_config(cli)?;
    if let Some(t) = cfg.threads {
        // a second initialization in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    let dir = OutputDir::create(cfg.output.as_deref().expect("resolved"))?;
    dir.write_text(RESOLVED_CONFIG, &cfg.to_toml())?;
    let mut summary = Summary::default();
    summary.text("command", cli.command.name()).text("seed", cfg.seed);
    let outcome = match cli.command {
        Command::Ocp => run_ocp(&cfg, &dir, &mut summary),
        Command::Hjb => run_hjb(&cfg, &dir, &mut summary),
        Command::Mfg => run_mfg(&cfg, &dir, &mut summary),
        Command::Validate => run_validate(&cfg, &dir, &mut summary),
    };
    if let Err(e) = &outcome {
        summary.text("error", e.to_string().replace('\n', " "));
    }
    dir.write_text(SUMMARY, &summary.render())?;
    outcome.map(|_| summary.render())
}

fn costs(running: &hmfg_core::couplings::ExplicitFunction, terminal: &hmfg_core::couplings::ExplicitFunction) -> (Arc<dyn CostField>, Arc<dyn CostField>) {
    (Arc::new(running.clone()), Arc::new(terminal.clone()))
}

fn describe(cfg: &ExperimentConfig, summary: &mut Summary) -> Result<hmfg_core::hamiltonian::HamiltonianSpec, RunError> {
    let spec = cfg.hamiltonian()?;
    summary
        .text("structure", spec.structure().name())
        .float("epsilon", spec.structure().epsilon())
        .float("gamma", spec.gamma());
    Ok(spec)
}

fn run_ocp(cfg: &ExperimentConfig, dir: &OutputDir, summary: &mut Summary) -> Result<(), RunError> {
    let spec = describe(cfg, summary)?;
    let (f, g) = costs(&cfg.ocp.running, &cfg.ocp.terminal);
    let problem = OcpProblem::new(spec, f, g, cfg.hamiltonian.horizon, cfg.hamiltonian.steps)?;
    let x0 = &cfg.ocp.x0;
    let report = solve_pmp_shooting(&problem, x0, cfg.ocp.t0, &[], &ShootingOptions::default())?;
    let sol = &report.best;
    let n = problem.n();
    let c = problem.control_dim();
    let mut header = vec!["s".to_string()];
    header.extend((1..=n).map(|i| format!("x{i}")));
    header.extend((1..=n).map(|i| format!("p{i}")));
    header.extend((1..=c).map(|i| format!("a{i}")));
    let mut t = dir.table("path.csv", &header.iter().map(String::as_str).collect::<Vec<_>>())?;
    for k in 0..=sol.path.steps() {
        let mut row = vec![float(sol.path.time(k))];
        row.extend(sol.path.state(k).iter().map(|v| float(*v)));
        row.extend(sol.costate(k).iter().map(|v| float(*v)));
        row.extend(sol.path.control(k).iter().map(|v| float(*v)));
        t.row(row)?;
    }
    t.finish()?;
    summary
        .float("cost", sol.cost)
        .float("residual", sol.shooting_residual)
        .text("iterations", sol.iterations)
        .text("candidates", report.candidates.len())
        .text("failed_starts", report.failures)
        .text("multiplicity", report.multiplicity)
        .text("singular", sol.singular);
    if cfg.ocp.direct {
        let opts = DirectOptions {
            restarts: cfg.ocp.restarts,
            seed: cfg.seed,
            ..DirectOptions::default()
        };
        let d = solve_direct(&problem, x0, cfg.ocp.t0, control_bound(x0), &opts)?;
        summary
            .float("direct_cost", d.cost)
            .float("pmp_direct_gap", (sol.cost - d.cost).abs())
            .float("value", sol.cost.min(d.cost));
    } else {
        summary.float("value", sol.cost);
    }
    Ok(())
}

fn run_hjb(cfg: &ExperimentConfig, dir: &OutputDir, summary: &mut Summary) -> Result<(), RunError> {
    let spec = describe(cfg, summary)?;
    let grid = cfg.hjb.grid()?;
    let (f, g) = costs(&cfg.hjb.running, &cfg.hjb.terminal);
    let problem = OcpProblem::new(spec, f, g, cfg.hamiltonian.horizon, cfg.hamiltonian.steps)?;
    let gvf = solve_hjb(&problem, grid)?;
    for &k in &cfg.hjb.slice_levels {
        let mut t = dir.table(&format!("slice_level{k}.csv"), &["t", "x1", "x2", "u"])?;
        let time = float(gvf.level_time(k));
        for [x1, x2, u] in gvf.slice(k, &cfg.hjb.slice_rest) {
            t.row([time.clone(), float(x1), float(x2), float(u)])?;
        }
        t.finish()?;
    }
    let origin = vec![0.0; problem.n()];
    let (u0, dirty0) = gvf.interpolate(&origin, 0.0);
    summary
        .text("nodes", gvf.node_count())
        .float("dx", grid.dx())
        .float("control_step", gvf.control_step())
        .float("contaminated_fraction", gvf.contaminated_fraction(0))
        .float("value_at_origin", u0)
        .text("origin_contaminated", dirty0);
    if !cfg.hjb.compare_points.is_empty() {
        let n = problem.n();
        let mut header: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
        header.extend(["grid", "ocp", "error", "contaminated"].map(String::from));
        let mut t = dir.table("comparison.csv", &header.iter().map(String::as_str).collect::<Vec<_>>())?;
        let mut worst = 0.0f64;
        for p in &cfg.hjb.compare_points {
            let (gv, dirty) = gvf.interpolate(p, 0.0);
            let v = value(&problem, p, 0.0, &ValueOptions::pmp_only())?.value;
            if !dirty {
                worst = worst.max((gv - v).abs());
            }
            let mut row: Vec<String> = p.iter().map(|v| float(*v)).collect();
            row.extend([float(gv), float(v), float((gv - v).abs()), dirty.to_string()]);
            t.row(row)?;
        }
        t.finish()?;
        summary.float("comparison_max_error", worst);
    }
    Ok(())
}

fn run_mfg(cfg: &ExperimentConfig, dir: &OutputDir, summary: &mut Summary) -> Result<(), RunError> {
    let spec = describe(cfg, summary)?;
    let n = spec.n();
    let m = &cfg.mfg;
    let problem = MfgProblem::new(spec, m.running.build(n)?, m.terminal.build(n)?, m.m0.build(n)?, cfg.hamiltonian.horizon, m.options(cfg.seed))?;
    let sol = solve_equilibrium(&problem)?;

    let mut t = dir.table("residuals.csv", &["iteration", "residual"])?;
    for (k, r) in sol.residual_history.iter().enumerate() {
        t.row([k.to_string(), float(*r)])?;
    }
    t.finish()?;
    let mut t = dir.table("level_residuals.csv", &["epsilon", "iteration", "residual"])?;
    for l in &sol.levels {
        for (k, r) in l.residual_history.iter().enumerate() {
            t.row([float(l.epsilon), k.to_string(), float(*r)])?;
        }
    }
    t.finish()?;
    let mut t = dir.table("levels.csv", &["epsilon", "status", "iterations", "residual", "distance_to_previous", "max_second_moment"])?;
    for l in &sol.levels {
        t.row([
            float(l.epsilon),
            status(l.status).to_string(),
            l.iterations().to_string(),
            float(l.residual),
            l.distance_to_previous.map(float).unwrap_or_default(),
            float(l.max_second_moment()),
        ])?;
    }
    t.finish()?;
    let mut header = vec!["t".to_string(), "particle".into(), "weight".into()];
    header.extend((1..=n).map(|i| format!("x{i}")));
    let mut t = dir.table("measure_path.csv", &header.iter().map(String::as_str).collect::<Vec<_>>())?;
    let path = &sol.measure_path;
    for (k, time) in path.times().iter().enumerate() {
        let mk = path.measure(k);
        for i in 0..mk.len() {
            let mut row = vec![float(*time), i.to_string(), float(mk.weights()[i])];
            row.extend(mk.point(i).iter().map(|v| float(*v)));
            t.row(row)?;
        }
    }
    t.finish()?;

    let cert = mild_certificate(&sol, &spread_probes(m.particles, m.certificate_probes), m.certificate_tolerance, &ValueOptions::pmp_only())?;
    let mut t = dir.table("certificate.csv", &["particle", "gap"])?;
    for (i, g) in cert.probes.iter().zip(&cert.gaps) {
        t.row([i.to_string(), float(*g)])?;
    }
    t.finish()?;

    summary
        .text("status", status(sol.status))
        .float("final_epsilon", sol.epsilon)
        .float("residual", sol.residual())
        .text("iterations", sol.residual_history.len())
        .text("levels", sol.levels.len())
        .text("particles", m.particles)
        .float("max_second_moment", sol.levels.iter().map(|l| l.max_second_moment()).fold(0.0, f64::max))
        .text("certificate_probes", cert.probes.len())
        .float("certificate_max_gap", cert.max_gap)
        .float("certificate_min_gap", cert.min_gap)
        .float("certificate_mean_gap", cert.mean_gap)
        .float("certificate_tolerance", cert.tolerance)
        .text("certificate_holds", cert.holds);
    if let Some(w) = &cert.warning {
        summary.text("certificate_warning", w);
    }
    if let Some(b) = problem.value_bound() {
        summary.float("value_bound", b);
    }
    if sol.status != MfgStatus::Converged {
        return Err(RunError::NotConverged(format!(
            "equilibrium residual {:.3e} above tolerance {:.3e} at eps {}",
            sol.residual(),
            m.tol,
            sol.epsilon
        )));
    }
    Ok(())
}

fn status(s: MfgStatus) -> &'static str {
    match s {
        MfgStatus::Converged => "converged",
        MfgStatus::NotConverged => "not-converged",
    }
}

fn run_validate(cfg: &ExperimentConfig, dir: &OutputDir, summary: &mut Summary) -> Result<(), RunError> {
    let s = cfg.structure()?;
    let mutation = cfg.validate.mutation();
    let report = validate(&s, cfg.seed, mutation);
    let mut t = dir.table("invariants.csv", &["name", "outcome", "measured", "threshold", "detail"])?;
    for r in &report.results {
        t.row([r.name.to_string(), r.outcome.as_str().into(), float(r.measured), float(r.threshold), r.detail.clone()])?;
    }
    t.finish()?;
    let failures = report.failures();
    summary
        .text("structure", &report.structure)
        .float("epsilon", report.epsilon)
        .text("mutation", mutation.map(|m| format!("{m:?}")).unwrap_or_else(|| "none".into()))
        .text("invariants", report.results.len())
        .text("failed", failures.len())
        .text("all_passed", report.all_passed());
    for r in &report.results {
        summary.text(format!("invariant.{}", r.name), r.outcome.as_str());
    }
    if !failures.is_empty() {
        return Err(RunError::NotConverged(format!("invariants failed: {}", failures.join(", "))));
    }
    Ok(())
}
