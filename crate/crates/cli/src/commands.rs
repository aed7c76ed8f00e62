//! Subcommand implementations. Each writes its artifacts into a run
//! directory that also receives the normalized config and a version stamp.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use raddiff::harness::{residual_sweep, run_sweep};
use raddiff::io::{self, CsvAppender, CsvRecord, DiscrepancyRow, IterationRow, LayerNormRow, LimitDiagnostics};
use raddiff::kinetic::KineticSolver;
use raddiff::layers::{build_layers, compatible_theta00};
use raddiff::limit::limit_trajectory;
use raddiff::oracle::{cross_validate, default_samples, solve_fixed_point, TransportProblem};
use raddiff::{Grid, Quadrature};

use crate::config::{ConfigError, RunConfig};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Failure reported as `error: <code>: <message>`.
#[derive(Debug)]
pub struct CliError {
    pub code: String,
    pub message: String,
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "error: {}: {}", self.code, self.message)
    }
}

impl From<raddiff::Error> for CliError {
    fn from(e: raddiff::Error) -> Self {
        Self {
            code: e.code().to_owned(),
            message: e.to_string(),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        Self {
            code: "config".to_owned(),
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        raddiff::Error::from(e).into()
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Quadcheck,
    Simulate,
    Limit,
    Layers,
    Oracle,
    Converge,
    Residuals,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Quadcheck => "quadcheck",
            Command::Simulate => "simulate",
            Command::Limit => "limit",
            Command::Layers => "layers",
            Command::Oracle => "oracle",
            Command::Converge => "converge",
            Command::Residuals => "residuals",
        }
    }
}

/// Output directory of one invocation.
pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    pub fn create(root: &Path, cfg: &RunConfig) -> CliResult<Self> {
        fs::create_dir_all(root)?;
        fs::write(root.join("config.toml"), cfg.echo())?;
        fs::write(
            root.join("VERSION"),
            format!("raddiff {VERSION}\nseed = {}\n", cfg.run.seed),
        )?;
        Ok(Self { root: root.to_owned() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn csv<R: CsvRecord>(&self, name: &str, rows: &[R]) -> CliResult<()> {
        io::write_csv(&self.path(name), rows)?;
        Ok(())
    }
}

pub fn run(cmd: Command, cfg: &RunConfig, out: &Path) -> CliResult<()> {
    let dir = RunDir::create(out, cfg)?;
    match cmd {
        Command::Quadcheck => quadcheck(cfg, &dir),
        Command::Simulate => simulate(cfg, &dir),
        Command::Limit => limit(cfg, &dir),
        Command::Layers => layers(cfg, &dir),
        Command::Oracle => oracle(cfg, &dir),
        Command::Converge => converge(cfg, &dir),
        Command::Residuals => residuals(cfg, &dir),
    }
}

struct MomentRow {
    quantity: &'static str,
    residual: f64,
    tolerance: f64,
}

impl CsvRecord for MomentRow {
    const HEADER: &'static [&'static str] = &["quantity", "residual", "tolerance", "pass"];
    fn fields(&self) -> Vec<String> {
        vec![
            self.quantity.to_owned(),
            io::fmt_real(self.residual),
            io::fmt_real(self.tolerance),
            (self.residual <= self.tolerance).to_string(),
        ]
    }
}

fn quadcheck(cfg: &RunConfig, dir: &RunDir) -> CliResult<()> {
    let r = cfg.quadrature()?.moment_residuals();
    let rows = [
        MomentRow {
            quantity: "unit_norm",
            residual: r.max_unit_norm,
            tolerance: 1e-13,
        },
        MomentRow {
            quantity: "weight_sum",
            residual: r.weight_sum,
            tolerance: 1e-13,
        },
        MomentRow {
            quantity: "first_moment",
            residual: r.first_moment,
            tolerance: 1e-13,
        },
        MomentRow {
            quantity: "second_moment",
            residual: r.second_moment,
            tolerance: 1e-10,
        },
    ];
    for row in &rows {
        println!("{:<14} {:.3e} (tol {:.0e})", row.quantity, row.residual, row.tolerance);
    }
    dir.csv("quadcheck.csv", &rows)?;
    if let Some(bad) = rows.iter().find(|r| !(r.residual <= r.tolerance)) {
        return Err(CliError {
            code: "quadrature".to_owned(),
            message: format!(
                "{} residual {:e} exceeds {:e}",
                bad.quantity, bad.residual, bad.tolerance
            ),
        });
    }
    Ok(())
}

fn setup(cfg: &RunConfig) -> CliResult<(Grid, Quadrature)> {
    Ok((cfg.grid()?, cfg.quadrature()?))
}

fn simulate(cfg: &RunConfig, dir: &RunDir) -> CliResult<()> {
    let (grid, quad) = setup(cfg)?;
    let (h, theta0) = cfg.data.build(&grid, &quad)?;
    let params = cfg.kinetic_params(&grid, &quad)?;
    let eps = params.epsilon;
    let solver = KineticSolver::new(&grid, &quad, params, cfg.model.velocity)?;
    let mut diag = CsvAppender::create(&dir.path("diagnostics.csv"))?;
    let mut write_err = None;
    let run = solver.run(&h, &theta0, cfg.run.t_end, &cfg.run.snapshot_times, |s| {
        if let Err(e) = diag.push(&solver.diagnostics(s)) {
            write_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = write_err {
        return Err(e.into());
    }
    diag.finish()?;
    if cfg.run.dump_fields {
        let all = run.snapshots.iter().chain(std::iter::once(&run.final_state));
        for (k, s) in all.enumerate() {
            io::write_directional(&dir.path(&format!("f_{k:03}.bin")), &grid, &s.f, s.t, eps)?;
            io::write_scalar(&dir.path(&format!("theta_{k:03}.bin")), &grid, &s.theta, s.t, eps)?;
        }
    }
    let d = solver.diagnostics(&run.final_state);
    println!(
        "t = {} after {} steps (dt = {:.3e}): energy {:.12e}, theta in [{:.6}, {:.6}]",
        d.t, run.steps, params.dt, d.energy, d.theta_min, d.theta_max
    );
    Ok(())
}

fn output_times(cfg: &RunConfig) -> Vec<f64> {
    let mut times = cfg.run.snapshot_times.clone();
    if times.last().is_none_or(|&t| t < cfg.run.t_end) {
        times.push(cfg.run.t_end);
    }
    times
}

fn limit(cfg: &RunConfig, dir: &RunDir) -> CliResult<()> {
    let (grid, quad) = setup(cfg)?;
    let (h, theta_init) = cfg.data.build(&grid, &quad)?;
    let (theta00, _) = compatible_theta00(&quad, &h, &theta_init)?;
    let mut diag = CsvAppender::create(&dir.path("diagnostics.csv"))?;
    let mut write_err = None;
    let states = limit_trajectory(
        &grid,
        &theta00,
        cfg.run.limit_dt,
        &cfg.model.velocity,
        &cfg.limit_params(),
        &output_times(cfg),
        |s| {
            if let Err(e) = diag.push(&LimitDiagnostics::of(&grid, s)) {
                write_err.get_or_insert(e);
            }
        },
    )?;
    if let Some(e) = write_err {
        return Err(e.into());
    }
    diag.finish()?;
    if cfg.run.dump_fields {
        for (k, s) in states.iter().enumerate() {
            io::write_scalar(&dir.path(&format!("theta0_{k:03}.bin")), &grid, &s.theta0, s.t, 0.0)?;
        }
    }
    let last = states.last().expect("at least the final time");
    println!(
        "limit t = {}: mass {:.12e}, theta0 in [{:.6}, {:.6}]",
        last.t,
        last.mass(&grid),
        last.theta0.min(),
        last.theta0.max()
    );
    Ok(())
}

fn layers(cfg: &RunConfig, dir: &RunDir) -> CliResult<()> {
    let (grid, quad) = setup(cfg)?;
    let (h, theta_init) = cfg.data.build(&grid, &quad)?;
    let set = build_layers(&grid, &quad, &h, &theta_init, &cfg.layer_options())?;
    dir.csv("layer0.csv", &LayerNormRow::rows(&set.zeroth))?;
    dir.csv("layer1.csv", &LayerNormRow::rows(&set.first))?;
    if cfg.run.dump_fields {
        io::write_scalar(&dir.path("theta00.bin"), &grid, &set.data.theta00, 0.0, 0.0)?;
        io::write_scalar(&dir.path("theta10.bin"), &grid, &set.data.theta10, 0.0, 0.0)?;
        io::write_scalar(
            &dir.path("theta_I0_initial.bin"),
            &grid,
            &set.zeroth.theta_at(0.0)?,
            0.0,
            0.0,
        )?;
    }
    for traj in [&set.zeroth, &set.first] {
        println!(
            "layer {}: tau_end {:.2}, decay rate {}, {}",
            traj.order,
            traj.tau_end(),
            traj.sigma_fit.map_or("n/a".to_owned(), |s| format!("{s:.4}")),
            if traj.decayed { "decayed" } else { "not decayed" }
        );
    }
    Ok(())
}

/// Duhamel test problem described by the `[oracle]` section.
pub fn oracle_problem(cfg: &RunConfig) -> CliResult<TransportProblem> {
    let o = &cfg.oracle;
    let eps = cfg.model.epsilon;
    let lattice = Grid::slab(o.lattice)?;
    let (ah, af) = (o.h_amplitude, o.source_amplitude);
    let two_pi = 2.0 * std::f64::consts::PI;
    Ok(TransportProblem {
        epsilon: eps,
        h: Arc::new(move |x, w| 1.0 + ah * (two_pi * x[0]).sin() * (1.0 + 0.5 * w[0])),
        source: Arc::new(move |_, x, _| 1.0 + af * (two_pi * x[0]).cos()),
        t_eval: o.t_over_eps2 * eps * eps,
        samples: default_samples(&lattice),
        quad: cfg.quadrature()?,
        lattice,
        panels_per_tau: o.panels_per_tau,
    })
}

fn oracle(cfg: &RunConfig, dir: &RunDir) -> CliResult<()> {
    let prob = oracle_problem(cfg)?;
    let fp = solve_fixed_point(&prob, cfg.oracle.tol, cfg.oracle.max_iters)?;
    dir.csv("oracle_iterations.csv", &IterationRow::rows(&fp))?;
    println!(
        "{} iterations, max ratio {:.4e} (bound {:.4e}), sup {:.6} (bound {:.6})",
        fp.iterations(),
        fp.max_ratio(),
        fp.ratio_bound,
        fp.linf(),
        fp.linf_bound
    );
    let cv = cross_validate(
        &prob,
        &fp.values,
        &cfg.oracle.resolutions,
        cfg.oracle.scheme,
        cfg.run.cfl,
    )?;
    dir.csv("oracle_crossval.csv", &DiscrepancyRow::rows(&cv))?;
    for (n, d) in cv.resolutions.iter().zip(&cv.discrepancies) {
        println!("n = {n:>5}: max discrepancy {d:.4e}");
    }
    Ok(())
}

fn converge(cfg: &RunConfig, dir: &RunDir) -> CliResult<()> {
    let report = run_sweep(&cfg.sweep()?)?;
    dir.csv("errors.csv", &report.rows)?;
    dir.csv("rates.csv", &report.rates)?;
    dir.csv("refinement.csv", &report.refinement)?;
    for r in &report.rates {
        println!(
            "{:<28} order {}  slope {:>7.4}  {}",
            r.metric, r.composite_order, r.slope, r.flag
        );
    }
    Ok(())
}

fn residuals(cfg: &RunConfig, dir: &RunDir) -> CliResult<()> {
    let report = residual_sweep(&cfg.sweep()?)?;
    dir.csv("residuals.csv", &report.rows)?;
    dir.csv("residual_rates.csv", &report.rates)?;
    for r in &report.rates {
        println!(
            "{:<28} order {}  slope {:>7.4}  {}",
            r.metric, r.composite_order, r.slope, r.flag
        );
    }
    Ok(())
}
