//! Sectioned TOML run configuration with validation and a normalized echo.

use std::fmt;

use serde::{Deserialize, Serialize};

use raddiff::data::DataPreset;
use raddiff::expansion::ExpansionOptions;
use raddiff::grid::PeriodicGrid;
use raddiff::harness::SweepConfig;
use raddiff::kinetic::{KineticParams, TransportScheme};
use raddiff::layers::LayerOptions;
use raddiff::limit::LimitParams;
use raddiff::quadrature::AngularQuadrature;
use raddiff::VelocityField;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    /// Fields constant along y and z; requires `ny = nz = 1`.
    pub slab: bool,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            nx: 256,
            ny: 1,
            nz: 1,
            slab: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureSection {
    pub n_polar: usize,
    pub n_azimuth: usize,
}

impl Default for QuadratureSection {
    fn default() -> Self {
        Self {
            n_polar: 8,
            n_azimuth: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub epsilon: f64,
    pub velocity: VelocityField,
    pub transport: TransportScheme,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            velocity: VelocityField::Zero,
            transport: TransportScheme::SplitUpwind,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DtPolicy {
    /// `dt = cfl * eps / max_m sum_i |w_mi| / h_i`.
    Cfl,
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub dt_policy: DtPolicy,
    pub cfl: f64,
    /// Used when `dt_policy = "fixed"`, and by `cfl` when every axis is a
    /// slab axis.
    pub dt: f64,
    pub t_end: f64,
    pub snapshot_times: Vec<f64>,
    pub dump_fields: bool,
    pub newton_tol: f64,
    pub newton_max_iters: usize,
    pub diffusion_solver_tol: f64,
    pub limit_dt: f64,
    pub limit_tol: f64,
    pub layer_tau_max: f64,
    pub layer_dtau: f64,
    pub seed: u64,
}

impl Default for RunSection {
    fn default() -> Self {
        let lp = LimitParams::<f64>::default();
        let lo = LayerOptions::<f64>::default();
        Self {
            dt_policy: DtPolicy::Cfl,
            cfl: 0.8,
            dt: 1e-4,
            t_end: 0.1,
            snapshot_times: Vec::new(),
            dump_fields: true,
            newton_tol: 1e-12,
            newton_max_iters: 50,
            diffusion_solver_tol: 1e-10,
            limit_dt: 1e-3,
            limit_tol: lp.picard_tol,
            layer_tau_max: lo.tau_max,
            layer_dtau: lo.dtau,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub epsilons: Vec<f64>,
    pub t_eval: Vec<f64>,
    pub refinement_check: bool,
    pub residual_epsilons: Vec<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        let d = SweepConfig::default();
        Self {
            epsilons: d.epsilons,
            t_eval: d.t_eval,
            refinement_check: d.refinement_check,
            residual_epsilons: d.residual_epsilons,
        }
    }
}

/// Slab transport test problem for the Duhamel oracle:
/// `h = 1 + h_amplitude sin(2 pi x)(1 + w1/2)`, `F = 1 + source_amplitude cos(2 pi x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleSection {
    pub h_amplitude: f64,
    pub source_amplitude: f64,
    /// Evaluation time as a multiple of `eps^2`.
    pub t_over_eps2: f64,
    pub lattice: usize,
    pub panels_per_tau: usize,
    pub tol: f64,
    pub max_iters: usize,
    pub resolutions: Vec<usize>,
    pub scheme: TransportScheme,
}

impl Default for OracleSection {
    fn default() -> Self {
        Self {
            h_amplitude: 0.5,
            source_amplitude: 0.3,
            t_over_eps2: 1.0,
            lattice: 512,
            panels_per_tau: 64,
            tol: 1e-12,
            max_iters: 40,
            resolutions: vec![64, 128, 256],
            scheme: TransportScheme::Upwind,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridSection,
    pub quadrature: QuadratureSection,
    pub model: ModelSection,
    pub data: DataPreset,
    pub run: RunSection,
    pub sweep: SweepSection,
    pub oracle: OracleSection,
}

/// One problem found while parsing or validating, with the 1-based line of
/// the offending key when it can be located.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigIssue {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub Vec<ConfigIssue>);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(ToString::to_string).collect();
        f.write_str(&parts.join("; "))
    }
}

impl std::error::Error for ConfigError {}

/// Line of `key` inside `[section]` (or a dotted sub-table of it).
fn locate(text: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.starts_with('[') {
            current = line.trim_matches(|c| c == '[' || c == ']').trim().to_owned();
            continue;
        }
        let in_section = current == section || current.starts_with(&format!("{section}."));
        if in_section {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim() == key {
                    return Some(i + 1);
                }
            }
        }
    }
    None
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| {
        ConfigError(vec![ConfigIssue {
            line: e.span().map(|s| line_of_offset(text, s.start)),
            message: e.message().trim().to_owned(),
        }])
    })?;
    let issues: Vec<ConfigIssue> = cfg
        .violations()
        .into_iter()
        .map(|(section, key, message)| ConfigIssue {
            line: locate(text, section, key),
            message,
        })
        .collect();
    if issues.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigError(issues))
    }
}

fn check_eps(out: &mut Vec<(&'static str, &'static str, String)>, section: &'static str, key: &'static str, e: f64) {
    if !(e > 0.0 && e < 1.0) {
        out.push((
            section,
            key,
            format!("{section}.{key} must lie in the open interval (0, 1), got {e}"),
        ));
    }
}

impl RunConfig {
    /// Normalized TOML echo listing every effective value.
    pub fn echo(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Every constraint violation as `(section, key, message)`.
    pub fn violations(&self) -> Vec<(&'static str, &'static str, String)> {
        let mut out = Vec::new();
        let g = &self.grid;
        if g.nx == 0 || g.ny == 0 || g.nz == 0 {
            out.push(("grid", "nx", "grid sizes must be positive".to_owned()));
        }
        if g.slab && (g.ny != 1 || g.nz != 1) {
            out.push(("grid", "slab", "slab mode requires ny = nz = 1".to_owned()));
        }
        if let Err(e) = self.quadrature() {
            out.push(("quadrature", "n_polar", e.to_string()));
        }
        check_eps(&mut out, "model", "epsilon", self.model.epsilon);
        if let Err(e) = self.data.validate() {
            out.push(("data", "kind", e.to_string()));
        }
        let r = &self.run;
        if !(r.cfl > 0.0 && r.cfl <= 1.0) {
            out.push(("run", "cfl", format!("cfl must lie in (0, 1], got {}", r.cfl)));
        }
        if !(r.dt > 0.0) {
            out.push(("run", "dt", format!("dt must be positive, got {}", r.dt)));
        }
        if !(r.t_end > 0.0) || !r.t_end.is_finite() {
            out.push(("run", "t_end", format!("t_end must be positive, got {}", r.t_end)));
        }
        if r.snapshot_times.iter().any(|&s| !(s >= 0.0 && s <= r.t_end)) {
            out.push((
                "run",
                "snapshot_times",
                "snapshot times must lie in [0, t_end]".to_owned(),
            ));
        }
        if r.snapshot_times.windows(2).any(|w| w[1] <= w[0]) {
            out.push(("run", "snapshot_times", "snapshot times must be increasing".to_owned()));
        }
        for (key, v) in [
            ("newton_tol", r.newton_tol),
            ("diffusion_solver_tol", r.diffusion_solver_tol),
            ("limit_dt", r.limit_dt),
            ("limit_tol", r.limit_tol),
            ("layer_dtau", r.layer_dtau),
        ] {
            if !(v > 0.0) {
                out.push(("run", key, format!("{key} must be positive, got {v}")));
            }
        }
        if r.newton_max_iters == 0 {
            out.push((
                "run",
                "newton_max_iters",
                "newton_max_iters must be positive".to_owned(),
            ));
        }
        if !(r.layer_tau_max > r.layer_dtau) {
            out.push((
                "run",
                "layer_tau_max",
                "layer_tau_max must exceed layer_dtau".to_owned(),
            ));
        }
        let s = &self.sweep;
        for &e in s.epsilons.iter().chain(&s.residual_epsilons) {
            check_eps(&mut out, "sweep", "epsilons", e);
        }
        if s.epsilons.is_empty() || s.epsilons.windows(2).any(|w| w[1] >= w[0]) {
            out.push((
                "sweep",
                "epsilons",
                "sweep epsilons must be nonempty and strictly decreasing".to_owned(),
            ));
        }
        if s.t_eval.is_empty() || s.t_eval.iter().any(|&t| !(t > 0.0)) {
            out.push((
                "sweep",
                "t_eval",
                "t_eval must be a nonempty list of positive times".to_owned(),
            ));
        }
        let o = &self.oracle;
        if !(o.t_over_eps2 > 0.0) {
            out.push(("oracle", "t_over_eps2", "t_over_eps2 must be positive".to_owned()));
        }
        if o.lattice < 4 || o.panels_per_tau == 0 || o.max_iters == 0 || !(o.tol > 0.0) {
            out.push((
                "oracle",
                "lattice",
                "oracle needs lattice >= 4, panels_per_tau >= 1, max_iters >= 1, tol > 0".to_owned(),
            ));
        }
        if o.resolutions.is_empty() || o.resolutions.iter().any(|&n| n < 4) {
            out.push((
                "oracle",
                "resolutions",
                "resolutions must be a nonempty list of sizes >= 4".to_owned(),
            ));
        }
        out
    }

    pub fn grid(&self) -> raddiff::Result<PeriodicGrid<f64>> {
        if self.grid.slab {
            PeriodicGrid::slab(self.grid.nx)
        } else {
            PeriodicGrid::unit([self.grid.nx, self.grid.ny, self.grid.nz])
        }
    }

    pub fn quadrature(&self) -> raddiff::Result<AngularQuadrature<f64>> {
        AngularQuadrature::product(self.quadrature.n_polar, self.quadrature.n_azimuth)
    }

    pub fn kinetic_params(
        &self,
        grid: &PeriodicGrid<f64>,
        quad: &AngularQuadrature<f64>,
    ) -> raddiff::Result<KineticParams<f64>> {
        let r = &self.run;
        let mut p = KineticParams::new(self.model.epsilon, grid, quad)?;
        p.cfl = r.cfl;
        p.transport = self.model.transport;
        p.newton_tol = r.newton_tol;
        p.newton_max_iters = r.newton_max_iters;
        p.diffusion_solver_tol = r.diffusion_solver_tol;
        p.dt = r.dt;
        p.dt = match r.dt_policy {
            DtPolicy::Cfl => p.cfl_dt(grid, quad),
            DtPolicy::Fixed => r.dt,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn limit_params(&self) -> LimitParams<f64> {
        LimitParams {
            picard_tol: self.run.limit_tol,
            ..LimitParams::default()
        }
    }

    pub fn layer_options(&self) -> LayerOptions<f64> {
        LayerOptions {
            tau_max: self.run.layer_tau_max,
            dtau: self.run.layer_dtau,
            ..LayerOptions::default()
        }
    }

    pub fn expansion_options(&self) -> ExpansionOptions<f64> {
        ExpansionOptions {
            limit_dt: self.run.limit_dt,
            limit: self.limit_params(),
            layers: self.layer_options(),
        }
    }

    pub fn sweep(&self) -> raddiff::Result<SweepConfig> {
        Ok(SweepConfig {
            epsilons: self.sweep.epsilons.clone(),
            t_eval: self.sweep.t_eval.clone(),
            grid: self.grid()?,
            n_polar: self.quadrature.n_polar,
            n_azimuth: self.quadrature.n_azimuth,
            data: self.data,
            velocity: self.model.velocity,
            cfl: self.run.cfl,
            transport: self.model.transport,
            refinement_check: self.sweep.refinement_check,
            expansion: self.expansion_options(),
            residual_epsilons: self.sweep.residual_epsilons.clone(),
        })
    }
}
