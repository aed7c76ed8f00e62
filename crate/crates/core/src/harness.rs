//! Epsilon sweeps against the composite approximation, log-log rate fits
//! and residual scaling.

use rayon::prelude::*;

use crate::data::DataPreset;
use crate::error::{Error, Result};
use crate::expansion::{CompositeOrder, ExpansionBundle, ExpansionOptions};
use crate::field::DirectionalField;
use crate::grid::PeriodicGrid;
use crate::kinetic::{KineticParams, KineticSolver, TransportScheme};
use crate::limit::residual_l1;
use crate::limit::residual_l2;
use crate::norms::{norm_h2, norm_linf};
use crate::quadrature::AngularQuadrature;
use crate::velocity::VelocityField;

/// Relative change under refinement above which a slope is flagged.
pub const REFINEMENT_TOLERANCE: f64 = 0.10;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    /// Decreasing.
    pub epsilons: Vec<f64>,
    pub t_eval: Vec<f64>,
    pub grid: PeriodicGrid<f64>,
    pub n_polar: usize,
    pub n_azimuth: usize,
    pub data: DataPreset,
    pub velocity: VelocityField,
    pub cfl: f64,
    pub transport: TransportScheme,
    pub refinement_check: bool,
    pub expansion: ExpansionOptions<f64>,
    /// Epsilons of the residual sweep.
    pub residual_epsilons: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            epsilons: vec![0.4, 0.2, 0.1, 0.05],
            t_eval: vec![0.05, 0.1],
            grid: PeriodicGrid::slab(256).expect("valid slab"),
            n_polar: 8,
            n_azimuth: 16,
            data: DataPreset::default(),
            velocity: VelocityField::Zero,
            cfl: 0.8,
            transport: TransportScheme::SplitUpwind,
            refinement_check: true,
            expansion: ExpansionOptions::default(),
            residual_epsilons: vec![0.4, 0.2, 0.1],
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epsilons.is_empty() || self.t_eval.is_empty() {
            return Err(Error::InvalidParameter("sweep needs epsilons and t_eval".into()));
        }
        for e in self.epsilons.iter().chain(&self.residual_epsilons) {
            if !(*e > 0.0 && *e < 1.0) {
                return Err(Error::InvalidParameter(format!("epsilon must lie in (0, 1), got {e}")));
            }
        }
        if self.epsilons.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidParameter(
                "sweep epsilons must be strictly decreasing".into(),
            ));
        }
        if self.t_eval.iter().any(|&t| !(t > 0.0)) {
            return Err(Error::InvalidParameter("t_eval entries must be positive".into()));
        }
        self.data.validate()
    }

    fn quadrature(&self) -> Result<AngularQuadrature<f64>> {
        AngularQuadrature::product(self.n_polar, self.n_azimuth)
    }
}

/// One line of `errors.csv`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorRow {
    pub epsilon: f64,
    pub t: f64,
    pub err_linf_f: f64,
    pub err_linf_theta: f64,
    pub err_h2_theta: f64,
    pub composite_order: usize,
}

/// One line of `rates.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateRow {
    pub metric: String,
    pub composite_order: usize,
    pub slope: f64,
    pub intercept: f64,
    pub max_residual: f64,
    pub flag: String,
}

impl RateRow {
    pub fn is_ok(&self) -> bool {
        self.flag == "ok"
    }
}

/// Log-log least-squares fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fit {
    pub slope: f64,
    pub intercept: f64,
    pub max_residual: f64,
}

/// Least squares on `(ln eps, ln err)`.
pub fn fit_rate(points: &[(f64, f64)]) -> Result<Fit> {
    if points.len() < 3 {
        return Err(Error::DegenerateFit(format!(
            "need at least 3 points, got {}",
            points.len()
        )));
    }
    if let Some(p) = points.iter().find(|p| !(p.1 > 0.0) || !(p.0 > 0.0)) {
        return Err(Error::DegenerateFit(format!("nonpositive value in ({}, {})", p.0, p.1)));
    }
    let xy: Vec<(f64, f64)> = points.iter().map(|p| (p.0.ln(), p.1.ln())).collect();
    let n = xy.len() as f64;
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / n;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = xy.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::DegenerateFit("all abscissae coincide".into()));
    }
    let sxy: f64 = xy.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let max_residual = xy
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).abs())
        .fold(0.0, f64::max);
    Ok(Fit {
        slope,
        intercept,
        max_residual,
    })
}

/// Errors, fitted rates and refinement information of one sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    /// Sorted by composite order, then time, then epsilon descending.
    pub rows: Vec<ErrorRow>,
    pub rates: Vec<RateRow>,
    /// `(epsilon, t, order, metric, coarse, fine)` for every refined value.
    pub refinement: Vec<RefinementRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefinementRow {
    pub epsilon: f64,
    pub t: f64,
    pub composite_order: usize,
    pub metric: &'static str,
    pub coarse: f64,
    pub fine: f64,
}

impl RefinementRow {
    pub fn relative_change(&self) -> f64 {
        (self.fine - self.coarse).abs() / self.coarse.abs().max(f64::MIN_POSITIVE)
    }
}

impl ConvergenceReport {
    pub fn rate(&self, metric: &str, order: usize) -> Option<&RateRow> {
        self.rates
            .iter()
            .find(|r| r.metric == metric && r.composite_order == order)
    }
}

pub const METRICS: [&str; 3] = ["err_linf_f", "err_linf_theta", "err_h2_theta"];

/// Metric label used in `rates.csv`, e.g. `err_linf_theta@t=0.05`.
pub fn metric_label(metric: &str, t: f64) -> String {
    format!("{metric}@t={t}")
}

fn metric_value(row: &ErrorRow, metric: &str) -> f64 {
    match metric {
        "err_linf_f" => row.err_linf_f,
        "err_linf_theta" => row.err_linf_theta,
        _ => row.err_h2_theta,
    }
}

/// Errors of the kinetic solution against both composites on one grid.
fn sweep_errors(cfg: &SweepConfig, grid: &PeriodicGrid<f64>, epsilons: &[f64]) -> Result<Vec<ErrorRow>> {
    let quad = cfg.quadrature()?;
    let (h, theta0) = cfg.data.build(grid, &quad)?;
    let bundle = ExpansionBundle::build(grid, &quad, cfg.velocity, &h, &theta0, &cfg.t_eval, &cfg.expansion)?;
    let t_end = cfg.t_eval.iter().copied().fold(0.0, f64::max);
    let per_eps: Vec<Result<Vec<ErrorRow>>> = epsilons
        .par_iter()
        .map(|&eps| {
            let at_eps = |e: Error| Error::AtEpsilon {
                epsilon: eps,
                source: Box::new(e),
            };
            let mut params = KineticParams::new(eps, grid, &quad).map_err(at_eps)?;
            params.cfl = cfg.cfl;
            params.transport = cfg.transport;
            params.dt = params.cfl_dt(grid, &quad);
            if grid.active_axes().next().is_none() {
                params.dt = eps * eps * 1e-2;
            }
            let solver = KineticSolver::new(grid, &quad, params, cfg.velocity).map_err(at_eps)?;
            let run = solver.run(&h, &theta0, t_end, &cfg.t_eval, |_| {}).map_err(at_eps)?;
            let mut rows = Vec::new();
            let mut snaps = run.snapshots.clone();
            if snaps.len() < cfg.t_eval.len() {
                snaps.push(run.final_state.clone());
            }
            for order in [CompositeOrder::Zero, CompositeOrder::One] {
                for snap in &snaps {
                    let (fc, tc) = bundle.composite(order, eps, snap.t).map_err(at_eps)?;
                    let df = snap.f.zip_map(&fc, |a, b| a - b);
                    let dth = snap.theta.zip_map(&tc, |a, b| a - b);
                    rows.push(ErrorRow {
                        epsilon: eps,
                        t: snap.t,
                        err_linf_f: norm_linf(df.as_slice()),
                        err_linf_theta: norm_linf(&dth),
                        err_h2_theta: norm_h2(grid, &dth),
                        composite_order: order.index(),
                    });
                }
            }
            Ok(rows)
        })
        .collect();
    let mut rows = Vec::new();
    for r in per_eps {
        rows.extend(r?);
    }
    rows.sort_by(|a, b| {
        (a.composite_order, a.t)
            .partial_cmp(&(b.composite_order, b.t))
            .expect("finite")
            .then(b.epsilon.partial_cmp(&a.epsilon).expect("finite"))
    });
    Ok(rows)
}

/// Fits every `(metric, t, order)` series and applies refinement flags.
fn fit_all(cfg: &SweepConfig, rows: &[ErrorRow], refinement: &[RefinementRow]) -> Vec<RateRow> {
    let mut rates = Vec::new();
    for order in [0usize, 1] {
        for &t in &cfg.t_eval {
            for metric in METRICS {
                let pts: Vec<(f64, f64)> = rows
                    .iter()
                    .filter(|r| r.composite_order == order && (r.t - t).abs() < 1e-12)
                    .map(|r| (r.epsilon, metric_value(r, metric)))
                    .collect();
                let label = metric_label(metric, t);
                let refined_bad = refinement.iter().any(|r| {
                    r.composite_order == order
                        && r.metric == metric
                        && (r.t - t).abs() < 1e-12
                        && r.relative_change() > REFINEMENT_TOLERANCE
                });
                let row = if pts.iter().all(|p| p.1 <= 1e-10) {
                    RateRow {
                        metric: label,
                        composite_order: order,
                        slope: f64::NAN,
                        intercept: f64::NAN,
                        max_residual: f64::NAN,
                        flag: "degenerate: zero errors".into(),
                    }
                } else {
                    match fit_rate(&pts) {
                        Ok(fit) => RateRow {
                            metric: label,
                            composite_order: order,
                            slope: fit.slope,
                            intercept: fit.intercept,
                            max_residual: fit.max_residual,
                            flag: if refined_bad {
                                "discretization-limited".into()
                            } else {
                                "ok".into()
                            },
                        },
                        Err(e) => RateRow {
                            metric: label,
                            composite_order: order,
                            slope: f64::NAN,
                            intercept: f64::NAN,
                            max_residual: f64::NAN,
                            flag: format!("degenerate: {e}"),
                        },
                    }
                };
                rates.push(row);
            }
        }
    }
    rates
}

/// Kinetic runs for every epsilon, errors against the order-0 and order-1
/// composites, fitted rates and (optionally) a refinement check at the
/// largest and smallest epsilon.
pub fn run_sweep(cfg: &SweepConfig) -> Result<ConvergenceReport> {
    cfg.validate()?;
    let rows = sweep_errors(cfg, &cfg.grid, &cfg.epsilons)?;
    let mut refinement = Vec::new();
    if cfg.refinement_check {
        let fine_grid = cfg.grid.refined(2)?;
        let first = cfg.epsilons[0];
        let last = *cfg.epsilons.last().expect("nonempty");
        let eps: Vec<f64> = if first == last { vec![first] } else { vec![first, last] };
        let fine = sweep_errors(cfg, &fine_grid, &eps)?;
        for f in &fine {
            let coarse = rows
                .iter()
                .find(|r| r.epsilon == f.epsilon && r.t == f.t && r.composite_order == f.composite_order)
                .expect("coarse row for every refined row");
            for metric in METRICS {
                refinement.push(RefinementRow {
                    epsilon: f.epsilon,
                    t: f.t,
                    composite_order: f.composite_order,
                    metric,
                    coarse: metric_value(coarse, metric),
                    fine: metric_value(f, metric),
                });
            }
        }
    }
    let rates = fit_all(cfg, &rows, &refinement);
    Ok(ConvergenceReport {
        rows,
        rates,
        refinement,
    })
}

/// Residual norms of a composite at one `(epsilon, t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualRow {
    pub epsilon: f64,
    pub t: f64,
    pub residual_l1: f64,
    pub residual_l2: f64,
    pub composite_order: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport {
    pub rows: Vec<ResidualRow>,
    pub rates: Vec<RateRow>,
}

/// `sup` norms of both residual operators on the composites, and their
/// log-log slopes over `cfg.residual_epsilons`.
pub fn residual_sweep(cfg: &SweepConfig) -> Result<ResidualReport> {
    cfg.validate()?;
    let quad = cfg.quadrature()?;
    let grid = &cfg.grid;
    let (h, theta0) = cfg.data.build(grid, &quad)?;
    let bundle = ExpansionBundle::build(grid, &quad, cfg.velocity, &h, &theta0, &cfg.t_eval, &cfg.expansion)?;
    let mut rows = Vec::new();
    for order in [CompositeOrder::Zero, CompositeOrder::One] {
        for &t in &cfg.t_eval {
            for &eps in &cfg.residual_epsilons {
                let (f, theta) = bundle.composite(order, eps, t)?;
                let rate = bundle.composite_rate(order, eps, t)?;
                let r1: DirectionalField<f64> = residual_l1(grid, &quad, &f, &theta, eps, &rate)?;
                let r2 = residual_l2(grid, &quad, &cfg.velocity, &f, &theta, eps, &rate)?;
                rows.push(ResidualRow {
                    epsilon: eps,
                    t,
                    residual_l1: norm_linf(r1.as_slice()),
                    residual_l2: norm_linf(&r2),
                    composite_order: order.index(),
                });
            }
        }
    }
    let mut rates = Vec::new();
    for order in [0usize, 1] {
        for &t in &cfg.t_eval {
            for (metric, pick) in [("residual_l1", 0usize), ("residual_l2", 1)] {
                let pts: Vec<(f64, f64)> = rows
                    .iter()
                    .filter(|r| r.composite_order == order && r.t == t)
                    .map(|r| (r.epsilon, if pick == 0 { r.residual_l1 } else { r.residual_l2 }))
                    .collect();
                let label = metric_label(metric, t);
                let row = if pts.iter().all(|p| p.1 <= 1e-12) {
                    RateRow {
                        metric: label,
                        composite_order: order,
                        slope: f64::NAN,
                        intercept: f64::NAN,
                        max_residual: f64::NAN,
                        flag: "degenerate: zero errors".into(),
                    }
                } else {
                    match fit_rate(&pts) {
                        Ok(fit) => RateRow {
                            metric: label,
                            composite_order: order,
                            slope: fit.slope,
                            intercept: fit.intercept,
                            max_residual: fit.max_residual,
                            flag: "ok".into(),
                        },
                        Err(e) => RateRow {
                            metric: label,
                            composite_order: order,
                            slope: f64::NAN,
                            intercept: f64::NAN,
                            max_residual: f64::NAN,
                            flag: format!("degenerate: {e}"),
                        },
                    }
                };
                rates.push(row);
            }
        }
    }
    Ok(ResidualReport { rows, rates })
}
