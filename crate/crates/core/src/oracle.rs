//! Mesh-free Duhamel oracle for the frozen-source linear transport problem
//!
//! ```text
//! eps^2 dI/dt + eps w.grad I + eps^2 (I - <I>) + I = F(t, x, w),   I(0) = h
//! ```
//!
//! With `tau = t / eps^2` and `lambda = 1 + eps^2`, the Picard map along
//! characteristics is
//!
//! ```text
//! I_k(tau, x, w) = h(x - eps tau w, w) exp(-lambda tau)
//!     + int_0^tau (eps^2 <I_{k-1}> + F)(eps^2 s, x - eps (tau - s) w, w) exp(-lambda (tau - s)) ds
//! ```
//!
//! The `s` integral uses an exponentially fitted trapezoid rule on a uniform
//! grid in `tau`: the exponential is integrated exactly against the linear
//! interpolant of the rest, so all weights are positive and sum to
//! `(1 - exp(-lambda tau)) / lambda`. Angular means of an iterate are stored on
//! a spatial lattice at every `tau` node and interpolated multilinearly in
//! space, so each Picard level costs one sweep over the lattice instead of
//! the exponential recursion of a naive closure.
//!
//! Iterates are tracked through their increments `v_k = I_k - I_{k-1}`, which
//! obey the source-free recursion `v_{k+1} = eps^2 int <v_k> ...`.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::DirectionalField;
use crate::grid::PeriodicGrid;
use crate::kinetic::{KineticParams, KineticSolver, TransportScheme};
use crate::ops::interpolate;
use crate::quadrature::AngularQuadrature;
use crate::velocity::VelocityField;

pub type InitialFn = Arc<dyn Fn([f64; 3], [f64; 3]) -> f64 + Send + Sync>;
pub type SourceFn = Arc<dyn Fn(f64, [f64; 3], [f64; 3]) -> f64 + Send + Sync>;

/// Linear transport problem evaluated by the oracle.
#[derive(Clone)]
pub struct TransportProblem {
    pub epsilon: f64,
    pub h: InitialFn,
    pub source: SourceFn,
    pub t_eval: f64,
    /// Spatial sample points; every point is evaluated in every direction.
    pub samples: Vec<[f64; 3]>,
    pub quad: AngularQuadrature<f64>,
    /// Lattice carrying the angular means between Picard levels. Slab axes
    /// of the lattice are slab axes of the problem.
    pub lattice: PeriodicGrid<f64>,
    pub panels_per_tau: usize,
}

impl std::fmt::Debug for TransportProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TransportProblem")
            .field("epsilon", &self.epsilon)
            .field("t_eval", &self.t_eval)
            .field("samples", &self.samples.len())
            .field("dirs", &self.quad.len())
            .field("lattice", &self.lattice.n())
            .field("panels_per_tau", &self.panels_per_tau)
            .finish()
    }
}

/// Default sample set: a tensor product of five points per non-slab axis.
pub fn default_samples(lattice: &PeriodicGrid<f64>) -> Vec<[f64; 3]> {
    let coords = |axis: usize| -> Vec<f64> {
        if lattice.is_slab(axis) {
            vec![0.0]
        } else {
            let l = lattice.lengths()[axis];
            (0..5).map(|i| l * (0.1 + 0.2 * i as f64)).collect()
        }
    };
    let (xs, ys, zs) = (coords(0), coords(1), coords(2));
    let mut out = Vec::with_capacity(xs.len() * ys.len() * zs.len());
    for &z in &zs {
        for &y in &ys {
            for &x in &xs {
                out.push([x, y, z]);
            }
        }
    }
    out
}

impl TransportProblem {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must lie in (0, 1), got {}",
                self.epsilon
            )));
        }
        if !(self.t_eval >= 0.0) || !self.t_eval.is_finite() {
            return Err(Error::InvalidParameter("t_eval must be nonnegative".into()));
        }
        if self.panels_per_tau == 0 || self.samples.is_empty() {
            return Err(Error::InvalidParameter("oracle needs panels and samples".into()));
        }
        Ok(())
    }

    fn lambda(&self) -> f64 {
        1.0 + self.epsilon * self.epsilon
    }

    /// Uniform `tau` nodes `0 = tau_0 < ... < tau_J = t_eval / eps^2`.
    fn tau_grid(&self) -> (usize, f64) {
        let tau = self.t_eval / (self.epsilon * self.epsilon);
        let panels = ((tau * self.panels_per_tau as f64).ceil() as usize).max(1);
        (panels, tau / panels as f64)
    }
}

/// Exponentially fitted trapezoid weights for one panel of width `d`:
/// `int_0^d exp(-lambda v) (1 - v/d) dv` (node nearer the evaluation time)
/// and `int_0^d exp(-lambda v) v/d dv`.
fn panel_weights(lambda: f64, d: f64) -> (f64, f64, f64) {
    let z = lambda * d;
    let e = (-z).exp();
    let total = -(-z).exp_m1() / lambda;
    // (1 - e (1 + z)) / (lambda^2 d), written to avoid cancellation for small z
    let far = if z < 1e-3 {
        d * (0.5 - z / 3.0 + z * z / 8.0 - z * z * z / 30.0)
    } else {
        (1.0 - e * (1.0 + z)) / (lambda * lambda * d)
    };
    (total - far, far, e)
}

/// Weighted characteristic integral
/// `sum_i w_i g(s_i, x - eps (tau_j - s_i) w)` for `j` panels.
fn characteristic_sum(
    j: usize,
    d: f64,
    weights: (f64, f64, f64),
    eps: f64,
    x: [f64; 3],
    w: [f64; 3],
    g: &impl Fn(usize, [f64; 3]) -> f64,
) -> f64 {
    let (near, far, e) = weights;
    let mut acc = 0.0;
    let mut decay = 1.0;
    let at = |i: usize| {
        let back = eps * d * (j - i) as f64;
        g(i, [x[0] - back * w[0], x[1] - back * w[1], x[2] - back * w[2]])
    };
    let mut upper = at(j);
    for i in (0..j).rev() {
        let lower = at(i);
        acc += decay * (near * upper + far * lower);
        decay *= e;
        upper = lower;
    }
    acc
}

/// Angular means of an increment on the `tau` grid times lattice.
#[derive(Debug, Clone)]
struct MeanTable {
    n_lattice: usize,
    /// The only non-slab axis, when there is exactly one.
    line: Option<usize>,
    values: Vec<f64>,
}

impl MeanTable {
    fn at(&self, lattice: &PeriodicGrid<f64>, j: usize, x: [f64; 3]) -> f64 {
        let row = &self.values[j * self.n_lattice..(j + 1) * self.n_lattice];
        match self.line {
            Some(axis) => {
                let n = self.n_lattice;
                let xi = (x[axis] / lattice.spacing(axis)).rem_euclid(n as f64);
                let fl = xi.floor();
                let i0 = (fl as usize) % n;
                let fr = xi - fl;
                (1.0 - fr) * row[i0] + fr * row[(i0 + 1) % n]
            }
            None => interpolate(lattice, row, x),
        }
    }
}

/// One Picard level: values at the samples (direction-major, at `t_eval`)
/// plus the angular-mean table driving the next level, and the sup norm
/// over samples and lattice.
#[derive(Debug, Clone)]
pub struct Level {
    pub sample_values: Vec<f64>,
    pub norm: f64,
    means: MeanTable,
}

fn single_axis(lattice: &PeriodicGrid<f64>) -> Option<usize> {
    let active: Vec<usize> = lattice.active_axes().collect();
    (active.len() == 1).then(|| active[0])
}

/// Direction classes: directions whose components along the non-slab axes
/// coincide see identical characteristics. Returns the class of every
/// direction and one representative per class.
fn direction_classes(prob: &TransportProblem) -> (Vec<usize>, Vec<usize>) {
    let active: Vec<usize> = prob.lattice.active_axes().collect();
    let mut reps: Vec<usize> = Vec::new();
    let mut class = Vec::with_capacity(prob.quad.len());
    for m in 0..prob.quad.len() {
        let w = prob.quad.dir(m);
        let found = reps.iter().position(|&r| {
            let v = prob.quad.dir(r);
            active.iter().all(|&a| v[a].to_bits() == w[a].to_bits())
        });
        match found {
            Some(c) => class.push(c),
            None => {
                class.push(reps.len());
                reps.push(m);
            }
        }
    }
    (class, reps)
}

/// Evaluates `value(j, x, m)` on the lattice for every `tau` node and at
/// the samples for the last node. With `classes`, `value` is called once
/// per direction class (with the representative direction).
fn evaluate_level(
    prob: &TransportProblem,
    classes: Option<&(Vec<usize>, Vec<usize>)>,
    value: impl Fn(usize, [f64; 3], usize) -> f64 + Sync,
) -> Level {
    let (panels, _) = prob.tau_grid();
    let lattice = &prob.lattice;
    let nl = lattice.n_cells();
    let nd = prob.quad.len();
    let identity: (Vec<usize>, Vec<usize>) = ((0..nd).collect(), (0..nd).collect());
    let (class, reps) = classes.unwrap_or(&identity);
    let point = |j: usize, x: [f64; 3]| -> Vec<f64> {
        let per_class: Vec<f64> = reps.iter().map(|&m| value(j, x, m)).collect();
        class.iter().map(|&c| per_class[c]).collect()
    };
    let rows: Vec<(f64, f64)> = (0..(panels + 1) * nl)
        .into_par_iter()
        .map(|idx| {
            let (j, l) = (idx / nl, idx % nl);
            let vals = point(j, lattice.position(l));
            let mut mean = 0.0;
            let mut sup = 0.0f64;
            for (m, v) in vals.iter().enumerate() {
                mean += prob.quad.weights()[m] * v;
                sup = sup.max(v.abs());
            }
            (mean, sup)
        })
        .collect();
    let mut values = Vec::with_capacity(rows.len());
    let mut norm = 0.0f64;
    for (v, s) in rows {
        values.push(v);
        norm = norm.max(s);
    }
    let ns = prob.samples.len();
    let per_sample: Vec<Vec<f64>> = prob.samples.par_iter().map(|&x| point(panels, x)).collect();
    let mut sample_values = vec![0.0; nd * ns];
    for (s, vals) in per_sample.iter().enumerate() {
        for (m, &v) in vals.iter().enumerate() {
            sample_values[m * ns + s] = v;
            norm = norm.max(v.abs());
        }
    }
    Level {
        sample_values,
        norm,
        means: MeanTable {
            n_lattice: nl,
            line: single_axis(lattice),
            values,
        },
    }
}

/// First increment `v_1 = I_1`: damped free streaming of `h` plus the
/// integrated source, i.e. one application of the map to `I_0 = 0`.
pub fn first_iterate(prob: &TransportProblem) -> Result<Level> {
    prob.validate()?;
    let (_, d) = prob.tau_grid();
    let eps = prob.epsilon;
    let lambda = prob.lambda();
    let weights = panel_weights(lambda, d);
    Ok(evaluate_level(prob, None, |j, x, m| {
        let w = prob.quad.dir(m);
        let tau = d * j as f64;
        let back = eps * tau;
        let start = [x[0] - back * w[0], x[1] - back * w[1], x[2] - back * w[2]];
        let free = (prob.h)(start, w) * (-lambda * tau).exp();
        let src = characteristic_sum(j, d, weights, eps, x, w, &|i, y| {
            (prob.source)(eps * eps * d * i as f64, y, w)
        });
        free + src
    }))
}

/// Next increment `v_{k+1}` from `v_k`: the scattering term of the map,
/// `eps^2 int <v_k>(s, x - eps (tau - s) w) exp(-lambda (tau - s)) ds`.
pub fn duhamel_apply(prob: &TransportProblem, prev: &Level) -> Level {
    let (_, d) = prob.tau_grid();
    let eps = prob.epsilon;
    let weights = panel_weights(prob.lambda(), d);
    let lattice = &prob.lattice;
    let classes = direction_classes(prob);
    evaluate_level(prob, Some(&classes), |j, x, m| {
        let w = prob.quad.dir(m);
        eps * eps * characteristic_sum(j, d, weights, eps, x, w, &|i, y| prev.means.at(lattice, i, y))
    })
}

/// Outcome of the Picard iteration.
#[derive(Debug, Clone)]
pub struct FixedPoint {
    /// `I` at `(t_eval, sample, direction)`, direction-major.
    pub values: Vec<f64>,
    /// `||v_k||` for `k = 1, 2, ...`.
    pub increment_norms: Vec<f64>,
    /// `||v_{k+1}|| / ||v_k||`.
    pub ratios: Vec<f64>,
    /// `eps^2 / (1 + eps^2)`.
    pub ratio_bound: f64,
    /// `(1 + eps^2) (||h|| + ||F||)` with sup norms over the samples and lattice.
    pub linf_bound: f64,
}

impl FixedPoint {
    pub fn max_ratio(&self) -> f64 {
        self.ratios.iter().copied().fold(0.0, f64::max)
    }

    pub fn contraction_holds(&self) -> bool {
        self.max_ratio() <= self.ratio_bound + 1e-6
    }

    pub fn linf(&self) -> f64 {
        self.values.iter().fold(0.0f64, |a, v| a.max(v.abs()))
    }

    pub fn iterations(&self) -> usize {
        self.increment_norms.len()
    }
}

/// Sup norms of `h` and `F` over the lattice, the samples, all directions
/// and (for `F`) all `tau` nodes.
fn data_sup(prob: &TransportProblem) -> (f64, f64) {
    let (panels, d) = prob.tau_grid();
    let eps2 = prob.epsilon * prob.epsilon;
    let points: Vec<[f64; 3]> = (0..prob.lattice.n_cells())
        .map(|l| prob.lattice.position(l))
        .chain(prob.samples.iter().copied())
        .collect();
    let mut sh = 0.0f64;
    let mut sf = 0.0f64;
    for x in &points {
        for m in 0..prob.quad.len() {
            let w = prob.quad.dir(m);
            sh = sh.max((prob.h)(*x, w).abs());
            for j in 0..=panels {
                sf = sf.max((prob.source)(eps2 * d * j as f64, *x, w).abs());
            }
        }
    }
    (sh, sf)
}

/// Picard iteration until `||v_k|| <= tol`.
pub fn solve_fixed_point(prob: &TransportProblem, tol: f64, max_iters: usize) -> Result<FixedPoint> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter("tolerance must be positive".into()));
    }
    let mut level = first_iterate(prob)?;
    let mut values = level.sample_values.clone();
    let mut norms = vec![level.norm];
    let mut ratios = Vec::new();
    while level.norm > tol {
        if norms.len() >= max_iters {
            return Err(Error::NoConvergence {
                solver: "Duhamel Picard iteration",
                iters: max_iters,
                residual: level.norm,
            });
        }
        let next = duhamel_apply(prob, &level);
        for (v, n) in values.iter_mut().zip(&next.sample_values) {
            *v += n;
        }
        if level.norm > 0.0 {
            ratios.push(next.norm / level.norm);
        }
        norms.push(next.norm);
        level = next;
    }
    let eps2 = prob.epsilon * prob.epsilon;
    let (sh, sf) = data_sup(prob);
    Ok(FixedPoint {
        values,
        increment_norms: norms,
        ratios,
        ratio_bound: eps2 / (1.0 + eps2),
        linf_bound: (1.0 + eps2) * (sh + sf),
    })
}

/// Maximum difference between a grid solution (interpolated multilinearly
/// at the samples) and oracle values.
pub fn grid_discrepancy(
    grid: &PeriodicGrid<f64>,
    solution: &DirectionalField<f64>,
    prob: &TransportProblem,
    oracle_values: &[f64],
) -> Result<f64> {
    let nd = prob.quad.len();
    let ns = prob.samples.len();
    if solution.n_dirs() != nd || solution.n_cells() != grid.n_cells() || oracle_values.len() != nd * ns {
        return Err(Error::Shape("grid solution and oracle problem do not match".into()));
    }
    if grid.slab_mask() != prob.lattice.slab_mask() {
        return Err(Error::Shape("grid and oracle lattice differ in slab axes".into()));
    }
    let mut worst = 0.0f64;
    for m in 0..nd {
        for (s, x) in prob.samples.iter().enumerate() {
            let g = interpolate(grid, solution.dir(m), *x);
            worst = worst.max((g - oracle_values[m * ns + s]).abs());
        }
    }
    Ok(worst)
}

/// Grid solution of the linear problem at `t_eval`.
pub fn grid_linear_solution(
    prob: &TransportProblem,
    grid: &PeriodicGrid<f64>,
    scheme: TransportScheme,
    cfl: f64,
) -> Result<DirectionalField<f64>> {
    prob.validate()?;
    let quad = &prob.quad;
    let mut params = KineticParams::new(prob.epsilon, grid, quad)?.with_transport(scheme);
    params.cfl = cfl;
    params.dt = params.cfl_dt(grid, quad);
    let solver = KineticSolver::new(grid, quad, params, VelocityField::Zero)?;
    let mut f = DirectionalField::from_dirs(quad.len(), grid.n_cells(), |m, out| {
        let w = quad.dir(m);
        for (c, o) in out.iter_mut().enumerate() {
            *o = (prob.h)(grid.position(c), w);
        }
    });
    let source = |t: f64, x: [f64; 3], w: [f64; 3]| (prob.source)(t, x, w);
    let mut t = 0.0;
    while prob.t_eval - t > 1e-14 * prob.t_eval.max(1.0) {
        let dt = params.dt.min(prob.t_eval - t);
        f = solver.step_linear(&f, t, dt, &source)?;
        t += dt;
    }
    Ok(f)
}

/// Discrepancies of grid solutions at successive resolutions.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossValidation {
    pub resolutions: Vec<usize>,
    pub discrepancies: Vec<f64>,
}

impl CrossValidation {
    /// Successive discrepancy ratios (finer / coarser).
    pub fn ratios(&self) -> Vec<f64> {
        self.discrepancies.windows(2).map(|w| w[1] / w[0]).collect()
    }
}

/// Runs the grid solver with `n` cells along every non-slab axis of the
/// oracle lattice for each `n` in `resolutions` (time step proportional to
/// the mesh width) and compares with the oracle values.
pub fn cross_validate(
    prob: &TransportProblem,
    oracle_values: &[f64],
    resolutions: &[usize],
    scheme: TransportScheme,
    cfl: f64,
) -> Result<CrossValidation> {
    let mask = prob.lattice.slab_mask();
    let len = prob.lattice.lengths();
    let mut discrepancies = Vec::with_capacity(resolutions.len());
    for &n in resolutions {
        let dims = std::array::from_fn(|a| if mask[a] { 1 } else { n });
        let grid = PeriodicGrid::new(dims, len)?;
        let sol = grid_linear_solution(prob, &grid, scheme, cfl)?;
        discrepancies.push(grid_discrepancy(&grid, &sol, prob, oracle_values)?);
    }
    Ok(CrossValidation {
        resolutions: resolutions.to_vec(),
        discrepancies,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant_problem(eps: f64, h: f64, f: f64, t: f64) -> TransportProblem {
        let lattice = PeriodicGrid::slab(8).unwrap();
        TransportProblem {
            epsilon: eps,
            h: Arc::new(move |_, _| h),
            source: Arc::new(move |_, _, _| f),
            t_eval: t,
            samples: default_samples(&lattice),
            quad: AngularQuadrature::product(2, 4).unwrap(),
            lattice,
            panels_per_tau: 64,
        }
    }

    #[test]
    fn panel_weights_sum_exactly() {
        for &(lambda, d) in &[(1.25, 0.01), (1.01, 1e-5), (2.0, 0.5)] {
            let (near, far, e) = panel_weights(lambda, d);
            assert!(near > 0.0 && far > 0.0);
            let exact = (1.0 - e) / lambda;
            assert!((near + far - exact).abs() < 1e-10 * exact);
            // linear integrand is integrated exactly
            let n = 20_000;
            let mut q = 0.0;
            for k in 0..n {
                let v = d * (k as f64 + 0.5) / n as f64;
                q += (-lambda * v).exp() * (v / d) * d / n as f64;
            }
            assert!((q - far).abs() < 1e-8 * far);
        }
    }

    #[test]
    fn constants_are_fixed_points() {
        let prob = constant_problem(0.5, 2.0, 2.0, 0.1);
        let fp = solve_fixed_point(&prob, 1e-13, 50).unwrap();
        for v in &fp.values {
            assert!((v - 2.0).abs() < 1e-10);
        }
    }

    #[test]
    fn relaxation_to_source() {
        // h = 0, F = c: I = c (1 - exp(-t / eps^2)) since <I> = I.
        let eps = 0.3;
        let t = 0.05;
        let mut prob = constant_problem(eps, 0.0, 1.5, t);
        // second-order rule: 1e-8 needs about 1000 panels per unit tau
        prob.panels_per_tau = 1024;
        let fp = solve_fixed_point(&prob, 1e-14, 50).unwrap();
        let exact = 1.5 * (1.0 - (-t / (eps * eps)).exp());
        for v in &fp.values {
            assert!((v - exact).abs() < 1e-8, "{v} vs {exact}");
        }
    }

    #[test]
    fn free_streaming_without_source() {
        let lattice = PeriodicGrid::slab(16).unwrap();
        let eps = 0.5;
        let prob = TransportProblem {
            epsilon: eps,
            h: Arc::new(|x, _| 1.0 + (2.0 * std::f64::consts::PI * x[0]).sin()),
            source: Arc::new(|_, _, _| 0.0),
            t_eval: 0.1,
            samples: default_samples(&lattice),
            quad: AngularQuadrature::product(2, 4).unwrap(),
            lattice,
            panels_per_tau: 32,
        };
        let v1 = first_iterate(&prob).unwrap();
        let tau = 0.1 / (eps * eps);
        let ns = prob.samples.len();
        for m in 0..prob.quad.len() {
            let w = prob.quad.dir(m);
            for (s, x) in prob.samples.iter().enumerate() {
                let expect = (1.0 + (2.0 * std::f64::consts::PI * (x[0] - eps * tau * w[0])).sin())
                    * (-(1.0 + eps * eps) * tau).exp();
                assert!((v1.sample_values[m * ns + s] - expect).abs() < 1e-13);
            }
        }
    }
}
