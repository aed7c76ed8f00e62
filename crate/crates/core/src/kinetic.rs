//! Time integration of the coupled intensity/temperature system
//!
//! ```text
//! eps^2 df/dt + eps w.grad f + eps^2 (f - <f>) + f = theta^4
//! eps^2 dtheta/dt + eps^2 div(u theta) - eps^2 lap theta = <f> - theta^4
//! ```
//!
//! on the periodic grid, by Lie splitting: explicit transport of `f`,
//! explicit conservative upwind advection of `theta`, backward-Euler
//! diffusion of `theta`, and an implicit cell-local relaxation that is
//! reduced to one monotone scalar equation through the exact identity
//! `<f>_new + theta_new = <f>_* + theta_*`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{DirectionalField, ScalarField};
use crate::grid::PeriodicGrid;
use crate::linsolve::conjugate_gradient;
use crate::ops::{advect_div, directional_gradient, laplacian, upwind_transport};
use crate::quadrature::AngularQuadrature;
use crate::real::Real;
use crate::velocity::VelocityField;

/// Discretization of the `(1/eps) w.grad f` term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransportScheme {
    /// First-order upwind applied to the whole intensity.
    Upwind,
    /// Centered differences for the angular mean, first-order upwind for the
    /// deviation `f - <f>`. The upwind dissipation then acts only on the
    /// O(eps) anisotropic part, which keeps the scheme consistent with the
    /// diffusion limit as `eps -> 0` at fixed mesh.
    #[default]
    SplitUpwind,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KineticParams<T> {
    pub epsilon: T,
    pub dt: T,
    pub cfl: T,
    pub newton_tol: T,
    pub newton_max_iters: usize,
    pub diffusion_solver_tol: T,
    pub transport: TransportScheme,
}

impl<T: Real> KineticParams<T> {
    /// Parameters with the default tolerances and `dt` left at the CFL bound
    /// for `grid`/`quad` (see [`max_stable_dt`]).
    pub fn new(epsilon: T, grid: &PeriodicGrid<T>, quad: &AngularQuadrature<T>) -> Result<Self> {
        let mut p = Self {
            epsilon,
            dt: T::one(),
            cfl: T::lit(0.8),
            newton_tol: T::lit(1e-12),
            newton_max_iters: 50,
            diffusion_solver_tol: T::lit(1e-10),
            transport: TransportScheme::default(),
        };
        p.validate()?;
        p.dt = p.cfl_dt(grid, quad);
        Ok(p)
    }

    pub fn with_dt(mut self, dt: T) -> Self {
        self.dt = dt;
        self
    }

    pub fn with_transport(mut self, transport: TransportScheme) -> Self {
        self.transport = transport;
        self
    }

    /// `cfl * max_stable_dt`, or `dt` unchanged when no axis is active.
    pub fn cfl_dt(&self, grid: &PeriodicGrid<T>, quad: &AngularQuadrature<T>) -> T {
        match max_stable_dt(grid, quad, self.epsilon) {
            Some(limit) => self.cfl * limit,
            None => self.dt,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let e = self.epsilon;
        if !(e > T::zero() && e < T::one()) {
            return Err(Error::InvalidParameter(format!("epsilon must lie in (0, 1), got {e}")));
        }
        if !(self.dt > T::zero()) || !self.dt.is_finite() {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.cfl > T::zero() && self.cfl <= T::one()) {
            return Err(Error::InvalidParameter(format!(
                "cfl must lie in (0, 1], got {}",
                self.cfl
            )));
        }
        if !(self.newton_tol > T::zero()) || !(self.diffusion_solver_tol > T::zero()) {
            return Err(Error::InvalidParameter("tolerances must be positive".into()));
        }
        Ok(())
    }
}

/// Largest `dt` keeping the explicit upwind transport at speed `1/eps`
/// monotone: `eps / max_m sum_i |w_m,i| / h_i`. `None` when every axis is a
/// slab axis and transport is inactive.
pub fn max_stable_dt<T: Real>(grid: &PeriodicGrid<T>, quad: &AngularQuadrature<T>, epsilon: T) -> Option<T> {
    grid.active_axes().next()?;
    let rate = quad
        .dirs()
        .iter()
        .map(|w| {
            grid.active_axes()
                .fold(T::zero(), |acc, a| acc + w[a].abs() / grid.spacing(a))
        })
        .fold(T::zero(), |a, b| a.max(b));
    Some(epsilon / rate)
}

/// `(f, theta)` at slow time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct KineticState<T> {
    pub f: DirectionalField<T>,
    pub theta: ScalarField<T>,
    pub t: T,
}

/// Scalar diagnostics of one state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diagnostics {
    pub t: f64,
    pub energy: f64,
    pub theta_min: f64,
    pub theta_max: f64,
    pub f_min: f64,
    pub f_max: f64,
}

/// Grey emission `theta^4`; rejects nonpositive temperatures.
pub fn emission<T: Real>(theta: &[T]) -> Result<ScalarField<T>> {
    if let Some((cell, &v)) = theta.iter().enumerate().find(|(_, &v)| !(v > T::zero())) {
        return Err(Error::NonPositiveTemperature {
            cell,
            value: v.to_f64_lossy(),
        });
    }
    Ok(ScalarField::from_vec(theta.iter().map(|&v| v.powi(4)).collect()))
}

/// Implicit cell-local relaxation.
///
/// Solves
/// ```text
/// eps^2 (fbar - fbar_star) / dt + fbar = theta^4
/// eps^2 (theta - theta_star) / dt = fbar - theta^4
/// ```
/// Summing gives `fbar + theta = fbar_star + theta_star`; substituting
/// leaves `theta + a theta^4 = b` with `a = r/(1+r)`, `r = dt/eps^2`, which
/// is strictly increasing and bracketed in `(0, fbar_star + theta_star]`.
pub fn relaxation_solve<T: Real>(
    fbar_star: T,
    theta_star: T,
    epsilon: T,
    dt: T,
    tol: T,
    max_iters: usize,
) -> Result<(T, T)> {
    if !(fbar_star >= T::zero()) || !(theta_star > T::zero()) {
        return Err(Error::InvalidParameter(format!(
            "relaxation needs fbar >= 0 and theta > 0 (got {fbar_star}, {theta_star})"
        )));
    }
    let r = dt / (epsilon * epsilon);
    let total = fbar_star + theta_star;
    let a = if r.is_infinite() { T::one() } else { r / (T::one() + r) };
    let b = if r.is_infinite() {
        total
    } else {
        (theta_star + r * total) / (T::one() + r)
    };
    let residual = |th: T| th + a * th.powi(4) - b;
    let (mut lo, mut hi) = (T::zero(), total);
    let mut th = theta_star.min(hi);
    let four = T::lit(4.0);
    for _ in 0..max_iters {
        let g = residual(th);
        if g == T::zero() {
            return Ok((total - th, th));
        }
        if g > T::zero() {
            hi = th;
        } else {
            lo = th;
        }
        let dg = T::one() + four * a * th.powi(3);
        let mut next = th - g / dg;
        if !(next >= lo && next <= hi) {
            next = T::lit(0.5) * (lo + hi);
        }
        let step = (next - th).abs();
        th = next;
        if step <= tol * th.max(T::one()) {
            return Ok((total - th, th));
        }
    }
    Err(Error::NoConvergence {
        solver: "relaxation Newton",
        iters: max_iters,
        residual: residual(th).abs().to_f64_lossy(),
    })
}

/// Frozen-source linear transport problem
/// `eps^2 df/dt + eps w.grad f + eps^2 (f - <f>) + f = F(t, x, w)`.
pub trait LinearSource<T>: Sync {
    fn eval(&self, t: T, x: [T; 3], w: [T; 3]) -> T;
}

impl<T, F> LinearSource<T> for F
where
    F: Fn(T, [T; 3], [T; 3]) -> T + Sync,
{
    fn eval(&self, t: T, x: [T; 3], w: [T; 3]) -> T {
        self(t, x, w)
    }
}

/// Grid solver for the kinetic system on a fixed grid and quadrature.
#[derive(Debug, Clone)]
pub struct KineticSolver<'a, T> {
    pub grid: &'a PeriodicGrid<T>,
    pub quad: &'a AngularQuadrature<T>,
    pub params: KineticParams<T>,
    pub velocity: VelocityField,
    faces: [ScalarField<T>; 3],
    advective_rate: T,
}

/// Snapshots of a kinetic run.
#[derive(Debug, Clone)]
pub struct KineticRun<T> {
    pub snapshots: Vec<KineticState<T>>,
    pub final_state: KineticState<T>,
    pub steps: usize,
}

impl<'a, T: Real> KineticSolver<'a, T> {
    pub fn new(
        grid: &'a PeriodicGrid<T>,
        quad: &'a AngularQuadrature<T>,
        params: KineticParams<T>,
        velocity: VelocityField,
    ) -> Result<Self> {
        params.validate()?;
        let faces = velocity.face_normals(grid, T::zero());
        let advective_rate = velocity.advective_rate(grid, T::zero());
        Ok(Self {
            grid,
            quad,
            params,
            velocity,
            faces,
            advective_rate,
        })
    }

    fn check_dt(&self, dt: T) -> Result<()> {
        let slack = T::one() + T::lit(1e-12);
        if let Some(limit) = max_stable_dt(self.grid, self.quad, self.params.epsilon) {
            let bound = self.params.cfl * limit;
            if dt > bound * slack {
                return Err(Error::Cfl {
                    dt: dt.to_f64_lossy(),
                    limit: bound.to_f64_lossy(),
                });
            }
        }
        if dt * self.advective_rate > slack {
            return Err(Error::Cfl {
                dt: dt.to_f64_lossy(),
                limit: (T::one() / self.advective_rate).to_f64_lossy(),
            });
        }
        Ok(())
    }

    /// `(dt / eps) * (w.grad) f` with the configured scheme.
    fn transport_increment(&self, f: &DirectionalField<T>, dt: T) -> DirectionalField<T> {
        let speed = dt / self.params.epsilon;
        match self.params.transport {
            TransportScheme::Upwind => upwind_transport(self.grid, self.quad, f, speed),
            TransportScheme::SplitUpwind => {
                let fbar = self.quad.angular_average(f);
                let dev = f.add_isotropic(&fbar.scaled(-T::one()));
                let up = upwind_transport(self.grid, self.quad, &dev, speed);
                let centered = directional_gradient(self.grid, self.quad, &fbar);
                up.axpy(speed, &centered)
            }
        }
    }

    fn transport(&self, f: &DirectionalField<T>, dt: T) -> DirectionalField<T> {
        if self.grid.active_axes().next().is_none() {
            return f.clone();
        }
        let inc = self.transport_increment(f, dt);
        f.axpy(-T::one(), &inc)
    }

    /// Backward-Euler diffusion `(I - dt lap) theta_new = theta`.
    ///
    /// CG started from `theta` only adds zero-sum Krylov vectors, so the
    /// node sum is preserved regardless of the solver tolerance.
    fn diffuse(&self, theta: &ScalarField<T>, dt: T) -> Result<ScalarField<T>> {
        if self.grid.active_axes().next().is_none() {
            return Ok(theta.clone());
        }
        let grid = self.grid;
        let apply = |v: &[T]| -> Vec<T> {
            let lap = laplacian(grid, v);
            v.iter().zip(lap.iter()).map(|(&a, &l)| a - dt * l).collect()
        };
        let mut x = theta.to_vec();
        conjugate_gradient(apply, theta, &mut x, self.params.diffusion_solver_tol, 10_000)?;
        Ok(ScalarField::from_vec(x))
    }

    /// One Lie-split step of the nonlinear system.
    pub fn step(&self, state: &KineticState<T>) -> Result<KineticState<T>> {
        self.step_dt(state, self.params.dt)
    }

    pub fn step_dt(&self, state: &KineticState<T>, dt: T) -> Result<KineticState<T>> {
        self.check_dt(dt)?;
        let eps = self.params.epsilon;
        let f_star = self.transport(&state.f, dt);

        let mut theta = state.theta.clone();
        if !self.velocity.is_zero() {
            let adv = advect_div(self.grid, &self.faces, &theta);
            theta = theta.axpy(-dt, &adv);
        }
        let theta_star = self.diffuse(&theta, dt)?;

        let fbar_star = self.quad.angular_average(&f_star);
        let (tol, iters) = (self.params.newton_tol, self.params.newton_max_iters);
        let relaxed: Vec<(T, T)> = fbar_star
            .par_iter()
            .zip(theta_star.par_iter())
            .map(|(&fb, &th)| relaxation_solve(fb, th, eps, dt, tol, iters))
            .collect::<Result<_>>()?;
        let fbar_new: Vec<T> = relaxed.iter().map(|p| p.0).collect();
        let theta_new: ScalarField<T> = ScalarField::from_vec(relaxed.iter().map(|p| p.1).collect());

        let r = dt / (eps * eps);
        let eps2 = eps * eps;
        let denom = T::one() + r * (eps2 + T::one());
        let mut f_new = f_star;
        f_new.dirs_mut().for_each(|chunk| {
            for (cell, v) in chunk.iter_mut().enumerate() {
                let b = theta_new[cell].powi(4);
                *v = (*v + r * (eps2 * fbar_new[cell] + b)) / denom;
            }
        });
        if !f_new.all_finite() || !theta_new.all_finite() {
            return Err(Error::NonFinite("kinetic step"));
        }
        Ok(KineticState {
            f: f_new,
            theta: theta_new,
            t: state.t + dt,
        })
    }

    /// One step of the frozen-source linear problem (no temperature).
    pub fn step_linear(
        &self,
        f: &DirectionalField<T>,
        t: T,
        dt: T,
        source: &dyn LinearSource<T>,
    ) -> Result<DirectionalField<T>> {
        self.check_dt(dt)?;
        let eps = self.params.epsilon;
        let eps2 = eps * eps;
        let r = dt / eps2;
        let t_new = t + dt;
        let f_star = self.transport(f, dt);
        let grid = self.grid;
        let quad = self.quad;
        let src = DirectionalField::from_dirs(quad.len(), grid.n_cells(), |m, out| {
            let w = quad.dir(m);
            for (cell, o) in out.iter_mut().enumerate() {
                *o = source.eval(t_new, grid.position(cell), w);
            }
        });
        let fbar_star = quad.angular_average(&f_star);
        let src_bar = quad.angular_average(&src);
        let fbar_new = fbar_star.zip_map(&src_bar, |a, s| (a + r * s) / (T::one() + r));
        let denom = T::one() + r * (eps2 + T::one());
        let mut out = f_star;
        let n = grid.n_cells();
        out.as_mut_slice()
            .par_chunks_mut(n)
            .zip(src.as_slice().par_chunks(n))
            .for_each(|(chunk, s)| {
                for (cell, v) in chunk.iter_mut().enumerate() {
                    *v = (*v + r * (eps2 * fbar_new[cell] + s[cell])) / denom;
                }
            });
        if !out.all_finite() {
            return Err(Error::NonFinite("linear kinetic step"));
        }
        Ok(out)
    }

    pub fn diagnostics(&self, state: &KineticState<T>) -> Diagnostics {
        let fbar = self.quad.angular_average(&state.f);
        let energy = (state.theta.sum() + fbar.sum()) * self.grid.cell_volume();
        Diagnostics {
            t: state.t.to_f64_lossy(),
            energy: energy.to_f64_lossy(),
            theta_min: state.theta.min().to_f64_lossy(),
            theta_max: state.theta.max().to_f64_lossy(),
            f_min: state.f.min().to_f64_lossy(),
            f_max: state.f.max().to_f64_lossy(),
        }
    }

    /// Advances from `(h, theta0)` at `t = 0` to `t_end`, recording a
    /// snapshot at every time in `snapshot_times` (steps are shortened to land
    /// on them exactly). `on_step` sees every accepted state, including the
    /// initial one.
    pub fn run(
        &self,
        h: &DirectionalField<T>,
        theta0: &ScalarField<T>,
        t_end: T,
        snapshot_times: &[T],
        mut on_step: impl FnMut(&KineticState<T>),
    ) -> Result<KineticRun<T>> {
        if h.n_dirs() != self.quad.len() || h.n_cells() != self.grid.n_cells() {
            return Err(Error::Shape("initial intensity does not match grid/quadrature".into()));
        }
        theta0.check_len(self.grid.n_cells(), "initial temperature")?;
        if h.as_slice().iter().any(|&v| !(v >= T::zero())) {
            return Err(Error::InvalidParameter("initial intensity must be nonnegative".into()));
        }
        emission(theta0)?;
        let mut targets: Vec<T> = snapshot_times.iter().copied().filter(|&s| s <= t_end).collect();
        targets.sort_by(|a, b| a.partial_cmp(b).expect("finite snapshot times"));
        targets.push(t_end);

        let mut state = KineticState {
            f: h.clone(),
            theta: theta0.clone(),
            t: T::zero(),
        };
        on_step(&state);
        let mut snapshots = Vec::new();
        let mut steps = 0usize;
        let close = |a: T, b: T| (a - b).abs() <= T::lit(1e-12) * b.abs().max(T::one());
        for (k, &target) in targets.iter().enumerate() {
            while state.t < target && !close(state.t, target) {
                let remaining = target - state.t;
                let dt = if remaining <= self.params.dt * (T::one() + T::lit(1e-9)) {
                    remaining
                } else {
                    self.params.dt
                };
                state = self.step_dt(&state, dt)?;
                if close(state.t, target) {
                    state.t = target;
                }
                steps += 1;
                on_step(&state);
            }
            if k + 1 < targets.len() {
                snapshots.push(state.clone());
            }
        }
        Ok(KineticRun {
            snapshots,
            final_state: state,
            steps,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn emission_values_and_errors() {
        let e = emission(&[1.0, 3.0, 0.5]).unwrap();
        assert_eq!(e.as_slice(), &[1.0, 81.0, 0.0625]);
        assert!(matches!(
            emission(&[1.0, 0.0]),
            Err(Error::NonPositiveTemperature { cell: 1, .. })
        ));
    }

    #[test]
    fn relaxation_fixed_point_is_equilibrium() {
        for &c in &[0.3f64, 1.0, 2.2] {
            let (fb, th) = relaxation_solve(c * c * c * c, c, 0.1, 1e-3, 1e-14, 50).unwrap();
            assert!((th - c).abs() < 1e-13 * c.max(1.0));
            assert!((fb - c.powi(4)).abs() < 1e-12 * c.powi(4).max(1.0));
        }
    }

    #[test]
    fn relaxation_stays_at_equilibrium_with_loose_tolerance() {
        // An exact starting root must not be abandoned for a bisection step.
        for &c in &[0.7f64, 1.2, 1.9] {
            let (fb, th) = relaxation_solve(c.powi(4), c, 0.1, 1.17e-2, 1e-12, 50).unwrap();
            assert!((th - c).abs() <= 8.0 * f64::EPSILON * c, "c = {c}: {th}");
            assert!(
                (fb - c.powi(4)).abs() <= 8.0 * f64::EPSILON * c.powi(4),
                "c = {c}: {fb}"
            );
        }
    }

    #[test]
    fn relaxation_matches_bisection_oracle() {
        // eps = dt = 1, fbar* = 0, theta* = 1: the two update equations give
        // 2 theta + theta^4 = 2 for the new temperature.
        let (fb, th) = relaxation_solve(0.0, 1.0, 1.0, 1.0, 1e-15, 60).unwrap();
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if 2.0 * mid + mid.powi(4) - 2.0 > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        assert!((th - 0.5 * (lo + hi)).abs() < 1e-13);
        assert!(th > 0.0 && th < 1.0);
        assert!((fb + th - 1.0).abs() < 1e-15);
        // Both original equations hold.
        assert!((fb - 0.0 + fb - th.powi(4)).abs() < 1e-12);
        assert!((th - 1.0 - (fb - th.powi(4))).abs() < 1e-12);
    }

    #[test]
    fn relaxation_survives_tiny_epsilon() {
        let (fb, th) = relaxation_solve(2.0f64, 0.5, 1e-200, 1.0, 1e-14, 60).unwrap();
        assert!(fb.is_finite() && th.is_finite());
        assert!((th + th.powi(4) - 2.5).abs() < 1e-12);
    }

    #[test]
    fn relaxation_rejects_bad_inputs() {
        assert!(relaxation_solve(-1.0, 1.0, 0.1, 0.1, 1e-12, 10).is_err());
        assert!(relaxation_solve(1.0, 0.0, 0.1, 0.1, 1e-12, 10).is_err());
    }

    #[test]
    fn cfl_violation_is_reported() {
        let grid = PeriodicGrid::<f64>::slab(16).unwrap();
        let quad = AngularQuadrature::product(4, 4).unwrap();
        let params = KineticParams::new(0.1, &grid, &quad).unwrap();
        let solver = KineticSolver::new(&grid, &quad, params, VelocityField::Zero).unwrap();
        let state = KineticState {
            f: DirectionalField::constant(quad.len(), 16, 1.0),
            theta: ScalarField::constant(16, 1.0),
            t: 0.0,
        };
        assert!(matches!(solver.step_dt(&state, 1.0), Err(Error::Cfl { .. })));
    }

    #[test]
    fn invalid_epsilon_rejected() {
        let grid = PeriodicGrid::<f64>::slab(4).unwrap();
        let quad = AngularQuadrature::product(2, 4).unwrap();
        assert!(KineticParams::new(1.5, &grid, &quad).is_err());
        assert!(KineticParams::new(0.0, &grid, &quad).is_err());
    }
}
