//! Equilibrium-diffusion limit
//!
//! ```text
//! d/dt (theta0 + theta0^4) + div(u theta0) - lap(theta0 + theta0^4 / 3) = 0,   f0 = theta0^4
//! ```
//!
//! its first-order interior correction
//!
//! ```text
//! d/dt ((1 + 4 theta0^3) theta1) + div(u theta1) - lap((1 + 4/3 theta0^3) theta1) = 0
//! f1 = 4 theta0^3 theta1 - w.grad(theta0^4)
//! ```
//!
//! and the residual operators of the kinetic system.

use crate::error::{Error, Result};
use crate::field::{DirectionalField, ScalarField};
use crate::grid::PeriodicGrid;
use crate::kinetic::KineticState;
use crate::linsolve::bicgstab;
use crate::ops::{advect_div, directional_derivative, directional_gradient, laplacian};
use crate::quadrature::AngularQuadrature;
use crate::real::Real;
use crate::velocity::VelocityField;

const MAX_HALVINGS: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct LimitState<T> {
    pub theta0: ScalarField<T>,
    pub t: T,
}

impl<T: Real> LimitState<T> {
    pub fn f0(&self) -> ScalarField<T> {
        self.theta0.map(|v| v.powi(4))
    }

    /// Node sum of `theta0 + theta0^4` times the cell volume.
    pub fn mass(&self, grid: &PeriodicGrid<T>) -> T {
        self.theta0.iter().fold(T::zero(), |acc, &v| acc + v + v.powi(4)) * grid.cell_volume()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Order1State<T> {
    pub theta1: ScalarField<T>,
    pub t: T,
}

/// Tolerances for the implicit limit solves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitParams<T> {
    pub picard_tol: T,
    pub max_iters: usize,
    pub linear_tol: T,
}

impl<T: Real> Default for LimitParams<T> {
    fn default() -> Self {
        Self {
            picard_tol: T::lit(1e-10),
            max_iters: 30,
            linear_tol: T::lit(1e-13),
        }
    }
}

/// Discrete operators shared by the limit solvers.
struct Ops<'a, T> {
    grid: &'a PeriodicGrid<T>,
    faces: Option<[ScalarField<T>; 3]>,
}

impl<'a, T: Real> Ops<'a, T> {
    fn new(grid: &'a PeriodicGrid<T>, u: &VelocityField) -> Self {
        let faces = (!u.is_zero()).then(|| u.face_normals(grid, T::zero()));
        Self { grid, faces }
    }

    fn advect(&self, s: &[T]) -> Option<ScalarField<T>> {
        self.faces.as_ref().map(|f| advect_div(self.grid, f, s))
    }

    /// `div(u s) - lap(c s)` with `c` a node coefficient.
    fn flux_part(&self, s: &[T], c: &[T]) -> Vec<T> {
        let cs: Vec<T> = s.iter().zip(c).map(|(&a, &b)| a * b).collect();
        let lap = laplacian(self.grid, &cs);
        let mut out: Vec<T> = lap.iter().map(|&l| -l).collect();
        if let Some(adv) = self.advect(s) {
            for (o, a) in out.iter_mut().zip(adv.iter()) {
                *o = *o + *a;
            }
        }
        out
    }

    fn laplacian_diag(&self) -> T {
        self.grid
            .active_axes()
            .fold(T::zero(), |acc, a| acc + T::lit(2.0) / self.grid.spacing(a).powi(2))
    }

    /// Solves `diag(m) x / dt + div(u x) - lap(c x) = b`.
    fn solve(&self, m: &[T], c: &[T], dt: T, b: &[T], x: &mut [T], tol: T) -> Result<()> {
        let ld = self.laplacian_diag();
        let diag: Vec<T> = m.iter().zip(c).map(|(&mi, &ci)| mi / dt + ld * ci).collect();
        let apply = |v: &[T]| -> Vec<T> {
            let mut out = self.flux_part(v, c);
            for ((o, &vi), &mi) in out.iter_mut().zip(v).zip(m) {
                *o = *o + mi * vi / dt;
            }
            out
        };
        bicgstab(apply, &diag, b, x, tol, 5_000)?;
        Ok(())
    }
}

fn check_positive<T: Real>(theta: &[T]) -> Result<()> {
    match theta.iter().enumerate().find(|(_, &v)| !(v > T::zero())) {
        Some((cell, &v)) => Err(Error::NonPositiveTemperature {
            cell,
            value: v.to_f64_lossy(),
        }),
        None => Ok(()),
    }
}

/// Backward-Euler step of the limit equation.
///
/// The nonlinear system is solved by Newton iteration, i.e. the lagged
/// coefficient linearization completed with the derivative of the lagged
/// terms, so each linear solve is written directly for the update. The
/// residual is in conservative form, so `sum(theta0 + theta0^4)` is kept to
/// the linear solver tolerance. On stall the step is split into two halves,
/// at most five times.
pub fn limit_step<T: Real>(
    grid: &PeriodicGrid<T>,
    state: &LimitState<T>,
    dt: T,
    u: &VelocityField,
    params: &LimitParams<T>,
) -> Result<LimitState<T>> {
    if !(dt > T::zero()) {
        return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
    }
    state.theta0.check_len(grid.n_cells(), "limit temperature")?;
    check_positive(&state.theta0)?;
    let ops = Ops::new(grid, u);
    step_with_halving(&ops, state, dt, params, 0)
}

fn step_with_halving<T: Real>(
    ops: &Ops<'_, T>,
    state: &LimitState<T>,
    dt: T,
    params: &LimitParams<T>,
    depth: usize,
) -> Result<LimitState<T>> {
    match newton_step(ops, state, dt, params) {
        Ok(next) => Ok(next),
        Err(err @ Error::NonPositiveTemperature { .. }) | Err(err @ Error::NoConvergence { .. }) => {
            if depth >= MAX_HALVINGS {
                return Err(err);
            }
            let half = dt * T::lit(0.5);
            let mid = step_with_halving(ops, state, half, params, depth + 1)?;
            let mut end = step_with_halving(ops, &mid, half, params, depth + 1)?;
            end.t = state.t + dt;
            Ok(end)
        }
        Err(e) => Err(e),
    }
}

fn newton_step<T: Real>(
    ops: &Ops<'_, T>,
    state: &LimitState<T>,
    dt: T,
    params: &LimitParams<T>,
) -> Result<LimitState<T>> {
    let four = T::lit(4.0);
    let third = T::one() / T::lit(3.0);
    let old_mass: Vec<T> = state.theta0.iter().map(|&v| v + v.powi(4)).collect();
    let mut theta = state.theta0.to_vec();
    let mut last = T::infinity();
    for _ in 0..params.max_iters {
        let phi: Vec<T> = theta.iter().map(|&v| v + third * v.powi(4)).collect();
        let lap = laplacian(ops.grid, &phi);
        let adv = ops.advect(&theta);
        let residual: Vec<T> = (0..theta.len())
            .map(|i| {
                let v = theta[i];
                let a = adv.as_ref().map_or(T::zero(), |a| a[i]);
                -((v + v.powi(4) - old_mass[i]) / dt + a - lap[i])
            })
            .collect();
        let m: Vec<T> = theta.iter().map(|&v| T::one() + four * v.powi(3)).collect();
        let c: Vec<T> = theta.iter().map(|&v| T::one() + four * third * v.powi(3)).collect();
        let mut delta = vec![T::zero(); theta.len()];
        ops.solve(&m, &c, dt, &residual, &mut delta, params.linear_tol)?;
        let step = delta.iter().fold(T::zero(), |a, &d| a.max(d.abs()));
        for (v, d) in theta.iter_mut().zip(&delta) {
            *v = *v + *d;
        }
        check_positive(&theta)?;
        if !step.is_finite() {
            return Err(Error::NonFinite("limit Newton update"));
        }
        if step <= params.picard_tol {
            return Ok(LimitState {
                theta0: ScalarField::from_vec(theta),
                t: state.t + dt,
            });
        }
        if step > last {
            break;
        }
        last = step;
    }
    Err(Error::NoConvergence {
        solver: "limit Newton",
        iters: params.max_iters,
        residual: last.to_f64_lossy(),
    })
}

/// Semi-discrete time derivative of `theta0`:
/// `(lap(theta0 + theta0^4/3) - div(u theta0)) / (1 + 4 theta0^3)`.
pub fn limit_rate<T: Real>(grid: &PeriodicGrid<T>, u: &VelocityField, theta0: &[T]) -> ScalarField<T> {
    let ops = Ops::new(grid, u);
    let third = T::one() / T::lit(3.0);
    let phi: Vec<T> = theta0.iter().map(|&v| v + third * v.powi(4)).collect();
    let lap = laplacian(grid, &phi);
    let adv = ops.advect(theta0);
    let data = (0..theta0.len())
        .map(|i| {
            let a = adv.as_ref().map_or(T::zero(), |a| a[i]);
            (lap[i] - a) / (T::one() + T::lit(4.0) * theta0[i].powi(3))
        })
        .collect();
    ScalarField::from_vec(data)
}

/// Limit solution at each requested time, marching with steps of at most
/// `dt` that land exactly on every entry of `times`.
pub fn limit_trajectory<T: Real>(
    grid: &PeriodicGrid<T>,
    theta_init: &ScalarField<T>,
    dt: T,
    u: &VelocityField,
    params: &LimitParams<T>,
    times: &[T],
    mut on_step: impl FnMut(&LimitState<T>),
) -> Result<Vec<LimitState<T>>> {
    let mut state = LimitState {
        theta0: theta_init.clone(),
        t: T::zero(),
    };
    on_step(&state);
    let mut out = Vec::with_capacity(times.len());
    for &target in times {
        if target < state.t {
            return Err(Error::InvalidParameter(
                "limit output times must be increasing and >= 0".into(),
            ));
        }
        while target - state.t > T::lit(1e-14) * target.max(T::one()) {
            let h = (target - state.t).min(dt);
            let h = if target - state.t - h < T::lit(1e-9) * dt {
                target - state.t
            } else {
                h
            };
            state = limit_step(grid, &state, h, u, params)?;
            on_step(&state);
        }
        state.t = target;
        out.push(state.clone());
    }
    Ok(out)
}

/// `4 theta0^3 theta1 - w.grad(theta0^4)`.
pub fn order1_intensity<T: Real>(
    grid: &PeriodicGrid<T>,
    quad: &AngularQuadrature<T>,
    theta0: &[T],
    theta1: &[T],
) -> DirectionalField<T> {
    let b: Vec<T> = theta0.iter().map(|&v| v.powi(4)).collect();
    let grad_b = directional_gradient(grid, quad, &b);
    let iso: Vec<T> = theta0
        .iter()
        .zip(theta1)
        .map(|(&a, &b)| T::lit(4.0) * a.powi(3) * b)
        .collect();
    grad_b.map(|v| -v).add_isotropic(&ScalarField::from_vec(iso))
}

/// Backward-Euler step of the order-1 interior equation from `theta0_old`
/// (at `s1.t`) to `theta0_new` (at `s1.t + dt`), with an optional source
/// added to the right-hand side at the new time. The stored quantity
/// `(1 + 4 theta0^3) theta1` changes only through conservative fluxes.
#[allow(clippy::too_many_arguments)]
pub fn order1_step<T: Real>(
    grid: &PeriodicGrid<T>,
    theta0_old: &[T],
    theta0_new: &[T],
    s1: &Order1State<T>,
    dt: T,
    u: &VelocityField,
    source: Option<&[T]>,
    params: &LimitParams<T>,
) -> Result<Order1State<T>> {
    if !(dt > T::zero()) {
        return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
    }
    let four = T::lit(4.0);
    let third = T::one() / T::lit(3.0);
    let ops = Ops::new(grid, u);
    let m: Vec<T> = theta0_new.iter().map(|&v| T::one() + four * v.powi(3)).collect();
    let c: Vec<T> = theta0_new
        .iter()
        .map(|&v| T::one() + four * third * v.powi(3))
        .collect();
    let mut b: Vec<T> = theta0_old
        .iter()
        .zip(s1.theta1.iter())
        .map(|(&v, &w)| (T::one() + four * v.powi(3)) * w / dt)
        .collect();
    if let Some(s) = source {
        for (bi, &si) in b.iter_mut().zip(s) {
            *bi = *bi + si;
        }
    }
    let mut x = s1.theta1.to_vec();
    ops.solve(&m, &c, dt, &b, &mut x, params.linear_tol)?;
    let out = ScalarField::from_vec(x);
    if !out.all_finite() {
        return Err(Error::NonFinite("order-1 step"));
    }
    Ok(Order1State {
        theta1: out,
        t: s1.t + dt,
    })
}

/// Semi-discrete time derivative of `theta1` given `theta0` and its rate.
pub fn order1_rate<T: Real>(
    grid: &PeriodicGrid<T>,
    u: &VelocityField,
    theta0: &[T],
    theta0_rate: &[T],
    theta1: &[T],
) -> ScalarField<T> {
    let ops = Ops::new(grid, u);
    let four = T::lit(4.0);
    let c: Vec<T> = theta0
        .iter()
        .map(|&v| T::one() + four / T::lit(3.0) * v.powi(3))
        .collect();
    let flux = ops.flux_part(theta1, &c);
    let data = (0..theta1.len())
        .map(|i| {
            let v = theta0[i];
            (-flux[i] - T::lit(12.0) * v * v * theta0_rate[i] * theta1[i]) / (T::one() + four * v.powi(3))
        })
        .collect();
    ScalarField::from_vec(data)
}

/// Time derivatives of `(f, theta)` fed to the residual operators.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeDerivative<T> {
    pub df: DirectionalField<T>,
    pub dtheta: ScalarField<T>,
}

impl<T: Real> TimeDerivative<T> {
    /// Centered difference of two snapshots straddling the evaluation time.
    pub fn centered(before: &KineticState<T>, after: &KineticState<T>) -> Result<Self> {
        let span = after.t - before.t;
        if !(span > T::zero()) {
            return Err(Error::InvalidParameter(
                "centered difference needs two snapshots with increasing times".into(),
            ));
        }
        let inv = T::one() / span;
        Ok(Self {
            df: after.f.zip_map(&before.f, |a, b| (a - b) * inv),
            dtheta: after.theta.zip_map(&before.theta, |a, b| (a - b) * inv),
        })
    }
}

/// `eps^2 df/dt + eps w.grad f + eps^2 (f - <f>) + f - theta^4`, with the
/// centered directional derivative.
pub fn residual_l1<T: Real>(
    grid: &PeriodicGrid<T>,
    quad: &AngularQuadrature<T>,
    f: &DirectionalField<T>,
    theta: &ScalarField<T>,
    epsilon: T,
    dt: &TimeDerivative<T>,
) -> Result<DirectionalField<T>> {
    if dt.df.n_dirs() != f.n_dirs() || dt.df.n_cells() != f.n_cells() {
        return Err(Error::Shape("time derivative does not match the intensity".into()));
    }
    let e2 = epsilon * epsilon;
    let fbar = quad.angular_average(f);
    let transport = directional_derivative(grid, quad, f);
    let n = grid.n_cells();
    let mut out = transport.map(|v| epsilon * v);
    for m in 0..quad.len() {
        let fm = f.dir(m);
        let dm = dt.df.dir(m);
        for (cell, o) in out.dir_mut(m).iter_mut().enumerate().take(n) {
            let b = theta[cell].powi(4);
            *o = *o + e2 * dm[cell] + e2 * (fm[cell] - fbar[cell]) + fm[cell] - b;
        }
    }
    Ok(out)
}

/// `eps^2 dtheta/dt + eps^2 div(u theta) - eps^2 lap theta - (<f> - theta^4)`.
pub fn residual_l2<T: Real>(
    grid: &PeriodicGrid<T>,
    quad: &AngularQuadrature<T>,
    u: &VelocityField,
    f: &DirectionalField<T>,
    theta: &ScalarField<T>,
    epsilon: T,
    dt: &TimeDerivative<T>,
) -> Result<ScalarField<T>> {
    dt.dtheta.check_len(theta.len(), "temperature derivative")?;
    let e2 = epsilon * epsilon;
    let ops = Ops::new(grid, u);
    let ones = vec![T::one(); theta.len()];
    let flux = ops.flux_part(theta, &ones);
    let fbar = quad.angular_average(f);
    let data = (0..theta.len())
        .map(|i| e2 * (dt.dtheta[i] + flux[i]) - (fbar[i] - theta[i].powi(4)))
        .collect();
    Ok(ScalarField::from_vec(data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::norms::norm_linf;

    fn bump_grid() -> (PeriodicGrid<f64>, ScalarField<f64>) {
        let grid = PeriodicGrid::<f64>::slab(32).unwrap();
        let theta = ScalarField::from_fn(&grid, |x: [f64; 3]| {
            1.0 + 0.3 * (2.0 * std::f64::consts::PI * x[0]).sin()
        });
        (grid, theta)
    }

    #[test]
    fn constants_are_steady() {
        let grid = PeriodicGrid::<f64>::unit([4, 4, 4]).unwrap();
        let s = LimitState {
            theta0: ScalarField::constant(64, 1.7),
            t: 0.0,
        };
        let next = limit_step(&grid, &s, 0.1, &VelocityField::Zero, &LimitParams::default()).unwrap();
        assert!(next.theta0.iter().all(|&v| v == 1.7));
    }

    #[test]
    fn mass_is_conserved_with_advection() {
        let (grid, theta) = bump_grid();
        let u = VelocityField::CompressibleSine { amplitude: 0.8 };
        let mut s = LimitState { theta0: theta, t: 0.0 };
        let m0 = s.mass(&grid);
        for _ in 0..10 {
            s = limit_step(&grid, &s, 0.01, &u, &LimitParams::default()).unwrap();
            assert!(((s.mass(&grid) - m0) / m0).abs() < 1e-11);
        }
    }

    #[test]
    fn diffusion_shrinks_the_range() {
        let (grid, theta) = bump_grid();
        let mut s = LimitState { theta0: theta, t: 0.0 };
        for _ in 0..5 {
            let next = limit_step(&grid, &s, 0.02, &VelocityField::Zero, &LimitParams::default()).unwrap();
            assert!(next.theta0.min() >= s.theta0.min() - 1e-12);
            assert!(next.theta0.max() <= s.theta0.max() + 1e-12);
            s = next;
        }
    }

    #[test]
    fn trajectory_lands_on_times() {
        let (grid, theta) = bump_grid();
        let traj = limit_trajectory(
            &grid,
            &theta,
            0.013,
            &VelocityField::Zero,
            &LimitParams::default(),
            &[0.0, 0.05, 0.1],
            |_| {},
        )
        .unwrap();
        assert_eq!(traj.iter().map(|s| s.t).collect::<Vec<_>>(), vec![0.0, 0.05, 0.1]);
        assert_eq!(traj[0].theta0, theta);
    }

    #[test]
    fn order1_preserves_zero() {
        let (grid, theta) = bump_grid();
        let s1 = Order1State {
            theta1: ScalarField::zeros(grid.n_cells()),
            t: 0.0,
        };
        let u = VelocityField::Constant { a: [0.3, 0.0, 0.0] };
        let next = order1_step(&grid, &theta, &theta, &s1, 0.01, &u, None, &LimitParams::default()).unwrap();
        assert_eq!(norm_linf(&next.theta1), 0.0);
    }

    #[test]
    fn order1_intensity_average() {
        let (grid, theta) = bump_grid();
        let quad = AngularQuadrature::product(4, 8).unwrap();
        let theta1 = theta.map(|v| v - 1.0);
        let f1 = order1_intensity(&grid, &quad, &theta, &theta1);
        let avg = quad.angular_average(&f1);
        for i in 0..grid.n_cells() {
            let expect = 4.0 * theta[i].powi(3) * theta1[i];
            assert!((avg[i] - expect).abs() < 1e-10);
        }
    }

    #[test]
    fn residuals_vanish_at_equilibrium() {
        let grid = PeriodicGrid::<f64>::unit([4, 4, 4]).unwrap();
        let quad = AngularQuadrature::product(4, 8).unwrap();
        let c = 1.3f64;
        let f = DirectionalField::constant(quad.len(), 64, c.powi(4));
        let theta = ScalarField::constant(64, c);
        let dt = TimeDerivative {
            df: DirectionalField::zeros(quad.len(), 64),
            dtheta: ScalarField::zeros(64),
        };
        let u = VelocityField::TaylorGreen { amplitude: 1.0 };
        let r1 = residual_l1(&grid, &quad, &f, &theta, 0.1, &dt).unwrap();
        let r2 = residual_l2(&grid, &quad, &u, &f, &theta, 0.1, &dt).unwrap();
        assert!(norm_linf(r1.as_slice()) < 1e-12);
        assert!(norm_linf(&r2) < 1e-12);
    }
}
