//! Interior expansion plus initial layers, and the composite approximation
//!
//! ```text
//! theta ~ theta0(t) + thetaI0(t/eps^2) + eps (theta1(t) + thetaI1(t/eps^2))
//! f     ~ theta0^4  + fI0(t/eps^2)     + eps (f1(t)     + fI1(t/eps^2))
//! ```
//!
//! None of the pieces depend on `eps`, so one bundle serves a whole sweep.

use crate::error::{Error, Result};
use crate::field::{DirectionalField, ScalarField};
use crate::grid::PeriodicGrid;
use crate::layers::{build_layers, LayerOptions, LayerSet};
use crate::limit::{
    limit_rate, limit_step, order1_intensity, order1_rate, order1_step, LimitParams, LimitState, Order1State,
    TimeDerivative,
};
use crate::ops::directional_gradient;
use crate::quadrature::AngularQuadrature;
use crate::real::Real;
use crate::velocity::VelocityField;

/// Interior fields at one slow time.
#[derive(Debug, Clone, PartialEq)]
pub struct InteriorSample<T> {
    pub t: T,
    pub theta0: ScalarField<T>,
    pub theta1: ScalarField<T>,
}

/// Everything the composite approximation needs.
#[derive(Debug, Clone)]
pub struct ExpansionBundle<'a, T> {
    pub grid: &'a PeriodicGrid<T>,
    pub quad: &'a AngularQuadrature<T>,
    pub velocity: VelocityField,
    pub layers: LayerSet<T>,
    /// Interior samples at the requested times, in increasing order.
    pub interior: Vec<InteriorSample<T>>,
}

/// Composite truncation order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompositeOrder {
    Zero,
    One,
}

impl CompositeOrder {
    pub fn index(self) -> usize {
        match self {
            CompositeOrder::Zero => 0,
            CompositeOrder::One => 1,
        }
    }
}

/// Controls for [`ExpansionBundle::build`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpansionOptions<T> {
    pub limit_dt: T,
    pub limit: LimitParams<T>,
    pub layers: LayerOptions<T>,
}

impl<T: Real> Default for ExpansionOptions<T> {
    fn default() -> Self {
        Self {
            limit_dt: T::lit(1e-3),
            limit: LimitParams::default(),
            layers: LayerOptions::default(),
        }
    }
}

impl<'a, T: Real> ExpansionBundle<'a, T> {
    /// Compatible data, both layers, and the interior solution marched to
    /// every time in `times` (which must be nonnegative).
    pub fn build(
        grid: &'a PeriodicGrid<T>,
        quad: &'a AngularQuadrature<T>,
        velocity: VelocityField,
        h: &DirectionalField<T>,
        theta_init: &ScalarField<T>,
        times: &[T],
        opts: &ExpansionOptions<T>,
    ) -> Result<Self> {
        if !(opts.limit_dt > T::zero()) {
            return Err(Error::InvalidParameter("limit_dt must be positive".into()));
        }
        let layers = build_layers(grid, quad, h, theta_init, &opts.layers)?;
        let mut targets: Vec<T> = times.to_vec();
        if targets.iter().any(|&t| !(t >= T::zero())) {
            return Err(Error::InvalidParameter("expansion times must be nonnegative".into()));
        }
        targets.sort_by(|a, b| a.partial_cmp(b).expect("finite times"));
        targets.dedup();

        let mut s0 = LimitState {
            theta0: layers.data.theta00.clone(),
            t: T::zero(),
        };
        let mut s1 = Order1State {
            theta1: layers.data.theta10.clone(),
            t: T::zero(),
        };
        let mut interior = Vec::with_capacity(targets.len());
        let dt = opts.limit_dt;
        for &target in &targets {
            while target - s0.t > T::lit(1e-14) * target.max(T::one()) {
                let mut h = (target - s0.t).min(dt);
                if target - s0.t - h < T::lit(1e-9) * dt {
                    h = target - s0.t;
                }
                let next0 = limit_step(grid, &s0, h, &velocity, &opts.limit)?;
                s1 = order1_step(grid, &s0.theta0, &next0.theta0, &s1, h, &velocity, None, &opts.limit)?;
                s0 = next0;
            }
            s0.t = target;
            s1.t = target;
            interior.push(InteriorSample {
                t: target,
                theta0: s0.theta0.clone(),
                theta1: s1.theta1.clone(),
            });
        }
        Ok(Self {
            grid,
            quad,
            velocity,
            layers,
            interior,
        })
    }

    pub fn times(&self) -> Vec<T> {
        self.interior.iter().map(|s| s.t).collect()
    }

    pub fn interior_at(&self, t: T) -> Result<&InteriorSample<T>> {
        let tol = T::lit(1e-12) * t.abs().max(T::one());
        self.interior
            .iter()
            .find(|s| (s.t - t).abs() <= tol)
            .ok_or_else(|| Error::OutOfRange {
                t: t.to_f64_lossy(),
                start: self.interior.first().map_or(f64::NAN, |s| s.t.to_f64_lossy()),
                end: self.interior.last().map_or(f64::NAN, |s| s.t.to_f64_lossy()),
            })
    }

    fn check_epsilon(epsilon: T) -> Result<()> {
        if !(epsilon > T::zero() && epsilon < T::one()) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must lie in (0, 1), got {epsilon}"
            )));
        }
        Ok(())
    }

    /// Composite `(f, theta)` at slow time `t` (one of the build times).
    pub fn composite(&self, order: CompositeOrder, epsilon: T, t: T) -> Result<(DirectionalField<T>, ScalarField<T>)> {
        Self::check_epsilon(epsilon)?;
        let s = self.interior_at(t)?;
        let tau = t / (epsilon * epsilon);
        let l0 = self.layers.zeroth.sample(self.quad, tau)?;
        let nd = self.quad.len();
        let f0 = DirectionalField::isotropic(nd, &s.theta0.map(|v| v.powi(4)));
        let mut f = f0.axpy(T::one(), &l0.f);
        let mut theta = s.theta0.axpy(T::one(), &l0.theta);
        if order == CompositeOrder::One {
            let l1 = self.layers.first.sample(self.quad, tau)?;
            let f1 = order1_intensity(self.grid, self.quad, &s.theta0, &s.theta1);
            f = f.axpy(epsilon, &f1.axpy(T::one(), &l1.f));
            theta = theta.axpy(epsilon, &s.theta1.axpy(T::one(), &l1.theta));
        }
        Ok((f, theta))
    }

    /// Time derivative of the composite at `t`, from the semi-discrete
    /// interior equations and the layer derivatives (scaled by `1/eps^2`).
    pub fn composite_rate(&self, order: CompositeOrder, epsilon: T, t: T) -> Result<TimeDerivative<T>> {
        Self::check_epsilon(epsilon)?;
        let s = self.interior_at(t)?;
        let e2 = epsilon * epsilon;
        let tau = t / e2;
        let inv = T::one() / e2;
        let four = T::lit(4.0);
        let r0 = limit_rate(self.grid, &self.velocity, &s.theta0);
        let l0 = self.layers.zeroth.sample(self.quad, tau)?;
        let nd = self.quad.len();
        let df0 = s.theta0.zip_map(&r0, |v, r| four * v.powi(3) * r);
        let mut df = DirectionalField::isotropic(nd, &df0).axpy(inv, &l0.f_rate);
        let mut dtheta = r0.axpy(inv, &l0.theta_rate);
        if order == CompositeOrder::One {
            let r1 = order1_rate(self.grid, &self.velocity, &s.theta0, &r0, &s.theta1);
            let l1 = self.layers.first.sample(self.quad, tau)?;
            // d/dt f1 = 12 theta0^2 theta0' theta1 + 4 theta0^3 theta1' - w.grad(4 theta0^3 theta0')
            let iso: Vec<T> = (0..s.theta0.len())
                .map(|i| {
                    let v = s.theta0[i];
                    T::lit(12.0) * v * v * r0[i] * s.theta1[i] + four * v.powi(3) * r1[i]
                })
                .collect();
            let df1 = directional_gradient(self.grid, self.quad, &df0)
                .map(|v| -v)
                .add_isotropic(&ScalarField::from_vec(iso));
            df = df.axpy(epsilon, &df1.axpy(inv, &l1.f_rate));
            dtheta = dtheta.axpy(epsilon, &r1.axpy(inv, &l1.theta_rate));
        }
        Ok(TimeDerivative { df, dtheta })
    }
}
