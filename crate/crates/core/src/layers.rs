//! Compatible initial data and the initial layers on the fast time
//! `tau = t / eps^2`.
//!
//! Zeroth order, with `c = theta00(x)` and `S0 = (c + thetaI0)^4 - c^4`:
//!
//! ```text
//! d/dtau thetaI0 = <fI0> - S0,     d/dtau fI0 + fI0 = S0
//! ```
//!
//! First order, with `c1 = theta10(x)`, `S1 = 4 (c + thetaI0)^3 (c1 + thetaI1) - 4 c^3 c1`:
//!
//! ```text
//! d/dtau thetaI1 = <fI1> - S1,     d/dtau fI1 + fI1 = S1 - w.grad fI0
//! ```
//!
//! Intensities are kept in the closed form
//! `fI(tau, x, w) = iso(tau, x) + w . dip(tau, x) + sum_j phi_j(tau) g_j(x, w)`:
//! the angular mean and the dipole follow ODEs that are integrated with RK4
//! and stored per sample, while the remaining anisotropic modes have exact
//! profiles `exp(-tau)` and `tau exp(-tau)`.

use crate::error::{Error, Result};
use crate::field::{DirectionalField, ScalarField};
use crate::grid::PeriodicGrid;
use crate::norms::norm_linf;
use crate::ops::{directional_derivative, directional_gradient, partial};
use crate::quadrature::AngularQuadrature;
use crate::real::Real;

/// Truncation level for stored layer trajectories.
const NEGLIGIBLE: f64 = 1e-12;

/// Positive root of `theta^4 + theta = l0` by safeguarded Newton.
pub fn g_inverse<T: Real>(l0: T) -> Result<T> {
    if !(l0 > T::zero()) || !l0.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "compatibility level must be positive, got {l0}"
        )));
    }
    // theta <= l0 and theta <= l0^(1/4) bracket the root from above.
    let (mut lo, mut hi) = (T::zero(), l0.min(l0.powf(T::lit(0.25))));
    let g = |th: T| th.powi(4) + th - l0;
    let mut th = hi;
    for _ in 0..200 {
        let r = g(th);
        if r == T::zero() {
            return Ok(th);
        }
        if r > T::zero() {
            hi = th;
        } else {
            lo = th;
        }
        let mut next = th - r / (T::lit(4.0) * th.powi(3) + T::one());
        if !(next > lo && next < hi) {
            next = T::lit(0.5) * (lo + hi);
        }
        if (next - th).abs() <= T::epsilon() * th {
            return Ok(next);
        }
        th = next;
    }
    Ok(th)
}

/// Data the limit problem starts from.
#[derive(Debug, Clone, PartialEq)]
pub struct CompatibleData<T> {
    pub theta00: ScalarField<T>,
    pub l0: ScalarField<T>,
    pub theta10: ScalarField<T>,
    pub f10: DirectionalField<T>,
    pub l1: ScalarField<T>,
}

/// `l0 = <h> + theta_init` and `theta00 = G^{-1}(l0)`. Returns `(theta00, l0)`.
pub fn compatible_theta00<T: Real>(
    quad: &AngularQuadrature<T>,
    h: &DirectionalField<T>,
    theta_init: &ScalarField<T>,
) -> Result<(ScalarField<T>, ScalarField<T>)> {
    theta_init.check_len(h.n_cells(), "initial temperature")?;
    let l0 = quad.angular_average(h).zip_map(theta_init, |a, b| a + b);
    let theta00 = l0.iter().map(|&l| g_inverse(l)).collect::<Result<Vec<_>>>()?;
    Ok((ScalarField::from_vec(theta00), l0))
}

/// Integration controls for the layer ODEs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerOptions<T> {
    pub tau_max: T,
    pub dtau: T,
    /// Store every `stride`-th RK4 step.
    pub stride: usize,
}

impl<T: Real> Default for LayerOptions<T> {
    fn default() -> Self {
        Self {
            tau_max: T::lit(40.0),
            dtau: T::lit(1e-2),
            stride: 1,
        }
    }
}

impl<T: Real> LayerOptions<T> {
    fn validate(&self) -> Result<()> {
        if !(self.dtau > T::zero()) || !(self.tau_max > self.dtau) || self.stride == 0 {
            return Err(Error::InvalidParameter(
                "layer options need 0 < dtau < tau_max and stride >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Time profile of an exact anisotropic mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    /// `exp(-tau)`
    Exp,
    /// `tau exp(-tau)`
    TauExp,
}

impl Profile {
    fn value<T: Real>(self, tau: T) -> T {
        match self {
            Profile::Exp => (-tau).exp(),
            Profile::TauExp => tau * (-tau).exp(),
        }
    }

    fn rate<T: Real>(self, tau: T) -> T {
        match self {
            Profile::Exp => -(-tau).exp(),
            Profile::TauExp => (T::one() - tau) * (-tau).exp(),
        }
    }
}

/// Sampled scalar channel with stored `d/dtau` for cubic Hermite evaluation.
#[derive(Debug, Clone, PartialEq)]
struct Channel<T> {
    values: Vec<Vec<T>>,
    rates: Vec<Vec<T>>,
}

impl<T: Real> Channel<T> {
    fn new() -> Self {
        Self {
            values: Vec::new(),
            rates: Vec::new(),
        }
    }

    fn push(&mut self, v: &[T], r: &[T]) {
        self.values.push(v.to_vec());
        self.rates.push(r.to_vec());
    }
}

/// Hermite basis at `s in [0, 1]`: `(h00, h10, h01, h11)` and derivatives.
fn hermite<T: Real>(s: T) -> ([T; 4], [T; 4]) {
    let (two, three, four, six) = (T::lit(2.0), T::lit(3.0), T::lit(4.0), T::lit(6.0));
    let s2 = s * s;
    let s3 = s2 * s;
    (
        [
            two * s3 - three * s2 + T::one(),
            s3 - two * s2 + s,
            three * s2 - two * s3,
            s3 - s2,
        ],
        [
            six * s2 - six * s,
            three * s2 - four * s + T::one(),
            six * s - six * s2,
            three * s2 - two * s,
        ],
    )
}

/// Stored layer trajectory of order 0 or 1.
#[derive(Debug, Clone)]
pub struct LayerTrajectory<T> {
    pub order: usize,
    /// Stored fast times, uniformly spaced from 0.
    pub taus: Vec<T>,
    /// `(||thetaI||_inf, ||fI||_inf)` at every stored time.
    pub norms: Vec<(T, T)>,
    /// Fitted exponential decay rate of `||thetaI||_inf`; `None` for a layer
    /// that vanishes identically.
    pub sigma_fit: Option<T>,
    /// Whether the trajectory ended because all fields fell below `1e-12`.
    pub decayed: bool,
    spacing: T,
    theta: Channel<T>,
    iso: Channel<T>,
    dip: [Option<Channel<T>>; 3],
    modes: Vec<(Profile, DirectionalField<T>)>,
}

/// Values of a layer at one fast time.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerSample<T> {
    pub theta: ScalarField<T>,
    pub theta_rate: ScalarField<T>,
    pub f: DirectionalField<T>,
    pub f_rate: DirectionalField<T>,
}

impl<T: Real> LayerTrajectory<T> {
    pub fn tau_end(&self) -> T {
        *self.taus.last().expect("nonempty trajectory")
    }

    pub fn n_cells(&self) -> usize {
        self.theta.values[0].len()
    }

    fn channel_at(&self, ch: &Channel<T>, tau: T) -> (Vec<T>, Vec<T>) {
        let last = self.taus.len() - 1;
        if tau >= self.taus[last] {
            let sigma = self.sigma_fit.unwrap_or(T::one());
            let decay = (-(sigma * (tau - self.taus[last]))).exp();
            let v: Vec<T> = ch.values[last].iter().map(|&x| x * decay).collect();
            let r: Vec<T> = v.iter().map(|&x| -sigma * x).collect();
            return (v, r);
        }
        let pos = tau / self.spacing;
        let k = pos.floor().to_usize().unwrap_or(0).min(last - 1);
        let s = pos - T::of_usize(k);
        let (b, db) = hermite(s);
        let d = self.spacing;
        let (y0, y1) = (&ch.values[k], &ch.values[k + 1]);
        let (r0, r1) = (&ch.rates[k], &ch.rates[k + 1]);
        let n = y0.len();
        let mut v = Vec::with_capacity(n);
        let mut r = Vec::with_capacity(n);
        for i in 0..n {
            v.push(b[0] * y0[i] + b[1] * d * r0[i] + b[2] * y1[i] + b[3] * d * r1[i]);
            r.push((db[0] * y0[i] + db[2] * y1[i]) / d + db[1] * r0[i] + db[3] * r1[i]);
        }
        (v, r)
    }

    /// `thetaI` at fast time `tau >= 0`.
    pub fn theta_at(&self, tau: T) -> Result<ScalarField<T>> {
        self.check_tau(tau)?;
        Ok(ScalarField::from_vec(self.channel_at(&self.theta, tau).0))
    }

    /// Angular mean of `fI` at `tau`.
    pub fn mean_at(&self, tau: T) -> Result<ScalarField<T>> {
        self.check_tau(tau)?;
        Ok(ScalarField::from_vec(self.channel_at(&self.iso, tau).0))
    }

    fn check_tau(&self, tau: T) -> Result<()> {
        if !(tau >= T::zero()) || !tau.is_finite() {
            return Err(Error::OutOfRange {
                t: tau.to_f64_lossy(),
                start: 0.0,
                end: f64::INFINITY,
            });
        }
        Ok(())
    }

    /// Full layer state and its `tau` derivative at fast time `tau`.
    pub fn sample(&self, quad: &AngularQuadrature<T>, tau: T) -> Result<LayerSample<T>> {
        self.check_tau(tau)?;
        let n = self.n_cells();
        let (th, th_r) = self.channel_at(&self.theta, tau);
        let (iso, iso_r) = self.channel_at(&self.iso, tau);
        let dips: Vec<(usize, Vec<T>, Vec<T>)> = self
            .dip
            .iter()
            .enumerate()
            .filter_map(|(a, ch)| {
                ch.as_ref().map(|c| {
                    let (v, r) = self.channel_at(c, tau);
                    (a, v, r)
                })
            })
            .collect();
        let build = |base: &[T], dip: Vec<(usize, &Vec<T>)>, rate: bool| {
            DirectionalField::from_dirs(quad.len(), n, |m, out| {
                let w = quad.dir(m);
                out.copy_from_slice(base);
                for (a, vals) in &dip {
                    for (o, &v) in out.iter_mut().zip(vals.iter()) {
                        *o = *o + w[*a] * v;
                    }
                }
                for (profile, g) in &self.modes {
                    let p = if rate { profile.rate(tau) } else { profile.value(tau) };
                    for (o, &v) in out.iter_mut().zip(g.dir(m)) {
                        *o = *o + p * v;
                    }
                }
            })
        };
        let f = build(&iso, dips.iter().map(|d| (d.0, &d.1)).collect(), false);
        let f_rate = build(&iso_r, dips.iter().map(|d| (d.0, &d.2)).collect(), true);
        Ok(LayerSample {
            theta: ScalarField::from_vec(th),
            theta_rate: ScalarField::from_vec(th_r),
            f,
            f_rate,
        })
    }
}

/// Classical RK4 step for `y' = rhs(tau, y)`.
fn rk4_step<T: Real>(rhs: &impl Fn(T, &[T]) -> Vec<T>, tau: T, y: &[T], dt: T) -> Vec<T> {
    let half = T::lit(0.5);
    let k1 = rhs(tau, y);
    let y2: Vec<T> = y.iter().zip(&k1).map(|(&a, &k)| a + half * dt * k).collect();
    let k2 = rhs(tau + half * dt, &y2);
    let y3: Vec<T> = y.iter().zip(&k2).map(|(&a, &k)| a + half * dt * k).collect();
    let k3 = rhs(tau + half * dt, &y3);
    let y4: Vec<T> = y.iter().zip(&k3).map(|(&a, &k)| a + dt * k).collect();
    let k4 = rhs(tau + dt, &y4);
    let sixth = dt / T::lit(6.0);
    (0..y.len())
        .map(|i| y[i] + sixth * (k1[i] + T::lit(2.0) * (k2[i] + k3[i]) + k4[i]))
        .collect()
}

/// Least-squares slope of `log ||thetaI||` against `tau`, restricted to
/// samples clearly above round-off.
fn fit_decay<T: Real>(taus: &[T], norms: &[(T, T)]) -> Option<T> {
    let peak = norms.iter().fold(T::zero(), |a, n| a.max(n.0));
    if !(peak > T::zero()) {
        return None;
    }
    let floor = (peak * T::lit(1e-9)).max(T::lit(1e-14));
    let pts: Vec<(T, T)> = taus
        .iter()
        .zip(norms)
        .filter(|(_, n)| n.0 > floor)
        .map(|(&t, n)| (t, n.0.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let k = T::of_usize(pts.len());
    let mx = pts.iter().map(|p| p.0).sum::<T>() / k;
    let my = pts.iter().map(|p| p.1).sum::<T>() / k;
    let sxy = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<T>();
    let sxx = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum::<T>();
    if !(sxx > T::zero()) {
        return None;
    }
    Some(-sxy / sxx)
}

/// Shared RK4 driver. The state vector is a concatenation of `n`-blocks;
/// `theta_block`/`iso_block` name the stored scalar channels and
/// `dip_blocks` the dipole components (one per active axis).
struct Integration<'a, T> {
    n: usize,
    theta_block: usize,
    iso_block: usize,
    dip_blocks: [Option<usize>; 3],
    modes: Vec<(Profile, DirectionalField<T>)>,
    quad: &'a AngularQuadrature<T>,
}

impl<T: Real> Integration<'_, T> {
    fn block<'b>(&self, y: &'b [T], b: usize) -> &'b [T] {
        &y[b * self.n..(b + 1) * self.n]
    }

    fn f_norm(&self, y: &[T], tau: T) -> T {
        let iso = self.block(y, self.iso_block);
        let mut best = T::zero();
        for m in 0..self.quad.len() {
            let w = self.quad.dir(m);
            for cell in 0..self.n {
                let mut v = iso[cell];
                for (a, b) in self.dip_blocks.iter().enumerate() {
                    if let Some(b) = b {
                        v = v + w[a] * y[b * self.n + cell];
                    }
                }
                for (p, g) in &self.modes {
                    v = v + p.value(tau) * g.dir(m)[cell];
                }
                best = best.max(v.abs());
            }
        }
        best
    }

    fn run(
        self,
        order: usize,
        y0: Vec<T>,
        rhs: impl Fn(T, &[T]) -> Vec<T>,
        opts: &LayerOptions<T>,
    ) -> Result<LayerTrajectory<T>> {
        opts.validate()?;
        let mut theta = Channel::new();
        let mut iso = Channel::new();
        let mut dip: [Option<Channel<T>>; 3] = std::array::from_fn(|a| self.dip_blocks[a].map(|_| Channel::new()));
        let mut taus = Vec::new();
        let mut norms = Vec::new();
        let spacing = opts.dtau * T::of_usize(opts.stride);
        let negligible = T::lit(NEGLIGIBLE);

        let mut y = y0;
        let mut step = 0usize;
        let initial_theta = norm_linf(self.block(&y, self.theta_block));
        let blow_up = (initial_theta * T::lit(2.0)).max(T::lit(1e-6));
        let mut decayed = false;
        loop {
            let tau = T::of_usize(step) * opts.dtau;
            if step.is_multiple_of(opts.stride) {
                let r = rhs(tau, &y);
                theta.push(self.block(&y, self.theta_block), self.block(&r, self.theta_block));
                iso.push(self.block(&y, self.iso_block), self.block(&r, self.iso_block));
                for (a, ch) in dip.iter_mut().enumerate() {
                    if let (Some(ch), Some(b)) = (ch.as_mut(), self.dip_blocks[a]) {
                        ch.push(self.block(&y, b), self.block(&r, b));
                    }
                }
                let nt = norm_linf(self.block(&y, self.theta_block));
                let nf = self.f_norm(&y, tau);
                if !nt.is_finite() || !nf.is_finite() || nt > blow_up {
                    return Err(Error::LayerBlowUp(format!(
                        "order-{order} layer norm {} at tau = {tau} (smallness violated)",
                        nt.to_f64_lossy()
                    )));
                }
                taus.push(tau);
                norms.push((nt, nf));
                if taus.len() >= 2 && nt <= negligible && nf <= negligible {
                    decayed = true;
                    break;
                }
                if tau + spacing > opts.tau_max * (T::one() + T::lit(1e-12)) {
                    break;
                }
            }
            y = rk4_step(&rhs, tau, &y, opts.dtau);
            step += 1;
        }
        let sigma_fit = fit_decay(&taus, &norms);
        Ok(LayerTrajectory {
            order,
            taus,
            norms,
            sigma_fit,
            decayed,
            spacing,
            theta,
            iso,
            dip,
            modes: self.modes,
        })
    }
}

/// Zeroth-order layer from `thetaI0(0) = theta_init - theta00` and
/// `fI0(0) = h - theta00^4`.
///
/// The pair `(thetaI0, <fI0>)` is advanced by RK4, which keeps the linear
/// invariant `<fI0> + thetaI0` (zero up to the root-solve residual) exactly;
/// the deviation `h - <h>` decays as `exp(-tau)` in closed form.
pub fn zeroth_layer<T: Real>(
    quad: &AngularQuadrature<T>,
    h: &DirectionalField<T>,
    theta_init: &ScalarField<T>,
    theta00: &ScalarField<T>,
    opts: &LayerOptions<T>,
) -> Result<LayerTrajectory<T>> {
    let n = theta00.len();
    theta_init.check_len(n, "initial temperature")?;
    let hbar = quad.angular_average(h);
    let mut y = Vec::with_capacity(2 * n);
    y.extend(theta_init.iter().zip(theta00.iter()).map(|(&a, &c)| a - c));
    y.extend(hbar.iter().zip(theta00.iter()).map(|(&a, &c)| a - c.powi(4)));
    let dev = h.add_isotropic(&hbar.scaled(-T::one()));
    let c4: Vec<T> = theta00.iter().map(|&c| c.powi(4)).collect();
    let c = theta00.clone();
    let rhs = move |_tau: T, y: &[T]| -> Vec<T> {
        let mut out = vec![T::zero(); 2 * n];
        for i in 0..n {
            let s0 = (c[i] + y[i]).powi(4) - c4[i];
            out[i] = y[n + i] - s0;
            out[n + i] = s0 - y[n + i];
        }
        out
    };
    Integration {
        n,
        theta_block: 0,
        iso_block: 1,
        dip_blocks: [None; 3],
        modes: vec![(Profile::Exp, dev)],
        quad,
    }
    .run(0, y, rhs, opts)
}

/// `m(x) = <w.grad (h - <h>)>`, so that `<w.grad fI0> = exp(-tau) m`.
fn anisotropic_flux<T: Real>(
    grid: &PeriodicGrid<T>,
    quad: &AngularQuadrature<T>,
    h: &DirectionalField<T>,
) -> (DirectionalField<T>, ScalarField<T>) {
    let hbar = quad.angular_average(h);
    let dev = h.add_isotropic(&hbar.scaled(-T::one()));
    let wg = directional_derivative(grid, quad, &dev);
    let m = quad.angular_average(&wg);
    (wg, m)
}

/// Order-one part of initial data `(h + eps h1, theta_init + eps theta1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FirstOrderData<T> {
    pub h1: DirectionalField<T>,
    pub theta1: ScalarField<T>,
}

impl<T: Real> FirstOrderData<T> {
    /// The correction `h1 = -w.grad (theta_init^4)`, `theta1 = 0`, which
    /// matches the interior intensity at order one when `h = theta_init^4`.
    /// With it both layers vanish.
    pub fn well_prepared(grid: &PeriodicGrid<T>, quad: &AngularQuadrature<T>, theta_init: &ScalarField<T>) -> Self {
        let c4 = theta_init.map(|c| c.powi(4));
        Self {
            h1: directional_gradient(grid, quad, &c4).map(|v| -v),
            theta1: ScalarField::zeros(grid.n_cells()),
        }
    }
}

/// First-order compatible data and first-order layer.
///
/// `l1 = -int_0^inf <w.grad fI0> dtau`; the mean of `fI0` drops out by the
/// odd-moment identity and the deviation has profile `exp(-tau)`, so
/// `l1 = -<w.grad (h - <h>)>` exactly. Then
/// `theta10 = (l1 + <h1> + theta1) / (1 + 4 theta00^3)` (`h1`, `theta1` zero
/// without a correction) and `f10 = 4 theta00^3 theta10 - w.grad(theta00^4)`.
///
/// The layer is integrated as one RK4 system together with the zeroth
/// layer it is driven by, including the mean forcing `-exp(-tau) m` in the
/// equation for `<fI1>`, so the first layer and its zeroth-order coefficients
/// share the same step.
#[allow(clippy::too_many_arguments)]
pub fn first_layer<T: Real>(
    grid: &PeriodicGrid<T>,
    quad: &AngularQuadrature<T>,
    h: &DirectionalField<T>,
    theta_init: &ScalarField<T>,
    zeroth: &LayerTrajectory<T>,
    data: &mut CompatibleData<T>,
    correction: Option<&FirstOrderData<T>>,
    opts: &LayerOptions<T>,
) -> Result<LayerTrajectory<T>> {
    let n = grid.n_cells();
    let (h1_mean, h1_dev, theta1) = match correction {
        Some(c) => {
            if c.h1.n_dirs() != quad.len() || c.h1.n_cells() != n {
                return Err(Error::Shape(
                    "first-order intensity does not match grid and quadrature".into(),
                ));
            }
            c.theta1.check_len(n, "first-order temperature")?;
            let mean = quad.angular_average(&c.h1);
            let dev = c.h1.add_isotropic(&mean.scaled(-T::one()));
            (mean, Some(dev), c.theta1.clone())
        }
        None => (ScalarField::zeros(n), None, ScalarField::zeros(n)),
    };
    if zeroth.order != 0 || zeroth.n_cells() != n {
        return Err(Error::Shape(
            "first layer needs the zeroth layer on the same grid".into(),
        ));
    }
    let four = T::lit(4.0);
    let theta00 = data.theta00.clone();
    let (wg, m) = anisotropic_flux(grid, quad, h);
    let l1 = m.scaled(-T::one());
    let theta10 = ScalarField::from_vec(
        (0..n)
            .map(|i| (l1[i] + h1_mean[i] + theta1[i]) / (T::one() + four * theta00[i].powi(3)))
            .collect(),
    );
    let c4 = theta00.map(|c| c.powi(4));
    let grad_c4 = directional_gradient(grid, quad, &c4);
    let f10 = grad_c4
        .map(|v| -v)
        .add_isotropic(&theta10.zip_map(&theta00, |t1, c| four * c.powi(3) * t1));
    data.theta10 = theta10.clone();
    data.f10 = f10;
    data.l1 = l1;

    let active: Vec<usize> = grid.active_axes().collect();
    let mut dip_blocks = [None; 3];
    for (k, &a) in active.iter().enumerate() {
        dip_blocks[a] = Some(4 + k);
    }
    let blocks = 4 + active.len();

    // modes: exp(-tau) (h1 - <h1> + w.grad(theta00^4)) from the initial
    // value, and tau exp(-tau) (m - w.grad(h - <h>)) from the anisotropic
    // forcing.
    let free = match h1_dev {
        Some(dev) => grad_c4.axpy(T::one(), &dev),
        None => grad_c4,
    };
    let forced = wg.map(|v| -v).add_isotropic(&m);
    let modes = vec![(Profile::Exp, free), (Profile::TauExp, forced)];

    let hbar = quad.angular_average(h);
    let mut y = vec![T::zero(); blocks * n];
    for i in 0..n {
        let c = theta00[i];
        y[i] = theta_init[i] - c;
        y[n + i] = hbar[i] - c.powi(4);
        y[2 * n + i] = theta1[i] - theta10[i];
        y[3 * n + i] = h1_mean[i] - four * c.powi(3) * theta10[i];
    }
    let c = theta00.clone();
    let c1 = theta10.clone();
    let grid_c = grid.clone();
    let rhs = move |tau: T, y: &[T]| -> Vec<T> {
        let mut out = vec![T::zero(); blocks * n];
        let decay = (-tau).exp();
        for i in 0..n {
            let (t0, f0, t1, f1) = (y[i], y[n + i], y[2 * n + i], y[3 * n + i]);
            let base = c[i] + t0;
            let s0 = base.powi(4) - c[i].powi(4);
            let s1 = four * base.powi(3) * (c1[i] + t1) - four * c[i].powi(3) * c1[i];
            out[i] = f0 - s0;
            out[n + i] = s0 - f0;
            out[2 * n + i] = f1 - s1;
            out[3 * n + i] = s1 - f1 - decay * m[i];
        }
        for (k, &a) in active.iter().enumerate() {
            let g = partial(&grid_c, &y[..n], a);
            let b = 4 + k;
            for i in 0..n {
                out[b * n + i] = g[i] - y[b * n + i];
            }
        }
        out
    };
    let traj = Integration {
        n,
        theta_block: 2,
        iso_block: 3,
        dip_blocks,
        modes,
        quad,
    }
    .run(1, y, rhs, opts)?;
    if !traj.decayed {
        let last = traj.norms.last().map_or(T::zero(), |v| v.0.max(v.1));
        if last > T::lit(1e-8) {
            return Err(Error::LayerTail(format!(
                "first layer still at {} at tau_max = {}",
                last.to_f64_lossy(),
                traj.tau_end().to_f64_lossy()
            )));
        }
    }
    Ok(traj)
}

/// Picard iteration on the Duhamel form of the scalar zeroth-layer equation
///
/// ```text
/// thetaI(tau) = exp(-k tau) thetaI(0) + int_0^tau exp(-k (tau - s)) N(thetaI(s)) ds
/// k = 1 + 4 c^3,  N(x) = -6 c^2 x^2 - 4 c x^3 - x^4
/// ```
///
/// on the grid `j * dtau`, with the trapezoid rule. Returns every iterate.
pub fn zeroth_layer_picard<T: Real>(c: T, theta_i0: T, dtau: T, steps: usize, iters: usize) -> Vec<Vec<T>> {
    let k = T::one() + T::lit(4.0) * c.powi(3);
    let nl = |x: T| -(T::lit(6.0) * c * c * x * x + T::lit(4.0) * c * x.powi(3) + x.powi(4));
    let mut current: Vec<T> = (0..=steps)
        .map(|j| theta_i0 * (-(k * dtau * T::of_usize(j))).exp())
        .collect();
    let mut all = vec![current.clone()];
    let decay = (-(k * dtau)).exp();
    let half = dtau * T::lit(0.5);
    for _ in 0..iters {
        let mut next = Vec::with_capacity(steps + 1);
        next.push(theta_i0);
        let mut acc = T::zero();
        for j in 1..=steps {
            acc = acc * decay + half * (decay * nl(current[j - 1]) + nl(current[j]));
            next.push(theta_i0 * (-(k * dtau * T::of_usize(j))).exp() + acc);
        }
        current = next;
        all.push(current.clone());
    }
    all
}

/// Compatible data plus both layers for one initial state.
#[derive(Debug, Clone)]
pub struct LayerSet<T> {
    pub data: CompatibleData<T>,
    pub zeroth: LayerTrajectory<T>,
    pub first: LayerTrajectory<T>,
}

/// Builds compatible data and both layers.
pub fn build_layers<T: Real>(
    grid: &PeriodicGrid<T>,
    quad: &AngularQuadrature<T>,
    h: &DirectionalField<T>,
    theta_init: &ScalarField<T>,
    opts: &LayerOptions<T>,
) -> Result<LayerSet<T>> {
    build_layers_corrected(grid, quad, h, theta_init, None, opts)
}

/// [`build_layers`] for data with an order-one part.
pub fn build_layers_corrected<T: Real>(
    grid: &PeriodicGrid<T>,
    quad: &AngularQuadrature<T>,
    h: &DirectionalField<T>,
    theta_init: &ScalarField<T>,
    correction: Option<&FirstOrderData<T>>,
    opts: &LayerOptions<T>,
) -> Result<LayerSet<T>> {
    let (theta00, l0) = compatible_theta00(quad, h, theta_init)?;
    let zeroth = zeroth_layer(quad, h, theta_init, &theta00, opts)?;
    let n = grid.n_cells();
    let mut data = CompatibleData {
        theta00,
        l0,
        theta10: ScalarField::zeros(n),
        f10: DirectionalField::zeros(quad.len(), n),
        l1: ScalarField::zeros(n),
    };
    let first = first_layer(grid, quad, h, theta_init, &zeroth, &mut data, correction, opts)?;
    Ok(LayerSet { data, zeroth, first })
}
