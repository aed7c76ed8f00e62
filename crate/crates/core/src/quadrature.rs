//! Discrete ordinates on the unit sphere.
//!
//! Product rule: Gauss-Legendre nodes in the cosine of the polar angle times
//! a uniform midpoint rule in azimuth. The polar axis is the first coordinate
//! axis, so slab problems along `x1` see the Gauss-Legendre nodes directly as
//! `w . e1`. Weights are normalized to sum to one, so the angular average of a
//! field is a plain weighted sum.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{DirectionalField, ScalarField};
use crate::real::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct AngularQuadrature<T> {
    dirs: Vec<[T; 3]>,
    weights: Vec<T>,
}

/// Residuals of the four moment identities a quadrature must satisfy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentResiduals {
    pub max_unit_norm: f64,
    pub weight_sum: f64,
    pub first_moment: f64,
    pub second_moment: f64,
}

impl<T: Real> AngularQuadrature<T> {
    /// Product rule with `n_polar` Gauss-Legendre nodes and `n_azimuth`
    /// uniformly spaced azimuths.
    pub fn product(n_polar: usize, n_azimuth: usize) -> Result<Self> {
        if n_polar < 2 {
            return Err(Error::InvalidParameter(format!(
                "n_polar must be at least 2 (got {n_polar})"
            )));
        }
        if n_azimuth < 4 || !n_azimuth.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!(
                "n_azimuth must be even and at least 4 (got {n_azimuth})"
            )));
        }
        let (mu, gl_w) = gauss_legendre::<T>(n_polar);
        let two_pi = T::lit(2.0) * T::PI();
        let mut dirs = Vec::with_capacity(n_polar * n_azimuth);
        let mut weights = Vec::with_capacity(n_polar * n_azimuth);
        for (&m, &wm) in mu.iter().zip(&gl_w) {
            let s = (T::one() - m * m).max(T::zero()).sqrt();
            for k in 0..n_azimuth {
                let phi = two_pi * (T::of_usize(k) + T::lit(0.5)) / T::of_usize(n_azimuth);
                dirs.push([m, s * phi.cos(), s * phi.sin()]);
                weights.push(wm);
            }
        }
        let total = weights.iter().fold(T::zero(), |a, &w| a + w);
        for w in &mut weights {
            *w = *w / total;
        }
        Ok(Self { dirs, weights })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.dirs.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.dirs.is_empty()
    }

    #[inline]
    pub fn dirs(&self) -> &[[T; 3]] {
        &self.dirs
    }

    #[inline]
    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    #[inline]
    pub fn dir(&self, m: usize) -> [T; 3] {
        self.dirs[m]
    }

    /// Weighted sum of per-direction values.
    pub fn average_of(&self, values: impl Fn(usize, [T; 3]) -> T) -> T {
        let mut acc = T::zero();
        for (m, (&w, &d)) in self.weights.iter().zip(&self.dirs).enumerate() {
            acc = acc + w * values(m, d);
        }
        acc
    }

    /// Second moment matrix `sum_m w_m w_m (x) w_m`.
    pub fn second_moment(&self) -> [[T; 3]; 3] {
        let mut m2 = [[T::zero(); 3]; 3];
        for (&w, d) in self.weights.iter().zip(&self.dirs) {
            for i in 0..3 {
                for j in 0..3 {
                    m2[i][j] = m2[i][j] + w * d[i] * d[j];
                }
            }
        }
        m2
    }

    pub fn moment_residuals(&self) -> MomentResiduals {
        let max_unit_norm = self
            .dirs
            .iter()
            .map(|d| ((d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt() - T::one()).abs())
            .fold(T::zero(), |a, b| a.max(b))
            .to_f64_lossy();
        let weight_sum = (self.weights.iter().fold(T::zero(), |a, &w| a + w) - T::one())
            .abs()
            .to_f64_lossy();
        let mut first = [T::zero(); 3];
        for (&w, d) in self.weights.iter().zip(&self.dirs) {
            for i in 0..3 {
                first[i] = first[i] + w * d[i];
            }
        }
        let first_moment = (first[0] * first[0] + first[1] * first[1] + first[2] * first[2])
            .sqrt()
            .to_f64_lossy();
        let m2 = self.second_moment();
        let third = T::one() / T::lit(3.0);
        let mut second_moment = 0.0f64;
        for (i, row) in m2.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                let target = if i == j { third } else { T::zero() };
                second_moment = second_moment.max((v - target).abs().to_f64_lossy());
            }
        }
        MomentResiduals {
            max_unit_norm,
            weight_sum,
            first_moment,
            second_moment,
        }
    }

    /// Pointwise angular average `sum_m w_m f(x, w_m)`.
    ///
    /// The sum runs over directions in index order for every node, so the
    /// result does not depend on the thread count.
    pub fn angular_average(&self, f: &DirectionalField<T>) -> ScalarField<T> {
        assert_eq!(f.n_dirs(), self.len(), "field/quadrature direction mismatch");
        let n = f.n_cells();
        let mut out = vec![T::zero(); n];
        const BLOCK: usize = 256;
        out.par_chunks_mut(BLOCK).enumerate().for_each(|(b, chunk)| {
            let start = b * BLOCK;
            for (m, &w) in self.weights.iter().enumerate() {
                let src = &f.dir(m)[start..start + chunk.len()];
                for (o, &v) in chunk.iter_mut().zip(src) {
                    *o = *o + w * v;
                }
            }
        });
        ScalarField::from_vec(out)
    }

    pub fn cast<U: Real>(&self) -> AngularQuadrature<U> {
        AngularQuadrature {
            dirs: self.dirs.iter().map(|d| d.map(|v| U::lit(v.to_f64_lossy()))).collect(),
            weights: self.weights.iter().map(|&w| U::lit(w.to_f64_lossy())).collect(),
        }
    }
}

/// Gauss-Legendre nodes (ascending) and weights on `[-1, 1]`.
pub fn gauss_legendre<T: Real>(n: usize) -> (Vec<T>, Vec<T>) {
    let mut nodes = vec![T::zero(); n];
    let mut weights = vec![T::zero(); n];
    let nf = T::of_usize(n);
    let eps = T::epsilon() * T::lit(4.0);
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess for the i-th largest root.
        let mut x = (T::PI() * (T::of_usize(i) + T::lit(0.75)) / (nf + T::lit(0.5))).cos();
        let mut dp = T::one();
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x = x - dx;
            if dx.abs() <= eps {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d.is_finite() {
            dp = d;
        }
        let w = T::lit(2.0) / ((T::one() - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = T::zero();
    }
    (nodes, weights)
}

fn legendre_with_derivative<T: Real>(n: usize, x: T) -> (T, T) {
    let mut p0 = T::one();
    let mut p1 = x;
    for k in 2..=n {
        let kf = T::of_usize(k);
        let p2 = ((T::lit(2.0) * kf - T::one()) * x * p1 - (kf - T::one()) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = T::of_usize(n) * (x * p1 - p0) / (x * x - T::one());
    (p1, d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        for n in 2..12 {
            let (x, w) = gauss_legendre::<f64>(n);
            for deg in 0..(2 * n) {
                let num: f64 = x.iter().zip(&w).map(|(&x, &w)| w * x.powi(deg as i32)).sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((num - exact).abs() < 1e-13, "n={n} deg={deg}: {num} vs {exact}");
            }
        }
    }

    #[test]
    fn rejects_small_orders() {
        assert!(AngularQuadrature::<f64>::product(1, 8).is_err());
        assert!(AngularQuadrature::<f64>::product(4, 2).is_err());
        assert!(AngularQuadrature::<f64>::product(4, 6).is_ok());
        assert!(AngularQuadrature::<f64>::product(4, 7).is_err());
    }

    #[test]
    fn moment_identities_hold() {
        for &(np, na) in &[(2, 4), (4, 8), (8, 16), (12, 24)] {
            let q = AngularQuadrature::<f64>::product(np, na).unwrap();
            let r = q.moment_residuals();
            assert!(r.max_unit_norm <= 1e-14, "{r:?}");
            assert!(r.weight_sum <= 1e-14, "{r:?}");
            assert!(r.first_moment <= 1e-13, "{r:?}");
            assert!(r.second_moment <= 1e-10, "{r:?}");
        }
    }

    #[test]
    fn averages_of_simple_functions() {
        let q = AngularQuadrature::<f64>::product(8, 16).unwrap();
        assert!((q.average_of(|_, _| 2.5) - 2.5).abs() < 1e-14);
        let a = [0.3, -1.2, 0.7];
        let lin = q.average_of(|_, w| w[0] * a[0] + w[1] * a[1] + w[2] * a[2]);
        assert!(lin.abs() < 1e-13);
        let sq = q.average_of(|_, w| w[0] * w[0]);
        assert!((sq - 1.0 / 3.0).abs() < 1e-10);
    }

    #[test]
    fn f32_quadrature_is_usable() {
        let q = AngularQuadrature::<f32>::product(4, 8).unwrap();
        let r = q.moment_residuals();
        assert!(r.weight_sum < 1e-6 && r.second_moment < 1e-6, "{r:?}");
    }
}
