//! Initial-data presets `theta0(x)` and `h(x, w) = theta0^4 + eta g(x, w)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{DirectionalField, ScalarField};
use crate::grid::PeriodicGrid;
use crate::quadrature::AngularQuadrature;
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ThetaPreset {
    /// `theta0 = a`
    Constant { a: f64 },
    /// `theta0 = a + b sin(2 pi x1 / L1)`
    Sine { a: f64, b: f64 },
}

impl ThetaPreset {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            ThetaPreset::Constant { a } => a > 0.0 && a.is_finite(),
            ThetaPreset::Sine { a, b } => a.is_finite() && b.is_finite() && a - b.abs() > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "initial temperature preset must stay positive: {self:?}"
            )))
        }
    }

    pub fn eval<T: Real>(&self, x: [T; 3], len: [T; 3]) -> T {
        match *self {
            ThetaPreset::Constant { a } => T::lit(a),
            ThetaPreset::Sine { a, b } => T::lit(a) + T::lit(b) * (T::lit(2.0) * T::PI() * x[0] / len[0]).sin(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Perturbation {
    /// `g = bump(x)`
    Isotropic,
    /// `g = (1 + w1) bump(x)`
    #[default]
    Directional,
}

/// Smooth nonnegative periodic bump, the product over non-slab axes of
/// `(1 - cos(2 pi x_i / L_i)) / 2`; equal to one on slab axes.
pub fn bump<T: Real>(grid: &PeriodicGrid<T>, x: [T; 3]) -> T {
    let len = grid.lengths();
    grid.active_axes().fold(T::one(), |acc, a| {
        acc * T::lit(0.5) * (T::one() - (T::lit(2.0) * T::PI() * x[a] / len[a]).cos())
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataPreset {
    pub theta: ThetaPreset,
    pub eta: f64,
    pub perturbation: Perturbation,
}

impl Default for DataPreset {
    fn default() -> Self {
        Self {
            theta: ThetaPreset::Sine { a: 1.0, b: 0.02 },
            eta: 0.05,
            perturbation: Perturbation::Directional,
        }
    }
}

impl DataPreset {
    pub fn validate(&self) -> Result<()> {
        self.theta.validate()?;
        if !(self.eta >= 0.0) || !self.eta.is_finite() {
            return Err(Error::InvalidParameter(format!("eta must be >= 0, got {}", self.eta)));
        }
        Ok(())
    }

    /// Well-prepared data: `h = theta0^4`.
    pub fn well_prepared(theta: ThetaPreset) -> Self {
        Self {
            theta,
            eta: 0.0,
            perturbation: Perturbation::Isotropic,
        }
    }

    pub fn theta0<T: Real>(&self, grid: &PeriodicGrid<T>) -> ScalarField<T> {
        let len = grid.lengths();
        ScalarField::from_fn(grid, |x| self.theta.eval(x, len))
    }

    /// `(h, theta0)` sampled on `grid` and `quad`.
    pub fn build<T: Real>(
        &self,
        grid: &PeriodicGrid<T>,
        quad: &AngularQuadrature<T>,
    ) -> Result<(DirectionalField<T>, ScalarField<T>)> {
        self.validate()?;
        let theta0 = self.theta0(grid);
        let eta = T::lit(self.eta);
        let directional = self.perturbation == Perturbation::Directional;
        let h = DirectionalField::from_dirs(quad.len(), grid.n_cells(), |m, out| {
            let w = quad.dir(m);
            let factor = if directional { T::one() + w[0] } else { T::one() };
            for (cell, o) in out.iter_mut().enumerate() {
                let x = grid.position(cell);
                *o = theta0[cell].powi(4) + eta * factor * bump(grid, x);
            }
        });
        Ok((h, theta0))
    }
}
