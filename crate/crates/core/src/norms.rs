//! Discrete norms used by the error and residual reports.

use crate::field::{DirectionalField, ScalarField};
use crate::grid::PeriodicGrid;
use crate::ops::{partial, second_difference};
use crate::quadrature::AngularQuadrature;
use crate::real::Real;

pub fn norm_linf<T: Real>(values: &[T]) -> T {
    values.iter().fold(T::zero(), |acc, v| acc.max(v.abs()))
}

/// Volume-weighted L2 norm of a scalar field.
pub fn norm_l2<T: Real>(grid: &PeriodicGrid<T>, s: &[T]) -> T {
    let sq = s.iter().fold(T::zero(), |acc, &v| acc + v * v);
    (sq * grid.cell_volume()).sqrt()
}

/// L2 norm over space and directions, weighting directions by the quadrature.
pub fn norm_l2_directional<T: Real>(grid: &PeriodicGrid<T>, quad: &AngularQuadrature<T>, f: &DirectionalField<T>) -> T {
    let mut acc = T::zero();
    for (m, &w) in quad.weights().iter().enumerate() {
        let sq = f.dir(m).iter().fold(T::zero(), |a, &v| a + v * v);
        acc = acc + w * sq;
    }
    (acc * grid.cell_volume()).sqrt()
}

/// Discrete H2 norm:
/// `sqrt(|s|^2 + sum_i |D_i s|^2 + sum_ij |D_i D_j s|^2)` with centered
/// differences and volume-weighted L2 norms.
pub fn norm_h2<T: Real>(grid: &PeriodicGrid<T>, s: &ScalarField<T>) -> T {
    let l2sq = |v: &[T]| {
        let n = norm_l2(grid, v);
        n * n
    };
    let mut acc = l2sq(s);
    for i in grid.active_axes() {
        acc = acc + l2sq(&partial(grid, s, i));
        for j in grid.active_axes() {
            acc = acc + l2sq(&second_difference(grid, s, i, j));
        }
    }
    acc.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn zero_and_constant_fields() {
        let g = PeriodicGrid::<f64>::unit([4, 4, 4]).unwrap();
        let z = ScalarField::zeros(g.n_cells());
        assert_eq!(norm_linf(&z), 0.0);
        assert_eq!(norm_l2(&g, &z), 0.0);
        assert_eq!(norm_h2(&g, &z), 0.0);
        let c = ScalarField::constant(g.n_cells(), -1.5);
        assert!((norm_l2(&g, &c) - 1.5).abs() < 1e-14);
        assert!((norm_h2(&g, &c) - 1.5).abs() < 1e-14);
        assert_eq!(norm_linf(&c), 1.5);
    }

    #[test]
    fn l2_of_sine_matches_integral() {
        let g = PeriodicGrid::<f64>::slab(64).unwrap();
        let s = ScalarField::from_fn(&g, |x| (2.0 * PI * x[0]).sin());
        assert!((norm_l2(&g, &s) - 0.5f64.sqrt()).abs() < 1e-3);
    }

    #[test]
    fn h2_dominates_l2() {
        let g = PeriodicGrid::<f64>::unit([6, 5, 1]).unwrap();
        let s = ScalarField::from_fn(&g, |x| (2.0 * PI * x[0]).cos() * (2.0 * PI * x[1]).sin() + 0.3);
        assert!(norm_h2(&g, &s) >= norm_l2(&g, &s));
    }
}
