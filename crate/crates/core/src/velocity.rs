//! Prescribed smooth periodic velocity fields.

use serde::{Deserialize, Serialize};

use crate::field::ScalarField;
use crate::grid::PeriodicGrid;
use crate::real::Real;

/// Velocity presets. All are time independent, periodic on the unit torus
/// and infinitely smooth.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum VelocityField {
    #[default]
    Zero,
    Constant {
        a: [f64; 3],
    },
    /// Divergence-free `A (sin X cos Y cos Z, -cos X sin Y cos Z, 0)` with
    /// `X = 2 pi x1 / L1` and so on.
    TaylorGreen {
        amplitude: f64,
    },
    /// Compressible `A (sin X, sin Y, sin Z)`.
    CompressibleSine {
        amplitude: f64,
    },
}

impl VelocityField {
    pub fn eval<T: Real>(&self, _t: T, x: [T; 3], len: [T; 3]) -> [T; 3] {
        let two_pi = T::lit(2.0) * T::PI();
        let phase = [two_pi * x[0] / len[0], two_pi * x[1] / len[1], two_pi * x[2] / len[2]];
        match *self {
            VelocityField::Zero => [T::zero(); 3],
            VelocityField::Constant { a } => a.map(T::lit),
            VelocityField::TaylorGreen { amplitude } => {
                let a = T::lit(amplitude);
                let (sx, cx) = phase[0].sin_cos();
                let (sy, cy) = phase[1].sin_cos();
                let cz = phase[2].cos();
                [a * sx * cy * cz, -a * cx * sy * cz, T::zero()]
            }
            VelocityField::CompressibleSine { amplitude } => {
                let a = T::lit(amplitude);
                [a * phase[0].sin(), a * phase[1].sin(), a * phase[2].sin()]
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        match *self {
            VelocityField::Zero => true,
            VelocityField::Constant { a } => a == [0.0; 3],
            VelocityField::TaylorGreen { amplitude } | VelocityField::CompressibleSine { amplitude } => {
                amplitude == 0.0
            }
        }
    }

    /// Normal velocity on the faces `x + h_i/2 e_i`, stored at the index of
    /// the node to the left of the face. Slab axes get zero normal velocity.
    pub fn face_normals<T: Real>(&self, grid: &PeriodicGrid<T>, t: T) -> [ScalarField<T>; 3] {
        let len = grid.lengths();
        let h = grid.spacings();
        let half = T::lit(0.5);
        std::array::from_fn(|axis| {
            if grid.is_slab(axis) {
                return ScalarField::zeros(grid.n_cells());
            }
            ScalarField::from_fn(grid, |mut x| {
                x[axis] = x[axis] + half * h[axis];
                self.eval(t, x, len)[axis]
            })
        })
    }

    /// Upper bound on `sum_i |u_i| / h_i` over the faces of `grid`.
    pub fn advective_rate<T: Real>(&self, grid: &PeriodicGrid<T>, t: T) -> T {
        let faces = self.face_normals(grid, t);
        let mut rate = T::zero();
        for cell in 0..grid.n_cells() {
            let r = grid
                .active_axes()
                .fold(T::zero(), |r, axis| r + faces[axis][cell].abs() / grid.spacing(axis));
            rate = rate.max(r);
        }
        rate
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_periodic() {
        let len = [1.0f64, 1.0, 1.0];
        for u in [
            VelocityField::Constant { a: [0.1, 0.2, 0.3] },
            VelocityField::TaylorGreen { amplitude: 0.5 },
            VelocityField::CompressibleSine { amplitude: 0.5 },
        ] {
            let a = u.eval(0.0, [0.13, 0.42, 0.77], len);
            let b = u.eval(0.0, [1.13, -0.58, 1.77], len);
            for i in 0..3 {
                assert!((a[i] - b[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_preset_detection() {
        assert!(VelocityField::Zero.is_zero());
        assert!(VelocityField::TaylorGreen { amplitude: 0.0 }.is_zero());
        assert!(!VelocityField::CompressibleSine { amplitude: 0.1 }.is_zero());
    }
}
