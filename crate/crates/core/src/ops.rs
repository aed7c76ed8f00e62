//! Periodic finite-difference operators.
//!
//! Node-centered operators (`grad`, `div`) use second-order centered
//! differences. The staggered pair `face_grad`/`div_faces` works with face
//! values stored at the index of the node left of the face; their
//! composition is the compact 7-point `laplacian`. Every operator returns
//! zero along slab axes.

use rayon::prelude::*;

use crate::field::{DirectionalField, ScalarField};
use crate::grid::PeriodicGrid;
use crate::quadrature::AngularQuadrature;
use crate::real::Real;

/// Node stencil helper: index of the neighbor at `offset` along `axis`.
#[inline]
fn nb<T: Real>(grid: &PeriodicGrid<T>, c: [usize; 3], axis: usize, offset: isize) -> usize {
    let n = grid.n();
    let mut c = c;
    c[axis] = (c[axis] as isize + offset).rem_euclid(n[axis] as isize) as usize;
    grid.index(c[0], c[1], c[2])
}

fn build<T: Real>(grid: &PeriodicGrid<T>, f: impl Fn([usize; 3], usize) -> T + Sync) -> ScalarField<T> {
    let data = (0..grid.n_cells())
        .into_par_iter()
        .map(|cell| f(grid.coords(cell), cell))
        .collect();
    ScalarField::from_vec(data)
}

/// Centered difference `(s(x + h e_i) - s(x - h e_i)) / 2h` along one axis.
pub fn partial<T: Real>(grid: &PeriodicGrid<T>, s: &[T], axis: usize) -> ScalarField<T> {
    if grid.is_slab(axis) {
        return ScalarField::zeros(grid.n_cells());
    }
    let inv = T::one() / (T::lit(2.0) * grid.spacing(axis));
    build(grid, |c, _| (s[nb(grid, c, axis, 1)] - s[nb(grid, c, axis, -1)]) * inv)
}

/// Centered gradient at the nodes.
pub fn grad<T: Real>(grid: &PeriodicGrid<T>, s: &[T]) -> [ScalarField<T>; 3] {
    std::array::from_fn(|axis| partial(grid, s, axis))
}

/// Centered divergence of a node vector field.
pub fn div<T: Real>(grid: &PeriodicGrid<T>, v: &[ScalarField<T>; 3]) -> ScalarField<T> {
    let mut out = ScalarField::zeros(grid.n_cells());
    for axis in grid.active_axes() {
        let d = partial(grid, &v[axis], axis);
        out = out.zip_map(&d, |a, b| a + b);
    }
    out
}

/// Forward differences, i.e. the gradient at faces `x + h_i/2 e_i`.
pub fn face_grad<T: Real>(grid: &PeriodicGrid<T>, s: &[T]) -> [ScalarField<T>; 3] {
    std::array::from_fn(|axis| {
        if grid.is_slab(axis) {
            return ScalarField::zeros(grid.n_cells());
        }
        let inv = T::one() / grid.spacing(axis);
        build(grid, |c, cell| (s[nb(grid, c, axis, 1)] - s[cell]) * inv)
    })
}

/// Divergence of a face vector field (backward differences of face values).
pub fn div_faces<T: Real>(grid: &PeriodicGrid<T>, v: &[ScalarField<T>; 3]) -> ScalarField<T> {
    build(grid, |c, cell| {
        let mut acc = T::zero();
        for axis in grid.active_axes() {
            let inv = T::one() / grid.spacing(axis);
            acc = acc + (v[axis][cell] - v[axis][nb(grid, c, axis, -1)]) * inv;
        }
        acc
    })
}

/// Compact second-order Laplacian.
pub fn laplacian<T: Real>(grid: &PeriodicGrid<T>, s: &[T]) -> ScalarField<T> {
    let two = T::lit(2.0);
    let inv2: [T; 3] = std::array::from_fn(|a| {
        let h = grid.spacing(a);
        T::one() / (h * h)
    });
    build(grid, |c, cell| {
        let mut acc = T::zero();
        for axis in grid.active_axes() {
            let sp = s[nb(grid, c, axis, 1)];
            let sm = s[nb(grid, c, axis, -1)];
            acc = acc + (sp - two * s[cell] + sm) * inv2[axis];
        }
        acc
    })
}

/// Second difference `D_i D_j s`: compact along the diagonal, centered
/// composition off the diagonal.
pub fn second_difference<T: Real>(grid: &PeriodicGrid<T>, s: &[T], i: usize, j: usize) -> ScalarField<T> {
    if grid.is_slab(i) || grid.is_slab(j) {
        return ScalarField::zeros(grid.n_cells());
    }
    if i == j {
        let h = grid.spacing(i);
        let inv2 = T::one() / (h * h);
        let two = T::lit(2.0);
        return build(grid, |c, cell| {
            (s[nb(grid, c, i, 1)] - two * s[cell] + s[nb(grid, c, i, -1)]) * inv2
        });
    }
    let di = partial(grid, s, i);
    partial(grid, &di, j)
}

/// Conservative first-order upwind discretization of `div(u s)` from face
/// normal velocities (see [`crate::velocity::VelocityField::face_normals`]).
///
/// The node sum of the result telescopes to zero.
pub fn advect_div<T: Real>(grid: &PeriodicGrid<T>, faces: &[ScalarField<T>; 3], s: &[T]) -> ScalarField<T> {
    let flux = |axis: usize, left: usize, right: usize| {
        let u = faces[axis][left];
        u.max(T::zero()) * s[left] + u.min(T::zero()) * s[right]
    };
    build(grid, |c, cell| {
        let mut acc = T::zero();
        for axis in grid.active_axes() {
            let inv = T::one() / grid.spacing(axis);
            let right = nb(grid, c, axis, 1);
            let left = nb(grid, c, axis, -1);
            acc = acc + (flux(axis, cell, right) - flux(axis, left, cell)) * inv;
        }
        acc
    })
}

/// Per-direction first-order upwind discretization of `speed (w_m . grad) f`.
///
/// Written in flux form, so the node sum of every direction vanishes; with
/// `speed * dt * |w_i| / h_i = 1` an explicit Euler step is an exact shift.
pub fn upwind_transport<T: Real>(
    grid: &PeriodicGrid<T>,
    quad: &AngularQuadrature<T>,
    f: &DirectionalField<T>,
    speed: T,
) -> DirectionalField<T> {
    let n_cells = grid.n_cells();
    DirectionalField::from_dirs(quad.len(), n_cells, |m, out| {
        let w = quad.dir(m);
        let fm = f.dir(m);
        for o in out.iter_mut() {
            *o = T::zero();
        }
        for axis in grid.active_axes() {
            let a = speed * w[axis] / grid.spacing(axis);
            if a == T::zero() {
                continue;
            }
            let offset: isize = if a > T::zero() { -1 } else { 1 };
            for (cell, o) in out.iter_mut().enumerate() {
                let c = grid.coords(cell);
                let up = fm[nb(grid, c, axis, offset)];
                // a > 0: a (f_j - f_{j-1}); a < 0: a (f_{j+1} - f_j) = -a (f_j - f_{j+1})
                *o = *o + a.abs() * (fm[cell] - up);
            }
        }
    })
}

/// Centered `(w_m . grad) f` for every direction.
pub fn directional_derivative<T: Real>(
    grid: &PeriodicGrid<T>,
    quad: &AngularQuadrature<T>,
    f: &DirectionalField<T>,
) -> DirectionalField<T> {
    let n_cells = grid.n_cells();
    DirectionalField::from_dirs(quad.len(), n_cells, |m, out| {
        let w = quad.dir(m);
        let fm = f.dir(m);
        for o in out.iter_mut() {
            *o = T::zero();
        }
        for axis in grid.active_axes() {
            if w[axis] == T::zero() {
                continue;
            }
            let a = w[axis] / (T::lit(2.0) * grid.spacing(axis));
            for (cell, o) in out.iter_mut().enumerate() {
                let c = grid.coords(cell);
                *o = *o + a * (fm[nb(grid, c, axis, 1)] - fm[nb(grid, c, axis, -1)]);
            }
        }
    })
}

/// `w_m . grad s` for an isotropic field `s`, as a directional field.
pub fn directional_gradient<T: Real>(
    grid: &PeriodicGrid<T>,
    quad: &AngularQuadrature<T>,
    s: &[T],
) -> DirectionalField<T> {
    let g = grad(grid, s);
    dot_dirs(quad, &g, grid.n_cells())
}

/// `w_m . v(x)` for a node vector field `v`.
pub fn dot_dirs<T: Real>(quad: &AngularQuadrature<T>, v: &[ScalarField<T>; 3], n_cells: usize) -> DirectionalField<T> {
    DirectionalField::from_dirs(quad.len(), n_cells, |m, out| {
        let w = quad.dir(m);
        for (cell, o) in out.iter_mut().enumerate() {
            *o = w[0] * v[0][cell] + w[1] * v[1][cell] + w[2] * v[2][cell];
        }
    })
}

/// Trilinear interpolation of node values at an arbitrary point.
pub fn interpolate<T: Real>(grid: &PeriodicGrid<T>, s: &[T], x: [T; 3]) -> T {
    let n = grid.n();
    let mut lo = [0usize; 3];
    let mut hi = [0usize; 3];
    let mut frac = [T::zero(); 3];
    for axis in 0..3 {
        if grid.is_slab(axis) {
            continue;
        }
        let xi = grid.wrap(axis, x[axis]) / grid.spacing(axis);
        let fl = xi.floor();
        let i0 = fl.to_usize().unwrap_or(0) % n[axis];
        lo[axis] = i0;
        hi[axis] = (i0 + 1) % n[axis];
        frac[axis] = xi - fl;
    }
    let mut acc = T::zero();
    for corner in 0..8usize {
        let mut weight = T::one();
        let mut idx = [0usize; 3];
        for axis in 0..3 {
            let upper = corner >> axis & 1 == 1;
            if grid.is_slab(axis) {
                if upper {
                    weight = T::zero();
                }
                continue;
            }
            idx[axis] = if upper { hi[axis] } else { lo[axis] };
            weight = weight * if upper { frac[axis] } else { T::one() - frac[axis] };
        }
        if weight != T::zero() {
            acc = acc + weight * s[grid.index(idx[0], idx[1], idx[2])];
        }
    }
    acc
}
