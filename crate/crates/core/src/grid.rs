//! Uniform tensor grid on the 3-torus.

use crate::error::{Error, Result};
use crate::real::Real;

/// Uniform periodic grid with `n[i]` nodes along axis `i` and node `j` at
/// coordinate `j * h[i]`.
///
/// An axis with a single node is a slab axis: every field is constant along
/// it and all difference operators vanish in that direction.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicGrid<T> {
    n: [usize; 3],
    len: [T; 3],
}

impl<T: Real> PeriodicGrid<T> {
    pub fn new(n: [usize; 3], len: [T; 3]) -> Result<Self> {
        for axis in 0..3 {
            if n[axis] == 0 {
                return Err(Error::InvalidParameter(format!(
                    "grid axis {axis} needs at least one cell"
                )));
            }
            if !(len[axis] > T::zero()) || !len[axis].is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "domain length along axis {axis} must be positive"
                )));
            }
        }
        Ok(Self { n, len })
    }

    /// Unit torus with the given cell counts.
    pub fn unit(n: [usize; 3]) -> Result<Self> {
        Self::new(n, [T::one(); 3])
    }

    /// One-dimensional slab along the first axis of the unit torus.
    pub fn slab(nx: usize) -> Result<Self> {
        Self::unit([nx, 1, 1])
    }

    #[inline]
    pub fn n(&self) -> [usize; 3] {
        self.n
    }

    #[inline]
    pub fn lengths(&self) -> [T; 3] {
        self.len
    }

    #[inline]
    pub fn spacing(&self, axis: usize) -> T {
        self.len[axis] / T::of_usize(self.n[axis])
    }

    pub fn spacings(&self) -> [T; 3] {
        [self.spacing(0), self.spacing(1), self.spacing(2)]
    }

    #[inline]
    pub fn is_slab(&self, axis: usize) -> bool {
        self.n[axis] == 1
    }

    pub fn slab_mask(&self) -> [bool; 3] {
        [self.is_slab(0), self.is_slab(1), self.is_slab(2)]
    }

    /// Axes along which fields may vary.
    pub fn active_axes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..3).filter(move |&a| !self.is_slab(a))
    }

    #[inline]
    pub fn n_cells(&self) -> usize {
        self.n[0] * self.n[1] * self.n[2]
    }

    /// Volume of one cell; slab axes contribute their full length.
    pub fn cell_volume(&self) -> T {
        self.spacing(0) * self.spacing(1) * self.spacing(2)
    }

    pub fn volume(&self) -> T {
        self.len[0] * self.len[1] * self.len[2]
    }

    #[inline]
    pub fn index(&self, ix: usize, iy: usize, iz: usize) -> usize {
        (iz * self.n[1] + iy) * self.n[0] + ix
    }

    #[inline]
    pub fn coords(&self, cell: usize) -> [usize; 3] {
        let ix = cell % self.n[0];
        let rest = cell / self.n[0];
        [ix, rest % self.n[1], rest / self.n[1]]
    }

    /// Physical position of a node.
    pub fn position(&self, cell: usize) -> [T; 3] {
        let c = self.coords(cell);
        [
            T::of_usize(c[0]) * self.spacing(0),
            T::of_usize(c[1]) * self.spacing(1),
            T::of_usize(c[2]) * self.spacing(2),
        ]
    }

    /// Neighbor of `cell` shifted by `offset` nodes along `axis`, with wrap.
    #[inline]
    pub fn neighbor(&self, cell: usize, axis: usize, offset: isize) -> usize {
        let mut c = self.coords(cell);
        let n = self.n[axis] as isize;
        c[axis] = (c[axis] as isize + offset).rem_euclid(n) as usize;
        self.index(c[0], c[1], c[2])
    }

    /// Index stride of one step along `axis`.
    #[inline]
    pub fn stride(&self, axis: usize) -> usize {
        match axis {
            0 => 1,
            1 => self.n[0],
            _ => self.n[0] * self.n[1],
        }
    }

    /// Same grid with every non-slab axis refined by `factor`.
    pub fn refined(&self, factor: usize) -> Result<Self> {
        let mut n = self.n;
        for (axis, count) in n.iter_mut().enumerate() {
            if !self.is_slab(axis) {
                *count *= factor;
            }
        }
        Self::new(n, self.len)
    }

    /// Wraps a coordinate into `[0, L)` along `axis`.
    #[inline]
    pub fn wrap(&self, axis: usize, x: T) -> T {
        let l = self.len[axis];
        let r = x - (x / l).floor() * l;
        if r >= l {
            r - l
        } else {
            r
        }
    }

    /// Converts the grid to another scalar type.
    pub fn cast<U: Real>(&self) -> PeriodicGrid<U> {
        PeriodicGrid {
            n: self.n,
            len: self.len.map(|l| U::lit(l.to_f64_lossy())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn neighbor_wraps_both_ways() {
        let g = PeriodicGrid::<f64>::unit([4, 3, 2]).unwrap();
        let last = g.index(3, 2, 1);
        assert_eq!(g.neighbor(last, 0, 1), g.index(0, 2, 1));
        assert_eq!(g.neighbor(last, 1, 1), g.index(3, 0, 1));
        assert_eq!(g.neighbor(last, 2, 1), g.index(3, 2, 0));
        assert_eq!(g.neighbor(g.index(0, 0, 0), 0, -1), g.index(3, 0, 0));
    }

    #[test]
    fn coords_round_trip() {
        let g = PeriodicGrid::<f64>::unit([5, 4, 3]).unwrap();
        for cell in 0..g.n_cells() {
            let [x, y, z] = g.coords(cell);
            assert_eq!(g.index(x, y, z), cell);
        }
    }

    #[test]
    fn slab_axes_and_volume() {
        let g = PeriodicGrid::<f64>::slab(8).unwrap();
        assert_eq!(g.slab_mask(), [false, true, true]);
        assert_eq!(g.active_axes().collect::<Vec<_>>(), vec![0]);
        assert!((g.cell_volume() - 0.125).abs() < 1e-15);
        assert_eq!(g.neighbor(0, 1, 1), 0);
    }

    #[test]
    fn rejects_empty_axis() {
        assert!(PeriodicGrid::<f64>::unit([0, 1, 1]).is_err());
        assert!(PeriodicGrid::<f64>::new([2, 1, 1], [1.0, -1.0, 1.0]).is_err());
    }

    #[test]
    fn wrap_into_domain() {
        let g = PeriodicGrid::<f64>::unit([4, 1, 1]).unwrap();
        assert!((g.wrap(0, -0.25) - 0.75).abs() < 1e-15);
        assert!((g.wrap(0, 2.5) - 0.5).abs() < 1e-15);
    }
}
