//! Scalar and directional fields stored as flat vectors.

use std::ops::{Deref, DerefMut};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::PeriodicGrid;
use crate::real::Real;

/// One value per grid node (temperature-like quantities).
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField<T> {
    data: Vec<T>,
}

impl<T: Real> ScalarField<T> {
    pub fn zeros(n_cells: usize) -> Self {
        Self::constant(n_cells, T::zero())
    }

    pub fn constant(n_cells: usize, value: T) -> Self {
        Self {
            data: vec![value; n_cells],
        }
    }

    pub fn from_vec(data: Vec<T>) -> Self {
        Self { data }
    }

    /// Samples `f` at every node position of `grid`.
    pub fn from_fn(grid: &PeriodicGrid<T>, f: impl Fn([T; 3]) -> T + Sync) -> Self {
        let data = (0..grid.n_cells())
            .into_par_iter()
            .map(|c| f(grid.position(c)))
            .collect();
        Self { data }
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn map(&self, f: impl Fn(T) -> T + Sync) -> Self {
        Self {
            data: self.data.par_iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T + Sync) -> Self {
        assert_eq!(self.len(), other.len(), "field length mismatch");
        Self {
            data: self
                .data
                .par_iter()
                .zip(other.data.par_iter())
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// `self + scale * other`.
    pub fn axpy(&self, scale: T, other: &Self) -> Self {
        self.zip_map(other, |a, b| a + scale * b)
    }

    pub fn scaled(&self, scale: T) -> Self {
        self.map(|v| v * scale)
    }

    /// Sum over nodes in index order.
    pub fn sum(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, &v| acc + v)
    }

    pub fn min(&self) -> T {
        self.data.iter().fold(T::infinity(), |acc, &v| acc.min(v))
    }

    pub fn max(&self) -> T {
        self.data.iter().fold(T::neg_infinity(), |acc, &v| acc.max(v))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn check_len(&self, n_cells: usize, what: &str) -> Result<()> {
        if self.len() != n_cells {
            return Err(Error::Shape(format!(
                "{what}: expected {n_cells} cells, got {}",
                self.len()
            )));
        }
        Ok(())
    }
}

impl<T> Deref for ScalarField<T> {
    type Target = [T];
    fn deref(&self) -> &[T] {
        &self.data
    }
}

impl<T> DerefMut for ScalarField<T> {
    fn deref_mut(&mut self) -> &mut [T] {
        &mut self.data
    }
}

/// One value per (direction, node); the direction index is outermost.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionalField<T> {
    n_dirs: usize,
    n_cells: usize,
    data: Vec<T>,
}

impl<T: Real> DirectionalField<T> {
    pub fn zeros(n_dirs: usize, n_cells: usize) -> Self {
        Self::constant(n_dirs, n_cells, T::zero())
    }

    pub fn constant(n_dirs: usize, n_cells: usize, value: T) -> Self {
        Self {
            n_dirs,
            n_cells,
            data: vec![value; n_dirs * n_cells],
        }
    }

    pub fn from_vec(n_dirs: usize, n_cells: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != n_dirs * n_cells {
            return Err(Error::Shape(format!(
                "directional field: {} values for {n_dirs} directions x {n_cells} cells",
                data.len()
            )));
        }
        Ok(Self { n_dirs, n_cells, data })
    }

    /// Isotropic field equal to `s` in every direction.
    pub fn isotropic(n_dirs: usize, s: &ScalarField<T>) -> Self {
        let mut data = Vec::with_capacity(n_dirs * s.len());
        for _ in 0..n_dirs {
            data.extend_from_slice(s);
        }
        Self {
            n_dirs,
            n_cells: s.len(),
            data,
        }
    }

    /// Builds a field direction by direction.
    pub fn from_dirs(n_dirs: usize, n_cells: usize, f: impl Fn(usize, &mut [T]) + Sync) -> Self {
        let mut out = Self::zeros(n_dirs, n_cells);
        out.data
            .par_chunks_mut(n_cells)
            .enumerate()
            .for_each(|(m, chunk)| f(m, chunk));
        out
    }

    #[inline]
    pub fn n_dirs(&self) -> usize {
        self.n_dirs
    }

    #[inline]
    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    #[inline]
    pub fn dir(&self, m: usize) -> &[T] {
        &self.data[m * self.n_cells..(m + 1) * self.n_cells]
    }

    #[inline]
    pub fn dir_mut(&mut self, m: usize) -> &mut [T] {
        &mut self.data[m * self.n_cells..(m + 1) * self.n_cells]
    }

    #[inline]
    pub fn get(&self, m: usize, cell: usize) -> T {
        self.data[m * self.n_cells + cell]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn dirs_mut(&mut self) -> rayon::slice::ChunksMut<'_, T> {
        self.data.par_chunks_mut(self.n_cells)
    }

    pub fn map(&self, f: impl Fn(T) -> T + Sync) -> Self {
        Self {
            n_dirs: self.n_dirs,
            n_cells: self.n_cells,
            data: self.data.par_iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T + Sync) -> Self {
        assert_eq!(self.data.len(), other.data.len(), "field length mismatch");
        Self {
            n_dirs: self.n_dirs,
            n_cells: self.n_cells,
            data: self
                .data
                .par_iter()
                .zip(other.data.par_iter())
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn axpy(&self, scale: T, other: &Self) -> Self {
        self.zip_map(other, |a, b| a + scale * b)
    }

    /// Adds `s` to every direction.
    pub fn add_isotropic(&self, s: &ScalarField<T>) -> Self {
        let mut out = self.clone();
        let n = self.n_cells;
        out.data.par_chunks_mut(n).for_each(|chunk| {
            for (v, &a) in chunk.iter_mut().zip(s.iter()) {
                *v = *v + a;
            }
        });
        out
    }

    pub fn min(&self) -> T {
        self.data.iter().fold(T::infinity(), |acc, &v| acc.min(v))
    }

    pub fn max(&self) -> T {
        self.data.iter().fold(T::neg_infinity(), |acc, &v| acc.max(v))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn isotropic_layout_is_direction_major() {
        let s = ScalarField::from_vec(vec![1.0, 2.0, 3.0]);
        let f = DirectionalField::isotropic(2, &s);
        assert_eq!(f.as_slice(), &[1.0, 2.0, 3.0, 1.0, 2.0, 3.0]);
        assert_eq!(f.get(1, 2), 3.0);
    }

    #[test]
    fn from_vec_checks_shape() {
        assert!(DirectionalField::<f64>::from_vec(2, 3, vec![0.0; 5]).is_err());
    }

    #[test]
    fn sum_min_max() {
        let s = ScalarField::from_vec(vec![3.0, -1.0, 2.0]);
        assert_eq!(s.sum(), 4.0);
        assert_eq!(s.min(), -1.0);
        assert_eq!(s.max(), 3.0);
    }
}
