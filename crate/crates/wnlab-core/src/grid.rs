//! Uniform tensor grids on (-b, b)^d and real-valued functions on them.
//!
//! The grid stores midpoints of a uniform partition: axis coordinates are
//! `-b + (i + 1/2) * 2b/n`, so every point lies strictly inside the cube and
//! midpoint Riemann sums over the grid are unbiased for piecewise-smooth
//! integrands.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::CoreError;

/// Maximum supported dimension. Larger d blows up memory as n^d.
pub const MAX_DIM: usize = 3;

/// A uniform tensor grid of n^d cell midpoints on (-b, b)^d.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Grid {
    d: usize,
    b: f64,
    n: usize,
}

impl Grid {
    /// Build a grid with `n` points per axis on (-b, b)^d.
    ///
    /// `n` must be a power of two (the dyadic bandwidth partitions refine
    /// into grid cells only then) and at least 4; `d` is capped at
    /// [`MAX_DIM`].
    pub fn new(d: usize, b: f64, n: usize) -> Result<Self, CoreError> {
        if d == 0 || d > MAX_DIM {
            return Err(CoreError::InvalidGrid(format!(
                "dimension {d} outside 1..={MAX_DIM}"
            )));
        }
        if !(b > 0.0 && b.is_finite()) {
            return Err(CoreError::InvalidGrid(format!("half-width {b} not positive")));
        }
        if n < 4 || !n.is_power_of_two() {
            return Err(CoreError::InvalidGrid(format!(
                "points per axis {n} must be a power of two >= 4"
            )));
        }
        Ok(Grid { d, b, n })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn half_width(&self) -> f64 {
        self.b
    }

    pub fn points_per_axis(&self) -> usize {
        self.n
    }

    /// Width of one grid cell along any axis: 2b/n.
    pub fn cell_width(&self) -> f64 {
        2.0 * self.b / self.n as f64
    }

    /// Volume of one grid cell: (2b/n)^d.
    pub fn cell_volume(&self) -> f64 {
        let w = self.cell_width();
        let mut v = 1.0;
        for _ in 0..self.d {
            v *= w;
        }
        v
    }

    /// Total number of grid points, n^d.
    pub fn len(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Midpoint coordinate of cell `i` along one axis.
    pub fn coord(&self, i: usize) -> f64 {
        debug_assert!(i < self.n);
        -self.b + (i as f64 + 0.5) * self.cell_width()
    }

    /// Axis indices of the flat index (row-major, axis 0 slowest).
    pub fn unravel(&self, flat: usize) -> [usize; MAX_DIM] {
        debug_assert!(flat < self.len());
        let mut idx = [0usize; MAX_DIM];
        let mut rem = flat;
        for axis in (0..self.d).rev() {
            idx[axis] = rem % self.n;
            rem /= self.n;
        }
        idx
    }

    /// Flat index of axis indices (row-major, axis 0 slowest).
    pub fn ravel(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.d);
        let mut flat = 0usize;
        for axis in 0..self.d {
            debug_assert!(idx[axis] < self.n);
            flat = flat * self.n + idx[axis];
        }
        flat
    }

    /// Coordinates of the grid point with the given flat index.
    pub fn point(&self, flat: usize) -> [f64; MAX_DIM] {
        let idx = self.unravel(flat);
        let mut x = [0.0f64; MAX_DIM];
        for axis in 0..self.d {
            x[axis] = self.coord(idx[axis]);
        }
        x
    }
}

/// A real-valued function sampled on a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GridFunction {
    grid: Grid,
    values: Vec<f64>,
}

impl GridFunction {
    /// Wrap an existing value array; length must equal `grid.len()` and all
    /// entries must be finite.
    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self, CoreError> {
        if values.len() != grid.len() {
            return Err(CoreError::InvalidArgument(format!(
                "value count {} does not match grid size {}",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::InvalidArgument("non-finite value".into()));
        }
        Ok(GridFunction { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        GridFunction {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        GridFunction {
            grid,
            values: vec![c; grid.len()],
        }
    }

    /// Sample a closure at every grid point. The slice passed to `f` holds
    /// the first `d` coordinates.
    pub fn from_fn<F: Fn(&[f64]) -> f64>(grid: Grid, f: F) -> Self {
        let d = grid.dim();
        let values = (0..grid.len())
            .map(|i| {
                let p = grid.point(i);
                f(&p[..d])
            })
            .collect();
        GridFunction { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// L_p norm over (-b, b)^d: midpoint Riemann sum for finite p, max of
    /// absolute values for p = infinity.
    pub fn lp_norm(&self, p: f64) -> f64 {
        assert!(p >= 1.0, "norm index must be >= 1");
        if p.is_infinite() {
            return self
                .values
                .iter()
                .fold(0.0f64, |acc, v| acc.max(crate::math::abs(*v)));
        }
        let dv = self.grid.cell_volume();
        let sum: f64 = self
            .values
            .iter()
            .map(|v| crate::math::powf(crate::math::abs(*v), p) * dv)
            .sum();
        crate::math::powf(sum, 1.0 / p)
    }

    /// Pointwise combination `self + alpha * other`. Grids must match.
    pub fn axpy(&self, alpha: f64, other: &GridFunction) -> Result<GridFunction, CoreError> {
        if self.grid != other.grid {
            return Err(CoreError::GridMismatch);
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + alpha * b)
            .collect();
        Ok(GridFunction {
            grid: self.grid,
            values,
        })
    }

    /// Pointwise absolute difference |self - other|.
    pub fn abs_diff(&self, other: &GridFunction) -> Result<GridFunction, CoreError> {
        if self.grid != other.grid {
            return Err(CoreError::GridMismatch);
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| crate::math::abs(a - b))
            .collect();
        Ok(GridFunction {
            grid: self.grid,
            values,
        })
    }

    pub fn scale(&self, alpha: f64) -> GridFunction {
        GridFunction {
            grid: self.grid,
            values: self.values.iter().map(|v| alpha * v).collect(),
        }
    }
}
