//! Dense row-major scalar grid shared by every lattice-based module.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A `width x height` lattice of `f64` values stored row-major (`data[j * width + i]`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Grid {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("grid dimensions must be non-zero"));
        }
        if data.len() != width * height {
            return Err(Error::invalid(format!(
                "grid {}x{} needs {} samples, got {}",
                width,
                height,
                width * height,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        assert!(width > 0 && height > 0, "grid dimensions must be non-zero");
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    /// Builds a grid by evaluating `f(i, j)` at every lattice node.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(width > 0 && height > 0, "grid dimensions must be non-zero");
        let mut data = Vec::with_capacity(width * height);
        for j in 0..height {
            for i in 0..width {
                data.push(f(i, j));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.width + i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[j * self.width + i] = value;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.data[j * self.width..(j + 1) * self.width]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Grid {
        Grid {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Elementwise combination of two grids of identical shape.
    pub fn zip_with(&self, other: &Grid, f: impl Fn(f64, f64) -> f64) -> Result<Grid> {
        self.ensure_same_shape(other)?;
        Ok(Grid {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn ensure_same_shape(&self, other: &Grid) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch {
                expected: self.shape(),
                actual: other.shape(),
            });
        }
        Ok(())
    }

    /// Minimum and maximum sample. NaNs are ignored.
    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Copies the `w x h` window whose top-left node is `(i0, j0)`.
    pub fn window(&self, i0: usize, j0: usize, w: usize, h: usize) -> Result<Grid> {
        if i0 + w > self.width || j0 + h > self.height || w == 0 || h == 0 {
            return Err(Error::invalid(format!(
                "window {}x{} at ({}, {}) exceeds grid {}x{}",
                w, h, i0, j0, self.width, self.height
            )));
        }
        let mut data = Vec::with_capacity(w * h);
        for j in j0..j0 + h {
            data.extend_from_slice(&self.row(j)[i0..i0 + w]);
        }
        Ok(Grid {
            width: w,
            height: h,
            data,
        })
    }

    /// Bilinear interpolation at fractional lattice coordinates, clamped to the
    /// grid. A node query returns the stored value exactly.
    #[inline]
    pub fn sample_bilinear(&self, u: f64, v: f64) -> f64 {
        let (i, fx) = cell_coord(u, self.width);
        let (j, fy) = cell_coord(v, self.height);
        let i1 = (i + 1).min(self.width - 1);
        let j1 = (j + 1).min(self.height - 1);
        let f00 = self.get(i, j);
        let f10 = self.get(i1, j);
        let f01 = self.get(i, j1);
        let f11 = self.get(i1, j1);
        let top = f00 * (1.0 - fx) + f10 * fx;
        let bottom = f01 * (1.0 - fx) + f11 * fx;
        top * (1.0 - fy) + bottom * fy
    }

    /// Value at the lattice node nearest to `(u, v)`, clamped to the grid.
    #[inline]
    pub fn sample_nearest(&self, u: f64, v: f64) -> f64 {
        let i = nearest_index(u, self.width);
        let j = nearest_index(v, self.height);
        self.get(i, j)
    }
}

/// Splits a fractional coordinate into a cell index and the offset inside it,
/// clamping to `[0, n - 1]`. The last node maps to offset 1 of the last cell.
#[inline]
pub(crate) fn cell_coord(u: f64, n: usize) -> (usize, f64) {
    if n == 1 {
        return (0, 0.0);
    }
    let max = (n - 1) as f64;
    let u = if u.is_nan() { 0.0 } else { u.clamp(0.0, max) };
    let i = (u.floor() as usize).min(n - 2);
    (i, u - i as f64)
}

#[inline]
pub(crate) fn nearest_index(u: f64, n: usize) -> usize {
    if u.is_nan() {
        return 0;
    }
    u.round().clamp(0.0, (n - 1) as f64) as usize
}
