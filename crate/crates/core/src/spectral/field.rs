use num_complex::Complex64;

use super::grid::Grid;
use crate::error::{Error, Result};

/// Which representation a [`ComplexField`] currently holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Space {
    Physical,
    Spectral,
}

/// Complex samples of a field on a [`Grid`], row-major.
///
/// Spectral coefficients follow `u(x) = sum_k c_k exp(i k.x)`, so the forward
/// transform divides by the point count and a constant field maps to its value
/// at `k = 0`.
#[derive(Debug, Clone)]
pub struct ComplexField {
    grid: Grid,
    values: Vec<Complex64>,
    space: Space,
}

impl ComplexField {
    pub fn new(grid: &Grid, values: Vec<Complex64>, space: Space) -> Result<Self> {
        if values.len() != grid.point_count() {
            return Err(Error::Contract(format!(
                "field has {} values, grid has {} points",
                values.len(),
                grid.point_count()
            )));
        }
        Ok(Self { grid: grid.clone(), values, space })
    }

    pub fn zeros(grid: &Grid, space: Space) -> Self {
        Self { grid: grid.clone(), values: vec![Complex64::new(0.0, 0.0); grid.point_count()], space }
    }

    /// Samples `f(x)` at every grid point (physical space).
    pub fn from_fn(grid: &Grid, mut f: impl FnMut(&[f64]) -> Complex64) -> Self {
        let coords: Vec<Vec<f64>> = (0..grid.dim()).map(|a| grid.coordinates(a)).collect();
        let mut idx = vec![0; grid.dim()];
        let mut x = vec![0.0; grid.dim()];
        let values = (0..grid.point_count())
            .map(|flat| {
                grid.unravel(flat, &mut idx);
                for (a, xa) in x.iter_mut().enumerate() {
                    *xa = coords[a][idx[a]];
                }
                f(&x)
            })
            .collect();
        Self { grid: grid.clone(), values, space: Space::Physical }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    /// Squared L2 norm, computed by the rule that matches the current space
    /// (trapezoid in physical space, Parseval in spectral space).
    pub fn norm_sq(&self) -> f64 {
        let sum: f64 = self.values.iter().map(|v| v.norm_sqr()).sum();
        match self.space {
            Space::Physical => sum * self.grid.cell_volume(),
            Space::Spectral => sum * self.grid.volume(),
        }
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn scaled(mut self, c: Complex64) -> Self {
        self.values.iter_mut().for_each(|v| *v *= c);
        self
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Forward transform; the field must be in physical space.
    pub fn forward(&self) -> Result<Self> {
        if self.space != Space::Physical {
            return Err(Error::Contract("forward transform needs a physical-space field".into()));
        }
        let mut values = self.values.clone();
        transform_in_place(&self.grid, &mut values, false);
        Ok(Self { grid: self.grid.clone(), values, space: Space::Spectral })
    }

    /// Inverse transform; the field must be in spectral space.
    pub fn inverse(&self) -> Result<Self> {
        if self.space != Space::Spectral {
            return Err(Error::Contract("inverse transform needs a spectral-space field".into()));
        }
        let mut values = self.values.clone();
        transform_in_place(&self.grid, &mut values, true);
        Ok(Self { grid: self.grid.clone(), values, space: Space::Physical })
    }

    pub fn into_spectral(mut self) -> Self {
        if self.space == Space::Physical {
            transform_in_place(&self.grid, &mut self.values, false);
            self.space = Space::Spectral;
        }
        self
    }

    pub fn into_physical(mut self) -> Self {
        if self.space == Space::Spectral {
            transform_in_place(&self.grid, &mut self.values, true);
            self.space = Space::Physical;
        }
        self
    }

    pub fn to_spectral(&self) -> Self {
        self.clone().into_spectral()
    }

    pub fn to_physical(&self) -> Self {
        self.clone().into_physical()
    }

    /// Relative L2 distance `||self - other|| / ||other||` (absolute when
    /// `other` vanishes). Both fields are compared in physical space.
    pub fn relative_distance(&self, other: &ComplexField) -> Result<f64> {
        if !self.grid.same_as(&other.grid) {
            return Err(Error::Contract("fields live on different grids".into()));
        }
        let a = self.to_physical();
        let b = other.to_physical();
        let diff: f64 = a.values.iter().zip(&b.values).map(|(x, y)| (x - y).norm_sqr()).sum();
        let base: f64 = b.values.iter().map(|y| y.norm_sqr()).sum();
        Ok(if base > 0.0 { (diff / base).sqrt() } else { diff.sqrt() })
    }
}

/// In-place multi-dimensional transform. Forward output is normalized by the
/// point count; the parity factor puts the phase origin at `x = 0`.
pub(crate) fn transform_in_place(grid: &Grid, values: &mut [Complex64], inverse: bool) {
    let parity = grid.parity();
    if inverse {
        values.iter_mut().zip(parity).for_each(|(v, &p)| *v *= p);
    }
    let n = grid.n();
    let dim = n.len();
    let mut scratch = Vec::new();
    let mut lines = Vec::new();
    for axis in 0..dim {
        let fft = grid.plan(axis, inverse);
        let len = n[axis];
        let inner: usize = n[axis + 1..].iter().product();
        scratch.resize(fft.get_inplace_scratch_len(), Complex64::new(0.0, 0.0));
        if inner == 1 {
            fft.process_with_scratch(values, &mut scratch);
            continue;
        }
        // Strided axis: transpose each [len x inner] block so lines are contiguous.
        let block = len * inner;
        lines.resize(block, Complex64::new(0.0, 0.0));
        for chunk in values.chunks_exact_mut(block) {
            for j in 0..len {
                for i in 0..inner {
                    lines[i * len + j] = chunk[j * inner + i];
                }
            }
            fft.process_with_scratch(&mut lines, &mut scratch);
            for j in 0..len {
                for i in 0..inner {
                    chunk[j * inner + i] = lines[i * len + j];
                }
            }
        }
    }
    if !inverse {
        let scale = 1.0 / grid.point_count() as f64;
        values.iter_mut().zip(parity).for_each(|(v, &p)| *v *= p * scale);
    }
}

/// Raw transform on a bare buffer for hot loops that manage their own storage.
pub fn forward_in_place(grid: &Grid, values: &mut [Complex64]) {
    transform_in_place(grid, values, false);
}

pub fn inverse_in_place(grid: &Grid, values: &mut [Complex64]) {
    transform_in_place(grid, values, true);
}
