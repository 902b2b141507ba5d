use std::f64::consts::PI;
use std::fmt;
use std::sync::{Arc, OnceLock};

use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

type FftPlan = Arc<dyn Fft<f64>>;

/// Default cap on the size of one field (points times 16 bytes).
pub const DEFAULT_MEMORY_BUDGET: usize = 4 << 30;

pub const MAX_DIM: usize = 4;
pub const MIN_POINTS: usize = 8;

/// Periodic box `[-L, L)^d` sampled on `n` points per axis, together with its
/// Fourier lattice `k = pi * m / L`.
///
/// Cloning is cheap: the lattice tables and FFT plans are shared.
#[derive(Clone)]
pub struct Grid {
    inner: Arc<GridInner>,
}

struct GridInner {
    n: Vec<usize>,
    half_len: Vec<f64>,
    total: usize,
    /// Signed lattice index per axis in FFT order (Nyquist stored as -n/2).
    index: Vec<Vec<i64>>,
    wavenumbers: Vec<Vec<f64>>,
    plans: Vec<(FftPlan, FftPlan)>,
    k_squared: OnceLock<Vec<f64>>,
    parity: OnceLock<Vec<f64>>,
    dealias_mask: OnceLock<Vec<bool>>,
    tail_mask: OnceLock<Vec<bool>>,
}

impl Grid {
    /// Builds a grid with the default memory budget.
    pub fn new(n: &[usize], half_len: &[f64]) -> Result<Self> {
        Self::with_budget(n, half_len, DEFAULT_MEMORY_BUDGET)
    }

    /// Same axis size and half-period on every axis.
    pub fn cubic(dim: usize, n: usize, half_len: f64) -> Result<Self> {
        Self::new(&vec![n; dim], &vec![half_len; dim])
    }

    pub fn with_budget(n: &[usize], half_len: &[f64], budget_bytes: usize) -> Result<Self> {
        let dim = n.len();
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::Domain(format!("grid dimension {dim} outside 1..={MAX_DIM}")));
        }
        if half_len.len() != dim {
            return Err(Error::Contract(format!(
                "{} box lengths given for a {dim}-dimensional grid",
                half_len.len()
            )));
        }
        for (&na, &la) in n.iter().zip(half_len) {
            if na < MIN_POINTS || !na.is_power_of_two() {
                return Err(Error::Domain(format!(
                    "points per axis must be a power of two >= {MIN_POINTS}, got {na}"
                )));
            }
            if !(la.is_finite() && la > 0.0) {
                return Err(Error::Domain(format!("box half-period must be positive, got {la}")));
            }
        }
        let total = n
            .iter()
            .try_fold(1usize, |acc, &na| acc.checked_mul(na))
            .ok_or_else(|| Error::Domain("grid point count overflows".into()))?;
        let bytes = total
            .checked_mul(16)
            .ok_or_else(|| Error::Domain("grid byte size overflows".into()))?;
        if bytes > budget_bytes {
            return Err(Error::Domain(format!(
                "grid needs {bytes} bytes per field, budget is {budget_bytes}"
            )));
        }

        let mut planner = FftPlanner::new();
        let mut index = Vec::with_capacity(dim);
        let mut wavenumbers = Vec::with_capacity(dim);
        let mut plans = Vec::with_capacity(dim);
        for (&na, &la) in n.iter().zip(half_len) {
            let idx: Vec<i64> = (0..na)
                .map(|j| if j < na / 2 { j as i64 } else { j as i64 - na as i64 })
                .collect();
            wavenumbers.push(idx.iter().map(|&m| PI * m as f64 / la).collect());
            index.push(idx);
            plans.push((planner.plan_fft_forward(na), planner.plan_fft_inverse(na)));
        }

        Ok(Self {
            inner: Arc::new(GridInner {
                n: n.to_vec(),
                half_len: half_len.to_vec(),
                total,
                index,
                wavenumbers,
                plans,
                k_squared: OnceLock::new(),
                parity: OnceLock::new(),
                dealias_mask: OnceLock::new(),
                tail_mask: OnceLock::new(),
            }),
        })
    }

    pub fn dim(&self) -> usize {
        self.inner.n.len()
    }

    pub fn n(&self) -> &[usize] {
        &self.inner.n
    }

    pub fn half_len(&self) -> &[f64] {
        &self.inner.half_len
    }

    pub fn point_count(&self) -> usize {
        self.inner.total
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        2.0 * self.inner.half_len[axis] / self.inner.n[axis] as f64
    }

    /// Quadrature weight of one sample.
    pub fn cell_volume(&self) -> f64 {
        (0..self.dim()).map(|a| self.spacing(a)).product()
    }

    /// Volume of the periodic box, `prod(2 L)`.
    pub fn volume(&self) -> f64 {
        self.inner.half_len.iter().map(|l| 2.0 * l).product()
    }

    /// Sample positions along one axis, `x_j = -L + 2 L j / n`.
    pub fn coordinates(&self, axis: usize) -> Vec<f64> {
        let l = self.inner.half_len[axis];
        let h = self.spacing(axis);
        (0..self.inner.n[axis]).map(|j| -l + h * j as f64).collect()
    }

    /// Lattice wavenumbers along one axis in FFT order.
    pub fn wavenumbers(&self, axis: usize) -> &[f64] {
        &self.inner.wavenumbers[axis]
    }

    /// Wavenumber used by odd-order symbols such as `i k`: the unpaired Nyquist
    /// mode maps to zero so the odd lattice is exactly conjugate-symmetric.
    pub fn odd_wavenumber(&self, axis: usize, j: usize) -> f64 {
        if j == self.inner.n[axis] / 2 {
            0.0
        } else {
            self.inner.wavenumbers[axis][j]
        }
    }

    /// Signed lattice index `m` of FFT slot `j` along `axis`.
    pub fn lattice_index(&self, axis: usize, j: usize) -> i64 {
        self.inner.index[axis][j]
    }

    /// Splits a row-major flat index into per-axis indices.
    pub fn unravel(&self, mut flat: usize, out: &mut [usize]) {
        for axis in (0..self.dim()).rev() {
            let na = self.inner.n[axis];
            out[axis] = flat % na;
            flat /= na;
        }
    }

    pub fn ravel(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.inner.n).fold(0, |acc, (&i, &na)| acc * na + i)
    }

    /// Wavenumber vector at a flat spectral index.
    pub fn k_vector(&self, flat: usize) -> Vec<f64> {
        let mut idx = vec![0; self.dim()];
        self.unravel(flat, &mut idx);
        idx.iter().enumerate().map(|(a, &j)| self.inner.wavenumbers[a][j]).collect()
    }

    /// `|k|^2` at every spectral slot, row-major.
    pub fn k_squared(&self) -> &[f64] {
        self.inner.k_squared.get_or_init(|| {
            let mut out = vec![0.0; self.inner.total];
            let mut idx = vec![0; self.dim()];
            for (flat, v) in out.iter_mut().enumerate() {
                self.unravel(flat, &mut idx);
                *v = idx
                    .iter()
                    .enumerate()
                    .map(|(a, &j)| self.inner.wavenumbers[a][j].powi(2))
                    .sum();
            }
            out
        })
    }

    /// `(-1)^(j_1 + ... + j_d)`, the phase that moves the DFT origin from the
    /// first sample to `x = 0`.
    pub(crate) fn parity(&self) -> &[f64] {
        self.inner.parity.get_or_init(|| {
            let mut idx = vec![0; self.dim()];
            (0..self.inner.total)
                .map(|flat| {
                    self.unravel(flat, &mut idx);
                    if idx.iter().sum::<usize>() % 2 == 0 {
                        1.0
                    } else {
                        -1.0
                    }
                })
                .collect()
        })
    }

    /// Mask of slots kept by the 2/3 rule: `3 |m| < n` on every axis.
    pub fn dealias_mask(&self) -> &[bool] {
        self.inner.dealias_mask.get_or_init(|| {
            self.band_mask(|m, n| 3 * m < n, true)
        })
    }

    /// Mask of the resolution-indicator band: `4 |m| > n` on some axis, i.e.
    /// the top sixth of the half-range, just below the dealiasing cutoff.
    pub fn tail_mask(&self) -> &[bool] {
        self.inner.tail_mask.get_or_init(|| {
            self.band_mask(|m, n| 4 * m > n, false)
        })
    }

    fn band_mask(&self, test: impl Fn(u64, u64) -> bool, all_axes: bool) -> Vec<bool> {
        let mut idx = vec![0; self.dim()];
        (0..self.inner.total)
            .map(|flat| {
                self.unravel(flat, &mut idx);
                let mut hits = idx.iter().enumerate().map(|(a, &j)| {
                    test(self.inner.index[a][j].unsigned_abs(), self.inner.n[a] as u64)
                });
                if all_axes {
                    hits.all(|h| h)
                } else {
                    hits.any(|h| h)
                }
            })
            .collect()
    }

    pub(crate) fn plan(&self, axis: usize, inverse: bool) -> &Arc<dyn Fft<f64>> {
        let (fwd, inv) = &self.inner.plans[axis];
        if inverse {
            inv
        } else {
            fwd
        }
    }

    /// True when both grids describe the same lattice.
    pub fn same_as(&self, other: &Grid) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner)
            || (self.inner.n == other.inner.n && self.inner.half_len == other.inner.half_len)
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.same_as(other)
    }
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("n", &self.inner.n)
            .field("half_len", &self.inner.half_len)
            .finish()
    }
}
