//! Ground state `Delta Q + Q |Q|^(4/d) = Q` by Petviashvili iteration, plus a
//! per-grid cache and the quantities derived from `|Q|_L2`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use log::{debug, info};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta};
use crate::diagnostics::{energy, grad_norm_sq, nonlinear_power};
use crate::error::{Error, Result};
use crate::spectral::{forward_in_place, inverse_in_place, ComplexField, Grid, Space};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 2000;

/// Environment variable naming the on-disk ground-state cache.
pub const CACHE_DIR_ENV: &str = "FNLS_CACHE_DIR";

#[derive(Debug, Clone)]
pub struct GroundState {
    pub dim: usize,
    /// Real, positive samples (physical space).
    pub profile: ComplexField,
    pub mass_sq: f64,
    pub grad_norm_sq: f64,
    pub energy: f64,
    /// `|Delta Q + Q |Q|^(4/d) - Q|_L2`
    pub residual: f64,
    pub iterations: usize,
}

/// Scalars written next to a cached profile.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GroundStateSidecar {
    pub mass_sq: f64,
    pub grad_norm_sq: f64,
    pub energy: f64,
    pub residual: f64,
}

impl GroundState {
    pub fn critical_mass(&self) -> f64 {
        self.mass_sq.sqrt()
    }

    pub fn sidecar(&self) -> GroundStateSidecar {
        GroundStateSidecar {
            mass_sq: self.mass_sq,
            grad_norm_sq: self.grad_norm_sq,
            energy: self.energy,
            residual: self.residual,
        }
    }

    /// Builds the record from a stored profile, recomputing every scalar.
    pub fn from_profile(profile: ComplexField) -> Self {
        let profile = profile.into_physical();
        let dim = profile.grid().dim();
        let mut hat = profile.values().to_vec();
        forward_in_place(profile.grid(), &mut hat);
        let residual = residual_norm(profile.grid(), &hat, profile.values());
        Self {
            dim,
            mass_sq: profile.norm_sq(),
            grad_norm_sq: grad_norm_sq(&profile),
            energy: energy(&profile),
            residual,
            profile,
            iterations: 0,
        }
    }

    /// Writes the profile checkpoint and a `.json` sidecar next to it.
    pub fn save(&self, path: &Path) -> Result<PathBuf> {
        save_checkpoint(path, &self.profile, CheckpointMeta { time: 0.0, s: 0.0, a: 0.0 })?;
        let side = sidecar_path(path);
        fs::write(&side, serde_json::to_string_pretty(&self.sidecar())?)?;
        Ok(side)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (profile, _) = load_checkpoint(path)?;
        Ok(Self::from_profile(profile))
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// `N(Q) = |Q|^(4/d) Q`, pointwise.
fn nonlinearity(dim: usize, q: &[Complex64], out: &mut [Complex64]) {
    for (o, v) in out.iter_mut().zip(q) {
        *o = v * nonlinear_power(v.norm_sqr(), dim);
    }
}

/// L2 norm of `-|k|^2 Q_hat + N_hat - Q_hat`.
fn residual_norm(grid: &Grid, q_hat: &[Complex64], q: &[Complex64]) -> f64 {
    let mut n_hat = vec![Complex64::new(0.0, 0.0); q.len()];
    nonlinearity(grid.dim(), q, &mut n_hat);
    forward_in_place(grid, &mut n_hat);
    let sum: f64 = q_hat
        .iter()
        .zip(&n_hat)
        .zip(grid.k_squared())
        .map(|((qh, nh), &k2)| (nh - qh * (1.0 + k2)).norm_sqr())
        .sum();
    (sum * grid.volume()).sqrt()
}

/// Petviashvili iteration from the Gaussian `exp(-|x|^2)`.
///
/// `Q_hat <- M^gamma N_hat / (1 + |k|^2)` with
/// `M = <(1 + |k|^2) Q_hat, Q_hat> / <N_hat, Q_hat>` and `gamma = (d + 4) / 4`.
/// Stops when the equation residual is at most `tol`.
pub fn solve_ground_state(dim: usize, grid: &Grid, tol: f64, max_iter: usize) -> Result<GroundState> {
    if !(1..=4).contains(&dim) {
        return Err(Error::Domain(format!("ground state dimension must be 1..=4, got {dim}")));
    }
    if grid.dim() != dim {
        return Err(Error::Contract(format!("grid is {}-d, ground state requested for d={dim}", grid.dim())));
    }
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::Domain(format!("tolerance must be positive, got {tol}")));
    }
    let gamma = (dim as f64 + 4.0) / 4.0;
    let k2 = grid.k_squared();
    let vol = grid.volume();

    let mut q = ComplexField::from_fn(grid, |x| Complex64::new((-x.iter().map(|v| v * v).sum::<f64>()).exp(), 0.0))
        .into_values();
    let mut q_hat = q.clone();
    forward_in_place(grid, &mut q_hat);
    let mut n_hat = vec![Complex64::new(0.0, 0.0); q.len()];
    let mut residual = f64::INFINITY;

    for iter in 0..max_iter {
        nonlinearity(dim, &q, &mut n_hat);
        forward_in_place(grid, &mut n_hat);

        let (mut lin, mut non, mut res) = (0.0, 0.0, 0.0);
        for ((qh, nh), &k) in q_hat.iter().zip(&n_hat).zip(k2) {
            lin += (1.0 + k) * qh.norm_sqr();
            non += (nh * qh.conj()).re;
            res += (nh - qh * (1.0 + k)).norm_sqr();
        }
        residual = (res * vol).sqrt();
        if !residual.is_finite() {
            return Err(Error::IterationFailure { iterations: iter, residual });
        }
        if lin * vol < 1e-300 || non <= 0.0 {
            return Err(Error::DegenerateFixedPoint);
        }
        if residual <= tol {
            debug!("ground state d={dim} converged in {iter} iterations, residual {residual:e}");
            let mut profile = ComplexField::new(grid, q, Space::Physical)?;
            profile.values_mut().iter_mut().for_each(|v| v.im = 0.0);
            let mut gs = GroundState::from_profile(profile);
            gs.iterations = iter;
            return Ok(gs);
        }

        let factor = (lin / non).powf(gamma);
        for ((qh, nh), &k) in q_hat.iter_mut().zip(&n_hat).zip(k2) {
            *qh = nh * (factor / (1.0 + k));
        }
        q.copy_from_slice(&q_hat);
        inverse_in_place(grid, &mut q);
        // Q is real; drop round-off in the imaginary part
        q.iter_mut().for_each(|v| v.im = 0.0);
        q_hat.copy_from_slice(&q);
        forward_in_place(grid, &mut q_hat);
    }
    Err(Error::IterationFailure { iterations: max_iter, residual })
}

/// `E(u) - 1/2 |grad u|^2 (1 - (|u|^2 / |Q|^2)^(2/d))`, nonnegative by the
/// sharp Gagliardo-Nirenberg inequality.
pub fn weinstein_gap_with(u: &ComplexField, q_mass_sq: f64) -> f64 {
    let dim = u.grid().dim() as f64;
    let ratio = u.norm_sq() / q_mass_sq;
    energy(u) - 0.5 * grad_norm_sq(u) * (1.0 - ratio.powf(2.0 / dim))
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct GridKey {
    dim: usize,
    /// Total points first so the last entry per dimension is the finest grid.
    points: usize,
    n: Vec<usize>,
    half_len_bits: Vec<u64>,
}

impl GridKey {
    fn of(grid: &Grid) -> Self {
        Self {
            dim: grid.dim(),
            points: grid.point_count(),
            n: grid.n().to_vec(),
            half_len_bits: grid.half_len().iter().map(|l| l.to_bits()).collect(),
        }
    }

}

/// Checkpoint name used for the ground state of `grid` in cache directories.
pub fn ground_state_file_name(grid: &Grid) -> String {
    let n: Vec<String> = grid.n().iter().map(|v| v.to_string()).collect();
    let l: Vec<String> = grid.half_len().iter().map(|v| format!("{v}")).collect();
    format!("q_d{}_n{}_L{}.fnls", grid.dim(), n.join("x"), l.join("x"))
}

/// Ground states keyed by grid. Entries are written once and shared.
#[derive(Debug, Default)]
pub struct GroundStateCache {
    dir: Option<PathBuf>,
    entries: RwLock<BTreeMap<GridKey, Arc<GroundState>>>,
}

impl GroundStateCache {
    /// In-memory cache only.
    pub fn new() -> Self {
        Self::default()
    }

    /// Cache that also persists profiles under `dir`.
    pub fn with_dir(dir: impl Into<PathBuf>) -> Self {
        Self { dir: Some(dir.into()), entries: RwLock::default() }
    }

    /// Uses `FNLS_CACHE_DIR` when it is set.
    pub fn from_env() -> Self {
        match std::env::var_os(CACHE_DIR_ENV) {
            Some(d) if !d.is_empty() => Self::with_dir(PathBuf::from(d)),
            _ => Self::new(),
        }
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn get(&self, grid: &Grid) -> Option<Arc<GroundState>> {
        self.entries.read().unwrap().get(&GridKey::of(grid)).cloned()
    }

    /// Returns the cached ground state for `grid`, loading it from disk or
    /// solving when needed. The flag is true on a cache hit (memory or disk).
    pub fn get_or_solve(&self, grid: &Grid, tol: f64, max_iter: usize) -> Result<(Arc<GroundState>, bool)> {
        let key = GridKey::of(grid);
        if let Some(gs) = self.entries.read().unwrap().get(&key) {
            if gs.residual <= tol {
                return Ok((gs.clone(), true));
            }
        }
        let path = self.dir.as_ref().map(|d| d.join(ground_state_file_name(grid)));
        if let Some(p) = path.as_ref().filter(|p| p.exists()) {
            match GroundState::load(p) {
                Ok(gs) if gs.residual <= tol && gs.profile.grid().same_as(grid) => {
                    info!("ground state cache hit: {}", p.display());
                    let gs = Arc::new(gs);
                    self.entries.write().unwrap().insert(key, gs.clone());
                    return Ok((gs, true));
                }
                Ok(_) => debug!("cached ground state {} does not meet tol {tol:e}", p.display()),
                Err(e) => debug!("ignoring unreadable cached ground state {}: {e}", p.display()),
            }
        }
        let gs = Arc::new(solve_ground_state(grid.dim(), grid, tol, max_iter)?);
        if let Some(p) = path {
            fs::create_dir_all(p.parent().unwrap())?;
            gs.save(&p)?;
        }
        self.entries.write().unwrap().insert(key, gs.clone());
        Ok((gs, false))
    }

    /// Inserts an externally computed ground state.
    pub fn insert(&self, gs: GroundState) -> Arc<GroundState> {
        let gs = Arc::new(gs);
        self.entries.write().unwrap().insert(GridKey::of(gs.profile.grid()), gs.clone());
        gs
    }

    /// `|Q|_L2` for dimension `dim`, from the finest cached grid.
    pub fn critical_mass(&self, dim: usize) -> Result<f64> {
        self.entries
            .read()
            .unwrap()
            .iter().rfind(|(k, _)| k.dim == dim)
            .map(|(_, gs)| gs.critical_mass())
            .ok_or_else(|| Error::MissingPrerequisite(format!("no ground state cached for d={dim}")))
    }

    /// Gap in the sharp Gagliardo-Nirenberg inequality, using the cached `|Q|`
    /// for the field's dimension (same grid when available).
    pub fn weinstein_gap(&self, u: &ComplexField) -> Result<f64> {
        let q_mass_sq = match self.get(u.grid()) {
            Some(gs) => gs.mass_sq,
            None => self.critical_mass(u.grid().dim())?.powi(2),
        };
        Ok(weinstein_gap_with(u, q_mass_sq))
    }
}
