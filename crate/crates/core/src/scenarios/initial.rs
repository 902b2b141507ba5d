use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ground_state::GroundState;
use crate::spectral::{sample_scaled, tail_fraction, ComplexField, Grid};

/// Initial-data families. In JSON: `{"kind": "...", "params": {...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum InitialData {
    Soliton,
    /// `c Q`, with either `delta` (so that `|u0| = |Q| + delta`) or a direct
    /// amplitude `factor`.
    ScaledSoliton {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        delta: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        factor: Option<f64>,
    },
    /// `S(t0, x) = |t0|^(-d/2) Q(x/t0) exp(i|x|^2/(4 t0) - i/t0)`, `t0 < 0`: the
    /// pseudo-conformal image of `exp(i t) Q`, focusing at `t = 0`.
    PseudoConformal { t0: f64 },
    Gaussian { amplitude: f64, width: f64 },
    /// `exp(i v.x/2) Q`
    BoostedSoliton { velocity: Vec<f64> },
}

impl InitialData {
    pub fn needs_ground_state(&self) -> bool {
        !matches!(self, InitialData::Gaussian { .. })
    }

    pub fn label(&self) -> &'static str {
        match self {
            InitialData::Soliton => "soliton",
            InitialData::ScaledSoliton { .. } => "scaled_soliton",
            InitialData::PseudoConformal { .. } => "pseudo_conformal",
            InitialData::Gaussian { .. } => "gaussian",
            InitialData::BoostedSoliton { .. } => "boosted_soliton",
        }
    }
}

#[derive(Debug, Clone)]
pub struct InitialField {
    pub field: ComplexField,
    /// `|u0|_L2` the family asks for, when it fixes one.
    pub requested_norm: Option<f64>,
    pub actual_norm: f64,
}

impl InitialField {
    pub fn norm_deviation(&self) -> Option<f64> {
        self.requested_norm.map(|r| (self.actual_norm - r).abs() / r)
    }
}

/// Tail level above which sampled pseudo-conformal data counts as unresolved.
pub const DATA_TAIL_LIMIT: f64 = 1e-6;

/// Samples `spec` on `grid`. `q` may live on a different grid of the same
/// dimension and box; it is carried over by trigonometric interpolation.
pub fn make_initial_data(spec: &InitialData, grid: &Grid, q: Option<&GroundState>) -> Result<InitialField> {
    let dim = grid.dim();
    let q_on_grid = |scale: f64| -> Result<(ComplexField, f64)> {
        let gs = q.ok_or_else(|| {
            Error::MissingPrerequisite(format!("{} data needs the d={dim} ground state", spec.label()))
        })?;
        if gs.dim != dim {
            return Err(Error::Contract(format!("ground state is {}-d, grid is {dim}-d", gs.dim)));
        }
        let field = if scale == 1.0 && gs.profile.grid().same_as(grid) {
            gs.profile.clone()
        } else {
            sample_scaled(&gs.profile, grid, scale)?
        };
        Ok((field, gs.mass_sq.sqrt()))
    };

    let (field, requested_norm) = match spec {
        InitialData::Soliton => {
            let (f, qn) = q_on_grid(1.0)?;
            (f, Some(qn))
        }
        InitialData::ScaledSoliton { delta, factor } => {
            let (f, qn) = q_on_grid(1.0)?;
            let c = match (delta, factor) {
                (Some(d), None) => (qn + d) / qn,
                (None, Some(c)) => *c,
                _ => {
                    return Err(Error::Contract("scaled_soliton needs exactly one of delta, factor".into()));
                }
            };
            if !(c.is_finite() && c >= 0.0) {
                return Err(Error::Domain(format!("scaled_soliton amplitude must be >= 0, got {c}")));
            }
            (f.scaled(Complex64::new(c, 0.0)), Some(c * qn))
        }
        InitialData::PseudoConformal { t0 } => {
            let t0 = *t0;
            if t0 == 0.0 {
                return Err(Error::Singularity("pseudo-conformal data at t0 = 0 is a Dirac mass".into()));
            }
            if !(t0.is_finite() && t0 < 0.0) {
                return Err(Error::Domain(format!("pseudo-conformal data needs t0 < 0, got {t0}")));
            }
            let (f, qn) = q_on_grid(-t0)?;
            let amp = (-t0).powf(-(dim as f64) / 2.0);
            let coords: Vec<Vec<f64>> = (0..dim).map(|a| grid.coordinates(a)).collect();
            let mut idx = vec![0; dim];
            let mut g = f;
            for (flat, v) in g.values_mut().iter_mut().enumerate() {
                grid.unravel(flat, &mut idx);
                let r2: f64 = idx.iter().enumerate().map(|(a, &j)| coords[a][j].powi(2)).sum();
                *v *= Complex64::from_polar(amp, r2 / (4.0 * t0) - 1.0 / t0);
            }
            let tail = tail_fraction(&g);
            if tail > DATA_TAIL_LIMIT {
                return Err(Error::Resolution(format!(
                    "S(t0 = {t0}) is too narrow for this grid (tail fraction {tail:e})"
                )));
            }
            (g, Some(qn))
        }
        InitialData::Gaussian { amplitude, width } => {
            if !(width.is_finite() && *width > 0.0) {
                return Err(Error::Domain(format!("gaussian width must be > 0, got {width}")));
            }
            let (amp, w) = (*amplitude, *width);
            let f = ComplexField::from_fn(grid, |x| {
                let r2: f64 = x.iter().map(|v| v * v).sum();
                Complex64::new(amp * (-r2 / (2.0 * w * w)).exp(), 0.0)
            });
            (f, None)
        }
        InitialData::BoostedSoliton { velocity } => {
            if velocity.len() != dim {
                return Err(Error::Contract(format!(
                    "velocity has {} components for a {dim}-d grid",
                    velocity.len()
                )));
            }
            let (f, qn) = q_on_grid(1.0)?;
            let coords: Vec<Vec<f64>> = (0..dim).map(|a| grid.coordinates(a)).collect();
            let mut idx = vec![0; dim];
            let mut g = f;
            for (flat, v) in g.values_mut().iter_mut().enumerate() {
                grid.unravel(flat, &mut idx);
                let phase: f64 = idx.iter().enumerate().map(|(a, &j)| 0.5 * velocity[a] * coords[a][j]).sum();
                *v *= Complex64::from_polar(1.0, phase);
            }
            (g, Some(qn))
        }
    };
    let actual_norm = field.norm();
    Ok(InitialField { field, requested_norm, actual_norm })
}
