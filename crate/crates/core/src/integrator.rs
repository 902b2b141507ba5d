//! Strang splitting between the exact dissipative linear flow and the exact
//! pointwise nonlinear phase rotation.

use std::path::PathBuf;

use log::{debug, info, warn};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{checkpoint_file_name, save_checkpoint, CheckpointMeta};
use crate::diagnostics::{compute_record, nonlinear_power, DiagnosticsContext, DiagnosticsSink};
use crate::error::{Error, Result};
use crate::spectral::{forward_in_place, fractional_symbol, inverse_in_place, ComplexField, Grid, Space};

/// Default spectral-tail level above which a run counts as under-resolved.
pub const DEFAULT_TAIL_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DtRule {
    Fixed,
    Adaptive,
}

fn yes() -> bool {
    true
}

fn default_tail() -> f64 {
    DEFAULT_TAIL_THRESHOLD
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    pub dim: usize,
    pub s: f64,
    pub a: f64,
    pub dt0: f64,
    pub dt_rule: DtRule,
    pub cfl_c: f64,
    pub t_end: f64,
    /// Stop once `|grad u|_L2` reaches this value.
    pub grad_stop: f64,
    pub sample_every: usize,
    /// 2/3-rule truncation after each nonlinear stage.
    #[serde(default = "yes")]
    pub dealias: bool,
    #[serde(default = "default_tail")]
    pub tail_threshold: f64,
    /// Test hook: `false` drops the nonlinear stage.
    #[serde(default = "yes")]
    pub nonlinear: bool,
}

impl SimParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Domain(msg));
        if !(1..=4).contains(&self.dim) {
            return bad(format!("dimension must be 1..=4, got {}", self.dim));
        }
        if !(self.a.is_finite() && self.a >= 0.0) {
            return bad(format!("a must be >= 0, got {}", self.a));
        }
        if !(self.s.is_finite() && self.s >= 0.0) {
            return bad(format!("s must be >= 0, got {}", self.s));
        }
        if !(self.dt0.is_finite() && self.dt0 > 0.0) {
            return bad(format!("dt0 must be > 0, got {}", self.dt0));
        }
        if !(self.grad_stop > 0.0) {
            return bad(format!("grad_stop must be > 0, got {}", self.grad_stop));
        }
        if !(self.t_end.is_finite() && self.t_end >= 0.0) {
            return bad(format!("t_end must be finite and >= 0, got {}", self.t_end));
        }
        if self.sample_every == 0 {
            return bad("sample_every must be >= 1".into());
        }
        if self.dt_rule == DtRule::Adaptive && !(self.cfl_c.is_finite() && self.cfl_c > 0.0) {
            return bad(format!("cfl_c must be > 0 for the adaptive rule, got {}", self.cfl_c));
        }
        if !(self.tail_threshold > 0.0) {
            return bad(format!("tail_threshold must be > 0, got {}", self.tail_threshold));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct StepState {
    pub field: ComplexField,
    pub t: f64,
    pub dt_current: f64,
    pub steps_taken: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Completed,
    BlowupSuspected,
    UnderResolved,
}

impl Outcome {
    pub fn tag(self) -> &'static str {
        match self {
            Outcome::Completed => "completed",
            Outcome::BlowupSuspected => "blowup-suspected",
            Outcome::UnderResolved => "under-resolved",
        }
    }
}

/// `u -> u exp(i |u|^(4/d) dt)`, the exact flow of `i u_t = -|u|^(4/d) u`.
pub fn nonlinear_phase_step(f: &ComplexField, dt: f64, dim: usize) -> Result<ComplexField> {
    if f.space() != Space::Physical {
        return Err(Error::Contract("nonlinear step needs a physical-space field".into()));
    }
    let mut g = f.clone();
    rotate_phases(g.values_mut(), dt, dim);
    Ok(g)
}

fn rotate_phases(values: &mut [Complex64], dt: f64, dim: usize) {
    for v in values {
        let m = v.norm_sqr();
        if m > 0.0 {
            *v *= Complex64::from_polar(1.0, nonlinear_power(m, dim) * dt);
        }
    }
}

/// `min(dt0, cfl_c / (1 + |grad f|^2))`.
pub fn adaptive_dt(f: &ComplexField, p: &SimParams) -> f64 {
    dt_from_grad(crate::diagnostics::grad_norm_sq(f), p)
}

fn dt_from_grad(grad_sq: f64, p: &SimParams) -> f64 {
    p.dt0.min(p.cfl_c / (1.0 + grad_sq))
}

/// Reusable workspace for stepping one grid with fixed physical parameters.
pub struct Stepper {
    grid: Grid,
    dim: usize,
    dealias: bool,
    nonlinear: bool,
    /// `a |k|^(2s)`
    damping: Vec<f64>,
    half: Vec<Complex64>,
    half_dt: f64,
    work: Vec<Complex64>,
}

impl Stepper {
    pub fn new(grid: &Grid, p: &SimParams) -> Result<Self> {
        p.validate()?;
        if grid.dim() != p.dim {
            return Err(Error::Contract(format!("grid is {}-d, parameters say d={}", grid.dim(), p.dim)));
        }
        let damping = grid.k_squared().iter().map(|&k2| p.a * fractional_symbol(k2, p.s)).collect();
        Ok(Self {
            grid: grid.clone(),
            dim: p.dim,
            dealias: p.dealias,
            nonlinear: p.nonlinear,
            damping,
            half: vec![Complex64::new(0.0, 0.0); grid.point_count()],
            half_dt: f64::NAN,
            work: vec![Complex64::new(0.0, 0.0); grid.point_count()],
        })
    }

    fn set_half_step(&mut self, h: f64) {
        if h == self.half_dt {
            return;
        }
        for ((m, &k2), &d) in self.half.iter_mut().zip(self.grid.k_squared()).zip(&self.damping) {
            *m = Complex64::from_polar((-d * h).exp(), -k2 * h);
        }
        self.half_dt = h;
    }

    /// One Strang step on spectral coefficients, in place.
    pub fn step(&mut self, hat: &mut [Complex64], dt: f64) {
        self.set_half_step(0.5 * dt);
        hat.iter_mut().zip(&self.half).for_each(|(v, m)| *v *= m);
        if self.nonlinear {
            self.work.copy_from_slice(hat);
            inverse_in_place(&self.grid, &mut self.work);
            rotate_phases(&mut self.work, dt, self.dim);
            forward_in_place(&self.grid, &mut self.work);
            hat.copy_from_slice(&self.work);
            if self.dealias {
                for (v, &keep) in hat.iter_mut().zip(self.grid.dealias_mask()) {
                    if !keep {
                        *v = Complex64::new(0.0, 0.0);
                    }
                }
            }
        }
        hat.iter_mut().zip(&self.half).for_each(|(v, m)| *v *= m);
    }
}

/// `|grad u|^2`, tail fraction, and whether every coefficient is finite.
fn scan(grid: &Grid, hat: &[Complex64]) -> (f64, f64, bool) {
    let (mut grad, mut total, mut tail) = (0.0, 0.0, 0.0);
    for ((v, &k2), &in_tail) in hat.iter().zip(grid.k_squared()).zip(grid.tail_mask()) {
        let p = v.norm_sqr();
        grad += k2 * p;
        total += p;
        if in_tail {
            tail += p;
        }
    }
    let finite = grad.is_finite() && total.is_finite();
    (grad * grid.volume(), if total > 0.0 { tail / total } else { 0.0 }, finite)
}

/// One Strang step; `dt_current` of the input sets the step size.
pub fn strang_step(state: &StepState, p: &SimParams) -> Result<StepState> {
    if !(state.dt_current > 0.0) {
        return Err(Error::Contract(format!("step size must be > 0, got {}", state.dt_current)));
    }
    let mut stepper = Stepper::new(state.field.grid(), p)?;
    let space = state.field.space();
    let mut hat = state.field.to_spectral();
    stepper.step(hat.values_mut(), state.dt_current);
    let t = state.t + state.dt_current;
    let (_, _, finite) = scan(hat.grid(), hat.values());
    if !finite {
        return Err(Error::NumericOverflow { t });
    }
    Ok(StepState {
        field: if space == Space::Physical { hat.into_physical() } else { hat },
        t,
        dt_current: state.dt_current,
        steps_taken: state.steps_taken + 1,
    })
}

#[derive(Debug, Clone)]
pub struct CheckpointPolicy {
    pub dir: PathBuf,
    pub tag: String,
    /// Periodic checkpoint cadence in steps; the final state is always written.
    pub every_steps: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct EvolveOptions {
    /// `|grad Q|_L2`, for the `lambda` column.
    pub grad_norm_q: f64,
    pub checkpoints: Option<CheckpointPolicy>,
}

impl EvolveOptions {
    pub fn new(grad_norm_q: f64) -> Self {
        Self { grad_norm_q, checkpoints: None }
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub outcome: Outcome,
    /// Final state, physical space.
    pub state: StepState,
    pub samples: usize,
    pub checkpoints: Vec<PathBuf>,
}

fn write_checkpoint_file(
    policy: &CheckpointPolicy,
    grid: &Grid,
    hat: &[Complex64],
    t: f64,
    p: &SimParams,
) -> Result<PathBuf> {
    std::fs::create_dir_all(&policy.dir)?;
    let path = policy.dir.join(checkpoint_file_name(&policy.tag, t));
    let field = ComplexField::new(grid, hat.to_vec(), Space::Spectral)?;
    save_checkpoint(&path, &field, CheckpointMeta { time: t, s: p.s, a: p.a })?;
    Ok(path)
}

/// Integrates from `u0` until `t_end`, blow-up suspicion, or loss of
/// resolution, emitting a record every `sample_every` steps plus the first
/// and last states.
pub fn evolve(
    u0: &ComplexField,
    p: &SimParams,
    sink: &mut dyn DiagnosticsSink,
    opts: &EvolveOptions,
) -> Result<RunResult> {
    let grid = u0.grid().clone();
    let mut stepper = Stepper::new(&grid, p)?;
    let ctx = DiagnosticsContext { s: p.s, a: p.a, grad_norm_q: opts.grad_norm_q };
    let mut hat = u0.to_spectral().into_values();
    let mut prev = opts.checkpoints.as_ref().map(|_| hat.clone());
    let mut checkpoints = Vec::new();

    let fixed_steps = match p.dt_rule {
        DtRule::Fixed => Some(((p.t_end / p.dt0) - 1e-9).ceil().max(0.0) as usize),
        DtRule::Adaptive => None,
    };
    let fixed_dt = fixed_steps.filter(|&n| n > 0).map(|n| p.t_end / n as f64).unwrap_or(p.dt0);

    let emit = |hat: &[Complex64], t: f64, sink: &mut dyn DiagnosticsSink| -> Result<()> {
        let f = ComplexField::new(&grid, hat.to_vec(), Space::Spectral)?;
        sink.record(&compute_record(&f, t, &ctx))
    };

    let mut t = 0.0;
    let mut steps = 0usize;
    let mut dt = fixed_dt;
    let mut samples = 1;
    let mut last_emitted = 0usize;
    let mut last_checkpoint = usize::MAX;
    emit(&hat, t, sink)?;

    let outcome = loop {
        let (grad_sq, tail, finite) = scan(&grid, &hat);
        if !finite {
            if let (Some(policy), Some(good)) = (&opts.checkpoints, &prev) {
                let t_good = t - dt;
                let path = write_checkpoint_file(policy, &grid, good, t_good, p)?;
                warn!("non-finite state at t = {t}; last good state written to {}", path.display());
            }
            return Err(Error::NumericOverflow { t });
        }
        if tail > p.tail_threshold {
            info!("tail fraction {tail:e} above {:e} at t = {t}", p.tail_threshold);
            break Outcome::UnderResolved;
        }
        if grad_sq.sqrt() >= p.grad_stop {
            info!("|grad u| reached {:e} at t = {t}", grad_sq.sqrt());
            break Outcome::BlowupSuspected;
        }
        let done = match fixed_steps {
            Some(n) => steps >= n,
            None => p.t_end - t <= 1e-12 * p.t_end.max(1.0),
        };
        if done {
            break Outcome::Completed;
        }

        dt = match fixed_steps {
            Some(_) => fixed_dt,
            None => dt_from_grad(grad_sq, p).min(p.t_end - t),
        };
        if let Some(buf) = prev.as_mut() {
            buf.copy_from_slice(&hat);
        }
        stepper.step(&mut hat, dt);
        steps += 1;
        t = match fixed_steps {
            Some(_) => steps as f64 * fixed_dt,
            None => t + dt,
        };

        if steps.is_multiple_of(p.sample_every) {
            emit(&hat, t, sink)?;
            samples += 1;
            last_emitted = steps;
        }
        if let Some(policy) = &opts.checkpoints {
            if policy.every_steps.is_some_and(|every| every > 0 && steps.is_multiple_of(every)) {
                checkpoints.push(write_checkpoint_file(policy, &grid, &hat, t, p)?);
                last_checkpoint = steps;
            }
        }
        if steps.is_multiple_of(1000) {
            debug!("step {steps}: t = {t:.6}, dt = {dt:e}, |grad u|^2 = {grad_sq:e}, tail = {tail:e}");
        }
    };

    if last_emitted != steps {
        emit(&hat, t, sink)?;
        samples += 1;
    }
    if let Some(policy) = &opts.checkpoints {
        if last_checkpoint != steps {
            checkpoints.push(write_checkpoint_file(policy, &grid, &hat, t, p)?);
        }
    }
    let field = ComplexField::new(&grid, hat, Space::Spectral)?.into_physical();
    Ok(RunResult {
        outcome,
        state: StepState { field, t, dt_current: dt, steps_taken: steps },
        samples,
        checkpoints,
    })
}
