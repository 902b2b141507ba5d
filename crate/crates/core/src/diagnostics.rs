//! Conserved and dissipated functionals, and the three balance-law residuals.

use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{fractional_symbol, ComplexField, Space};

/// `|u|^(4/d)` from `|u|^2`. The quintic and cubic cases skip `powf`.
#[inline]
pub fn nonlinear_power(mod_sq: f64, dim: usize) -> f64 {
    match dim {
        1 => mod_sq * mod_sq,
        2 => mod_sq,
        4 => mod_sq.sqrt(),
        _ => mod_sq.powf(2.0 / dim as f64),
    }
}

/// Reference path used to check the specialized ones.
pub fn nonlinear_power_general(mod_sq: f64, dim: usize) -> f64 {
    mod_sq.powf(2.0 / dim as f64)
}

/// Coefficient `d / (4 + 2d)` of the potential term in the energy.
pub fn potential_weight(dim: usize) -> f64 {
    dim as f64 / (4.0 + 2.0 * dim as f64)
}

pub fn mass_sq(u: &ComplexField) -> f64 {
    u.norm_sq()
}

pub fn grad_norm_sq(u: &ComplexField) -> f64 {
    let hat = u.to_spectral();
    let k2 = hat.grid().k_squared();
    hat.values().iter().zip(k2).map(|(v, &k)| k * v.norm_sqr()).sum::<f64>() * hat.grid().volume()
}

/// `int |u|^(4/d + 2)`.
pub fn potential(u: &ComplexField) -> f64 {
    let phys = u.to_physical();
    let dim = phys.grid().dim();
    phys.values()
        .iter()
        .map(|v| {
            let m = v.norm_sqr();
            m * nonlinear_power(m, dim)
        })
        .sum::<f64>()
        * phys.grid().cell_volume()
}

/// `E(u) = 1/2 |grad u|^2 - d/(4+2d) int |u|^(4/d+2)`.
pub fn energy(u: &ComplexField) -> f64 {
    0.5 * grad_norm_sq(u) - potential_weight(u.grid().dim()) * potential(u)
}

/// `Im int grad u conj(u)`, one entry per axis.
pub fn momentum(u: &ComplexField) -> Vec<f64> {
    let hat = u.to_spectral();
    axis_moments(&hat, |_| 1.0)
}

/// `vol * sum_k k_axis w(|k|^2) |u_hat|^2` for every axis.
fn axis_moments(hat: &ComplexField, weight: impl Fn(f64) -> f64) -> Vec<f64> {
    let grid = hat.grid();
    let dim = grid.dim();
    let mut out = vec![0.0; dim];
    let mut idx = vec![0; dim];
    for (flat, (v, &k2)) in hat.values().iter().zip(grid.k_squared()).enumerate() {
        let p = v.norm_sqr() * weight(k2);
        if p == 0.0 {
            continue;
        }
        grid.unravel(flat, &mut idx);
        for (axis, o) in out.iter_mut().enumerate() {
            *o += grid.odd_wavenumber(axis, idx[axis]) * p;
        }
    }
    out.iter_mut().for_each(|o| *o *= grid.volume());
    out
}

/// One time sample of every monitored functional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub mass_sq: f64,
    pub energy: f64,
    pub momentum: Vec<f64>,
    pub grad_norm_sq: f64,
    /// `a |(-Delta)^(s/2) u|^2`
    pub diss_mass: f64,
    /// `a |(-Delta)^((s+1)/2) u|^2`
    pub diss_energy_1: f64,
    /// `a Re int (-Delta)^s u |u|^(4/d) conj(u)`
    pub diss_energy_2: f64,
    /// `a Im int (-Delta)^s u d_j conj(u)`, per axis
    pub diss_momentum: Vec<f64>,
    pub lambda: f64,
    pub tail_fraction: f64,
}

/// Physical parameters needed to evaluate a record.
#[derive(Debug, Clone, Copy)]
pub struct DiagnosticsContext {
    pub s: f64,
    pub a: f64,
    /// `|grad Q|_L2` for the grid dimension, used for `lambda`.
    pub grad_norm_q: f64,
}

pub fn compute_record(u: &ComplexField, t: f64, ctx: &DiagnosticsContext) -> DiagnosticsRecord {
    let (hat, phys) = match u.space() {
        Space::Spectral => (u.clone(), u.to_physical()),
        Space::Physical => (u.to_spectral(), u.clone()),
    };
    let grid = hat.grid().clone();
    let dim = grid.dim();
    let vol = grid.volume();
    let k2 = grid.k_squared();
    let tail = grid.tail_mask();

    let (mut mass, mut grad, mut dm, mut de1, mut tail_sum) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for ((v, &k), &in_tail) in hat.values().iter().zip(k2).zip(tail) {
        let p = v.norm_sqr();
        let sym = fractional_symbol(k, ctx.s);
        mass += p;
        grad += k * p;
        dm += sym * p;
        de1 += k * sym * p;
        if in_tail {
            tail_sum += p;
        }
    }
    let tail_fraction = if mass > 0.0 { tail_sum / mass } else { 0.0 };
    let mass_sq = mass * vol;
    let grad_norm_sq = grad * vol;

    let pot = potential(&phys);
    let energy = 0.5 * grad_norm_sq - potential_weight(dim) * pot;
    let momentum = axis_moments(&hat, |_| 1.0);

    let (diss_energy_2, diss_momentum) = if ctx.a == 0.0 {
        (0.0, vec![0.0; dim])
    } else {
        let mut w: Vec<Complex64> =
            hat.values().iter().zip(k2).map(|(v, &k)| v * fractional_symbol(k, ctx.s)).collect();
        crate::spectral::inverse_in_place(&grid, &mut w);
        let e2: f64 = w
            .iter()
            .zip(phys.values())
            .map(|(wv, uv)| {
                let m = uv.norm_sqr();
                (wv * uv.conj()).re * nonlinear_power(m, dim)
            })
            .sum::<f64>()
            * grid.cell_volume();
        let mom = axis_moments(&hat, |k| -ctx.a * fractional_symbol(k, ctx.s));
        (ctx.a * e2, mom)
    };

    DiagnosticsRecord {
        t,
        mass_sq,
        energy,
        momentum,
        grad_norm_sq,
        diss_mass: ctx.a * dm * vol,
        diss_energy_1: ctx.a * de1 * vol,
        diss_energy_2,
        diss_momentum,
        lambda: if grad_norm_sq > 0.0 { ctx.grad_norm_q / grad_norm_sq.sqrt() } else { f64::INFINITY },
        tail_fraction,
    }
}

fn check_trace(trace: &[DiagnosticsRecord]) -> Result<()> {
    if trace.len() < 2 {
        return Err(Error::Contract(format!("identity check needs >= 2 records, got {}", trace.len())));
    }
    if let Some(w) = trace.windows(2).find(|w| !(w[1].t > w[0].t)) {
        return Err(Error::Contract(format!("trace times not increasing at t = {}", w[1].t)));
    }
    Ok(())
}

/// Running trapezoid integral of `f` over the trace, starting at zero.
fn cumulative_trapezoid(trace: &[DiagnosticsRecord], f: impl Fn(&DiagnosticsRecord) -> f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(trace.len());
    let mut acc = 0.0;
    out.push(0.0);
    for w in trace.windows(2) {
        acc += 0.5 * (w[1].t - w[0].t) * (f(&w[0]) + f(&w[1]));
        out.push(acc);
    }
    out
}

/// `max_t |m(t) + 2 int_0^t diss_mass - m(0)| / m(0)`.
pub fn mass_identity_residual(trace: &[DiagnosticsRecord]) -> Result<f64> {
    check_trace(trace)?;
    let m0 = trace[0].mass_sq;
    let norm = if m0 > 0.0 { m0 } else { 1.0 };
    let lost = cumulative_trapezoid(trace, |r| r.diss_mass);
    Ok(trace
        .iter()
        .zip(&lost)
        .map(|(r, l)| (r.mass_sq + 2.0 * l - m0).abs() / norm)
        .fold(0.0, f64::max))
}

/// `max_t |E(t) - E(0) - int_0^t (diss_e2 - diss_e1)| / max(|E(0)|, 1e-12)`.
pub fn energy_identity_residual(trace: &[DiagnosticsRecord]) -> Result<f64> {
    check_trace(trace)?;
    let e0 = trace[0].energy;
    let norm = e0.abs().max(1e-12);
    let change = cumulative_trapezoid(trace, |r| r.diss_energy_2 - r.diss_energy_1);
    Ok(trace
        .iter()
        .zip(&change)
        .map(|(r, c)| (r.energy - e0 - c).abs() / norm)
        .fold(0.0, f64::max))
}

/// Componentwise `P(t) - P(0) - 2 int_0^t diss_momentum`, relative to
/// `max(|P(0)|_inf, sqrt(m(0) |grad u(0)|^2))`, the natural momentum scale.
pub fn momentum_identity_residual(trace: &[DiagnosticsRecord]) -> Result<f64> {
    check_trace(trace)?;
    let first = &trace[0];
    let p_max = first.momentum.iter().fold(0.0f64, |m, p| m.max(p.abs()));
    let norm = p_max.max((first.mass_sq * first.grad_norm_sq).sqrt()).max(1e-300);
    let mut worst = 0.0f64;
    for axis in 0..first.momentum.len() {
        let gain = cumulative_trapezoid(trace, |r| r.diss_momentum[axis]);
        for (r, g) in trace.iter().zip(&gain) {
            worst = worst.max((r.momentum[axis] - first.momentum[axis] - 2.0 * g).abs() / norm);
        }
    }
    Ok(worst)
}

/// `max_t |q(t) - q(0)| / |q(0)|` divided by the trace duration.
pub fn relative_drift_rate(trace: &[DiagnosticsRecord], q: impl Fn(&DiagnosticsRecord) -> f64) -> Result<f64> {
    check_trace(trace)?;
    let q0 = q(&trace[0]);
    let norm = if q0 != 0.0 { q0.abs() } else { 1.0 };
    let span = trace[trace.len() - 1].t - trace[0].t;
    Ok(trace.iter().map(|r| (q(r) - q0).abs() / norm).fold(0.0, f64::max) / span)
}

/// Receives records from one producer, in time order.
pub trait DiagnosticsSink {
    fn record(&mut self, r: &DiagnosticsRecord) -> Result<()>;
}

impl DiagnosticsSink for Vec<DiagnosticsRecord> {
    fn record(&mut self, r: &DiagnosticsRecord) -> Result<()> {
        self.push(r.clone());
        Ok(())
    }
}

/// Discards everything.
pub struct NullSink;

impl DiagnosticsSink for NullSink {
    fn record(&mut self, _: &DiagnosticsRecord) -> Result<()> {
        Ok(())
    }
}

const AXIS_NAMES: [&str; 4] = ["x", "y", "z", "w"];

pub fn csv_header(dim: usize) -> Vec<String> {
    let mut h: Vec<String> = ["t", "mass_sq", "energy", "grad_norm_sq", "lambda"].map(String::from).to_vec();
    h.extend(AXIS_NAMES[..dim].iter().map(|a| format!("p{a}")));
    h.extend(["diss_mass", "diss_e1", "diss_e2"].map(String::from));
    h.extend(AXIS_NAMES[..dim].iter().map(|a| format!("diss_p{a}")));
    h.push("tail_fraction".into());
    h
}

fn csv_row(r: &DiagnosticsRecord) -> Vec<String> {
    let mut vals = vec![r.t, r.mass_sq, r.energy, r.grad_norm_sq, r.lambda];
    vals.extend(&r.momentum);
    vals.extend([r.diss_mass, r.diss_energy_1, r.diss_energy_2]);
    vals.extend(&r.diss_momentum);
    vals.push(r.tail_fraction);
    vals.iter().map(|v| format!("{v:.16e}")).collect()
}

/// Streams records as CSV rows with 17 significant digits.
pub struct CsvSink<W: Write> {
    writer: csv::Writer<W>,
    dim: usize,
}

impl<W: Write> CsvSink<W> {
    pub fn new(inner: W, dim: usize) -> Result<Self> {
        if dim == 0 || dim > AXIS_NAMES.len() {
            return Err(Error::Domain(format!("no CSV layout for dimension {dim}")));
        }
        let mut writer = csv::Writer::from_writer(inner);
        writer.write_record(csv_header(dim))?;
        Ok(Self { writer, dim })
    }

    pub fn into_inner(self) -> Result<W> {
        self.writer.into_inner().map_err(|e| Error::Io(e.into_error()))
    }
}

impl<W: Write> DiagnosticsSink for CsvSink<W> {
    fn record(&mut self, r: &DiagnosticsRecord) -> Result<()> {
        if r.momentum.len() != self.dim {
            return Err(Error::Contract(format!(
                "record has {} momentum components, sink expects {}",
                r.momentum.len(),
                self.dim
            )));
        }
        self.writer.write_record(csv_row(r))?;
        self.writer.flush()?;
        Ok(())
    }
}

/// Writes a whole trace as CSV.
pub fn write_csv<W: Write>(inner: W, dim: usize, trace: &[DiagnosticsRecord]) -> Result<()> {
    let mut sink = CsvSink::new(inner, dim)?;
    for r in trace {
        sink.record(r)?;
    }
    sink.into_inner()?.flush()?;
    Ok(())
}
