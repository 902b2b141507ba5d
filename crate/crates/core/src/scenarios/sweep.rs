use std::io::Write;
use std::path::PathBuf;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ground_state_for, run_experiment, ExperimentSpec, InitialData, RunContext};
use crate::error::{Error, Result};
use crate::ground_state::GroundStateCache;

/// Grid of `(s, a, delta)` values; every other field comes from `base`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepAxes {
    pub s: Vec<f64>,
    pub a: Vec<f64>,
    /// Mass excess: `|u0|_L2 = |Q|_L2 + delta`.
    pub delta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    #[serde(flatten)]
    pub base: ExperimentSpec,
    pub axes: SweepAxes,
}

impl SweepSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// One spec per grid point, ordered by `(s, a, delta)`.
    pub fn expand(&self) -> Result<Vec<(f64, f64, f64, ExperimentSpec)>> {
        let ax = &self.axes;
        if ax.s.is_empty() || ax.a.is_empty() || ax.delta.is_empty() {
            return Err(Error::Contract("every sweep axis needs at least one value".into()));
        }
        let mut s_vals = ax.s.clone();
        let mut a_vals = ax.a.clone();
        let mut d_vals = ax.delta.clone();
        for v in [&mut s_vals, &mut a_vals, &mut d_vals] {
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Domain("sweep axis values must be finite".into()));
            }
            v.sort_by(f64::total_cmp);
            v.dedup();
        }
        let mut out = Vec::new();
        for &s in &s_vals {
            for &a in &a_vals {
                for &delta in &d_vals {
                    let mut spec = self.base.clone();
                    spec.name = format!("{}_s{s}_a{a}_delta{delta}", self.base.name);
                    spec.sim.s = s;
                    spec.sim.a = a;
                    spec.initial = InitialData::ScaledSoliton { delta: Some(delta), factor: None };
                    out.push((s, a, delta, spec));
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub s: f64,
    pub a: f64,
    pub delta: f64,
    /// Run outcome tag, or `error`.
    pub outcome: String,
    pub t_star: Option<f64>,
    pub alpha_fit: Option<f64>,
    pub loglog_gain: Option<f64>,
    pub max_identity_residual: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    pub artifacts: Vec<PathBuf>,
}

pub const SWEEP_CSV_HEADER: [&str; 8] =
    ["s", "a", "delta", "outcome", "t_star", "alpha_fit", "loglog_gain", "max_identity_residual"];

/// Runs every grid point on a pool of `workers` threads. Rows come back in
/// `(s, a, delta)` order whatever the scheduling.
pub fn run_sweep(
    spec: &SweepSpec,
    workers: usize,
    cache: &GroundStateCache,
    out_dir: Option<PathBuf>,
) -> Result<SweepTable> {
    if workers == 0 {
        return Err(Error::Contract("workers must be >= 1".into()));
    }
    let points = spec.expand()?;
    // Solve once up front so workers only read the cache.
    ground_state_for(&spec.base, cache)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Contract(format!("thread pool: {e}")))?;
    info!("sweep {}: {} runs on {workers} workers", spec.base.name, points.len());
    let ctx = RunContext { cache, out_dir: out_dir.clone() };
    let results: Vec<_> = pool.install(|| {
        points.par_iter().map(|(s, a, d, p)| (*s, *a, *d, run_experiment(p, &ctx))).collect()
    });
    let mut rows = Vec::with_capacity(results.len());
    let mut artifacts = Vec::new();
    for (s, a, delta, r) in results {
        artifacts.extend(r.artifacts.iter().cloned());
        rows.push(SweepRow {
            s,
            a,
            delta,
            outcome: match (&r.error, r.outcome) {
                (None, Some(o)) => o.tag().to_string(),
                _ => "error".to_string(),
            },
            t_star: r.blowup.as_ref().map(|b| b.t_star),
            alpha_fit: r.blowup.as_ref().map(|b| b.alpha_fit),
            loglog_gain: r.blowup.as_ref().and_then(|b| b.loglog_gain),
            max_identity_residual: r.residuals.map(|x| x.max()),
            error: r.error,
        });
    }
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(&dir)?;
        let path = dir.join(format!("{}_sweep.csv", spec.base.name));
        write_sweep_csv(std::fs::File::create(&path)?, &rows)?;
        artifacts.push(path);
    }
    Ok(SweepTable { rows, artifacts })
}

pub fn write_sweep_csv<W: Write>(inner: W, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(inner);
    w.write_record(SWEEP_CSV_HEADER)?;
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.10e}")).unwrap_or_default();
    for r in rows {
        w.write_record([
            format!("{}", r.s),
            format!("{}", r.a),
            format!("{}", r.delta),
            r.outcome.clone(),
            opt(r.t_star),
            opt(r.alpha_fit),
            opt(r.loglog_gain),
            opt(r.max_identity_residual),
        ])?;
    }
    w.flush()?;
    Ok(())
}
