//! Named desk-scale experiments.

use super::{Expectation, ExperimentSpec, InitialData, SweepAxes, SweepSpec};
use crate::blowup::DEFAULT_GROWTH_FACTOR;
use crate::integrator::{DtRule, Outcome, SimParams, DEFAULT_TAIL_THRESHOLD};

fn sim(dim: usize, s: f64, a: f64, dt0: f64, dt_rule: DtRule, t_end: f64) -> SimParams {
    SimParams {
        dim,
        s,
        a,
        dt0,
        dt_rule,
        cfl_c: 0.01,
        t_end,
        grad_stop: 1e12,
        sample_every: 1,
        dealias: true,
        tail_threshold: DEFAULT_TAIL_THRESHOLD,
        nonlinear: true,
    }
}

fn spec(name: &str, n: usize, box_half: f64, initial: InitialData, sim: SimParams) -> ExperimentSpec {
    ExperimentSpec {
        name: name.into(),
        n,
        box_half,
        initial,
        sim,
        expectations: Vec::new(),
        ground_state_n: None,
        grad_stop_relative: None,
        growth_factor: DEFAULT_GROWTH_FACTOR,
    }
}

/// `u0 = Q`, `a = 0`: the exact solution `exp(i t) Q`.
pub fn soliton_conservative() -> ExperimentSpec {
    let mut e = spec(
        "soliton-conservative",
        2048,
        16.0,
        InitialData::Soliton,
        sim(1, 0.5, 0.0, 1e-4, DtRule::Fixed, 1.0),
    );
    e.sim.sample_every = 100;
    e.expectations = vec![
        Expectation::Outcome { is: Outcome::Completed },
        Expectation::MassDrift { max: 1e-10 },
        Expectation::EnergyDrift { max: 1e-8 },
        Expectation::ShapeError { max: 1e-6 },
    ];
    e
}

/// Step controls for the identity run. The splitting error in the energy
/// balance scales like `cfl_c^2 |grad u|^2`, so near loss of resolution the
/// step must be far below what stability needs.
pub const IDENTITY_DT0: f64 = 1e-5;
pub const IDENTITY_CFL: f64 = 5e-5;

/// `u0 = 1.05 Q`, `s = 0.5`, `a = 0.01` up to `t = 5` or loss of
/// resolution. No dealiasing: truncation breaks the discrete identities at
/// first order.
pub fn identities(dt0: f64, cfl_c: f64) -> ExperimentSpec {
    let mut e = spec(
        "identities",
        2048,
        16.0,
        InitialData::ScaledSoliton { delta: None, factor: Some(1.05) },
        sim(1, 0.5, 0.01, dt0, DtRule::Adaptive, 5.0),
    );
    e.sim.cfl_c = cfl_c;
    e.sim.sample_every = 20;
    e.sim.dealias = false;
    e.expectations = vec![
        Expectation::MassIdentity { max: 1e-6 },
        Expectation::EnergyIdentity { max: 1e-5 },
        Expectation::MomentumIdentity { max: 1e-5 },
    ];
    e
}

/// Moving soliton with dissipation, for the momentum identity.
pub fn boosted_momentum() -> ExperimentSpec {
    let mut e = spec(
        "boosted-momentum",
        2048,
        16.0,
        InitialData::BoostedSoliton { velocity: vec![1.0] },
        sim(1, 0.5, 0.01, 1e-3, DtRule::Fixed, 2.0),
    );
    e.sim.dealias = false;
    e.expectations = vec![Expectation::MomentumIdentity { max: 1e-5 }];
    e
}

/// `u0 = S(-1)`, `a = 0`, run to `t = 0.85` so the exact solution has
/// `T* = 1` in run time.
pub fn pseudo_conformal_rate() -> ExperimentSpec {
    let mut e = spec(
        "pseudo-conformal-rate",
        2048,
        16.0,
        InitialData::PseudoConformal { t0: -1.0 },
        sim(1, 0.5, 0.0, 1e-3, DtRule::Adaptive, 0.85),
    );
    e.expectations = vec![
        Expectation::Outcome { is: Outcome::Completed },
        Expectation::AlphaInRange { lo: 0.95, hi: 1.05, t_star: Some(1.0), window_decades: Some(0.5) },
    ];
    e
}

/// Strong dissipation with supercritical mass `1.5 |Q|` in d=2.
pub fn global_regime(s: f64, a: f64) -> ExperimentSpec {
    let mut e = spec(
        &format!("global-s{s}"),
        512,
        12.0,
        InitialData::ScaledSoliton { delta: None, factor: Some(1.5) },
        sim(2, s, a, 1e-3, DtRule::Adaptive, 10.0),
    );
    e.sim.cfl_c = 0.05;
    e.sim.sample_every = 10;
    e.expectations = vec![
        Expectation::Outcome { is: Outcome::Completed },
        Expectation::GradRatioBelow { max: 10.0 },
        Expectation::MassDecreasing,
    ];
    e
}

pub const BLOWUP_CFL: f64 = 0.003;

/// `u0 = 1.05 Q`, `s = 0.5`, `a = 0.01`, run until `|grad u|` has grown a
/// thousandfold.
pub fn blowup(n: usize) -> ExperimentSpec {
    let mut e = spec(
        &format!("blowup-n{n}"),
        n,
        16.0,
        InitialData::ScaledSoliton { delta: None, factor: Some(1.05) },
        sim(1, 0.5, 0.01, 1e-3, DtRule::Adaptive, 5.0),
    );
    // Strang error in E grows like cfl_c^2 |grad u|^2 and swamps the
    // lambda^-2s energy growth near collapse at the default 0.01
    e.sim.cfl_c = BLOWUP_CFL;
    e.grad_stop_relative = Some(1e3);
    e.sim.sample_every = 10;
    e.expectations = vec![
        Expectation::BlowupDetected,
        Expectation::GrowthAtLeast { factor: 1e3 },
        Expectation::AlphaInRange { lo: 0.45, hi: 0.7, t_star: None, window_decades: None },
        Expectation::LoglogGainAtLeast { min: 0.0 },
        Expectation::EnergyRatioSlopeBelow { max: 0.05 },
        Expectation::LambdaSqEnergyDecreasing,
    ];
    e
}

/// `u0 = c Q` with small `c`, `s = 0.5`, `a = 0.05`.
pub fn small_mass(c: f64) -> ExperimentSpec {
    let mut e = spec(
        &format!("small-mass-c{c}"),
        1024,
        16.0,
        InitialData::ScaledSoliton { delta: None, factor: Some(c) },
        sim(1, 0.5, 0.05, 1e-3, DtRule::Fixed, 5.0),
    );
    e.sim.sample_every = 10;
    e.expectations = vec![Expectation::EnergyNonincreasing { tol: 1e-10 }];
    e
}

/// 3 x 3 x 2 map of the blow-up region around the critical mass.
pub fn sweep() -> SweepSpec {
    let mut base = spec(
        "sweep",
        2048,
        16.0,
        InitialData::Soliton,
        sim(1, 0.5, 0.01, 1e-3, DtRule::Adaptive, 3.0),
    );
    base.grad_stop_relative = Some(8.0);
    base.sim.sample_every = 10;
    SweepSpec { base, axes: SweepAxes { s: vec![0.25, 0.5, 0.75], a: vec![0.01, 0.1, 1.0], delta: vec![0.05, 0.1] } }
}

pub const NAMES: [&str; 8] = [
    "soliton-conservative",
    "identities",
    "boosted-momentum",
    "pseudo-conformal-rate",
    "global-s1",
    "global-s1.5",
    "blowup",
    "small-mass",
];

pub fn by_name(name: &str) -> Option<ExperimentSpec> {
    Some(match name {
        "soliton-conservative" => soliton_conservative(),
        "identities" => identities(IDENTITY_DT0, IDENTITY_CFL),
        "boosted-momentum" => boosted_momentum(),
        "pseudo-conformal-rate" => pseudo_conformal_rate(),
        "global-s1" => global_regime(1.0, 0.1),
        "global-s1.5" => global_regime(1.5, 0.05),
        "blowup" => blowup(1 << 18),
        "small-mass" => small_mass(0.3),
        _ => return None,
    })
}
