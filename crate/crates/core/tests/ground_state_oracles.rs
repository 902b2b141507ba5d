//! Ground states against independent references.

use fnls_core::diagnostics::{energy, grad_norm_sq, mass_sq};
use fnls_core::ground_state::{solve_ground_state, weinstein_gap_with};
use fnls_core::spectral::{sample_scaled, ComplexField, Grid};
use num_complex::Complex64;

fn exact_1d(x: f64) -> f64 {
    3f64.powf(0.25) / (2.0 * x).cosh().sqrt()
}

#[test]
fn one_dimensional_closed_form() {
    let grid = Grid::cubic(1, 1024, 32.0).unwrap();
    let gs = solve_ground_state(1, &grid, 1e-10, 2000).unwrap();
    let x = grid.coordinates(0);
    let worst = gs.profile.values().iter().zip(&x).map(|(v, &x)| (v - exact_1d(x)).norm()).fold(0.0, f64::max);
    assert!(worst <= 1e-8, "pointwise error {worst:e}");
    assert!(gs.residual <= 1e-10);
    assert!(gs.energy.abs() <= 1e-6 * gs.grad_norm_sq);
    // |Q|^2 = sqrt(3) pi / 2
    assert!((gs.mass_sq - 3f64.sqrt() * std::f64::consts::FRAC_PI_2).abs() < 1e-10);
}

/// Radial profile of `Q'' + Q'/r - Q + Q^3 = 0` by shooting on `Q(0)`.
/// Returns `Q(0)` and `2 pi int Q^2 r dr`.
fn radial_shooting_2d() -> (f64, f64) {
    let h = 2e-4;
    let r_max = 12.0;
    // +1: overshoots through zero; -1: turns back up before reaching zero.
    let shoot = |q0: f64, mass: Option<&mut f64>| -> i32 {
        let rhs = |r: f64, q: f64, p: f64| -> (f64, f64) {
            let damp = if r > 0.0 { p / r } else { 0.0 };
            (p, q - q * q * q - damp)
        };
        // Series start: Q(r) = q0 + (q0 - q0^3) r^2 / 4.
        let mut r = h;
        let c = (q0 - q0 * q0 * q0) / 4.0;
        let (mut q, mut p) = (q0 + c * h * h, 2.0 * c * h);
        let mut acc = 0.5 * q0 * q0 * h * h;
        let mut verdict = 0;
        while r < r_max {
            let (k1q, k1p) = rhs(r, q, p);
            let (k2q, k2p) = rhs(r + h / 2.0, q + h / 2.0 * k1q, p + h / 2.0 * k1p);
            let (k3q, k3p) = rhs(r + h / 2.0, q + h / 2.0 * k2q, p + h / 2.0 * k2p);
            let (k4q, k4p) = rhs(r + h, q + h * k3q, p + h * k3p);
            let q_new = q + h / 6.0 * (k1q + 2.0 * k2q + 2.0 * k3q + k4q);
            let p_new = p + h / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p);
            acc += 0.5 * h * (q * q * r + q_new * q_new * (r + h));
            q = q_new;
            p = p_new;
            r += h;
            if q < 0.0 {
                verdict = 1;
                break;
            }
            if p > 0.0 {
                verdict = -1;
                break;
            }
        }
        if let Some(m) = mass {
            *m = 2.0 * std::f64::consts::PI * acc;
        }
        verdict
    };
    let (mut lo, mut hi) = (2.0, 2.4);
    assert_eq!(shoot(lo, None), -1);
    assert_eq!(shoot(hi, None), 1);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if shoot(mid, None) > 0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let mut mass = 0.0;
    shoot(lo, Some(&mut mass));
    (lo, mass)
}

#[test]
fn two_dimensional_against_radial_shooting() {
    let (q0, mass) = radial_shooting_2d();
    assert!((q0 - 2.2062).abs() < 1e-3, "shooting Q(0) = {q0}");
    assert!((mass - 11.7009).abs() < 1e-2, "shooting mass = {mass}");

    let grid = Grid::cubic(2, 256, 12.0).unwrap();
    let gs = solve_ground_state(2, &grid, 1e-10, 2000).unwrap();
    let origin = grid.ravel(&[128, 128]);
    let peak = gs.profile.values()[origin].re;
    assert!((peak - q0).abs() / q0 < 1e-5, "Q(0) {peak} vs {q0}");
    assert!((gs.mass_sq - mass).abs() / mass < 1e-5, "mass {} vs {mass}", gs.mass_sq);
    // d = 2: Pohozaev gives |grad Q|^2 = |Q|^2
    assert!((gs.grad_norm_sq - gs.mass_sq).abs() / gs.mass_sq < 1e-8);
}

#[test]
fn doubling_the_box_changes_nothing() {
    let a = solve_ground_state(1, &Grid::cubic(1, 1024, 16.0).unwrap(), 1e-10, 2000).unwrap();
    let b = solve_ground_state(1, &Grid::cubic(1, 2048, 32.0).unwrap(), 1e-10, 2000).unwrap();
    assert!((a.mass_sq - b.mass_sq).abs() / b.mass_sq < 1e-10);
    assert!((a.grad_norm_sq - b.grad_norm_sq).abs() / b.grad_norm_sq < 1e-10);
    let resampled = sample_scaled(&a.profile, b.profile.grid(), 1.0).unwrap();
    let x = b.profile.grid().coordinates(0);
    let worst = resampled
        .values()
        .iter()
        .zip(b.profile.values())
        .zip(&x)
        .filter(|(_, &x)| x.abs() < 15.0)
        .map(|((u, v), _)| (u - v).norm())
        .fold(0.0, f64::max);
    // Q decays like e^-|x|, so the smaller box only feels its own tail
    assert!(worst < (-16.0f64).exp(), "{worst:e}");
}

#[test]
fn mass_critical_scaling() {
    // u_l(x) = l^(-d/2) u(x/l) keeps the mass and scales every energy term by l^-2.
    let grid = Grid::cubic(1, 2048, 32.0).unwrap();
    let gs = solve_ground_state(1, &grid, 1e-10, 2000).unwrap();
    let bump = ComplexField::from_fn(&grid, |x| {
        Complex64::new((-x[0] * x[0]).exp() * (1.0 + 0.3 * x[0]), 0.2 * (-(x[0] - 0.5).powi(2)).exp())
    });
    for l in [0.5, 2.0] {
        let scaled = sample_scaled(&bump, &grid, l).unwrap().scaled(Complex64::new(l.powf(-0.5), 0.0));
        assert!((mass_sq(&scaled) - mass_sq(&bump)).abs() / mass_sq(&bump) < 1e-10);
        assert!((grad_norm_sq(&scaled) * l * l - grad_norm_sq(&bump)).abs() / grad_norm_sq(&bump) < 1e-9);
        assert!((energy(&scaled) * l * l - energy(&bump)).abs() / energy(&bump).abs() < 1e-9);
        let (g0, g1) = (weinstein_gap_with(&bump, gs.mass_sq), weinstein_gap_with(&scaled, gs.mass_sq));
        assert!((g1 * l * l - g0).abs() / g0.abs() < 1e-9);
    }
}
