//! Periodic-box discretization, transforms and Fourier multipliers.

mod field;
mod grid;

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;

pub use field::{forward_in_place, inverse_in_place, ComplexField, Space};
pub use grid::{Grid, DEFAULT_MEMORY_BUDGET, MAX_DIM, MIN_POINTS};

use crate::error::{Error, Result};

type VectorSymbol = Arc<dyn Fn(&[f64]) -> Complex64 + Send + Sync>;

enum Symbol {
    /// Arbitrary function of the wavenumber vector.
    General(VectorSymbol),
    /// Function of `|k|^2` only; evaluated from the cached lattice table.
    Radial(Arc<dyn Fn(f64) -> Complex64 + Send + Sync>),
}

/// A diagonal operator in Fourier space, `u_hat(k) -> symbol(k) u_hat(k)`.
#[derive(Clone)]
pub struct Multiplier {
    symbol: Arc<Symbol>,
    description: String,
}

impl fmt::Debug for Multiplier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Multiplier").field("description", &self.description).finish()
    }
}

/// Symbol of `(-Delta)^order` as a function of `|k|^2`.
///
/// Order zero is the identity everywhere; for positive order the `k = 0`
/// value is zero.
pub fn fractional_symbol(k_sq: f64, order: f64) -> f64 {
    if order == 0.0 {
        1.0
    } else if k_sq == 0.0 {
        0.0
    } else {
        k_sq.powf(order)
    }
}

impl Multiplier {
    pub fn new(
        description: impl Into<String>,
        symbol: impl Fn(&[f64]) -> Complex64 + Send + Sync + 'static,
    ) -> Self {
        Self { symbol: Arc::new(Symbol::General(Arc::new(symbol))), description: description.into() }
    }

    /// Multiplier whose symbol depends on `|k|^2` alone.
    pub fn radial(
        description: impl Into<String>,
        symbol: impl Fn(f64) -> Complex64 + Send + Sync + 'static,
    ) -> Self {
        Self { symbol: Arc::new(Symbol::Radial(Arc::new(symbol))), description: description.into() }
    }

    pub fn identity() -> Self {
        Self::radial("identity", |_| Complex64::new(1.0, 0.0))
    }

    pub fn fractional_laplacian(order: f64) -> Result<Self> {
        if !(order.is_finite() && order >= 0.0) {
            return Err(Error::Domain(format!("fractional order must be finite and >= 0, got {order}")));
        }
        Ok(Self::radial(format!("(-Laplacian)^{order}"), move |k2| {
            Complex64::new(fractional_symbol(k2, order), 0.0)
        }))
    }

    /// `exp(-i |k|^2 t - a |k|^(2s) t)`, the exact linear propagator.
    pub fn propagator(t: f64, a: f64, s: f64) -> Result<Self> {
        check_propagator_args(t, a, s)?;
        Ok(Self::radial(format!("linear propagator t={t} a={a} s={s}"), move |k2| {
            propagator_symbol(k2, t, a, s)
        }))
    }

    /// `i k_axis`, one component of the gradient.
    pub fn partial(axis: usize) -> Self {
        Self::new(format!("d/dx_{axis}"), move |k| Complex64::new(0.0, k[axis]))
    }

    pub fn description(&self) -> &str {
        &self.description
    }
}

pub(crate) fn propagator_symbol(k2: f64, t: f64, a: f64, s: f64) -> Complex64 {
    let decay = (-a * fractional_symbol(k2, s) * t).exp();
    Complex64::from_polar(decay, -k2 * t)
}

fn check_propagator_args(t: f64, a: f64, s: f64) -> Result<()> {
    if !(a.is_finite() && a >= 0.0) {
        return Err(Error::Domain(format!("friction coefficient must be >= 0, got {a}")));
    }
    if !(s.is_finite() && s >= 0.0) {
        return Err(Error::Domain(format!("dissipation order must be >= 0, got {s}")));
    }
    if !t.is_finite() {
        return Err(Error::Domain(format!("propagation time must be finite, got {t}")));
    }
    if t < 0.0 && a > 0.0 {
        return Err(Error::Domain(format!(
            "backward propagation (t = {t}) is ill-posed for the dissipative flow"
        )));
    }
    Ok(())
}

/// Physical samples to spectral coefficients.
pub fn forward_transform(f: &ComplexField) -> Result<ComplexField> {
    f.forward()
}

/// Spectral coefficients to physical samples.
pub fn inverse_transform(f: &ComplexField) -> Result<ComplexField> {
    f.inverse()
}

/// Applies `m` to `f`; the result is returned in the same space as `f`.
pub fn apply_multiplier(f: &ComplexField, m: &Multiplier) -> Result<ComplexField> {
    let space = f.space();
    let mut g = f.to_spectral();
    let grid = g.grid().clone();
    let values = g.values_mut();
    match m.symbol.as_ref() {
        Symbol::Radial(sym) => {
            for (flat, (v, &k2)) in values.iter_mut().zip(grid.k_squared()).enumerate() {
                let c = sym(k2);
                if !(c.re.is_finite() && c.im.is_finite()) {
                    return Err(Error::NonFiniteSymbol { k: grid.k_vector(flat) });
                }
                *v *= c;
            }
        }
        Symbol::General(sym) => {
            let mut idx = vec![0; grid.dim()];
            let mut k = vec![0.0; grid.dim()];
            for (flat, v) in values.iter_mut().enumerate() {
                grid.unravel(flat, &mut idx);
                for (a, ka) in k.iter_mut().enumerate() {
                    *ka = grid.odd_wavenumber(a, idx[a]);
                }
                let c = sym(&k);
                if !(c.re.is_finite() && c.im.is_finite()) {
                    return Err(Error::NonFiniteSymbol { k });
                }
                *v *= c;
            }
        }
    }
    Ok(match space {
        Space::Physical => g.into_physical(),
        Space::Spectral => g,
    })
}

/// `(-Delta)^order f`.
pub fn fractional_laplacian(f: &ComplexField, order: f64) -> Result<ComplexField> {
    apply_multiplier(f, &Multiplier::fractional_laplacian(order)?)
}

/// Exact solution operator of `u_t = i Delta u - a (-Delta)^s u` over time `t`.
pub fn linear_propagate(f: &ComplexField, t: f64, a: f64, s: f64) -> Result<ComplexField> {
    apply_multiplier(f, &Multiplier::propagator(t, a, s)?)
}

/// Gradient components, each returned in the space of `f`.
pub fn gradient(f: &ComplexField) -> Result<Vec<ComplexField>> {
    (0..f.grid().dim()).map(|axis| apply_multiplier(f, &Multiplier::partial(axis))).collect()
}

/// 2/3-rule truncation: zeroes every coefficient with `3 |m| >= n` on any axis.
pub fn dealias(f: &ComplexField) -> ComplexField {
    let space = f.space();
    let mut g = f.to_spectral();
    let grid = g.grid().clone();
    let mask = grid.dealias_mask();
    for (v, &keep) in g.values_mut().iter_mut().zip(mask) {
        if !keep {
            *v = Complex64::new(0.0, 0.0);
        }
    }
    match space {
        Space::Physical => g.into_physical(),
        Space::Spectral => g,
    }
}

/// Fraction of spectral mass in the resolution-indicator band (see
/// [`Grid::tail_mask`]). Zero for the zero field.
pub fn tail_fraction(f: &ComplexField) -> f64 {
    let g = f.to_spectral();
    let mask = g.grid().tail_mask();
    let (mut tail, mut total) = (0.0, 0.0);
    for (v, &in_tail) in g.values().iter().zip(mask) {
        let p = v.norm_sqr();
        total += p;
        if in_tail {
            tail += p;
        }
    }
    if total > 0.0 {
        tail / total
    } else {
        0.0
    }
}

/// Evaluates `x -> f(x / scale)` at the points of `target` by trigonometric
/// interpolation of `f`, one axis at a time. Points whose preimage lies
/// outside the source box get zero. Result is in physical space.
pub fn sample_scaled(f: &ComplexField, target: &Grid, scale: f64) -> Result<ComplexField> {
    let src = f.grid().clone();
    if src.dim() != target.dim() {
        return Err(Error::Contract(format!(
            "cannot resample a {}-d field onto a {}-d grid",
            src.dim(),
            target.dim()
        )));
    }
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::Domain(format!("scale must be positive, got {scale}")));
    }
    if scale == 1.0 && src.half_len() == target.half_len() && src.n().iter().zip(target.n()).all(|(a, b)| a <= b) {
        return zero_pad(f, target);
    }
    let mut shape = src.n().to_vec();
    let mut data = f.to_spectral().into_values();
    for axis in 0..src.dim() {
        let (n_src, n_dst) = (shape[axis], target.n()[axis]);
        let l = src.half_len()[axis];
        let ks = src.wavenumbers(axis);
        let xs = target.coordinates(axis);
        let mut row = vec![Complex64::new(0.0, 0.0); n_src];
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let mut next = vec![Complex64::new(0.0, 0.0); outer * n_dst * inner];
        for o in 0..outer {
            let block = &data[o * n_src * inner..(o + 1) * n_src * inner];
            let out = &mut next[o * n_dst * inner..(o + 1) * n_dst * inner];
            for (j, &x) in xs.iter().enumerate() {
                let y = x / scale;
                if y < -l || y > l {
                    continue;
                }
                for (m, b) in row.iter_mut().enumerate() {
                    *b = if m == n_src / 2 {
                        Complex64::new((ks[m] * y).cos(), 0.0)
                    } else {
                        Complex64::from_polar(1.0, ks[m] * y)
                    };
                }
                let dst = &mut out[j * inner..(j + 1) * inner];
                for (m, &b) in row.iter().enumerate() {
                    for (d, v) in dst.iter_mut().zip(&block[m * inner..(m + 1) * inner]) {
                        *d += b * v;
                    }
                }
            }
        }
        shape[axis] = n_dst;
        data = next;
    }
    ComplexField::new(target, data, Space::Physical)
}

/// Same box, finer lattice: trigonometric interpolation is zero padding of
/// the spectrum, with an unpaired Nyquist mode split evenly between `+-k`.
fn zero_pad(f: &ComplexField, target: &Grid) -> Result<ComplexField> {
    let src = f.grid();
    let dim = src.dim();
    // per axis: source index -> [(target index, weight)]
    let maps: Vec<Vec<Vec<(usize, f64)>>> = (0..dim)
        .map(|axis| {
            let (n_src, n_dst) = (src.n()[axis], target.n()[axis]);
            (0..n_src)
                .map(|m| {
                    let q = if m < n_src / 2 { m as i64 } else { m as i64 - n_src as i64 };
                    let wrap = |q: i64| q.rem_euclid(n_dst as i64) as usize;
                    if n_src % 2 == 0 && m == n_src / 2 && n_dst > n_src {
                        vec![(wrap(q), 0.5), (wrap(-q), 0.5)]
                    } else {
                        vec![(wrap(q), 1.0)]
                    }
                })
                .collect()
        })
        .collect();
    let hat = f.to_spectral();
    let mut out = vec![Complex64::new(0.0, 0.0); target.n().iter().product()];
    let mut idx = vec![0usize; dim];
    for v in hat.values() {
        let mut targets = vec![(0usize, 1.0f64)];
        for axis in 0..dim {
            let n_dst = target.n()[axis];
            targets = targets
                .iter()
                .flat_map(|&(t, w)| maps[axis][idx[axis]].iter().map(move |&(j, wj)| (t * n_dst + j, w * wj)))
                .collect();
        }
        for (t, w) in targets {
            out[t] += v * w;
        }
        for axis in (0..dim).rev() {
            idx[axis] += 1;
            if idx[axis] < src.n()[axis] {
                break;
            }
            idx[axis] = 0;
        }
    }
    Ok(ComplexField::new(target, out, Space::Spectral)?.into_physical())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_field(grid: &Grid, seed: u64) -> ComplexField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ComplexField::from_fn(grid, |_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
    }

    fn plane_wave(grid: &Grid, k: &[f64]) -> ComplexField {
        ComplexField::from_fn(grid, |x| {
            let phase: f64 = x.iter().zip(k).map(|(a, b)| a * b).sum();
            Complex64::from_polar(1.0, phase)
        })
    }

    fn max_diff(a: &ComplexField, b: &ComplexField) -> f64 {
        a.values().iter().zip(b.values()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    #[test]
    fn constant_maps_to_zero_mode() {
        for grid in [Grid::cubic(1, 16, 2.0).unwrap(), Grid::cubic(2, 8, 1.5).unwrap()] {
            let f = ComplexField::from_fn(&grid, |_| c(1.0, 0.0));
            let hat = forward_transform(&f).unwrap();
            assert!((hat.values()[0] - c(1.0, 0.0)).norm() < 1e-15);
            assert!(hat.values()[1..].iter().all(|v| v.norm() < 1e-15));
        }
    }

    #[test]
    fn pure_mode_is_single_unit_coefficient() {
        let grid = Grid::cubic(1, 32, PI).unwrap();
        let f = plane_wave(&grid, &[3.0]);
        let hat = f.forward().unwrap();
        for (j, v) in hat.values().iter().enumerate() {
            let want = if j == 3 { 1.0 } else { 0.0 };
            assert!((v - c(want, 0.0)).norm() < 1e-14, "slot {j}: {v}");
        }
        // negative and 2-d modes
        let grid2 = Grid::new(&[16, 8], &[PI, 2.0 * PI]).unwrap();
        let hat2 = plane_wave(&grid2, &[-2.0, 1.5]).forward().unwrap();
        let slot = grid2.ravel(&[14, 3]);
        assert!((hat2.values()[slot] - c(1.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn round_trip_recovers_field() {
        for grid in [Grid::cubic(1, 64, 3.0).unwrap(), Grid::new(&[16, 32], &[1.0, 2.0]).unwrap()] {
            let f = random_field(&grid, 7);
            let back = f.forward().unwrap().inverse().unwrap();
            assert!(back.relative_distance(&f).unwrap() <= 1e-13);
        }
    }

    #[test]
    fn wrong_space_is_contract_violation() {
        let grid = Grid::cubic(1, 16, 1.0).unwrap();
        let hat = ComplexField::zeros(&grid, Space::Spectral);
        assert!(matches!(forward_transform(&hat), Err(Error::Contract(_))));
        let phys = ComplexField::zeros(&grid, Space::Physical);
        assert!(matches!(inverse_transform(&phys), Err(Error::Contract(_))));
    }

    #[test]
    fn identity_and_zero_multipliers() {
        let grid = Grid::cubic(2, 16, 4.0).unwrap();
        let f = random_field(&grid, 1);
        let same = apply_multiplier(&f, &Multiplier::identity()).unwrap();
        assert!(same.relative_distance(&f).unwrap() < 1e-14);
        assert_eq!(same.space(), Space::Physical);
        let zero = apply_multiplier(&f, &Multiplier::radial("zero", |_| c(0.0, 0.0))).unwrap();
        assert!(zero.max_abs() < 1e-15);
    }

    #[test]
    fn laplacian_symbol_on_plane_waves() {
        let grid = Grid::cubic(1, 64, PI).unwrap();
        let f = plane_wave(&grid, &[2.0]);
        let m = Multiplier::radial("|k|^2", |k2| c(k2, 0.0));
        let out = apply_multiplier(&f, &m).unwrap();
        assert!(max_diff(&out, &f.clone().scaled(c(4.0, 0.0))) < 1e-12);
        let frac = fractional_laplacian(&f, 1.0).unwrap();
        assert!(max_diff(&frac, &out) == 0.0);

        let grid2 = Grid::cubic(2, 32, PI).unwrap();
        let g = plane_wave(&grid2, &[3.0, 4.0]);
        let half = fractional_laplacian(&g, 0.5).unwrap();
        assert!(max_diff(&half, &g.clone().scaled(c(5.0, 0.0))) < 1e-12);
    }

    #[test]
    fn constant_is_annihilated_for_positive_order() {
        let grid = Grid::cubic(2, 8, 1.0).unwrap();
        let f = ComplexField::from_fn(&grid, |_| c(2.5, -1.0));
        for order in [1e-3, 0.5, 1.0, 2.7] {
            assert!(fractional_laplacian(&f, order).unwrap().max_abs() < 1e-14);
        }
        let id = fractional_laplacian(&f, 0.0).unwrap();
        assert!(id.relative_distance(&f).unwrap() < 1e-15);
        assert!(matches!(fractional_laplacian(&f, -0.5), Err(Error::Domain(_))));
    }

    #[test]
    fn non_finite_symbol_names_the_wavenumber() {
        let grid = Grid::cubic(1, 16, PI).unwrap();
        let f = random_field(&grid, 3);
        let bad = Multiplier::new("1/k", |k| c(1.0 / k[0], 0.0));
        match apply_multiplier(&f, &bad) {
            Err(Error::NonFiniteSymbol { k }) => assert_eq!(k, vec![0.0]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn propagator_single_mode() {
        let grid = Grid::cubic(1, 32, PI).unwrap();
        let f = plane_wave(&grid, &[1.0]);
        assert!(linear_propagate(&f, 0.0, 1.0, 1.0).unwrap().relative_distance(&f).unwrap() < 1e-15);
        let out = linear_propagate(&f, 1.0, 1.0, 1.0).unwrap();
        let want = f.clone().scaled(Complex64::from_polar((-1.0f64).exp(), -1.0));
        assert!(max_diff(&out, &want) < 1e-13);
        assert!(matches!(linear_propagate(&f, -0.1, 0.5, 1.0), Err(Error::Domain(_))));
        // backward flow is fine for the unitary case
        assert!(linear_propagate(&f, -0.1, 0.0, 1.0).is_ok());
    }

    #[test]
    fn unitary_when_frictionless() {
        let grid = Grid::new(&[32, 16], &[4.0, 3.0]).unwrap();
        let f = random_field(&grid, 11);
        let out = linear_propagate(&f, 0.73, 0.0, 0.5).unwrap();
        assert!((out.norm() - f.norm()).abs() / f.norm() < 1e-13);
    }

    #[test]
    fn dealias_behaviour() {
        let grid = Grid::cubic(1, 32, PI).unwrap();
        let low = plane_wave(&grid, &[3.0]);
        assert!(dealias(&low).relative_distance(&low).unwrap() < 1e-14);
        let top = plane_wave(&grid, &[15.0]);
        assert!(dealias(&top).max_abs() < 1e-14);
        let cst = ComplexField::from_fn(&grid, |_| c(1.0, 1.0));
        assert!(dealias(&cst).relative_distance(&cst).unwrap() < 1e-15);
    }

    #[test]
    fn tail_fraction_of_band_modes() {
        let grid = Grid::cubic(1, 32, PI).unwrap();
        assert!(tail_fraction(&plane_wave(&grid, &[2.0])) < 1e-25);
        assert!((tail_fraction(&plane_wave(&grid, &[9.0])) - 1.0).abs() < 1e-12);
        assert_eq!(tail_fraction(&ComplexField::zeros(&grid, Space::Physical)), 0.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn grid_2d() -> Grid {
            Grid::new(&[16, 32], &[3.0, 5.0]).unwrap()
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]

            #[test]
            fn parseval(seed in any::<u64>()) {
                let f = random_field(&grid_2d(), seed);
                let hat = f.forward().unwrap();
                prop_assert!((hat.norm_sq() - f.norm_sq()).abs() <= 1e-12 * f.norm_sq());
            }

            #[test]
            fn semigroup(seed in any::<u64>(), t1 in 0.0f64..2.0, t2 in 0.0f64..2.0,
                         a in 0.0f64..1.0, s in 0.0f64..2.0) {
                let f = random_field(&grid_2d(), seed);
                let once = linear_propagate(&f, t1 + t2, a, s).unwrap();
                let twice = linear_propagate(&linear_propagate(&f, t1, a, s).unwrap(), t2, a, s).unwrap();
                prop_assert!(twice.relative_distance(&once).unwrap() <= 1e-12);
            }

            #[test]
            fn l2_contraction(seed in any::<u64>(), t in 0.0f64..5.0, a in 0.0f64..2.0, s in 0.0f64..2.0) {
                let f = random_field(&grid_2d(), seed);
                let out = linear_propagate(&f, t, a, s).unwrap();
                prop_assert!(out.norm() <= f.norm() * (1.0 + 1e-14));
            }

            #[test]
            fn orders_add(seed in any::<u64>(), s1 in 0.0f64..1.5, s2 in 0.0f64..1.5) {
                let grid = Grid::cubic(1, 64, 4.0).unwrap();
                let f = random_field(&grid, seed);
                let two = fractional_laplacian(&fractional_laplacian(&f, s1).unwrap(), s2).unwrap();
                let one = fractional_laplacian(&f, s1 + s2).unwrap();
                prop_assert!(two.relative_distance(&one).unwrap() <= 1e-12);
            }

            #[test]
            fn linear_in_scalars(seed in any::<u64>(), re in -3.0f64..3.0, im in -3.0f64..3.0) {
                let f = random_field(&grid_2d(), seed);
                let m = Multiplier::fractional_laplacian(0.7).unwrap();
                let z = c(re, im);
                let lhs = apply_multiplier(&f.clone().scaled(z), &m).unwrap();
                let rhs = apply_multiplier(&f, &m).unwrap().scaled(z);
                prop_assert!(max_diff(&lhs, &rhs) <= 1e-12 * (1.0 + rhs.max_abs()));
            }
        }

        #[test]
        fn resample_identity_and_dilation() {
            let src = Grid::new(&[64, 64], &[8.0, 6.0]).unwrap();
            let gauss = |x: &[f64], w: f64| c((-(x[0] * x[0] + x[1] * x[1]) / (w * w)).exp(), 0.0);
            let f = ComplexField::from_fn(&src, |x| gauss(x, 1.0));
            let same = sample_scaled(&f, &src, 1.0).unwrap();
            assert!(max_diff(&same, &f) < 1e-13);
            let dst = Grid::new(&[32, 64], &[5.0, 7.0]).unwrap();
            let wide = sample_scaled(&f, &dst, 2.0).unwrap();
            let expect = ComplexField::from_fn(&dst, |x| gauss(x, 2.0));
            assert!(max_diff(&wide, &expect) < 1e-10);
        }

        #[test]
        fn refinement_keeps_trigonometric_polynomials() {
            let (l0, l1) = (4.0, 3.0);
            let src = Grid::new(&[16, 8], &[l0, l1]).unwrap();
            let dst = Grid::new(&[64, 32], &[l0, l1]).unwrap();
            let (kn, k1) = (8.0 * PI / l0, 2.0 * PI / l1);
            let poly = |x: &[f64]| c((kn * x[0]).cos(), 0.0) * Complex64::from_polar(1.0, k1 * x[1]) + c(0.3, -0.2);
            let fine = sample_scaled(&ComplexField::from_fn(&src, poly), &dst, 1.0).unwrap();
            assert!(max_diff(&fine, &ComplexField::from_fn(&dst, poly)) < 1e-13);
        }

        #[test]
        fn order_one_matches_k_squared_symbol() {
            let grid = grid_2d();
            let f = random_field(&grid, 5);
            let a = fractional_laplacian(&f, 1.0).unwrap();
            let b = apply_multiplier(&f, &Multiplier::radial("|k|^2", |k2| c(k2, 0.0))).unwrap();
            assert_eq!(a.values(), b.values());
        }
    }
}
