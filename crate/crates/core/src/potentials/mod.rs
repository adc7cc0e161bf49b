//! Deterministic and random potentials, sub-gaussian sampling and decompositions.

mod decompose;

use std::collections::BTreeMap;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, StandardNormal};
use serde::{Deserialize, Serialize};

pub use decompose::{
    dyadic_heights, dyadic_levels, dyadic_lq_proxy, sparse_decomposition, sparse_split,
    DyadicLevel, SparseBall, SparseDecomposition, SparseFamily, SparseLevel,
};

use crate::error::{Error, Result};
use crate::grid::{lp_norm, BoxGrid, GridFunction, Point, Space, C64};
use crate::rng::cell_rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Distribution {
    BernoulliSymmetric,
    GaussianStandard,
}

impl Distribution {
    pub fn tag(self) -> u8 {
        match self {
            Distribution::BernoulliSymmetric => 1,
            Distribution::GaussianStandard => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            1 => Some(Distribution::BernoulliSymmetric),
            2 => Some(Distribution::GaussianStandard),
            _ => None,
        }
    }

    pub fn draw(self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            Distribution::BernoulliSymmetric => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            Distribution::GaussianStandard => StandardNormal.sample(rng),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomizationScheme {
    pub h: f64,
    pub distribution: Distribution,
    pub seed: u64,
}

impl RandomizationScheme {
    pub fn new(h: f64, distribution: Distribution, seed: u64) -> Result<Self> {
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::Precondition(format!("randomization scale h = {h} must be positive")));
        }
        Ok(RandomizationScheme { h, distribution, seed })
    }

    /// omega_j of the cell j + h[0,1)^d, j = h * index.
    pub fn omega(&self, index: [i64; 3]) -> f64 {
        self.distribution.draw(&mut cell_rng(self.seed, index))
    }
}

#[derive(Clone, Debug)]
pub struct RandomPotential {
    pub profile: GridFunction,
    pub scheme: RandomizationScheme,
    pub omega: BTreeMap<[i64; 3], f64>,
    pub realized: GridFunction,
}

/// Number of grid steps per cell of side h; errors unless h/dx is an integer.
pub fn cell_ratio(h: f64, dx: f64) -> Result<i64> {
    let m = (h / dx).round();
    if m < 1.0 || (m * dx - h).abs() > 1e-9 * h {
        return Err(Error::MisalignedScale { h, dx });
    }
    Ok(m as i64)
}

/// Integer cell index floor(x / h) of every grid point, computed exactly.
fn cell_of(grid: &BoxGrid, idx: usize, ratio: i64) -> [i64; 3] {
    let m = grid.unravel(idx);
    let mut c = [0i64; 3];
    for a in 0..grid.d {
        let k = m[a] as i64 - (grid.n / 2) as i64;
        c[a] = k.div_euclid(ratio);
    }
    c
}

/// V(x) = sum_j v_j 1_Q((x - j h)/h), Q = [0,1)^d.
pub fn anderson_potential(
    coeffs: &BTreeMap<[i64; 3], C64>,
    h: f64,
    grid: &BoxGrid,
) -> Result<GridFunction> {
    let ratio = cell_ratio(h, grid.dx)?;
    let half = (grid.n / 2) as i64;
    for j in coeffs.keys() {
        for a in 0..grid.d {
            if j[a] * ratio < -half || (j[a] + 1) * ratio > half {
                return Err(Error::BoxTooSmall(format!("cell {j:?} of side {h} leaves the box")));
            }
        }
    }
    let mut v = GridFunction::zeros(*grid, Space::Position);
    for (idx, val) in v.values_mut().iter_mut().enumerate() {
        if let Some(c) = coeffs.get(&cell_of(grid, idx, ratio)) {
            *val = *c;
        }
    }
    Ok(v)
}

pub fn randomize(profile: &GridFunction, scheme: &RandomizationScheme) -> Result<RandomPotential> {
    randomize_with(profile, scheme, |j| scheme.omega(j))
}

/// Randomization with an explicit omega (e.g. omega = 1 for the deterministic profile).
pub fn randomize_with(
    profile: &GridFunction,
    scheme: &RandomizationScheme,
    omega_of: impl Fn([i64; 3]) -> f64,
) -> Result<RandomPotential> {
    if profile.space() != Space::Position {
        return Err(Error::WrongSpace { expected: Space::Position });
    }
    let grid = *profile.grid();
    let ratio = cell_ratio(scheme.h, grid.dx)?;
    let mut omega = BTreeMap::new();
    let mut realized = profile.clone();
    for (idx, val) in realized.values_mut().iter_mut().enumerate() {
        if *val == C64::new(0.0, 0.0) {
            continue;
        }
        let j = cell_of(&grid, idx, ratio);
        let w = *omega.entry(j).or_insert_with(|| omega_of(j));
        *val *= w;
    }
    Ok(RandomPotential { profile: profile.clone(), scheme: *scheme, omega, realized })
}

/// V_eps = eps * 1_{T_eps}, T_eps = {|x_1| < 1/eps, |x'| < eps^(-1/2)}.
pub fn tube_potential(eps: f64, grid: &BoxGrid) -> Result<GridFunction> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::Precondition(format!("eps = {eps} must lie in (0, 1]")));
    }
    let a = 1.0 / eps;
    let b = eps.powf(-0.5);
    if a >= grid.l / 2.0 || (grid.d > 1 && b >= grid.l / 2.0) {
        return Err(Error::BoxTooSmall(format!("tube of length {} in a box of side {}", 2.0 * a, grid.l)));
    }
    Ok(GridFunction::from_real_fn(*grid, Space::Position, |x| {
        let t = (x[1] * x[1] + x[2] * x[2]).sqrt();
        if x[0].abs() < a && t < b {
            eps
        } else {
            0.0
        }
    }))
}

/// Wave-packet counterexample on T_eps: with phi = exp(-c eps^2 x_1^2 - c eps |x'|^2),
/// V = (Delta phi + 2i d_1 phi + i eps phi) / phi makes e^(i x_1) phi an exact solution of
/// (-Delta + V - (1 + i eps)) u = 0; V is then cut to the tube, where |V| <~ c eps.
pub fn packet_potential(eps: f64, c: f64, grid: &BoxGrid) -> Result<GridFunction> {
    if !(c > 0.0) {
        return Err(Error::Precondition(format!("packet width c = {c} must be positive")));
    }
    let tube = tube_potential(eps, grid)?;
    let (a, b) = (c * eps * eps, c * eps);
    let transverse = (grid.d - 1) as f64;
    let mut v = tube;
    for (i, val) in v.values_mut().iter_mut().enumerate() {
        if *val == C64::new(0.0, 0.0) {
            continue;
        }
        let x = grid.point(i);
        let t2 = x[1] * x[1] + x[2] * x[2];
        let re = 4.0 * a * a * x[0] * x[0] - 2.0 * a + 4.0 * b * b * t2 - 2.0 * b * transverse;
        *val = C64::new(re, eps - 4.0 * a * x[0]);
    }
    Ok(v)
}

/// Exact volume of T_R = {|x_1| < R, |x'| < R^(1/2)}.
pub fn knapp_tube_volume(r: f64, d: usize) -> f64 {
    match d {
        1 => 2.0 * r,
        2 => 4.0 * r.powf(1.5),
        _ => 2.0 * std::f64::consts::PI * r * r,
    }
}

/// Sharp (|T_R|^(-1/q) 1_{T_R}) or cos^2-mollified Knapp tube with ||V||_q = 1.
pub fn knapp_tube(r: f64, q: f64, grid: &BoxGrid, smooth: bool) -> Result<GridFunction> {
    if r < 4.0 {
        return Err(Error::Precondition(format!("R = {r} must be at least 4")));
    }
    if r >= grid.l / 2.0 {
        return Err(Error::BoxTooSmall(format!("tube of length {} in a box of side {}", 2.0 * r, grid.l)));
    }
    let s = r.sqrt();
    let profile = |x: &Point| knapp_profile(x, r, s, smooth);
    if smooth {
        let v = GridFunction::from_real_fn(*grid, Space::Position, profile);
        let nq = lp_norm(&v, q);
        Ok(v.scaled(C64::new(1.0 / nq, 0.0)))
    } else {
        let peak = knapp_tube_volume(r, grid.d).powf(-1.0 / q);
        Ok(GridFunction::from_real_fn(*grid, Space::Position, |x| peak * profile(x)))
    }
}

/// Unnormalized tube profile: indicator, or cos^2 in both tube directions.
pub fn knapp_profile(x: &Point, r: f64, sqrt_r: f64, smooth: bool) -> f64 {
    let t = (x[1] * x[1] + x[2] * x[2]).sqrt();
    // half-open in the axis directions so lattice counts match the volume
    let outside = if x[2] == 0.0 { x[1] < -sqrt_r || x[1] >= sqrt_r } else { t >= sqrt_r };
    if x[0] < -r || x[0] >= r || outside {
        return 0.0;
    }
    if smooth {
        let c1 = (std::f64::consts::FRAC_PI_2 * x[0] / r).cos();
        let c2 = (std::f64::consts::FRAC_PI_2 * t / sqrt_r).cos();
        c1 * c1 * c2 * c2
    } else {
        1.0
    }
}

pub fn sample_subgaussian(scheme: &RandomizationScheme, count: usize) -> Result<Vec<f64>> {
    if count < 100 {
        return Err(Error::InsufficientSamples { got: count, needed: 100 });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(scheme.seed);
    Ok((0..count).map(|_| scheme.distribution.draw(&mut rng)).collect())
}

/// Smallest t with mean exp(X^2 / t^2) <= 2 (bisection on the monotone map).
pub fn subgaussian_norm_est(samples: &[f64]) -> f64 {
    let max = samples.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if max == 0.0 || samples.is_empty() {
        return 0.0;
    }
    let excess = |t: f64| {
        let m: f64 = samples.iter().map(|x| (x * x / (t * t)).exp()).sum::<f64>() / samples.len() as f64;
        m - 2.0
    };
    let mut lo = max * 1e-3;
    let mut hi = max / std::f64::consts::LN_2.sqrt();
    if excess(hi) > 0.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if excess(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use approx::assert_relative_eq;

    fn unit_coeffs(list: &[([i64; 3], f64)]) -> BTreeMap<[i64; 3], C64> {
        list.iter().map(|(j, v)| (*j, C64::new(*v, 0.0))).collect()
    }

    #[test]
    fn anderson_examples() {
        let g = make_grid(2, 8.0, 32).unwrap();
        let v = anderson_potential(&unit_coeffs(&[([0, 0, 0], 1.0)]), 1.0, &g).unwrap();
        for q in [1.0, 2.0, 3.5] {
            assert_relative_eq!(lp_norm(&v, q), 1.0, epsilon = 1e-12);
        }
        let z = anderson_potential(&BTreeMap::new(), 1.0, &g).unwrap();
        assert_eq!(z.max_abs(), 0.0);
        let two = anderson_potential(&unit_coeffs(&[([0, 0, 0], 1.0), ([1, 0, 0], 2.0)]), 1.0, &g).unwrap();
        assert_relative_eq!(lp_norm(&two, 2.0), 5f64.sqrt(), epsilon = 1e-12);
        assert!(matches!(
            anderson_potential(&BTreeMap::new(), 0.3, &g),
            Err(Error::MisalignedScale { .. })
        ));
        assert!(anderson_potential(&unit_coeffs(&[([4, 0, 0], 1.0)]), 1.0, &g).is_err());
    }

    #[test]
    fn packet_solves_the_eigen_equation_inside_the_tube() {
        let g = make_grid(2, 16.0, 256).unwrap();
        let eps = 0.25;
        let v = packet_potential(eps, 1.0, &g).unwrap();
        let z = C64::new(1.0, eps);
        let u = |x: f64, y: f64| C64::new(0.0, x).exp() * (-eps * eps * x * x - eps * y * y).exp();
        let h = 1e-3;
        for &(x, y) in &[(0.0, 0.0), (1.25, -0.75), (-3.0, 1.5)] {
            let lap = (u(x + h, y) + u(x - h, y) + u(x, y + h) + u(x, y - h) - u(x, y) * 4.0) / (h * h);
            let i = g.nearest_index(&[x, y, 0.0]).unwrap();
            let res = -lap + (v.values()[i] - z) * u(x, y);
            assert!(res.norm() < 1e-4, "{res}");
        }
        assert!(v.max_abs() < 6.0 * eps);
        assert_eq!(v.support().len(), tube_potential(eps, &g).unwrap().support().len());
    }

    #[test]
    fn randomize_preserves_norm_and_is_deterministic() {
        let g = make_grid(2, 16.0, 64).unwrap();
        let profile = GridFunction::from_real_fn(g, Space::Position, |x| {
            (-(x[0] * x[0] + x[1] * x[1]) / 8.0).exp()
        });
        let scheme = RandomizationScheme::new(0.5, Distribution::BernoulliSymmetric, 11).unwrap();
        let a = randomize(&profile, &scheme).unwrap();
        let b = randomize(&profile, &scheme).unwrap();
        assert_eq!(a.realized.values(), b.realized.values());
        for q in [1.0, 1.5, 2.0, 3.0] {
            assert_eq!(lp_norm(&a.realized, q), lp_norm(&profile, q));
        }
        let ones = randomize_with(&profile, &scheme, |_| 1.0).unwrap();
        assert_eq!(ones.realized.values(), profile.values());
    }

    #[test]
    fn omega_mean_is_small() {
        let scheme = RandomizationScheme::new(1.0, Distribution::BernoulliSymmetric, 3).unwrap();
        let mut s = 0.0;
        for i in 0..100 {
            for j in 0..100 {
                s += scheme.omega([i, j, 0]);
            }
        }
        assert!((s / 1e4).abs() <= 0.05);
    }

    #[test]
    fn tube_examples() {
        let g = make_grid(2, 64.0, 256).unwrap();
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for eps in [0.25, 0.125, 1.0 / 16.0] {
            let v = tube_potential(eps, &g).unwrap();
            xs.push(f64::ln(eps));
            ys.push(lp_norm(&v, 3.0).ln());
            let measure = v.support().len() as f64 * g.cell_volume();
            let exact = 4.0 * eps.powf(-1.5);
            let layer = 2.0 * (2.0 / eps + 2.0 * eps.powf(-0.5)) * g.dx;
            assert!((measure - exact).abs() <= layer, "eps {eps}: {measure} vs {exact}");
        }
        let slope = crate::experiments::ScalingFit::fit(xs, ys).slope;
        assert!((slope - 0.5).abs() <= 0.1, "slope {slope}");
        let one = tube_potential(1.0, &g).unwrap();
        assert_eq!(one.max_abs(), 1.0);
        assert!(matches!(tube_potential(1.0 / 64.0, &g), Err(Error::BoxTooSmall(_))));
    }

    #[test]
    fn knapp_normalization() {
        let g = make_grid(2, 64.0, 512).unwrap();
        for (r, q) in [(16.0, 3.0), (8.0, 1.5), (4.0, 2.0)] {
            let v = knapp_tube(r, q, &g, false).unwrap();
            assert_relative_eq!(lp_norm(&v, q), 1.0, max_relative = 0.02);
            let s = knapp_tube(r, q, &g, true).unwrap();
            assert_relative_eq!(lp_norm(&s, q), 1.0, max_relative = 1e-12);
        }
        let v = knapp_tube(4.0, 1.0, &g, false).unwrap();
        assert_relative_eq!(v.max_abs(), 1.0 / 32.0, epsilon = 1e-15);
        assert!(matches!(knapp_tube(40.0, 3.0, &g, false), Err(Error::BoxTooSmall(_))));
    }

    #[test]
    fn smooth_tube_gradient() {
        let g = make_grid(2, 64.0, 512).unwrap();
        let r = 16.0;
        let v = knapp_tube(r, 3.0, &g, true).unwrap();
        let n = g.n;
        let mut grad = 0.0f64;
        for i in 1..n - 1 {
            for j in 1..n - 1 {
                let c = v.values()[i * n + j].re;
                let gx = (v.values()[(i + 1) * n + j].re - c) / g.dx;
                let gy = (v.values()[i * n + j + 1].re - c) / g.dx;
                grad = grad.max(gx.hypot(gy));
            }
        }
        let ratio = grad * r.sqrt() / v.max_abs();
        assert!(ratio <= 10.0, "ratio {ratio}");
    }

    #[test]
    fn subgaussian_estimates() {
        let s = RandomizationScheme::new(1.0, Distribution::BernoulliSymmetric, 1).unwrap();
        let x = sample_subgaussian(&s, 1000).unwrap();
        assert_relative_eq!(
            subgaussian_norm_est(&x),
            1.0 / std::f64::consts::LN_2.sqrt(),
            max_relative = 0.05
        );
        assert_eq!(subgaussian_norm_est(&[0.0; 200]), 0.0);
        let s = RandomizationScheme::new(1.0, Distribution::GaussianStandard, 1).unwrap();
        let x = sample_subgaussian(&s, 100_000).unwrap();
        let t = subgaussian_norm_est(&x);
        assert!((1.3..=2.0).contains(&t), "{t}");
        assert!(sample_subgaussian(&s, 10).is_err());
    }

    #[test]
    fn sums_of_subgaussians_scale_like_sqrt_n() {
        let scheme = RandomizationScheme::new(1.0, Distribution::BernoulliSymmetric, 5).unwrap();
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for n in [1usize, 4, 16, 64] {
            let mut rng = ChaCha8Rng::seed_from_u64(17);
            let sums: Vec<f64> = (0..20000)
                .map(|_| (0..n).map(|_| scheme.distribution.draw(&mut rng)).sum())
                .collect();
            xs.push((n as f64).ln());
            ys.push(subgaussian_norm_est(&sums).ln());
        }
        let slope = crate::experiments::ScalingFit::fit(xs, ys).slope;
        assert!((slope - 0.5).abs() <= 0.1, "slope {slope}");
    }
}
