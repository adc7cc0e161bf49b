//! Frequency-space symbols: free resolvent, low/high split, 1/R smoothing,
//! square roots C^(delta) and the bump phi_R.

mod sphere;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

pub use sphere::{
    discres_matrix, e, extension_adjoint, extension_apply, positive_kernel_radius, sphere_net,
    SphereNet,
};

use crate::error::{Error, Result};
use crate::grid::{
    dot, forward_values, inverse_values, norm, BoxGrid, GridFunction, Point, Space, C64,
};

/// Width of the neighbourhood of the unit sphere |2 pi xi| = 1 carrying C^(delta).
pub const ANNULUS_WIDTH: f64 = 0.25;

/// z = (lambda + i eps)^2 with |eps| <= lambda / 10.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexEnergy {
    pub lambda: f64,
    pub eps: f64,
    pub z: C64,
}

impl ComplexEnergy {
    pub fn new(lambda: f64, eps: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::Precondition(format!("lambda = {lambda} must be positive")));
        }
        if eps.abs() > lambda / 10.0 {
            return Err(Error::Precondition(format!("|eps| = {} exceeds lambda/10", eps.abs())));
        }
        Ok(ComplexEnergy { lambda, eps, z: Self::square(lambda, eps) })
    }

    fn square(lambda: f64, eps: f64) -> C64 {
        let k = C64::new(lambda, eps);
        k * k
    }

    /// sqrt(z) with nonnegative imaginary part for eps >= 0.
    pub fn k(&self) -> C64 {
        C64::new(self.lambda, self.eps)
    }

    pub fn is_consistent(&self) -> bool {
        self.z == Self::square(self.lambda, self.eps)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Support {
    Full,
    /// |2 pi xi| <= radius
    Ball { radius: f64 },
    /// inner <= |2 pi xi| <= outer
    Annulus { inner: f64, outer: f64 },
}

#[derive(Clone, Debug)]
pub struct MultiplierSpec {
    pub symbol: GridFunction,
    pub delta: Option<f64>,
    pub support: Support,
    pub smoothing_scale: Option<f64>,
}

impl MultiplierSpec {
    pub fn new(symbol: GridFunction) -> Result<Self> {
        if symbol.space() != Space::Frequency {
            return Err(Error::WrongSpace { expected: Space::Frequency });
        }
        Ok(MultiplierSpec { symbol, delta: None, support: Support::Full, smoothing_scale: None })
    }

    pub fn identity(grid: BoxGrid) -> Self {
        let symbol = GridFunction::from_real_fn(grid, Space::Frequency, |_| 1.0);
        MultiplierSpec { symbol, delta: None, support: Support::Full, smoothing_scale: None }
    }

    pub fn from_radial(grid: BoxGrid, f: impl Fn(f64) -> C64) -> Self {
        let symbol = GridFunction::from_fn(grid, Space::Frequency, |xi| f(2.0 * PI * norm(xi)));
        MultiplierSpec { symbol, delta: None, support: Support::Full, smoothing_scale: None }
    }

    pub fn grid(&self) -> &BoxGrid {
        self.symbol.grid()
    }

    pub fn max_abs(&self) -> f64 {
        self.symbol.max_abs()
    }

    /// m(D) f for position-space f.
    pub fn apply(&self, f: &GridFunction) -> Result<GridFunction> {
        if f.space() != Space::Position {
            return Err(Error::WrongSpace { expected: Space::Position });
        }
        if f.grid() != self.grid() {
            return Err(Error::GridMismatch);
        }
        let mut v = f.values().to_vec();
        self.apply_values(&mut v, false);
        GridFunction::from_values(*f.grid(), Space::Position, v)
    }

    /// In-place m(D) (or its adjoint) on raw position values.
    pub fn apply_values(&self, v: &mut [C64], adjoint: bool) {
        let grid = *self.grid();
        forward_values(&grid, v);
        for (x, m) in v.iter_mut().zip(self.symbol.values()) {
            *x *= if adjoint { m.conj() } else { *m };
        }
        inverse_values(&grid, v);
    }

    /// Convolution kernel: inverse transform of the symbol.
    pub fn kernel(&self) -> GridFunction {
        let mut v = self.symbol.values().to_vec();
        inverse_values(self.grid(), &mut v);
        GridFunction::from_values(*self.grid(), Space::Position, v).expect("same grid")
    }

    /// Pointwise check |m| <= k (||2 pi xi|^2 - 1| + delta)^(-1/2); returns the
    /// smallest admissible k.
    pub fn cdelta_constant(&self, delta: f64) -> f64 {
        let mut k = 0.0f64;
        for (i, m) in self.symbol.values().iter().enumerate() {
            let s = 2.0 * PI * norm(&self.symbol.grid().freq(i));
            let bound = ((s * s - 1.0).abs() + delta).powf(-0.5);
            k = k.max(m.norm() / bound);
        }
        k
    }
}

/// C-infinity step: 0 for t <= 0, 1 for t >= 1.
pub fn smooth_step(t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    if t >= 1.0 {
        return 1.0;
    }
    let a = (-1.0 / t).exp();
    let b = (-1.0 / (1.0 - t)).exp();
    a / (a + b)
}

/// The cutoff gamma^vee: 1 on [0, 1], 0 beyond 2, smooth and even.
pub fn gamma_cutoff(r: f64) -> f64 {
    1.0 - smooth_step(r.abs() - 1.0)
}

/// chi(|2 pi xi|): 1 on [0, 3/2], 0 beyond 2.
pub fn low_cutoff(s: f64) -> f64 {
    1.0 - smooth_step((s - 1.5) / 0.5)
}

/// 1 for |s - 1| <= c/2, 0 for |s - 1| >= c.
fn annulus_cutoff(s: f64, c: f64) -> f64 {
    1.0 - smooth_step(2.0 * (s - 1.0).abs() / c - 1.0)
}

fn two_pi_abs(grid: &BoxGrid, i: usize) -> f64 {
    2.0 * PI * norm(&grid.freq(i))
}

/// m(xi) = (|2 pi xi|^2 - z)^(-1); eps = 0 requires a regularization eps0.
pub fn resolvent_symbol(
    z: &ComplexEnergy,
    grid: &BoxGrid,
    regularization: Option<f64>,
) -> Result<MultiplierSpec> {
    let zz = if z.eps == 0.0 {
        match regularization {
            Some(e0) if e0 > 0.0 => ComplexEnergy::new(z.lambda, e0)?.z,
            _ => return Err(Error::SingularSymbol),
        }
    } else {
        z.z
    };
    let symbol = GridFunction::from_fn(*grid, Space::Frequency, |xi| {
        let s2 = 4.0 * PI * PI * dot(xi, xi);
        1.0 / (C64::new(s2, 0.0) - zz)
    });
    Ok(MultiplierSpec { symbol, delta: None, support: Support::Full, smoothing_scale: None })
}

/// low = chi m, high = m - low.
pub fn lowhigh_split(m: &MultiplierSpec) -> (MultiplierSpec, MultiplierSpec) {
    let grid = *m.grid();
    let mut low = m.clone();
    let mut high = m.clone();
    for (i, (l, h)) in low.symbol.values_mut().iter_mut().zip(high.symbol.values_mut()).enumerate() {
        let chi = low_cutoff(two_pi_abs(&grid, i));
        let orig = *l;
        *l = orig * chi;
        *h = orig - *l;
    }
    low.support = Support::Ball { radius: 2.0 };
    (low, high)
}

fn check_smoothing_box(grid: &BoxGrid, r: f64) -> Result<()> {
    if r < 1.0 {
        return Err(Error::Precondition(format!("smoothing scale R = {r} must be >= 1")));
    }
    if 2.0 * r > grid.l / 2.0 {
        return Err(Error::BoxTooSmall(format!("cutoff support 2R = {} exceeds L/2 = {}", 2.0 * r, grid.l / 2.0)));
    }
    Ok(())
}

fn smoothed_from_kernel(mut kernel: Vec<C64>, grid: &BoxGrid, r: f64) -> Vec<C64> {
    for (i, k) in kernel.iter_mut().enumerate() {
        *k *= gamma_cutoff(norm(&grid.point(i)) / r);
    }
    forward_values(grid, &mut kernel);
    kernel
}

/// gamma_R * m: the kernel of m multiplied by gamma^vee(x / R).
pub fn smooth_symbol(m: &MultiplierSpec, r: f64) -> Result<MultiplierSpec> {
    let grid = *m.grid();
    check_smoothing_box(&grid, r)?;
    let kernel = m.kernel().into_values();
    let values = smoothed_from_kernel(kernel, &grid, r);
    Ok(MultiplierSpec {
        symbol: GridFunction::from_values(grid, Space::Frequency, values)?,
        delta: m.delta,
        support: Support::Full,
        smoothing_scale: Some(r),
    })
}

/// Free-space outgoing kernel of (-Delta - k^2)^(-1) at |x| = r, real k > 0.
/// At r = 0 the cell average over a ball of volume `cell` is returned.
pub fn outgoing_kernel(d: usize, k: f64, r: f64, cell: f64) -> C64 {
    let i = C64::new(0.0, 1.0);
    match d {
        1 => i * C64::new(0.0, k * r).exp() / (2.0 * k),
        2 => {
            if r == 0.0 {
                let a = (cell / PI).sqrt();
                let j = 1.0 - (k * a).powi(2) / 8.0;
                let y = 2.0 / PI * ((k * a / 2.0).ln() - 0.5 + EULER_GAMMA);
                i / 4.0 * C64::new(j, y)
            } else {
                let x = k * r;
                i / 4.0 * C64::new(puruspe::Jn(0, x), puruspe::Yn(0, x))
            }
        }
        _ => {
            if r == 0.0 {
                let a = (3.0 * cell / (4.0 * PI)).cbrt();
                (C64::new(1.5 / a, 0.0) + i * k) / (4.0 * PI)
            } else {
                C64::new(0.0, k * r).exp() / (4.0 * PI * r)
            }
        }
    }
}

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// gamma_R * m for z = (lambda + i eps)^2; at eps = 0 the smoothing itself
/// regularizes via the outgoing free-space kernel.
pub fn smoothed_resolvent(z: &ComplexEnergy, grid: &BoxGrid, r: f64) -> Result<MultiplierSpec> {
    if z.eps != 0.0 {
        return smooth_symbol(&resolvent_symbol(z, grid, None)?, r);
    }
    check_smoothing_box(grid, r)?;
    let cell = grid.cell_volume();
    let kernel: Vec<C64> = (0..grid.len())
        .map(|i| outgoing_kernel(grid.d, z.lambda, norm(&grid.point(i)), cell))
        .collect();
    let values = smoothed_from_kernel(kernel, grid, r);
    Ok(MultiplierSpec {
        symbol: GridFunction::from_values(*grid, Space::Frequency, values)?,
        delta: None,
        support: Support::Full,
        smoothing_scale: Some(r),
    })
}

fn lattice_neighbours(grid: &BoxGrid, i: usize) -> impl Iterator<Item = usize> + '_ {
    let m = grid.unravel(i);
    (0..grid.d).flat_map(move |a| {
        let mut out = [None, None];
        if m[a] + 1 < grid.n {
            let mut m2 = m;
            m2[a] += 1;
            out[0] = Some(grid.ravel(m2));
        }
        if m[a] > 0 {
            let mut m2 = m;
            m2[a] -= 1;
            out[1] = Some(grid.ravel(m2));
        }
        out.into_iter().flatten()
    })
}

/// Argument of the symbol on the support of `cut`, continued along lattice edges from
/// the principal value at one point per component; it equals the principal argument
/// unless the symbol crosses the negative real axis. A winding around 0 leaves an
/// edge whose continued arguments differ by more than pi, which is reported.
fn continued_phase(grid: &BoxGrid, vals: &[C64], cut: &[f64]) -> Result<Vec<f64>> {
    let live = |i: usize| cut[i] != 0.0 && vals[i].norm() > 0.0;
    let mut phase = vec![f64::NAN; grid.len()];
    let mut queue = std::collections::VecDeque::new();
    for seed in 0..grid.len() {
        if !live(seed) || !phase[seed].is_nan() {
            continue;
        }
        phase[seed] = vals[seed].arg();
        queue.push_back(seed);
        while let Some(i) = queue.pop_front() {
            for j in lattice_neighbours(grid, i) {
                if live(j) && phase[j].is_nan() {
                    let step = (vals[j] / vals[i]).arg();
                    phase[j] = phase[i] + step;
                    queue.push_back(j);
                }
            }
        }
    }
    for i in (0..grid.len()).filter(|&i| live(i)) {
        for j in lattice_neighbours(grid, i).filter(|&j| live(j)) {
            if (phase[i] - phase[j]).abs() > PI {
                return Err(Error::BranchAmbiguity(format!(
                    "symbol winds around 0 near {:?} and {:?}",
                    grid.freq(i),
                    grid.freq(j)
                )));
            }
        }
    }
    Ok(phase.into_iter().map(|p| if p.is_nan() { 0.0 } else { p }).collect())
}

/// Square root of gamma_R * m, R = 1/delta, cut smoothly to the
/// ANNULUS_WIDTH-neighbourhood of the unit sphere; principal branch continued
/// across the negative real axis.
pub fn cdelta_sqrt(m_smoothed: &MultiplierSpec, delta: f64) -> Result<MultiplierSpec> {
    if !(delta > 0.0) {
        return Err(Error::Precondition(format!("delta = {delta} must be positive")));
    }
    if let Some(r) = m_smoothed.smoothing_scale {
        if (r * delta - 1.0).abs() > 1e-9 {
            return Err(Error::Precondition(format!("smoothing scale {r} is not 1/delta")));
        }
    }
    let grid = *m_smoothed.grid();
    let vals = m_smoothed.symbol.values();
    let cut: Vec<f64> = (0..grid.len()).map(|i| annulus_cutoff(two_pi_abs(&grid, i), ANNULUS_WIDTH)).collect();
    let phase = continued_phase(&grid, vals, &cut)?;
    let values = (0..grid.len())
        .map(|i| if cut[i] == 0.0 { C64::new(0.0, 0.0) } else { C64::from_polar(vals[i].norm().sqrt() * cut[i], phase[i] / 2.0) })
        .collect();
    Ok(MultiplierSpec {
        symbol: GridFunction::from_values(grid, Space::Frequency, values)?,
        delta: Some(delta),
        support: Support::Annulus { inner: 1.0 - ANNULUS_WIDTH, outer: 1.0 + ANNULUS_WIDTH },
        smoothing_scale: m_smoothed.smoothing_scale,
    })
}

/// phi_R (frequency side) and its transform phi^_R (position side).
#[derive(Clone, Debug)]
pub struct PhiBump {
    pub spec: MultiplierSpec,
    pub phi_hat: GridFunction,
    pub constant: f64,
}

fn bump(t: f64) -> f64 {
    if t >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - t * t)).exp()
    }
}

fn reflect(grid: &BoxGrid, i: usize) -> usize {
    let m = grid.unravel(i);
    let mut r = [0usize; 3];
    for a in 0..grid.d {
        r[a] = (grid.n - m[a]) % grid.n;
    }
    grid.ravel(r)
}

/// phi = c psi * psi with psi a bump of radius 1/(2R); phi^ = c psi^2 >= 1 on B(0, R).
pub fn make_phi(r: f64, grid: &BoxGrid) -> Result<PhiBump> {
    if r < 1.0 {
        return Err(Error::Precondition(format!("R = {r} must be >= 1")));
    }
    if r >= grid.l / 2.0 {
        return Err(Error::BoxTooSmall(format!("ball of radius {r} in a box of side {}", grid.l)));
    }
    let a = 1.0 / (2.0 * r);
    if a < 2.0 * grid.dxi {
        return Err(Error::InvalidGrid(format!("frequency step {} cannot resolve radius {a}", grid.dxi)));
    }
    let mut psi_hat: Vec<C64> = (0..grid.len()).map(|i| C64::new(bump(norm(&grid.freq(i)) / a), 0.0)).collect();
    inverse_values(grid, &mut psi_hat);
    let sym: Vec<f64> = (0..grid.len()).map(|i| 0.5 * (psi_hat[i].re + psi_hat[reflect(grid, i)].re)).collect();
    let mut min = f64::INFINITY;
    for (i, &v) in sym.iter().enumerate() {
        if norm(&grid.point(i)) <= r {
            min = min.min(v);
        }
    }
    if min <= 0.0 {
        return Err(Error::Precondition("psi^ vanishes inside B(0, R)".into()));
    }
    let constant = 1.0 / (min * min);
    let phi_hat_vals: Vec<C64> = sym.iter().map(|v| C64::new(constant * v * v, 0.0)).collect();
    let mut phi = phi_hat_vals.clone();
    forward_values(grid, &mut phi);
    let phi_sym: Vec<C64> = (0..grid.len())
        .map(|i| {
            let v = 0.5 * (phi[i].re + phi[reflect(grid, i)].re);
            let xi: Point = grid.freq(i);
            C64::new(if norm(&xi) > 1.0 / r { 0.0 } else { v }, 0.0)
        })
        .collect();
    let truncated = (0..grid.len())
        .filter(|&i| norm(&grid.freq(i)) > 1.0 / r)
        .map(|i| phi[i].norm())
        .fold(0.0, f64::max);
    if truncated > 1e-10 * phi_sym.iter().map(|v| v.norm()).fold(0.0, f64::max).max(1.0) {
        return Err(Error::Precondition(format!("phi leaks {truncated} outside B(0, 1/R)")));
    }
    Ok(PhiBump {
        spec: MultiplierSpec {
            symbol: GridFunction::from_values(*grid, Space::Frequency, phi_sym)?,
            delta: None,
            support: Support::Ball { radius: 2.0 * PI / r },
            smoothing_scale: None,
        },
        phi_hat: GridFunction::from_values(*grid, Space::Position, phi_hat_vals)?,
        constant,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{fft_forward, make_grid};
    use approx::assert_relative_eq;

    #[test]
    fn energy_checks() {
        let z = ComplexEnergy::new(1.0, 0.1).unwrap();
        assert!(z.is_consistent());
        assert!(ComplexEnergy::new(1.0, 0.2).is_err());
        assert!(ComplexEnergy::new(-1.0, 0.0).is_err());
    }

    #[test]
    fn resolvent_examples() {
        let g = make_grid(2, 16.0, 64).unwrap();
        let z = ComplexEnergy::new(1.0, 0.1).unwrap();
        let m = resolvent_symbol(&z, &g, None).unwrap();
        let origin = g.ravel([32, 32, 0]);
        let expect = -1.0 / (C64::new(1.0, 0.1) * C64::new(1.0, 0.1));
        assert!((m.symbol.values()[origin] - expect).norm() < 1e-15);
        for i in 0..g.len() {
            let j = reflect(&g, i);
            if g.unravel(i).iter().take(2).all(|&k| k > 0) {
                assert_eq!(m.symbol.values()[i], m.symbol.values()[j]);
            }
        }
        let z0 = ComplexEnergy::new(1.0, 0.0).unwrap();
        assert!(matches!(resolvent_symbol(&z0, &g, None), Err(Error::SingularSymbol)));
        assert!(resolvent_symbol(&z0, &g, Some(0.05)).is_ok());
    }

    #[test]
    fn resolvent_peak_on_sphere() {
        let g = make_grid(1, 2.0 * PI * 32.0, 128).unwrap();
        let eps = 0.01;
        let z = ComplexEnergy::new(1.0, eps).unwrap();
        let m = resolvent_symbol(&z, &g, None).unwrap();
        // xi = 32 dxi = 1/(2 pi) lies on the sphere
        let on = m.symbol.values()[64 + 32].norm();
        assert_relative_eq!(on, 1.0 / (2.0 * eps), max_relative = 0.01);
    }

    #[test]
    fn split_examples() {
        let g = make_grid(2, 8.0, 64).unwrap();
        let m = resolvent_symbol(&ComplexEnergy::new(1.0, 0.1).unwrap(), &g, None).unwrap();
        let (low, high) = lowhigh_split(&m);
        let mut c = 0.0f64;
        for i in 0..g.len() {
            let s = two_pi_abs(&g, i);
            let (l, h) = (low.symbol.values()[i], high.symbol.values()[i]);
            assert_eq!(l + h, m.symbol.values()[i]);
            if s >= 2.0 {
                assert_eq!(l, C64::new(0.0, 0.0));
            }
            if s == 0.0 {
                assert_eq!(h, C64::new(0.0, 0.0));
            }
            c = c.max(h.norm() * (1.0 + s * s));
        }
        assert!(c <= 4.0, "elliptic constant {c}");
    }

    #[test]
    fn smoothing_bounded_symbol_is_stable() {
        let g = make_grid(2, 64.0, 128).unwrap();
        let m = resolvent_symbol(&ComplexEnergy::new(5.0, 0.5).unwrap(), &g, None).unwrap();
        let ms = smooth_symbol(&m, 8.0).unwrap();
        let ratio = ms.max_abs() / m.max_abs();
        assert!((ratio - 1.0).abs() <= 0.1, "ratio {ratio}");
        assert!(smooth_symbol(&m, 20.0).is_err());
    }

    #[test]
    fn outgoing_kernels_solve_helmholtz_away_from_origin() {
        // 1-D: the kernel is i e^{i|x|}/2 for k = 1
        let g1 = outgoing_kernel(1, 1.0, 2.0, 0.0);
        assert!((g1 - C64::new(0.0, 0.5) * C64::new(0.0, 2.0).exp()).norm() < 1e-15);
        let g3 = outgoing_kernel(3, 1.0, 2.0, 0.0);
        assert_relative_eq!(g3.norm(), 1.0 / (8.0 * PI), epsilon = 1e-15);
        // 2-D: check -f'' - f'/r - f = 0 numerically
        let f = |r: f64| outgoing_kernel(2, 1.0, r, 0.0);
        let (r, h) = (3.0, 1e-3);
        let lap = (f(r + h) - 2.0 * f(r) + f(r - h)) / (h * h) + (f(r + h) - f(r - h)) / (2.0 * h * r);
        assert!((lap + f(r)).norm() < 1e-5);
    }

    #[test]
    fn cdelta_zero_symbol() {
        let g = make_grid(2, 16.0, 32).unwrap();
        let m = MultiplierSpec::new(GridFunction::zeros(g, Space::Frequency)).unwrap();
        let c = cdelta_sqrt(&m, 1.0).unwrap();
        assert_eq!(c.max_abs(), 0.0);
        // bound at |2 pi xi| = sqrt 2 with delta = 1
        assert!((((2.0f64 - 1.0).abs() + 1.0).powf(-0.5)) <= 1.0);
    }

    #[test]
    fn cdelta_flags_winding_and_continues_crossings() {
        let g = make_grid(1, 64.0, 64).unwrap();
        let sym = GridFunction::from_fn(g, Space::Frequency, |xi| {
            C64::new(-1.0, if xi[0] > 1.0 / (2.0 * PI) { 0.1 } else { -0.1 })
        });
        let c = cdelta_sqrt(&MultiplierSpec::new(sym.clone()).unwrap(), 1.0).unwrap();
        // freq 10/64 and 11/64 on either side of 1/(2 pi)
        let (a, b) = (42, 43);
        let (u, v) = (c.symbol.values()[a], c.symbol.values()[b]);
        assert!((u * u / (annulus_cutoff(two_pi_abs(&g, a), ANNULUS_WIDTH).powi(2)) - sym.values()[a]).norm() < 1e-12);
        assert!(u.im * v.im > 0.0 && (u - v).norm() < 0.2);
        let g2 = make_grid(2, 32.0, 64).unwrap();
        let wind = GridFunction::from_fn(g2, Space::Frequency, |xi| C64::new(xi[0], xi[1]));
        assert!(matches!(cdelta_sqrt(&MultiplierSpec::new(wind).unwrap(), 1.0), Err(Error::BranchAmbiguity(_))));
    }

    #[test]
    fn phi_properties() {
        let g = make_grid(2, 64.0, 64).unwrap();
        let r = 4.0;
        let phi = make_phi(r, &g).unwrap();
        for i in 0..g.len() {
            let x = g.point(i);
            let v = phi.phi_hat.values()[i].re;
            assert!(v >= 0.0);
            assert_eq!(v, phi.phi_hat.values()[reflect(&g, i)].re);
            if norm(&x) <= r {
                assert!(v >= 1.0 - 1e-12);
            }
            if norm(&g.freq(i)) > 1.0 / r {
                assert!(phi.spec.symbol.values()[i].norm() <= 1e-10);
            }
        }
        let origin = g.ravel([32, 32, 0]);
        assert!(phi.phi_hat.values()[origin].re >= 1.0);
        // the two sides are a transform pair
        let back = fft_forward(&phi.phi_hat).unwrap();
        let err: f64 = back.values().iter().zip(phi.spec.symbol.values()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-9 * phi.spec.max_abs());
    }
}
