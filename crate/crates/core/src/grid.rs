//! Periodic box discretization of R^d, spectral transforms and norms.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// A point of R^d padded with zeros to three coordinates.
pub type Point = [f64; 3];

pub fn dot(a: &Point, b: &Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn norm(a: &Point) -> f64 {
    dot(a, a).sqrt()
}

pub fn dist(a: &Point, b: &Point) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    norm(&d)
}

pub fn dist_inf(a: &Point, b: &Point) -> f64 {
    (a[0] - b[0])
        .abs()
        .max((a[1] - b[1]).abs())
        .max((a[2] - b[2]).abs())
}

/// Cube of side `n` in dimension `d`, i.e. n^d, with overflow detection.
pub fn checked_pow(n: usize, d: usize) -> Option<usize> {
    let mut total = 1usize;
    for _ in 0..d {
        total = total.checked_mul(n)?;
    }
    Some(total)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxGrid {
    pub d: usize,
    pub l: f64,
    pub n: usize,
    pub dx: f64,
    pub dxi: f64,
}

pub fn make_grid(d: usize, l: f64, n: usize) -> Result<BoxGrid> {
    BoxGrid::new(d, l, n)
}

impl BoxGrid {
    pub fn new(d: usize, l: f64, n: usize) -> Result<Self> {
        if !(1..=3).contains(&d) {
            return Err(Error::InvalidDimension(d));
        }
        if !(l.is_finite() && l > 0.0) {
            return Err(Error::InvalidGrid(format!("box length {l} must be positive")));
        }
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::InvalidGrid(format!("N = {n} must be a power of two >= 8")));
        }
        let total = checked_pow(n, d)
            .ok_or_else(|| Error::SizeOverflow(format!("{n}^{d} points")))?;
        // complex values are 16 bytes each
        if total.checked_mul(16).is_none() || total > isize::MAX as usize / 16 {
            return Err(Error::SizeOverflow(format!("{n}^{d} points")));
        }
        Ok(BoxGrid { d, l, n, dx: l / n as f64, dxi: 1.0 / l })
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn cell_volume(&self) -> f64 {
        self.dx.powi(self.d as i32)
    }

    pub fn freq_volume(&self) -> f64 {
        self.dxi.powi(self.d as i32)
    }

    /// Row-major multi-index, axis 0 slowest. Unused axes are 0.
    pub fn unravel(&self, mut idx: usize) -> [usize; 3] {
        let mut m = [0usize; 3];
        for a in (0..self.d).rev() {
            m[a] = idx % self.n;
            idx /= self.n;
        }
        m
    }

    pub fn ravel(&self, m: [usize; 3]) -> usize {
        let mut idx = 0;
        for &ma in m.iter().take(self.d) {
            idx = idx * self.n + ma;
        }
        idx
    }

    pub fn coord(&self, i: usize) -> f64 {
        (i as f64 - (self.n / 2) as f64) * self.dx
    }

    pub fn freq_coord(&self, k: usize) -> f64 {
        (k as f64 - (self.n / 2) as f64) * self.dxi
    }

    pub fn point(&self, idx: usize) -> Point {
        let m = self.unravel(idx);
        let mut p = [0.0; 3];
        for a in 0..self.d {
            p[a] = self.coord(m[a]);
        }
        p
    }

    pub fn freq(&self, idx: usize) -> Point {
        let m = self.unravel(idx);
        let mut p = [0.0; 3];
        for a in 0..self.d {
            p[a] = self.freq_coord(m[a]);
        }
        p
    }

    /// Position box is [-L/2, L/2)^d.
    pub fn contains(&self, p: &Point) -> bool {
        (0..self.d).all(|a| p[a] >= -self.l / 2.0 && p[a] < self.l / 2.0)
    }

    pub fn nearest_index(&self, p: &Point) -> Result<usize> {
        if !self.contains(p) {
            return Err(Error::PointOutsideBox(*p));
        }
        let mut m = [0usize; 3];
        for a in 0..self.d {
            let i = (p[a] / self.dx).round() as i64 + (self.n / 2) as i64;
            m[a] = i.rem_euclid(self.n as i64) as usize;
        }
        Ok(self.ravel(m))
    }

    /// Index holding the displacement x_a - x_b in the centered layout
    /// (periodic, minimum image).
    pub fn offset_index(&self, a: usize, b: usize) -> usize {
        let ma = self.unravel(a);
        let mb = self.unravel(b);
        let mut m = [0usize; 3];
        let n = self.n as i64;
        for ax in 0..self.d {
            let diff = ma[ax] as i64 - mb[ax] as i64 + n / 2;
            m[ax] = diff.rem_euclid(n) as usize;
        }
        self.ravel(m)
    }

    /// Minimum-image length of the position at `idx`.
    pub fn periodic_radius(&self, idx: usize) -> f64 {
        norm(&self.point(idx))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Space {
    Position,
    Frequency,
}

#[derive(Clone, Debug)]
pub struct GridFunction {
    grid: BoxGrid,
    values: Vec<C64>,
    space: Space,
}

impl GridFunction {
    pub fn zeros(grid: BoxGrid, space: Space) -> Self {
        GridFunction { grid, values: vec![C64::new(0.0, 0.0); grid.len()], space }
    }

    pub fn from_values(grid: BoxGrid, space: Space, values: Vec<C64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "{} values for a grid of {} points",
                values.len(),
                grid.len()
            )));
        }
        Ok(GridFunction { grid, values, space })
    }

    /// Samples `f` at lattice positions (or lattice frequencies).
    pub fn from_fn(grid: BoxGrid, space: Space, f: impl Fn(&Point) -> C64) -> Self {
        let values = (0..grid.len())
            .map(|i| match space {
                Space::Position => f(&grid.point(i)),
                Space::Frequency => f(&grid.freq(i)),
            })
            .collect();
        GridFunction { grid, values, space }
    }

    pub fn from_real_fn(grid: BoxGrid, space: Space, f: impl Fn(&Point) -> f64) -> Self {
        Self::from_fn(grid, space, |p| C64::new(f(p), 0.0))
    }

    pub fn grid(&self) -> &BoxGrid {
        &self.grid
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [C64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<C64> {
        self.values
    }

    /// Lattice location of entry `i` in this function's space.
    pub fn location(&self, i: usize) -> Point {
        match self.space {
            Space::Position => self.grid.point(i),
            Space::Frequency => self.grid.freq(i),
        }
    }

    pub fn measure(&self) -> f64 {
        match self.space {
            Space::Position => self.grid.cell_volume(),
            Space::Frequency => self.grid.freq_volume(),
        }
    }

    pub fn map(&self, f: impl Fn(C64) -> C64) -> Self {
        GridFunction {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
            space: self.space,
        }
    }

    pub fn scaled(&self, c: C64) -> Self {
        self.map(|v| v * c)
    }

    fn check_compatible(&self, other: &GridFunction) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        if self.space != other.space {
            return Err(Error::WrongSpace { expected: self.space });
        }
        Ok(())
    }

    pub fn add(&self, other: &GridFunction) -> Result<Self> {
        self.check_compatible(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect();
        Ok(GridFunction { grid: self.grid, values, space: self.space })
    }

    pub fn sub(&self, other: &GridFunction) -> Result<Self> {
        self.check_compatible(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Ok(GridFunction { grid: self.grid, values, space: self.space })
    }

    pub fn mul(&self, other: &GridFunction) -> Result<Self> {
        self.check_compatible(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a * b).collect();
        Ok(GridFunction { grid: self.grid, values, space: self.space })
    }

    pub fn l2_norm(&self) -> f64 {
        (self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.measure()).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn is_real(&self) -> bool {
        self.values.iter().all(|v| v.im == 0.0)
    }

    /// Indices where the function is nonzero.
    pub fn support(&self) -> Vec<usize> {
        (0..self.values.len()).filter(|&i| self.values[i] != C64::new(0.0, 0.0)).collect()
    }
}

fn plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    static PLANS: OnceLock<Mutex<HashMap<(usize, bool), Arc<dyn Fft<f64>>>>> = OnceLock::new();
    let plans = PLANS.get_or_init(|| Mutex::new(HashMap::new()));
    let mut plans = plans.lock().unwrap_or_else(|e| e.into_inner());
    plans
        .entry((n, inverse))
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            if inverse {
                planner.plan_fft_inverse(n)
            } else {
                planner.plan_fft_forward(n)
            }
        })
        .clone()
}

/// Unnormalized in-place d-dimensional DFT on a row-major n^d array.
pub(crate) fn fft_nd(values: &mut [C64], n: usize, d: usize, inverse: bool) {
    fft_dims(values, &vec![n; d], inverse);
}

/// Unnormalized in-place DFT on a row-major array of shape `dims`.
pub(crate) fn fft_dims(values: &mut [C64], dims: &[usize], inverse: bool) {
    let d = dims.len();
    for axis in 0..d {
        let n = dims[axis];
        if n == 1 {
            continue;
        }
        let fft = plan(n, inverse);
        let mut scratch = vec![C64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        let stride: usize = dims[axis + 1..].iter().product();
        if stride == 1 {
            fft.process_with_scratch(values, &mut scratch);
            continue;
        }
        let block = n * stride;
        let mut buf = vec![C64::new(0.0, 0.0); block];
        for chunk in values.chunks_mut(block) {
            for m in 0..n {
                for t in 0..stride {
                    buf[t * n + m] = chunk[m * stride + t];
                }
            }
            fft.process_with_scratch(&mut buf, &mut scratch);
            for m in 0..n {
                for t in 0..stride {
                    chunk[m * stride + t] = buf[t * n + m];
                }
            }
        }
    }
}

/// Multiplies by (-1)^(i_1 + ... + i_d); this recenters both lattices.
fn checkerboard(values: &mut [C64], grid: &BoxGrid) {
    let n = grid.n;
    for (idx, v) in values.iter_mut().enumerate() {
        let mut s = 0usize;
        let mut r = idx;
        for _ in 0..grid.d {
            s += r % n;
            r /= n;
        }
        if s % 2 == 1 {
            *v = -*v;
        }
    }
}

pub(crate) fn forward_values(grid: &BoxGrid, values: &mut [C64]) {
    checkerboard(values, grid);
    fft_nd(values, grid.n, grid.d, false);
    checkerboard(values, grid);
    let s = grid.cell_volume();
    values.iter_mut().for_each(|v| *v *= s);
}

pub(crate) fn inverse_values(grid: &BoxGrid, values: &mut [C64]) {
    checkerboard(values, grid);
    fft_nd(values, grid.n, grid.d, true);
    checkerboard(values, grid);
    let s = grid.freq_volume();
    values.iter_mut().for_each(|v| *v *= s);
}

/// f^(xi) = sum_x f(x) e(-x.xi) dx^d on the centered frequency lattice.
pub fn fft_forward(f: &GridFunction) -> Result<GridFunction> {
    if f.space != Space::Position {
        return Err(Error::WrongSpace { expected: Space::Position });
    }
    let mut values = f.values.clone();
    forward_values(&f.grid, &mut values);
    Ok(GridFunction { grid: f.grid, values, space: Space::Frequency })
}

/// f(x) = sum_xi F(xi) e(x.xi) dxi^d.
pub fn fft_inverse(f: &GridFunction) -> Result<GridFunction> {
    if f.space != Space::Frequency {
        return Err(Error::WrongSpace { expected: Space::Frequency });
    }
    let mut values = f.values.clone();
    inverse_values(&f.grid, &mut values);
    Ok(GridFunction { grid: f.grid, values, space: Space::Position })
}

/// Riemann-sum L^p norm; `p = f64::INFINITY` gives the sup norm.
pub fn lp_norm(f: &GridFunction, p: f64) -> f64 {
    if p.is_infinite() {
        return f.max_abs();
    }
    let s: f64 = f.values.iter().map(|v| v.norm().powf(p)).sum();
    (s * f.measure()).powf(1.0 / p)
}

/// sup_t t |{|f| > t}|^(1/q), attained as t increases to an attained value.
pub fn lorentz_weak_norm(f: &GridFunction, q: f64) -> f64 {
    let mut mags: Vec<f64> = f.values.iter().map(|v| v.norm()).filter(|&a| a > 0.0).collect();
    mags.sort_by(|a, b| b.total_cmp(a));
    let mu = f.measure();
    let mut best = 0.0f64;
    let mut k = 0;
    while k < mags.len() {
        let a = mags[k];
        let mut j = k;
        while j < mags.len() && mags[j] == a {
            j += 1;
        }
        best = best.max(a * (j as f64 * mu).powf(1.0 / q));
        k = j;
    }
    best
}

/// (1 + dist(x, Q)/h)^(-100 d) for the cube Q = corner + [0, h]^d.
pub fn weight_wq(x: &Point, corner: &Point, h: f64, d: usize) -> f64 {
    let mut s = 0.0;
    for a in 0..d {
        let lo = corner[a];
        let hi = corner[a] + h;
        let g = if x[a] < lo {
            lo - x[a]
        } else if x[a] > hi {
            x[a] - hi
        } else {
            0.0
        };
        s += g * g;
    }
    let w = (1.0 + s.sqrt() / h).powf(-100.0 * d as f64);
    if w < 1e-300 {
        0.0
    } else {
        w
    }
}

/// Finite point set with its minimal pairwise distance.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SeparatedSet {
    pub d: usize,
    pub points: Vec<Point>,
    pub separation: f64,
}

impl SeparatedSet {
    /// Records the actual minimal pairwise distance.
    pub fn new(d: usize, points: Vec<Point>) -> Self {
        let separation = min_pairwise_distance(&points);
        SeparatedSet { d, points, separation }
    }

    pub fn with_separation(d: usize, points: Vec<Point>, separation: f64) -> Result<Self> {
        let actual = min_pairwise_distance(&points);
        if actual < separation {
            return Err(Error::Precondition(format!(
                "points are only {actual}-separated, {separation} requested"
            )));
        }
        Ok(SeparatedSet { d, points, separation })
    }

    /// spacing * Z^d intersected with the closed ball B(center, radius),
    /// ordered by distance to the center then lexicographically.
    pub fn lattice_in_ball(d: usize, spacing: f64, center: Point, radius: f64) -> Self {
        let k = (radius / spacing).floor() as i64;
        let mut pts: Vec<Point> = Vec::new();
        let range = |a: usize| if a < d { -k..=k } else { 0..=0 };
        for i in range(0) {
            for j in range(1) {
                for l in range(2) {
                    let p = [
                        center[0] + i as f64 * spacing,
                        center[1] + j as f64 * spacing,
                        center[2] + l as f64 * spacing,
                    ];
                    if dist(&p, &center) <= radius + 1e-12 {
                        pts.push(p);
                    }
                }
            }
        }
        pts.sort_by(|a, b| {
            dist(a, &center)
                .total_cmp(&dist(b, &center))
                .then(a[0].total_cmp(&b[0]))
                .then(a[1].total_cmp(&b[1]))
                .then(a[2].total_cmp(&b[2]))
        });
        let separation = if pts.len() > 1 { spacing } else { f64::INFINITY };
        SeparatedSet { d, points: pts, separation }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Exhaustive minimal pairwise distance (sweep over the first coordinate).
pub fn min_pairwise_distance(points: &[Point]) -> f64 {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points[a][0].total_cmp(&points[b][0]));
    let mut best = f64::INFINITY;
    for (i, &a) in order.iter().enumerate() {
        for &b in &order[i + 1..] {
            if points[b][0] - points[a][0] >= best {
                break;
            }
            best = best.min(dist(&points[a], &points[b]));
        }
    }
    best
}

/// (sum_{nu in set} |f(nu)|^p)^(1/p) with nearest-grid-point evaluation.
pub fn sample_on_set(f: &GridFunction, set: &SeparatedSet, p: f64) -> Result<f64> {
    let mut vals = Vec::with_capacity(set.len());
    for pt in &set.points {
        let i = f.grid.nearest_index(pt)?;
        vals.push(f.values[i].norm());
    }
    if p.is_infinite() {
        return Ok(vals.into_iter().fold(0.0, f64::max));
    }
    Ok(vals.iter().map(|v| v.powf(p)).sum::<f64>().powf(1.0 / p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn grid_arithmetic() {
        let g = make_grid(1, 32.0, 64).unwrap();
        assert_eq!(g.dx, 0.5);
        assert_eq!(g.dxi, 1.0 / 32.0);
        let g = make_grid(2, 16.0, 128).unwrap();
        assert_eq!(g.dx, 0.125);
        assert!(matches!(make_grid(4, 8.0, 32), Err(Error::InvalidDimension(4))));
        assert!(make_grid(2, 8.0, 48).is_err());
        assert!(make_grid(2, -1.0, 64).is_err());
        assert!(matches!(make_grid(3, 1.0, 1 << 40), Err(Error::SizeOverflow(_))));
    }

    #[test]
    fn ravel_roundtrip_and_centering() {
        let g = make_grid(3, 8.0, 8).unwrap();
        for idx in [0, 7, 100, 511] {
            assert_eq!(g.ravel(g.unravel(idx)), idx);
        }
        let origin = g.ravel([4, 4, 4]);
        assert_eq!(g.point(origin), [0.0, 0.0, 0.0]);
        assert_eq!(g.nearest_index(&[0.1, -0.2, 0.0]).unwrap(), origin);
        assert!(g.nearest_index(&[4.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn constant_maps_to_dc_mass() {
        let g = make_grid(2, 4.0, 16).unwrap();
        let f = GridFunction::from_real_fn(g, Space::Position, |_| 1.0);
        let big_f = fft_forward(&f).unwrap();
        let dc = g.ravel([8, 8, 0]);
        assert_relative_eq!(big_f.values()[dc].re, 16.0, epsilon = 1e-12);
        let rest: f64 = big_f
            .values()
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != dc)
            .map(|(_, v)| v.norm())
            .sum();
        assert!(rest < 1e-10);
    }

    #[test]
    fn gaussian_pair() {
        let g = make_grid(2, 16.0, 128).unwrap();
        let f = GridFunction::from_real_fn(g, Space::Position, |x| {
            (-std::f64::consts::PI * dot(x, x)).exp()
        });
        let big_f = fft_forward(&f).unwrap();
        for i in 0..g.len() {
            let xi = g.freq(i);
            let exact = (-std::f64::consts::PI * dot(&xi, &xi)).exp();
            let err = (big_f.values()[i] - exact).norm();
            assert!(err <= 1e-6 * exact.max(1e-300) || err < 1e-14, "at {xi:?}");
        }
    }

    #[test]
    fn wrong_space_rejected() {
        let g = make_grid(1, 4.0, 8).unwrap();
        let f = GridFunction::zeros(g, Space::Frequency);
        assert!(matches!(fft_forward(&f), Err(Error::WrongSpace { .. })));
        let f = GridFunction::zeros(g, Space::Position);
        assert!(fft_inverse(&f).is_err());
    }

    #[test]
    fn lp_norm_examples() {
        let g = make_grid(2, 16.0, 64).unwrap();
        let f = GridFunction::from_real_fn(g, Space::Position, |x| {
            if x[0] >= 0.0 && x[0] < 4.0 && x[1] >= 0.0 && x[1] < 2.0 {
                1.0
            } else {
                0.0
            }
        });
        assert_relative_eq!(lp_norm(&f, 2.0), 8f64.sqrt(), epsilon = 1e-12);
        assert_eq!(lp_norm(&GridFunction::zeros(g, Space::Position), 3.0), 0.0);
        assert_eq!(lp_norm(&f, f64::INFINITY), 1.0);
    }

    #[test]
    fn lorentz_examples() {
        let g = make_grid(1, 64.0, 64).unwrap();
        let f = GridFunction::from_real_fn(g, Space::Position, |x| {
            if x[0] >= 0.0 && x[0] < 5.0 {
                1.0
            } else {
                0.0
            }
        });
        assert_relative_eq!(lorentz_weak_norm(&f, 2.0), 5f64.sqrt(), epsilon = 1e-12);
        // 2 on a set of measure 1, 1 on a disjoint set of measure 8
        let f = GridFunction::from_real_fn(g, Space::Position, |x| {
            if x[0] >= 0.0 && x[0] < 1.0 {
                2.0
            } else if x[0] >= 1.0 && x[0] < 9.0 {
                1.0
            } else {
                0.0
            }
        });
        assert_relative_eq!(lorentz_weak_norm(&f, 1.0), 9.0, epsilon = 1e-12);
    }

    #[test]
    fn weight_examples() {
        let corner = [0.0; 3];
        assert_eq!(weight_wq(&[0.5, 0.5, 0.0], &corner, 1.0, 2), 1.0);
        assert_relative_eq!(weight_wq(&[2.0, 0.0, 0.0], &corner, 1.0, 1), 2f64.powi(-100));
        assert_relative_eq!(
            weight_wq(&[4.0, 0.5, 0.0], &corner, 1.0, 2),
            4f64.powi(-200),
            max_relative = 1e-12
        );
        assert_eq!(weight_wq(&[1e6, 0.0, 0.0], &corner, 1.0, 3), 0.0);
    }

    #[test]
    fn sample_on_set_examples() {
        let g = make_grid(2, 16.0, 32).unwrap();
        let f = GridFunction::from_real_fn(g, Space::Position, |_| 1.0);
        let pts = (0..9).map(|i| [(i % 3) as f64, (i / 3) as f64, 0.0]).collect();
        let set = SeparatedSet::with_separation(2, pts, 1.0).unwrap();
        assert_relative_eq!(sample_on_set(&f, &set, 2.0).unwrap(), 3.0);
        let far = SeparatedSet::new(2, vec![[20.0, 0.0, 0.0]]);
        assert!(matches!(sample_on_set(&f, &far, 2.0), Err(Error::PointOutsideBox(_))));
    }

    #[test]
    fn lattice_ball_counts() {
        let s = SeparatedSet::lattice_in_ball(2, 1.0, [0.0; 3], 2.0);
        assert_eq!(s.len(), 13);
        assert_eq!(s.points[0], [0.0; 3]);
        assert_eq!(min_pairwise_distance(&s.points), 1.0);
    }
}
