//! Type-2 nonuniform FFT with a Gaussian spreading kernel: F(xi) = sum_j f_j e(-x_j . xi)
//! for x_j on a uniform patch and arbitrary frequencies xi.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::grid::{fft_dims, GridFunction, Point, C64};

pub const DEFAULT_SPREAD: usize = 10;

#[derive(Clone, Debug)]
pub struct Nufft2 {
    d: usize,
    dims: [usize; 3],
    fine: [usize; 3],
    /// center of the patch: origin + floor(M/2) dx per axis
    center: Point,
    dx: f64,
    spread: usize,
    tau: [f64; 3],
    table: Vec<C64>,
    empty: bool,
}

impl Nufft2 {
    /// `values` is row-major over the patch of shape dims[..d], point j at origin + j dx.
    pub fn new(d: usize, dims: [usize; 3], values: &[C64], origin: Point, dx: f64, spread: usize) -> Self {
        let spread = spread.clamp(2, 32);
        let mut fine = [1usize; 3];
        let mut tau = [0.0; 3];
        let mut center = [0.0; 3];
        for a in 0..d {
            let mr = (2 * dims[a]).max(2 * spread + 2);
            fine[a] = mr + mr % 2;
            let m_eff = fine[a] as f64 / 2.0;
            tau[a] = PI * spread as f64 / (m_eff * m_eff * 2.0 * 1.5);
            center[a] = origin[a] + (dims[a] / 2) as f64 * dx;
        }
        let total: usize = fine[..d].iter().product();
        let mut table = vec![C64::new(0.0, 0.0); total];
        let deconv: Vec<Vec<f64>> = (0..d)
            .map(|a| {
                (0..dims[a])
                    .map(|j| {
                        let k = j as f64 - (dims[a] / 2) as f64;
                        1.0 / ((tau[a] / PI).sqrt() * (-k * k * tau[a]).exp())
                    })
                    .collect()
            })
            .collect();
        let mut empty = true;
        for (idx, v) in values.iter().enumerate() {
            if *v == C64::new(0.0, 0.0) {
                continue;
            }
            empty = false;
            let mut r = idx;
            let mut pos = 0usize;
            let mut w = 1.0;
            let mut j = [0usize; 3];
            for a in (0..d).rev() {
                j[a] = r % dims[a];
                r /= dims[a];
            }
            for a in 0..d {
                let k = j[a] as i64 - (dims[a] / 2) as i64;
                pos = pos * fine[a] + k.rem_euclid(fine[a] as i64) as usize;
                w *= deconv[a][j[a]];
            }
            table[pos] = *v * w;
        }
        if !empty {
            fft_dims(&mut table, &fine[..d], false);
        }
        Nufft2 { d, dims, fine, center, dx, spread, tau, table, empty }
    }

    /// Patch = bounding box of the support of a position-space function.
    pub fn from_grid_function(f: &GridFunction, spread: usize) -> Self {
        let g = f.grid();
        let d = g.d;
        let support = f.support();
        let mut lo = [0usize; 3];
        let mut hi = [0usize; 3];
        if support.is_empty() {
            return Nufft2::new(d, [1, 1, 1], &[C64::new(0.0, 0.0)], [0.0; 3], g.dx, spread);
        }
        for a in 0..d {
            lo[a] = usize::MAX;
        }
        for &i in &support {
            let m = g.unravel(i);
            for a in 0..d {
                lo[a] = lo[a].min(m[a]);
                hi[a] = hi[a].max(m[a]);
            }
        }
        let mut dims = [1usize; 3];
        for a in 0..d {
            dims[a] = hi[a] - lo[a] + 1;
        }
        let total: usize = dims[..d].iter().product();
        let mut values = vec![C64::new(0.0, 0.0); total];
        for &i in &support {
            let m = g.unravel(i);
            let mut pos = 0;
            for a in 0..d {
                pos = pos * dims[a] + (m[a] - lo[a]);
            }
            values[pos] = f.values()[i];
        }
        let mut origin = [0.0; 3];
        for a in 0..d {
            origin[a] = g.coord(lo[a]);
        }
        Nufft2::new(d, dims, &values, origin, g.dx, spread)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims[..self.d]
    }

    pub fn eval(&self, xi: &Point) -> C64 {
        if self.empty {
            return C64::new(0.0, 0.0);
        }
        let d = self.d;
        let s = self.spread as i64;
        let width = 2 * self.spread;
        let mut start = [0i64; 3];
        let mut weights = [[0.0f64; 64]; 3];
        let mut phase = 0.0;
        for a in 0..d {
            phase += self.center[a] * xi[a];
            let mr = self.fine[a] as f64;
            let h = 2.0 * PI / mr;
            let theta = (2.0 * PI * self.dx * xi[a]).rem_euclid(2.0 * PI);
            let m0 = (theta / h).floor();
            let delta = theta - m0 * h;
            start[a] = m0 as i64 - s + 1;
            for (t, w) in weights[a].iter_mut().take(width).enumerate() {
                let off = delta - (t as f64 - (s - 1) as f64) * h;
                *w = (-off * off / (4.0 * self.tau[a])).exp();
            }
        }
        let wrap = |a: usize, t: usize| (start[a] + t as i64).rem_euclid(self.fine[a] as i64) as usize;
        let mut acc = C64::new(0.0, 0.0);
        match d {
            1 => {
                for t in 0..width {
                    acc += self.table[wrap(0, t)] * weights[0][t];
                }
            }
            2 => {
                let n1 = self.fine[1];
                let cols: Vec<usize> = (0..width).map(|u| wrap(1, u)).collect();
                for t in 0..width {
                    let row = wrap(0, t) * n1;
                    let mut r = C64::new(0.0, 0.0);
                    for (u, &c) in cols.iter().enumerate() {
                        r += self.table[row + c] * weights[1][u];
                    }
                    acc += r * weights[0][t];
                }
            }
            _ => {
                let (n1, n2) = (self.fine[1], self.fine[2]);
                for t in 0..width {
                    let a0 = wrap(0, t);
                    for u in 0..width {
                        let base = (a0 * n1 + wrap(1, u)) * n2;
                        let mut r = C64::new(0.0, 0.0);
                        for v in 0..width {
                            r += self.table[base + wrap(2, v)] * weights[2][v];
                        }
                        acc += r * (weights[0][t] * weights[1][u]);
                    }
                }
            }
        }
        let norm: f64 = self.fine[..d].iter().map(|&m| m as f64).product();
        acc / norm * C64::from_polar(1.0, -2.0 * PI * phase)
    }

    pub fn eval_many(&self, xis: &[Point]) -> Vec<C64> {
        xis.par_iter().map(|xi| self.eval(xi)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn direct(d: usize, dims: [usize; 3], values: &[C64], origin: Point, dx: f64, xi: &Point) -> C64 {
        let mut s = C64::new(0.0, 0.0);
        for (idx, v) in values.iter().enumerate() {
            let mut r = idx;
            let mut x = [0.0; 3];
            for a in (0..d).rev() {
                x[a] = origin[a] + (r % dims[a]) as f64 * dx;
                r /= dims[a];
            }
            let t = x[0] * xi[0] + x[1] * xi[1] + x[2] * xi[2];
            s += v * C64::from_polar(1.0, -2.0 * PI * t);
        }
        s
    }

    fn check(d: usize, dims: [usize; 3], spread: usize, tol: f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(d as u64);
        let total: usize = dims[..d].iter().product();
        let values: Vec<C64> =
            (0..total).map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
        let origin = [-1.3, 0.7, 2.1];
        let dx = 0.125;
        let plan = Nufft2::new(d, dims, &values, origin, dx, spread);
        let mut scale = 0.0f64;
        let mut err = 0.0f64;
        for _ in 0..40 {
            let mut xi = [0.0; 3];
            for v in xi.iter_mut().take(d) {
                *v = rng.random_range(-9.0..9.0);
            }
            let exact = direct(d, dims, &values, origin, dx, &xi);
            err = err.max((plan.eval(&xi) - exact).norm());
            scale = scale.max(exact.norm());
        }
        assert!(err <= tol * scale.max(1.0), "d = {d}: error {err} vs scale {scale}");
    }

    #[test]
    fn matches_direct_sums() {
        check(1, [37, 1, 1], 10, 1e-9);
        check(2, [16, 9, 1], 10, 1e-9);
        check(3, [6, 5, 4], 10, 1e-9);
        check(2, [16, 9, 1], 6, 1e-5);
    }

    #[test]
    fn empty_patch_is_zero() {
        let g = crate::grid::make_grid(2, 4.0, 8).unwrap();
        let f = GridFunction::zeros(g, crate::grid::Space::Position);
        let plan = Nufft2::from_grid_function(&f, 8);
        assert_eq!(plan.eval(&[0.3, 0.1, 0.0]), C64::new(0.0, 0.0));
    }

    #[test]
    fn agrees_with_grid_fft() {
        let g = crate::grid::make_grid(2, 8.0, 32).unwrap();
        let f = GridFunction::from_fn(g, crate::grid::Space::Position, |x| {
            if x[0].abs() < 1.0 && x[1].abs() < 2.0 {
                C64::new(x[0] + 1.0, x[1])
            } else {
                C64::new(0.0, 0.0)
            }
        });
        let hat = crate::grid::fft_forward(&f).unwrap();
        let plan = Nufft2::from_grid_function(&f, 10);
        for i in (0..g.len()).step_by(37) {
            let xi = g.freq(i);
            let v = plan.eval(&xi) * g.cell_volume();
            assert!((v - hat.values()[i]).norm() < 1e-9, "{i}");
        }
    }
}
