//! Eigenvalue candidates of -Delta + V as zeros of sigma_min(I + R_0(z) V) on supp V.

mod bounds;

use std::f64::consts::PI;

use argmin::core::{CostFunction, Executor, State};
use argmin::solver::neldermead::NelderMead;
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use bounds::{
    bracket, corollary_ratio, destruction_scale, thm1_bound, thm2_bound, thm3_bound, weighted_norm,
    BoundReport, Theorem,
};

use crate::error::{Error, Result};
use crate::grid::{dot, inverse_values, BoxGrid, GridFunction, Space, C64};

pub const CANDIDATE_THRESHOLD: f64 = 0.02;

/// Blocks above this size use LU inverse iteration instead of an SVD.
const SVD_LIMIT: usize = 1200;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Region {
    /// re x im rectangle in the z-plane
    ZRect { re: [f64; 2], im: [f64; 2] },
    /// z = (lambda + i eps)^2 over a (lambda, eps) rectangle
    LambdaEps { lambda: [f64; 2], eps: [f64; 2] },
}

impl Region {
    fn bounds(&self) -> ([f64; 2], [f64; 2]) {
        match *self {
            Region::ZRect { re, im } => (re, im),
            Region::LambdaEps { lambda, eps } => (lambda, eps),
        }
    }

    pub fn z_at(&self, u: f64, v: f64) -> C64 {
        match self {
            Region::ZRect { .. } => C64::new(u, v),
            Region::LambdaEps { .. } => {
                let k = C64::new(u, v);
                k * k
            }
        }
    }

    pub fn touches_positive_axis(&self) -> bool {
        match *self {
            Region::ZRect { re, im } => im[0] <= 0.0 && im[1] >= 0.0 && re[1] >= 0.0,
            Region::LambdaEps { eps, .. } => eps[0] <= 0.0 && eps[1] >= 0.0,
        }
    }

    fn strictly_inside(&self, u: f64, v: f64) -> bool {
        let (a, b) = self.bounds();
        u > a[0] && u < a[1] && v > b[0] && v < b[1]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub re_z: f64,
    pub im_z: f64,
    pub sigma_min: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub re_z: f64,
    pub im_z: f64,
    pub sigma_min: f64,
}

impl Candidate {
    pub fn z(&self) -> C64 {
        C64::new(self.re_z, self.im_z)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralScan {
    pub region: Region,
    pub resolution: [usize; 2],
    /// row-major: the second region coordinate varies fastest
    pub points: Vec<ScanPoint>,
    pub candidates: Vec<Candidate>,
    pub threshold: f64,
}

/// Kernel of R_0(z) used by the finite section.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelKind {
    /// inverse FFT of the symbol on the periodic box
    #[default]
    Periodic,
    /// closed-form whole-space kernel (d = 1, 3)
    Free,
}

/// Square root of z with Im k >= 0 (the physical sheet).
pub fn physical_k(z: C64) -> C64 {
    let k = z.sqrt();
    if k.im < 0.0 {
        -k
    } else {
        k
    }
}

/// Whole-space kernel of (-Delta - z)^(-1); r = 0 gives the cell average in d = 3.
pub fn free_kernel(d: usize, z: C64, r: f64, cell: f64) -> Result<C64> {
    let k = physical_k(z);
    let i = C64::new(0.0, 1.0);
    match d {
        1 => Ok(i * (i * k * r).exp() / (2.0 * k)),
        3 if r > 0.0 => Ok((i * k * r).exp() / (4.0 * PI * r)),
        3 => {
            let a = (3.0 * cell / (4.0 * PI)).cbrt();
            Ok((C64::new(1.5 / a, 0.0) + i * k) / (4.0 * PI))
        }
        2 => Err(Error::UnsupportedDimension(2)),
        _ => Err(Error::InvalidDimension(d)),
    }
}

/// K = (|2 pi xi|^2 - z)^(-1) transformed back to position space.
pub fn resolvent_kernel_grid(z: C64, grid: &BoxGrid) -> Result<Vec<C64>> {
    let mut k: Vec<C64> = (0..grid.len())
        .map(|i| {
            let xi = grid.freq(i);
            1.0 / (C64::new(4.0 * PI * PI * dot(&xi, &xi), 0.0) - z)
        })
        .collect();
    if k.iter().any(|c| !c.is_finite()) {
        return Err(Error::SingularSymbol);
    }
    inverse_values(grid, &mut k);
    Ok(k)
}

fn check_potential(v: &GridFunction) -> Result<()> {
    if v.space() != Space::Position {
        return Err(Error::WrongSpace { expected: Space::Position });
    }
    Ok(())
}

/// A = I + K_SS V_S dx^d on S = supp V.
pub fn finite_section(v: &GridFunction, z: C64) -> Result<DMatrix<C64>> {
    finite_section_with(v, z, KernelKind::Periodic)
}

pub fn finite_section_with(v: &GridFunction, z: C64, kind: KernelKind) -> Result<DMatrix<C64>> {
    check_potential(v)?;
    let g = *v.grid();
    let s = v.support();
    let vol = g.cell_volume();
    if kind == KernelKind::Free {
        free_kernel(g.d, z, 1.0, vol)?;
        let mut a = DMatrix::identity(s.len(), s.len());
        for (i, &si) in s.iter().enumerate() {
            let x = g.point(si);
            for (j, &sj) in s.iter().enumerate() {
                let r = crate::grid::dist(&x, &g.point(sj));
                a[(i, j)] += free_kernel(g.d, z, r, vol)? * v.values()[sj] * vol;
            }
        }
        return Ok(a);
    }
    let k = resolvent_kernel_grid(z, &g)?;
    Ok(DMatrix::from_fn(s.len(), s.len(), |i, j| {
        let e = k[g.offset_index(s[i], s[j])] * v.values()[s[j]] * vol;
        if i == j {
            e + 1.0
        } else {
            e
        }
    }))
}

/// The full discretized I + R_0(z) V.
pub fn full_operator(v: &GridFunction, z: C64) -> Result<DMatrix<C64>> {
    check_potential(v)?;
    let g = *v.grid();
    if g.len() > crate::opnorm::DENSE_LIMIT {
        return Err(Error::SizeOverflow(format!("{} grid points", g.len())));
    }
    let k = resolvent_kernel_grid(z, &g)?;
    let vol = g.cell_volume();
    Ok(DMatrix::from_fn(g.len(), g.len(), |i, j| {
        let e = k[g.offset_index(i, j)] * v.values()[j] * vol;
        if i == j {
            e + 1.0
        } else {
            e
        }
    }))
}

fn sigma_min_dense(a: &DMatrix<C64>) -> f64 {
    if a.is_empty() {
        return 1.0;
    }
    if a.nrows() <= SVD_LIMIT {
        return a.singular_values().min();
    }
    let lu = a.clone().lu();
    let lu_h = a.adjoint().lu();
    let mut x = nalgebra::DVector::from_element(a.ncols(), C64::new(1.0, 0.0));
    let mut est = 0.0;
    for _ in 0..50 {
        let Some(y) = lu_h.solve(&x) else { return 0.0 };
        let Some(w) = lu.solve(&y) else { return 0.0 };
        let nw = w.norm();
        if !nw.is_finite() || nw == 0.0 {
            return 0.0;
        }
        let new = (x.norm() / nw).sqrt();
        x = w / C64::new(nw, 0.0);
        if (new - est).abs() <= 1e-12 * new {
            est = new;
            break;
        }
        est = new;
    }
    est
}

pub fn sigma_min_at(v: &GridFunction, z: C64) -> Result<f64> {
    sigma_min_at_with(v, z, KernelKind::Periodic)
}

pub fn sigma_min_at_with(v: &GridFunction, z: C64, kind: KernelKind) -> Result<f64> {
    Ok(sigma_min_dense(&finite_section_with(v, z, kind)?))
}

struct Objective<'a> {
    v: &'a GridFunction,
    region: Region,
    kind: KernelKind,
}

impl CostFunction for Objective<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Vec<f64>) -> std::result::Result<f64, argmin::core::Error> {
        if !self.region.strictly_inside(p[0], p[1]) {
            return Ok(10.0);
        }
        Ok(sigma_min_at_with(self.v, self.region.z_at(p[0], p[1]), self.kind).unwrap_or(10.0))
    }
}

fn refine(v: &GridFunction, region: Region, kind: KernelKind, u: f64, w: f64, du: f64, dw: f64) -> Option<(f64, f64, f64)> {
    let simplex = vec![vec![u, w], vec![u + du / 2.0, w], vec![u, w + dw / 2.0]];
    let solver = NelderMead::new(simplex).with_sd_tolerance(1e-14).ok()?;
    let res = Executor::new(Objective { v, region, kind }, solver)
        .configure(|s| s.max_iters(120))
        .run()
        .ok()?;
    let p = res.state().get_best_param()?.clone();
    Some((p[0], p[1], res.state().get_best_cost()))
}

/// sigma_min on a resolution[0] x resolution[1] lattice of the region (cell
/// centers), then Nelder-Mead from every strict interior local minimum.
pub fn sigma_min_scan(v: &GridFunction, region: Region, resolution: [usize; 2]) -> Result<SpectralScan> {
    sigma_min_scan_with(v, region, resolution, KernelKind::Periodic)
}

pub fn sigma_min_scan_with(v: &GridFunction, region: Region, resolution: [usize; 2], kind: KernelKind) -> Result<SpectralScan> {
    check_potential(v)?;
    if region.touches_positive_axis() {
        return Err(Error::RegionTouchesPositiveAxis);
    }
    let (a, b) = region.bounds();
    if !(a[0] < a[1] && b[0] < b[1]) || resolution[0] < 3 || resolution[1] < 3 {
        return Err(Error::Precondition("empty region or resolution below 3 x 3".into()));
    }
    if let Region::LambdaEps { lambda, .. } = region {
        if lambda[0] <= 0.0 {
            return Err(Error::Precondition("lambda must stay positive".into()));
        }
    }
    let [nu, nw] = resolution;
    let du = (a[1] - a[0]) / nu as f64;
    let dw = (b[1] - b[0]) / nw as f64;
    let coord = |i: usize, j: usize| (a[0] + (i as f64 + 0.5) * du, b[0] + (j as f64 + 0.5) * dw);
    let sig: Vec<f64> = (0..nu * nw)
        .into_par_iter()
        .map(|idx| {
            let (u, w) = coord(idx / nw, idx % nw);
            sigma_min_at_with(v, region.z_at(u, w), kind)
        })
        .collect::<Result<_>>()?;
    let points = (0..nu * nw)
        .map(|idx| {
            let (u, w) = coord(idx / nw, idx % nw);
            let z = region.z_at(u, w);
            ScanPoint { re_z: z.re, im_z: z.im, sigma_min: sig[idx] }
        })
        .collect();
    let mut seeds = Vec::new();
    for i in 1..nu - 1 {
        for j in 1..nw - 1 {
            let c = sig[i * nw + j];
            let strict = (-1i64..=1).all(|di| {
                (-1i64..=1).all(|dj| {
                    (di == 0 && dj == 0) || c < sig[((i as i64 + di) as usize) * nw + (j as i64 + dj) as usize]
                })
            });
            if strict {
                seeds.push((i, j));
            }
        }
    }
    let refined: Vec<Option<(f64, f64, f64)>> = seeds
        .par_iter()
        .map(|&(i, j)| {
            let (u, w) = coord(i, j);
            refine(v, region, kind, u, w, du, dw)
        })
        .collect();
    let mut candidates: Vec<Candidate> = Vec::new();
    for (u, w, s) in refined.into_iter().flatten() {
        if s < CANDIDATE_THRESHOLD && region.strictly_inside(u, w) {
            let z = region.z_at(u, w);
            let dup = candidates.iter().any(|c| (c.z() - z).norm() < 1e-6 * (1.0 + z.norm()));
            if !dup {
                candidates.push(Candidate { re_z: z.re, im_z: z.im, sigma_min: s });
            }
        }
    }
    Ok(SpectralScan { region, resolution, points, candidates, threshold: CANDIDATE_THRESHOLD })
}

/// Bound states z = -kappa^2 of -u'' - c 1_[0,1] u: even k tan(k/2) = kappa,
/// odd -k cot(k/2) = kappa, with k^2 + kappa^2 = c.
pub fn square_well_eigenvalues(c: f64) -> Vec<f64> {
    let f_even = |k: f64| k * (k / 2.0).tan() - (c - k * k).max(0.0).sqrt();
    let f_odd = |k: f64| -k / (k / 2.0).tan() - (c - k * k).max(0.0).sqrt();
    let kmax = c.sqrt();
    let mut out = Vec::new();
    let steps = 20000;
    for f in [&f_even as &dyn Fn(f64) -> f64, &f_odd] {
        let mut prev_k = 1e-9;
        let mut prev = f(prev_k);
        for s in 1..=steps {
            let k = kmax * s as f64 / steps as f64;
            let val = f(k);
            // tan poles flip sign through infinity; keep only genuine crossings
            if prev.is_finite() && val.is_finite() && prev < 0.0 && val >= 0.0 {
                let (mut lo, mut hi) = (prev_k, k);
                for _ in 0..100 {
                    let m = 0.5 * (lo + hi);
                    if f(m) < 0.0 {
                        lo = m;
                    } else {
                        hi = m;
                    }
                }
                let k0 = 0.5 * (lo + hi);
                if k0 < kmax {
                    out.push(-(c - k0 * k0));
                }
            }
            prev_k = k;
            prev = val;
        }
    }
    out.sort_by(f64::total_cmp);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use approx::assert_relative_eq;

    #[test]
    fn zero_potential_is_identity() {
        let g = make_grid(1, 8.0, 64).unwrap();
        let v = GridFunction::zeros(g, Space::Position);
        let scan = sigma_min_scan(&v, Region::ZRect { re: [-2.0, -0.5], im: [-0.5, 0.5] }, [4, 4]).unwrap();
        assert!(scan.points.iter().all(|p| p.sigma_min == 1.0));
        assert!(scan.candidates.is_empty());
    }

    #[test]
    fn region_guards() {
        let g = make_grid(1, 8.0, 64).unwrap();
        let v = GridFunction::zeros(g, Space::Position);
        let r = sigma_min_scan(&v, Region::ZRect { re: [-1.0, 1.0], im: [-0.5, 0.5] }, [4, 4]);
        assert!(matches!(r, Err(Error::RegionTouchesPositiveAxis)));
        let r = sigma_min_scan(&v, Region::LambdaEps { lambda: [0.5, 1.5], eps: [0.0, 0.1] }, [4, 4]);
        assert!(matches!(r, Err(Error::RegionTouchesPositiveAxis)));
        assert!(sigma_min_scan(&v, Region::LambdaEps { lambda: [0.5, 1.5], eps: [0.01, 0.1] }, [4, 4]).is_ok());
    }

    #[test]
    fn square_well_oracle_roots() {
        // c = 10: even and odd states
        let e = square_well_eigenvalues(10.0);
        assert_eq!(e.len(), 2);
        for z in e {
            let kappa = (-z).sqrt();
            let k = (10.0 - kappa * kappa).sqrt();
            let even = (k * (k / 2.0).tan() - kappa).abs();
            let odd = (-k / (k / 2.0).tan() - kappa).abs();
            assert!(even.min(odd) < 1e-9);
        }
    }

    #[test]
    fn finite_section_relations() {
        let g = make_grid(1, 8.0, 64).unwrap();
        let v = GridFunction::from_fn(g, Space::Position, |x| {
            if (0.0..1.0).contains(&x[0]) {
                C64::new(-3.0, 0.5)
            } else {
                C64::new(0.0, 0.0)
            }
        });
        let z = C64::new(-1.0, 0.3);
        let a = finite_section(&v, z).unwrap();
        let full = full_operator(&v, z).unwrap();
        let da = a.clone().determinant();
        let df = full.clone().determinant();
        assert_relative_eq!((da - df).norm(), 0.0, epsilon = 1e-9 * da.norm().max(1.0));
        let sa = a.singular_values().min();
        let sf = full.singular_values().min();
        assert!(sf <= sa * (1.0 + 1e-10));
        let ainv = a.clone().try_inverse().unwrap();
        let s = v.support();
        let rest: Vec<usize> = (0..g.len()).filter(|i| !s.contains(i)).collect();
        let c = DMatrix::from_fn(rest.len(), s.len(), |i, j| full[(rest[i], s[j])]);
        let lower = 1.0 / (ainv.singular_values().max() * (1.0 + c.singular_values().max()) + 1.0);
        assert!(sf >= lower * (1.0 - 1e-10));
    }

    #[test]
    fn free_kernel_finds_square_well_state() {
        let g = make_grid(1, 4.0, 256).unwrap();
        let v = GridFunction::from_real_fn(g, Space::Position, |x| if (0.0..1.0).contains(&x[0]) { -10.0 } else { 0.0 });
        let ground = square_well_eigenvalues(10.0)[0];
        let region = Region::ZRect { re: [ground - 1.0, ground + 1.0], im: [-0.3, 0.3] };
        let scan = sigma_min_scan_with(&v, region, [9, 5], KernelKind::Free).unwrap();
        assert_eq!(scan.candidates.len(), 1);
        let z = scan.candidates[0].z();
        assert!((z.re - ground).abs() < 0.02 * ground.abs(), "{z} vs {ground}");
        assert!(physical_k(C64::new(1.0, -0.2)).im > 0.0);
        assert!(matches!(free_kernel(2, z, 1.0, 1.0), Err(Error::UnsupportedDimension(2))));
    }
}
