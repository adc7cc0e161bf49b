//! Horizontal dyadic decomposition and gamma-sparse splitting into balls.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{dist, GridFunction, Point, Space, C64};

#[derive(Clone, Debug)]
pub struct DyadicLevel {
    pub i: i32,
    /// H_i
    pub height: f64,
    /// H_{i+1}
    pub next_height: f64,
    pub piece: GridFunction,
}

fn sorted_magnitudes(v: &GridFunction) -> Vec<f64> {
    let mut mags: Vec<f64> = v.values().iter().map(|z| z.norm()).filter(|&a| a > 0.0).collect();
    mags.sort_by(|a, b| b.total_cmp(a));
    mags
}

/// Largest count c with c * mu <= 2^(i-1).
fn allowed_count(i: i32, mu: f64) -> usize {
    let cap = 2f64.powi(i - 1);
    let mut c = (cap / mu).floor().max(0.0) as usize;
    while (c + 1) as f64 * mu <= cap {
        c += 1;
    }
    while c > 0 && c as f64 * mu > cap {
        c -= 1;
    }
    c
}

fn height(mags: &[f64], i: i32, mu: f64) -> f64 {
    let c = allowed_count(i, mu);
    if c >= mags.len() {
        0.0
    } else {
        mags[c]
    }
}

fn level_range(mags: &[f64], mu: f64) -> (i32, i32) {
    let lo = mu.log2().floor() as i32;
    let mut hi = lo;
    while allowed_count(hi, mu) < mags.len() {
        hi += 1;
    }
    (lo, hi)
}

/// All (i, H_i) with H_i = min{t : |{|V| > t}| <= 2^(i-1)} from the level where
/// H_i = max |V| up to the first i with H_i = 0.
pub fn dyadic_heights(v: &GridFunction) -> Vec<(i32, f64)> {
    let mags = sorted_magnitudes(v);
    if mags.is_empty() {
        return Vec::new();
    }
    let mu = v.measure();
    let (lo, hi) = level_range(&mags, mu);
    (lo..=hi).map(|i| (i, height(&mags, i, mu))).collect()
}

/// V = sum_i V_i with V_i = V 1_{H_{i+1} < |V| <= H_i}; only nonempty pieces.
pub fn dyadic_levels(v: &GridFunction) -> Vec<DyadicLevel> {
    let heights = dyadic_heights(v);
    let mut out = Vec::new();
    for w in heights.windows(2) {
        let (i, h) = w[0];
        let (_, next) = w[1];
        if h == next {
            continue;
        }
        let piece = v.map(|z| {
            let a = z.norm();
            if a > next && a <= h {
                z
            } else {
                C64::new(0.0, 0.0)
            }
        });
        out.push(DyadicLevel { i, height: h, next_height: next, piece });
    }
    out
}

/// (sum_i (H_i 2^(i/q))^q)^(1/q), comparable to ||V||_q.
pub fn dyadic_lq_proxy(v: &GridFunction, q: f64) -> f64 {
    dyadic_heights(v)
        .iter()
        .map(|&(i, h)| (h * 2f64.powf(i as f64 / q)).powf(q))
        .sum::<f64>()
        .powf(1.0 / q)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SparseBall {
    pub center: Point,
    pub radius: f64,
    /// Grid indices carried by this ball's piece.
    pub indices: Vec<usize>,
}

impl SparseBall {
    pub fn piece(&self, v: &GridFunction) -> GridFunction {
        let mut out = GridFunction::zeros(*v.grid(), Space::Position);
        for &i in &self.indices {
            out.values_mut()[i] = v.values()[i];
        }
        out
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SparseFamily {
    pub stage: usize,
    /// Separation enforced when the family was colored.
    pub separation: f64,
    pub balls: Vec<SparseBall>,
}

impl SparseFamily {
    pub fn radius(&self) -> f64 {
        self.balls.iter().map(|b| b.radius).fold(0.0, f64::max)
    }

    /// Checks the gamma-sparse definition with this family's own (R, N).
    pub fn is_sparse(&self, gamma: f64) -> bool {
        let need = (self.radius() * self.balls.len() as f64).powf(gamma);
        for (a, ba) in self.balls.iter().enumerate() {
            for bb in &self.balls[a + 1..] {
                if dist(&ba.center, &bb.center) < need {
                    return false;
                }
            }
        }
        true
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SparseLevel {
    pub gamma: f64,
    pub k: usize,
    pub n_cells: usize,
    pub families: Vec<SparseFamily>,
}

impl SparseLevel {
    /// K_i
    pub fn family_count(&self) -> usize {
        self.families.len()
    }

    /// N_i
    pub fn max_balls(&self) -> usize {
        self.families.iter().map(|f| f.balls.len()).max().unwrap_or(0)
    }

    /// R_i
    pub fn max_radius(&self) -> f64 {
        self.families.iter().map(|f| f.radius()).fold(0.0, f64::max)
    }

    pub fn balls(&self) -> impl Iterator<Item = &SparseBall> {
        self.families.iter().flat_map(|f| f.balls.iter())
    }
}

struct Object {
    center: Point,
    radius: f64,
    cells: Vec<usize>,
}

/// Multi-scale greedy splitting of V_i (supported on unit cells) into
/// gamma-sparse families of balls.
pub fn sparse_split(v: &GridFunction, gamma: f64, k: usize) -> Result<SparseLevel> {
    if gamma < 1.0 || k < 1 {
        return Err(Error::Precondition(format!("need gamma >= 1 and K >= 1, got {gamma}, {k}")));
    }
    let grid = *v.grid();
    let d = grid.d;
    let mut cell_members: BTreeMap<[i64; 3], Vec<usize>> = BTreeMap::new();
    for idx in v.support() {
        let p = grid.point(idx);
        let mut c = [0i64; 3];
        for a in 0..d {
            c[a] = (p[a] + 1e-12).floor() as i64;
        }
        cell_members.entry(c).or_default().push(idx);
    }
    let cells: Vec<([i64; 3], Vec<usize>)> = cell_members.into_iter().collect();
    let centers: Vec<Point> = cells
        .iter()
        .map(|(c, _)| {
            let mut p = [0.0; 3];
            for a in 0..d {
                p[a] = c[a] as f64 + 0.5;
            }
            p
        })
        .collect();
    let n = cells.len();
    let cell_radius = (d as f64).sqrt() / 2.0;
    let mut objects: Vec<Object> = (0..n)
        .map(|c| Object { center: centers[c], radius: cell_radius, cells: vec![c] })
        .collect();
    let threshold = (n as f64).powf(1.0 / k as f64);
    let mut families = Vec::new();
    let mut stage = 0;
    while !objects.is_empty() {
        stage += 1;
        let rho = objects.iter().map(|o| o.radius).fold(0.0, f64::max);
        let sep = (rho * n as f64).powf(gamma);
        if !sep.is_finite() {
            return Err(Error::ParameterOverflow(format!("separation (R N)^gamma overflows at stage {stage}")));
        }
        let m = objects.len();
        let neighbours: Vec<usize> = (0..m)
            .map(|a| {
                (0..m)
                    .filter(|&b| b != a && dist(&objects[a].center, &objects[b].center) <= sep)
                    .count()
            })
            .collect();
        let force = stage >= k;
        let (sparse, dense): (Vec<usize>, Vec<usize>) =
            (0..m).partition(|&a| force || neighbours[a] as f64 <= threshold);

        // greedy coloring: a color class is sep-separated
        let mut classes: Vec<Vec<usize>> = Vec::new();
        for &a in &sparse {
            let slot = classes.iter().position(|cls| {
                cls.iter().all(|&b| dist(&objects[a].center, &objects[b].center) >= sep)
            });
            match slot {
                Some(s) => classes[s].push(a),
                None => classes.push(vec![a]),
            }
        }
        for cls in classes {
            let balls = cls
                .iter()
                .map(|&a| {
                    let o = &objects[a];
                    let mut indices: Vec<usize> =
                        o.cells.iter().flat_map(|&c| cells[c].1.iter().copied()).collect();
                    indices.sort_unstable();
                    SparseBall { center: o.center, radius: o.radius, indices }
                })
                .collect();
            families.push(SparseFamily { stage, separation: sep, balls });
        }

        // cluster the dense objects around a maximal 2 sep-separated set
        let mut heads: Vec<usize> = Vec::new();
        for &a in &dense {
            if heads.iter().all(|&b| dist(&objects[a].center, &objects[b].center) > 2.0 * sep) {
                heads.push(a);
            }
        }
        let mut groups: Vec<Vec<usize>> = vec![Vec::new(); heads.len()];
        for &a in &dense {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (h, &b) in heads.iter().enumerate() {
                let dd = dist(&objects[a].center, &objects[b].center);
                if dd < best_d {
                    best_d = dd;
                    best = h;
                }
            }
            groups[best].push(a);
        }
        let mut next = Vec::with_capacity(groups.len());
        for g in groups {
            let member_cells: Vec<usize> = g.iter().flat_map(|&a| objects[a].cells.iter().copied()).collect();
            let mut lo = [f64::INFINITY; 3];
            let mut hi = [f64::NEG_INFINITY; 3];
            for &c in &member_cells {
                for a in 0..3 {
                    lo[a] = lo[a].min(centers[c][a]);
                    hi[a] = hi[a].max(centers[c][a]);
                }
            }
            let center = [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1]), 0.5 * (lo[2] + hi[2])];
            let extent = member_cells.iter().map(|&c| dist(&center, &centers[c])).fold(0.0, f64::max);
            let radius = extent + cell_radius;
            if radius > grid.l * (d as f64).sqrt() {
                return Err(Error::ParameterOverflow(format!("ball radius {radius} exceeds the box")));
            }
            next.push(Object { center, radius, cells: member_cells });
        }
        objects = next;
    }
    Ok(SparseLevel { gamma, k, n_cells: n, families })
}

#[derive(Clone, Debug)]
pub struct SparseDecomposition {
    pub gamma: f64,
    pub k: usize,
    pub levels: Vec<(DyadicLevel, SparseLevel)>,
}

pub fn sparse_decomposition(v: &GridFunction, gamma: f64, k: usize) -> Result<SparseDecomposition> {
    let mut levels = Vec::new();
    for lvl in dyadic_levels(v) {
        let split = sparse_split(&lvl.piece, gamma, k)?;
        levels.push((lvl, split));
    }
    Ok(SparseDecomposition { gamma, k, levels })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{lp_norm, make_grid};

    fn step(g: crate::grid::BoxGrid, f: impl Fn(&Point) -> f64) -> GridFunction {
        GridFunction::from_real_fn(g, Space::Position, f)
    }

    #[test]
    fn indicator_has_single_level() {
        let g = make_grid(1, 16.0, 64).unwrap();
        let v = step(g, |x| if x[0] >= 0.0 && x[0] < 1.0 { 1.0 } else { 0.0 });
        let lv = dyadic_levels(&v);
        assert_eq!(lv.len(), 1);
        assert_eq!(lv[0].i, 0);
        assert_eq!(lv[0].height, 1.0);
        assert_eq!(lv[0].piece.values(), v.values());
        assert!(dyadic_levels(&GridFunction::zeros(g, Space::Position)).is_empty());
    }

    fn brute_height(v: &GridFunction, i: i32) -> f64 {
        let mu = v.measure();
        let mut cands: Vec<f64> = v.values().iter().map(|z| z.norm()).collect();
        cands.push(0.0);
        cands.sort_by(|a, b| a.total_cmp(b));
        for t in cands {
            let count = v.values().iter().filter(|z| z.norm() > t).count();
            if count as f64 * mu <= 2f64.powi(i - 1) {
                return t;
            }
        }
        unreachable!()
    }

    #[test]
    fn two_step_heights_match_brute_force() {
        let g = make_grid(1, 32.0, 128).unwrap();
        let v = step(g, |x| {
            if x[0] >= 0.0 && x[0] < 1.0 {
                2.0
            } else if x[0] >= 1.0 && x[0] < 9.0 {
                1.0
            } else {
                0.0
            }
        });
        let hs = dyadic_heights(&v);
        assert!(!hs.is_empty());
        for (i, h) in hs {
            assert_eq!(h, brute_height(&v, i), "level {i}");
        }
        let total: f64 = dyadic_levels(&v).iter().map(|l| lp_norm(&l.piece, 2.0).powi(2)).sum();
        assert!((total - lp_norm(&v, 2.0).powi(2)).abs() < 1e-12);
    }

    fn cells_potential(g: crate::grid::BoxGrid, cells: &[[i64; 2]]) -> GridFunction {
        step(g, |x| {
            let c = [(x[0] + 1e-12).floor() as i64, (x[1] + 1e-12).floor() as i64];
            if cells.contains(&c) {
                1.0
            } else {
                0.0
            }
        })
    }

    fn check_partition(v: &GridFunction, lvl: &SparseLevel) {
        let mut seen = vec![false; v.values().len()];
        for b in lvl.balls() {
            for &i in &b.indices {
                assert!(!seen[i]);
                seen[i] = true;
                assert!(dist(&v.grid().point(i), &b.center) <= b.radius + 1e-9);
            }
        }
        for i in v.support() {
            assert!(seen[i]);
        }
    }

    #[test]
    fn single_cell_single_family() {
        let g = make_grid(2, 32.0, 64).unwrap();
        let v = cells_potential(g, &[[0, 0]]);
        for gamma in [1.0, 2.0, 3.0] {
            let s = sparse_split(&v, gamma, 2).unwrap();
            assert_eq!(s.family_count(), 1);
            assert_eq!(s.max_balls(), 1);
            check_partition(&v, &s);
        }
    }

    #[test]
    fn two_far_cells_share_a_family() {
        let g = make_grid(2, 64.0, 64).unwrap();
        let v = cells_potential(g, &[[-20, 0], [20, 0]]);
        let s = sparse_split(&v, 2.0, 1).unwrap();
        assert_eq!(s.family_count(), 1);
        assert_eq!(s.max_balls(), 2);
        assert!(s.families[0].is_sparse(2.0));
    }

    #[test]
    fn row_of_sixteen_cells() {
        let g = make_grid(2, 64.0, 128).unwrap();
        let row: Vec<[i64; 2]> = (0..16).map(|i| [i - 8, 0]).collect();
        let v = cells_potential(g, &row);
        let s = sparse_split(&v, 2.0, 2).unwrap();
        check_partition(&v, &s);
        for f in &s.families {
            assert!(f.is_sparse(2.0));
        }
        let mut sum = GridFunction::zeros(g, Space::Position);
        for b in s.balls() {
            sum = sum.add(&b.piece(&v)).unwrap();
        }
        assert_eq!(sum.values(), v.values());
    }

    #[test]
    fn invalid_parameters() {
        let g = make_grid(2, 16.0, 16).unwrap();
        let v = cells_potential(g, &[[0, 0]]);
        assert!(sparse_split(&v, 0.5, 2).is_err());
        assert!(sparse_split(&v, 2.0, 0).is_err());
        let two = cells_potential(g, &[[0, 0], [3, 3]]);
        assert!(matches!(sparse_split(&two, 1e6, 1), Err(Error::ParameterOverflow(_))));
    }
}
