//! Dyadic shells V_k of a decaying potential and the blocks C^(delta_{k-1}) V_k C^(delta_k).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::config::ensure;
use super::output::{fit_tables, Table};
use super::{Scenario, ScalingFit};
use crate::eigsearch::{bracket, weighted_norm};
use crate::error::Result;
use crate::grid::{lp_norm, make_grid, norm, BoxGrid, GridFunction, Space};
use crate::multipliers::{cdelta_sqrt, smoothed_resolvent, ComplexEnergy, MultiplierSpec};
use crate::opnorm::{foliation_check, lanczos_norm, LinearOperatorChain, NormOptions};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShellProfile {
    /// constant on each shell with |V_k|_q = 2^(-delta k)
    Dyadic,
    /// min(1, |x|^(-delta - d/q))
    Power,
    /// <x>^(-delta - d/q)
    Bracket,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DyadicParams {
    pub d: usize,
    pub n: usize,
    pub l: f64,
    pub lambda: f64,
    pub q: f64,
    /// decay exponent: V ~ |x|^(-delta - d/q)
    pub delta: f64,
    pub profile: ShellProfile,
    pub k_max: usize,
    /// only this shell is kept when set
    pub single_shell: Option<usize>,
    pub scaling_factor: f64,
    pub tail_fraction: f64,
    pub norm_tol: f64,
}

impl Default for DyadicParams {
    fn default() -> Self {
        DyadicParams {
            d: 2,
            n: 256,
            l: 256.0,
            lambda: 1.0,
            q: 1.5,
            delta: 0.5,
            profile: ShellProfile::Dyadic,
            k_max: 5,
            single_shell: None,
            scaling_factor: 4.0,
            tail_fraction: 0.1,
            norm_tol: 1e-8,
        }
    }
}

/// delta_k = (2^k + 2^(k-1))^(-1) for k >= 1, and 1/2 below.
pub fn shell_delta(k: i64) -> f64 {
    if k < 1 {
        0.5
    } else {
        1.0 / (2f64.powi(k as i32) + 2f64.powi(k as i32 - 1))
    }
}

/// V 1_{2^(k-1) <= |x| < 2^k}; k = 0 is the unit ball.
pub fn shell(v: &GridFunction, k: usize) -> GridFunction {
    let g = *v.grid();
    let (lo, hi) = if k == 0 { (0.0, 1.0) } else { (2f64.powi(k as i32 - 1), 2f64.powi(k as i32)) };
    let mut out = v.clone();
    for (i, x) in out.values_mut().iter_mut().enumerate() {
        let r = norm(&g.point(i));
        if !(r >= lo && r < hi) {
            *x *= 0.0;
        }
    }
    out
}

fn shell_index(r: f64) -> usize {
    if r < 1.0 { 0 } else { r.log2().floor() as usize + 1 }
}

pub fn test_potential(p: &DyadicParams, grid: &BoxGrid) -> GridFunction {
    let e = p.delta + p.d as f64 / p.q;
    match p.profile {
        ShellProfile::Bracket => GridFunction::from_real_fn(*grid, Space::Position, |x| bracket(norm(x)).powf(-e)),
        ShellProfile::Power => GridFunction::from_real_fn(*grid, Space::Position, |x| norm(x).max(1.0).powf(-e)),
        ShellProfile::Dyadic => {
            let cell = grid.dx.powi(p.d as i32);
            let mut area = vec![0.0; 64];
            for i in 0..grid.len() {
                area[shell_index(norm(&grid.point(i))).min(63)] += cell;
            }
            GridFunction::from_real_fn(*grid, Space::Position, |x| {
                let k = shell_index(norm(x)).min(63);
                2f64.powf(-p.delta * k as f64) * area[k].powf(-1.0 / p.q)
            })
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShellRow {
    pub k: usize,
    pub delta_in: f64,
    pub delta_out: f64,
    pub block_norm: f64,
    pub lq_norm: f64,
    /// |V_k|_q <= 2^(-delta k) |<x>^delta V|_q
    pub weighted_bound: f64,
    pub foliation_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DyadicReport {
    pub weighted_norm: f64,
    pub shells: Vec<ShellRow>,
    pub fit: ScalingFit,
}

impl DyadicReport {
    pub fn total(&self) -> f64 {
        self.shells.iter().map(|s| s.block_norm).sum()
    }

    /// last term over the partial sum
    pub fn tail(&self) -> f64 {
        self.shells.last().map_or(0.0, |s| s.block_norm) / self.total()
    }

    /// max / min of |block_k| 2^(delta k)
    pub fn scaling_spread(&self, delta: f64) -> f64 {
        let w: Vec<f64> = self.shells.iter().map(|s| s.block_norm * 2f64.powf(delta * s.k as f64)).collect();
        w.iter().cloned().fold(0.0, f64::max) / w.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

fn cdelta(z: &ComplexEnergy, grid: &BoxGrid, delta: f64) -> Result<MultiplierSpec> {
    cdelta_sqrt(&smoothed_resolvent(z, grid, 1.0 / delta)?, delta)
}

pub fn run_dyadic_shell_demo(p: &DyadicParams) -> Result<DyadicReport> {
    p.validate()?;
    let grid = make_grid(p.d, p.l, p.n)?;
    let z = ComplexEnergy::new(p.lambda, 0.0)?;
    let v = test_potential(p, &grid);
    let ks: Vec<usize> = match p.single_shell {
        Some(k) => vec![k],
        None => (0..=p.k_max).collect(),
    };
    let kept = match p.single_shell {
        Some(k) => shell(&v, k),
        None => ks.iter().fold(GridFunction::zeros(grid, Space::Position), |acc, &k| acc.add(&shell(&v, k)).expect("same grid")),
    };
    let wn = weighted_norm(&kept, p.lambda, p.delta, p.q)?;
    let opts = NormOptions { tol: p.norm_tol, ..NormOptions::default() };
    let shells = ks
        .par_iter()
        .map(|&k| {
            let vk = shell(&v, k);
            let (d_in, d_out) = (shell_delta(k as i64 - 1), shell_delta(k as i64));
            let (c1, c2) = (cdelta(&z, &grid, d_in)?, cdelta(&z, &grid, d_out)?);
            let chain = LinearOperatorChain::new(grid).multiplier(&c2)?.pointwise(&vk)?.multiplier(&c1)?;
            let block_norm = lanczos_norm(&chain, &opts)?.value;
            let lq = lp_norm(&vk, p.q);
            Ok(ShellRow {
                k,
                delta_in: d_in,
                delta_out: d_out,
                block_norm,
                lq_norm: lq,
                weighted_bound: 2f64.powf(-p.delta * k as f64) * wn,
                foliation_ratio: foliation_check(&c1, &vk, &c2, lq, &opts)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let (xs, ys): (Vec<f64>, Vec<f64>) = shells.iter().map(|s| (s.k as f64, s.block_norm.log2())).unzip();
    Ok(DyadicReport { weighted_norm: wn, shells, fit: ScalingFit::fit(xs, ys) })
}

impl DyadicReport {
    pub fn tables(&self) -> Vec<Table> {
        let mut t = Table::new(
            "shells",
            &["k", "delta_in", "delta_out", "block_norm", "lq_norm", "weighted_bound", "foliation_ratio"],
        );
        for s in &self.shells {
            t.push(vec![
                s.k.into(),
                s.delta_in.into(),
                s.delta_out.into(),
                s.block_norm.into(),
                s.lq_norm.into(),
                s.weighted_bound.into(),
                s.foliation_ratio.into(),
            ]);
        }
        let (pts, coef) = fit_tables(&[("log2_block_norm_vs_k".to_string(), &self.fit)]);
        vec![t, pts, coef]
    }

    pub fn summary(&self, p: &DyadicParams) -> Value {
        json!({
            "total": self.total(),
            "tail": self.tail(),
            "tail_ok": self.tail() < p.tail_fraction,
            "scaling_spread": self.scaling_spread(p.delta),
            "scaling_ok": self.scaling_spread(p.delta) <= p.scaling_factor,
            "slope_log2": self.fit.slope,
            "weighted_norm": self.weighted_norm,
            "weighted_bound_holds": self.shells.iter().all(|s| s.lq_norm <= s.weighted_bound),
            "max_foliation_ratio": self.shells.iter().map(|s| s.foliation_ratio).fold(0.0, f64::max),
        })
    }
}

impl Scenario for DyadicParams {
    const ID: &'static str = "dyadic-shell-demo";
    const SUMMARY: &'static str = "blocks C^(delta_{k-1}) V_k C^(delta_k) over dyadic shells of a <x>^(-delta)-decaying potential";

    fn validate(&self) -> Result<()> {
        ensure((2..=3).contains(&self.d), || format!("d = {} unsupported; use 2 or 3", self.d))?;
        ensure(self.delta > 0.0 && self.q >= 1.0, || "need delta > 0 and q >= 1".into())?;
        ensure(self.k_max >= 1 && 2f64.powi(self.k_max as i32) < self.l / 2.0, || {
            format!("shell radius 2^{} must stay inside the box of side {}", self.k_max, self.l)
        })?;
        ensure(4.0 / shell_delta(self.k_max as i64) <= self.l, || {
            format!("smoothing scale 1/delta_{} needs a box of side >= {}", self.k_max, 4.0 / shell_delta(self.k_max as i64))
        })?;
        ensure(self.single_shell.is_none_or(|k| k <= self.k_max), || "single_shell must not exceed k_max".into())?;
        Ok(())
    }

    fn execute(&self, _seed: u64) -> Result<(Vec<Table>, Value)> {
        let rep = run_dyadic_shell_demo(self)?;
        Ok((rep.tables(), rep.summary(self)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_shell_is_one_foliation_term() {
        let p = DyadicParams { n: 64, l: 64.0, k_max: 2, single_shell: Some(2), ..DyadicParams::default() };
        let r = run_dyadic_shell_demo(&p).unwrap();
        assert_eq!(r.shells.len(), 1);
        let s = &r.shells[0];
        let logs = (2.0 + 1.0 / s.delta_in).ln().sqrt() * (2.0 + 1.0 / s.delta_out).ln().sqrt();
        assert!((s.block_norm / (s.lq_norm * logs) - s.foliation_ratio).abs() < 1e-6 * s.foliation_ratio);
        assert!((r.total() - s.block_norm).abs() == 0.0);
    }

    #[test]
    fn shells_partition_the_ball() {
        let g = make_grid(2, 64.0, 64).unwrap();
        let p = DyadicParams::default();
        let v = test_potential(&p, &g);
        let sum = (0..=4).fold(GridFunction::zeros(g, Space::Position), |a, k| a.add(&shell(&v, k)).unwrap());
        for i in 0..g.len() {
            let inside = norm(&g.point(i)) < 16.0;
            assert_eq!(sum.values()[i], if inside { v.values()[i] } else { 0.0.into() });
        }
        assert_eq!(shell_delta(0), 0.5);
        assert!((shell_delta(3) - 1.0 / 12.0).abs() < 1e-15);
        for k in 0..=4 {
            assert!((lp_norm(&shell(&v, k), p.q) - 2f64.powf(-p.delta * k as f64)).abs() < 1e-12);
        }
    }
}
