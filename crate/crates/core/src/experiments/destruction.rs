//! Randomizing the tube counterexample: sigma_min of I + R_0(z) V near z = 1 + i eps
//! for the deterministic profile against the randomized ensemble.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::config::ensure;
use super::output::Table;
use super::Scenario;
use crate::eigsearch::{destruction_scale, sigma_min_at};
use crate::error::Result;
use crate::grid::{make_grid, BoxGrid, GridFunction, C64};
use crate::potentials::{packet_potential, tube_potential, Distribution, RandomizationScheme};
use crate::rng::sample_seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TubeProfile {
    /// eps 1_T
    Indicator,
    /// potential carrying an exact wave packet e^(i x_1) phi on T
    Packet,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DestructionParams {
    pub d: usize,
    pub q: f64,
    pub eps: Vec<f64>,
    pub l: f64,
    pub n: usize,
    pub profile: TubeProfile,
    pub packet_width: f64,
    pub distribution: Distribution,
    pub n_mc: usize,
    /// z-window half widths around 1 + i eps, and points per side
    pub window: [f64; 2],
    pub im_floor: f64,
    pub scan_points: usize,
    /// second run at h_factor times the destruction scale
    pub h_factor: f64,
    pub min_ratio: f64,
    /// omega = 1 everywhere
    pub omega_one: bool,
}

impl Default for DestructionParams {
    fn default() -> Self {
        DestructionParams {
            d: 2,
            q: 3.0,
            eps: vec![0.4, 0.25],
            l: 32.0,
            n: 64,
            profile: TubeProfile::Packet,
            packet_width: 1.0,
            distribution: Distribution::BernoulliSymmetric,
            n_mc: 20,
            window: [0.3, 0.3],
            im_floor: 0.05,
            scan_points: 7,
            h_factor: 4.0,
            min_ratio: 2.0,
            omega_one: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleRun {
    pub h: f64,
    pub sigma: Vec<f64>,
    pub median: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsRun {
    pub eps: f64,
    /// destruction scale before rounding down to the grid
    pub h_theory: f64,
    pub deterministic: f64,
    pub at_scale: ScaleRun,
    pub above_scale: ScaleRun,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DestructionReport {
    pub runs: Vec<EpsRun>,
}

impl DestructionReport {
    /// the run at the smallest eps
    pub fn finest(&self) -> &EpsRun {
        self.runs.iter().min_by(|a, b| a.eps.total_cmp(&b.eps)).expect("non-empty eps sweep")
    }

    pub fn destroyed(&self, p: &DestructionParams) -> bool {
        self.finest().at_scale.ratio >= p.min_ratio
    }

    pub fn weaker_above_scale(&self) -> bool {
        let f = self.finest();
        f.above_scale.ratio < f.at_scale.ratio
    }
}

fn window(p: &DestructionParams, eps: f64) -> Vec<C64> {
    let k = p.scan_points;
    let lin = |c: f64, w: f64, lo: f64, i: usize| {
        let a = (c - w).max(lo);
        a + (c + w - a) * i as f64 / (k - 1) as f64
    };
    (0..k * k)
        .map(|idx| C64::new(lin(1.0, p.window[0], f64::NEG_INFINITY, idx / k), lin(eps, p.window[1], p.im_floor, idx % k)))
        .collect()
}

/// min over the window of sigma_min(I + R_0(z) V).
fn min_sigma(v: &GridFunction, zs: &[C64]) -> Result<f64> {
    zs.iter().try_fold(f64::INFINITY, |m, z| Ok(m.min(sigma_min_at(v, *z)?)))
}

fn profile(p: &DestructionParams, eps: f64, grid: &BoxGrid) -> Result<GridFunction> {
    match p.profile {
        TubeProfile::Indicator => tube_potential(eps, grid),
        TubeProfile::Packet => packet_potential(eps, p.packet_width, grid),
    }
}

/// V omega with omega constant on the cells h (j + [0,1)^d).
pub fn randomize_cells(v: &GridFunction, h: f64, scheme: Option<&RandomizationScheme>) -> GridFunction {
    let g = *v.grid();
    let mut out = v.clone();
    for (i, val) in out.values_mut().iter_mut().enumerate() {
        if *val == C64::new(0.0, 0.0) {
            continue;
        }
        let x = g.point(i);
        let j = [(x[0] / h + 1e-9).floor() as i64, (x[1] / h + 1e-9).floor() as i64, (x[2] / h + 1e-9).floor() as i64];
        *val *= scheme.map_or(1.0, |s| s.omega(j));
    }
    out
}

fn scale_run(p: &DestructionParams, v: &GridFunction, zs: &[C64], h: f64, det: f64, tag: u64, master: u64) -> Result<ScaleRun> {
    let sigma: Vec<f64> = (0..p.n_mc as u64)
        .into_par_iter()
        .map(|s| {
            let scheme = RandomizationScheme::new(h, p.distribution, sample_seed(master, tag << 32 | s))?;
            let vr = randomize_cells(v, h, if p.omega_one { None } else { Some(&scheme) });
            min_sigma(&vr, zs)
        })
        .collect::<Result<_>>()?;
    let mut sorted = sigma.clone();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let median = if n % 2 == 1 { sorted[n / 2] } else { (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0 };
    Ok(ScaleRun { h, sigma, median, ratio: median / det })
}

pub fn run_counterexample_destruction(p: &DestructionParams, master: u64) -> Result<DestructionReport> {
    p.validate()?;
    let grid = make_grid(p.d, p.l, p.n)?;
    let dx = grid.dx;
    let runs = p
        .eps
        .iter()
        .enumerate()
        .map(|(k, &eps)| {
            let v = profile(p, eps, &grid)?;
            let zs = window(p, eps);
            let det = min_sigma(&v, &zs)?;
            let h_theory = destruction_scale(eps, p.q, p.d)?;
            let h = ((h_theory / dx + 1e-9).floor() * dx).max(dx);
            let tag = 2 * k as u64;
            let at_scale = scale_run(p, &v, &zs, h, det, tag, master)?;
            let above_scale = scale_run(p, &v, &zs, h * p.h_factor, det, tag + 1, master)?;
            Ok(EpsRun { eps, h_theory, deterministic: det, at_scale, above_scale })
        })
        .collect::<Result<_>>()?;
    Ok(DestructionReport { runs })
}

impl DestructionReport {
    pub fn tables(&self) -> Vec<Table> {
        let mut s = Table::new("samples", &["eps", "h", "sample", "sigma_min"]);
        let mut r = Table::new("ratios", &["eps", "h_theory", "h", "deterministic", "median", "ratio"]);
        for run in &self.runs {
            for sr in [&run.at_scale, &run.above_scale] {
                for (i, x) in sr.sigma.iter().enumerate() {
                    s.push(vec![run.eps.into(), sr.h.into(), i.into(), (*x).into()]);
                }
                r.push(vec![run.eps.into(), run.h_theory.into(), sr.h.into(), run.deterministic.into(), sr.median.into(), sr.ratio.into()]);
            }
        }
        vec![r, s]
    }

    pub fn summary(&self, p: &DestructionParams) -> Value {
        let f = self.finest();
        json!({
            "finest_eps": f.eps,
            "deterministic_sigma_min": f.deterministic,
            "h": f.at_scale.h,
            "ratio": f.at_scale.ratio,
            "ratio_above_scale": f.above_scale.ratio,
            "destroyed": self.destroyed(p),
            "weaker_above_scale": self.weaker_above_scale(),
        })
    }
}

impl Scenario for DestructionParams {
    const ID: &'static str = "counterexample-destruction";
    const SUMMARY: &'static str = "sigma_min near z = 1 + i eps for the tube counterexample, deterministic against randomized at the destruction scale";

    fn validate(&self) -> Result<()> {
        ensure((2..=3).contains(&self.d), || format!("d = {} unsupported; use 2 or 3", self.d))?;
        let df = self.d as f64;
        ensure(self.q > (df + 1.0) / 2.0 && self.q <= df + 1.0, || format!("q = {} outside ((d+1)/2, d+1]", self.q))?;
        ensure(!self.eps.is_empty() && self.eps.iter().all(|e| *e > 0.0 && *e < 0.5), || "eps values must lie in (0, 1/2)".into())?;
        ensure(self.eps.iter().all(|e| 1.0 / e < self.l / 2.0), || {
            format!("box of side {} too small for a tube of length 2/eps", self.l)
        })?;
        ensure(self.n_mc >= 1 && self.scan_points >= 2 && self.h_factor > 1.0, || {
            "need n_mc >= 1, scan_points >= 2 and h_factor > 1".into()
        })?;
        ensure(self.im_floor > 0.0 && self.packet_width > 0.0, || "im_floor and packet_width must be positive".into())?;
        Ok(())
    }

    fn execute(&self, seed: u64) -> Result<(Vec<Table>, Value)> {
        let rep = run_counterexample_destruction(self, seed)?;
        Ok((rep.tables(), rep.summary(self)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn omega_one_reproduces_the_deterministic_scan() {
        let p = DestructionParams { eps: vec![0.25], n_mc: 2, scan_points: 3, omega_one: true, ..DestructionParams::default() };
        let r = run_counterexample_destruction(&p, 1).unwrap();
        let run = &r.runs[0];
        assert!(run.at_scale.sigma.iter().chain(&run.above_scale.sigma).all(|s| *s == run.deterministic));
        assert!(DestructionParams { l: 8.0, ..p }.validate().unwrap_err().is_config());
    }
}
