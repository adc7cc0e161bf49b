//! Gaussian tail of |E* V_omega E| for a unit-cell random potential.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::config::ensure;
use super::output::{fit_tables, Table};
use super::{Scenario, ScalingFit};
use crate::error::Result;
use crate::grid::C64;
use crate::multipliers::{e, SphereNet};
use crate::potentials::{cell_ratio, Distribution, RandomizationScheme};
use crate::probml::{sample_statistic, ExceedanceCurve};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TailParams {
    pub d: usize,
    pub lambda: f64,
    pub nodes: usize,
    pub h: f64,
    pub dx: f64,
    pub distribution: Distribution,
    pub n_mc: usize,
    pub ms: Vec<f64>,
    /// omega = 1 on every cell
    pub deterministic: bool,
    /// re-run with 2 n_mc samples (the first n_mc shared)
    pub doubling: bool,
    pub min_r2: f64,
    pub stability: f64,
}

impl Default for TailParams {
    fn default() -> Self {
        TailParams {
            d: 2,
            lambda: 1.0,
            nodes: 50,
            h: 0.125,
            dx: 0.0625,
            distribution: Distribution::BernoulliSymmetric,
            n_mc: 2000,
            ms: (0..=20).map(|i| 1.0 + 0.1 * i as f64).collect(),
            deterministic: false,
            doubling: true,
            min_r2: 0.85,
            stability: 0.15,
        }
    }
}

/// E* 1_Q E on the circle net for every h-cell Q of [0,1)^2, in orthonormal node coordinates.
pub fn cell_blocks(p: &TailParams) -> Result<Vec<DMatrix<C64>>> {
    let ratio = cell_ratio(p.h, p.dx)? as usize;
    let cells = (1.0 / p.h).round() as usize;
    let net = SphereNet::circle(p.lambda, p.nodes);
    let area = p.dx * p.dx;
    Ok((0..cells * cells)
        .into_par_iter()
        .map(|c| {
            let (c1, c2) = (c / cells, c % cells);
            let b = DMatrix::from_fn(ratio * ratio, net.len(), |k, j| {
                let x = [(c1 * ratio + k / ratio) as f64 * p.dx, (c2 * ratio + k % ratio) as f64 * p.dx, 0.0];
                let nu = &net.nodes[j];
                e(x[0] * nu[0] + x[1] * nu[1]) * net.weights[j].sqrt()
            });
            b.ad_mul(&b) * C64::new(area, 0.0)
        })
        .collect())
}

fn sample_norm(blocks: &[DMatrix<C64>], omega: impl Iterator<Item = f64>) -> f64 {
    let n = blocks[0].nrows();
    let mut m = DMatrix::<C64>::zeros(n, n);
    for (b, w) in blocks.iter().zip(omega) {
        m += b * C64::new(w, 0.0);
    }
    m.symmetric_eigenvalues().iter().fold(0.0, |a, x| a.max(x.abs()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailRun {
    pub samples: Vec<f64>,
    pub curve: ExceedanceCurve,
    pub fit: Option<ScalingFit>,
}

impl TailRun {
    fn new(samples: Vec<f64>, ms: &[f64]) -> Result<Self> {
        let scale = samples.iter().sum::<f64>() / samples.len() as f64;
        let curve = ExceedanceCurve::from_samples("extension_norm", &samples, ms, scale)?;
        let fit = curve.tail_fit();
        Ok(TailRun { samples, curve, fit })
    }

    /// Fitted c = -slope of log P against M^2.
    pub fn c(&self) -> Option<f64> {
        self.fit.as_ref().map(|f| -f.slope)
    }

    pub fn r2(&self) -> Option<f64> {
        self.fit.as_ref().map(|f| f.r2)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub run: TailRun,
    pub doubled: Option<TailRun>,
    /// |c(2n) - c(n)| / c(n)
    pub relative_change: Option<f64>,
}

impl TailReport {
    pub fn c(&self) -> Option<f64> {
        self.run.c()
    }

    pub fn passes(&self, p: &TailParams) -> bool {
        let fit_ok = self.c().is_some_and(|c| c > 0.0) && self.run.r2().is_some_and(|r| r >= p.min_r2);
        fit_ok && self.relative_change.is_none_or(|x| x < p.stability)
    }
}

pub fn run_tail_decay(p: &TailParams, master: u64) -> Result<TailReport> {
    p.validate()?;
    let blocks = cell_blocks(p)?;
    let total = if p.doubling { 2 * p.n_mc } else { p.n_mc };
    let all = sample_statistic(master, total, |seed| {
        if p.deterministic {
            return Ok(sample_norm(&blocks, std::iter::repeat(1.0)));
        }
        let scheme = RandomizationScheme::new(p.h, p.distribution, seed)?;
        let cells = (1.0 / p.h).round() as i64;
        Ok(sample_norm(&blocks, (0..cells * cells).map(|c| scheme.omega([c / cells, c % cells, 0]))))
    })?;
    let run = TailRun::new(all[..p.n_mc].to_vec(), &p.ms)?;
    let doubled = if p.doubling { Some(TailRun::new(all, &p.ms)?) } else { None };
    let relative_change = match (&doubled, run.c()) {
        (Some(d), Some(c)) => d.c().map(|c2| (c2 - c).abs() / c.abs()),
        _ => None,
    };
    Ok(TailReport { run, doubled, relative_change })
}

impl TailReport {
    pub fn tables(&self) -> Vec<Table> {
        let mut samples = Table::new("samples", &["sample", "norm"]);
        for (i, &x) in self.run.samples.iter().enumerate() {
            samples.push(vec![i.into(), x.into()]);
        }
        let mut curve = Table::new("exceedance", &["n_mc", "m", "m_sq", "probability", "censored", "scale"]);
        let mut named = Vec::new();
        for r in std::iter::once(&self.run).chain(&self.doubled) {
            let c = &r.curve;
            for ((m, pr), cen) in c.ms.iter().zip(&c.probs).zip(&c.censored) {
                curve.push(vec![c.n_samples.into(), (*m).into(), (m * m).into(), (*pr).into(), (*cen).into(), c.scale.into()]);
            }
            if let Some(f) = &r.fit {
                named.push((format!("log_p_vs_m_sq_n{}", c.n_samples), f));
            }
        }
        let (pts, coef) = fit_tables(&named);
        vec![samples, curve, pts, coef]
    }

    pub fn summary(&self, p: &TailParams) -> Value {
        json!({
            "c": self.c(),
            "r2": self.run.r2(),
            "scale": self.run.curve.scale,
            "uncensored": self.run.curve.censored.iter().filter(|c| !**c).count(),
            "c_doubled": self.doubled.as_ref().and_then(TailRun::c),
            "relative_change": self.relative_change,
            "passes": self.passes(p),
        })
    }
}

impl Scenario for TailParams {
    const ID: &'static str = "tail-decay";
    const SUMMARY: &'static str = "P(|E* V_omega E| > M C) against exp(-c M^2) for a unit-cell random potential";

    fn validate(&self) -> Result<()> {
        ensure(self.d == 2, || format!("d = {} unsupported; the tail scenario runs in d = 2", self.d))?;
        ensure(self.lambda > 0.0 && self.nodes >= 4, || "need lambda > 0 and at least 4 nodes".into())?;
        ensure(cell_ratio(self.h, self.dx).is_ok() && (1.0 / self.h).fract() == 0.0, || {
            format!("h = {} must divide 1 and be a multiple of dx = {}", self.h, self.dx)
        })?;
        ensure(self.n_mc >= 100, || format!("n_mc = {} below 100", self.n_mc))?;
        ensure(self.ms.len() >= 3 && self.ms.iter().all(|m| *m > 0.0), || "need at least 3 positive M values".into())?;
        Ok(())
    }

    fn execute(&self, seed: u64) -> Result<(Vec<Table>, Value)> {
        let rep = run_tail_decay(self, seed)?;
        Ok((rep.tables(), rep.summary(self)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::opnorm::{extension_matrix, matrix_norm};

    #[test]
    fn blocks_sum_to_the_extension_matrix() {
        let p = TailParams { h: 0.25, dx: 0.125, nodes: 12, ..TailParams::default() };
        let blocks = cell_blocks(&p).unwrap();
        let sum = blocks.iter().fold(DMatrix::zeros(12, 12), |a, b| a + b);
        let grid = crate::make_grid(2, 2.0, 16).unwrap();
        let unit = |t: f64| (-1e-9..1.0 - 1e-9).contains(&t);
        let v = crate::GridFunction::from_real_fn(grid, crate::Space::Position, |x| f64::from(u8::from(unit(x[0]) && unit(x[1]))));
        let net = SphereNet::circle(1.0, 12);
        let m = extension_matrix(&v, &net, &net).unwrap();
        assert!(matrix_norm(&(&m - &sum)) < 1e-6 * matrix_norm(&m));
    }

    #[test]
    fn deterministic_potential_gives_a_step() {
        let ms = vec![0.5, 0.9, 1.1, 2.0];
        let p = TailParams { deterministic: true, n_mc: 100, doubling: false, ms, ..TailParams::default() };
        let r = run_tail_decay(&p, 3).unwrap();
        assert!(r.run.samples.iter().all(|&x| x == r.run.samples[0]));
        assert_eq!(r.run.curve.probs, vec![1.0, 1.0, 0.0, 0.0]);
        assert!(r.run.fit.is_none());
    }
}
