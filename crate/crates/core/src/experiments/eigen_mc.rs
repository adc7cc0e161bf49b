//! Violation fractions of the eigenvalue bound lambda^(2-d/q) / (<lambda h>^(d/2)
//! (log <lambda h>)^2) <= M |V|_q over random complex wells in d = 1.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::config::ensure;
use super::output::Table;
use super::tail::{run_tail_decay, TailParams};
use super::Scenario;
use crate::eigsearch::{sigma_min_scan_with, thm3_bound, KernelKind, Region};
use crate::error::Result;
use crate::grid::{lp_norm, make_grid, GridFunction, Space, C64};
use crate::potentials::{Distribution, RandomizationScheme};
use crate::rng::sample_seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EigenMcParams {
    pub d: usize,
    pub q: f64,
    /// V = amplitude e^(i phase) omega_j on the cells of [0,1)
    pub amplitude: f64,
    pub phase: f64,
    pub h: f64,
    pub dx: f64,
    pub distribution: Distribution,
    pub n_mc: usize,
    pub ms: Vec<f64>,
    pub lambda_min: f64,
    /// eps in [eps_floor, lambda/10] on either side of the real axis
    pub eps_floor: f64,
    pub band_resolution: [usize; 2],
    /// tail constant for exp(-c M^2); taken from a default tail-decay run when absent
    pub c_hat: Option<f64>,
}

impl Default for EigenMcParams {
    fn default() -> Self {
        EigenMcParams {
            d: 1,
            q: 1.5,
            amplitude: 32.0,
            phase: 0.5,
            h: 0.125,
            dx: 0.03125,
            distribution: Distribution::BernoulliSymmetric,
            n_mc: 500,
            ms: vec![0.0625, 0.125, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0],
            lambda_min: 0.25,
            eps_floor: 1e-3,
            band_resolution: [12, 8],
            c_hat: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenSample {
    pub index: usize,
    pub lq_norm: f64,
    /// eigenvalues z = (lambda + i eps)^2 with |eps| <= lambda / 10
    pub eigenvalues: Vec<C64>,
    /// largest M at which some eigenvalue violates the bound
    pub m_star: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenMcReport {
    pub samples: Vec<EigenSample>,
    pub fractions: Vec<f64>,
    pub c_hat: f64,
    /// lambda above which |V|_1 / (2 lambda) < 1 rules out eigenvalues
    pub certified_above: f64,
    /// bound ratio at lambda_min: eigenvalues below it only matter for M under this value
    pub small_lambda_cap: f64,
}

impl EigenMcReport {
    pub fn non_increasing(&self) -> bool {
        self.fractions.windows(2).all(|w| w[1] <= w[0])
    }

    pub fn fraction_at(&self, ms: &[f64], m: f64) -> Option<f64> {
        ms.iter().position(|x| *x == m).map(|i| self.fractions[i])
    }
}

fn lambda_eps(z: C64) -> (f64, f64) {
    let k = z.sqrt();
    if k.re < 0.0 {
        (-k.re, -k.im)
    } else {
        (k.re, k.im)
    }
}

/// Dyadic bands [a, 2a] up to `top`, each scanned for eps of both signs.
fn bands(lo: f64, top: f64) -> Vec<[f64; 2]> {
    let mut out = Vec::new();
    let mut a = lo;
    while a < top {
        out.push([a, (2.0 * a).min(top)]);
        a *= 2.0;
    }
    out
}

fn potential(p: &EigenMcParams, seed: u64) -> Result<GridFunction> {
    let n = (2.0 / p.dx).round() as usize;
    let grid = make_grid(1, 2.0, n)?;
    let scheme = RandomizationScheme::new(p.h, p.distribution, seed)?;
    let amp = C64::from_polar(p.amplitude, p.phase);
    let cells = (1.0 / p.h).round() as i64;
    let omega: Vec<f64> = (0..cells).map(|j| scheme.omega([j, 0, 0])).collect();
    Ok(GridFunction::from_fn(grid, Space::Position, |x| {
        let j = (x[0] / p.h + 1e-9).floor() as i64;
        if (0..cells).contains(&j) {
            amp * omega[j as usize]
        } else {
            C64::new(0.0, 0.0)
        }
    }))
}

fn eigenvalues(p: &EigenMcParams, v: &GridFunction, top: f64) -> Result<Vec<C64>> {
    let mut out: Vec<C64> = Vec::new();
    for band in bands(p.lambda_min, top) {
        let e_hi = band[1] / 10.0;
        for eps in [[p.eps_floor, e_hi], [-e_hi, -p.eps_floor]] {
            let scan = sigma_min_scan_with(v, Region::LambdaEps { lambda: band, eps }, p.band_resolution, KernelKind::Free)?;
            for c in scan.candidates {
                let z = c.z();
                let (l, e) = lambda_eps(z);
                let dup = out.iter().any(|w| (w - z).norm() < 1e-6 * (1.0 + z.norm()));
                if e.abs() <= l / 10.0 && !dup {
                    out.push(z);
                }
            }
        }
    }
    Ok(out)
}

pub fn run_eigen_bound_mc(p: &EigenMcParams, master: u64) -> Result<EigenMcReport> {
    p.validate()?;
    let l1 = p.amplitude;
    // Hilbert-Schmidt bound on |V|^(1/2) R_0 V^(1/2) in d = 1: |V|_1 / (2 |k|)
    let certified_above = (l1 / 2.0).max(p.lambda_min);
    let samples: Vec<EigenSample> = (0..p.n_mc)
        .into_par_iter()
        .map(|i| {
            let v = potential(p, sample_seed(master, i as u64))?;
            let lq = lp_norm(&v, p.q);
            let eigs = if lq == 0.0 { Vec::new() } else { eigenvalues(p, &v, certified_above)? };
            let mut m_star = 0.0f64;
            for z in &eigs {
                let (l, e) = lambda_eps(*z);
                m_star = m_star.max(thm3_bound(l, e, p.h, p.q, p.d)? / lq);
            }
            Ok(EigenSample { index: i, lq_norm: lq, eigenvalues: eigs, m_star })
        })
        .collect::<Result<_>>()?;
    let n = samples.len() as f64;
    let fractions = p.ms.iter().map(|&m| samples.iter().filter(|s| s.m_star > m).count() as f64 / n).collect();
    let c_hat = match p.c_hat {
        Some(c) => c,
        None => run_tail_decay(&TailParams::default(), master)?.c().unwrap_or(f64::NAN),
    };
    let small_lambda_cap = if l1 > 0.0 { thm3_bound(p.lambda_min, 0.0, p.h, p.q, p.d)? / l1 } else { 0.0 };
    Ok(EigenMcReport { samples, fractions, c_hat, certified_above, small_lambda_cap })
}

impl EigenMcReport {
    pub fn tables(&self, p: &EigenMcParams) -> Vec<Table> {
        let mut s = Table::new("samples", &["sample", "lq_norm", "eigenvalues", "m_star"]);
        let mut e = Table::new("eigenvalues", &["sample", "re_z", "im_z", "lambda", "eps"]);
        for x in &self.samples {
            s.push(vec![x.index.into(), x.lq_norm.into(), x.eigenvalues.len().into(), x.m_star.into()]);
            for z in &x.eigenvalues {
                let (l, ep) = lambda_eps(*z);
                e.push(vec![x.index.into(), z.re.into(), z.im.into(), l.into(), ep.into()]);
            }
        }
        let mut v = Table::new("violations", &["m", "fraction", "exp_neg_c_m_sq"]);
        for (m, f) in p.ms.iter().zip(&self.fractions) {
            v.push(vec![(*m).into(), (*f).into(), (-self.c_hat * m * m).exp().into()]);
        }
        vec![v, s, e]
    }

    pub fn summary(&self, p: &EigenMcParams) -> Value {
        json!({
            "fractions": self.fractions,
            "non_increasing": self.non_increasing(),
            "fraction_at_8": self.fraction_at(&p.ms, 8.0),
            "c_hat": self.c_hat,
            "certified_above": self.certified_above,
            "small_lambda_cap": self.small_lambda_cap,
            "samples_with_eigenvalues": self.samples.iter().filter(|s| !s.eigenvalues.is_empty()).count(),
            "max_m_star": self.samples.iter().map(|s| s.m_star).fold(0.0, f64::max),
        })
    }
}

impl Scenario for EigenMcParams {
    const ID: &'static str = "eigen-bound-mc";
    const SUMMARY: &'static str = "fraction of random complex wells with an eigenvalue violating the bound at level M";

    fn validate(&self) -> Result<()> {
        ensure(self.d == 1, || format!("d = {} unsupported; the eigenvalue Monte Carlo runs in d = 1", self.d))?;
        ensure(self.q >= 1.0 && self.q < 2.0, || format!("q = {} outside [1, d + 1)", self.q))?;
        ensure(self.amplitude >= 0.0 && self.phase.is_finite(), || "amplitude must be nonnegative".into())?;
        let ratio = self.h / self.dx;
        ensure(self.dx > 0.0 && (ratio - ratio.round()).abs() < 1e-9 && (1.0 / self.h).fract() == 0.0, || {
            format!("h = {} must divide 1 and be a multiple of dx = {}", self.h, self.dx)
        })?;
        ensure(self.n_mc >= 1 && !self.ms.is_empty() && self.ms.windows(2).all(|w| w[0] < w[1]), || {
            "need n_mc >= 1 and an increasing M grid".into()
        })?;
        ensure(self.lambda_min > 0.0 && self.eps_floor > 0.0 && self.eps_floor < self.lambda_min / 10.0, || {
            "need lambda_min > 0 and 0 < eps_floor < lambda_min / 10".into()
        })?;
        ensure(self.band_resolution.iter().all(|r| *r >= 3), || "band_resolution entries must be >= 3".into())?;
        Ok(())
    }

    fn execute(&self, seed: u64) -> Result<(Vec<Table>, Value)> {
        let rep = run_eigen_bound_mc(self, seed)?;
        Ok((rep.tables(self), rep.summary(self)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_potential_has_no_violations() {
        let p = EigenMcParams { amplitude: 0.0, n_mc: 4, c_hat: Some(1.0), ..EigenMcParams::default() };
        let r = run_eigen_bound_mc(&p, 1).unwrap();
        assert!(r.fractions.iter().all(|f| *f == 0.0));
        assert!(r.samples.iter().all(|s| s.eigenvalues.is_empty()));
    }

    #[test]
    fn strong_well_has_eigenvalues_in_the_sector() {
        let p = EigenMcParams { n_mc: 6, c_hat: Some(1.0), ..EigenMcParams::default() };
        let r = run_eigen_bound_mc(&p, 2).unwrap();
        assert!(r.samples.iter().any(|s| !s.eigenvalues.is_empty()));
        for s in &r.samples {
            for z in &s.eigenvalues {
                let (l, e) = lambda_eps(*z);
                assert!(e.abs() <= l / 10.0 && l >= p.lambda_min);
                let v = potential(&p, sample_seed(2, s.index as u64)).unwrap();
                let sig = crate::eigsearch::sigma_min_at_with(&v, *z, KernelKind::Free).unwrap();
                assert!(sig < crate::eigsearch::CANDIDATE_THRESHOLD);
            }
        }
        assert!(r.non_increasing());
    }
}
