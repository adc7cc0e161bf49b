//! Smoothed resolvent gamma_R * m: sup growth in R, the localization identity and
//! the C^(delta) pointwise bound.

use rand_distr::{Distribution as _, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::config::ensure;
use super::output::{fit_tables, Table};
use super::{Scenario, ScalingFit};
use crate::error::Result;
use crate::grid::{make_grid, norm, BoxGrid, GridFunction, Space, C64};
use crate::multipliers::{
    cdelta_sqrt, resolvent_symbol, smooth_symbol, smoothed_resolvent, ComplexEnergy, MultiplierSpec,
};
use crate::rng::sample_rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SmoothingParams {
    pub d: usize,
    pub n: usize,
    pub l: f64,
    pub lambda: f64,
    pub rs: Vec<f64>,
    pub expected_slope: f64,
    pub slope_tolerance: f64,
    /// bounded case: z = (lambda + i eps)^2 on its own grid
    pub bounded_lambda: f64,
    pub bounded_eps: f64,
    pub bounded_n: usize,
    pub bounded_l: f64,
    pub bounded_r: f64,
    pub bounded_tolerance: f64,
    /// identity 1_{B_R1} m(D) 1_{B_R2} = 1_{B_R1} m_R(D) 1_{B_R2}
    pub identity_eps: f64,
    pub r1: f64,
    pub r2: f64,
    pub identity_r: f64,
    pub n_mc: usize,
    pub identity_tolerance: f64,
    pub violation_threshold: f64,
    pub deltas: Vec<f64>,
    pub cdelta_bound: f64,
}

impl Default for SmoothingParams {
    fn default() -> Self {
        SmoothingParams {
            d: 2,
            n: 256,
            l: 256.0,
            lambda: 1.0,
            rs: vec![8.0, 16.0, 32.0, 64.0],
            expected_slope: 1.0,
            slope_tolerance: 0.15,
            bounded_lambda: 5.0,
            bounded_eps: 0.5,
            bounded_n: 128,
            bounded_l: 64.0,
            bounded_r: 8.0,
            bounded_tolerance: 0.1,
            identity_eps: 0.1,
            r1: 4.0,
            r2: 12.0,
            identity_r: 20.0,
            n_mc: 20,
            identity_tolerance: 1e-8,
            violation_threshold: 0.1,
            deltas: vec![1.0, 0.125, 0.015625],
            cdelta_bound: 4.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothingReport {
    pub sups: Vec<f64>,
    pub fit: ScalingFit,
    pub bounded_ratio: f64,
    pub identity_errors: Vec<f64>,
    pub violated_r: f64,
    pub violation_error: f64,
    pub cdelta_constants: Vec<f64>,
}

impl SmoothingReport {
    pub fn slope_ok(&self, p: &SmoothingParams) -> bool {
        (self.fit.slope - p.expected_slope).abs() <= p.slope_tolerance
    }

    pub fn bounded_ok(&self, p: &SmoothingParams) -> bool {
        (self.bounded_ratio - 1.0).abs() <= p.bounded_tolerance
    }

    pub fn identity_ok(&self, p: &SmoothingParams) -> bool {
        self.identity_errors.iter().all(|e| *e <= p.identity_tolerance) && self.violation_error > p.violation_threshold
    }

    pub fn cdelta_ok(&self, p: &SmoothingParams) -> bool {
        self.cdelta_constants.iter().all(|c| *c <= p.cdelta_bound)
    }
}

fn ball_indicator(g: &BoxGrid, r: f64) -> Vec<bool> {
    (0..g.len()).map(|i| norm(&g.point(i)) <= r).collect()
}

/// |1_{B_R1} (a(D) - b(D)) f| / |1_{B_R1} a(D) f|
fn localized_error(a: &MultiplierSpec, b: &MultiplierSpec, f: &GridFunction, r1: f64) -> Result<f64> {
    let inside = ball_indicator(f.grid(), r1);
    let (u, v) = (a.apply(f)?, b.apply(f)?);
    let (mut num, mut den) = (0.0, 0.0);
    for ((x, y), keep) in u.values().iter().zip(v.values()).zip(&inside) {
        if *keep {
            num += (x - y).norm_sqr();
            den += x.norm_sqr();
        }
    }
    Ok((num / den).sqrt())
}

pub fn run_smoothing_scaling(p: &SmoothingParams, master: u64) -> Result<SmoothingReport> {
    p.validate()?;
    let grid = make_grid(p.d, p.l, p.n)?;
    let z0 = ComplexEnergy::new(p.lambda, 0.0)?;
    let sups: Vec<f64> =
        p.rs.par_iter().map(|&r| Ok(smoothed_resolvent(&z0, &grid, r)?.max_abs())).collect::<Result<_>>()?;
    let fit = ScalingFit::loglog(&p.rs, &sups);

    let bg = make_grid(p.d, p.bounded_l, p.bounded_n)?;
    let m = resolvent_symbol(&ComplexEnergy::new(p.bounded_lambda, p.bounded_eps)?, &bg, None)?;
    let bounded_ratio = smooth_symbol(&m, p.bounded_r)?.max_abs() / m.max_abs();

    let m = resolvent_symbol(&ComplexEnergy::new(p.lambda, p.identity_eps)?, &grid, None)?;
    let m_ok = smooth_symbol(&m, p.identity_r)?;
    let inner = ball_indicator(&grid, p.r2);
    let identity_errors = (0..p.n_mc as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = sample_rng(master, i);
            let vals: Vec<C64> = inner
                .iter()
                .map(|&keep| {
                    let (a, b): (f64, f64) = (StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng));
                    if keep { C64::new(a, b) } else { C64::new(0.0, 0.0) }
                })
                .collect();
            localized_error(&m, &m_ok, &GridFunction::from_values(grid, Space::Position, vals)?, p.r1)
        })
        .collect::<Result<Vec<f64>>>()?;

    // mass at -R2 e1, observed across B_R1: separations in [R2 - R1, R2 + R1] reach past R
    let violated_r = (p.r1 + p.r2) / 2.0;
    let m_bad = smooth_symbol(&m, violated_r)?;
    let spike = grid.nearest_index(&[-p.r2, 0.0, 0.0])?;
    let f = GridFunction::from_fn(grid, Space::Position, |x| {
        let q = x[0] + p.r2;
        C64::new((-(q * q + x[1] * x[1] + x[2] * x[2])).exp(), 0.0)
    });
    debug_assert!(f.values()[spike].re > 0.99);
    let violation_error = localized_error(&m, &m_bad, &f, p.r1)?;

    let cdelta_constants = p
        .deltas
        .par_iter()
        .map(|&delta| {
            let ms = smoothed_resolvent(&z0, &grid, 1.0 / delta)?;
            Ok(cdelta_sqrt(&ms, delta)?.cdelta_constant(delta))
        })
        .collect::<Result<_>>()?;

    Ok(SmoothingReport { sups, fit, bounded_ratio, identity_errors, violated_r, violation_error, cdelta_constants })
}

impl SmoothingReport {
    pub fn tables(&self, p: &SmoothingParams) -> Vec<Table> {
        let mut sup = Table::new("sup_scaling", &["r", "sup"]);
        for (r, s) in p.rs.iter().zip(&self.sups) {
            sup.push(vec![(*r).into(), (*s).into()]);
        }
        let (pts, coef) = fit_tables(&[("sup_vs_r".to_string(), &self.fit)]);
        let mut id = Table::new("identity", &["trial", "r", "relative_error"]);
        for (i, e) in self.identity_errors.iter().enumerate() {
            id.push(vec![i.into(), p.identity_r.into(), (*e).into()]);
        }
        id.push(vec!["adversarial".into(), self.violated_r.into(), self.violation_error.into()]);
        let mut cd = Table::new("cdelta", &["delta", "constant"]);
        for (d, c) in p.deltas.iter().zip(&self.cdelta_constants) {
            cd.push(vec![(*d).into(), (*c).into()]);
        }
        let mut b = Table::new("bounded", &["lambda", "eps", "r", "sup_ratio"]);
        b.push(vec![p.bounded_lambda.into(), p.bounded_eps.into(), p.bounded_r.into(), self.bounded_ratio.into()]);
        vec![sup, pts, coef, id, cd, b]
    }

    pub fn summary(&self, p: &SmoothingParams) -> Value {
        json!({
            "slope": self.fit.slope,
            "r2": self.fit.r2,
            "slope_ok": self.slope_ok(p),
            "bounded_ratio": self.bounded_ratio,
            "bounded_ok": self.bounded_ok(p),
            "max_identity_error": self.identity_errors.iter().cloned().fold(0.0, f64::max),
            "violation_error": self.violation_error,
            "identity_ok": self.identity_ok(p),
            "cdelta_constants": self.cdelta_constants,
            "cdelta_ok": self.cdelta_ok(p),
        })
    }
}

impl Scenario for SmoothingParams {
    const ID: &'static str = "smoothing-scaling";
    const SUMMARY: &'static str = "sup |gamma_R * m| against R, the R > R1 + R2 localization identity and the C^(delta) bound";

    fn validate(&self) -> Result<()> {
        ensure((1..=3).contains(&self.d), || format!("d = {} outside 1..3", self.d))?;
        ensure(self.rs.len() >= 3 && self.rs.iter().all(|r| *r >= 1.0 && 4.0 * r <= self.l), || {
            format!("rs = {:?}: need at least 3 scales with 1 <= R <= L/4", self.rs)
        })?;
        ensure(4.0 * self.bounded_r <= self.bounded_l, || "bounded_r must be at most bounded_l / 4".into())?;
        ensure(self.identity_r > self.r1 + self.r2 && 4.0 * self.identity_r <= self.l, || {
            format!("identity_r = {} must exceed r1 + r2 and stay below L/4", self.identity_r)
        })?;
        ensure(self.r2 + self.r1 < self.l / 2.0, || "r1 + r2 must stay inside the box".into())?;
        ensure(self.deltas.iter().all(|d| *d > 0.0 && 4.0 / d <= self.l), || {
            format!("deltas {:?}: need 0 < delta and 1/delta <= L/4", self.deltas)
        })?;
        ensure(self.n_mc >= 1, || "n_mc must be positive".into())?;
        Ok(())
    }

    fn execute(&self, seed: u64) -> Result<(Vec<Table>, Value)> {
        let rep = run_smoothing_scaling(self, seed)?;
        Ok((rep.tables(self), rep.summary(self)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_instance() {
        let p = SmoothingParams {
            n: 64,
            l: 64.0,
            rs: vec![2.0, 4.0, 8.0, 16.0],
            r1: 3.0,
            r2: 6.0,
            identity_r: 10.0,
            n_mc: 3,
            deltas: vec![1.0, 0.25],
            ..SmoothingParams::default()
        };
        let r = run_smoothing_scaling(&p, 1).unwrap();
        assert!(r.identity_errors.iter().all(|e| *e < 1e-10));
        assert!(r.violation_error > 0.1);
        assert!(SmoothingParams { identity_r: 5.0, ..p }.validate().unwrap_err().is_config());
    }
}
