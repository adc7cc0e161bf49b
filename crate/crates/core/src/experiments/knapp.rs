//! Knapp saturation: mean |E* V_omega E|^2 over randomized tubes T_R across R.

use std::collections::HashMap;

use nalgebra::DVector;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::config::ensure;
use super::output::{fit_tables, Table};
use super::{Scenario, ScalingFit};
use crate::error::Result;
use crate::grid::{Point, C64};
use crate::multipliers::{gamma_cutoff, positive_kernel_radius, sphere_net, SphereNet};
use crate::nufft::{Nufft2, DEFAULT_SPREAD};
use crate::opnorm::{extension_matrix_from_plan, lanczos_norm, DenseOperator, NormOptions};
use crate::potentials::{cell_ratio, knapp_profile, Distribution, RandomizationScheme};
use crate::rng::sample_seed;

const BOOTSTRAP_TAG: u64 = 0xB007 << 48;
const H_CHECK_TAG: u64 = 1 << 62;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KnappParams {
    pub d: usize,
    pub lambda: f64,
    pub qs: Vec<f64>,
    pub rs: Vec<f64>,
    /// randomization scale
    pub h: f64,
    pub dx: f64,
    pub n_mc: usize,
    /// cos^2-mollified tube instead of the indicator
    pub smooth: bool,
    pub distribution: Distribution,
    /// slope tolerance around 1 - (d+1)/q
    pub tolerance: f64,
    pub bootstrap: usize,
    pub confidence: f64,
    /// re-run with dx = h_check_base at h = h_check_base and 2 h_check_base
    pub h_check: bool,
    pub h_check_base: f64,
    pub h_check_tolerance: f64,
    pub norm_tol: f64,
}

impl Default for KnappParams {
    fn default() -> Self {
        KnappParams {
            d: 2,
            lambda: 1.0,
            qs: vec![1.5, 3.0],
            rs: vec![8.0, 16.0, 32.0, 64.0],
            h: 0.125,
            dx: 0.125,
            n_mc: 50,
            smooth: true,
            distribution: Distribution::BernoulliSymmetric,
            tolerance: 0.2,
            bootstrap: 2000,
            confidence: 0.9,
            h_check: true,
            h_check_base: 0.0625,
            h_check_tolerance: 0.1,
            norm_tol: 1e-10,
        }
    }
}

/// Uniform patch [-R, R) x [-m dx, m dx) carrying the tube profile.
struct TubePatch {
    dims: [usize; 3],
    origin: Point,
    dx: f64,
    profile: Vec<f64>,
    lattice: Vec<[i64; 2]>,
}

impl TubePatch {
    fn new(r: f64, dx: f64, smooth: bool) -> Self {
        let n1h = (r / dx).round() as i64;
        let m2 = (r.sqrt() / dx).ceil() as i64;
        let dims = [2 * n1h as usize, 2 * m2 as usize, 1];
        let mut profile = Vec::with_capacity(dims[0] * dims[1]);
        let mut lattice = Vec::with_capacity(dims[0] * dims[1]);
        for k1 in -n1h..n1h {
            for k2 in -m2..m2 {
                let x = [k1 as f64 * dx, k2 as f64 * dx, 0.0];
                profile.push(knapp_profile(&x, r, r.sqrt(), smooth));
                lattice.push([k1, k2]);
            }
        }
        TubePatch { dims, origin: [-(n1h as f64) * dx, -(m2 as f64) * dx, 0.0], dx, profile, lattice }
    }

    fn lq_norm(&self, q: f64) -> f64 {
        (self.profile.iter().map(|p| p.abs().powf(q)).sum::<f64>() * self.dx * self.dx).powf(1.0 / q)
    }

    fn randomized(&self, scheme: &RandomizationScheme, ratio: i64) -> Vec<C64> {
        let mut omega: HashMap<[i64; 3], f64> = HashMap::new();
        self.profile
            .iter()
            .zip(&self.lattice)
            .map(|(&p, k)| {
                if p == 0.0 {
                    return C64::new(0.0, 0.0);
                }
                let j = [k[0].div_euclid(ratio), k[1].div_euclid(ratio), 0];
                let w = *omega.entry(j).or_insert_with(|| scheme.omega(j));
                C64::new(w * p, 0.0)
            })
            .collect()
    }
}

/// Knapp datum on the net: eta(|(R(nu_1/lambda - 1), R^(1/2) nu_2/lambda)|), unit norm
/// in orthonormal node coordinates.
pub fn knapp_vector(net: &SphereNet, r: f64) -> DVector<C64> {
    let v = DVector::from_iterator(
        net.len(),
        net.nodes.iter().zip(&net.weights).map(|(nu, w)| {
            let s = (r * (nu[0] / net.lambda - 1.0)).hypot(r.sqrt() * nu[1] / net.lambda);
            C64::new(w.sqrt() * gamma_cutoff(s), 0.0)
        }),
    );
    let n = v.norm();
    v / C64::new(n, 0.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnappSample {
    pub r: f64,
    pub index: usize,
    /// |E* V E|^2 for the unnormalized randomized profile
    pub norm_sq: f64,
    /// |E* V E g|^2 with g the Knapp datum
    pub pairing: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnappSlope {
    pub q: f64,
    pub expected: f64,
    pub fit: ScalingFit,
    pub ci: [f64; 2],
    pub pairing_fit: ScalingFit,
    pub within_tolerance: bool,
    /// the confidence interval lies inside expected +- tolerance (two one-sided tests)
    pub equivalent: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HCheck {
    pub hs: [f64; 2],
    pub dx: f64,
    pub means: [Vec<f64>; 2],
    pub slopes: [f64; 2],
    pub difference: f64,
    pub passes: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnappReport {
    pub r_kernel: f64,
    pub nodes: Vec<usize>,
    pub lq_norms: Vec<Vec<f64>>,
    pub samples: Vec<KnappSample>,
    pub mean_norm_sq: Vec<f64>,
    pub mean_pairing: Vec<f64>,
    pub slopes: Vec<KnappSlope>,
    pub h_check: Option<HCheck>,
}

fn sample_values(p: &KnappParams, patch: &TubePatch, net: &SphereNet, g: &DVector<C64>, h: f64, seed: u64) -> Result<(f64, f64)> {
    let scheme = RandomizationScheme::new(h, p.distribution, seed)?;
    let ratio = cell_ratio(h, patch.dx)?;
    let values = patch.randomized(&scheme, ratio);
    let plan = Nufft2::new(2, patch.dims, &values, patch.origin, patch.dx, DEFAULT_SPREAD);
    let mat = extension_matrix_from_plan(&plan, patch.dx * patch.dx, true, net, net);
    let pairing = (&mat * g).norm_squared();
    let opts = NormOptions { tol: p.norm_tol, ..NormOptions::default() };
    let norm = lanczos_norm(&DenseOperator(mat), &opts)?.value;
    Ok((norm * norm, pairing))
}

fn means(samples: &[(f64, f64)], n: usize, nr: usize) -> (Vec<f64>, Vec<f64>) {
    (0..nr)
        .map(|i| {
            let s = &samples[i * n..(i + 1) * n];
            (s.iter().map(|x| x.0).sum::<f64>() / n as f64, s.iter().map(|x| x.1).sum::<f64>() / n as f64)
        })
        .unzip()
}

fn normalized(means: &[f64], norms: &[f64]) -> Vec<f64> {
    means.iter().zip(norms).map(|(m, n)| m / (n * n)).collect()
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn run_knapp_saturation(p: &KnappParams, master: u64) -> Result<KnappReport> {
    p.validate()?;
    let r_kernel = kernel_radius(p.lambda)?;
    let nets: Vec<SphereNet> = p.rs.iter().map(|&r| sphere_net(p.lambda, r, 2)).collect::<Result<_>>()?;
    let datums: Vec<DVector<C64>> = nets.iter().zip(&p.rs).map(|(net, &r)| knapp_vector(net, r)).collect();
    let patches: Vec<TubePatch> = p.rs.iter().map(|&r| TubePatch::new(r, p.dx, p.smooth)).collect();
    let n = p.n_mc;
    let nr = p.rs.len();
    let raw: Vec<(f64, f64)> = (0..nr * n)
        .into_par_iter()
        .map(|k| {
            let (i, s) = (k / n, k % n);
            let seed = sample_seed(master, (i as u64) << 32 | s as u64);
            sample_values(p, &patches[i], &nets[i], &datums[i], p.h, seed)
        })
        .collect::<Result<_>>()?;
    let (mean_norm_sq, mean_pairing) = means(&raw, n, nr);
    let lq_norms: Vec<Vec<f64>> = p.qs.iter().map(|&q| patches.iter().map(|t| t.lq_norm(q)).collect()).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(sample_seed(master, BOOTSTRAP_TAG));
    let mut boot: Vec<Vec<f64>> = vec![Vec::with_capacity(p.bootstrap); p.qs.len()];
    for _ in 0..p.bootstrap {
        let m: Vec<f64> = (0..nr)
            .map(|i| (0..n).map(|_| raw[i * n + rng.random_range(0..n)].0).sum::<f64>() / n as f64)
            .collect();
        for (b, norms) in boot.iter_mut().zip(&lq_norms) {
            b.push(ScalingFit::loglog(&p.rs, &normalized(&m, norms)).slope);
        }
    }
    let alpha = (1.0 - p.confidence) / 2.0;
    let slopes = p
        .qs
        .iter()
        .zip(&lq_norms)
        .zip(boot.iter_mut())
        .map(|((&q, norms), b)| {
            b.sort_by(f64::total_cmp);
            let expected = 1.0 - 3.0 / q;
            let fit = ScalingFit::loglog(&p.rs, &normalized(&mean_norm_sq, norms));
            let ci = if b.is_empty() { [fit.slope, fit.slope] } else { [quantile(b, alpha), quantile(b, 1.0 - alpha)] };
            KnappSlope {
                q,
                expected,
                within_tolerance: (fit.slope - expected).abs() <= p.tolerance,
                equivalent: ci[0] > expected - p.tolerance && ci[1] < expected + p.tolerance,
                pairing_fit: ScalingFit::loglog(&p.rs, &normalized(&mean_pairing, norms)),
                fit,
                ci,
            }
        })
        .collect();

    let h_check = if p.h_check { Some(h_check(p, master, &nets, &datums)?) } else { None };
    let samples = raw
        .iter()
        .enumerate()
        .map(|(k, &(norm_sq, pairing))| KnappSample { r: p.rs[k / n], index: k % n, norm_sq, pairing })
        .collect();
    Ok(KnappReport {
        r_kernel,
        nodes: nets.iter().map(SphereNet::len).collect(),
        lq_norms,
        samples,
        mean_norm_sq,
        mean_pairing,
        slopes,
        h_check,
    })
}

fn h_check(p: &KnappParams, master: u64, nets: &[SphereNet], datums: &[DVector<C64>]) -> Result<HCheck> {
    let dx = p.h_check_base;
    let hs = [dx, 2.0 * dx];
    let patches: Vec<TubePatch> = p.rs.iter().map(|&r| TubePatch::new(r, dx, p.smooth)).collect();
    let (n, nr) = (p.n_mc, p.rs.len());
    let mut out: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    for (hi, &h) in hs.iter().enumerate() {
        let raw: Vec<(f64, f64)> = (0..nr * n)
            .into_par_iter()
            .map(|k| {
                let (i, s) = (k / n, k % n);
                let seed = sample_seed(master, H_CHECK_TAG | (hi as u64) << 40 | (i as u64) << 32 | s as u64);
                sample_values(p, &patches[i], &nets[i], &datums[i], h, seed)
            })
            .collect::<Result<_>>()?;
        out[hi] = means(&raw, n, nr).0;
    }
    let q = p.qs.iter().cloned().fold(f64::NAN, f64::max);
    let norms: Vec<f64> = patches.iter().map(|t| t.lq_norm(q)).collect();
    let slopes = [
        ScalingFit::loglog(&p.rs, &normalized(&out[0], &norms)).slope,
        ScalingFit::loglog(&p.rs, &normalized(&out[1], &norms)).slope,
    ];
    let difference = (slopes[1] - slopes[0]).abs();
    Ok(HCheck { hs, dx, means: out, slopes, difference, passes: difference < p.h_check_tolerance })
}

/// Radius r with Re (d sigma)^vee >= c > 0 on [0, r], from a fine net.
pub fn kernel_radius(lambda: f64) -> Result<f64> {
    Ok(positive_kernel_radius(&sphere_net(lambda, 64.0, 2)?))
}

impl KnappReport {
    pub fn slope(&self, q: f64) -> Option<&KnappSlope> {
        self.slopes.iter().find(|s| s.q == q)
    }

    pub fn tables(&self, p: &KnappParams) -> Vec<Table> {
        let mut samples = Table::new("samples", &["r", "sample", "norm_sq", "pairing"]);
        for s in &self.samples {
            samples.push(vec![s.r.into(), s.index.into(), s.norm_sq.into(), s.pairing.into()]);
        }
        let mut means = Table::new("means", &["r", "nodes", "q", "lq_norm", "mean_norm_sq", "mean_pairing"]);
        for (qi, &q) in p.qs.iter().enumerate() {
            for (i, &r) in p.rs.iter().enumerate() {
                let n2 = self.lq_norms[qi][i].powi(2);
                means.push(vec![
                    r.into(),
                    self.nodes[i].into(),
                    q.into(),
                    self.lq_norms[qi][i].into(),
                    (self.mean_norm_sq[i] / n2).into(),
                    (self.mean_pairing[i] / n2).into(),
                ]);
            }
        }
        let mut slopes = Table::new(
            "slopes",
            &["q", "expected", "slope", "ci_lo", "ci_hi", "pairing_slope", "within_tolerance", "equivalent"],
        );
        for s in &self.slopes {
            slopes.push(vec![
                s.q.into(),
                s.expected.into(),
                s.fit.slope.into(),
                s.ci[0].into(),
                s.ci[1].into(),
                s.pairing_fit.slope.into(),
                s.within_tolerance.into(),
                s.equivalent.into(),
            ]);
        }
        let named: Vec<(String, &ScalingFit)> = self
            .slopes
            .iter()
            .flat_map(|s| [(format!("norm_sq_q{}", s.q), &s.fit), (format!("pairing_q{}", s.q), &s.pairing_fit)])
            .collect();
        let (pts, coef) = fit_tables(&named);
        let mut out = vec![samples, means, slopes, pts, coef];
        if let Some(hc) = &self.h_check {
            let mut t = Table::new("h_check", &["h", "dx", "r", "mean_norm_sq"]);
            for (hi, &h) in hc.hs.iter().enumerate() {
                for (i, &r) in p.rs.iter().enumerate() {
                    t.push(vec![h.into(), hc.dx.into(), r.into(), hc.means[hi][i].into()]);
                }
            }
            out.push(t);
        }
        out
    }

    pub fn summary(&self) -> Value {
        json!({
            "positive_kernel_radius": self.r_kernel,
            "slopes": self.slopes.iter().map(|s| json!({
                "q": s.q, "expected": s.expected, "slope": s.fit.slope, "r2": s.fit.r2, "ci": s.ci,
                "pairing_slope": s.pairing_fit.slope,
                "within_tolerance": s.within_tolerance, "equivalent": s.equivalent,
            })).collect::<Vec<_>>(),
            "h_check": self.h_check.as_ref().map(|h| json!({
                "h": h.hs, "dx": h.dx, "slopes": h.slopes, "difference": h.difference, "passes": h.passes,
            })),
        })
    }
}

impl Scenario for KnappParams {
    const ID: &'static str = "knapp-saturation";
    const SUMMARY: &'static str = "mean |E* V_omega E|^2 on randomized Knapp tubes against R^(1-(d+1)/q)";

    fn validate(&self) -> Result<()> {
        ensure(self.d == 2, || format!("d = {} unsupported; the Knapp scenario runs in d = 2", self.d))?;
        ensure(self.lambda > 0.0, || "lambda must be positive".into())?;
        ensure(!self.qs.is_empty() && self.qs.iter().all(|q| [1.5, 2.0, 3.0].contains(q)), || {
            format!("qs = {:?}: each q must be one of 1.5, 2, 3", self.qs)
        })?;
        ensure(self.rs.len() >= 4 && self.rs.windows(2).all(|w| w[0] < w[1]), || {
            format!("rs = {:?}: need at least 4 increasing radii", self.rs)
        })?;
        ensure(self.rs.iter().all(|&r| r >= 4.0 && r.fract() == 0.0), || "radii must be integers >= 4".into())?;
        ensure(self.n_mc >= 2, || "n_mc must be at least 2".into())?;
        ensure(self.tolerance > 0.0 && self.confidence > 0.0 && self.confidence < 1.0, || {
            "tolerance must be positive and confidence in (0, 1)".into()
        })?;
        let align = |h: f64, dx: f64| cell_ratio(h, dx).is_ok() && (1.0 / dx).fract() == 0.0;
        ensure(align(self.h, self.dx), || format!("h = {} must be a multiple of dx = {}, 1/dx an integer", self.h, self.dx))?;
        let r = kernel_radius(self.lambda)?;
        ensure(2.0 * self.h < r, || format!("2h = {} must stay below the positive-kernel radius {r}", 2.0 * self.h))?;
        if self.h_check {
            let b = self.h_check_base;
            ensure(b > 0.0 && align(b, b) && 4.0 * b < r, || {
                format!("h_check_base = {b}: need 1/b integer and 2 (2b) below the kernel radius {r}")
            })?;
        }
        Ok(())
    }

    fn execute(&self, seed: u64) -> Result<(Vec<Table>, Value)> {
        let rep = run_knapp_saturation(self, seed)?;
        Ok((rep.tables(self), rep.summary()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn patch_matches_tube_and_validation() {
        let t = TubePatch::new(16.0, 0.125, false);
        let vol = crate::potentials::knapp_tube_volume(16.0, 2);
        assert!((t.lq_norm(1.0) - vol).abs() < 1e-9);
        let mut p = KnappParams::default();
        assert!(p.validate().is_ok());
        p.h = 0.25;
        assert!(p.validate().unwrap_err().is_config());
        p = KnappParams { qs: vec![4.0], ..KnappParams::default() };
        assert!(p.validate().is_err());
        p = KnappParams { d: 3, ..KnappParams::default() };
        assert!(p.validate().is_err());
    }

    #[test]
    fn knapp_vector_is_a_unit_cap() {
        let net = sphere_net(1.0, 16.0, 2).unwrap();
        let g = knapp_vector(&net, 16.0);
        assert!((g.norm() - 1.0).abs() < 1e-12);
        let far = net.nodes.iter().position(|nu| nu[0] < 0.0).unwrap();
        assert_eq!(g[far], C64::new(0.0, 0.0));
    }

    #[test]
    fn small_run_is_deterministic() {
        let p = KnappParams { rs: vec![4.0, 5.0, 6.0, 7.0], n_mc: 3, bootstrap: 20, h_check: false, ..KnappParams::default() };
        let a = run_knapp_saturation(&p, 1).unwrap();
        let b = run_knapp_saturation(&p, 1).unwrap();
        assert_eq!(a, b);
        assert!(a.samples.iter().all(|s| s.pairing <= s.norm_sq * (1.0 + 1e-9)));
    }
}
