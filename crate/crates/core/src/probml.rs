//! Monte-Carlo tail curves, maxima of sub-gaussians, greedy l^inf covering
//! numbers, dyadic chaining and the double geometric series.

use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::ScalingFit;
use crate::grid::C64;
use crate::potentials::Distribution;
use crate::rng::{sample_rng, sample_seed};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExceedanceCurve {
    pub statistic: String,
    pub ms: Vec<f64>,
    pub probs: Vec<f64>,
    pub n_samples: usize,
    pub scale: f64,
    /// true where P < 5 / n_samples
    pub censored: Vec<bool>,
}

impl ExceedanceCurve {
    /// Empirical P(X > M C) from precomputed samples.
    pub fn from_samples(statistic: &str, samples: &[f64], ms: &[f64], scale: f64) -> Result<Self> {
        if samples.len() < 100 {
            return Err(Error::InsufficientSamples { got: samples.len(), needed: 100 });
        }
        if !(scale > 0.0) {
            return Err(Error::Precondition(format!("scale C = {scale} must be positive")));
        }
        let n = samples.len() as f64;
        let probs: Vec<f64> =
            ms.iter().map(|m| samples.iter().filter(|&&x| x > m * scale).count() as f64 / n).collect();
        let censored = probs.iter().map(|&p| p < 5.0 / n).collect();
        Ok(ExceedanceCurve {
            statistic: statistic.to_string(),
            ms: ms.to_vec(),
            probs,
            n_samples: samples.len(),
            scale,
            censored,
        })
    }

    /// log P against M^2 over the uncensored points; c = -slope.
    pub fn tail_fit(&self) -> Option<ScalingFit> {
        let (xs, ys): (Vec<f64>, Vec<f64>) = self
            .ms
            .iter()
            .zip(&self.probs)
            .zip(&self.censored)
            .filter(|(_, &c)| !c)
            .map(|((m, p), _)| (m * m, p.ln()))
            .unzip();
        if xs.len() < 3 {
            return None;
        }
        Some(ScalingFit::fit(xs, ys))
    }
}

/// Samples statistic(rng_i) in parallel with seeds derived from `master`.
pub fn sample_statistic<F>(master: u64, n: usize, statistic: F) -> Result<Vec<f64>>
where
    F: Fn(u64) -> Result<f64> + Sync,
{
    (0..n as u64).into_par_iter().map(|i| statistic(sample_seed(master, i))).collect()
}

/// Samples a statistic and tabulates P(X > M C); C defaults to the sample mean.
pub fn exceedance_curve<F>(statistic_id: &str, sampler: F, ms: &[f64], n_samples: usize, scale: Option<f64>, master: u64) -> Result<ExceedanceCurve>
where
    F: Fn(u64) -> Result<f64> + Sync,
{
    if n_samples < 100 {
        return Err(Error::InsufficientSamples { got: n_samples, needed: 100 });
    }
    let samples = sample_statistic(master, n_samples, sampler)?;
    let c = scale.unwrap_or_else(|| samples.iter().sum::<f64>() / samples.len() as f64);
    ExceedanceCurve::from_samples(statistic_id, &samples, ms, c)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaxScaling {
    pub ns: Vec<usize>,
    pub mean_max: Vec<f64>,
    /// mean_max / sqrt(2 log N), NaN at N = 1
    pub ratios: Vec<f64>,
    /// mean_max against sqrt(log N) over N >= 2
    pub fit: ScalingFit,
}

/// E max_{j <= N} |X_j| for i.i.d. draws, averaged over `trials`.
pub fn max_scaling(ns: &[usize], dist: Distribution, trials: usize, master: u64) -> Result<MaxScaling> {
    if ns.is_empty() || trials == 0 {
        return Err(Error::Precondition("need at least one N and one trial".into()));
    }
    let mut mean_max = Vec::with_capacity(ns.len());
    for (a, &n) in ns.iter().enumerate() {
        let maxima: Vec<f64> = (0..trials as u64)
            .into_par_iter()
            .map(|t| {
                let mut rng = sample_rng(master ^ ((a as u64) << 40), t);
                (0..n).map(|_| dist.draw(&mut rng).abs()).fold(0.0, f64::max)
            })
            .collect();
        mean_max.push(maxima.iter().sum::<f64>() / trials as f64);
    }
    let ratios = ns
        .iter()
        .zip(&mean_max)
        .map(|(&n, m)| if n > 1 { m / (2.0 * (n as f64).ln()).sqrt() } else { f64::NAN })
        .collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) =
        ns.iter().zip(&mean_max).filter(|(&n, _)| n > 1).map(|(&n, &m)| ((n as f64).ln().sqrt(), m)).unzip();
    Ok(MaxScaling { ns: ns.to_vec(), mean_max, ratios, fit: ScalingFit::fit(xs, ys) })
}

/// |S|_{H -> l^inf}: the largest row l^2 norm.
pub fn sup_norm(s: &DMatrix<C64>) -> f64 {
    s.row_iter().map(|r| r.norm()).fold(0.0, f64::max)
}

fn linf(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

fn within(a: &[C64], b: &[C64], eps: f64) -> bool {
    let e2 = eps * eps;
    a.iter().zip(b).all(|(x, y)| (x - y).norm_sqr() <= e2)
}

/// The origin followed by S a_i for n_probe uniform points a_i on the unit sphere of H.
pub fn sample_image(s: &DMatrix<C64>, n_probe: usize, seed: u64) -> Vec<Vec<C64>> {
    let n = s.ncols();
    let mut out = Vec::with_capacity(n_probe + 1);
    out.push(vec![C64::new(0.0, 0.0); s.nrows()]);
    let probes: Vec<Vec<C64>> = (0..n_probe as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng: ChaCha8Rng = sample_rng(seed, i);
            let a: Vec<C64> =
                (0..n).map(|_| C64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng))).collect();
            let na = a.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            let v = DVector::from_iterator(n, a.into_iter().map(|c| c / na));
            (s * v).data.into()
        })
        .collect();
    out.extend(probes);
    out
}

/// Greedy l^inf cover of `points` by eps-balls centered at points, in order.
pub fn greedy_cover(points: &[Vec<C64>], eps: f64) -> Vec<usize> {
    let mut covered = vec![false; points.len()];
    let mut centers = Vec::new();
    for i in 0..points.len() {
        if covered[i] {
            continue;
        }
        centers.push(i);
        let c = &points[i];
        let newly: Vec<usize> = (i..points.len())
            .into_par_iter()
            .filter(|&j| !covered[j] && within(c, &points[j], eps))
            .collect();
        for j in newly {
            covered[j] = true;
        }
    }
    centers
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoveringReport {
    pub eps_list: Vec<f64>,
    pub counts: Vec<usize>,
    pub s_norm: f64,
    pub m: usize,
    pub n_probe: usize,
}

impl CoveringReport {
    /// log N(eps) eps^2 / (log m |S|^2) per eps.
    pub fn sudakov_ratios(&self) -> Vec<f64> {
        self.eps_list
            .iter()
            .zip(&self.counts)
            .map(|(e, &n)| (n as f64).ln() * e * e / ((self.m as f64).ln() * self.s_norm * self.s_norm))
            .collect()
    }
}

fn check_covering_input(s: &DMatrix<C64>, n_probe: usize) -> Result<()> {
    if s.ncols() > 64 || s.nrows() > 4096 {
        return Err(Error::SizeOverflow(format!("{} x {} exceeds 4096 x 64", s.nrows(), s.ncols())));
    }
    if n_probe < 10_000 {
        return Err(Error::InsufficientSamples { got: n_probe, needed: 10_000 });
    }
    Ok(())
}

/// Greedy upper estimate of N(eps) for the sampled image of the unit ball.
pub fn covering_number(s: &DMatrix<C64>, eps: f64, n_probe: usize, seed: u64) -> Result<usize> {
    check_covering_input(s, n_probe)?;
    Ok(greedy_cover(&sample_image(s, n_probe, seed), eps).len())
}

/// Covering counts over several radii; a cover at a smaller radius also covers at a
/// larger one, so counts are made non-increasing in eps.
pub fn covering_numbers(s: &DMatrix<C64>, eps_list: &[f64], n_probe: usize, seed: u64) -> Result<CoveringReport> {
    check_covering_input(s, n_probe)?;
    let pts = sample_image(s, n_probe, seed);
    let mut order: Vec<usize> = (0..eps_list.len()).collect();
    order.sort_by(|&a, &b| eps_list[a].total_cmp(&eps_list[b]));
    let mut counts = vec![0usize; eps_list.len()];
    let mut best = usize::MAX;
    for &i in &order {
        best = best.min(greedy_cover(&pts, eps_list[i]).len());
        counts[i] = best;
    }
    Ok(CoveringReport { eps_list: eps_list.to_vec(), counts, s_norm: sup_norm(s), m: s.nrows(), n_probe })
}

/// Nets at radii 2^{-k}, k = 0..=k_max, each a greedy cover of `points`.
#[derive(Clone, Debug)]
pub struct ChainNets {
    pub levels: Vec<Vec<Vec<C64>>>,
}

impl ChainNets {
    pub fn build(points: &[Vec<C64>], k_max: usize) -> Self {
        let levels = (0..=k_max)
            .map(|k| {
                let r = 0.5f64.powi(k as i32);
                greedy_cover(points, r).into_iter().map(|i| points[i].clone()).collect()
            })
            .collect();
        ChainNets { levels }
    }

    pub fn k_max(&self) -> usize {
        self.levels.len() - 1
    }

    fn nearest(&self, k: usize, y: &[C64]) -> &[C64] {
        self.levels[k]
            .iter()
            .min_by(|a, b| linf(a, y).total_cmp(&linf(b, y)))
            .expect("nonempty level")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Chain {
    /// xi^(0) = pi_0(Sa), xi^(k) = pi_k(Sa) - pi_{k-1}(Sa)
    pub links: Vec<Vec<C64>>,
    pub sup_norms: Vec<f64>,
    pub p_norms: Vec<f64>,
    pub p: f64,
    /// |Sa - sum_k xi^(k)|_inf
    pub error: f64,
}

/// Telescoping chain of y = S a along the nets; `tol` is the requested l^inf accuracy.
pub fn chaining_decompose(y: &[C64], nets: &ChainNets, p: f64, tol: f64) -> Result<Chain> {
    let finest = 0.5f64.powi(nets.k_max() as i32);
    if finest > tol {
        return Err(Error::NetTooCoarse { finest, requested: tol });
    }
    let mut links = Vec::new();
    let mut prev = vec![C64::new(0.0, 0.0); y.len()];
    for k in 0..=nets.k_max() {
        let pk = nets.nearest(k, y).to_vec();
        links.push(pk.iter().zip(&prev).map(|(a, b)| a - b).collect::<Vec<C64>>());
        prev = pk;
    }
    let mut sum = vec![C64::new(0.0, 0.0); y.len()];
    for l in &links {
        sum.iter_mut().zip(l).for_each(|(s, x)| *s += x);
    }
    let error = linf(&sum, y);
    let sup_norms = links.iter().map(|l| l.iter().map(|c| c.norm()).fold(0.0, f64::max)).collect();
    let p_norms = links.iter().map(|l| l.iter().map(|c| c.norm().powf(p)).sum::<f64>().powf(1.0 / p)).collect();
    Ok(Chain { links, sup_norms, p_norms, p, error })
}

/// A (1 + (log A)^2) for A < 1, else 1.
pub fn geom_series_bound(a: f64) -> Result<f64> {
    if !(a > 0.0) {
        return Err(Error::Precondition(format!("A = {a} must be positive")));
    }
    Ok(if a < 1.0 { a * (1.0 + a.ln().powi(2)) } else { 1.0 })
}

/// sum_{0 <= k, k' <= k_max} min(2^{-k-k'}, A), grouped by s = k + k'.
pub fn geom_series_bruteforce(a: f64, k_max: usize) -> Result<f64> {
    if !(a > 0.0) {
        return Err(Error::Precondition(format!("A = {a} must be positive")));
    }
    if k_max < 60 {
        return Err(Error::Precondition(format!("k_max = {k_max} below 60")));
    }
    let mut total = 0.0;
    for s in (0..=2 * k_max).rev() {
        let mult = if s <= k_max { s + 1 } else { 2 * k_max - s + 1 };
        total += mult as f64 * 0.5f64.powi(s as i32).min(a);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn constant_statistic_never_exceeds() {
        let c = exceedance_curve("half", |_| Ok(0.5), &[1.0, 2.0, 3.0], 200, Some(1.0), 1).unwrap();
        assert!(c.probs.iter().all(|&p| p == 0.0));
        assert!(exceedance_curve("x", |_| Ok(0.5), &[1.0], 50, None, 1).is_err());
    }

    #[test]
    fn exceedance_is_reproducible() {
        let f = |seed: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x: f64 = StandardNormal.sample(&mut rng);
            Ok(x.abs())
        };
        let a = exceedance_curve("g", f, &[0.5, 1.0, 1.5], 1000, None, 9).unwrap();
        let b = exceedance_curve("g", f, &[0.5, 1.0, 1.5], 1000, None, 9).unwrap();
        assert_eq!(a, b);
        assert!(a.probs.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn bernoulli_max_is_one() {
        let r = max_scaling(&[1, 10, 100], Distribution::BernoulliSymmetric, 20, 3).unwrap();
        assert!(r.mean_max.iter().all(|&m| m == 1.0));
        assert!(r.ratios[0].is_nan());
    }

    #[test]
    fn cover_edge_cases() {
        let s = DMatrix::from_fn(8, 4, |i, j| C64::new(((i * 4 + j) as f64).sin(), 0.0));
        let norm = sup_norm(&s);
        assert_eq!(covering_number(&s, norm, 10_000, 1).unwrap(), 1);
        let zero = DMatrix::zeros(8, 4);
        assert_eq!(covering_number(&zero, 1e-3, 10_000, 1).unwrap(), 1);
        let rep = covering_numbers(&s, &[0.2 * norm, 0.4 * norm, 0.1 * norm], 10_000, 1).unwrap();
        assert!(rep.counts[2] >= rep.counts[0] && rep.counts[0] >= rep.counts[1]);
    }

    #[test]
    fn chain_on_a_center_is_constant() {
        let y = vec![C64::new(0.3, 0.0), C64::new(-0.2, 0.1)];
        let nets = ChainNets { levels: vec![vec![y.clone()]; 5] };
        let ch = chaining_decompose(&y, &nets, 6.0, 0.1).unwrap();
        assert!(ch.links[1..].iter().all(|l| l.iter().all(|c| *c == C64::new(0.0, 0.0))));
        assert_eq!(ch.error, 0.0);
        assert!(matches!(chaining_decompose(&y, &nets, 6.0, 0.01), Err(Error::NetTooCoarse { .. })));
    }

    #[test]
    fn geometric_series() {
        let b = geom_series_bruteforce(2.0, 60).unwrap();
        assert!((b - 4.0).abs() < 1e-15 * 60.0 + 2f64.powi(-58));
        assert_eq!(geom_series_bound(2.0).unwrap(), 1.0);
        assert_eq!(geom_series_bound(1.0).unwrap(), 1.0);
        let q = geom_series_bruteforce(0.25, 60).unwrap();
        // direct double loop
        let mut direct = 0.0;
        for k in 0..=60 {
            for l in 0..=60 {
                direct += 0.5f64.powi(k + l).min(0.25);
            }
        }
        assert!((q - direct).abs() < 1e-12);
    }
}
