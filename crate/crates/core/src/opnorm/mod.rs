//! Operator chains C V C', norm estimation (power, Lanczos, dense SVD) and
//! the Gelfand spectral radius of R_0 V.

mod extension;
mod kernels;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, StandardNormal};
use serde::{Deserialize, Serialize};

pub use extension::{extension_matrix, extension_matrix_from_plan, extension_norm, foliation_check, ExtensionOperator};
pub use kernels::{bsij_matrix, bsij_norm, resolvent_kernel, BsijResult};

use crate::error::{Error, Result};
use crate::grid::{BoxGrid, GridFunction, Space, C64};
use crate::multipliers::{resolvent_symbol, ComplexEnergy, MultiplierSpec};

/// Largest column count materialized for dense SVD.
pub const DENSE_LIMIT: usize = 4096;

pub trait LinearOperator: Sync {
    fn dim_in(&self) -> usize;
    fn dim_out(&self) -> usize;
    fn apply(&self, x: &[C64]) -> Vec<C64>;
    fn apply_adjoint(&self, y: &[C64]) -> Vec<C64>;
}

#[derive(Clone, Debug)]
pub enum Stage {
    Multiplier(Arc<MultiplierSpec>),
    Pointwise(Arc<GridFunction>),
}

/// Stages applied in order on position-space functions over one grid.
#[derive(Clone, Debug)]
pub struct LinearOperatorChain {
    grid: BoxGrid,
    stages: Vec<Stage>,
}

impl LinearOperatorChain {
    pub fn new(grid: BoxGrid) -> Self {
        LinearOperatorChain { grid, stages: Vec::new() }
    }

    pub fn grid(&self) -> &BoxGrid {
        &self.grid
    }

    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    pub fn push(mut self, stage: Stage) -> Result<Self> {
        match &stage {
            Stage::Multiplier(m) => {
                if *m.grid() != self.grid {
                    return Err(Error::IncompatibleStage("multiplier on a different grid".into()));
                }
            }
            Stage::Pointwise(v) => {
                if v.space() != Space::Position {
                    return Err(Error::IncompatibleStage("pointwise factor must live in position space".into()));
                }
                if *v.grid() != self.grid {
                    return Err(Error::IncompatibleStage("pointwise factor on a different grid".into()));
                }
            }
        }
        self.stages.push(stage);
        Ok(self)
    }

    pub fn multiplier(self, m: &MultiplierSpec) -> Result<Self> {
        self.push(Stage::Multiplier(Arc::new(m.clone())))
    }

    pub fn pointwise(self, v: &GridFunction) -> Result<Self> {
        self.push(Stage::Pointwise(Arc::new(v.clone())))
    }

    /// The chain composed with itself n times.
    pub fn power(&self, n: usize) -> Self {
        let mut stages = Vec::with_capacity(self.stages.len() * n);
        for _ in 0..n {
            stages.extend(self.stages.iter().cloned());
        }
        LinearOperatorChain { grid: self.grid, stages }
    }

    pub fn apply_values(&self, v: &mut [C64]) {
        for s in &self.stages {
            match s {
                Stage::Multiplier(m) => m.apply_values(v, false),
                Stage::Pointwise(p) => v.iter_mut().zip(p.values()).for_each(|(x, y)| *x *= y),
            }
        }
    }

    pub fn apply_adjoint_values(&self, v: &mut [C64]) {
        for s in self.stages.iter().rev() {
            match s {
                Stage::Multiplier(m) => m.apply_values(v, true),
                Stage::Pointwise(p) => v.iter_mut().zip(p.values()).for_each(|(x, y)| *x *= y.conj()),
            }
        }
    }

    pub fn apply(&self, f: &GridFunction) -> Result<GridFunction> {
        if f.space() != Space::Position {
            return Err(Error::IncompatibleStage("chains act on position-space functions".into()));
        }
        if *f.grid() != self.grid {
            return Err(Error::IncompatibleStage("input on a different grid".into()));
        }
        let mut v = f.values().to_vec();
        self.apply_values(&mut v);
        GridFunction::from_values(self.grid, Space::Position, v)
    }
}

impl LinearOperator for LinearOperatorChain {
    fn dim_in(&self) -> usize {
        self.grid.len()
    }

    fn dim_out(&self) -> usize {
        self.grid.len()
    }

    fn apply(&self, x: &[C64]) -> Vec<C64> {
        let mut v = x.to_vec();
        self.apply_values(&mut v);
        v
    }

    fn apply_adjoint(&self, y: &[C64]) -> Vec<C64> {
        let mut v = y.to_vec();
        self.apply_adjoint_values(&mut v);
        v
    }
}

/// A dense matrix as an operator.
#[derive(Clone, Debug)]
pub struct DenseOperator(pub DMatrix<C64>);

impl LinearOperator for DenseOperator {
    fn dim_in(&self) -> usize {
        self.0.ncols()
    }

    fn dim_out(&self) -> usize {
        self.0.nrows()
    }

    fn apply(&self, x: &[C64]) -> Vec<C64> {
        (&self.0 * DVector::from_column_slice(x)).data.into()
    }

    fn apply_adjoint(&self, y: &[C64]) -> Vec<C64> {
        (self.0.adjoint() * DVector::from_column_slice(y)).data.into()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormMethod {
    Power,
    Lanczos,
    DenseSvd,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormEstimate {
    pub value: f64,
    pub iterations: usize,
    pub residual: f64,
    pub method: NormMethod,
    pub converged: bool,
}

impl NormEstimate {
    fn exact(value: f64, method: NormMethod) -> Self {
        NormEstimate { value, iterations: 0, residual: 0.0, method, converged: true }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub starts: usize,
    pub seed: u64,
}

impl Default for NormOptions {
    fn default() -> Self {
        NormOptions { tol: 1e-10, max_iter: 5000, starts: 3, seed: 0x5EED }
    }
}

fn random_vector(n: usize, seed: u64) -> Vec<C64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| C64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)))
        .collect()
}

fn l2(v: &[C64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

fn inner(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn scale(v: &mut [C64], s: f64) {
    v.iter_mut().for_each(|x| *x *= s);
}

/// f <- A*A f / |A*A f| from seeded random starts; the value is sqrt of the Rayleigh quotient.
pub fn power_norm(op: &dyn LinearOperator, opts: &NormOptions) -> Result<NormEstimate> {
    if !(opts.tol > 0.0) {
        return Err(Error::Precondition("tolerance must be positive".into()));
    }
    let mut best = NormEstimate { value: 0.0, iterations: 0, residual: f64::INFINITY, method: NormMethod::Power, converged: false };
    for s in 0..opts.starts.max(1) {
        let mut x = random_vector(op.dim_in(), opts.seed.wrapping_add(s as u64));
        let n0 = l2(&x);
        scale(&mut x, 1.0 / n0);
        let mut value = 0.0;
        let mut residual = f64::INFINITY;
        let mut it = 0;
        let mut converged = false;
        while it < opts.max_iter {
            it += 1;
            let y = op.apply(&x);
            let sigma = l2(&y);
            if sigma == 0.0 {
                value = 0.0;
                residual = 0.0;
                converged = true;
                break;
            }
            residual = (sigma - value).abs() / sigma;
            value = sigma;
            if residual < opts.tol {
                converged = true;
                break;
            }
            x = op.apply_adjoint(&y);
            let nx = l2(&x);
            if nx == 0.0 {
                converged = true;
                break;
            }
            scale(&mut x, 1.0 / nx);
        }
        if !value.is_finite() {
            return Err(Error::Overflow(format!("operator norm estimate is {value}")));
        }
        if value > best.value || s == 0 {
            best = NormEstimate { value, iterations: it, residual, method: NormMethod::Power, converged };
        }
    }
    Ok(best)
}

/// Lanczos on A*A with full reorthogonalization, restarted from the top Ritz vector.
pub fn lanczos_norm(op: &dyn LinearOperator, opts: &NormOptions) -> Result<NormEstimate> {
    const KRYLOV: usize = 40;
    let n = op.dim_in();
    let mut best = NormEstimate { value: 0.0, iterations: 0, residual: f64::INFINITY, method: NormMethod::Lanczos, converged: false };
    for s in 0..opts.starts.max(1) {
        let mut q = random_vector(n, opts.seed.wrapping_add(s as u64));
        let mut total = 0;
        let mut theta = 0.0;
        let mut residual = f64::INFINITY;
        let mut converged = false;
        'restart: while total < opts.max_iter {
            let nq = l2(&q);
            scale(&mut q, 1.0 / nq);
            let mut basis: Vec<Vec<C64>> = vec![q.clone()];
            let mut alpha: Vec<f64> = Vec::new();
            let mut beta: Vec<f64> = Vec::new();
            let kmax = KRYLOV.min(n);
            for j in 0..kmax {
                total += 1;
                let mut w = op.apply_adjoint(&op.apply(&basis[j]));
                let a = inner(&basis[j], &w).re;
                alpha.push(a);
                for _ in 0..2 {
                    for b in &basis {
                        let c = inner(b, &w);
                        w.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
                    }
                }
                let bj = l2(&w);
                let k = alpha.len();
                let t = DMatrix::from_fn(k, k, |r, c| {
                    if r == c {
                        alpha[r]
                    } else if r + 1 == c {
                        beta[r]
                    } else if c + 1 == r {
                        beta[c]
                    } else {
                        0.0
                    }
                });
                let eig = SymmetricEigen::new(t);
                let (imax, &top) = eig
                    .eigenvalues
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.total_cmp(b.1))
                    .expect("nonempty");
                theta = top.max(0.0);
                let sv = eig.eigenvectors.column(imax);
                residual = if theta > 0.0 { bj * sv[k - 1].abs() / theta } else { 0.0 };
                if !theta.is_finite() {
                    return Err(Error::Overflow(format!("Ritz value {theta}")));
                }
                let done = residual < opts.tol || bj <= 1e-14 * theta.max(f64::MIN_POSITIVE) || k == n;
                if done || j + 1 == kmax || total >= opts.max_iter {
                    converged = done;
                    let mut y = vec![C64::new(0.0, 0.0); n];
                    for (c, b) in sv.iter().zip(&basis) {
                        y.iter_mut().zip(b).for_each(|(x, v)| *x += v * *c);
                    }
                    q = y;
                    if done || theta == 0.0 {
                        break 'restart;
                    }
                    continue 'restart;
                }
                beta.push(bj);
                scale(&mut w, 1.0 / bj);
                basis.push(w);
            }
        }
        let value = theta.sqrt();
        if value > best.value || s == 0 {
            best = NormEstimate { value, iterations: total, residual, method: NormMethod::Lanczos, converged };
        }
    }
    Ok(best)
}

/// Columns A e_j.
pub fn dense_matrix(op: &dyn LinearOperator) -> Result<DMatrix<C64>> {
    let (m, n) = (op.dim_out(), op.dim_in());
    if n > DENSE_LIMIT {
        return Err(Error::SizeOverflow(format!("{n} columns exceed the dense limit {DENSE_LIMIT}")));
    }
    let mut a = DMatrix::zeros(m, n);
    let mut e = vec![C64::new(0.0, 0.0); n];
    for j in 0..n {
        e[j] = C64::new(1.0, 0.0);
        let col = op.apply(&e);
        a.column_mut(j).copy_from_slice(&col);
        e[j] = C64::new(0.0, 0.0);
    }
    Ok(a)
}

pub fn matrix_norm(a: &DMatrix<C64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.singular_values().max()
}

pub fn dense_norm(op: &dyn LinearOperator) -> Result<NormEstimate> {
    Ok(NormEstimate::exact(matrix_norm(&dense_matrix(op)?), NormMethod::DenseSvd))
}

/// Dense SVD for small operators, Lanczos otherwise.
pub fn operator_norm(op: &dyn LinearOperator, opts: &NormOptions) -> Result<NormEstimate> {
    if op.dim_in() <= 256 {
        dense_norm(op)
    } else {
        lanczos_norm(op, opts)
    }
}

fn lq_norm(y: &DVector<C64>, q: f64) -> f64 {
    if q.is_infinite() {
        return y.iter().fold(0.0, |m, c| m.max(c.norm()));
    }
    y.iter().map(|c| c.norm().powf(q)).sum::<f64>().powf(1.0 / q)
}

/// max |A x|_q over |x|_2 = 1 (2 <= q <= inf) by Boyd's nonlinear power iteration,
/// the best value over the given starts. q = inf is exact: the largest row norm.
pub fn boyd_norm_2q(a: &DMatrix<C64>, q: f64, starts: &[DVector<C64>], tol: f64, max_iter: usize) -> Result<f64> {
    if !(q >= 2.0) {
        return Err(Error::Precondition(format!("target exponent q = {q} must be at least 2")));
    }
    if q.is_infinite() {
        return Ok(a.row_iter().map(|r| r.norm()).fold(0.0, f64::max));
    }
    let mut best = 0.0f64;
    for start in starts {
        if start.len() != a.ncols() {
            return Err(Error::Precondition("start vector of the wrong length".into()));
        }
        let n0 = start.norm();
        if n0 == 0.0 {
            continue;
        }
        let mut x = start / C64::new(n0, 0.0);
        let mut val = 0.0;
        for _ in 0..max_iter {
            let y = a * &x;
            let new = lq_norm(&y, q);
            if new == 0.0 {
                break;
            }
            let g = y.map(|c| {
                let m = c.norm();
                if m == 0.0 {
                    C64::new(0.0, 0.0)
                } else {
                    c / m * (m / new).powf(q - 1.0)
                }
            });
            let w = a.ad_mul(&g);
            let nw = w.norm();
            if nw == 0.0 {
                val = new;
                break;
            }
            x = w / C64::new(nw, 0.0);
            let done = (new - val).abs() <= tol * new;
            val = new;
            if done {
                break;
            }
        }
        best = best.max(val);
    }
    Ok(best)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GelfandSequence {
    pub ns: Vec<usize>,
    pub values: Vec<f64>,
    /// estimate at the largest n
    pub value: f64,
    /// true when the sequence is non-increasing up to `tol`
    pub monotone: bool,
}

/// |(R_0 V)^n|^(1/n) for n = 2, 4, 8, ..., n_max.
pub fn gelfand_spr(v: &GridFunction, z: &ComplexEnergy, n_max: usize, tol: f64) -> Result<GelfandSequence> {
    if n_max < 4 {
        return Err(Error::Precondition(format!("n_max = {n_max} must be at least 4")));
    }
    let r0 = resolvent_symbol(z, v.grid(), None)?;
    let base = LinearOperatorChain::new(*v.grid()).pointwise(v)?.multiplier(&r0)?;
    let opts = NormOptions { tol: tol.min(1e-8), starts: 1, ..NormOptions::default() };
    let mut ns = Vec::new();
    let mut values = Vec::new();
    let mut n = 2;
    while n <= n_max {
        let est = lanczos_norm(&base.power(n), &opts)?;
        if !est.value.is_finite() || est.value > 1e300 {
            return Err(Error::Overflow(format!("|(R_0 V)^{n}| = {}", est.value)));
        }
        ns.push(n);
        values.push(est.value.powf(1.0 / n as f64));
        n *= 2;
    }
    let monotone = values.windows(2).all(|w| w[1] <= w[0] * (1.0 + tol.max(1e-9)));
    let value = *values.last().expect("n_max >= 4");
    Ok(GelfandSequence { ns, values, value, monotone })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BornVerdict {
    Converged,
    Diverged,
    Inconclusive,
}

pub const BORN_MARGIN: f64 = 0.05;

pub fn born_converges(v: &GridFunction, z: &ComplexEnergy, n_max: usize) -> Result<BornVerdict> {
    if v.max_abs() == 0.0 {
        return Ok(BornVerdict::Converged);
    }
    let seq = match gelfand_spr(v, z, n_max, 1e-6) {
        Ok(s) => s,
        Err(Error::Overflow(_)) => return Ok(BornVerdict::Diverged),
        Err(e) => return Err(e),
    };
    let k = seq.values.len();
    let tail = &seq.values[k.saturating_sub(2)..];
    Ok(if tail.iter().all(|&s| s <= 1.0 - BORN_MARGIN) {
        BornVerdict::Converged
    } else if tail.iter().all(|&s| s >= 1.0 + BORN_MARGIN) {
        BornVerdict::Diverged
    } else {
        BornVerdict::Inconclusive
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use approx::assert_relative_eq;

    fn bump(g: BoxGrid) -> GridFunction {
        GridFunction::from_fn(g, Space::Position, |x| C64::new((-x[0] * x[0]).exp(), x[0].sin()))
    }

    #[test]
    fn identity_and_zero_chains() {
        let g = make_grid(2, 8.0, 16).unwrap();
        let f = bump(g);
        let id = LinearOperatorChain::new(g).multiplier(&MultiplierSpec::identity(g)).unwrap();
        let out = id.apply(&f).unwrap();
        for (a, b) in out.values().iter().zip(f.values()) {
            assert!((a - b).norm() < 1e-12);
        }
        let zero = LinearOperatorChain::new(g).pointwise(&GridFunction::zeros(g, Space::Position)).unwrap();
        assert_eq!(zero.apply(&f).unwrap().max_abs(), 0.0);
        assert_eq!(power_norm(&zero, &NormOptions::default()).unwrap().value, 0.0);
        assert_eq!(lanczos_norm(&zero, &NormOptions::default()).unwrap().value, 0.0);
    }

    #[test]
    fn multiplier_stage_matches_frequency_multiply() {
        let g = make_grid(2, 8.0, 16).unwrap();
        let f = bump(g);
        let m = MultiplierSpec::from_radial(g, |s| C64::new(1.0 / (1.0 + s * s), s));
        let chain = LinearOperatorChain::new(g).multiplier(&m).unwrap();
        let a = chain.apply(&f).unwrap();
        let hat = crate::grid::fft_forward(&f).unwrap().mul(&m.symbol).unwrap();
        let b = crate::grid::fft_inverse(&hat).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn incompatible_stages() {
        let g = make_grid(2, 8.0, 16).unwrap();
        let h = make_grid(2, 8.0, 32).unwrap();
        assert!(matches!(
            LinearOperatorChain::new(g).multiplier(&MultiplierSpec::identity(h)),
            Err(Error::IncompatibleStage(_))
        ));
        let freq = GridFunction::zeros(g, Space::Frequency);
        assert!(LinearOperatorChain::new(g).pointwise(&freq).is_err());
    }

    #[test]
    fn diagonal_multiplier_norm() {
        let g = make_grid(1, 16.0, 64).unwrap();
        let m = MultiplierSpec::from_radial(g, |s| C64::new(0.0, 3.0 / (1.0 + (s - 2.0).powi(2))));
        let max = m.max_abs();
        let chain = LinearOperatorChain::new(g).multiplier(&m).unwrap();
        let p = power_norm(&chain, &NormOptions::default()).unwrap();
        let l = lanczos_norm(&chain, &NormOptions::default()).unwrap();
        assert_relative_eq!(p.value, max, max_relative = 1e-8);
        assert_relative_eq!(l.value, max, max_relative = 1e-8);
    }

    #[test]
    fn estimators_match_dense_svd() {
        let g = make_grid(2, 4.0, 16).unwrap();
        let r0 = resolvent_symbol(&ComplexEnergy::new(1.0, 0.1).unwrap(), &g, None).unwrap();
        let v = bump(g);
        let chain = LinearOperatorChain::new(g).pointwise(&v).unwrap().multiplier(&r0).unwrap().pointwise(&v).unwrap();
        let dense = dense_norm(&chain).unwrap().value;
        let l = lanczos_norm(&chain, &NormOptions::default()).unwrap();
        assert!(l.converged);
        assert_relative_eq!(l.value, dense, max_relative = 1e-6);
        let p = power_norm(&chain, &NormOptions { max_iter: 20000, ..NormOptions::default() }).unwrap();
        assert!(p.value <= dense * (1.0 + 1e-9));
    }

    #[test]
    fn gelfand_homogeneity_and_zero() {
        let g = make_grid(1, 16.0, 64).unwrap();
        let z = ComplexEnergy::new(1.0, 0.1).unwrap();
        let v = GridFunction::from_real_fn(g, Space::Position, |x| if x[0].abs() < 1.0 { 0.3 } else { 0.0 });
        let a = gelfand_spr(&v, &z, 8, 1e-10).unwrap();
        let b = gelfand_spr(&v.scaled(C64::new(2.0, 0.0)), &z, 8, 1e-10).unwrap();
        assert_eq!(a.ns, vec![2, 4, 8]);
        assert_relative_eq!(b.value, 2.0 * a.value, max_relative = 1e-6);
        let zero = gelfand_spr(&GridFunction::zeros(g, Space::Position), &z, 4, 1e-10).unwrap();
        assert_eq!(zero.value, 0.0);
        assert_eq!(born_converges(&GridFunction::zeros(g, Space::Position), &z, 8).unwrap(), BornVerdict::Converged);
        assert!(gelfand_spr(&v, &z, 2, 1e-10).is_err());
    }

    #[test]
    fn boyd_mixed_norms() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = DMatrix::from_fn(30, 8, |_, _| C64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)));
        let starts: Vec<DVector<C64>> = (0..4)
            .map(|_| DVector::from_fn(8, |_, _| C64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng))))
            .collect();
        let two = boyd_norm_2q(&a, 2.0, &starts, 1e-13, 5000).unwrap();
        assert!((two - matrix_norm(&a)).abs() < 1e-8 * two);
        let q6 = boyd_norm_2q(&a, 6.0, &starts, 1e-12, 2000).unwrap();
        for x in &starts {
            let y = &a * x / C64::new(x.norm(), 0.0);
            assert!(q6 >= lq_norm(&y, 6.0) * (1.0 - 1e-12));
        }
        assert!(q6 <= two * (1.0 + 1e-12));
        let inf = boyd_norm_2q(&a, f64::INFINITY, &starts, 1e-12, 10).unwrap();
        let rows = (0..30).map(|i| a.row(i).norm()).fold(0.0, f64::max);
        assert_eq!(inf, rows);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![C64::new(1.0, 0.0), C64::new(0.0, -3.0), C64::new(2.0, 0.0)]));
        let e2 = DVector::from_vec(vec![C64::new(0.1, 0.0), C64::new(1.0, 0.0), C64::new(0.2, 0.0)]);
        assert!((boyd_norm_2q(&d, 4.0, &[e2], 1e-14, 1000).unwrap() - 3.0).abs() < 1e-9);
        assert!(boyd_norm_2q(&d, 1.5, &[], 1e-9, 1).is_err());
    }
}
