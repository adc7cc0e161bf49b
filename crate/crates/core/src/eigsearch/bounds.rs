//! Left sides of the eigenvalue bounds, with <x> = 2 + |x|.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{lp_norm, norm, GridFunction, Space, C64};

pub fn bracket(x: f64) -> f64 {
    2.0 + x.abs()
}

/// Local singularity range: q >= 1 (d = 1), q > 1 (d = 2), q >= d/2 (d = 3).
fn check_q(q: f64, d: usize, endpoint: bool) -> Result<()> {
    let hi = d as f64 + 1.0;
    let lo = match d {
        1 => 1.0,
        2 => 1.0,
        3 => 1.5,
        _ => return Err(Error::InvalidDimension(d)),
    };
    let above = if d == 2 { q > lo } else { q >= lo };
    if !above || q > hi || q.is_nan() {
        return Err(Error::QOutOfRange { q, lo, hi });
    }
    if !endpoint && q == hi {
        return Err(Error::EndpointQ);
    }
    Ok(())
}

fn check_energy(lambda: f64, eps: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Precondition(format!("lambda = {lambda} must be positive")));
    }
    if eps.abs() > lambda / 10.0 {
        return Err(Error::Precondition(format!("|eps| = {} exceeds lambda/10", eps.abs())));
    }
    Ok(())
}

fn check_h(h: f64) -> Result<()> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Precondition(format!("h = {h} must be positive")));
    }
    Ok(())
}

/// lambda^(2-d/q) / (<lambda h>^(d/2) (log <lambda R>)^(7/2))
pub fn thm1_bound(lambda: f64, eps: f64, h: f64, r: f64, q: f64, d: usize) -> Result<f64> {
    check_energy(lambda, eps)?;
    check_q(q, d, true)?;
    check_h(h)?;
    if !(h < r) {
        return Err(Error::Precondition(format!("need h < R, got h = {h}, R = {r}")));
    }
    let df = d as f64;
    Ok(lambda.powf(2.0 - df / q) / (bracket(lambda * h).powf(df / 2.0) * bracket(lambda * r).ln().powf(3.5)))
}

/// lambda^(2-d/q) / (<lambda h>^(d/2) (log <lambda h>)^2)
pub fn thm2_bound(lambda: f64, eps: f64, h: f64, q: f64, d: usize) -> Result<f64> {
    check_energy(lambda, eps)?;
    check_q(q, d, true)?;
    check_h(h)?;
    let df = d as f64;
    let b = bracket(lambda * h);
    Ok(lambda.powf(2.0 - df / q) / (b.powf(df / 2.0) * b.ln().powi(2)))
}

/// Same display as thm2_bound; q = d + 1 is excluded.
pub fn thm3_bound(lambda: f64, eps: f64, h: f64, q: f64, d: usize) -> Result<f64> {
    check_q(q, d, false)?;
    thm2_bound(lambda, eps, h, q, d)
}

/// |<lambda x>^delta V|_q on the grid.
pub fn weighted_norm(v: &GridFunction, lambda: f64, delta: f64, q: f64) -> Result<f64> {
    if !(delta >= 0.0) {
        return Err(Error::Precondition(format!("delta = {delta} must be nonnegative")));
    }
    if v.space() != Space::Position {
        return Err(Error::WrongSpace { expected: Space::Position });
    }
    let g = *v.grid();
    let w = GridFunction::from_values(
        g,
        Space::Position,
        v.values()
            .iter()
            .enumerate()
            .map(|(i, c)| c * bracket(lambda * norm(&g.point(i))).powf(delta))
            .collect(),
    )?;
    Ok(lp_norm(&w, q))
}

/// sup over eigenvalues of |z|^(q - d/2) / |V|_q^q; 0 for an empty list.
pub fn corollary_ratio(eigs: &[C64], v: &GridFunction, q: f64) -> f64 {
    let d = v.grid().d as f64;
    let nq = lp_norm(v, q).powf(q);
    eigs.iter().map(|z| z.norm().powf(q - d / 2.0) / nq).fold(0.0, f64::max)
}

/// [eps^((d+1)/(2q) - 1) log(1/eps)^(-7/2)]^(2/d) for (d+1)/2 < q <= d+1.
pub fn destruction_scale(eps: f64, q: f64, d: usize) -> Result<f64> {
    if !(eps > 0.0 && eps < 0.5) {
        return Err(Error::Precondition(format!("eps = {eps} outside (0, 1/2)")));
    }
    let df = d as f64;
    let (lo, hi) = ((df + 1.0) / 2.0, df + 1.0);
    if !(q > lo && q <= hi) {
        return Err(Error::QOutOfRange { q, lo, hi });
    }
    let inner = eps.powf((df + 1.0) / (2.0 * q) - 1.0) * (1.0 / eps).ln().powf(-3.5);
    Ok(inner.powf(2.0 / df))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Theorem {
    One,
    Two,
    Three,
    Corollary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub theorem: Theorem,
    pub lambda: f64,
    pub eps: f64,
    pub h: f64,
    pub r: Option<f64>,
    pub q: f64,
    pub d: usize,
    pub delta: Option<f64>,
    pub lhs: f64,
    /// the norm multiplying M on the right side
    pub rhs_per_m: f64,
    /// the inequality fails exactly for M below this value
    pub violated_below_m: f64,
}

impl BoundReport {
    pub fn new(theorem: Theorem, lambda: f64, eps: f64, h: f64, r: Option<f64>, q: f64, d: usize, delta: Option<f64>, rhs_per_m: f64) -> Result<Self> {
        let lhs = match theorem {
            Theorem::One => thm1_bound(lambda, eps, h, r.ok_or_else(|| Error::Precondition("Theorem 1 needs R".into()))?, q, d)?,
            Theorem::Two => thm2_bound(lambda, eps, h, q, d)?,
            Theorem::Three | Theorem::Corollary => thm3_bound(lambda, eps, h, q, d)?,
        };
        let violated_below_m = if rhs_per_m > 0.0 { lhs / rhs_per_m } else { f64::INFINITY };
        Ok(BoundReport { theorem, lambda, eps, h, r, q, d, delta, lhs, rhs_per_m, violated_below_m })
    }

    pub fn violated_at(&self, m: f64) -> bool {
        self.lhs > m * self.rhs_per_m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use approx::assert_relative_eq;

    #[test]
    fn substitutions() {
        let v = thm1_bound(1.0, 0.0, 1e-300, 2.0, 2.0, 2).unwrap();
        assert_relative_eq!(v, 1.0 / (2.0 * 4f64.ln().powf(3.5)), max_relative = 1e-15);
        for d in 1..=3 {
            let t = thm3_bound(1.0, 0.0, 1e-300, d as f64, d).unwrap();
            assert_relative_eq!(t, 1.0 / (2f64.powf(d as f64 / 2.0) * 2f64.ln().powi(2)), max_relative = 1e-15);
            assert!(matches!(thm3_bound(1.0, 0.0, 0.1, d as f64 + 1.0, d), Err(Error::EndpointQ)));
            assert!(thm2_bound(1.0, 0.0, 0.1, d as f64 + 1.0, d).is_ok());
        }
        let e = destruction_scale((-1f64).exp(), 3.0, 2).unwrap();
        assert_relative_eq!(e, 0.5f64.exp(), max_relative = 1e-14);
        assert!(matches!(destruction_scale(0.1, 1.5, 2), Err(Error::QOutOfRange { .. })));
        assert!(thm1_bound(1.0, 0.2, 0.1, 2.0, 2.0, 2).is_err());
        assert!(thm1_bound(1.0, 0.0, 3.0, 2.0, 2.0, 2).is_err());
    }

    #[test]
    fn homogeneity_in_lambda() {
        let (d, q) = (2usize, 2.5);
        let a = thm1_bound(1.0, 0.0, 0.5, 4.0, q, d).unwrap();
        let b = thm1_bound(2.0, 0.0, 0.25, 2.0, q, d).unwrap();
        assert_relative_eq!(b / a, 2f64.powf(2.0 - d as f64 / q), max_relative = 1e-14);
    }

    #[test]
    fn weights_and_corollary() {
        let g = make_grid(2, 8.0, 32).unwrap();
        let v = GridFunction::from_real_fn(g, Space::Position, |x| if norm(x) < 1.0 { 1.0 } else { 0.0 });
        let plain = lp_norm(&v, 2.0);
        let w = weighted_norm(&v, 1.0, 0.5, 2.0).unwrap();
        assert!(w <= 3f64.powf(0.5) * plain && w >= plain);
        assert_relative_eq!(weighted_norm(&v, 1.0, 0.0, 2.0).unwrap(), plain, max_relative = 1e-14);
        assert_eq!(corollary_ratio(&[], &v, 2.0), 0.0);
        let one = corollary_ratio(&[C64::new(0.0, 1.0)], &v, 2.0);
        assert_relative_eq!(one, 1.0 / plain.powi(2), max_relative = 1e-14);
        let zs = [C64::new(1.0, 0.1), C64::new(2.0, -0.1), C64::new(0.5, 0.0)];
        let rev: Vec<C64> = zs.iter().rev().copied().collect();
        assert_eq!(corollary_ratio(&zs, &v, 2.0), corollary_ratio(&rev, &v, 2.0));
    }
}
