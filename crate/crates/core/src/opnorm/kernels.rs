use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{matrix_norm, NormEstimate, NormMethod};
use crate::error::{Error, Result};
use crate::grid::{dist, lp_norm, GridFunction, Space, C64};
use crate::multipliers::{outgoing_kernel, ComplexEnergy};

/// Kernel of R_0(z) at distance r > 0, k = lambda + i eps.
pub fn resolvent_kernel(d: usize, z: &ComplexEnergy, r: f64) -> Result<C64> {
    if !(r > 0.0) {
        return Err(Error::Precondition(format!("kernel evaluated at r = {r}")));
    }
    let k = z.k();
    let i = C64::new(0.0, 1.0);
    match d {
        1 => Ok(i * (i * k * r).exp() / (2.0 * k)),
        3 => Ok((i * k * r).exp() / (4.0 * PI * r)),
        2 => Err(Error::UnsupportedDimension(2)),
        _ => Err(Error::InvalidDimension(d)),
    }
}

fn kernel_entry(d: usize, z: &ComplexEnergy, r: f64, cell: f64) -> Result<C64> {
    if z.eps == 0.0 {
        return Ok(outgoing_kernel(d, z.lambda, r, cell));
    }
    if r > 0.0 {
        return resolvent_kernel(d, z, r);
    }
    let k = z.k();
    let i = C64::new(0.0, 1.0);
    match d {
        1 => Ok(i / (2.0 * k)),
        3 => {
            let a = (3.0 * cell / (4.0 * PI)).cbrt();
            Ok((C64::new(1.5 / a, 0.0) + i * k) / (4.0 * PI))
        }
        2 => Err(Error::UnsupportedDimension(2)),
        _ => Err(Error::InvalidDimension(d)),
    }
}

/// |V_a|^(1/2) R_0 |V_b|^(1/2) restricted to the supports, with dx^d quadrature.
pub fn bsij_matrix(va: &GridFunction, vb: &GridFunction, z: &ComplexEnergy) -> Result<DMatrix<C64>> {
    if va.space() != Space::Position || vb.space() != Space::Position {
        return Err(Error::WrongSpace { expected: Space::Position });
    }
    if va.grid() != vb.grid() {
        return Err(Error::GridMismatch);
    }
    let g = *va.grid();
    let cell = g.cell_volume();
    let (sa, sb) = (va.support(), vb.support());
    let mut m = DMatrix::zeros(sa.len(), sb.len());
    for (r, &i) in sa.iter().enumerate() {
        let (x, wa) = (g.point(i), va.values()[i].norm().sqrt());
        for (c, &j) in sb.iter().enumerate() {
            let wb = vb.values()[j].norm().sqrt();
            let k = kernel_entry(g.d, z, dist(&x, &g.point(j)), cell)?;
            m[(r, c)] = k * (wa * wb * cell);
        }
    }
    Ok(m)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BsijResult {
    pub norm: NormEstimate,
    /// L^(1 - (d+1)/(2q)) |V_a|_q^(1/2) |V_b|_q^(1/2)
    pub bound: f64,
    pub ratio: f64,
}

/// Measured |V_a^(1/2) R_0 |V_b|^(1/2)| against L^(1-(d+1)/(2q)) |V_a|_q^(1/2) |V_b|_q^(1/2).
pub fn bsij_norm(va: &GridFunction, vb: &GridFunction, q: f64, l_ab: f64, z: &ComplexEnergy) -> Result<BsijResult> {
    let d = va.grid().d;
    let hi = (d as f64 + 1.0) / 2.0;
    if !(q >= 1.0 && q <= hi) {
        return Err(Error::QOutOfRange { q, lo: 1.0, hi });
    }
    if !(l_ab > 0.0) {
        return Err(Error::Precondition(format!("separation L = {l_ab} must be positive")));
    }
    let m = bsij_matrix(va, vb, z)?;
    let value = matrix_norm(&m);
    let bound = l_ab.powf(1.0 - (d as f64 + 1.0) / (2.0 * q)) * (lp_norm(va, q) * lp_norm(vb, q)).sqrt();
    let ratio = if bound > 0.0 { value / bound } else { 0.0 };
    Ok(BsijResult {
        norm: NormEstimate { value, iterations: 0, residual: 0.0, method: NormMethod::DenseSvd, converged: true },
        bound,
        ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use approx::assert_relative_eq;

    #[test]
    fn closed_forms() {
        let z = ComplexEnergy::new(1.0, 0.0).unwrap();
        assert_relative_eq!(resolvent_kernel(3, &z, 2.0).unwrap().norm(), 1.0 / (8.0 * PI), epsilon = 1e-15);
        let a = resolvent_kernel(1, &z, 0.5).unwrap().norm();
        let b = resolvent_kernel(1, &z, 7.0).unwrap().norm();
        assert_relative_eq!(a, b, epsilon = 1e-15);
        assert!(matches!(resolvent_kernel(2, &z, 1.0), Err(Error::UnsupportedDimension(2))));
        assert!(resolvent_kernel(3, &z, 0.0).is_err());
    }

    #[test]
    fn zero_potential_and_range() {
        let g = make_grid(3, 8.0, 16).unwrap();
        let z = ComplexEnergy::new(1.0, 0.0).unwrap();
        let va = GridFunction::from_real_fn(g, Space::Position, |x| if x.iter().all(|c| (0.0..1.0).contains(c)) { 1.0 } else { 0.0 });
        let zero = GridFunction::zeros(g, Space::Position);
        assert_eq!(bsij_norm(&va, &zero, 2.0, 1.0, &z).unwrap().norm.value, 0.0);
        assert!(matches!(bsij_norm(&va, &va, 2.5, 1.0, &z), Err(Error::QOutOfRange { .. })));
        let r = bsij_norm(&va, &va, 2.0, 1.0, &z).unwrap();
        assert!(r.norm.value.is_finite() && r.norm.value > 0.0);
    }
}
