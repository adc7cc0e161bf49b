use nalgebra::DMatrix;
use rayon::prelude::*;

use super::{lanczos_norm, LinearOperator, LinearOperatorChain, NormEstimate, NormOptions};
use crate::error::{Error, Result};
use crate::grid::{GridFunction, Space, C64};
use crate::multipliers::{extension_adjoint, extension_apply, MultiplierSpec, SphereNet};
use crate::nufft::{Nufft2, DEFAULT_SPREAD};

/// M[nu, mu] = sqrt(w_nu) sqrt(w_mu) V^(nu - mu), the matrix of E*_lambda V E_lambda'
/// in orthonormal node coordinates.
pub fn extension_matrix(v: &GridFunction, out: &SphereNet, inp: &SphereNet) -> Result<DMatrix<C64>> {
    if v.space() != Space::Position {
        return Err(Error::WrongSpace { expected: Space::Position });
    }
    let d = v.grid().d;
    if out.d != d || inp.d != d {
        return Err(Error::IncompatibleStage(format!("nets of dimension {}/{} for a {d}-d potential", out.d, inp.d)));
    }
    let plan = Nufft2::from_grid_function(v, DEFAULT_SPREAD);
    Ok(extension_matrix_from_plan(&plan, v.grid().cell_volume(), v.is_real(), out, inp))
}

/// Same matrix from a prepared transform of the potential's values; `real`
/// enables the Hermitian shortcut when the two nets coincide.
pub fn extension_matrix_from_plan(plan: &Nufft2, cell_volume: f64, real: bool, out: &SphereNet, inp: &SphereNet) -> DMatrix<C64> {
    let (m, n) = (out.len(), inp.len());
    let symmetric = real && out.nodes == inp.nodes && out.weights == inp.weights;
    let pairs: Vec<(usize, usize)> = if symmetric {
        (0..m).flat_map(|a| (a..n).map(move |b| (a, b))).collect()
    } else {
        (0..m).flat_map(|a| (0..n).map(move |b| (a, b))).collect()
    };
    let vals: Vec<C64> = pairs
        .par_iter()
        .map(|&(a, b)| {
            let (p, q) = (out.nodes[a], inp.nodes[b]);
            plan.eval(&[p[0] - q[0], p[1] - q[1], p[2] - q[2]])
        })
        .collect();
    let mut mat = DMatrix::zeros(m, n);
    for (&(a, b), val) in pairs.iter().zip(vals) {
        let s = (out.weights[a] * inp.weights[b]).sqrt() * cell_volume;
        mat[(a, b)] = val * s;
        if symmetric && a != b {
            mat[(b, a)] = (val * s).conj();
        }
    }
    mat
}

/// |E*_lambda V E_lambda'| between node spaces with quadrature-weighted inner products.
pub fn extension_norm(v: &GridFunction, out: &SphereNet, inp: &SphereNet, opts: &NormOptions) -> Result<NormEstimate> {
    let mat = extension_matrix(v, out, inp)?;
    lanczos_norm(&super::DenseOperator(mat), opts)
}

/// E*_lambda V E_lambda' applied through grid sums, in orthonormal node coordinates.
pub struct ExtensionOperator<'a> {
    pub v: &'a GridFunction,
    pub out: &'a SphereNet,
    pub inp: &'a SphereNet,
}

impl LinearOperator for ExtensionOperator<'_> {
    fn dim_in(&self) -> usize {
        self.inp.len()
    }

    fn dim_out(&self) -> usize {
        self.out.len()
    }

    fn apply(&self, x: &[C64]) -> Vec<C64> {
        let g: Vec<C64> = x.iter().zip(&self.inp.weights).map(|(a, w)| a / w.sqrt()).collect();
        let ext = extension_apply(self.inp, &g, self.v.grid()).expect("matching dimensions");
        let prod = ext.mul(self.v).expect("same grid");
        let back = extension_adjoint(self.out, &prod).expect("position space");
        back.iter().zip(&self.out.weights).map(|(a, w)| a * w.sqrt()).collect()
    }

    fn apply_adjoint(&self, y: &[C64]) -> Vec<C64> {
        let g: Vec<C64> = y.iter().zip(&self.out.weights).map(|(a, w)| a / w.sqrt()).collect();
        let ext = extension_apply(self.out, &g, self.v.grid()).expect("matching dimensions");
        let prod = ext.mul(&self.v.map(|c| c.conj())).expect("same grid");
        let back = extension_adjoint(self.inp, &prod).expect("position space");
        back.iter().zip(&self.inp.weights).map(|(a, w)| a * w.sqrt()).collect()
    }
}

fn delta_of(c: &MultiplierSpec) -> Result<f64> {
    c.delta.ok_or_else(|| Error::Precondition("multiplier carries no delta".into()))
}

/// |C1 V C2| / (A sqrt(log(2 + 1/delta1)) sqrt(log(2 + 1/delta2))).
pub fn foliation_check(c1: &MultiplierSpec, v: &GridFunction, c2: &MultiplierSpec, a: f64, opts: &NormOptions) -> Result<f64> {
    if !(a > 0.0) {
        return Err(Error::Precondition(format!("extension constant A = {a} must be positive")));
    }
    let (d1, d2) = (delta_of(c1)?, delta_of(c2)?);
    if v.max_abs() == 0.0 {
        return Ok(0.0);
    }
    let chain = LinearOperatorChain::new(*v.grid()).multiplier(c2)?.pointwise(v)?.multiplier(c1)?;
    let norm = lanczos_norm(&chain, opts)?.value;
    Ok(norm / (a * (2.0 + 1.0 / d1).ln().sqrt() * (2.0 + 1.0 / d2).ln().sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use crate::multipliers::sphere_net;
    use crate::opnorm::dense_matrix;

    #[test]
    fn nufft_matrix_matches_grid_sums() {
        let g = make_grid(2, 8.0, 32).unwrap();
        let v = GridFunction::from_real_fn(g, Space::Position, |x| if x[0] * x[0] + x[1] * x[1] < 1.0 { 1.0 } else { 0.0 });
        let net = sphere_net(1.0, 8.0, 2).unwrap();
        let mat = extension_matrix(&v, &net, &net).unwrap();
        let direct = dense_matrix(&ExtensionOperator { v: &v, out: &net, inp: &net }).unwrap();
        let err = (&mat - &direct).iter().map(|c| c.norm()).fold(0.0, f64::max);
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn sign_flip_and_zero() {
        let g = make_grid(2, 8.0, 32).unwrap();
        let v = GridFunction::from_real_fn(g, Space::Position, |x| (x[0] - x[1]).cos() * (-x[0] * x[0]).exp());
        let net = sphere_net(1.0, 16.0, 2).unwrap();
        let opts = NormOptions::default();
        let a = extension_norm(&v, &net, &net, &opts).unwrap().value;
        let b = extension_norm(&v.scaled(C64::new(-1.0, 0.0)), &net, &net, &opts).unwrap().value;
        assert_eq!(a, b);
        let zero = extension_norm(&GridFunction::zeros(g, Space::Position), &net, &net, &opts).unwrap();
        assert_eq!(zero.value, 0.0);
    }
}
