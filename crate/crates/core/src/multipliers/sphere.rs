//! 1/R-separated nets on the sphere of radius lambda, the extension operator
//! E g = (g d sigma)^vee and the discrete matrix S.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{dot, min_pairwise_distance, BoxGrid, GridFunction, Point, SeparatedSet, Space, C64};

/// e(t) = exp(2 pi i t)
pub fn e(t: f64) -> C64 {
    C64::from_polar(1.0, 2.0 * PI * t)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SphereNet {
    pub d: usize,
    pub lambda: f64,
    pub separation: f64,
    pub nodes: Vec<Point>,
    pub weights: Vec<f64>,
}

impl SphereNet {
    /// n equispaced nodes on the circle of radius lambda.
    pub fn circle(lambda: f64, n: usize) -> Self {
        let nodes: Vec<Point> = (0..n)
            .map(|k| {
                let t = 2.0 * PI * k as f64 / n as f64;
                [lambda * t.cos(), lambda * t.sin(), 0.0]
            })
            .collect();
        let separation = if n > 1 { 2.0 * lambda * (PI / n as f64).sin() } else { f64::INFINITY };
        SphereNet { d: 2, lambda, separation, nodes, weights: vec![2.0 * PI * lambda / n as f64; n] }
    }

    /// n Fibonacci nodes on the sphere of radius lambda.
    pub fn fibonacci(lambda: f64, n: usize) -> Self {
        let golden = PI * (3.0 - 5f64.sqrt());
        let nodes: Vec<Point> = (0..n)
            .map(|i| {
                let z = 1.0 - (2 * i + 1) as f64 / n as f64;
                let r = (1.0 - z * z).sqrt();
                let t = golden * i as f64;
                [lambda * r * t.cos(), lambda * r * t.sin(), lambda * z]
            })
            .collect();
        let separation = min_pairwise_distance(&nodes);
        SphereNet { d: 3, lambda, separation, nodes, weights: vec![4.0 * PI * lambda * lambda / n as f64; n] }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// (d sigma)^vee(x) by quadrature.
    pub fn measure_transform(&self, x: &Point) -> C64 {
        self.nodes.iter().zip(&self.weights).map(|(nu, w)| e(dot(x, nu)) * *w).sum()
    }
}

/// Net on M_lambda with separation at least 1/R.
pub fn sphere_net(lambda: f64, r: f64, d: usize) -> Result<SphereNet> {
    if !(lambda > 0.0) || r < 2.0 {
        return Err(Error::Precondition(format!("need lambda > 0 and R >= 2, got {lambda}, {r}")));
    }
    let sep = 1.0 / r;
    match d {
        1 => {
            if 2.0 * lambda < sep {
                return Err(Error::Precondition("the two points of M_lambda are closer than 1/R".into()));
            }
            Ok(SphereNet {
                d: 1,
                lambda,
                separation: sep,
                nodes: vec![[-lambda, 0.0, 0.0], [lambda, 0.0, 0.0]],
                weights: vec![1.0, 1.0],
            })
        }
        2 => {
            let ratio = sep / (2.0 * lambda);
            if ratio > 1.0 {
                return Err(Error::Precondition("1/R exceeds the diameter".into()));
            }
            let mut n = (PI / ratio.asin()).floor() as usize;
            while n > 2 && 2.0 * lambda * (PI / n as f64).sin() < sep {
                n -= 1;
            }
            let mut net = SphereNet::circle(lambda, n.max(2));
            net.separation = sep;
            Ok(net)
        }
        3 => {
            let mut n = ((4.0 * PI * lambda * lambda) / (sep * sep)).ceil() as usize;
            loop {
                let net = SphereNet::fibonacci(lambda, n);
                if net.separation >= sep || n <= 2 {
                    return Ok(SphereNet { separation: sep, ..net });
                }
                n = ((n as f64) * 0.98).floor() as usize;
            }
        }
        _ => Err(Error::InvalidDimension(d)),
    }
}

/// First zero of Re (d sigma)^vee along the first axis, located by bisection.
pub fn positive_kernel_radius(net: &SphereNet) -> f64 {
    let f = |t: f64| net.measure_transform(&[t, 0.0, 0.0]).re;
    let step = 0.01 / net.lambda;
    let mut a = 0.0;
    let mut b = step;
    while f(b) > 0.0 {
        a = b;
        b += step;
        if b > 100.0 / net.lambda {
            return f64::INFINITY;
        }
    }
    for _ in 0..60 {
        let m = 0.5 * (a + b);
        if f(m) > 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    a
}

/// Per-axis phase tables e(x_i nu_a) for all nodes.
fn phase_tables(net: &SphereNet, grid: &BoxGrid, sign: f64) -> Vec<Vec<C64>> {
    let n = grid.n;
    net.nodes
        .iter()
        .map(|nu| {
            let mut t = Vec::with_capacity(grid.d * n);
            for (a, &nua) in nu.iter().enumerate().take(grid.d) {
                let _ = a;
                for i in 0..n {
                    t.push(e(sign * grid.coord(i) * nua));
                }
            }
            t
        })
        .collect()
}

fn check_net(net: &SphereNet, grid: &BoxGrid) -> Result<()> {
    if net.d != grid.d {
        return Err(Error::IncompatibleStage(format!("net in dimension {} on a {}-d grid", net.d, grid.d)));
    }
    Ok(())
}

/// E g(x) = sum_nu w_nu e(x . nu) g_nu on the grid.
pub fn extension_apply(net: &SphereNet, g: &[C64], grid: &BoxGrid) -> Result<GridFunction> {
    check_net(net, grid)?;
    if g.len() != net.len() {
        return Err(Error::IncompatibleStage(format!("{} node values for {} nodes", g.len(), net.len())));
    }
    let n = grid.n;
    let tables = phase_tables(net, grid, 1.0);
    let mut out = vec![C64::new(0.0, 0.0); grid.len()];
    for ((t, w), gv) in tables.iter().zip(&net.weights).zip(g) {
        let c = gv * *w;
        if c == C64::new(0.0, 0.0) {
            continue;
        }
        match grid.d {
            1 => {
                for i in 0..n {
                    out[i] += c * t[i];
                }
            }
            2 => {
                for i in 0..n {
                    let ci = c * t[i];
                    let row = &mut out[i * n..(i + 1) * n];
                    for (o, tj) in row.iter_mut().zip(&t[n..2 * n]) {
                        *o += ci * tj;
                    }
                }
            }
            _ => {
                for i in 0..n {
                    let ci = c * t[i];
                    for j in 0..n {
                        let cij = ci * t[n + j];
                        let row = &mut out[(i * n + j) * n..(i * n + j + 1) * n];
                        for (o, tk) in row.iter_mut().zip(&t[2 * n..3 * n]) {
                            *o += cij * tk;
                        }
                    }
                }
            }
        }
    }
    GridFunction::from_values(*grid, Space::Position, out)
}

/// E* F(nu) = sum_x dx^d e(-x . nu) F(x).
pub fn extension_adjoint(net: &SphereNet, f: &GridFunction) -> Result<Vec<C64>> {
    let grid = *f.grid();
    check_net(net, &grid)?;
    if f.space() != Space::Position {
        return Err(Error::WrongSpace { expected: Space::Position });
    }
    let n = grid.n;
    let vol = grid.cell_volume();
    let v = f.values();
    let tables = phase_tables(net, &grid, -1.0);
    Ok(tables
        .iter()
        .map(|t| {
            let mut s = C64::new(0.0, 0.0);
            match grid.d {
                1 => {
                    for i in 0..n {
                        s += v[i] * t[i];
                    }
                }
                2 => {
                    for i in 0..n {
                        let row: C64 = v[i * n..(i + 1) * n].iter().zip(&t[n..2 * n]).map(|(a, b)| a * b).sum();
                        s += row * t[i];
                    }
                }
                _ => {
                    for i in 0..n {
                        for j in 0..n {
                            let row: C64 = v[(i * n + j) * n..(i * n + j + 1) * n]
                                .iter()
                                .zip(&t[2 * n..3 * n])
                                .map(|(a, b)| a * b)
                                .sum();
                            s += row * t[i] * t[n + j];
                        }
                    }
                }
            }
            s * vol
        })
        .collect())
}

/// Largest dense matrix materialized here (entries).
pub const MAX_DENSE_ENTRIES: usize = 32_000_000;

/// S[x, nu] = e(nu . x) / |nodes|, mapping l2_av of the net into functions on the targets.
pub fn discres_matrix(net: &SphereNet, targets: &SeparatedSet) -> Result<DMatrix<C64>> {
    let (m, n) = (targets.len(), net.len());
    if m.checked_mul(n).is_none_or(|s| s > MAX_DENSE_ENTRIES) {
        return Err(Error::SizeOverflow(format!("{m} x {n} dense matrix")));
    }
    let scale = 1.0 / n as f64;
    Ok(DMatrix::from_fn(m, n, |i, j| e(dot(&targets.points[i], &net.nodes[j])) * scale))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use approx::assert_relative_eq;

    #[test]
    fn circle_net_counts() {
        let net = sphere_net(1.0, 16.0, 2).unwrap();
        assert_eq!(net.len(), 100);
        assert_relative_eq!(net.total_weight(), 2.0 * PI, max_relative = 0.01);
        assert!(min_pairwise_distance(&net.nodes) >= 1.0 / 16.0);
        let net = sphere_net(2.5, 8.0, 2).unwrap();
        assert_relative_eq!(net.total_weight(), 5.0 * PI, max_relative = 0.01);
    }

    #[test]
    fn sphere_net_separation() {
        let net = sphere_net(1.0, 8.0, 3).unwrap();
        assert!(min_pairwise_distance(&net.nodes) >= 1.0 / 8.0);
        assert_relative_eq!(net.total_weight(), 4.0 * PI, max_relative = 0.01);
        assert!(net.len() > 200);
        let one = sphere_net(1.0, 4.0, 1).unwrap();
        assert_eq!(one.len(), 2);
    }

    #[test]
    fn extension_of_one_is_bessel() {
        let g = make_grid(2, 16.0, 64).unwrap();
        let net = sphere_net(1.0, 16.0, 2).unwrap();
        let ones = vec![C64::new(1.0, 0.0); net.len()];
        let eg = extension_apply(&net, &ones, &g).unwrap();
        let origin = g.ravel([32, 32, 0]);
        assert_relative_eq!(eg.values()[origin].re, 2.0 * PI, max_relative = 0.01);
        for i in 0..g.len() {
            let x = g.point(i);
            let r = crate::grid::norm(&x);
            if r <= 4.0 {
                let exact = 2.0 * PI * puruspe::Jn(0, 2.0 * PI * r);
                assert!((eg.values()[i] - exact).norm() <= 0.02 * 2.0 * PI, "r = {r}");
            }
        }
        let zero = extension_apply(&net, &vec![C64::new(0.0, 0.0); net.len()], &g).unwrap();
        assert_eq!(zero.max_abs(), 0.0);
    }

    #[test]
    fn extension_adjoint_pairing() {
        let g = make_grid(2, 8.0, 16).unwrap();
        let net = sphere_net(1.0, 4.0, 2).unwrap();
        let gv: Vec<C64> = (0..net.len()).map(|k| C64::new(k as f64, 1.0 - k as f64)).collect();
        let f = GridFunction::from_fn(g, Space::Position, |x| C64::new(x[0].sin(), x[1]));
        let lhs: C64 = extension_apply(&net, &gv, &g)
            .unwrap()
            .values()
            .iter()
            .zip(f.values())
            .map(|(a, b)| a * b.conj())
            .sum::<C64>()
            * g.cell_volume();
        let adj = extension_adjoint(&net, &f).unwrap();
        let rhs: C64 = gv.iter().zip(&adj).zip(&net.weights).map(|((a, b), w)| a * b.conj() * *w).sum();
        assert!((lhs - rhs).norm() < 1e-9 * lhs.norm().max(1.0));
    }

    #[test]
    fn kernel_radius_is_first_bessel_zero() {
        let net = sphere_net(1.0, 32.0, 2).unwrap();
        let r = positive_kernel_radius(&net);
        assert_relative_eq!(r, 2.404_825_557_695_773 / (2.0 * PI), max_relative = 1e-4);
    }

    #[test]
    fn discres_single_entry() {
        let net = SphereNet::circle(1.0, 1);
        let t = SeparatedSet::new(2, vec![[0.3, 0.2, 0.0]]);
        let s = discres_matrix(&net, &t).unwrap();
        assert_eq!(s.shape(), (1, 1));
        assert_relative_eq!(s[(0, 0)].norm(), 1.0, epsilon = 1e-15);
    }
}
