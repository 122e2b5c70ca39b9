//! Gauss rules and the tensor-product grid used for integrals over the box.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{LabError, Result};
use crate::fields::Aabb;
use crate::Vec3;

/// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration on P_n.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "Gauss-Legendre order must be positive");
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, 0.0);
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        // Recompute the derivative at the converged root.
        let (mut p0, mut p1) = (1.0, 0.0);
        for j in 0..n {
            let p2 = p1;
            p1 = p0;
            p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
        }
        if n > 1 || z != 0.0 {
            dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
        }
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    if n == 1 {
        w[0] = 2.0;
    }
    (x, w)
}

/// Gauss-Hermite rule for the standard normal density (probabilists'
/// convention): Σ w_i f(x_i) ≈ E[f(Z)], Z ~ N(0,1). Golub-Welsch.
pub fn gauss_hermite_normal(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "Gauss-Hermite order must be positive");
    let mut jac = DMatrix::<f64>::zeros(n, n);
    for i in 1..n {
        let b = (i as f64).sqrt();
        jac[(i, i - 1)] = b;
        jac[(i - 1, i)] = b;
    }
    let eig = SymmetricEigen::new(jac);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| (eig.eigenvalues[i], eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Symmetrize to remove eigen-solver asymmetry.
    let mut x: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let mut w: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    for i in 0..n / 2 {
        let j = n - 1 - i;
        let xs = 0.5 * (x[j] - x[i]);
        x[i] = -xs;
        x[j] = xs;
        let ws = 0.5 * (w[i] + w[j]);
        w[i] = ws;
        w[j] = ws;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    let total: f64 = w.iter().sum();
    for wi in &mut w {
        *wi /= total;
    }
    (x, w)
}

/// Tensor-product Gauss-Legendre grid over a box.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureGrid {
    pub nodes: Vec<(Vec3, f64)>,
    pub order: [usize; 3],
    pub domain: Aabb,
}

pub const DEFAULT_ORDER: usize = 16;

impl QuadratureGrid {
    pub fn new(domain: Aabb, order: [usize; 3]) -> Result<Self> {
        if order.contains(&0) {
            return Err(LabError::Config(format!("quadrature order {order:?} must be positive")));
        }
        let rules: Vec<(Vec<f64>, Vec<f64>)> = (0..3)
            .map(|a| {
                let (x, w) = gauss_legendre(order[a]);
                let half = 0.5 * (domain.max[a] - domain.min[a]);
                let mid = 0.5 * (domain.max[a] + domain.min[a]);
                (x.iter().map(|xi| mid + half * xi).collect(), w.iter().map(|wi| half * wi).collect())
            })
            .collect();
        let mut nodes = Vec::with_capacity(order.iter().product());
        for i in 0..order[0] {
            for j in 0..order[1] {
                for k in 0..order[2] {
                    let r = Vec3::new(rules[0].0[i], rules[1].0[j], rules[2].0[k]);
                    nodes.push((r, rules[0].1[i] * rules[1].1[j] * rules[2].1[k]));
                }
            }
        }
        Ok(QuadratureGrid { nodes, order, domain })
    }

    pub fn cubic(domain: Aabb, order: usize) -> Result<Self> {
        QuadratureGrid::new(domain, [order; 3])
    }

    pub fn weight_sum(&self) -> f64 {
        self.nodes.iter().map(|n| n.1).sum()
    }

    /// Σ w f(r) for a vector of integrands. Node values may be computed in
    /// parallel; the reduction runs in node order so the result does not
    /// depend on the thread count.
    pub fn integrate<const K: usize, F>(&self, f: F) -> Result<[f64; K]>
    where
        F: Fn(&Vec3) -> Result<[f64; K]> + Sync,
    {
        let vals: Vec<Result<[f64; K]>> = self.nodes.par_iter().map(|(r, _)| f(r)).collect();
        let mut acc = [0.0; K];
        for ((_, w), v) in self.nodes.iter().zip(vals) {
            let v = v?;
            for k in 0..K {
                acc[k] += w * v[k];
            }
        }
        Ok(acc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_integrates_polynomials_exactly() {
        for n in 1..=20 {
            let (x, w) = gauss_legendre(n);
            for deg in 0..(2 * n) {
                let q: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(deg as i32)).sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((q - exact).abs() < 1e-13, "n={n} deg={deg} q={q}");
            }
        }
    }

    #[test]
    fn hermite_reproduces_normal_moments() {
        let (x, w) = gauss_hermite_normal(12);
        let m = |k: i32| x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(k)).sum::<f64>();
        assert!((m(0) - 1.0).abs() < 1e-14);
        assert!(m(1).abs() < 1e-14);
        assert!((m(2) - 1.0).abs() < 1e-12);
        assert!((m(4) - 3.0).abs() < 1e-11);
        assert!((m(6) - 15.0).abs() < 1e-10);
    }

    #[test]
    fn grid_weights_sum_to_volume() {
        let dom = Aabb::new([-1.0, 0.0, 2.0], [2.0, 0.5, 3.5]).unwrap();
        let g = QuadratureGrid::cubic(dom, 16).unwrap();
        assert!((g.weight_sum() - dom.volume()).abs() < 1e-12 * dom.volume());
        let [v] = g.integrate(|r| Ok([r.x * r.x])).unwrap();
        // ∫x² over [-1,2] times the other extents.
        assert!((v - 3.0 * 0.5 * 1.5).abs() < 1e-12);
    }
}
