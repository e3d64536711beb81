//! Gauss-Legendre rules on `[0,1]` and their tensor products on `[0,1]^2`.

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct QuadratureRule {
    /// Cell points on the reference square.
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    /// Edge rule on `[0,1]`.
    pub edge_points: Vec<f64>,
    pub edge_weights: Vec<f64>,
}

/// `n`-point Gauss-Legendre nodes and weights mapped to `[0,1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Newton on P_n starting from the Chebyshev-like guess
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let pk = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = pk;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = 0.5 * (1.0 - x);
        nodes[n - 1 - i] = 0.5 * (1.0 + x);
        weights[i] = 0.5 * w;
        weights[n - 1 - i] = 0.5 * w;
    }
    if n % 2 == 1 {
        // midpoint fixed exactly
        nodes[n / 2] = 0.5;
    }
    (nodes, weights)
}

pub fn quadrature_rule(n_1d: usize) -> Result<QuadratureRule> {
    if !(1..=6).contains(&n_1d) {
        return Err(Error::QuadratureOrder(n_1d));
    }
    let (x, w) = gauss_legendre(n_1d);
    let mut points = Vec::with_capacity(n_1d * n_1d);
    let mut weights = Vec::with_capacity(n_1d * n_1d);
    for j in 0..n_1d {
        for i in 0..n_1d {
            points.push([x[i], x[j]]);
            weights.push(w[i] * w[j]);
        }
    }
    Ok(QuadratureRule {
        points,
        weights,
        edge_points: x,
        edge_weights: w,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn midpoint_rule() {
        let q = quadrature_rule(1).unwrap();
        assert_eq!(q.points, vec![[0.5, 0.5]]);
        assert!((q.weights[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn five_point_integrates_degree_nine() {
        let (x, w) = gauss_legendre(5);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(9)).sum();
        assert!((s - 0.1).abs() < 1e-15);
    }

    #[test]
    fn weights_positive_and_sum_to_one() {
        for n in 1..=6 {
            let q = quadrature_rule(n).unwrap();
            assert!(q.weights.iter().all(|&w| w > 0.0));
            assert!((q.weights.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            assert!((q.edge_weights.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn exactness_per_order() {
        for n in 1..=6 {
            let (x, w) = gauss_legendre(n);
            for deg in 0..2 * n {
                let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
                assert!(
                    (s - 1.0 / (deg as f64 + 1.0)).abs() < 1e-14,
                    "n={n} deg={deg}"
                );
            }
        }
    }

    #[test]
    fn order_out_of_range() {
        assert!(quadrature_rule(0).is_err());
        assert!(quadrature_rule(7).is_err());
    }
}
