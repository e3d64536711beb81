//! Tensor-product Lagrange bases on the reference square `[0,1]^2`.
//!
//! Local node `a + (p+1) b` sits at `(a/p, b/p)` for degree `p`.

use crate::error::{Error, Result};

/// Values and reference derivatives of all local basis functions at one point.
/// Second derivatives are stored as `[xx, xy, yy]`.
#[derive(Clone, Debug, PartialEq)]
pub struct BasisEval {
    pub values: Vec<f64>,
    pub grads: Vec<[f64; 2]>,
    pub hessians: Vec<[f64; 3]>,
}

/// Number of local functions for a degree-`p` element.
pub fn n_local(degree: usize) -> usize {
    (degree + 1) * (degree + 1)
}

/// 1D Lagrange polynomial values, first and second derivatives at `t`.
fn lagrange_1d(degree: usize, t: f64) -> ([f64; 3], [f64; 3], [f64; 3]) {
    match degree {
        1 => ([1.0 - t, t, 0.0], [-1.0, 1.0, 0.0], [0.0; 3]),
        _ => (
            [
                2.0 * (t - 0.5) * (t - 1.0),
                4.0 * t * (1.0 - t),
                2.0 * t * (t - 0.5),
            ],
            [4.0 * t - 3.0, 4.0 - 8.0 * t, 4.0 * t - 1.0],
            [4.0, -8.0, 4.0],
        ),
    }
}

pub fn eval_basis(degree: usize, point: [f64; 2]) -> Result<BasisEval> {
    if degree != 1 && degree != 2 {
        return Err(Error::UnsupportedDegree(degree));
    }
    let m = degree + 1;
    let (vx, dx, ddx) = lagrange_1d(degree, point[0]);
    let (vy, dy, ddy) = lagrange_1d(degree, point[1]);
    let n = m * m;
    let mut out = BasisEval {
        values: Vec::with_capacity(n),
        grads: Vec::with_capacity(n),
        hessians: Vec::with_capacity(n),
    };
    for b in 0..m {
        for a in 0..m {
            out.values.push(vx[a] * vy[b]);
            out.grads.push([dx[a] * vy[b], vx[a] * dy[b]]);
            out.hessians
                .push([ddx[a] * vy[b], dx[a] * dy[b], vx[a] * ddy[b]]);
        }
    }
    Ok(out)
}

/// Reference coordinates of the local nodes.
pub fn reference_nodes(degree: usize) -> Vec<[f64; 2]> {
    let m = degree + 1;
    let step = 1.0 / degree as f64;
    (0..m * m)
        .map(|k| [(k % m) as f64 * step, (k / m) as f64 * step])
        .collect()
}

/// 1D quadratic Lagrange weights on nodes `(0, 1, 1/2)` evaluated at `t`,
/// ordered `(end0, end1, mid)`.
pub fn quadratic_trace_weights(t: f64) -> [f64; 3] {
    let (v, _, _) = lagrange_1d(2, t);
    [v[0], v[2], v[1]]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn q1_kronecker_at_origin() {
        let e = eval_basis(1, [0.0, 0.0]).unwrap();
        assert_eq!(e.values, vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn q1_gradient_at_center() {
        let e = eval_basis(1, [0.5, 0.5]).unwrap();
        assert_eq!(e.grads[0], [-0.5, -0.5]);
    }

    #[test]
    fn q2_center_function() {
        let e = eval_basis(2, [0.5, 0.5]).unwrap();
        assert!((e.values[4] - 1.0).abs() < 1e-15);
        assert!(e.grads[4][0].abs() < 1e-15 && e.grads[4][1].abs() < 1e-15);
    }

    #[test]
    fn unsupported_degree() {
        assert!(matches!(
            eval_basis(3, [0.0, 0.0]),
            Err(Error::UnsupportedDegree(3))
        ));
    }

    #[test]
    fn kronecker_at_nodes() {
        for degree in [1, 2] {
            for (i, &node) in reference_nodes(degree).iter().enumerate() {
                let e = eval_basis(degree, node).unwrap();
                for (j, v) in e.values.iter().enumerate() {
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert!((v - expect).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn quadratic_trace_quarter_point() {
        let w = quadratic_trace_weights(0.25);
        assert!((w[0] - 0.375).abs() < 1e-15);
        assert!((w[1] + 0.125).abs() < 1e-15);
        assert!((w[2] - 0.75).abs() < 1e-15);
    }
}
