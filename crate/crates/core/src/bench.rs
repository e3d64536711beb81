//! Benchmark problems and post-processing: the harmonic-map director with a
//! known closed form, H1 errors, error distribution curves and effectivity.

use std::io::Write;
use std::path::Path;

use crate::assembly::Discretization;
use crate::error::{Error, Result};
use crate::fespace::BoundaryData;

/// A director field with known value and gradient.
pub trait ExactSolution: Send + Sync {
    fn director(&self, p: [f64; 2]) -> [f64; 3];

    /// `grad[i] = [d n_i/dx, d n_i/dy]`.
    fn gradient(&self, p: [f64; 2]) -> [[f64; 2]; 3];

    fn energy(&self) -> Option<f64> {
        None
    }
}

/// `n = (sin t, cos t, 0)` with `t = -4.5 log10 |x - c|`, `c = (0.5, -0.1)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HarmonicMap {
    pub center: [f64; 2],
    pub strength: f64,
}

impl Default for HarmonicMap {
    fn default() -> Self {
        Self {
            center: [0.5, -0.1],
            strength: 4.5,
        }
    }
}

impl HarmonicMap {
    pub const ENERGY: f64 = 8.717;

    fn angle(&self, p: [f64; 2]) -> Result<(f64, [f64; 2])> {
        let (dx, dy) = (p[0] - self.center[0], p[1] - self.center[1]);
        let r2 = dx * dx + dy * dy;
        if r2 == 0.0 {
            return Err(Error::SingularPoint(p[0], p[1]));
        }
        let t = -self.strength * 0.5 * r2.log10();
        let s = -self.strength / std::f64::consts::LN_10 / r2;
        Ok((t, [s * dx, s * dy]))
    }

    pub fn try_director(&self, p: [f64; 2]) -> Result<[f64; 3]> {
        let (t, _) = self.angle(p)?;
        Ok([t.sin(), t.cos(), 0.0])
    }
}

/// The closed-form director; fails at the singular center.
pub fn analytic_director(x: f64, y: f64) -> Result<[f64; 3]> {
    HarmonicMap::default().try_director([x, y])
}

impl ExactSolution for HarmonicMap {
    fn director(&self, p: [f64; 2]) -> [f64; 3] {
        self.try_director(p)
            .expect("point away from the singularity")
    }

    fn gradient(&self, p: [f64; 2]) -> [[f64; 2]; 3] {
        let (t, g) = self.angle(p).expect("point away from the singularity");
        let (s, c) = t.sin_cos();
        [[c * g[0], c * g[1]], [-s * g[0], -s * g[1]], [0.0, 0.0]]
    }

    fn energy(&self) -> Option<f64> {
        Some(Self::ENERGY)
    }
}

impl BoundaryData for HarmonicMap {
    fn director(&self, p: [f64; 2]) -> [f64; 3] {
        ExactSolution::director(self, p)
    }
}

/// Anchoring `n = director` on the whole boundary and a smoothed square pulse
/// of the potential on the top side `y = y_top`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlexoBoundary {
    pub director: [f64; 3],
    pub amplitude: f64,
    pub sharpness: f64,
    pub y_top: f64,
}

impl Default for FlexoBoundary {
    fn default() -> Self {
        Self {
            director: [0.0, 0.0, 1.0],
            amplitude: 1.5,
            sharpness: 40.0,
            y_top: 1.0,
        }
    }
}

impl FlexoBoundary {
    pub fn profile(&self, x: f64) -> f64 {
        let s = self.sharpness;
        self.amplitude * 0.5 * ((s * (x - 1.0 / 3.0)).tanh() - (s * (x - 2.0 / 3.0)).tanh())
    }
}

impl BoundaryData for FlexoBoundary {
    fn director(&self, _p: [f64; 2]) -> [f64; 3] {
        self.director
    }

    fn potential(&self, p: [f64; 2]) -> f64 {
        if (p[1] - self.y_top).abs() < 1e-12 {
            self.profile(p[0])
        } else {
            0.0
        }
    }
}

/// Squared H1 error per active cell (ascending id) and the global H1 error.
pub fn h1_error(
    disc: &Discretization,
    values: &[f64],
    exact: &dyn ExactSolution,
) -> (Vec<f64>, f64) {
    let rule = &disc.tables.rule;
    let mut cells = Vec::with_capacity(disc.dofs.active_cells().len());
    for (pos, &cid) in disc.dofs.active_cells().iter().enumerate() {
        let bbox = disc.mesh.cell(cid).bbox;
        let mut s = 0.0;
        for (&r, &w) in rule.points.iter().zip(&rule.weights) {
            let x = bbox.to_physical(r);
            let pt = disc.point_fields_at(pos, r, values);
            let n = exact.director(x);
            let g = exact.gradient(x);
            for i in 0..3 {
                let e = n[i] - pt.n[i];
                let ex = g[i][0] - pt.grad_n[i][0];
                let ey = g[i][1] - pt.grad_n[i][1];
                s += w * (e * e + ex * ex + ey * ey);
            }
        }
        cells.push(s * bbox.area());
    }
    let total = cells.iter().sum::<f64>().sqrt();
    (cells, total)
}

/// Cumulative share of the total held by the largest contributions.
#[derive(Clone, Debug, PartialEq)]
pub struct DistributionCurve {
    pub sorted: Vec<f64>,
    /// `(fraction of cells, fraction of total)`, one point per cell.
    pub points: Vec<(f64, f64)>,
}

impl DistributionCurve {
    /// Trapezoidal area under the curve from `(0, 0)`.
    pub fn area(&self) -> f64 {
        let mut prev = (0.0, 0.0);
        let mut a = 0.0;
        for &p in &self.points {
            a += 0.5 * (p.0 - prev.0) * (p.1 + prev.1);
            prev = p;
        }
        a
    }

    /// `fraction_cells,fraction_total`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "fraction_cells,fraction_total")?;
        for (x, y) in &self.points {
            writeln!(w, "{x:.10},{y:.10}")?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn distribution_curve(values: &[f64]) -> Result<DistributionCurve> {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let total: f64 = sorted.iter().sum();
    if !(total > 0.0) {
        return Err(Error::AllZero);
    }
    let m = sorted.len() as f64;
    let mut acc = 0.0;
    let points = sorted
        .iter()
        .enumerate()
        .map(|(k, v)| {
            acc += v;
            ((k + 1) as f64 / m, acc / total)
        })
        .collect();
    Ok(DistributionCurve { sorted, points })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Effectivity {
    pub ratios: Vec<f64>,
    /// `max / min` of the ratios.
    pub spread: f64,
    pub flagged: bool,
}

/// Estimate-to-error ratios per level; flagged when the spread exceeds `band`.
pub fn effectivity(estimates: &[f64], errors: &[Option<f64>], band: f64) -> Result<Effectivity> {
    let mut ratios = Vec::with_capacity(estimates.len());
    for (l, (est, err)) in estimates.iter().zip(errors).enumerate() {
        let e = err.ok_or(Error::MissingErrorData(l))?;
        ratios.push(est / e);
    }
    if ratios.is_empty() || estimates.len() != errors.len() {
        return Err(Error::MissingErrorData(ratios.len()));
    }
    let max = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let spread = max / min;
    Ok(Effectivity {
        ratios,
        spread,
        flagged: !(spread < band),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn director_cases() {
        let n = analytic_director(0.5, 0.9).unwrap();
        assert!(n[0].abs() < 1e-15 && (n[1] - 1.0).abs() < 1e-15 && n[2] == 0.0);
        // t = pi/2 where log10 r = -pi/9
        let y = 10f64.powf(-std::f64::consts::PI / 9.0) - 0.1;
        let n = analytic_director(0.5, y).unwrap();
        assert!((n[0] - 1.0).abs() < 1e-14 && n[1].abs() < 1e-14);
        assert!(matches!(
            analytic_director(0.5, -0.1),
            Err(Error::SingularPoint(..))
        ));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let h = HarmonicMap::default();
        for p in [[0.1, 0.2], [0.9, 0.95], [0.5, 0.01], [0.33, 0.71]] {
            let g = h.gradient(p);
            for dir in 0..2 {
                let mut a = p;
                let mut b = p;
                a[dir] += 1e-6;
                b[dir] -= 1e-6;
                let (na, nb) = (
                    ExactSolution::director(&h, a),
                    ExactSolution::director(&h, b),
                );
                for i in 0..3 {
                    let fd = (na[i] - nb[i]) / 2e-6;
                    assert!((fd - g[i][dir]).abs() < 1e-6 * g[i][dir].abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn distribution_cases() {
        let c = distribution_curve(&[1.0, 2.0, 1.0]).unwrap();
        let expect = [(1.0 / 3.0, 0.5), (2.0 / 3.0, 0.75), (1.0, 1.0)];
        for (p, e) in c.points.iter().zip(expect) {
            assert!((p.0 - e.0).abs() < 1e-15 && (p.1 - e.1).abs() < 1e-15);
        }
        let flat = distribution_curve(&[3.0; 5]).unwrap();
        for (k, p) in flat.points.iter().enumerate() {
            assert!((p.0 - (k + 1) as f64 / 5.0).abs() < 1e-15 && (p.1 - p.0).abs() < 1e-15);
        }
        assert!((flat.area() - 0.5).abs() < 1e-15);
        assert!(distribution_curve(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn effectivity_cases() {
        let e = effectivity(&[10.0, 5.0], &[Some(2.0), Some(1.0)], 5.0).unwrap();
        assert_eq!(e.ratios, vec![5.0, 5.0]);
        assert!(!e.flagged);
        let e = effectivity(&[1.0, 1.0], &[Some(1.0), Some(1.0)], 5.0).unwrap();
        assert_eq!(e.ratios, vec![1.0, 1.0]);
        let e = effectivity(&[1.0, 10.0], &[Some(1.0), Some(1.0)], 5.0).unwrap();
        assert!(e.flagged);
        assert!(effectivity(&[1.0], &[None], 5.0).is_err());
    }

    #[test]
    fn flexo_profile_shape() {
        let b = FlexoBoundary::default();
        assert!((b.profile(0.5) - 1.5).abs() < 1e-5);
        assert!(b.profile(0.0).abs() < 1e-5 && b.profile(1.0).abs() < 1e-5);
        assert_eq!(b.potential([0.5, 0.3]), 0.0);
        assert!((b.potential([0.5, 1.0]) - 1.5).abs() < 1e-5);
    }
}
