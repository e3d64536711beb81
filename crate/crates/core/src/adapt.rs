//! Marking strategies and work-unit accounting.
//!
//! Indicator slices are indexed by position; callers map positions to cell ids.
//! Ties are broken by ascending position.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Strategy {
    Fixed,
    Bandwidth,
    Dorfler,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Fixed => "fixed",
            Strategy::Bandwidth => "bandwidth",
            Strategy::Dorfler => "dorfler",
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "fixed" => Ok(Strategy::Fixed),
            "bandwidth" => Ok(Strategy::Bandwidth),
            "dorfler" | "doerfler" => Ok(Strategy::Dorfler),
            _ => Err(format!(
                "unknown marking strategy '{s}' (fixed, bandwidth, dorfler)"
            )),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MarkingConfig {
    pub strategy: Strategy,
    pub nu: f64,
}

impl MarkingConfig {
    pub fn new(strategy: Strategy, nu: f64) -> std::result::Result<Self, String> {
        if !(nu > 0.0 && nu < 1.0) {
            return Err(format!("nu must lie in (0, 1), got {nu}"));
        }
        Ok(Self { strategy, nu })
    }

    pub fn mark(&self, theta: &[f64]) -> Result<Vec<usize>> {
        match self.strategy {
            Strategy::Fixed => mark_fixed(theta, self.nu),
            Strategy::Bandwidth => mark_bandwidth(theta, self.nu),
            Strategy::Dorfler => mark_dorfler(theta, self.nu),
        }
    }
}

/// Positions sorted by descending indicator, ties by position.
fn descending(theta: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..theta.len()).collect();
    order.sort_by(|&a, &b| theta[b].total_cmp(&theta[a]).then(a.cmp(&b)));
    order
}

/// The `ceil(nu * m)` largest indicators.
pub fn mark_fixed(theta: &[f64], nu: f64) -> Result<Vec<usize>> {
    if theta.is_empty() {
        return Err(Error::EmptyIndicators);
    }
    let k = ((nu * theta.len() as f64).ceil() as usize).clamp(1, theta.len());
    let mut out: Vec<usize> = descending(theta).into_iter().take(k).collect();
    out.sort_unstable();
    Ok(out)
}

/// Every indicator at least `(1 - nu)` times the maximum.
pub fn mark_bandwidth(theta: &[f64], nu: f64) -> Result<Vec<usize>> {
    if theta.is_empty() {
        return Err(Error::EmptyIndicators);
    }
    let max = theta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let cut = (1.0 - nu) * max;
    Ok((0..theta.len()).filter(|&i| theta[i] >= cut).collect())
}

/// Shortest descending prefix with `sum theta^2 >= (1 - nu) sum_all theta^2`.
pub fn mark_dorfler(theta: &[f64], nu: f64) -> Result<Vec<usize>> {
    if theta.is_empty() {
        return Err(Error::EmptyIndicators);
    }
    let total: f64 = theta.iter().map(|t| t * t).sum();
    let goal = (1.0 - nu) * total;
    let mut out = Vec::new();
    let mut acc = 0.0;
    for i in descending(theta) {
        out.push(i);
        acc += theta[i] * theta[i];
        if acc >= goal {
            break;
        }
    }
    out.sort_unstable();
    Ok(out)
}

/// Hessian non-zeros of every Newton step, grouped by level.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct WorkLedger {
    pub levels: Vec<Vec<usize>>,
    pub reference_nnz: Option<usize>,
}

impl WorkLedger {
    pub fn open_level(&mut self, level: usize) {
        if self.levels.len() <= level {
            self.levels.resize(level + 1, Vec::new());
        }
    }

    pub fn record(&mut self, level: usize, nnz: usize) {
        self.open_level(level);
        self.levels[level].push(nnz);
    }

    pub fn total_nnz(&self) -> usize {
        self.levels.iter().flatten().sum()
    }

    /// Cumulative work units after each recorded step.
    pub fn cumulative(&self, reference: usize) -> Result<Vec<(usize, usize, usize, f64)>> {
        if reference == 0 {
            return Err(Error::ZeroReference);
        }
        let mut acc = 0usize;
        let mut out = Vec::new();
        for (l, steps) in self.levels.iter().enumerate() {
            for (k, &nnz) in steps.iter().enumerate() {
                acc += nnz;
                out.push((l, k, nnz, acc as f64 / reference as f64));
            }
        }
        Ok(out)
    }

    /// `level,newton_step,nnz,cumulative_wu`.
    pub fn write_csv(&self, path: &Path, reference: usize) -> Result<()> {
        let rows = self.cumulative(reference)?;
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "level,newton_step,nnz,cumulative_wu")?;
        for (l, k, nnz, wu) in rows {
            writeln!(w, "{l},{k},{nnz},{wu:.10}")?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Sum of all recorded non-zeros over the reference count.
pub fn work_units(ledger: &WorkLedger, reference: usize) -> Result<f64> {
    if reference == 0 {
        return Err(Error::ZeroReference);
    }
    Ok(ledger.total_nnz() as f64 / reference as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    const T: [f64; 4] = [4.0, 3.0, 2.0, 1.0];

    #[test]
    fn fixed_cases() {
        assert_eq!(mark_fixed(&T, 0.5).unwrap(), vec![0, 1]);
        assert_eq!(mark_fixed(&T, 0.99).unwrap(), vec![0, 1, 2, 3]);
        assert_eq!(mark_fixed(&[1.0; 4], 0.25).unwrap(), vec![0]);
        assert!(mark_fixed(&[], 0.5).is_err());
    }

    #[test]
    fn bandwidth_cases() {
        assert_eq!(mark_bandwidth(&T, 0.9).unwrap(), vec![0, 1, 2, 3]);
        assert_eq!(mark_bandwidth(&T, 0.5).unwrap(), vec![0, 1, 2]);
        assert_eq!(mark_bandwidth(&[0.1, 7.0, 0.2], 0.01).unwrap(), vec![1]);
    }

    #[test]
    fn dorfler_cases() {
        assert_eq!(mark_dorfler(&T, 0.9).unwrap(), vec![0]);
        assert_eq!(mark_dorfler(&T, 0.1).unwrap(), vec![0, 1, 2]);
        assert_eq!(mark_dorfler(&[2.5], 0.3).unwrap(), vec![0]);
    }

    #[test]
    fn work_unit_cases() {
        let mut l = WorkLedger::default();
        assert_eq!(work_units(&l, 10).unwrap(), 0.0);
        for n in [100, 100, 400] {
            l.record(0, n);
        }
        assert_eq!(work_units(&l, 400).unwrap(), 1.5);
        assert!(work_units(&l, 0).is_err());
        let mut one = WorkLedger::default();
        one.record(2, 77);
        assert_eq!(work_units(&one, 77).unwrap(), 1.0);
    }

    #[test]
    fn nu_validation() {
        assert!(MarkingConfig::new(Strategy::Dorfler, 1.2).is_err());
        assert!(MarkingConfig::new(Strategy::Dorfler, 0.0).is_err());
        assert!(MarkingConfig::new(Strategy::Fixed, 0.3).is_ok());
    }
}
