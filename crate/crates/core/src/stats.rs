//! Summary statistics over replication results.
//!
//! Inputs are sorted before folding, so results do not depend on the order
//! in which replications finished.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

/// Outcome of a tolerance or hypothesis check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

/// A mean with a Student-t confidence interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    /// Absent with fewer than two observations.
    pub half_width: Option<f64>,
    pub std_dev: f64,
    pub n: usize,
    pub level: f64,
}

impl Estimate {
    pub fn lower(&self) -> Option<f64> {
        self.half_width.map(|h| self.mean - h)
    }

    pub fn upper(&self) -> Option<f64> {
        self.half_width.map(|h| self.mean + h)
    }
}

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Two-sided Student-t quantile for `n − 1` degrees of freedom.
pub fn t_quantile(level: f64, n: usize) -> f64 {
    let dof = (n.max(2) - 1) as f64;
    StudentsT::new(0.0, 1.0, dof).expect("positive dof").inverse_cdf(0.5 + level / 2.0)
}

/// Sample mean and interval; `None` for no data.
pub fn mean_ci(values: &[f64], level: f64) -> Option<Estimate> {
    if values.is_empty() {
        return None;
    }
    let v = sorted(values);
    let n = v.len();
    let mean = v.iter().sum::<f64>() / n as f64;
    let var = if n > 1 { v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64 } else { 0.0 };
    let sd = var.sqrt();
    let half_width = (n > 1).then(|| t_quantile(level, n) * sd / (n as f64).sqrt());
    Some(Estimate { mean, half_width, std_dev: sd, n, level })
}

/// Batch-means estimate over groups of observations.
///
/// The point estimate pools every observation; the interval treats each
/// non-empty group mean as one batch. A single group is split into up to
/// `fallback_batches` contiguous batches.
pub fn batch_means(groups: &[Vec<f64>], level: f64, fallback_batches: usize) -> Option<Estimate> {
    let groups: Vec<&Vec<f64>> = groups.iter().filter(|g| !g.is_empty()).collect();
    let total: usize = groups.iter().map(|g| g.len()).sum();
    if total == 0 {
        return None;
    }
    let mut pooled: Vec<f64> = groups.iter().flat_map(|g| g.iter().copied()).collect();
    pooled.sort_by(f64::total_cmp);
    let mean = pooled.iter().sum::<f64>() / total as f64;
    let batches: Vec<f64> = if groups.len() >= 2 {
        groups.iter().map(|g| sorted(g).iter().sum::<f64>() / g.len() as f64).collect()
    } else {
        let g = groups[0];
        let b = fallback_batches.clamp(1, g.len());
        let size = g.len() / b;
        (0..b)
            .map(|i| {
                let end = if i + 1 == b { g.len() } else { (i + 1) * size };
                let chunk = sorted(&g[i * size..end]);
                chunk.iter().sum::<f64>() / chunk.len() as f64
            })
            .collect()
    };
    let spread = mean_ci(&batches, level)?;
    Some(Estimate { mean, half_width: spread.half_width, std_dev: spread.std_dev, n: total, level })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub n: usize,
}

/// Ordinary least squares `y ≈ slope·x + intercept`; needs two distinct `x`.
pub fn linear_fit(points: &[(f64, f64)]) -> Option<LinearFit> {
    let mut p = points.to_vec();
    p.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let n = p.len();
    if n < 2 {
        return None;
    }
    let nf = n as f64;
    let mx = p.iter().map(|q| q.0).sum::<f64>() / nf;
    let my = p.iter().map(|q| q.1).sum::<f64>() / nf;
    let sxx: f64 = p.iter().map(|q| (q.0 - mx).powi(2)).sum();
    let sxy: f64 = p.iter().map(|q| (q.0 - mx) * (q.1 - my)).sum();
    let syy: f64 = p.iter().map(|q| (q.1 - my).powi(2)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    Some(LinearFit { slope, intercept, r2, n })
}
