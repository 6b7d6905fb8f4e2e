use std::fmt;

use serde::{Deserialize, Serialize};

use crate::estimands::{EstimandError, EstimandPosterior, Summary};
use crate::model::ModelKind;

/// Quantities whose estimators are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SimTarget {
    Mu0(f64),
    Mu1(f64),
    De(f64),
}

impl SimTarget {
    /// `μ_{0α}`, `μ_{1α}` and `DE(α)` at every grid point.
    pub fn all(alpha_grid: &[f64]) -> Vec<SimTarget> {
        let mut out = Vec::new();
        for &a in alpha_grid {
            out.extend([SimTarget::Mu0(a), SimTarget::Mu1(a), SimTarget::De(a)]);
        }
        out
    }

    pub fn alpha(self) -> f64 {
        match self {
            SimTarget::Mu0(a) | SimTarget::Mu1(a) | SimTarget::De(a) => a,
        }
    }

    pub fn values(self, post: &EstimandPosterior) -> Result<Vec<f64>, EstimandError> {
        match self {
            SimTarget::Mu0(a) => Ok(post.mu(false, a)?.to_vec()),
            SimTarget::Mu1(a) => Ok(post.mu(true, a)?.to_vec()),
            SimTarget::De(a) => post.contrast(crate::estimands::Contrast::Direct, a, a),
        }
    }

    /// Truth from `(μ_{0α}, μ_{1α})`.
    pub fn truth(self, mu: (f64, f64)) -> f64 {
        match self {
            SimTarget::Mu0(_) => mu.0,
            SimTarget::Mu1(_) => mu.1,
            SimTarget::De(_) => mu.1 - mu.0,
        }
    }
}

impl fmt::Display for SimTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SimTarget::Mu0(a) => write!(f, "mu0({a})"),
            SimTarget::Mu1(a) => write!(f, "mu1({a})"),
            SimTarget::De(a) => write!(f, "DE({a})"),
        }
    }
}

/// Relative bias is not reported for truths this close to zero.
pub const RB_MIN_TRUTH: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetMetrics {
    pub target: SimTarget,
    pub truth: f64,
    /// Average posterior mean.
    pub mean_estimate: f64,
    /// Relative bias in percent.
    pub rb: Option<f64>,
    /// Average posterior SD.
    pub asd: f64,
    /// SD of the posterior means across replicates.
    pub esd: f64,
    /// Coverage of the 95% intervals in percent.
    pub ecp: f64,
    pub n: usize,
}

impl TargetMetrics {
    /// Metrics over replicate summaries. Summaries are sorted before any
    /// summation so the result does not depend on replicate order.
    pub fn of(target: SimTarget, truth: f64, summaries: &[Summary]) -> Self {
        let n = summaries.len();
        let mut s = summaries.to_vec();
        s.sort_by(|a, b| {
            a.mean.total_cmp(&b.mean).then(a.sd.total_cmp(&b.sd)).then(a.lower.total_cmp(&b.lower)).then(a.upper.total_cmp(&b.upper))
        });
        let nf = n as f64;
        let mean_estimate = s.iter().map(|x| x.mean).sum::<f64>() / nf;
        let asd = s.iter().map(|x| x.sd).sum::<f64>() / nf;
        let esd = if n < 2 {
            0.0
        } else {
            (s.iter().map(|x| (x.mean - mean_estimate).powi(2)).sum::<f64>() / (nf - 1.0)).sqrt()
        };
        let ecp = 100.0 * s.iter().filter(|x| x.covers(truth)).count() as f64 / nf;
        let rb = (truth.abs() >= RB_MIN_TRUTH).then(|| 100.0 * (mean_estimate - truth) / truth);
        Self { target, truth, mean_estimate, rb, asd, esd, ecp, n }
    }
}

/// Performance of one method over the retained replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimMetrics {
    pub method: ModelKind,
    pub targets: Vec<TargetMetrics>,
}

impl SimMetrics {
    pub fn get(&self, target: SimTarget) -> Option<&TargetMetrics> {
        self.targets.iter().find(|t| t.target == target)
    }
}
