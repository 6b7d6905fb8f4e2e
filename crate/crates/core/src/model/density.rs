use std::f64::consts::{LN_2, PI};

use nalgebra::{DMatrix, SymmetricEigen};

use super::design::FitData;
use super::{ModelError, ModelKind, ModelSpec, ParamDraw, PriorConfig};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Pivot magnitude below which `I − τA` is treated as singular.
pub(crate) const SINGULAR_PIVOT: f64 = 1e-12;

/// `log(1 + exp(x))` without overflow.
pub fn log1p_exp(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn normal_logpdf(x: f64, mean: f64, var: f64) -> f64 {
    let r = x - mean;
    -0.5 * (LN_2PI + var.ln() + r * r / var)
}

/// Half-Cauchy density on `[0, ∞)`; `−∞` for negative `x`.
pub fn half_cauchy_logpdf(x: f64, scale: f64) -> f64 {
    if x < 0.0 {
        return f64::NEG_INFINITY;
    }
    let u = x / scale;
    (2.0 / (PI * scale)).ln() - (u * u).ln_1p()
}

/// Marginal density of the correlation under an LKJ(η) prior on a 2 × 2
/// correlation matrix: `(ρ + 1) / 2 ~ Beta(η, η)`.
pub fn lkj2_logpdf(rho: f64, eta: f64) -> f64 {
    if !(-1.0..=1.0).contains(&rho) {
        return f64::NEG_INFINITY;
    }
    let ln_beta = 2.0 * statrs::function::gamma::ln_gamma(eta) - statrs::function::gamma::ln_gamma(2.0 * eta);
    let shape = if eta == 1.0 { 0.0 } else { (eta - 1.0) * (1.0 - rho * rho).ln() };
    shape - ln_beta - (2.0 * eta - 1.0) * LN_2
}

pub fn iid_normal_loglik(residual: &[f64], sigma: f64) -> f64 {
    let n = residual.len() as f64;
    let ss: f64 = residual.iter().map(|r| r * r).sum();
    -0.5 * n * (LN_2PI + 2.0 * sigma.ln()) - ss / (2.0 * sigma * sigma)
}

fn sar_from_parts(n: usize, log_abs_det: f64, whitened_ss: f64, sigma: f64) -> f64 {
    -0.5 * n as f64 * (LN_2PI + 2.0 * sigma.ln()) + log_abs_det - whitened_ss / (2.0 * sigma * sigma)
}

fn whiten<'a>(adjacency: &'a [Vec<usize>], r: &'a [f64], tau: f64) -> impl Iterator<Item = f64> + 'a {
    adjacency
        .iter()
        .zip(r)
        .map(move |(nb, &ri)| ri - tau * nb.iter().map(|&j| r[j]).sum::<f64>())
}

/// SAR log-density of one subgraph's residuals in precision form, with
/// `M = I − τA` factorized by LU. `adjacency` uses local indices.
pub fn sar_loglik(residual: &[f64], tau: f64, sigma: f64, adjacency: &[Vec<usize>]) -> Result<f64, ModelError> {
    let n = residual.len();
    if adjacency.len() != n {
        return Err(ModelError::Shape(format!("{} residuals for {} nodes", n, adjacency.len())));
    }
    let mut m = DMatrix::<f64>::identity(n, n);
    for (i, nb) in adjacency.iter().enumerate() {
        for &j in nb {
            m[(i, j)] -= tau;
        }
    }
    let lu = m.lu();
    let u = lu.u();
    let mut log_abs_det = 0.0;
    for i in 0..n {
        let pivot = u[(i, i)].abs();
        if pivot < SINGULAR_PIVOT {
            return Err(ModelError::SingularSar { tau });
        }
        log_abs_det += pivot.ln();
    }
    let ss: f64 = whiten(adjacency, residual, tau).map(|v| v * v).sum();
    Ok(sar_from_parts(n, log_abs_det, ss, sigma))
}

/// One subgraph's adjacency with its spectrum cached, so that
/// `log|det(I − τA)| = Σ log|1 − τλ|` costs O(N) per evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct SarBlock {
    adjacency: Vec<Vec<usize>>,
    eigenvalues: Vec<f64>,
}

impl SarBlock {
    pub fn new(adjacency: Vec<Vec<usize>>) -> Self {
        let n = adjacency.len();
        let mut a = DMatrix::<f64>::zeros(n, n);
        for (i, nb) in adjacency.iter().enumerate() {
            for &j in nb {
                a[(i, j)] = 1.0;
            }
        }
        let eigenvalues = if n == 0 { Vec::new() } else { SymmetricEigen::new(a).eigenvalues.iter().copied().collect() };
        Self { adjacency, eigenvalues }
    }

    pub fn len(&self) -> usize {
        self.adjacency.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adjacency.is_empty()
    }

    pub fn adjacency(&self) -> &[Vec<usize>] {
        &self.adjacency
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// `None` when `I − τA` is numerically singular.
    pub fn log_abs_det(&self, tau: f64) -> Option<f64> {
        let mut acc = 0.0;
        for &l in &self.eigenvalues {
            let f = (1.0 - tau * l).abs();
            if f < SINGULAR_PIVOT {
                return None;
            }
            acc += f.ln();
        }
        Some(acc)
    }

    /// `M r` with `M = I − τA`.
    pub fn whiten_into(&self, r: &[f64], tau: f64, out: &mut [f64]) {
        for (o, v) in out.iter_mut().zip(whiten(&self.adjacency, r, tau)) {
            *o = v;
        }
    }

    pub fn whitened_ss(&self, r: &[f64], tau: f64) -> f64 {
        whiten(&self.adjacency, r, tau).map(|v| v * v).sum()
    }

    pub fn loglik(&self, r: &[f64], tau: f64, sigma: f64) -> Result<f64, ModelError> {
        let ld = self.log_abs_det(tau).ok_or(ModelError::SingularSar { tau })?;
        Ok(sar_from_parts(r.len(), ld, self.whitened_ss(r, tau), sigma))
    }
}

/// Bernoulli-logit log-likelihood `Σ z η − log(1 + e^η)`.
pub fn exposure_loglik(z: &[bool], eta: &[f64]) -> f64 {
    z.iter().zip(eta).map(|(&zi, &e)| if zi { e } else { 0.0 } - log1p_exp(e)).sum()
}

/// Log-density of one subgraph's random effects. JMM uses the bivariate
/// normal with covariance `cov`, LMM the univariate outcome margin and FEM
/// has no random effects.
pub fn re_logprior(b: [f64; 2], cov: [[f64; 2]; 2], kind: ModelKind) -> f64 {
    match kind {
        ModelKind::Fem => 0.0,
        ModelKind::Lmm => {
            if !(cov[0][0] > 0.0) {
                return f64::NEG_INFINITY;
            }
            normal_logpdf(b[0], 0.0, cov[0][0])
        }
        ModelKind::Jmm => {
            let det = cov[0][0] * cov[1][1] - cov[0][1] * cov[1][0];
            if !(det > 0.0) {
                return f64::NEG_INFINITY;
            }
            let q = (cov[1][1] * b[0] * b[0] - 2.0 * cov[0][1] * b[0] * b[1] + cov[0][0] * b[1] * b[1]) / det;
            -LN_2PI - 0.5 * det.ln() - 0.5 * q
        }
    }
}

/// Log prior of the parameters present in `spec`, on their constrained
/// scales.
pub fn prior_logdensity(draw: &ParamDraw, spec: &ModelSpec, priors: &PriorConfig) -> f64 {
    let v = priors.coef_prior_var;
    let mut lp: f64 = draw.beta.iter().map(|&b| normal_logpdf(b, 0.0, v)).sum();
    lp += half_cauchy_logpdf(draw.sigma_eps, priors.half_cauchy_scale);
    if spec.sar {
        let (lo, hi) = priors.tau_bounds;
        if !(lo..=hi).contains(&draw.tau) {
            return f64::NEG_INFINITY;
        }
        lp -= (hi - lo).ln();
    }
    if spec.kind.has_outcome_re() {
        lp += half_cauchy_logpdf(draw.sigma_by, priors.half_cauchy_scale);
    }
    if spec.kind.has_exposure_model() {
        lp += draw.gamma.iter().map(|&g| normal_logpdf(g, 0.0, v)).sum::<f64>();
        lp += half_cauchy_logpdf(draw.sigma_bz, priors.half_cauchy_scale);
        lp += lkj2_logpdf(draw.rho, priors.lkj_eta);
    }
    lp
}

/// The four additive pieces of the unnormalized log posterior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogPostTerms {
    pub outcome: f64,
    pub exposure: f64,
    pub random_effects: f64,
    pub prior: f64,
}

impl LogPostTerms {
    pub fn total(&self) -> f64 {
        self.outcome + self.exposure + self.random_effects + self.prior
    }

    /// Name of the first non-finite piece, if any.
    pub fn non_finite(&self) -> Option<&'static str> {
        [
            ("outcome likelihood", self.outcome),
            ("exposure likelihood", self.exposure),
            ("random-effect density", self.random_effects),
            ("prior", self.prior),
        ]
        .into_iter()
        .find(|(_, v)| !v.is_finite())
        .map(|(name, _)| name)
    }
}

pub fn log_posterior_terms(data: &FitData, draw: &ParamDraw, priors: &PriorConfig) -> LogPostTerms {
    let spec = &data.spec;
    let net = &data.network;
    let resid = data.outcome_residuals(&draw.beta, &draw.b);
    let outcome = match &data.sar_blocks {
        None => iid_normal_loglik(&resid, draw.sigma_eps),
        Some(blocks) => {
            let mut acc = 0.0;
            let mut local = Vec::new();
            for (s, block) in blocks.iter().enumerate() {
                local.clear();
                local.extend(net.members(s).iter().map(|&i| resid[i]));
                match block.loglik(&local, draw.tau, draw.sigma_eps) {
                    Ok(v) => acc += v,
                    Err(_) => {
                        acc = f64::NEG_INFINITY;
                        break;
                    }
                }
            }
            acc
        }
    };
    let exposure = if spec.kind.has_exposure_model() {
        exposure_loglik(&data.z, &data.exposure_linear(&draw.gamma, &draw.b))
    } else {
        0.0
    };
    let cov = draw.re_covariance();
    let random_effects = draw.b.iter().map(|&b| re_logprior(b, cov, spec.kind)).sum();
    let prior = prior_logdensity(draw, spec, priors);
    LogPostTerms { outcome, exposure, random_effects, prior }
}

/// Unnormalized log posterior of `(θ, b)`; `−∞` outside the support or
/// where `I − τA` is singular.
pub fn joint_logpost(data: &FitData, draw: &ParamDraw, priors: &PriorConfig) -> f64 {
    let t = log_posterior_terms(data, draw, priors).total();
    if t.is_nan() {
        f64::NEG_INFINITY
    } else {
        t
    }
}
