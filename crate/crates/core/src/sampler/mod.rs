//! Posterior simulation by adaptive Metropolis-within-Gibbs.
//!
//! One sweep updates, in order:
//!
//! 1. β from its exact Gaussian full conditional;
//! 2. γ by an adaptive multivariate random walk (JMM only);
//! 3. `(log σ_ε, τ)` by a random walk, `τ` only with SAR errors;
//! 4. `(log σ_by, log σ_bz, atanh ρ)` by a random walk with Jacobian terms;
//! 5. each `(b^y_ν, b^z_ν)` by a bivariate random walk followed by an exact
//!    draw of `b^y_ν` given `b^z_ν` (LMM draws `b^y_ν` exactly);
//! 6. an exact shift along the intercept/random-effect ridge.
//!
//! Proposal scales adapt during burn-in only and are frozen afterwards.

mod chain;
pub mod diagnostics;
mod kernel;

pub use diagnostics::{bulk_ess, split_rhat, Diagnostics, ParamDiagnostics, RHAT_THRESHOLD};
pub use kernel::RandomWalk;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::{log_posterior_terms, FitData, ModelError, ModelSpec, ParamDraw, PriorConfig};
use crate::rng;

#[derive(Debug, thiserror::Error)]
pub enum SamplerError {
    #[error("invalid sampler configuration: {0}")]
    Config(String),
    #[error("chain {chain}: non-finite {term} at the initial values")]
    NonFiniteInit { chain: usize, term: &'static str },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub n_chains: usize,
    pub n_burnin: usize,
    pub n_keep: usize,
    pub thin: usize,
    /// Iterations between proposal-shape refreshes during burn-in.
    pub adapt_window: usize,
    /// Target acceptance of multivariate random-walk blocks.
    pub target_accept: f64,
    /// Target acceptance of scalar random-walk blocks.
    pub target_accept_scalar: f64,
    pub seed: u64,
    /// Holds σ_ε at a known value instead of sampling it.
    pub fixed_sigma_eps: Option<f64>,
    /// Compute R-hat and ESS for the per-subgraph random effects as well.
    pub diagnose_random_effects: bool,
}

impl Default for SamplerConfig {
    /// Four chains, 10 000 burn-in iterations, thinning by 50.
    fn default() -> Self {
        Self {
            n_chains: 4,
            n_burnin: 10_000,
            n_keep: 500,
            thin: 50,
            adapt_window: 100,
            target_accept: 0.3,
            target_accept_scalar: 0.44,
            seed: 0,
            fixed_sigma_eps: None,
            diagnose_random_effects: false,
        }
    }
}

impl SamplerConfig {
    /// Desk-scale run: 4 chains × 500 retained draws after 2000 burn-in
    /// iterations, thinning by 4.
    pub fn desk(seed: u64) -> Self {
        Self { n_burnin: 2000, n_keep: 500, thin: 4, seed, ..Self::default() }
    }

    pub fn total_iterations(&self) -> usize {
        self.n_burnin + self.n_keep * self.thin
    }

    pub fn check(&self) -> Result<(), SamplerError> {
        let bad = |m: &str| Err(SamplerError::Config(m.to_string()));
        if self.n_chains == 0 {
            return bad("n_chains must be at least 1");
        }
        if self.thin == 0 {
            return bad("thin must be at least 1");
        }
        if self.n_keep == 0 {
            return bad("n_keep must be at least 1");
        }
        if self.adapt_window == 0 {
            return bad("adapt_window must be at least 1");
        }
        for t in [self.target_accept, self.target_accept_scalar] {
            if !(t > 0.0 && t < 1.0) {
                return bad("target acceptance rates must lie in (0, 1)");
            }
        }
        if let Some(s) = self.fixed_sigma_eps {
            if !(s > 0.0) {
                return bad("fixed_sigma_eps must be positive");
            }
        }
        Ok(())
    }
}

/// Per-chain acceptance rates after burn-in and proposal fingerprints at the
/// freeze and at the end of the run.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainReport {
    pub acceptance: Vec<(String, f64)>,
    pub frozen_fingerprint: Vec<f64>,
    pub final_fingerprint: Vec<f64>,
}

impl ChainReport {
    pub fn adaptation_frozen(&self) -> bool {
        self.frozen_fingerprint == self.final_fingerprint
    }
}

#[derive(Debug, Clone)]
pub struct PosteriorDraws {
    pub spec: ModelSpec,
    pub n_chains: usize,
    /// Retained draws, chain by chain.
    pub draws: Vec<ParamDraw>,
    pub chain: Vec<usize>,
    /// Iteration (1-based, counting burn-in) at which each draw was kept.
    pub iter: Vec<usize>,
    pub chains: Vec<ChainReport>,
    pub diagnostics: Diagnostics,
}

impl PosteriorDraws {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    /// Names of the scalar parameters present in the model, in column
    /// order: `beta_j`, `gamma_j`, `sigma_eps`, `tau`, `sigma_by`,
    /// `sigma_bz`, `rho`.
    pub fn scalar_names(&self) -> Vec<String> {
        scalar_names(&self.spec, self.draws.first())
    }

    /// Scalar parameter values of one draw in [`Self::scalar_names`] order.
    pub fn scalar_values(&self, draw: &ParamDraw) -> Vec<f64> {
        scalar_values(&self.spec, draw)
    }

    /// Per-chain traces of scalar parameter `j`.
    pub fn traces(&self, j: usize) -> Vec<Vec<f64>> {
        let mut out = vec![Vec::new(); self.n_chains];
        for (d, &c) in self.draws.iter().zip(&self.chain) {
            out[c].push(self.scalar_values(d)[j]);
        }
        out
    }

    /// Values of scalar parameter `name` across all draws.
    pub fn values(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.scalar_names().iter().position(|n| n == name)?;
        Some(self.draws.iter().map(|d| self.scalar_values(d)[j]).collect())
    }

    /// Mean acceptance rate of each block across chains.
    pub fn acceptance_rates(&self) -> Vec<(String, f64)> {
        let Some(first) = self.chains.first() else { return Vec::new() };
        first
            .acceptance
            .iter()
            .enumerate()
            .map(|(k, (name, _))| {
                let mean = self.chains.iter().map(|c| c.acceptance[k].1).sum::<f64>() / self.chains.len() as f64;
                (name.clone(), mean)
            })
            .collect()
    }

    pub fn adaptation_frozen(&self) -> bool {
        self.chains.iter().all(|c| c.adaptation_frozen())
    }

    /// Tab-separated draws: `chain iter` then every scalar parameter and
    /// the random effects `by_ν`, `bz_ν` present in the model.
    pub fn write_draws<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        let kind = self.spec.kind;
        let m = self.draws.first().map_or(0, |d| d.b.len());
        let mut header = vec!["chain".to_string(), "iter".to_string()];
        header.extend(self.scalar_names());
        if kind.has_outcome_re() {
            header.extend((0..m).map(|s| format!("by_{s}")));
        }
        if kind.has_exposure_model() {
            header.extend((0..m).map(|s| format!("bz_{s}")));
        }
        writeln!(w, "{}", header.join("\t"))?;
        for ((d, c), it) in self.draws.iter().zip(&self.chain).zip(&self.iter) {
            let mut row = vec![c.to_string(), it.to_string()];
            row.extend(self.scalar_values(d).iter().map(|v| v.to_string()));
            if kind.has_outcome_re() {
                row.extend(d.b.iter().map(|b| b[0].to_string()));
            }
            if kind.has_exposure_model() {
                row.extend(d.b.iter().map(|b| b[1].to_string()));
            }
            writeln!(w, "{}", row.join("\t"))?;
        }
        Ok(())
    }
}

fn scalar_names(spec: &ModelSpec, first: Option<&ParamDraw>) -> Vec<String> {
    let nb = first.map_or(spec.n_beta(), |d| d.beta.len());
    let ng = first.map_or(spec.n_gamma(), |d| d.gamma.len());
    let mut names: Vec<String> = (0..nb).map(|j| format!("beta_{j}")).collect();
    names.extend((0..ng).map(|j| format!("gamma_{j}")));
    names.push("sigma_eps".into());
    if spec.sar {
        names.push("tau".into());
    }
    if spec.kind.has_outcome_re() {
        names.push("sigma_by".into());
    }
    if spec.kind.has_exposure_model() {
        names.push("sigma_bz".into());
        names.push("rho".into());
    }
    names
}

fn scalar_values(spec: &ModelSpec, d: &ParamDraw) -> Vec<f64> {
    let mut v = d.beta.clone();
    v.extend_from_slice(&d.gamma);
    v.push(d.sigma_eps);
    if spec.sar {
        v.push(d.tau);
    }
    if spec.kind.has_outcome_re() {
        v.push(d.sigma_by);
    }
    if spec.kind.has_exposure_model() {
        v.push(d.sigma_bz);
        v.push(d.rho);
    }
    v
}

/// Least-squares β on the observed design (ridge 1e−6 if rank deficient),
/// γ = 0, residual σ_ε floored at 1e−6, τ = 0, σ_b = 0.5, ρ = 0, b = 0.
fn base_init(data: &FitData) -> ParamDraw {
    let spec = &data.spec;
    let (n, p) = (data.n_nodes(), data.n_beta());
    let mut xtx = vec![0.0; p * p];
    let mut xty = vec![0.0; p];
    for i in 0..n {
        let row = data.x_row(i);
        for j in 0..p {
            xty[j] += row[j] * data.y[i];
            for k in 0..p {
                xtx[j * p + k] += row[j] * row[k];
            }
        }
    }
    let max_diag = (0..p).map(|j| xtx[j * p + j]).fold(0.0, f64::max);
    let full_rank = kernel::cholesky(&xtx, p).filter(|l| {
        (0..p).all(|j| l[j * p + j] * l[j * p + j] > 1e-10 * max_diag.max(f64::MIN_POSITIVE))
    });
    let l = match full_rank {
        Some(l) => l,
        None => {
            if n > 0 {
                log::warn!("outcome design is rank deficient; initializing beta with a 1e-6 ridge");
            }
            for j in 0..p {
                xtx[j * p + j] += 1e-6;
            }
            kernel::cholesky(&xtx, p).expect("ridge makes the Gram matrix positive definite")
        }
    };
    let beta = chain::backward(&l, p, &chain::forward(&l, p, &xty));
    let sigma_eps = if n < 2 {
        1.0
    } else {
        let ss: f64 = (0..n).map(|i| (data.y[i] - data.fixed_mean(i, &beta)).powi(2)).sum();
        (ss / (n - 1) as f64).sqrt().max(1e-6)
    };
    let mut draw = ParamDraw::zeros(spec, data.n_subgraphs());
    draw.beta = beta;
    draw.sigma_eps = sigma_eps;
    if spec.kind.has_outcome_re() {
        draw.sigma_by = 0.5;
    }
    if spec.kind.has_exposure_model() {
        draw.sigma_bz = 0.5;
    }
    draw
}

/// Starting values of chain `chain`: [`base_init`] with N(0, 0.1²) jitter on
/// β, γ and the log scales, from the chain's own `jitter` stream.
pub fn initialize(data: &FitData, seed: u64, chain: usize) -> ParamDraw {
    let mut d = base_init(data);
    let mut rng = rng::stream(seed, "jitter", chain as u64);
    let mut jit = || 0.1 * rng.sample::<f64, _>(StandardNormal);
    for b in d.beta.iter_mut() {
        *b += jit();
    }
    for g in d.gamma.iter_mut() {
        *g += jit();
    }
    d.sigma_eps *= jit().exp();
    if data.spec.kind.has_outcome_re() {
        d.sigma_by *= jit().exp();
    }
    if data.spec.kind.has_exposure_model() {
        d.sigma_bz *= jit().exp();
    }
    d
}

struct ChainOutput {
    draws: Vec<ParamDraw>,
    iters: Vec<usize>,
    report: ChainReport,
}

fn run_chain(
    pc: &chain::Precomp<'_>,
    data: &FitData,
    priors: &PriorConfig,
    cfg: &SamplerConfig,
    c: usize,
) -> Result<ChainOutput, SamplerError> {
    let mut init = initialize(data, cfg.seed, c);
    if let Some(s) = cfg.fixed_sigma_eps {
        init.sigma_eps = s;
    }
    let terms = log_posterior_terms(data, &init, priors);
    if let Some(term) = terms.non_finite() {
        return Err(SamplerError::NonFiniteInit { chain: c, term });
    }
    let mut ch = chain::Chain::new(pc, priors, cfg, init, rng::stream(cfg.seed, "chain", c as u64));
    for t in 1..=cfg.n_burnin {
        ch.sweep()?;
        if t % cfg.adapt_window == 0 {
            ch.end_window();
        }
    }
    let frozen = ch.freeze();
    let mut draws = Vec::with_capacity(cfg.n_keep);
    let mut iters = Vec::with_capacity(cfg.n_keep);
    for k in 1..=cfg.n_keep * cfg.thin {
        ch.sweep()?;
        if k % cfg.thin == 0 {
            draws.push(ch.draw().clone());
            iters.push(cfg.n_burnin + k);
        }
    }
    let report = ch.report(frozen);
    debug_assert!(report.adaptation_frozen());
    Ok(ChainOutput { draws, iters, report })
}

/// Runs `n_chains` chains and merges them in chain order. Deterministic in
/// `config.seed`.
pub fn run_mcmc(data: &FitData, priors: &PriorConfig, config: &SamplerConfig) -> Result<PosteriorDraws, SamplerError> {
    config.check()?;
    priors.check()?;
    let pc = chain::Precomp::new(data);
    let outputs: Vec<Result<ChainOutput, SamplerError>> =
        (0..config.n_chains).into_par_iter().map(|c| run_chain(&pc, data, priors, config, c)).collect();
    let mut draws = Vec::new();
    let mut chain_idx = Vec::new();
    let mut iter = Vec::new();
    let mut chains = Vec::new();
    for (c, out) in outputs.into_iter().enumerate() {
        let out = out?;
        chain_idx.extend(std::iter::repeat_n(c, out.draws.len()));
        draws.extend(out.draws);
        iter.extend(out.iters);
        chains.push(out.report);
    }
    let mut post = PosteriorDraws {
        spec: data.spec.clone(),
        n_chains: config.n_chains,
        draws,
        chain: chain_idx,
        iter,
        chains,
        diagnostics: Diagnostics::default(),
    };
    post.diagnostics = compute_diagnostics(&post, config.diagnose_random_effects);
    Ok(post)
}

/// Split R-hat and bulk ESS of every scalar parameter, optionally also of
/// the random effects.
pub fn compute_diagnostics(post: &PosteriorDraws, random_effects: bool) -> Diagnostics {
    let names = post.scalar_names();
    let mut params: Vec<ParamDiagnostics> =
        names.iter().enumerate().map(|(j, n)| ParamDiagnostics::of(n.clone(), &post.traces(j))).collect();
    if random_effects {
        let m = post.draws.first().map_or(0, |d| d.b.len());
        let comps: &[(usize, &str)] = match post.spec.kind {
            crate::model::ModelKind::Jmm => &[(0, "by"), (1, "bz")],
            crate::model::ModelKind::Lmm => &[(0, "by")],
            crate::model::ModelKind::Fem => &[],
        };
        for &(k, label) in comps {
            for s in 0..m {
                let mut tr = vec![Vec::new(); post.n_chains];
                for (d, &c) in post.draws.iter().zip(&post.chain) {
                    tr[c].push(d.b[s][k]);
                }
                params.push(ParamDiagnostics::of(format!("{label}_{s}"), &tr));
            }
        }
    }
    let bad = params.iter().filter(|p| p.rhat.is_some_and(|r| !(r <= RHAT_THRESHOLD))).count();
    if bad > 0 {
        log::warn!("{bad} parameters have split R-hat above {RHAT_THRESHOLD}");
    }
    Diagnostics { params }
}

#[cfg(test)]
mod tests;
