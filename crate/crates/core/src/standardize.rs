//! Bayesian standardization: per posterior draw, impute every node's
//! potential outcomes `ỹ(z, k)`, weight them by the allocation `π(k; d, α)`
//! and average within and then across subgraphs.
//!
//! Within one draw the same Monte Carlo random effects and errors are reused
//! for every `(z, k)` cell. The outcome model is additive in the treatment
//! terms, so the imputed table is `baseline_i + noise_i + T(z, k, d_i)` and
//! the population average factorizes into a node part and a per-degree part.
//! The average of `B` independent `N(0, v)` replicates is drawn directly as
//! one `N(0, v / B)` variate, which has the same distribution.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::estimands::{EstimandError, EstimandPosterior, PotentialOutcomes, WeightTable};
use crate::graph::ClusteredNetwork;
use crate::model::{Covariates, ModelError, ModelSpec, OutcomeDesign, ParamDraw};
use crate::rng;

#[derive(Debug, thiserror::Error)]
pub enum StandardizeError {
    #[error("invalid standardization configuration: {0}")]
    Config(String),
    #[error("I - tau*A is singular for this network at tau = {tau}")]
    SingularSar { tau: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Estimand(#[from] EstimandError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StandardizeConfig {
    pub alpha_grid: Vec<f64>,
    /// Monte Carlo replicates `B` for marginalizing random effects and
    /// errors.
    pub n_mc: usize,
    /// Sample fresh errors `δ̃`.
    pub include_noise: bool,
    /// Integrate the random effects analytically (they add zero to every
    /// mean) instead of sampling them.
    pub closed_form_random_effects: bool,
    pub seed: u64,
}

pub fn default_alpha_grid() -> Vec<f64> {
    (1..=9).map(|i| i as f64 / 10.0).collect()
}

impl Default for StandardizeConfig {
    fn default() -> Self {
        Self {
            alpha_grid: default_alpha_grid(),
            n_mc: 50,
            include_noise: true,
            closed_form_random_effects: false,
            seed: 0,
        }
    }
}

impl StandardizeConfig {
    pub fn check(&self) -> Result<(), StandardizeError> {
        if self.n_mc == 0 {
            return Err(StandardizeError::Config("n_mc must be at least 1".into()));
        }
        if self.alpha_grid.is_empty() {
            return Err(StandardizeError::Config("alpha_grid is empty".into()));
        }
        if let Some(a) = self.alpha_grid.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
            return Err(StandardizeError::Config(format!("alpha {a} outside (0, 1)")));
        }
        Ok(())
    }
}

/// Population averages from per-node potential-outcome tables: returns
/// `(μ_{0α}, μ_{1α})`.
pub fn apo_from_tables(
    tables: &[PotentialOutcomes],
    network: &ClusteredNetwork,
    alpha: f64,
) -> Result<(f64, f64), EstimandError> {
    if tables.len() != network.n_nodes() {
        return Err(EstimandError::Shape(format!("{} tables for {} nodes", tables.len(), network.n_nodes())));
    }
    let w = WeightTable::new(network.max_degree(), alpha)?;
    let m = network.n_subgraphs();
    let mut out = [0.0; 2];
    for s in 0..m {
        let mem = network.members(s);
        if mem.is_empty() {
            return Err(EstimandError::EmptySubgraph(s));
        }
        for (z, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for &i in mem {
                let d = network.degree(i);
                let levels = tables[i].levels(z == 1);
                if levels.len() != d + 1 {
                    return Err(EstimandError::MissingLevel { degree: d, got: levels.len() });
                }
                acc += levels.iter().zip(w.weights(d)).map(|(y, p)| y * p).sum::<f64>();
            }
            *o += acc / mem.len() as f64;
        }
    }
    Ok((out[0] / m as f64, out[1] / m as f64))
}

/// Everything about a network and covariate panel that standardization
/// needs, computed once and reused for every draw.
pub struct Standardizer {
    spec: ModelSpec,
    config: StandardizeConfig,
    design: OutcomeDesign,
    network: ClusteredNetwork,
    w: Vec<f64>,
    /// `1 / (m N_ν)` for every node.
    node_weight: Vec<f64>,
    /// Total node weight of each degree.
    degree_weight: Vec<f64>,
    weights: Vec<WeightTable>,
    /// Spectral decompositions of the SAR blocks.
    eigen: Option<Vec<SymmetricEigen<f64, nalgebra::Dyn>>>,
}

impl Standardizer {
    pub fn new(
        spec: &ModelSpec,
        network: &ClusteredNetwork,
        covariates: &Covariates,
        config: &StandardizeConfig,
    ) -> Result<Self, StandardizeError> {
        config.check()?;
        spec.check(network)?;
        let n = network.n_nodes();
        let m = network.n_subgraphs();
        if m == 0 {
            return Err(EstimandError::Shape("network has no subgraphs".into()).into());
        }
        let design = OutcomeDesign::new(spec, covariates, n)?;
        let w = match &spec.outcome_re_design {
            None => vec![1.0; n],
            Some(c) => covariates.column(c).ok_or_else(|| ModelError::MissingCovariate(c.clone()))?.to_vec(),
        };
        let mut node_weight = vec![0.0; n];
        let mut degree_weight = vec![0.0; network.max_degree() + 1];
        for s in 0..m {
            let mem = network.members(s);
            if mem.is_empty() {
                return Err(EstimandError::EmptySubgraph(s).into());
            }
            for &i in mem {
                node_weight[i] = 1.0 / (m as f64 * mem.len() as f64);
                degree_weight[network.degree(i)] += node_weight[i];
            }
        }
        let weights = config
            .alpha_grid
            .iter()
            .map(|&a| WeightTable::new(network.max_degree(), a))
            .collect::<Result<_, _>>()?;
        let eigen = spec.sar.then(|| {
            (0..m)
                .map(|s| {
                    let adj = network.block_adjacency(s);
                    let k = adj.len();
                    let mut a = DMatrix::<f64>::zeros(k, k);
                    for (i, nb) in adj.iter().enumerate() {
                        for &j in nb {
                            a[(i, j)] = 1.0;
                        }
                    }
                    SymmetricEigen::new(a)
                })
                .collect()
        });
        Ok(Self {
            spec: spec.clone(),
            config: config.clone(),
            design,
            network: network.clone(),
            w,
            node_weight,
            degree_weight,
            weights,
            eigen,
        })
    }

    pub fn config(&self) -> &StandardizeConfig {
        &self.config
    }

    /// Monte Carlo average of `W_i b̃ + δ̃_i` for every node, for draw index
    /// `s`.
    pub fn mc_noise(&self, draw: &ParamDraw, s: usize) -> Result<Vec<f64>, StandardizeError> {
        let n = self.network.n_nodes();
        let mut noise = vec![0.0; n];
        let sample_re = self.spec.kind.has_outcome_re() && !self.config.closed_form_random_effects;
        if !self.config.include_noise && !sample_re {
            return Ok(noise);
        }
        let mut rng = rng::stream(self.config.seed, "standardize", s as u64);
        let root_b = (self.config.n_mc as f64).sqrt();
        let tau = if self.spec.sar { draw.tau } else { 0.0 };
        for sg in 0..self.network.n_subgraphs() {
            let mem = self.network.members(sg);
            let b_tilde = if sample_re { draw.sigma_by * rng.sample::<f64, _>(StandardNormal) / root_b } else { 0.0 };
            if self.config.include_noise {
                let eps: Vec<f64> =
                    (0..mem.len()).map(|_| draw.sigma_eps * rng.sample::<f64, _>(StandardNormal) / root_b).collect();
                let delta = match &self.eigen {
                    Some(eig) if tau != 0.0 => solve_sar(&eig[sg], tau, &eps)?,
                    _ => eps,
                };
                for (k, &i) in mem.iter().enumerate() {
                    noise[i] += delta[k];
                }
            }
            for &i in mem {
                noise[i] += self.w[i] * b_tilde;
            }
        }
        Ok(noise)
    }

    /// Imputed potential-outcome table `ỹ(z, k)`, `k = 0..=d`, for every node.
    pub fn impute(&self, draw: &ParamDraw, s: usize) -> Result<Vec<PotentialOutcomes>, StandardizeError> {
        let noise = self.mc_noise(draw, s)?;
        Ok((0..self.network.n_nodes())
            .map(|i| {
                let d = self.network.degree(i);
                let base = self.design.baseline(i, &draw.beta) + noise[i];
                let row = |z: bool| (0..=d).map(|k| base + self.design.treatment_effect(z, k, d, &draw.beta)).collect();
                PotentialOutcomes { untreated: row(false), treated: row(true) }
            })
            .collect())
    }

    /// `(μ_{0α}, μ_{1α})` at every grid point for one draw.
    pub fn draw_mu(&self, draw: &ParamDraw, s: usize) -> Result<Vec<(f64, f64)>, StandardizeError> {
        let noise = self.mc_noise(draw, s)?;
        let node_part: f64 = (0..self.network.n_nodes())
            .map(|i| self.node_weight[i] * (self.design.baseline(i, &draw.beta) + noise[i]))
            .sum();
        Ok(self
            .weights
            .iter()
            .map(|wt| {
                let mut mu = [node_part; 2];
                for (d, &dw) in self.degree_weight.iter().enumerate() {
                    if dw == 0.0 {
                        continue;
                    }
                    let pi = wt.weights(d);
                    for (z, m) in mu.iter_mut().enumerate() {
                        let t: f64 = (0..=d).map(|k| pi[k] * self.design.treatment_effect(z == 1, k, d, &draw.beta)).sum();
                        *m += dw * t;
                    }
                }
                (mu[0], mu[1])
            })
            .collect())
    }

    /// Standardizes every draw; draw `s` uses the sub-stream `s`.
    pub fn run(&self, draws: &[ParamDraw]) -> Result<EstimandPosterior, StandardizeError> {
        let per_draw: Vec<Vec<(f64, f64)>> =
            draws.par_iter().enumerate().map(|(s, d)| self.draw_mu(d, s)).collect::<Result<_, _>>()?;
        let g = self.config.alpha_grid.len();
        let mut mu0 = vec![Vec::with_capacity(draws.len()); g];
        let mut mu1 = vec![Vec::with_capacity(draws.len()); g];
        for row in &per_draw {
            for (a, &(m0, m1)) in row.iter().enumerate() {
                mu0[a].push(m0);
                mu1[a].push(m1);
            }
        }
        Ok(EstimandPosterior::new(self.config.alpha_grid.clone(), mu0, mu1)?)
    }
}

/// Solves `(I − τA) x = b` through the cached spectrum.
fn solve_sar(eig: &SymmetricEigen<f64, nalgebra::Dyn>, tau: f64, b: &[f64]) -> Result<Vec<f64>, StandardizeError> {
    let q = &eig.eigenvectors;
    let mut y = q.transpose() * DVector::from_column_slice(b);
    for (k, l) in eig.eigenvalues.iter().enumerate() {
        let f = 1.0 - tau * l;
        if f.abs() < 1e-12 {
            return Err(StandardizeError::SingularSar { tau });
        }
        y[k] /= f;
    }
    Ok((q * y).iter().copied().collect())
}

/// Imputes the potential-outcome tables of one draw.
pub fn impute_potential_outcomes(
    draw: &ParamDraw,
    network: &ClusteredNetwork,
    covariates: &Covariates,
    spec: &ModelSpec,
    config: &StandardizeConfig,
    draw_index: usize,
) -> Result<Vec<PotentialOutcomes>, StandardizeError> {
    Standardizer::new(spec, network, covariates, config)?.impute(draw, draw_index)
}

/// Standardizes posterior draws into average potential outcomes on the
/// configured allocation grid.
pub fn standardize(
    draws: &[ParamDraw],
    network: &ClusteredNetwork,
    covariates: &Covariates,
    spec: &ModelSpec,
    config: &StandardizeConfig,
) -> Result<EstimandPosterior, StandardizeError> {
    Standardizer::new(spec, network, covariates, config)?.run(draws)
}
