//! Simulation laboratory: synthetic clustered-network data with known
//! potential outcomes, ground-truth estimands and frequentist performance of
//! the fitted estimators over many replicates.

mod campaign;
mod metrics;

pub use campaign::{run_campaign, CampaignConfig, CampaignReport, MethodRun, ReplicateFit};
pub use metrics::{SimMetrics, SimTarget, TargetMetrics};

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::estimands::{EstimandError, PotentialOutcomes};
use crate::graph::{generate_network, GeneratedNetwork, GraphError, HomophilyGenConfig, SizeClass};
use crate::model::{Covariates, ModelError, NodePanel};
use crate::rng;
use crate::standardize::apo_from_tables;

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    Config(String),
    #[error("I - tau*A is singular for subgraph {0}")]
    SingularSar(usize),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Estimand(#[from] EstimandError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioName {
    Main,
    SarErrors,
    FewerSubgraphs,
    LargeReVar,
    NullEffect,
    BiexpRe,
    TruncnormOutcome,
}

impl ScenarioName {
    pub const ALL: [ScenarioName; 7] = [
        ScenarioName::Main,
        ScenarioName::SarErrors,
        ScenarioName::FewerSubgraphs,
        ScenarioName::LargeReVar,
        ScenarioName::NullEffect,
        ScenarioName::BiexpRe,
        ScenarioName::TruncnormOutcome,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ScenarioName::Main => "main",
            ScenarioName::SarErrors => "sar_errors",
            ScenarioName::FewerSubgraphs => "fewer_subgraphs",
            ScenarioName::LargeReVar => "large_re_var",
            ScenarioName::NullEffect => "null_effect",
            ScenarioName::BiexpRe => "biexp_re",
            ScenarioName::TruncnormOutcome => "truncnorm_outcome",
        }
    }
}

/// Random-intercept law of step 2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReLaw {
    Normal,
    /// Centered Kibble–Moran bivariate exponential with unit rates.
    BivariateExponential { correlation: f64 },
}

/// How individual outcomes are drawn around the systematic mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeLaw {
    /// Mean plus (possibly SAR) Gaussian errors.
    Gaussian,
    /// Truncated normal on `(lower, upper)` with the given SD.
    TruncatedNormal { lower: f64, upper: f64, sd: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: ScenarioName,
    pub rho: f64,
    pub sigma2_by: f64,
    pub sigma2_bz: f64,
    pub tau: f64,
    pub sigma2_eps: f64,
    pub size_law: Vec<SizeClass>,
    pub n_replicates: usize,
    pub seed: u64,
    pub re_law: ReLaw,
    pub outcome_law: OutcomeLaw,
    /// Include `2z + p + zp` in the outcome mean.
    pub treatment_effects: bool,
    /// Draw a fresh network for every replicate instead of once per campaign.
    pub regenerate_network: bool,
    pub network: NetworkSettings,
}

/// Tie-model settings of the network generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSettings {
    pub trait_prob: f64,
    pub baseline: crate::graph::TieBaseline,
    pub match_bonus: f64,
}

impl Default for NetworkSettings {
    fn default() -> Self {
        let g = HomophilyGenConfig::study_default(0);
        Self { trait_prob: g.trait_prob, baseline: g.baseline, match_bonus: g.match_bonus }
    }
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self::new(ScenarioName::Main, 0.0)
    }
}

/// Thirty subgraphs: twenty of order ~Poisson(35) and ten of order
/// ~Poisson(12).
pub fn thirty_subgraphs() -> Vec<SizeClass> {
    vec![SizeClass { count: 20, mean_order: 35.0 }, SizeClass { count: 10, mean_order: 12.0 }]
}

impl ScenarioConfig {
    /// Full-size settings of a named scenario: fifty subgraphs, unit
    /// variances, 500 replicates.
    pub fn new(name: ScenarioName, rho: f64) -> Self {
        let mut s = Self {
            name,
            rho,
            sigma2_by: 1.0,
            sigma2_bz: 1.0,
            tau: 0.0,
            sigma2_eps: 1.0,
            size_law: HomophilyGenConfig::study_default(0).size_law,
            n_replicates: 500,
            seed: 0,
            re_law: ReLaw::Normal,
            outcome_law: OutcomeLaw::Gaussian,
            treatment_effects: true,
            regenerate_network: false,
            network: NetworkSettings::default(),
        };
        match name {
            ScenarioName::Main => {}
            ScenarioName::SarErrors => s.tau = 0.1,
            ScenarioName::FewerSubgraphs => s.size_law = thirty_subgraphs(),
            ScenarioName::LargeReVar => {
                s.sigma2_by = 4.0;
                s.sigma2_bz = 4.0;
            }
            ScenarioName::NullEffect => s.treatment_effects = false,
            ScenarioName::BiexpRe => s.re_law = ReLaw::BivariateExponential { correlation: 0.2 },
            ScenarioName::TruncnormOutcome => {
                s.outcome_law = OutcomeLaw::TruncatedNormal { lower: -5.0, upper: 9.0, sd: 1.0 }
            }
        }
        s
    }

    /// Desk-scale variant: thirty subgraphs and 100 replicates.
    pub fn desk(name: ScenarioName, rho: f64) -> Self {
        Self { size_law: thirty_subgraphs(), n_replicates: 100, ..Self::new(name, rho) }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn m(&self) -> usize {
        self.size_law.iter().map(|c| c.count).sum()
    }

    /// Whether fitted models carry SAR errors.
    pub fn sar(&self) -> bool {
        self.tau != 0.0
    }

    pub fn check(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Config(m));
        if !(self.rho > -1.0 && self.rho < 1.0) {
            return bad(format!("rho {} outside (-1, 1)", self.rho));
        }
        if !(self.sigma2_by >= 0.0 && self.sigma2_bz >= 0.0 && self.sigma2_eps >= 0.0) {
            return bad("variances must be non-negative".into());
        }
        if !(self.tau > -1.0 && self.tau < 1.0) {
            return bad(format!("tau {} outside (-1, 1)", self.tau));
        }
        if self.n_replicates == 0 {
            return bad("n_replicates must be at least 1".into());
        }
        if let ReLaw::BivariateExponential { correlation } = self.re_law {
            if !(0.0..=1.0).contains(&correlation) {
                return bad(format!("bivariate exponential correlation {correlation} outside [0, 1]"));
            }
        }
        if let OutcomeLaw::TruncatedNormal { lower, upper, sd } = self.outcome_law {
            if !(lower < upper && sd > 0.0) {
                return bad("truncated normal needs lower < upper and sd > 0".into());
            }
        }
        Ok(())
    }

    /// Generator settings for the network of replicate `r` (or the
    /// campaign network).
    pub fn network_config(&self, replicate: Option<usize>) -> HomophilyGenConfig {
        let seed = match replicate {
            Some(r) if self.regenerate_network => rng::derive_seed(self.seed, "replicate", r as u64),
            _ => self.seed,
        };
        HomophilyGenConfig {
            size_law: self.size_law.clone(),
            trait_prob: self.network.trait_prob,
            baseline: self.network.baseline,
            match_bonus: self.network.match_bonus,
            seed,
        }
    }
}

/// One generated data set with its potential-outcome oracle.
#[derive(Debug, Clone)]
pub struct Replicate {
    pub index: usize,
    pub network: GeneratedNetwork,
    /// `x1`, `x2` and the homophily trait `h`.
    pub covariates: Covariates,
    pub oracle: Vec<PotentialOutcomes>,
    pub b: Vec<[f64; 2]>,
    pub z: Vec<bool>,
    pub y: Vec<f64>,
}

impl Replicate {
    pub fn panel(&self) -> NodePanel {
        NodePanel { y: self.y.clone(), z: self.z.clone(), covariates: self.covariates.clone() }
    }

    /// `(μ_{0α}, μ_{1α})` of the generated potential outcomes.
    pub fn apo(&self, alpha: f64) -> Result<(f64, f64), EstimandError> {
        apo_from_tables(&self.oracle, &self.network.network, alpha)
    }
}

/// Systematic outcome mean of the data-generating model, without random
/// effects or errors.
pub fn outcome_mean(z: bool, k: usize, d: usize, x1: f64, x2: f64, treatment_effects: bool) -> f64 {
    let p = if d == 0 { 0.0 } else { k as f64 / d as f64 };
    let zf = z as u8 as f64;
    let effect = if treatment_effects { 2.0 * zf + p + zf * p } else { 0.0 };
    2.0 + effect - 1.5 * x1.abs() + 2.0 * x2 - 3.0 * x1.abs() * x2
}

/// Exposure log-odds of the data-generating model.
pub fn exposure_logit(x1: f64, x2: f64, h: f64, bz: f64) -> f64 {
    0.1 + 0.2 * x1.abs() + 0.2 * x2 * x1.abs() - h + bz
}

/// Centered Kibble–Moran bivariate exponential: each margin is `E − 1` with
/// `E ~ Exp(1)` and the Pearson correlation is `correlation`.
pub fn bivariate_exponential<R: Rng + ?Sized>(correlation: f64, rng: &mut R) -> [f64; 2] {
    // (Z_j, W_j) standard bivariate normal with correlation r; the halved
    // sums of squares are unit exponentials with correlation r².
    let r = correlation.sqrt();
    let s = (1.0 - r * r).sqrt();
    let mut e = [0.0; 2];
    for _ in 0..2 {
        let a: f64 = rng.sample(StandardNormal);
        let b: f64 = rng.sample(StandardNormal);
        let w = r * a + s * b;
        e[0] += 0.5 * a * a;
        e[1] += 0.5 * w * w;
    }
    [e[0] - 1.0, e[1] - 1.0]
}

/// Inverse-CDF draw from `N(mean, sd²)` truncated to `(lower, upper)` at the
/// uniform `u`.
pub fn truncated_normal(mean: f64, sd: f64, lower: f64, upper: f64, u: f64) -> f64 {
    let n = Normal::standard();
    let (a, b) = ((lower - mean) / sd, (upper - mean) / sd);
    // Work in the upper tail when it is the better-conditioned side.
    let x = if a > 0.0 {
        let (sa, sb) = (n.sf(a), n.sf(b));
        -n.inverse_cdf(sa - u * (sa - sb))
    } else {
        let (fa, fb) = (n.cdf(a), n.cdf(b));
        n.inverse_cdf(fa + u * (fb - fa))
    };
    (mean + sd * x).clamp(lower.next_up(), upper.next_down())
}

/// Generates the campaign network for a scenario.
pub fn scenario_network(scenario: &ScenarioConfig, replicate: Option<usize>) -> Result<GeneratedNetwork, SimError> {
    scenario.check()?;
    Ok(generate_network(&scenario.network_config(replicate))?)
}

/// Steps 2–5 for replicate `r` on a given network: random intercepts,
/// errors, covariates, potential outcomes, treatment and observed outcome.
pub fn generate_replicate(
    scenario: &ScenarioConfig,
    r: usize,
    network: &GeneratedNetwork,
) -> Result<Replicate, SimError> {
    scenario.check()?;
    let net = &network.network;
    let n = net.n_nodes();
    let m = net.n_subgraphs();
    let mut rng = rng::stream(scenario.seed, "replicate", r as u64);

    let (sy, sz) = (scenario.sigma2_by.sqrt(), scenario.sigma2_bz.sqrt());
    let b: Vec<[f64; 2]> = (0..m)
        .map(|_| match scenario.re_law {
            ReLaw::Normal => {
                let u: f64 = rng.sample(StandardNormal);
                let v: f64 = rng.sample(StandardNormal);
                let rho = scenario.rho;
                [sy * u, sz * (rho * u + (1.0 - rho * rho).sqrt() * v)]
            }
            ReLaw::BivariateExponential { correlation } => {
                let e = bivariate_exponential(correlation, &mut rng);
                [sy * e[0], sz * e[1]]
            }
        })
        .collect();

    let sigma = scenario.sigma2_eps.sqrt();
    let mut delta = vec![0.0; n];
    for s in 0..m {
        let mem = net.members(s);
        let eps: Vec<f64> = (0..mem.len()).map(|_| sigma * rng.sample::<f64, _>(StandardNormal)).collect();
        let d = if scenario.tau == 0.0 { eps } else { sar_solve(net.block_adjacency(s), scenario.tau, eps).ok_or(SimError::SingularSar(s))? };
        for (k, &i) in mem.iter().enumerate() {
            delta[i] = d[k];
        }
    }

    let x1: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let x2: Vec<f64> = (0..n).map(|_| rng.random_bool(0.5) as u8 as f64).collect();
    let h: Vec<f64> = network.trait_h.iter().map(|&t| t as u8 as f64).collect();

    // One uniform per node keeps the truncated-normal table coherent across
    // cells.
    let uniforms: Vec<f64> = match scenario.outcome_law {
        OutcomeLaw::TruncatedNormal { .. } => (0..n).map(|_| rng.random::<f64>()).collect(),
        OutcomeLaw::Gaussian => Vec::new(),
    };
    let oracle: Vec<PotentialOutcomes> = (0..n)
        .map(|i| {
            let d = net.degree(i);
            let by = b[net.subgraph_of(i)][0];
            let cell = |z: bool, k: usize| {
                let mean = outcome_mean(z, k, d, x1[i], x2[i], scenario.treatment_effects) + by;
                match scenario.outcome_law {
                    OutcomeLaw::Gaussian => mean + delta[i],
                    OutcomeLaw::TruncatedNormal { lower, upper, sd } => truncated_normal(mean, sd, lower, upper, uniforms[i]),
                }
            };
            PotentialOutcomes { untreated: (0..=d).map(|k| cell(false, k)).collect(), treated: (0..=d).map(|k| cell(true, k)).collect() }
        })
        .collect();

    let z: Vec<bool> = (0..n)
        .map(|i| {
            let eta = exposure_logit(x1[i], x2[i], h[i], b[net.subgraph_of(i)][1]);
            rng.random_bool(1.0 / (1.0 + (-eta).exp()))
        })
        .collect();
    let k = net.treated_neighbor_counts(&z);
    let y: Vec<f64> = (0..n).map(|i| oracle[i].get(z[i], k[i])).collect();

    let covariates = Covariates::new().with("x1", x1)?.with("x2", x2)?.with("h", h)?;
    Ok(Replicate { index: r, network: network.clone(), covariates, oracle, b, z, y })
}

/// Solves `(I − τA) x = rhs` for one block.
fn sar_solve(adjacency: Vec<Vec<usize>>, tau: f64, rhs: Vec<f64>) -> Option<Vec<f64>> {
    let k = adjacency.len();
    let mut m = DMatrix::<f64>::identity(k, k);
    for (i, nb) in adjacency.iter().enumerate() {
        for &j in nb {
            m[(i, j)] -= tau;
        }
    }
    let lu = m.lu();
    let pivots_ok = (0..k).all(|i| lu.u()[(i, i)].abs() >= 1e-12);
    if !pivots_ok {
        return None;
    }
    lu.solve(&nalgebra::DVector::from_vec(rhs)).map(|v| v.iter().copied().collect())
}

/// True `(μ_{0α}, μ_{1α})` at every grid point: replicate-level APOs of the
/// generated potential outcomes averaged over replicates.
pub fn true_estimands(replicates: &[Replicate], alpha_grid: &[f64]) -> Result<Vec<(f64, f64)>, SimError> {
    let per: Vec<Vec<(f64, f64)>> = replicates
        .iter()
        .map(|r| alpha_grid.iter().map(|&a| r.apo(a)).collect::<Result<Vec<_>, _>>())
        .collect::<Result<_, _>>()?;
    Ok(average_truth(&per, alpha_grid.len()))
}

pub(crate) fn average_truth(per: &[Vec<(f64, f64)>], g: usize) -> Vec<(f64, f64)> {
    let r = per.len() as f64;
    (0..g)
        .map(|a| {
            let s0: f64 = per.iter().map(|p| p[a].0).sum();
            let s1: f64 = per.iter().map(|p| p[a].1).sum();
            (s0 / r, s1 / r)
        })
        .collect()
}

/// Truth at every grid point from a fresh set of generation-only
/// replicates, without keeping them in memory.
pub fn truth_by_generation(scenario: &ScenarioConfig, alpha_grid: &[f64]) -> Result<Vec<(f64, f64)>, SimError> {
    use rayon::prelude::*;
    let fixed = if scenario.regenerate_network { None } else { Some(scenario_network(scenario, None)?) };
    let per: Vec<Vec<(f64, f64)>> = (0..scenario.n_replicates)
        .into_par_iter()
        .map(|r| {
            let net = match &fixed {
                Some(n) => n.clone(),
                None => scenario_network(scenario, Some(r))?,
            };
            let rep = generate_replicate(scenario, r, &net)?;
            alpha_grid.iter().map(|&a| rep.apo(a).map_err(SimError::from)).collect()
        })
        .collect::<Result<_, SimError>>()?;
    Ok(average_truth(&per, alpha_grid.len()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(name: ScenarioName, rho: f64) -> ScenarioConfig {
        ScenarioConfig {
            size_law: vec![SizeClass { count: 6, mean_order: 20.0 }],
            n_replicates: 5,
            ..ScenarioConfig::new(name, rho)
        }
        .with_seed(11)
    }

    #[test]
    fn outcome_and_exposure_substitutions() {
        assert_eq!(outcome_mean(true, 4, 4, 0.0, 0.0, true), 6.0);
        let p = 1.0 / (1.0 + (-exposure_logit(0.0, 0.0, 0.0, 0.0)).exp());
        assert!((p - 0.524_979_187_478_939_9).abs() < 1e-15);
        assert_eq!(outcome_mean(false, 0, 0, 0.0, 0.0, true), 2.0);
    }

    #[test]
    fn scenario_overrides() {
        assert_eq!(ScenarioConfig::new(ScenarioName::SarErrors, 0.2).tau, 0.1);
        assert_eq!(ScenarioConfig::new(ScenarioName::FewerSubgraphs, 0.2).m(), 30);
        assert_eq!(ScenarioConfig::new(ScenarioName::Main, 0.2).m(), 50);
        assert_eq!(ScenarioConfig::new(ScenarioName::LargeReVar, 0.2).sigma2_by, 4.0);
        assert!(!ScenarioConfig::new(ScenarioName::NullEffect, 0.2).treatment_effects);
        assert!(ScenarioConfig::new(ScenarioName::SarErrors, 0.2).sar());
        assert!(ScenarioConfig { rho: 1.0, ..ScenarioConfig::default() }.check().is_err());
    }

    #[test]
    fn observed_outcomes_are_consistent_with_the_oracle() {
        for name in ScenarioName::ALL {
            let sc = small(name, 0.5);
            let net = scenario_network(&sc, None).unwrap();
            let rep = generate_replicate(&sc, 0, &net).unwrap();
            let k = net.network.treated_neighbor_counts(&rep.z);
            for i in 0..rep.y.len() {
                assert_eq!(rep.y[i], rep.oracle[i].get(rep.z[i], k[i]), "{}", name.label());
                assert_eq!(rep.oracle[i].degree(), net.network.degree(i));
            }
        }
    }

    #[test]
    fn null_effect_tables_are_flat() {
        let sc = small(ScenarioName::NullEffect, 0.2);
        let net = scenario_network(&sc, None).unwrap();
        let rep = generate_replicate(&sc, 1, &net).unwrap();
        for t in &rep.oracle {
            let first = t.untreated[0];
            assert!(t.untreated.iter().chain(&t.treated).all(|&v| v == first));
        }
    }

    #[test]
    fn deterministic_outcomes_give_analytic_truth() {
        let mut sc = small(ScenarioName::Main, 0.0);
        sc.sigma2_by = 0.0;
        sc.sigma2_bz = 0.0;
        sc.sigma2_eps = 0.0;
        let net = scenario_network(&sc, None).unwrap();
        let rep = generate_replicate(&sc, 0, &net).unwrap();
        let truth = true_estimands(std::slice::from_ref(&rep), &[0.7]).unwrap()[0];
        let g = &net.network;
        let x1 = rep.covariates.column("x1").unwrap();
        let x2 = rep.covariates.column("x2").unwrap();
        let mut mu = [0.0; 2];
        for s in 0..g.n_subgraphs() {
            let mem = g.members(s);
            for (z, out) in mu.iter_mut().enumerate() {
                let acc: f64 = mem
                    .iter()
                    .map(|&i| {
                        // E[p] = α for non-isolates.
                        let p = if g.degree(i) == 0 { 0.0 } else { 0.7 };
                        let zf = z as f64;
                        2.0 + 2.0 * zf + p + zf * p - 1.5 * x1[i].abs() + 2.0 * x2[i] - 3.0 * x1[i].abs() * x2[i]
                    })
                    .sum();
                *out += acc / mem.len() as f64;
            }
        }
        let m = g.n_subgraphs() as f64;
        assert!((truth.0 - mu[0] / m).abs() < 1e-12);
        assert!((truth.1 - mu[1] / m).abs() < 1e-12);
    }

    #[test]
    fn treated_share_is_lower_when_h_is_one() {
        let sc = ScenarioConfig { n_replicates: 20, ..small(ScenarioName::Main, 0.0) };
        let net = scenario_network(&sc, None).unwrap();
        let (mut t, mut c) = ([0.0f64; 2], [0.0f64; 2]);
        for r in 0..sc.n_replicates {
            let rep = generate_replicate(&sc, r, &net).unwrap();
            for (i, &z) in rep.z.iter().enumerate() {
                let h = net.trait_h[i] as usize;
                c[h] += 1.0;
                t[h] += z as u8 as f64;
            }
        }
        let (p0, p1) = (t[0] / c[0], t[1] / c[1]);
        let se = (p0 * (1.0 - p0) / c[0] + p1 * (1.0 - p1) / c[1]).sqrt();
        assert!(p0 - p1 > 3.0 * se, "p0 {p0} p1 {p1} se {se}");
    }

    #[test]
    fn bivariate_exponential_moments() {
        let mut rng = rng::stream(3, "test", 0);
        let n = 10_000;
        let draws: Vec<[f64; 2]> = (0..n).map(|_| bivariate_exponential(0.2, &mut rng)).collect();
        let mean = |j: usize| draws.iter().map(|d| d[j]).sum::<f64>() / n as f64;
        let (m0, m1) = (mean(0), mean(1));
        let cov = |a: usize, b: usize, ma: f64, mb: f64| draws.iter().map(|d| (d[a] - ma) * (d[b] - mb)).sum::<f64>() / (n - 1) as f64;
        let corr = cov(0, 1, m0, m1) / (cov(0, 0, m0, m0) * cov(1, 1, m1, m1)).sqrt();
        // Unit variance, so 3 SEs of the mean is 0.03.
        assert!(m0.abs() < 0.03 && m1.abs() < 0.03, "{m0} {m1}");
        assert!((corr - 0.2).abs() < 0.05, "{corr}");
        assert!((cov(0, 0, m0, m0) - 1.0).abs() < 0.1);
        assert!(draws.iter().all(|d| d[0] >= -1.0 && d[1] >= -1.0));
    }

    #[test]
    fn truncated_normal_stays_inside_and_matches_moments() {
        let mut rng = rng::stream(4, "test", 0);
        for &mean in &[-20.0, -5.0, 0.0, 3.0, 9.0, 30.0] {
            for _ in 0..2000 {
                let v = truncated_normal(mean, 1.0, -5.0, 9.0, rng.random());
                assert!(v > -5.0 && v < 9.0, "{v} at mean {mean}");
            }
        }
        for u in [0.0, 1.0, 1e-300, 1.0 - 1e-16] {
            let v = truncated_normal(8.9, 1.0, -5.0, 9.0, u);
            assert!(v > -5.0 && v < 9.0);
        }
        // Symmetric truncation keeps the mean; one-sided truncation at the
        // mean gives the half-normal mean sqrt(2/π).
        let n = 20_000;
        let sym: f64 = (0..n).map(|_| truncated_normal(2.0, 1.0, 0.0, 4.0, rng.random())).sum::<f64>() / n as f64;
        assert!((sym - 2.0).abs() < 0.02);
        let half: f64 = (0..n).map(|_| truncated_normal(0.0, 1.0, 0.0, 50.0, rng.random())).sum::<f64>() / n as f64;
        assert!((half - (2.0 / std::f64::consts::PI).sqrt()).abs() < 0.02, "{half}");
    }

    #[test]
    fn truncnorm_tables_share_one_uniform() {
        let sc = small(ScenarioName::TruncnormOutcome, 0.2);
        let net = scenario_network(&sc, None).unwrap();
        let rep = generate_replicate(&sc, 0, &net).unwrap();
        // Monotone mean in k for z = 1 implies monotone draws under a shared
        // uniform.
        for t in &rep.oracle {
            assert!(t.treated.windows(2).all(|w| w[1] >= w[0]));
            assert!(t.untreated.iter().chain(&t.treated).all(|v| *v > -5.0 && *v < 9.0));
        }
    }

    #[test]
    fn replicates_are_reproducible_and_distinct() {
        let sc = small(ScenarioName::SarErrors, 0.2);
        let net = scenario_network(&sc, None).unwrap();
        let a = generate_replicate(&sc, 2, &net).unwrap();
        let b = generate_replicate(&sc, 2, &net).unwrap();
        let c = generate_replicate(&sc, 3, &net).unwrap();
        assert_eq!(a.y, b.y);
        assert_ne!(a.y, c.y);
        let regen = ScenarioConfig { regenerate_network: true, ..sc.clone() };
        assert_ne!(regen.network_config(Some(0)).seed, regen.network_config(Some(1)).seed);
        assert_eq!(sc.network_config(Some(0)).seed, sc.network_config(Some(1)).seed);
    }
}
