use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{SimMetrics, SimTarget, TargetMetrics};
use super::{average_truth, generate_replicate, scenario_network, ScenarioConfig, SimError};
use crate::estimands::Summary;
use crate::model::{FitData, ModelKind, ModelSpec, PriorConfig};
use crate::rng;
use crate::sampler::{run_mcmc, SamplerConfig};
use crate::standardize::{standardize, StandardizeConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CampaignConfig {
    pub scenario: ScenarioConfig,
    pub methods: Vec<ModelKind>,
    pub sampler: SamplerConfig,
    pub standardize: StandardizeConfig,
    pub priors: PriorConfig,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioConfig::default(),
            methods: vec![ModelKind::Jmm, ModelKind::Lmm, ModelKind::Fem],
            sampler: SamplerConfig::desk(0),
            standardize: StandardizeConfig::default(),
            priors: PriorConfig::default(),
        }
    }
}

impl CampaignConfig {
    pub fn new(scenario: ScenarioConfig, methods: Vec<ModelKind>) -> Self {
        Self { scenario, methods, ..Self::default() }
    }

    pub fn check(&self) -> Result<(), SimError> {
        self.scenario.check()?;
        if self.methods.is_empty() {
            return Err(SimError::Config("no methods to evaluate".into()));
        }
        self.sampler.check().map_err(|e| SimError::Config(e.to_string()))?;
        self.standardize.check().map_err(|e| SimError::Config(e.to_string()))?;
        self.priors.check().map_err(|e| SimError::Config(e.to_string()))?;
        Ok(())
    }

    /// Fitted model for a method: the simulation specification with SAR
    /// errors exactly when the scenario generates them.
    pub fn spec(&self, method: ModelKind) -> ModelSpec {
        ModelSpec::simulation(method, self.scenario.sar())
    }
}

/// Posterior summaries of one method on one replicate, aligned with the
/// report's targets.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateFit {
    pub replicate: usize,
    pub summaries: Vec<Summary>,
    pub max_rhat: Option<f64>,
    pub healthy: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodRun {
    pub method: ModelKind,
    pub fits: Vec<ReplicateFit>,
    /// Replicates whose fit failed, with the reason.
    pub excluded: Vec<(usize, String)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignReport {
    pub scenario: ScenarioConfig,
    pub alpha_grid: Vec<f64>,
    pub targets: Vec<SimTarget>,
    /// True `(μ_{0α}, μ_{1α})` per grid point, averaged over all generated
    /// replicates.
    pub truth: Vec<(f64, f64)>,
    pub runs: Vec<MethodRun>,
    pub metrics: Vec<SimMetrics>,
}

struct ReplicateOutcome {
    apo: Vec<(f64, f64)>,
    fits: Vec<Result<ReplicateFit, String>>,
}

fn fit_one(
    config: &CampaignConfig,
    rep: &super::Replicate,
    method_index: usize,
    targets: &[SimTarget],
) -> Result<ReplicateFit, String> {
    let method = config.methods[method_index];
    let spec = config.spec(method);
    let fit_seed = rng::derive_seed(rng::derive_seed(config.scenario.seed, "replicate", rep.index as u64), "fit", method_index as u64);
    let data = FitData::new(&spec, &rep.network.network, &rep.panel()).map_err(|e| e.to_string())?;
    let sampler = SamplerConfig { seed: fit_seed, ..config.sampler.clone() };
    let post = run_mcmc(&data, &config.priors, &sampler).map_err(|e| e.to_string())?;
    let st = StandardizeConfig { seed: fit_seed, ..config.standardize.clone() };
    let est = standardize(&post.draws, &rep.network.network, &rep.covariates, &spec, &st).map_err(|e| e.to_string())?;
    let summaries = targets
        .iter()
        .map(|t| t.values(&est).map(|v| Summary::of(&v)))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    let max_rhat = post.diagnostics.max_rhat();
    if !post.diagnostics.healthy() {
        log::warn!("replicate {} {}: max R-hat {:?}", rep.index, method.label(), max_rhat);
    }
    Ok(ReplicateFit { replicate: rep.index, summaries, max_rhat, healthy: post.diagnostics.healthy() })
}

/// Runs every replicate of a scenario, fits each method and evaluates the
/// standardized estimators against the generated truth. Replicates run in
/// parallel; results are folded in replicate order.
pub fn run_campaign(config: &CampaignConfig) -> Result<CampaignReport, SimError> {
    config.check()?;
    let sc = &config.scenario;
    let grid = config.standardize.alpha_grid.clone();
    let targets = SimTarget::all(&grid);
    let fixed = if sc.regenerate_network { None } else { Some(scenario_network(sc, None)?) };

    let outcomes: Vec<ReplicateOutcome> = (0..sc.n_replicates)
        .into_par_iter()
        .map(|r| {
            let net = match &fixed {
                Some(n) => n.clone(),
                None => scenario_network(sc, Some(r))?,
            };
            let rep = generate_replicate(sc, r, &net)?;
            let apo = grid.iter().map(|&a| rep.apo(a)).collect::<Result<Vec<_>, _>>()?;
            let fits = (0..config.methods.len()).map(|j| fit_one(config, &rep, j, &targets)).collect();
            log::info!("{} replicate {r} done", sc.name.label());
            Ok(ReplicateOutcome { apo, fits })
        })
        .collect::<Result<_, SimError>>()?;

    let per: Vec<Vec<(f64, f64)>> = outcomes.iter().map(|o| o.apo.clone()).collect();
    let truth = average_truth(&per, grid.len());
    let mut runs: Vec<MethodRun> =
        config.methods.iter().map(|&method| MethodRun { method, fits: Vec::new(), excluded: Vec::new() }).collect();
    for (r, o) in outcomes.into_iter().enumerate() {
        for (j, f) in o.fits.into_iter().enumerate() {
            match f {
                Ok(fit) => runs[j].fits.push(fit),
                Err(e) => {
                    log::warn!("replicate {r} {} excluded: {e}", runs[j].method.label());
                    runs[j].excluded.push((r, e));
                }
            }
        }
    }
    let metrics = runs.iter().map(|run| method_metrics(run, &targets, &grid, &truth)).collect();
    Ok(CampaignReport { scenario: sc.clone(), alpha_grid: grid, targets, truth, runs, metrics })
}

fn method_metrics(run: &MethodRun, targets: &[SimTarget], grid: &[f64], truth: &[(f64, f64)]) -> SimMetrics {
    let targets = targets
        .iter()
        .enumerate()
        .map(|(t, &target)| {
            let a = grid.iter().position(|&g| g == target.alpha()).expect("target on grid");
            let s: Vec<Summary> = run.fits.iter().map(|f| f.summaries[t]).collect();
            TargetMetrics::of(target, target.truth(truth[a]), &s)
        })
        .collect();
    SimMetrics { method: run.method, targets }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

impl CampaignReport {
    pub fn metrics_for(&self, method: ModelKind) -> Option<&SimMetrics> {
        self.metrics.iter().find(|m| m.method == method)
    }

    pub fn truth_of(&self, target: SimTarget) -> Option<f64> {
        let a = self.alpha_grid.iter().position(|&g| g == target.alpha())?;
        Some(target.truth(self.truth[a]))
    }

    /// Full metric table: one row per method and target.
    pub fn write_metrics<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        self.write_rows(&mut w, |_| true)
    }

    /// The classic layout: `μ_{0,0.7}`, `μ_{1,0.7}` and `DE(0.7)` per method.
    pub fn write_table2<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        self.write_rows(&mut w, |t| t.alpha() == 0.7)
    }

    fn write_rows<W: Write>(&self, w: &mut W, keep: impl Fn(&SimTarget) -> bool) -> std::io::Result<()> {
        writeln!(w, "scenario\trho\tmethod\testimand\ttruth\tmean_estimate\tRB\tASD\tESD\tECP\tn")?;
        for m in &self.metrics {
            for t in m.targets.iter().filter(|t| keep(&t.target)) {
                writeln!(
                    w,
                    "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                    self.scenario.name.label(),
                    self.scenario.rho,
                    m.method.label(),
                    t.target,
                    t.truth,
                    t.mean_estimate,
                    fmt_opt(t.rb),
                    t.asd,
                    t.esd,
                    t.ecp,
                    t.n
                )?;
            }
        }
        Ok(())
    }

    /// Dose-response data: per method and α, truth and average estimate of
    /// both APOs and the direct effect, with average interval bounds.
    pub fn write_curves<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "method\talpha\ttruth_mu0\tmean_mu0\ttruth_mu1\tmean_mu1\ttruth_de\tmean_de\tmean_lower_de\tmean_upper_de")?;
        for (run, m) in self.runs.iter().zip(&self.metrics) {
            for (a, &alpha) in self.alpha_grid.iter().enumerate() {
                let get = |t: SimTarget| m.get(t).expect("target present");
                let de_idx = self.targets.iter().position(|&t| t == SimTarget::De(alpha)).expect("target present");
                let n = run.fits.len() as f64;
                let (lo, hi) = run
                    .fits
                    .iter()
                    .fold((0.0, 0.0), |(l, u), f| (l + f.summaries[de_idx].lower, u + f.summaries[de_idx].upper));
                writeln!(
                    w,
                    "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                    run.method.label(),
                    alpha,
                    self.truth[a].0,
                    get(SimTarget::Mu0(alpha)).mean_estimate,
                    self.truth[a].1,
                    get(SimTarget::Mu1(alpha)).mean_estimate,
                    self.truth[a].1 - self.truth[a].0,
                    get(SimTarget::De(alpha)).mean_estimate,
                    lo / n,
                    hi / n
                )?;
            }
        }
        Ok(())
    }

    /// Per-replicate fits and exclusions.
    pub fn write_replicates<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "method\treplicate\tstatus\tmax_rhat")?;
        for t in &self.targets {
            write!(w, "\t{t}_mean\t{t}_sd\t{t}_lower\t{t}_upper")?;
        }
        writeln!(w)?;
        for run in &self.runs {
            for f in &run.fits {
                let status = if f.healthy { "ok" } else { "unhealthy" };
                write!(w, "{}\t{}\t{}\t{}", run.method.label(), f.replicate, status, fmt_opt(f.max_rhat))?;
                for s in &f.summaries {
                    write!(w, "\t{}\t{}\t{}\t{}", s.mean, s.sd, s.lower, s.upper)?;
                }
                writeln!(w)?;
            }
            for (r, e) in &run.excluded {
                writeln!(w, "{}\t{}\texcluded: {}\tNA", run.method.label(), r, e.replace(['\t', '\n'], " "))?;
            }
        }
        Ok(())
    }
}
