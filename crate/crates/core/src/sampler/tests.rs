use rand::Rng;
use rand_distr::StandardNormal;

use super::*;
use crate::graph::ClusteredNetwork;
use crate::model::{Covariates, ModelKind, NodePanel, Term, TreatmentTerms};

fn no_treatment() -> TreatmentTerms {
    TreatmentTerms { direct: false, spillover: None, interaction: None }
}

fn edgeless(subgraph_of: Vec<usize>) -> ClusteredNetwork {
    ClusteredNetwork::from_edges(subgraph_of, &[]).unwrap()
}

fn small_config(seed: u64) -> SamplerConfig {
    SamplerConfig { n_chains: 2, n_burnin: 500, n_keep: 500, thin: 1, seed, ..SamplerConfig::default() }
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn sd(x: &[f64]) -> f64 {
    let m = mean(x);
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64).sqrt()
}

#[test]
fn conjugate_intercept_with_known_sigma() {
    let n = 400;
    let sigma = 2.0;
    let mut rng = rng::stream(1, "test", 0);
    let y: Vec<f64> = (0..n).map(|_| 3.0 + sigma * rng.sample::<f64, _>(StandardNormal)).collect();
    let net = edgeless(vec![0; n]);
    let spec = ModelSpec { kind: ModelKind::Fem, treatment: no_treatment(), ..ModelSpec::default() };
    let panel = NodePanel { y: y.clone(), z: vec![false; n], covariates: Covariates::new() };
    let data = FitData::new(&spec, &net, &panel).unwrap();
    let priors = PriorConfig { coef_prior_var: 1e12, ..PriorConfig::default() };
    let cfg = SamplerConfig { fixed_sigma_eps: Some(sigma), n_chains: 4, ..small_config(2) };
    let post = run_mcmc(&data, &priors, &cfg).unwrap();
    let b0 = post.values("beta_0").unwrap();
    assert!(post.draws.iter().all(|d| d.sigma_eps == sigma));
    let s = b0.len() as f64;
    let (target_mean, target_sd) = (mean(&y), sigma / (n as f64).sqrt());
    // β is drawn exactly, so the draws are independent.
    assert!((mean(&b0) - target_mean).abs() < 3.0 * target_sd / s.sqrt(), "{}", mean(&b0));
    let sd_se = target_sd / (2.0 * (s - 1.0)).sqrt();
    assert!((sd(&b0) - target_sd).abs() < 3.0 * sd_se, "{}", sd(&b0));
}

/// Maximum-likelihood logistic regression by Newton iterations.
fn irls(x: &[[f64; 2]], z: &[bool]) -> [f64; 2] {
    let mut b = [0.0; 2];
    for _ in 0..50 {
        let mut g = [0.0; 2];
        let mut h = [0.0; 4];
        for (xi, &zi) in x.iter().zip(z) {
            let eta = b[0] * xi[0] + b[1] * xi[1];
            let p = 1.0 / (1.0 + (-eta).exp());
            let r = zi as u8 as f64 - p;
            for j in 0..2 {
                g[j] += r * xi[j];
                for k in 0..2 {
                    h[j * 2 + k] += p * (1.0 - p) * xi[j] * xi[k];
                }
            }
        }
        let det = h[0] * h[3] - h[1] * h[2];
        b[0] += (h[3] * g[0] - h[1] * g[1]) / det;
        b[1] += (-h[2] * g[0] + h[0] * g[1]) / det;
    }
    b
}

#[test]
fn logistic_slope_matches_maximum_likelihood() {
    let n = 3000;
    let mut rng = rng::stream(3, "test", 0);
    let x: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let z: Vec<bool> = x.iter().map(|&v| rng.random::<f64>() < 1.0 / (1.0 + (-(0.8 * v)).exp())).collect();
    let y: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let net = edgeless(vec![0; n]);
    // The single subgraph's b^z plays the role of the exposure intercept.
    let spec = ModelSpec {
        kind: ModelKind::Jmm,
        treatment: no_treatment(),
        exposure_intercept: false,
        exposure_terms: vec!["x".parse::<Term>().unwrap()],
        ..ModelSpec::default()
    };
    let panel = NodePanel { y, z: z.clone(), covariates: Covariates::new().with("x", x.clone()).unwrap() };
    let data = FitData::new(&spec, &net, &panel).unwrap();
    let post = run_mcmc(&data, &PriorConfig::default(), &small_config(4)).unwrap();
    let rows: Vec<[f64; 2]> = x.iter().map(|&v| [1.0, v]).collect();
    let mle = irls(&rows, &z);
    let slope = mean(&post.values("gamma_0").unwrap());
    assert!((slope - mle[1]).abs() < 0.05, "posterior {slope} vs MLE {}", mle[1]);
}

#[test]
fn empty_data_recovers_priors() {
    let net = edgeless(Vec::new());
    let spec = ModelSpec { kind: ModelKind::Jmm, treatment: no_treatment(), ..ModelSpec::default() };
    let panel = NodePanel { y: Vec::new(), z: Vec::new(), covariates: Covariates::new() };
    let data = FitData::new(&spec, &net, &panel).unwrap();
    let cfg = SamplerConfig { n_chains: 4, n_burnin: 2000, n_keep: 5000, thin: 2, seed: 5, ..SamplerConfig::default() };
    let post = run_mcmc(&data, &PriorConfig::default(), &cfg).unwrap();
    let mut sig = post.values("sigma_eps").unwrap();
    sig.sort_by(f64::total_cmp);
    let median = sig[sig.len() / 2];
    // The sampler's ESS bounds how far the sample median of a Half-Cauchy(25)
    // can drift; use a generous three-SE band on the log scale.
    let ess = post.diagnostics.params.iter().find(|p| p.name == "sigma_eps").unwrap().ess.unwrap();
    let log_se = std::f64::consts::PI / 2.0 / ess.sqrt();
    assert!((median.ln() - 25f64.ln()).abs() < 3.0 * log_se, "median {median}, ess {ess}");
    let rho = post.values("rho").unwrap();
    let rho_ess = post.diagnostics.params.iter().find(|p| p.name == "rho").unwrap().ess.unwrap();
    let rho_se = (1.0 / 3.0f64).sqrt() / rho_ess.sqrt();
    assert!(mean(&rho).abs() < 3.0 * rho_se, "rho mean {}", mean(&rho));
    let below_half = rho.iter().filter(|&&r| r < -0.5).count() as f64 / rho.len() as f64;
    assert!((below_half - 0.25).abs() < 0.06, "P(rho < -0.5) {below_half}");
    let beta = post.values("beta_0").unwrap();
    assert!((sd(&beta) - 10.0).abs() < 1.5, "prior sd of beta {}", sd(&beta));
}

fn grouped_dataset(seed: u64, m: usize, per: usize) -> (ClusteredNetwork, NodePanel) {
    let mut rng = rng::stream(seed, "test", 1);
    let n = m * per;
    let sub: Vec<usize> = (0..n).map(|i| i / per).collect();
    let b: Vec<f64> = (0..m).map(|_| 0.7 * rng.sample::<f64, _>(StandardNormal)).collect();
    let bz: Vec<f64> = b.iter().map(|v| v + 0.7 * rng.sample::<f64, _>(StandardNormal)).collect();
    let x: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let z: Vec<bool> =
        (0..n).map(|i| rng.random::<f64>() < 1.0 / (1.0 + (-(0.3 * x[i] + bz[i / per])).exp())).collect();
    let y: Vec<f64> = (0..n)
        .map(|i| 1.0 + 2.0 * z[i] as u8 as f64 + 0.5 * x[i] + b[sub[i]] + rng.sample::<f64, _>(StandardNormal))
        .collect();
    let degree_two: Vec<(usize, usize)> = (0..n).filter(|i| i % per + 1 < per).map(|i| (i, i + 1)).collect();
    let net = ClusteredNetwork::from_edges(sub, &degree_two).unwrap();
    let panel = NodePanel { y, z, covariates: Covariates::new().with("x", x).unwrap() };
    (net, panel)
}

fn grouped_spec(kind: ModelKind, sar: bool) -> ModelSpec {
    ModelSpec {
        kind,
        sar,
        outcome_terms: vec!["x".parse().unwrap()],
        exposure_terms: vec!["x".parse().unwrap()],
        ..ModelSpec::default()
    }
}

#[test]
fn reruns_are_bitwise_identical_and_adaptation_freezes() {
    let (net, panel) = grouped_dataset(6, 10, 8);
    let data = FitData::new(&grouped_spec(ModelKind::Jmm, true), &net, &panel).unwrap();
    let cfg = SamplerConfig { n_burnin: 300, n_keep: 100, thin: 2, ..small_config(7) };
    let a = run_mcmc(&data, &PriorConfig::default(), &cfg).unwrap();
    let b = run_mcmc(&data, &PriorConfig::default(), &cfg).unwrap();
    assert_eq!(a.draws, b.draws);
    assert_eq!(a.iter, b.iter);
    assert!(a.adaptation_frozen());
    assert_eq!(a.len(), cfg.n_chains * cfg.n_keep);
    assert!(a.draws.iter().all(|d| d.check().is_ok() && d.tau.abs() < 1.0));
    let mut out = Vec::new();
    a.write_draws(&mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    let header = text.lines().next().unwrap();
    assert!(header.starts_with("chain\titer\tbeta_0"));
    assert!(header.contains("\ttau\t") && header.ends_with("bz_9"));
    assert_eq!(text.lines().count(), a.len() + 1);
    let c = SamplerConfig { seed: 8, ..cfg };
    assert_ne!(run_mcmc(&data, &PriorConfig::default(), &c).unwrap().draws, a.draws);
}

#[test]
fn grouped_fits_recover_coefficients() {
    let (net, panel) = grouped_dataset(9, 30, 10);
    for kind in [ModelKind::Jmm, ModelKind::Lmm, ModelKind::Fem] {
        let data = FitData::new(&grouped_spec(kind, false), &net, &panel).unwrap();
        let cfg = SamplerConfig { n_burnin: 1000, n_keep: 500, thin: 2, ..small_config(10) };
        let post = run_mcmc(&data, &PriorConfig::default(), &cfg).unwrap();
        let x = mean(&post.values("beta_4").unwrap());
        assert!((x - 0.5).abs() < 0.2, "{kind:?} beta_x {x}");
        // Treatment is confounded by the subgraph effects, so only the
        // models with random intercepts recover β_Z.
        let z = mean(&post.values("beta_1").unwrap());
        if kind != ModelKind::Fem {
            assert!((z - 2.0).abs() < 0.3, "{kind:?} beta_z {z}");
            let s = mean(&post.values("sigma_by").unwrap());
            assert!((0.3..1.3).contains(&s), "{kind:?} sigma_by {s}");
        }
        assert!(post.diagnostics.healthy(), "{kind:?} {:?}", post.diagnostics);
        let acc = post.acceptance_rates();
        assert!(acc.iter().all(|(_, r)| (0.05..=1.0).contains(r)), "{acc:?}");
    }
}

#[test]
fn noiseless_data_initializes_at_generating_beta() {
    let n = 50;
    let mut rng = rng::stream(11, "test", 0);
    let x: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let y: Vec<f64> = x.iter().map(|v| 1.5 - 0.75 * v).collect();
    let spec = ModelSpec {
        kind: ModelKind::Fem,
        treatment: no_treatment(),
        outcome_terms: vec!["x".parse().unwrap()],
        ..ModelSpec::default()
    };
    let panel = NodePanel { y, z: vec![false; n], covariates: Covariates::new().with("x", x).unwrap() };
    let data = FitData::new(&spec, &edgeless(vec![0; n]), &panel).unwrap();
    let d = base_init(&data);
    assert!((d.beta[0] - 1.5).abs() < 1e-6 && (d.beta[1] + 0.75).abs() < 1e-6);
    assert_eq!(d.sigma_eps, 1e-6);
}

#[test]
fn constant_outcome_hits_sigma_floor_and_rank_deficiency_uses_ridge() {
    let n = 20;
    // Two identical columns make the design singular.
    let spec = ModelSpec {
        kind: ModelKind::Lmm,
        treatment: no_treatment(),
        outcome_terms: vec!["a".parse().unwrap(), "a".parse().unwrap()],
        ..ModelSpec::default()
    };
    let a: Vec<f64> = (0..n).map(|i| i as f64).collect();
    let panel = NodePanel { y: vec![4.0; n], z: vec![false; n], covariates: Covariates::new().with("a", a).unwrap() };
    let data = FitData::new(&spec, &edgeless(vec![0; n]), &panel).unwrap();
    let d = base_init(&data);
    assert!(d.beta.iter().all(|b| b.is_finite()));
    assert!((d.beta[0] - 4.0).abs() < 1e-3);
    assert_eq!(d.sigma_eps, 1e-6);
    assert_eq!(d.sigma_by, 0.5);
}

#[test]
fn chains_start_from_distinct_points() {
    let (net, panel) = grouped_dataset(12, 5, 6);
    let data = FitData::new(&grouped_spec(ModelKind::Jmm, false), &net, &panel).unwrap();
    let starts: Vec<ParamDraw> = (0..4).map(|c| initialize(&data, 99, c)).collect();
    for i in 0..4 {
        for j in i + 1..4 {
            assert_ne!(starts[i].beta, starts[j].beta);
        }
    }
    assert_eq!(initialize(&data, 99, 2), starts[2]);
}

#[test]
fn invalid_configs_are_rejected() {
    let (net, panel) = grouped_dataset(13, 2, 3);
    let data = FitData::new(&grouped_spec(ModelKind::Fem, false), &net, &panel).unwrap();
    for cfg in [
        SamplerConfig { thin: 0, ..SamplerConfig::default() },
        SamplerConfig { n_chains: 0, ..SamplerConfig::default() },
        SamplerConfig { target_accept: 1.5, ..SamplerConfig::default() },
    ] {
        assert!(matches!(run_mcmc(&data, &PriorConfig::default(), &cfg), Err(SamplerError::Config(_))));
    }
}
