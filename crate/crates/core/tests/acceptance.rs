//! Acceptance suite. Runs every criterion in order, prints one line per
//! criterion and exits non-zero if any fails.

use std::fs;
use std::path::Path;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use netjmm::cli::{run, RunOptions};
use netjmm::estimands::{allocation_weights, Contrast, EstimandPosterior, PotentialOutcomes};
use netjmm::graph::{ClusteredNetwork, SizeClass};
use netjmm::model::{iid_normal_loglik, sar_loglik, Covariates, FitData, ModelKind, ModelSpec, NodePanel, PriorConfig, Term, TreatmentTerms};
use netjmm::rng::stream;
use netjmm::sampler::{bulk_ess, run_mcmc, SamplerConfig};
use netjmm::simlab::{
    generate_replicate, run_campaign, scenario_network, truth_by_generation, CampaignConfig, CampaignReport, ScenarioConfig,
    ScenarioName, SimTarget,
};
use netjmm::standardize::{apo_from_tables, standardize, Standardizer, StandardizeConfig};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn sd(x: &[f64]) -> f64 {
    let m = mean(x);
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64).sqrt()
}

// ---------------------------------------------------------------------------
// 1. Estimand identities

fn check_identities(post: &EstimandPosterior, worst: &mut f64) -> bool {
    let mut ok = true;
    for &a in post.alpha_grid() {
        let (m0, m1, mm) = (post.mu(false, a).unwrap(), post.mu(true, a).unwrap(), post.mu_marginal(a).unwrap());
        for s in 0..post.n_draws() {
            let e = (mm[s] - (a * m1[s] + (1.0 - a) * m0[s])).abs();
            *worst = worst.max(e);
            ok &= e <= 1e-12;
        }
        ok &= post.contrast(Contrast::Indirect, a, a).unwrap().iter().all(|&v| v == 0.0);
        ok &= post.contrast(Contrast::Overall, a, a).unwrap().iter().all(|&v| v == 0.0);
        for &b in post.alpha_grid() {
            let te = post.contrast(Contrast::Total, a, b).unwrap();
            let de = post.contrast(Contrast::Direct, a, a).unwrap();
            let ie = post.contrast(Contrast::Indirect, a, b).unwrap();
            ok &= te.iter().zip(de.iter().zip(&ie)).all(|(t, (d, i))| *t == d + i);
        }
    }
    ok
}

fn criterion_1() -> Outcome {
    let mut runs = 0;
    let mut worst = 0.0f64;
    let mut ok = true;
    for (seed, name, kind) in [
        (1, ScenarioName::Main, ModelKind::Jmm),
        (2, ScenarioName::SarErrors, ModelKind::Lmm),
        (3, ScenarioName::Main, ModelKind::Fem),
    ] {
        let sc = ScenarioConfig { size_law: vec![SizeClass { count: 10, mean_order: 20.0 }], ..ScenarioConfig::new(name, 0.4) }
            .with_seed(seed);
        let net = scenario_network(&sc, None).unwrap();
        let rep = generate_replicate(&sc, 0, &net).unwrap();
        let spec = ModelSpec::simulation(kind, sc.sar());
        let data = FitData::new(&spec, &net.network, &rep.panel()).unwrap();
        let cfg = SamplerConfig { n_chains: 2, n_burnin: 300, n_keep: 100, thin: 1, seed, ..SamplerConfig::default() };
        let post = run_mcmc(&data, &PriorConfig::default(), &cfg).unwrap();
        for include_noise in [true, false] {
            let st = StandardizeConfig { include_noise, seed, ..StandardizeConfig::default() };
            let est = standardize(&post.draws, &net.network, &rep.covariates, &spec, &st).unwrap();
            ok &= check_identities(&est, &mut worst);
            runs += 1;
        }
    }
    outcome(ok, format!("{runs} standardization runs; TE = DE + IE exact, IE(a,a) = OE(a,a) = 0, max |mu_a - mix| = {worst:.1e}"))
}

// ---------------------------------------------------------------------------
// 2. Allocation-weight normalization

fn criterion_2() -> Outcome {
    let mut worst = 0.0f64;
    for d in 0..=200 {
        for a in 1..=99 {
            let w = allocation_weights(d, a as f64 / 100.0).unwrap();
            worst = worst.max((w.iter().sum::<f64>() - 1.0).abs());
        }
    }
    outcome(worst <= 1e-12, format!("max |sum_k pi(k; d, a) - 1| = {worst:.2e} over d <= 200, a in 0.01..0.99"))
}

// ---------------------------------------------------------------------------
// 3. Count-indexed APO against enumeration of all neighbor assignments

fn random_graph(seed: u64) -> ClusteredNetwork {
    let mut rng = stream(seed, "acceptance-graph", 0);
    let m = rng.random_range(1..5);
    let mut sub = Vec::new();
    let mut edges = Vec::new();
    for s in 0..m {
        let first = sub.len();
        let size = rng.random_range(2..12);
        sub.extend(std::iter::repeat_n(s, size));
        for i in first..sub.len() {
            for j in i + 1..sub.len() {
                if rng.random_bool(0.45) {
                    edges.push((i, j));
                }
            }
        }
    }
    loop {
        let net = ClusteredNetwork::from_edges(sub.clone(), &edges).unwrap();
        if net.max_degree() <= 10 {
            return net;
        }
        edges.remove(rng.random_range(0..edges.len()));
    }
}

/// `μ_{zα}` by summing over every `z_N ∈ {0,1}^d` for every node.
fn enumerate_apo(net: &ClusteredNetwork, y: &dyn Fn(usize, bool, &[bool]) -> f64, alpha: f64) -> (f64, f64) {
    let m = net.n_subgraphs();
    let mut out = [0.0; 2];
    for s in 0..m {
        let mem = net.members(s);
        for (z, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for &i in mem {
                let d = net.degree(i);
                let mut assign = vec![false; d];
                for mask in 0u32..(1 << d) {
                    for (j, a) in assign.iter_mut().enumerate() {
                        *a = mask >> j & 1 == 1;
                    }
                    let k = mask.count_ones() as i32;
                    acc += alpha.powi(k) * (1.0 - alpha).powi(d as i32 - k) * y(i, z == 1, &assign);
                }
            }
            *o += acc / mem.len() as f64;
        }
    }
    (out[0] / m as f64, out[1] / m as f64)
}

fn criterion_3() -> Outcome {
    let mut worst = 0.0f64;
    let mut max_deg = 0;
    for g in 0..50u64 {
        let net = random_graph(g);
        max_deg = max_deg.max(net.max_degree());
        let mut rng = stream(g, "acceptance-tables", 0);
        // Arbitrary count-indexed tables.
        let tables: Vec<PotentialOutcomes> = (0..net.n_nodes())
            .map(|i| {
                let d = net.degree(i);
                PotentialOutcomes {
                    untreated: (0..=d).map(|_| rng.random_range(-5.0..5.0)).collect(),
                    treated: (0..=d).map(|_| rng.random_range(-5.0..5.0)).collect(),
                }
            })
            .collect();
        // The model's own imputation with errors and random effects off.
        let n = net.n_nodes();
        let cov = Covariates::new()
            .with("x1", (0..n).map(|_| rng.sample(StandardNormal)).collect())
            .unwrap()
            .with("x2", (0..n).map(|_| rng.random_bool(0.5) as u8 as f64).collect())
            .unwrap();
        let spec = ModelSpec::simulation(ModelKind::Jmm, false);
        let mut draw = netjmm::model::ParamDraw::zeros(&spec, net.n_subgraphs());
        draw.beta = (0..spec.n_beta()).map(|_| rng.random_range(-3.0..3.0)).collect();
        let x1 = cov.column("x1").unwrap().to_vec();
        let x2 = cov.column("x2").unwrap().to_vec();
        let b = draw.beta.clone();
        let model_y = move |i: usize, z: bool, nb: &[bool]| {
            let k = nb.iter().filter(|&&t| t).count() as f64;
            let p = if nb.is_empty() { 0.0 } else { k / nb.len() as f64 };
            let zf = z as u8 as f64;
            b[0] + b[1] * zf + b[2] * p + b[3] * zf * p + b[4] * x1[i].abs() + b[5] * x2[i] + b[6] * x1[i].abs() * x2[i]
        };
        for &alpha in &[0.1, 0.35, 0.5, 0.9] {
            let table_y = |i: usize, z: bool, nb: &[bool]| tables[i].get(z, nb.iter().filter(|&&t| t).count());
            let (e0, e1) = enumerate_apo(&net, &table_y, alpha);
            let (c0, c1) = apo_from_tables(&tables, &net, alpha).unwrap();
            worst = worst.max((e0 - c0).abs()).max((e1 - c1).abs());

            let cfg = StandardizeConfig { alpha_grid: vec![alpha], include_noise: false, closed_form_random_effects: true, ..Default::default() };
            let st = Standardizer::new(&spec, &net, &cov, &cfg).unwrap();
            let (s0, s1) = st.draw_mu(&draw, 0).unwrap()[0];
            let (m0, m1) = enumerate_apo(&net, &model_y, alpha);
            worst = worst.max((m0 - s0).abs()).max((m1 - s1).abs());
        }
    }
    outcome(worst <= 1e-10, format!("50 graphs (max degree {max_deg}); max |count-indexed - enumeration| = {worst:.2e}"))
}

// ---------------------------------------------------------------------------
// 4. SAR log-likelihood against a dense covariance oracle

fn dense_sar_loglik(r: &[f64], tau: f64, sigma: f64, adj: &[Vec<usize>]) -> f64 {
    let n = r.len();
    let mut m = DMatrix::<f64>::identity(n, n);
    for (i, nb) in adj.iter().enumerate() {
        for &j in nb {
            m[(i, j)] -= tau;
        }
    }
    let minv = m.try_inverse().unwrap();
    let cov = &minv * minv.transpose() * (sigma * sigma);
    let chol = cov.clone().cholesky().unwrap();
    let logdet: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let x = DVector::from_column_slice(r);
    let quad = x.dot(&chol.solve(&x));
    -0.5 * (n as f64 * (2.0 * std::f64::consts::PI).ln() + logdet + quad)
}

fn criterion_4() -> Outcome {
    let mut rng = stream(4, "acceptance-sar", 0);
    let (mut worst_dense, mut worst_iid) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let n = rng.random_range(1..=8);
        let mut adj = vec![Vec::new(); n];
        for i in 0..n {
            for j in i + 1..n {
                if rng.random_bool(0.5) {
                    adj[i].push(j);
                    adj[j].push(i);
                }
            }
        }
        let tau = rng.random_range(-0.3..0.3);
        let sigma = rng.random_range(0.3..3.0);
        let r: Vec<f64> = (0..n).map(|_| 2.0 * rng.sample::<f64, _>(StandardNormal)).collect();
        let fast = sar_loglik(&r, tau, sigma, &adj).unwrap();
        worst_dense = worst_dense.max((fast - dense_sar_loglik(&r, tau, sigma, &adj)).abs());
        let at_zero = sar_loglik(&r, 0.0, sigma, &adj).unwrap();
        let direct: f64 = r
            .iter()
            .map(|v| -0.5 * (2.0 * std::f64::consts::PI * sigma * sigma).ln() - v * v / (2.0 * sigma * sigma))
            .sum();
        worst_iid = worst_iid.max((at_zero - direct).abs()).max((at_zero - iid_normal_loglik(&r, sigma)).abs());
    }
    outcome(
        worst_dense <= 1e-8 && worst_iid <= 1e-10,
        format!("100 subgraphs: max |precision - dense| = {worst_dense:.2e}; tau = 0 vs iid = {worst_iid:.2e}"),
    )
}

// ---------------------------------------------------------------------------
// 5. Sampler calibration

fn criterion_5() -> Outcome {
    // Gaussian linear model with known σ: posterior of β is exactly normal.
    let n = 300;
    let sigma = 1.5;
    let mut rng = stream(5, "acceptance-conjugate", 0);
    let x: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let y: Vec<f64> = x.iter().map(|&v| 1.0 - 0.5 * v + sigma * rng.sample::<f64, _>(StandardNormal)).collect();
    let net = ClusteredNetwork::from_edges(vec![0; n], &[]).unwrap();
    let no_treatment = TreatmentTerms { direct: false, spillover: None, interaction: None };
    let spec = ModelSpec {
        kind: ModelKind::Fem,
        treatment: no_treatment.clone(),
        outcome_terms: vec!["x".parse::<Term>().unwrap()],
        ..ModelSpec::default()
    };
    let cov = Covariates::new().with("x", x.clone()).unwrap();
    let data = FitData::new(&spec, &net, &NodePanel { y: y.clone(), z: vec![false; n], covariates: cov.clone() }).unwrap();
    let priors = PriorConfig::default();
    let cfg = SamplerConfig { n_chains: 4, n_burnin: 200, n_keep: 1000, thin: 1, seed: 5, fixed_sigma_eps: Some(sigma), ..SamplerConfig::default() };
    let post = run_mcmc(&data, &priors, &cfg).unwrap();
    let mut prec = DMatrix::<f64>::identity(2, 2) / priors.coef_prior_var;
    let mut rhs = DVector::<f64>::zeros(2);
    for i in 0..n {
        let row = DVector::from_vec(vec![1.0, x[i]]);
        prec += &row * row.transpose() / (sigma * sigma);
        rhs += row * y[i] / (sigma * sigma);
    }
    let covm = prec.try_inverse().unwrap();
    let exact_mean = &covm * rhs;
    let mut conj_ok = true;
    let mut conj_z = 0.0f64;
    for j in 0..2 {
        let v = post.values(&format!("beta_{j}")).unwrap();
        let ess = bulk_ess(&post.traces(j)).unwrap();
        let target_sd = covm[(j, j)].sqrt();
        let zm = (mean(&v) - exact_mean[j]).abs() / (target_sd / ess.sqrt());
        let zs = (sd(&v) - target_sd).abs() / (target_sd / (2.0 * ess).sqrt());
        conj_z = conj_z.max(zm).max(zs);
        conj_ok &= zm < 3.0 && zs < 3.0;
    }

    // Logistic exposure model. A tiny half-Cauchy scale pins the random
    // intercepts at zero, so the posterior of γ is the logistic GLM
    // posterior under N(0, 100) priors, computed here by quadrature.
    let n = 1500;
    let mut rng = stream(6, "acceptance-logistic", 0);
    let x: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let z: Vec<bool> = x.iter().map(|&v| rng.random::<f64>() < 1.0 / (1.0 + (-(0.3 + 0.8 * v)).exp())).collect();
    let yv: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let spec = ModelSpec {
        kind: ModelKind::Jmm,
        treatment: no_treatment,
        exposure_terms: vec!["x".parse::<Term>().unwrap()],
        ..ModelSpec::default()
    };
    let net = ClusteredNetwork::from_edges(vec![0; n], &[]).unwrap();
    let data = FitData::new(&spec, &net, &NodePanel { y: yv, z: z.clone(), covariates: Covariates::new().with("x", x.clone()).unwrap() })
        .unwrap();
    let priors = PriorConfig { half_cauchy_scale: 1e-8, ..PriorConfig::default() };
    let cfg = SamplerConfig { n_chains: 4, n_burnin: 1000, n_keep: 2000, thin: 1, seed: 6, fixed_sigma_eps: Some(1.0), ..SamplerConfig::default() };
    let post = run_mcmc(&data, &priors, &cfg).unwrap();
    let logpost = |g0: f64, g1: f64| -> f64 {
        let mut lp = -(g0 * g0 + g1 * g1) / 200.0;
        for (xi, &zi) in x.iter().zip(&z) {
            let eta = g0 + g1 * xi;
            lp += if zi { -(-eta).exp().ln_1p() } else { -eta.exp().ln_1p() };
        }
        lp
    };
    let g_names = ["gamma_0", "gamma_1"];
    let draws: Vec<Vec<f64>> = g_names.iter().map(|g| post.values(g).unwrap()).collect();
    let (c0, c1) = (mean(&draws[0]), mean(&draws[1]));
    let (w0, w1) = (8.0 * sd(&draws[0]), 8.0 * sd(&draws[1]));
    let k = 241;
    let mut grid = Vec::with_capacity(k * k);
    for a in 0..k {
        for b in 0..k {
            let g0 = c0 - w0 + 2.0 * w0 * a as f64 / (k - 1) as f64;
            let g1 = c1 - w1 + 2.0 * w1 * b as f64 / (k - 1) as f64;
            grid.push((g0, g1, logpost(g0, g1)));
        }
    }
    let top = grid.iter().map(|g| g.2).fold(f64::NEG_INFINITY, f64::max);
    let wsum: f64 = grid.iter().map(|g| (g.2 - top).exp()).sum();
    let moment = |f: &dyn Fn(f64, f64) -> f64| grid.iter().map(|g| f(g.0, g.1) * (g.2 - top).exp()).sum::<f64>() / wsum;
    let (m0, m1) = (moment(&|a, _| a), moment(&|_, b| b));
    let (s0, s1) = ((moment(&|a, _| a * a) - m0 * m0).sqrt(), (moment(&|_, b| b * b) - m1 * m1).sqrt());
    let mut logit_ok = true;
    let mut logit_z = 0.0f64;
    let names = post.scalar_names();
    for (j, (em, es)) in [(m0, s0), (m1, s1)].into_iter().enumerate() {
        let idx = names.iter().position(|n| n == g_names[j]).unwrap();
        let ess = bulk_ess(&post.traces(idx)).unwrap();
        let zm = (mean(&draws[j]) - em).abs() / (es / ess.sqrt());
        let zs = (sd(&draws[j]) - es).abs() / (es / (2.0 * ess).sqrt());
        logit_z = logit_z.max(zm).max(zs);
        logit_ok &= zm < 3.0 && zs < 3.0;
    }
    outcome(
        conj_ok && logit_ok,
        format!("conjugate Gaussian max |err|/MCSE = {conj_z:.2}; logistic GLM vs quadrature max |err|/MCSE = {logit_z:.2} (bound 3)"),
    )
}

// ---------------------------------------------------------------------------
// 6. Truth replication at full generation settings

fn criterion_6() -> Outcome {
    let sc = ScenarioConfig { n_replicates: 200, ..ScenarioConfig::new(ScenarioName::Main, 0.2) }.with_seed(1);
    let t = truth_by_generation(&sc, &[0.7]).unwrap()[0];
    let de = t.1 - t.0;
    outcome(
        (de - 2.66).abs() <= 0.05 && (t.0 - 1.27).abs() <= 0.05,
        format!("m = 50, 200 replicates: DE(0.7) = {de:.4} (2.66 +- 0.05), mu0(0.7) = {:.4} (1.27 +- 0.05), mu1(0.7) = {:.4}", t.0, t.1),
    )
}

// ---------------------------------------------------------------------------
// 7-9. Scaled campaigns

fn campaign(name: ScenarioName, rho: f64, n_replicates: usize, seed: u64) -> CampaignReport {
    let sc = ScenarioConfig { n_replicates, ..ScenarioConfig::desk(name, rho) }.with_seed(seed);
    let cfg = CampaignConfig::new(sc, vec![ModelKind::Jmm, ModelKind::Fem]);
    run_campaign(&cfg).unwrap()
}

fn de_metrics(r: &CampaignReport, kind: ModelKind) -> netjmm::simlab::TargetMetrics {
    r.metrics_for(kind).unwrap().get(SimTarget::De(0.7)).unwrap().clone()
}

fn excluded(r: &CampaignReport) -> usize {
    r.runs.iter().map(|run| run.excluded.len()).sum()
}

fn criterion_7() -> Outcome {
    let r = campaign(ScenarioName::Main, 0.2, 100, 7);
    let (j, f) = (de_metrics(&r, ModelKind::Jmm), de_metrics(&r, ModelKind::Fem));
    let (jrb, frb) = (j.rb.unwrap(), f.rb.unwrap());
    outcome(
        jrb.abs() <= 1.5 && frb >= 2.0 && (90.0..=100.0).contains(&j.ecp) && f.ecp <= 90.0,
        format!(
            "rho = 0.2, m = 30, {} fits: JMM RB {jrb:.2}% ECP {:.0}; FEM RB {frb:.2}% ECP {:.0}; truth {:.4}; {} excluded",
            j.n, j.ecp, f.ecp, j.truth, excluded(&r)
        ),
    )
}

fn criterion_8() -> Outcome {
    let r = campaign(ScenarioName::Main, 0.8, 100, 7);
    let (j, f) = (de_metrics(&r, ModelKind::Jmm), de_metrics(&r, ModelKind::Fem));
    outcome(
        f.ecp <= 40.0 && j.ecp >= 90.0,
        format!(
            "rho = 0.8, m = 30, {} fits: FEM ECP {:.0} (RB {:.2}%); JMM ECP {:.0} (RB {:.2}%); {} excluded",
            j.n,
            f.ecp,
            f.rb.unwrap(),
            j.ecp,
            j.rb.unwrap(),
            excluded(&r)
        ),
    )
}

// A ±0.02 band needs several hundred replicates to sit well outside Monte
// Carlo error (ESD of the DE estimate is about 0.09).
const NULL_REPLICATES: usize = 500;
const NULL_SEED: u64 = 101;

fn criterion_9() -> Outcome {
    let r = campaign(ScenarioName::NullEffect, 0.2, NULL_REPLICATES, NULL_SEED);
    let (j, f) = (de_metrics(&r, ModelKind::Jmm), de_metrics(&r, ModelKind::Fem));
    let mcse = j.esd / (j.n as f64).sqrt();
    outcome(
        j.mean_estimate.abs() <= 0.02 && f.mean_estimate.abs() > j.mean_estimate.abs(),
        format!(
            "null effect, {} fits: mean JMM DE(0.7) {:.5} (MC SE {mcse:.4}); mean FEM {:.5}; truth {:.5}; {} excluded",
            j.n,
            j.mean_estimate,
            f.mean_estimate,
            j.truth,
            excluded(&r)
        ),
    )
}

// ---------------------------------------------------------------------------
// 10. Bitwise reproducibility of manifest runs

fn write_dataset(dir: &Path) {
    let sc = ScenarioConfig { size_law: vec![SizeClass { count: 6, mean_order: 15.0 }], ..ScenarioConfig::new(ScenarioName::Main, 0.3) }
        .with_seed(10);
    let net = scenario_network(&sc, None).unwrap();
    let rep = generate_replicate(&sc, 0, &net).unwrap();
    let g = &net.network;
    let edges: String = g.edges().map(|(i, j)| format!("{} {}\n", i + 1, j + 1)).collect();
    fs::write(dir.join("edges.txt"), edges).unwrap();
    let c = |n: &str| rep.covariates.column(n).unwrap().to_vec();
    let (x1, x2, h) = (c("x1"), c("x2"), c("h"));
    let mut nodes = String::from("node_id,subgraph_id,x1,x2,h,y,z\n");
    for i in 0..g.n_nodes() {
        nodes.push_str(&format!("{},{},{},{},{},{},{}\n", i + 1, g.subgraph_of(i), x1[i], x2[i], h[i], rep.y[i], rep.z[i] as u8));
    }
    fs::write(dir.join("nodes.csv"), nodes).unwrap();
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

fn criterion_10() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    write_dataset(d);
    let model = "[model]\nkind = \"jmm\"\noutcome_terms = [\"abs(x1)\", \"x2\", \"abs(x1)*x2\"]\nexposure_terms = [\"abs(x1)\", \"x2*abs(x1)\", \"h\"]\n\
                 [inputs]\nedges = \"edges.txt\"\nnodes = \"nodes.csv\"\n";
    let fit = format!("format_version = 1\ncommand = \"fit\"\nseed = 3\n[sampler]\nn_chains = 2\nn_burnin = 200\nn_keep = 50\nthin = 1\n{model}");
    fs::write(d.join("fit.toml"), fit).unwrap();
    fs::write(d.join("netstats.toml"), "format_version = 1\ncommand = \"netstats\"\nseed = 3\n[inputs]\nedges = \"edges.txt\"\nnodes = \"nodes.csv\"\n").unwrap();
    fs::write(
        d.join("simulate.toml"),
        "format_version = 1\ncommand = \"simulate\"\nseed = 3\n[sampler]\nn_chains = 2\nn_burnin = 100\nn_keep = 30\nthin = 1\n\
         [standardize]\nn_mc = 5\n[simulation]\nscenario = \"sar_errors\"\nrho = 0.5\nn_replicates = 3\nmethods = [\"jmm\", \"fem\"]\n",
    )
    .unwrap();
    let mut compared = 0;
    let mut ok = true;
    let mut runs = |manifest: &Path, a: &Path, b: &Path, workers: (usize, usize)| -> bool {
        let opts = |out: &Path, w: usize| RunOptions { manifest: manifest.to_path_buf(), out: Some(out.to_path_buf()), workers: Some(w), ..Default::default() };
        let ra = run(&opts(a, workers.0));
        // Unhealthy fits still write their outputs; code 6 is a valid result.
        let rb = run(&RunOptions { manifest: a.join("manifest.toml"), ..opts(b, workers.1) });
        let codes = (ra.err().map(|e| e.exit_code()), rb.err().map(|e| e.exit_code()));
        let (da, db) = (dir_bytes(a), dir_bytes(b));
        compared += da.len();
        codes.0 == codes.1 && codes.0.is_none_or(|c| c == 6) && da == db
    };
    ok &= runs(&d.join("fit.toml"), &d.join("fit_a"), &d.join("fit_b"), (1, 2));
    let st = format!(
        "format_version = 1\ncommand = \"standardize\"\nseed = 3\n[standardize]\nn_mc = 10\n{}draws = {:?}\n",
        model,
        d.join("fit_a").join("draws.tsv")
    );
    fs::write(d.join("standardize.toml"), st).unwrap();
    ok &= runs(&d.join("standardize.toml"), &d.join("st_a"), &d.join("st_b"), (2, 1));
    ok &= runs(&d.join("netstats.toml"), &d.join("ns_a"), &d.join("ns_b"), (1, 1));
    ok &= runs(&d.join("simulate.toml"), &d.join("sim_a"), &d.join("sim_b"), (1, 2));
    outcome(ok, format!("fit, standardize, netstats and simulate re-run from the embedded manifest: {compared} files bitwise identical"))
}

fn main() {
    // `cargo test -- <filter>` passes arguments; run everything regardless,
    // unless only listing tests.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let criteria: [(usize, &str, fn() -> Outcome); 10] = [
        (1, "estimand identities", criterion_1),
        (2, "allocation-weight normalization", criterion_2),
        (3, "brute-force oracle equivalence", criterion_3),
        (4, "SAR log-likelihood correctness", criterion_4),
        (5, "sampler calibration", criterion_5),
        (6, "truth replication", criterion_6),
        (7, "campaign rho = 0.2", criterion_7),
        (8, "campaign rho = 0.8", criterion_8),
        (9, "null-effect campaign", criterion_9),
        (10, "manifest reproducibility", criterion_10),
    ];
    let mut failed = Vec::new();
    for (id, name, f) in criteria {
        let t = Instant::now();
        let o = f();
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {id:>2} [{verdict}] {name}: {} ({:.1}s)", o.detail, t.elapsed().as_secs_f64());
        if !o.pass {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all 10 criteria pass");
    } else {
        println!("acceptance: failing criteria {failed:?}");
        std::process::exit(1);
    }
}
