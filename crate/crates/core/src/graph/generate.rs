use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::{ClusteredNetwork, GraphError};
use crate::rng;

/// `count` subgraphs whose orders are drawn from Poisson(`mean_order`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SizeClass {
    pub count: usize,
    pub mean_order: f64,
}

/// Baseline tie log-odds between two nodes with different traits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBaseline {
    /// Fixed log-odds for every subgraph.
    Logit(f64),
    /// Log-odds calibrated per subgraph order so the expected degree is the
    /// given value.
    MeanDegree(f64),
}

/// Dyad-independent homophily generator: within a subgraph each pair is tied
/// independently with log-odds `baseline + match_bonus · 1{H_i = H_j}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomophilyGenConfig {
    pub size_law: Vec<SizeClass>,
    pub trait_prob: f64,
    pub baseline: TieBaseline,
    pub match_bonus: f64,
    pub seed: u64,
}

impl HomophilyGenConfig {
    /// Fifty subgraphs: thirty of order ~Poisson(35) and twenty of order
    /// ~Poisson(12), with a Bernoulli(0.5) trait.
    pub fn study_default(seed: u64) -> Self {
        Self {
            size_law: vec![
                SizeClass { count: 30, mean_order: 35.0 },
                SizeClass { count: 20, mean_order: 12.0 },
            ],
            trait_prob: 0.5,
            baseline: TieBaseline::MeanDegree(3.0),
            match_bonus: 1.0,
            seed,
        }
    }

    pub fn m(&self) -> usize {
        self.size_law.iter().map(|c| c.count).sum()
    }

    pub fn check(&self) -> Result<(), GraphError> {
        if !(self.trait_prob > 0.0 && self.trait_prob < 1.0) {
            return Err(GraphError::Config(format!(
                "trait_prob {} must lie in (0, 1)",
                self.trait_prob
            )));
        }
        if self.m() == 0 {
            return Err(GraphError::Config("size_law has no subgraphs".into()));
        }
        if let Some(c) = self.size_law.iter().find(|c| !(c.mean_order > 0.0) || !c.mean_order.is_finite()) {
            return Err(GraphError::Config(format!("mean order {} must be positive", c.mean_order)));
        }
        if let TieBaseline::MeanDegree(d) = self.baseline {
            if !(d > 0.0) {
                return Err(GraphError::Config(format!("target degree {d} must be positive")));
            }
        }
        if !self.match_bonus.is_finite() {
            return Err(GraphError::Config("match_bonus must be finite".into()));
        }
        Ok(())
    }

    /// Baseline log-odds used for a subgraph of the given order.
    pub fn base_logit(&self, order: usize) -> f64 {
        match self.baseline {
            TieBaseline::Logit(b) => b,
            TieBaseline::MeanDegree(target) => {
                calibrate_base_logit(order, target, self.trait_prob, self.match_bonus)
            }
        }
    }
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Solves `(n - 1) · E[tie probability] = target` for the baseline log-odds
/// by bisection. Saturates when the target is unreachable.
fn calibrate_base_logit(order: usize, target: f64, trait_prob: f64, bonus: f64) -> f64 {
    if order < 2 {
        return 0.0;
    }
    let p_match = trait_prob * trait_prob + (1.0 - trait_prob) * (1.0 - trait_prob);
    let expected = |b: f64| {
        (order - 1) as f64 * (p_match * logistic(b + bonus) + (1.0 - p_match) * logistic(b))
    };
    let (mut lo, mut hi) = (-40.0, 40.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if expected(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[derive(Debug, Clone)]
pub struct GeneratedNetwork {
    pub network: ClusteredNetwork,
    /// Homophily trait H of every node.
    pub trait_h: Vec<bool>,
}

/// Draws a block-diagonal clustered network. Nodes are numbered
/// consecutively subgraph by subgraph. Orders below 2 are redrawn; isolated
/// nodes are kept.
pub fn generate_network(config: &HomophilyGenConfig) -> Result<GeneratedNetwork, GraphError> {
    config.check()?;
    let mut rng = rng::stream(config.seed, "network", 0);
    let mut subgraph_of = Vec::new();
    let mut trait_h = Vec::new();
    let mut edges = Vec::new();
    let mut s = 0usize;
    for class in &config.size_law {
        let law = Poisson::new(class.mean_order)
            .map_err(|e| GraphError::Config(format!("Poisson({}): {e}", class.mean_order)))?;
        for _ in 0..class.count {
            let order = loop {
                let n = law.sample(&mut rng) as usize;
                if n >= 2 {
                    break n;
                }
            };
            let first = subgraph_of.len();
            for _ in 0..order {
                subgraph_of.push(s);
                trait_h.push(rng.random_bool(config.trait_prob));
            }
            let base = config.base_logit(order);
            let p_differ = logistic(base);
            let p_match = logistic(base + config.match_bonus);
            for i in first..first + order {
                for j in i + 1..first + order {
                    let p = if trait_h[i] == trait_h[j] { p_match } else { p_differ };
                    if rng.random::<f64>() < p {
                        edges.push((i, j));
                    }
                }
            }
            s += 1;
        }
    }
    let network = ClusteredNetwork::from_edges(subgraph_of, &edges)?;
    let isolates = network.isolates().len();
    if isolates > 0 {
        log::debug!("generated network has {isolates} isolated nodes");
    }
    Ok(GeneratedNetwork { network, trait_h })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::network_stats;

    fn single_class(count: usize, mean: f64, baseline: TieBaseline, bonus: f64, seed: u64) -> HomophilyGenConfig {
        HomophilyGenConfig {
            size_law: vec![SizeClass { count, mean_order: mean }],
            trait_prob: 0.5,
            baseline,
            match_bonus: bonus,
            seed,
        }
    }

    #[test]
    fn very_negative_logit_gives_empty_graph() {
        let g = generate_network(&single_class(10, 20.0, TieBaseline::Logit(-30.0), 0.0, 1)).unwrap();
        assert_eq!(g.network.n_edges(), 0);
        assert_eq!(g.network.n_subgraphs(), 10);
    }

    #[test]
    fn zero_logit_gives_half_density() {
        let g = generate_network(&single_class(200, 15.0, TieBaseline::Logit(0.0), 0.0, 2)).unwrap();
        let stats = network_stats(&g.network, &g.trait_h).unwrap();
        let mean_density =
            stats.per_subgraph.iter().map(|s| s.edge_density).sum::<f64>() / stats.per_subgraph.len() as f64;
        assert!((mean_density - 0.5).abs() < 0.03, "{mean_density}");
    }

    #[test]
    fn generated_networks_are_block_diagonal_with_m_subgraphs() {
        let cfg = HomophilyGenConfig::study_default(3);
        let g = generate_network(&cfg).unwrap();
        assert!(g.network.block_diagonal());
        assert_eq!(g.network.n_subgraphs(), 50);
        assert!(g.network.validate().is_empty());
        assert!((0..50).all(|s| g.network.members(s).len() >= 2));
    }

    #[test]
    fn same_seed_same_edges() {
        let a = generate_network(&HomophilyGenConfig::study_default(9)).unwrap();
        let b = generate_network(&HomophilyGenConfig::study_default(9)).unwrap();
        assert_eq!(a.network.edges().collect::<Vec<_>>(), b.network.edges().collect::<Vec<_>>());
        assert_eq!(a.trait_h, b.trait_h);
    }

    #[test]
    fn calibration_hits_target_degree() {
        for &n in &[5, 12, 35, 80] {
            let b = calibrate_base_logit(n, 3.0, 0.5, 1.0);
            let pm = 0.5;
            let e = (n - 1) as f64 * (pm * logistic(b + 1.0) + (1.0 - pm) * logistic(b));
            assert!((e - 3.0).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_bad_trait_prob() {
        let mut cfg = HomophilyGenConfig::study_default(0);
        cfg.trait_prob = 1.0;
        assert!(generate_network(&cfg).is_err());
    }
}
