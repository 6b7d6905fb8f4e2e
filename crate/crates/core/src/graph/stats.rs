use super::{ClusteredNetwork, GraphError};

/// Descriptive statistics for one set of nodes and the ties among them.
#[derive(Debug, Clone, PartialEq)]
pub struct SubgraphStats {
    pub n_nodes: usize,
    pub n_edges: usize,
    pub avg_degree: f64,
    pub degree_sd: f64,
    pub edge_density: f64,
    pub transitivity: f64,
    /// Attribute assortativity; `None` when the attribute is constant over
    /// edge ends or there are no edges.
    pub assortativity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkStats {
    pub global: SubgraphStats,
    /// Statistics of each induced subgraph (within-subgraph ties only).
    pub per_subgraph: Vec<SubgraphStats>,
}

/// Global and per-subgraph descriptive statistics. `attribute` is a binary
/// node attribute used for the assortativity coefficient.
pub fn network_stats(
    network: &ClusteredNetwork,
    attribute: &[bool],
) -> Result<NetworkStats, GraphError> {
    if attribute.len() != network.n_nodes() {
        return Err(GraphError::AttributeLength {
            expected: network.n_nodes(),
            got: attribute.len(),
        });
    }
    let all: Vec<usize> = (0..network.n_nodes()).collect();
    let global = stats_for(network, &all, attribute, None);
    let per_subgraph = (0..network.n_subgraphs())
        .map(|s| stats_for(network, network.members(s), attribute, Some(s)))
        .collect();
    Ok(NetworkStats { global, per_subgraph })
}

fn stats_for(
    network: &ClusteredNetwork,
    nodes: &[usize],
    attribute: &[bool],
    within: Option<usize>,
) -> SubgraphStats {
    let keep = |j: usize| within.is_none_or(|s| network.subgraph_of(j) == s);
    let nbrs: Vec<Vec<usize>> = nodes
        .iter()
        .map(|&i| network.neighbors(i).iter().copied().filter(|&j| keep(j)).collect())
        .collect();
    let n = nodes.len();
    let degrees: Vec<f64> = nbrs.iter().map(|v| v.len() as f64).collect();
    let n_edges = nbrs.iter().map(Vec::len).sum::<usize>() / 2;

    let avg_degree = if n == 0 { 0.0 } else { degrees.iter().sum::<f64>() / n as f64 };
    let degree_sd = if n < 2 {
        0.0
    } else {
        let ss: f64 = degrees.iter().map(|d| (d - avg_degree).powi(2)).sum();
        (ss / (n - 1) as f64).sqrt()
    };
    let edge_density = if n < 2 {
        0.0
    } else {
        2.0 * n_edges as f64 / (n as f64 * (n as f64 - 1.0))
    };

    // Triangles: each counted once via its smallest-id edge (i, j) and an
    // apex k > j.
    let mut triangles = 0usize;
    let mut triples = 0usize;
    for (a, &i) in nodes.iter().enumerate() {
        let d = nbrs[a].len();
        triples += d * d.saturating_sub(1) / 2;
        for &j in nbrs[a].iter().filter(|&&j| j > i) {
            triangles += sorted_intersection_above(network.neighbors(i), network.neighbors(j), j, &keep);
        }
    }
    let transitivity = if triples == 0 {
        0.0
    } else {
        3.0 * triangles as f64 / triples as f64
    };

    SubgraphStats {
        n_nodes: n,
        n_edges,
        avg_degree,
        degree_sd,
        edge_density,
        transitivity,
        assortativity: nominal_assortativity(nodes, &nbrs, attribute),
    }
}

fn sorted_intersection_above(
    a: &[usize],
    b: &[usize],
    floor: usize,
    keep: &impl Fn(usize) -> bool,
) -> usize {
    let (mut x, mut y, mut count) = (0, 0, 0);
    while x < a.len() && y < b.len() {
        match a[x].cmp(&b[y]) {
            std::cmp::Ordering::Less => x += 1,
            std::cmp::Ordering::Greater => y += 1,
            std::cmp::Ordering::Equal => {
                if a[x] > floor && keep(a[x]) {
                    count += 1;
                }
                x += 1;
                y += 1;
            }
        }
    }
    count
}

/// Newman's assortativity coefficient for a categorical attribute:
/// `r = (Σ e_kk − Σ a_k²) / (1 − Σ a_k²)` over the symmetric mixing matrix of
/// edge ends.
fn nominal_assortativity(nodes: &[usize], nbrs: &[Vec<usize>], attribute: &[bool]) -> Option<f64> {
    let mut mix = [[0.0f64; 2]; 2];
    let mut ends = 0.0;
    for (a, &i) in nodes.iter().enumerate() {
        for &j in &nbrs[a] {
            mix[attribute[i] as usize][attribute[j] as usize] += 1.0;
            ends += 1.0;
        }
    }
    if ends == 0.0 {
        return None;
    }
    let trace = (mix[0][0] + mix[1][1]) / ends;
    let a0 = (mix[0][0] + mix[0][1]) / ends;
    let a1 = (mix[1][0] + mix[1][1]) / ends;
    let expected = a0 * a0 + a1 * a1;
    let denom = 1.0 - expected;
    if denom.abs() < 1e-15 {
        return None;
    }
    Some((trace - expected) / denom)
}

/// Bin counts of the treated-neighbor proportion over `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub bin_width: f64,
    /// Lower edge of each bin; the last bin is closed on the right.
    pub lower: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

/// Histogram of `Σ z_j / d_i` over neighbors `j` of every node `i`.
pub fn treated_neighbor_histogram(
    network: &ClusteredNetwork,
    treated: &[bool],
    bin_width: f64,
) -> Result<Histogram, GraphError> {
    if treated.len() != network.n_nodes() {
        return Err(GraphError::AttributeLength {
            expected: network.n_nodes(),
            got: treated.len(),
        });
    }
    if !(bin_width > 0.0 && bin_width <= 1.0) {
        return Err(GraphError::Config(format!("bin width {bin_width} outside (0, 1]")));
    }
    let n_bins = ((1.0 / bin_width) - 1e-9).ceil().max(1.0) as usize;
    let mut counts = vec![0usize; n_bins];
    let counts_treated = network.treated_neighbor_counts(treated);
    for (i, &k) in counts_treated.iter().enumerate() {
        let d = network.degree(i);
        if d == 0 {
            return Err(GraphError::Isolate(i));
        }
        let p = k as f64 / d as f64;
        let bin = ((p / bin_width + 1e-12).floor() as usize).min(n_bins - 1);
        counts[bin] += 1;
    }
    let lower = (0..n_bins).map(|b| b as f64 * bin_width).collect();
    Ok(Histogram { bin_width, lower, counts })
}
