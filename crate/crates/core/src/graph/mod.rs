//! Clustered undirected networks.
//!
//! A [`ClusteredNetwork`] is an undirected simple graph whose node set is
//! partitioned into `m` subgraphs. Ties across subgraphs are allowed; the
//! [`ClusteredNetwork::block_diagonal`] flag records whether any exist.

mod generate;
mod io;
mod stats;

pub use generate::{generate_network, GeneratedNetwork, HomophilyGenConfig, SizeClass, TieBaseline};
pub use io::{read_edge_list, write_edge_list};
pub use stats::{
    network_stats, treated_neighbor_histogram, Histogram, NetworkStats, SubgraphStats,
};

use std::fmt;

#[derive(Debug, thiserror::Error)]
pub enum GraphError {
    #[error("invalid network: {}", format_violations(.0))]
    Invalid(Vec<Violation>),
    #[error("edge ({0}, {1}) references a node outside 0..{2}")]
    EdgeOutOfRange(usize, usize, usize),
    #[error("self-loop on node {0}")]
    SelfLoop(usize),
    #[error("node {0} is isolated (degree 0)")]
    Isolate(usize),
    #[error("attribute has {got} values for {expected} nodes")]
    AttributeLength { expected: usize, got: usize },
    #[error("invalid generator config: {0}")]
    Config(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn format_violations(v: &[Violation]) -> String {
    let shown: Vec<String> = v.iter().take(5).map(|x| x.to_string()).collect();
    if v.len() > 5 {
        format!("{} (and {} more)", shown.join("; "), v.len() - 5)
    } else {
        shown.join("; ")
    }
}

/// One broken invariant found by [`validate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    Asymmetric { from: usize, to: usize },
    SelfLoop { node: usize },
    NeighborOutOfRange { node: usize, neighbor: usize },
    DuplicateNeighbor { node: usize, neighbor: usize },
    UnsortedNeighborhood { node: usize },
    DegreeMismatch { node: usize, degree: usize, neighborhood: usize },
    Unassigned { node: usize },
    SubgraphOutOfRange { node: usize, subgraph: usize },
    EmptySubgraph { subgraph: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Asymmetric { from, to } => {
                write!(f, "symmetry: edge ({from}, {to}) has no reverse ({to}, {from})")
            }
            Violation::SelfLoop { node } => write!(f, "self-loop: node {node}"),
            Violation::NeighborOutOfRange { node, neighbor } => {
                write!(f, "range: node {node} lists unknown neighbor {neighbor}")
            }
            Violation::DuplicateNeighbor { node, neighbor } => {
                write!(f, "simple graph: node {node} lists neighbor {neighbor} twice")
            }
            Violation::UnsortedNeighborhood { node } => {
                write!(f, "ordering: neighborhood of node {node} is not sorted")
            }
            Violation::DegreeMismatch { node, degree, neighborhood } => write!(
                f,
                "degree: node {node} has degree {degree} but {neighborhood} neighbors"
            ),
            Violation::Unassigned { node } => write!(f, "partition: node {node} has no subgraph"),
            Violation::SubgraphOutOfRange { node, subgraph } => {
                write!(f, "partition: node {node} assigned to unknown subgraph {subgraph}")
            }
            Violation::EmptySubgraph { subgraph } => {
                write!(f, "partition: subgraph {subgraph} is empty")
            }
        }
    }
}

/// Unchecked network representation, the input to [`validate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkParts {
    pub n_subgraphs: usize,
    pub subgraph_of: Vec<Option<usize>>,
    pub neighborhoods: Vec<Vec<usize>>,
    pub degrees: Vec<usize>,
}

/// Lists every violated network invariant. Empty iff the parts form a valid
/// [`ClusteredNetwork`].
pub fn validate(parts: &NetworkParts) -> Vec<Violation> {
    let n = parts.neighborhoods.len();
    let mut out = Vec::new();
    for (node, nbrs) in parts.neighborhoods.iter().enumerate() {
        if nbrs.windows(2).any(|w| w[0] > w[1]) {
            out.push(Violation::UnsortedNeighborhood { node });
        }
        let mut seen = nbrs.clone();
        seen.sort_unstable();
        for w in seen.windows(2) {
            if w[0] == w[1] {
                out.push(Violation::DuplicateNeighbor { node, neighbor: w[0] });
            }
        }
        for &j in nbrs {
            if j == node {
                out.push(Violation::SelfLoop { node });
            } else if j >= n {
                out.push(Violation::NeighborOutOfRange { node, neighbor: j });
            } else if !parts.neighborhoods[j].contains(&node) {
                out.push(Violation::Asymmetric { from: node, to: j });
            }
        }
        match parts.degrees.get(node) {
            Some(&d) if d == nbrs.len() => {}
            Some(&d) => out.push(Violation::DegreeMismatch {
                node,
                degree: d,
                neighborhood: nbrs.len(),
            }),
            None => out.push(Violation::DegreeMismatch {
                node,
                degree: 0,
                neighborhood: nbrs.len(),
            }),
        }
    }
    let mut sizes = vec![0usize; parts.n_subgraphs];
    for node in 0..n {
        match parts.subgraph_of.get(node).copied().flatten() {
            None => out.push(Violation::Unassigned { node }),
            Some(s) if s >= parts.n_subgraphs => {
                out.push(Violation::SubgraphOutOfRange { node, subgraph: s })
            }
            Some(s) => sizes[s] += 1,
        }
    }
    for (subgraph, &size) in sizes.iter().enumerate() {
        if size == 0 {
            out.push(Violation::EmptySubgraph { subgraph });
        }
    }
    out
}

/// Immutable, validated clustered network.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusteredNetwork {
    subgraph_of: Vec<usize>,
    members: Vec<Vec<usize>>,
    local_index: Vec<usize>,
    neighborhoods: Vec<Vec<usize>>,
    n_edges: usize,
    block_diagonal: bool,
}

impl ClusteredNetwork {
    /// Builds a network from an edge list. Duplicate and reversed edges
    /// collapse into one undirected tie.
    pub fn from_edges(
        subgraph_of: Vec<usize>,
        edges: &[(usize, usize)],
    ) -> Result<Self, GraphError> {
        let n = subgraph_of.len();
        let mut neighborhoods = vec![Vec::new(); n];
        for &(i, j) in edges {
            if i >= n || j >= n {
                return Err(GraphError::EdgeOutOfRange(i, j, n));
            }
            if i == j {
                return Err(GraphError::SelfLoop(i));
            }
            neighborhoods[i].push(j);
            neighborhoods[j].push(i);
        }
        for nbrs in &mut neighborhoods {
            nbrs.sort_unstable();
            nbrs.dedup();
        }
        let n_subgraphs = subgraph_of.iter().map(|&s| s + 1).max().unwrap_or(0);
        let degrees = neighborhoods.iter().map(Vec::len).collect();
        Self::try_from_parts(NetworkParts {
            n_subgraphs,
            subgraph_of: subgraph_of.into_iter().map(Some).collect(),
            neighborhoods,
            degrees,
        })
    }

    pub fn try_from_parts(parts: NetworkParts) -> Result<Self, GraphError> {
        let violations = validate(&parts);
        if !violations.is_empty() {
            return Err(GraphError::Invalid(violations));
        }
        let subgraph_of: Vec<usize> = parts.subgraph_of.into_iter().flatten().collect();
        let mut members = vec![Vec::new(); parts.n_subgraphs];
        let mut local_index = vec![0; subgraph_of.len()];
        for (node, &s) in subgraph_of.iter().enumerate() {
            local_index[node] = members[s].len();
            members[s].push(node);
        }
        let n_edges = parts.neighborhoods.iter().map(Vec::len).sum::<usize>() / 2;
        let block_diagonal = parts
            .neighborhoods
            .iter()
            .enumerate()
            .all(|(i, nbrs)| nbrs.iter().all(|&j| subgraph_of[j] == subgraph_of[i]));
        Ok(Self {
            subgraph_of,
            members,
            local_index,
            neighborhoods: parts.neighborhoods,
            n_edges,
            block_diagonal,
        })
    }

    pub fn to_parts(&self) -> NetworkParts {
        NetworkParts {
            n_subgraphs: self.n_subgraphs(),
            subgraph_of: self.subgraph_of.iter().copied().map(Some).collect(),
            neighborhoods: self.neighborhoods.clone(),
            degrees: self.neighborhoods.iter().map(Vec::len).collect(),
        }
    }

    pub fn validate(&self) -> Vec<Violation> {
        validate(&self.to_parts())
    }

    pub fn n_nodes(&self) -> usize {
        self.subgraph_of.len()
    }

    pub fn n_subgraphs(&self) -> usize {
        self.members.len()
    }

    pub fn n_edges(&self) -> usize {
        self.n_edges
    }

    pub fn subgraph_of(&self, node: usize) -> usize {
        self.subgraph_of[node]
    }

    pub fn subgraph_assignment(&self) -> &[usize] {
        &self.subgraph_of
    }

    /// Nodes of subgraph `s` in increasing id order.
    pub fn members(&self, s: usize) -> &[usize] {
        &self.members[s]
    }

    /// Position of `node` within [`Self::members`] of its subgraph.
    pub fn local_index(&self, node: usize) -> usize {
        self.local_index[node]
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.neighborhoods[node]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.neighborhoods[node].len()
    }

    pub fn max_degree(&self) -> usize {
        self.neighborhoods.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// True iff no tie crosses a subgraph boundary.
    pub fn block_diagonal(&self) -> bool {
        self.block_diagonal
    }

    /// Undirected edges as `(i, j)` with `i < j`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.neighborhoods
            .iter()
            .enumerate()
            .flat_map(|(i, nbrs)| nbrs.iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
    }

    pub fn cross_subgraph_edges(&self) -> usize {
        self.edges()
            .filter(|&(i, j)| self.subgraph_of[i] != self.subgraph_of[j])
            .count()
    }

    pub fn isolates(&self) -> Vec<usize> {
        (0..self.n_nodes()).filter(|&i| self.degree(i) == 0).collect()
    }

    /// Within-subgraph adjacency of subgraph `s`, as neighbor lists over local
    /// indices.
    pub fn block_adjacency(&self, s: usize) -> Vec<Vec<usize>> {
        self.members[s]
            .iter()
            .map(|&i| {
                self.neighborhoods[i]
                    .iter()
                    .filter(|&&j| self.subgraph_of[j] == s)
                    .map(|&j| self.local_index[j])
                    .collect()
            })
            .collect()
    }

    /// Number of treated neighbors of every node.
    pub fn treated_neighbor_counts(&self, treated: &[bool]) -> Vec<usize> {
        self.neighborhoods
            .iter()
            .map(|nbrs| nbrs.iter().filter(|&&j| treated[j]).count())
            .collect()
    }

    /// Induced network on `keep` (sorted, unique node ids). Subgraphs left
    /// empty are dropped and the remaining ones renumbered in order. Returns
    /// the new network and, for each new node, its old id.
    pub fn induced(&self, keep: &[usize]) -> Result<(Self, Vec<usize>), GraphError> {
        let mut new_id = vec![usize::MAX; self.n_nodes()];
        for (k, &i) in keep.iter().enumerate() {
            new_id[i] = k;
        }
        let mut used = vec![false; self.n_subgraphs()];
        for &i in keep {
            used[self.subgraph_of[i]] = true;
        }
        let mut rank = vec![usize::MAX; self.n_subgraphs()];
        let mut next = 0;
        for s in 0..self.n_subgraphs() {
            if used[s] {
                rank[s] = next;
                next += 1;
            }
        }
        let subgraph_of: Vec<usize> = keep.iter().map(|&i| rank[self.subgraph_of[i]]).collect();
        let edges: Vec<(usize, usize)> = self
            .edges()
            .filter(|&(i, j)| new_id[i] != usize::MAX && new_id[j] != usize::MAX)
            .map(|(i, j)| (new_id[i], new_id[j]))
            .collect();
        Ok((Self::from_edges(subgraph_of, &edges)?, keep.to_vec()))
    }
}
