use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use super::table::NodeTable;
use super::CliError;
use crate::graph::ClusteredNetwork;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct IngestReport {
    pub n_nodes: usize,
    pub n_edges: usize,
    pub n_subgraphs: usize,
    /// Edge lines that repeated an earlier tie in either direction.
    pub duplicate_edges: usize,
    pub cross_subgraph_edges: usize,
    /// Ids of isolated nodes (before any exclusion).
    pub isolates: Vec<u64>,
    pub excluded_isolates: bool,
}

impl IngestReport {
    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "item\tvalue")?;
        writeln!(w, "nodes\t{}", self.n_nodes)?;
        writeln!(w, "edges\t{}", self.n_edges)?;
        writeln!(w, "subgraphs\t{}", self.n_subgraphs)?;
        writeln!(w, "duplicate_edges\t{}", self.duplicate_edges)?;
        writeln!(w, "cross_subgraph_edges\t{}", self.cross_subgraph_edges)?;
        writeln!(w, "isolates\t{}", self.isolates.len())?;
        writeln!(w, "isolates_excluded\t{}", self.excluded_isolates)?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Ingested {
    pub network: ClusteredNetwork,
    pub table: NodeTable,
    /// Subgraph label of each subgraph index.
    pub subgraph_labels: Vec<String>,
    pub report: IngestReport,
}

/// Orders subgraph labels numerically when all are integers, otherwise
/// lexically.
fn order_labels(labels: &[String]) -> Vec<String> {
    let set: BTreeSet<&String> = labels.iter().collect();
    let mut out: Vec<String> = set.into_iter().cloned().collect();
    if out.iter().all(|l| l.parse::<i64>().is_ok()) {
        out.sort_by_key(|l| l.parse::<i64>().unwrap_or(0));
    }
    out
}

/// Builds the network from an edge list over node ids and the node table.
/// Nodes keep table row order.
pub fn ingest(edges: &[(u64, u64)], table: NodeTable, exclude_isolates: bool) -> Result<Ingested, CliError> {
    if table.is_empty() {
        return Err(CliError::Validation("node table is empty".into()));
    }
    let index: BTreeMap<u64, usize> = table.ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let labels = order_labels(&table.subgraph);
    let rank: BTreeMap<&str, usize> = labels.iter().enumerate().map(|(s, l)| (l.as_str(), s)).collect();
    let subgraph_of: Vec<usize> = table.subgraph.iter().map(|l| rank[l.as_str()]).collect();

    let mut seen = BTreeSet::new();
    let mut local = Vec::with_capacity(edges.len());
    let mut duplicates = 0;
    for &(a, b) in edges {
        let lookup = |id: u64| index.get(&id).copied().ok_or_else(|| CliError::Validation(format!("edge endpoint {id} is not in the node table")));
        let (i, j) = (lookup(a)?, lookup(b)?);
        if i == j {
            return Err(CliError::Validation(format!("self-loop on node {a}")));
        }
        if !seen.insert((i.min(j), i.max(j))) {
            duplicates += 1;
            continue;
        }
        local.push((i, j));
    }
    if duplicates > 0 {
        log::warn!("{duplicates} duplicate edge lines collapsed");
    }
    let mut network = ClusteredNetwork::from_edges(subgraph_of, &local).map_err(|e| CliError::Validation(e.to_string()))?;
    let mut table = table;
    let mut subgraph_labels = labels;
    let isolates: Vec<u64> = network.isolates().iter().map(|&i| table.ids[i]).collect();
    let cross = network.cross_subgraph_edges();
    if cross > 0 {
        log::warn!("{cross} ties cross subgraph boundaries");
    }
    if !isolates.is_empty() {
        log::info!("{} isolated nodes", isolates.len());
    }
    if exclude_isolates && !isolates.is_empty() {
        let keep: Vec<usize> = (0..network.n_nodes()).filter(|&i| network.degree(i) > 0).collect();
        if keep.is_empty() {
            return Err(CliError::Validation("every node is isolated".into()));
        }
        let kept_sub: BTreeSet<usize> = keep.iter().map(|&i| network.subgraph_of(i)).collect();
        subgraph_labels = kept_sub.into_iter().map(|s| subgraph_labels[s].clone()).collect();
        let (sub, _) = network.induced(&keep).map_err(|e| CliError::Validation(e.to_string()))?;
        network = sub;
        table = table.select_rows(&keep);
    }
    let report = IngestReport {
        n_nodes: network.n_nodes(),
        n_edges: network.n_edges(),
        n_subgraphs: network.n_subgraphs(),
        duplicate_edges: duplicates,
        cross_subgraph_edges: cross,
        isolates,
        excluded_isolates: exclude_isolates,
    };
    Ok(Ingested { network, table, subgraph_labels, report })
}

/// Edge list over node ids, each tie once.
pub fn id_edges(ingested: &Ingested) -> Vec<(u64, u64)> {
    ingested.network.edges().map(|(i, j)| (ingested.table.ids[i], ingested.table.ids[j])).collect()
}
