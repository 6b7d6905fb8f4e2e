//! Manifest-driven runs: data ingest, fitting, standardization, simulation
//! campaigns and network statistics, with every output written atomically
//! next to a copy of the manifest that produced it.

mod ingest;
mod manifest;
mod table;

pub use ingest::{id_edges, ingest, IngestReport, Ingested};
pub use manifest::{Command, Inputs, RunManifest, Scale, SimulationSection, FORMAT_VERSION};
pub use table::{indicator_name, ColumnData, ColumnType, ImputeRecord, NodeColumn, NodeTable};

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::graph::{network_stats, read_edge_list, treated_neighbor_histogram, ClusteredNetwork, SubgraphStats};
use crate::model::{Covariates, FitData, ModelSpec, NodePanel, ParamDraw};
use crate::sampler::{run_mcmc, SamplerError};
use crate::simlab::{run_campaign, CampaignConfig, SimError};
use crate::standardize::Standardizer;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("sampler failure: {0}")]
    Sampler(String),
    #[error("unhealthy diagnostics: {0}")]
    Unhealthy(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// Process exit code: 3 parse, 4 validation, 5 sampler, 6 unhealthy,
    /// 1 for I/O failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Parse(_) => 3,
            CliError::Validation(_) => 4,
            CliError::Sampler(_) => 5,
            CliError::Unhealthy(_) => 6,
        }
    }
}

impl From<SamplerError> for CliError {
    fn from(e: SamplerError) -> Self {
        match e {
            SamplerError::Config(_) | SamplerError::Model(_) => CliError::Validation(e.to_string()),
            _ => CliError::Sampler(e.to_string()),
        }
    }
}

/// Command-line overrides of a manifest.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub manifest: PathBuf,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub exclude_isolates: bool,
}

/// An output directory whose files are written through a temporary file
/// and renamed into place.
pub struct OutputDir {
    path: PathBuf,
}

impl OutputDir {
    pub fn create(path: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(path)?;
        Ok(Self { path: path.to_path_buf() })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn write(&self, name: &str, f: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<(), CliError> {
        let tmp = tempfile::NamedTempFile::new_in(&self.path)?;
        {
            let mut w = BufWriter::new(tmp.as_file());
            f(&mut w)?;
            w.flush()?;
        }
        tmp.as_file().sync_all()?;
        tmp.persist(self.path.join(name)).map_err(|e| CliError::Io(e.error))?;
        Ok(())
    }
}

/// Loads the manifest, applies overrides and runs it inside a worker pool.
/// Returns the output directory.
pub fn run(opts: &RunOptions) -> Result<PathBuf, CliError> {
    let mut m = RunManifest::load(&opts.manifest)?;
    if let Some(seed) = opts.seed {
        m.seed = seed;
    }
    if opts.exclude_isolates {
        m.inputs.exclude_isolates = true;
    }
    let out = match (&opts.out, &m.output) {
        (Some(o), _) => o.clone(),
        (None, Some(o)) if o.is_absolute() => o.clone(),
        (None, Some(o)) => opts.manifest.parent().unwrap_or(Path::new(".")).join(o),
        (None, None) => return Err(CliError::Validation("no output directory: pass --out or set output".into())),
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(w) = opts.workers {
        if w == 0 {
            return Err(CliError::Validation("workers must be at least 1".into()));
        }
        pool = pool.num_threads(w);
    }
    let pool = pool.build().map_err(|e| CliError::Validation(format!("worker pool: {e}")))?;
    pool.install(|| execute(m, &out))?;
    Ok(out)
}

/// Runs an already-loaded manifest, writing into `out`.
pub fn execute(mut m: RunManifest, out: &Path) -> Result<(), CliError> {
    m.propagate_seed();
    m.check()?;
    let dir = OutputDir::create(out)?;
    let echo = RunManifest { output: None, ..m.clone() };
    dir.write("manifest.toml", |w| w.write_all(echo.to_toml().as_bytes()))?;
    dir.write("seed.txt", |w| writeln!(w, "{}", m.seed))?;
    log::info!("{} into {}", m.command.label(), out.display());
    match m.command {
        Command::Fit => fit(&m, &dir),
        Command::Standardize => standardize_cmd(&m, &dir),
        Command::Simulate => simulate(&m, &dir),
        Command::Netstats => netstats(&m, &dir),
    }
}

fn load_inputs(m: &RunManifest, dir: &OutputDir) -> Result<Ingested, CliError> {
    let edges_path = m.inputs.edges.as_ref().expect("checked");
    let nodes_path = m.inputs.nodes.as_ref().expect("checked");
    let open = |p: &PathBuf| File::open(p).map_err(|e| CliError::Validation(format!("{}: {e}", p.display())));
    let edges = read_edge_list(BufReader::new(open(edges_path)?)).map_err(|e| CliError::Parse(format!("edges: {e}")))?;
    let table = NodeTable::read_csv(BufReader::new(open(nodes_path)?), &m.inputs.columns)?;
    let mut g = ingest(&edges, table, m.inputs.exclude_isolates)?;
    if m.inputs.impute {
        let skip = [m.inputs.outcome.as_str(), m.inputs.treatment.as_str()];
        let (t, log) = g.table.simple_impute(&skip)?;
        g.table = t;
        dir.write("imputation.tsv", |w| {
            writeln!(w, "column\tn_missing\tvalue")?;
            for r in &log {
                writeln!(w, "{}\t{}\t{}", r.column, r.n_missing, r.value)?;
            }
            Ok(())
        })?;
    }
    dir.write("ingest.tsv", |w| g.report.write(w))?;
    Ok(g)
}

fn covariates(m: &RunManifest, g: &Ingested) -> Result<Covariates, CliError> {
    g.table.to_covariates(&[m.inputs.outcome.as_str(), m.inputs.treatment.as_str()])
}

fn fit(m: &RunManifest, dir: &OutputDir) -> Result<(), CliError> {
    let g = load_inputs(m, dir)?;
    let panel = NodePanel {
        y: g.table.numeric(&m.inputs.outcome)?,
        z: g.table.binary(&m.inputs.treatment)?,
        covariates: covariates(m, &g)?,
    };
    let data = FitData::new(&m.model, &g.network, &panel).map_err(|e| CliError::Validation(e.to_string()))?;
    let post = run_mcmc(&data, &m.priors, &m.sampler)?;
    dir.write("draws.tsv", |w| post.write_draws(w))?;
    dir.write("diagnostics.tsv", |w| post.diagnostics.write_table(w))?;
    dir.write("acceptance.tsv", |w| {
        writeln!(w, "block\tacceptance")?;
        for (name, rate) in post.acceptance_rates() {
            writeln!(w, "{name}\t{rate}")?;
        }
        Ok(())
    })?;
    let bad = post.diagnostics.unhealthy();
    if !bad.is_empty() {
        let names: Vec<String> = bad.iter().map(|p| format!("{} (R-hat {:.3})", p.name, p.rhat.unwrap_or(f64::NAN))).collect();
        dir.write("UNHEALTHY", |w| {
            writeln!(w, "R-hat above {} for:", crate::sampler::RHAT_THRESHOLD)?;
            for n in &names {
                writeln!(w, "{n}")?;
            }
            Ok(())
        })?;
        return Err(CliError::Unhealthy(names.join(", ")));
    }
    Ok(())
}

/// Reads draws written by `fit`. Random-effect columns are optional.
pub fn read_draws<R: std::io::BufRead>(reader: R, spec: &ModelSpec, m: usize) -> Result<Vec<ParamDraw>, CliError> {
    let mut lines = reader.lines();
    let header = lines.next().ok_or_else(|| CliError::Parse("draws file is empty".into()))??;
    let cols: Vec<&str> = header.split('\t').collect();
    let find = |name: &str| cols.iter().position(|c| *c == name);
    let nb = cols.iter().filter(|c| c.starts_with("beta_")).count();
    if nb != spec.n_beta() {
        return Err(CliError::Validation(format!("draws have {nb} beta columns, the model has {}", spec.n_beta())));
    }
    let ng = cols.iter().filter(|c| c.starts_with("gamma_")).count();
    let mut out = Vec::new();
    for (ln, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split('\t')
            .map(|t| t.parse::<f64>().map_err(|_| CliError::Parse(format!("draws line {}: bad value {t:?}", ln + 2))))
            .collect::<Result<_, _>>()?;
        if vals.len() != cols.len() {
            return Err(CliError::Parse(format!("draws line {}: {} fields for {} columns", ln + 2, vals.len(), cols.len())));
        }
        let get = |name: &str, default: f64| find(name).map_or(default, |j| vals[j]);
        let mut d = ParamDraw::zeros(spec, m);
        d.beta = (0..nb).map(|j| get(&format!("beta_{j}"), 0.0)).collect();
        d.gamma = (0..ng).map(|j| get(&format!("gamma_{j}"), 0.0)).collect();
        d.sigma_eps = get("sigma_eps", 0.0);
        d.tau = get("tau", 0.0);
        d.sigma_by = get("sigma_by", 0.0);
        d.sigma_bz = get("sigma_bz", 0.0);
        d.rho = get("rho", 0.0);
        for s in 0..m {
            d.b[s] = [get(&format!("by_{s}"), 0.0), get(&format!("bz_{s}"), 0.0)];
        }
        out.push(d);
    }
    if out.is_empty() {
        return Err(CliError::Validation("draws file has no draws".into()));
    }
    Ok(out)
}

fn standardize_cmd(m: &RunManifest, dir: &OutputDir) -> Result<(), CliError> {
    let g = load_inputs(m, dir)?;
    let cov = covariates(m, &g)?;
    let path = m.inputs.draws.as_ref().expect("checked");
    let file = File::open(path).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    let draws = read_draws(BufReader::new(file), &m.model, g.network.n_subgraphs())?;
    let st = Standardizer::new(&m.model, &g.network, &cov, &m.standardize).map_err(|e| CliError::Validation(e.to_string()))?;
    let post = st.run(&draws).map_err(|e| CliError::Validation(e.to_string()))?;
    dir.write("estimands.tsv", |w| post.write_summary(w))?;
    dir.write("estimand_draws.tsv", |w| post.write_draws(w))?;
    dir.write("de_curve.tsv", |w| post.write_de_curve(w))?;
    dir.write("ie_lattice.tsv", |w| post.write_ie_lattice(w))?;
    Ok(())
}

fn simulate(m: &RunManifest, dir: &OutputDir) -> Result<(), CliError> {
    let cfg = CampaignConfig {
        scenario: m.simulation.scenario_config(m.seed),
        methods: m.simulation.methods.clone(),
        sampler: m.sampler.clone(),
        standardize: m.standardize.clone(),
        priors: m.priors.clone(),
    };
    let report = run_campaign(&cfg).map_err(|e| match e {
        SimError::Config(_) => CliError::Validation(e.to_string()),
        _ => CliError::Sampler(e.to_string()),
    })?;
    dir.write("metrics.tsv", |w| report.write_metrics(w))?;
    dir.write("table2.tsv", |w| report.write_table2(w))?;
    dir.write("curves.tsv", |w| report.write_curves(w))?;
    dir.write("replicates.tsv", |w| report.write_replicates(w))?;
    dir.write("truth.tsv", |w| {
        writeln!(w, "alpha\tmu0\tmu1\tDE")?;
        for (a, t) in report.alpha_grid.iter().zip(&report.truth) {
            writeln!(w, "{a}\t{}\t{}\t{}", t.0, t.1, t.1 - t.0)?;
        }
        Ok(())
    })?;
    Ok(())
}

fn stats_row(w: &mut dyn Write, scope: &str, s: &SubgraphStats) -> std::io::Result<()> {
    let a = s.assortativity.map_or("NA".to_string(), |v| v.to_string());
    writeln!(
        w,
        "{scope}\t{}\t{}\t{}\t{}\t{}\t{}\t{a}",
        s.n_nodes, s.n_edges, s.avg_degree, s.degree_sd, s.edge_density, s.transitivity
    )
}

fn netstats(m: &RunManifest, dir: &OutputDir) -> Result<(), CliError> {
    let g = load_inputs(m, dir)?;
    let net: &ClusteredNetwork = &g.network;
    let attr_name = m.inputs.attribute.as_deref().unwrap_or(m.inputs.treatment.as_str());
    let attribute = match g.table.column(attr_name) {
        Some(_) => g.table.binary(attr_name)?,
        None => vec![false; net.n_nodes()],
    };
    let stats = network_stats(net, &attribute).map_err(|e| CliError::Validation(e.to_string()))?;
    dir.write("netstats.tsv", |w| {
        writeln!(w, "scope\tnodes\tedges\tavg_degree\tdegree_sd\tdensity\ttransitivity\tassortativity")?;
        stats_row(w, "global", &stats.global)?;
        for (s, st) in stats.per_subgraph.iter().enumerate() {
            stats_row(w, &format!("subgraph:{}", g.subgraph_labels[s]), st)?;
        }
        Ok(())
    })?;
    dir.write("degree.tsv", |w| {
        let mut counts = vec![0usize; net.max_degree() + 1];
        (0..net.n_nodes()).for_each(|i| counts[net.degree(i)] += 1);
        writeln!(w, "degree\tcount")?;
        for (d, c) in counts.iter().enumerate() {
            writeln!(w, "{d}\t{c}")?;
        }
        Ok(())
    })?;
    if g.table.column(&m.inputs.treatment).is_some() {
        let z = g.table.binary(&m.inputs.treatment)?;
        // Isolates have no neighbor proportion.
        let keep: Vec<usize> = (0..net.n_nodes()).filter(|&i| net.degree(i) > 0).collect();
        if !keep.is_empty() {
            let (sub, _) = net.induced(&keep).map_err(|e| CliError::Validation(e.to_string()))?;
            let zk: Vec<bool> = keep.iter().map(|&i| z[i]).collect();
            let h = treated_neighbor_histogram(&sub, &zk, m.inputs.histogram_bin_width)
                .map_err(|e| CliError::Validation(e.to_string()))?;
            dir.write("treated_neighbor_histogram.tsv", |w| {
                writeln!(w, "lower\tupper\tcount")?;
                for (lo, c) in h.lower.iter().zip(&h.counts) {
                    writeln!(w, "{lo}\t{}\t{c}", (lo + h.bin_width).min(1.0))?;
                }
                Ok(())
            })?;
        }
    }
    Ok(())
}
