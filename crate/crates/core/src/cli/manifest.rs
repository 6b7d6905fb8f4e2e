use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::table::ColumnType;
use super::CliError;
use crate::model::{ModelKind, ModelSpec, PriorConfig};
use crate::sampler::SamplerConfig;
use crate::simlab::{ScenarioConfig, ScenarioName};
use crate::standardize::StandardizeConfig;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Fit,
    Standardize,
    Simulate,
    Netstats,
}

impl Command {
    pub fn label(self) -> &'static str {
        match self {
            Command::Fit => "fit",
            Command::Standardize => "standardize",
            Command::Simulate => "simulate",
            Command::Netstats => "netstats",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Inputs {
    /// Whitespace-separated `i j` node-id pairs.
    pub edges: Option<PathBuf>,
    /// `node_id,subgraph_id,…` CSV.
    pub nodes: Option<PathBuf>,
    /// Posterior draws written by `fit`, for `standardize`.
    pub draws: Option<PathBuf>,
    pub outcome: String,
    pub treatment: String,
    /// Declared column types; undeclared columns are real.
    pub columns: BTreeMap<String, ColumnType>,
    pub exclude_isolates: bool,
    /// Mean/mode imputation of missing covariates.
    pub impute: bool,
    /// Binary attribute for the assortativity coefficient; defaults to the
    /// treatment.
    pub attribute: Option<String>,
    pub histogram_bin_width: f64,
}

impl Default for Inputs {
    fn default() -> Self {
        Self {
            edges: None,
            nodes: None,
            draws: None,
            outcome: "y".into(),
            treatment: "z".into(),
            columns: BTreeMap::new(),
            exclude_isolates: false,
            impute: false,
            attribute: None,
            histogram_bin_width: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    /// Thirty subgraphs and 100 replicates.
    #[default]
    Desk,
    /// Fifty subgraphs and 500 replicates.
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSection {
    pub scenario: ScenarioName,
    pub rho: f64,
    pub scale: Scale,
    pub n_replicates: Option<usize>,
    pub regenerate_network: bool,
    pub methods: Vec<ModelKind>,
}

impl Default for SimulationSection {
    fn default() -> Self {
        Self {
            scenario: ScenarioName::Main,
            rho: 0.0,
            scale: Scale::Desk,
            n_replicates: None,
            regenerate_network: false,
            methods: vec![ModelKind::Jmm, ModelKind::Lmm, ModelKind::Fem],
        }
    }
}

impl SimulationSection {
    pub fn scenario_config(&self, seed: u64) -> ScenarioConfig {
        let base = match self.scale {
            Scale::Desk => ScenarioConfig::desk(self.scenario, self.rho),
            Scale::Full => ScenarioConfig::new(self.scenario, self.rho),
        };
        let mut sc = base.with_seed(seed);
        // Scenarios that fix their own subgraph count keep it at desk scale.
        if self.scenario == ScenarioName::FewerSubgraphs {
            sc.size_law = crate::simlab::thirty_subgraphs();
        }
        if let Some(n) = self.n_replicates {
            sc.n_replicates = n;
        }
        sc.regenerate_network = self.regenerate_network;
        sc
    }
}

/// Everything a run depends on. The master seed overrides the seeds of the
/// sampler, standardization and scenario sections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub format_version: u32,
    pub command: Command,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub inputs: Inputs,
    #[serde(default)]
    pub model: ModelSpec,
    #[serde(default)]
    pub priors: PriorConfig,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub standardize: StandardizeConfig,
    #[serde(default)]
    pub simulation: SimulationSection,
}

impl RunManifest {
    pub fn new(command: Command) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            command,
            seed: 0,
            output: None,
            inputs: Inputs::default(),
            model: ModelSpec::default(),
            priors: PriorConfig::default(),
            sampler: SamplerConfig::default(),
            standardize: StandardizeConfig::default(),
            simulation: SimulationSection::default(),
        }
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        #[derive(Deserialize)]
        struct Probe {
            format_version: Option<u32>,
        }
        let probe: Probe = toml::from_str(text).map_err(|e| CliError::Parse(format!("manifest: {e}")))?;
        match probe.format_version {
            None => return Err(CliError::Parse("manifest has no format_version".into())),
            Some(FORMAT_VERSION) => {}
            Some(v) => {
                return Err(CliError::Validation(format!(
                    "manifest format_version {v} is not supported (expected {FORMAT_VERSION})"
                )))
            }
        }
        toml::from_str(text).map_err(|e| CliError::Parse(format!("manifest: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read manifest {}: {e}", path.display())))?;
        let mut m = Self::parse(&text)?;
        m.resolve_paths(path.parent().unwrap_or(Path::new(".")))?;
        Ok(m)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }

    /// Makes input paths absolute relative to `base`, so that a copy of the
    /// manifest elsewhere still points at the same files.
    pub fn resolve_paths(&mut self, base: &Path) -> Result<(), CliError> {
        let fix = |p: &mut Option<PathBuf>| -> Result<(), CliError> {
            if let Some(path) = p {
                let joined = if path.is_absolute() { path.clone() } else { base.join(&*path) };
                *path = joined
                    .canonicalize()
                    .map_err(|e| CliError::Validation(format!("input {}: {e}", joined.display())))?;
            }
            Ok(())
        };
        fix(&mut self.inputs.edges)?;
        fix(&mut self.inputs.nodes)?;
        fix(&mut self.inputs.draws)?;
        Ok(())
    }

    /// Copies the master seed into every sub-config.
    pub fn propagate_seed(&mut self) {
        self.sampler.seed = self.seed;
        self.standardize.seed = self.seed;
    }

    pub fn check(&self) -> Result<(), CliError> {
        let need = |p: &Option<PathBuf>, what: &str| {
            if p.is_none() {
                Err(CliError::Validation(format!("{} needs inputs.{what}", self.command.label())))
            } else {
                Ok(())
            }
        };
        match self.command {
            Command::Fit => {
                need(&self.inputs.edges, "edges")?;
                need(&self.inputs.nodes, "nodes")?;
                self.sampler.check().map_err(|e| CliError::Validation(e.to_string()))?;
                self.priors.check().map_err(|e| CliError::Validation(e.to_string()))?;
            }
            Command::Standardize => {
                need(&self.inputs.edges, "edges")?;
                need(&self.inputs.nodes, "nodes")?;
                need(&self.inputs.draws, "draws")?;
                self.standardize.check().map_err(|e| CliError::Validation(e.to_string()))?;
            }
            Command::Netstats => {
                need(&self.inputs.edges, "edges")?;
                need(&self.inputs.nodes, "nodes")?;
            }
            Command::Simulate => {
                self.sampler.check().map_err(|e| CliError::Validation(e.to_string()))?;
                self.standardize.check().map_err(|e| CliError::Validation(e.to_string()))?;
                self.priors.check().map_err(|e| CliError::Validation(e.to_string()))?;
                self.simulation.scenario_config(self.seed).check().map_err(|e| CliError::Validation(e.to_string()))?;
                if self.simulation.methods.is_empty() {
                    return Err(CliError::Validation("simulation.methods is empty".into()));
                }
            }
        }
        if !(self.inputs.histogram_bin_width > 0.0 && self.inputs.histogram_bin_width <= 1.0) {
            return Err(CliError::Validation("inputs.histogram_bin_width outside (0, 1]".into()));
        }
        Ok(())
    }
}
