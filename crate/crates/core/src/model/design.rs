use super::density::SarBlock;
use super::{ModelError, ModelSpec, Term, TreatmentTerms};
use crate::graph::ClusteredNetwork;

/// Named real-valued node covariates, one column per name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Covariates {
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
}

impl Covariates {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds or replaces a column.
    pub fn insert(&mut self, name: impl Into<String>, values: Vec<f64>) -> Result<(), ModelError> {
        let name = name.into();
        if let Some(n) = self.n_rows() {
            if values.len() != n {
                return Err(ModelError::Shape(format!(
                    "column {name:?} has {} rows, expected {n}",
                    values.len()
                )));
            }
        }
        match self.names.iter().position(|x| *x == name) {
            Some(j) => self.columns[j] = values,
            None => {
                self.names.push(name);
                self.columns.push(values);
            }
        }
        Ok(())
    }

    pub fn with(mut self, name: impl Into<String>, values: Vec<f64>) -> Result<Self, ModelError> {
        self.insert(name, values)?;
        Ok(self)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.names.iter().position(|x| x == name).map(|j| self.columns[j].as_slice())
    }

    pub fn n_rows(&self) -> Option<usize> {
        self.columns.first().map(|c| c.len())
    }

    /// Rows reordered (or subset) by `index`.
    pub fn select_rows(&self, index: &[usize]) -> Self {
        Self {
            names: self.names.clone(),
            columns: self.columns.iter().map(|c| index.iter().map(|&i| c[i]).collect()).collect(),
        }
    }

    /// Evaluates a term at every row.
    pub fn eval_term(&self, term: &Term, n: usize) -> Result<Vec<f64>, ModelError> {
        let mut out = vec![1.0; n];
        for factor in &term.factors {
            let col = self
                .column(&factor.column)
                .ok_or_else(|| ModelError::MissingCovariate(factor.column.clone()))?;
            if col.len() != n {
                return Err(ModelError::Shape(format!("column {:?} length {}", factor.column, col.len())));
            }
            for (o, &v) in out.iter_mut().zip(col) {
                *o *= if factor.abs { v.abs() } else { v };
            }
        }
        Ok(out)
    }
}

/// Observed node data aligned with the network's node numbering.
#[derive(Debug, Clone, PartialEq)]
pub struct NodePanel {
    pub y: Vec<f64>,
    pub z: Vec<bool>,
    pub covariates: Covariates,
}

impl NodePanel {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn select_rows(&self, index: &[usize]) -> Self {
        Self {
            y: index.iter().map(|&i| self.y[i]).collect(),
            z: index.iter().map(|&i| self.z[i]).collect(),
            covariates: self.covariates.select_rows(index),
        }
    }
}

fn term_matrix(terms: &[Term], cov: &Covariates, n: usize) -> Result<(usize, Vec<f64>), ModelError> {
    let cols = terms.iter().map(|t| cov.eval_term(t, n)).collect::<Result<Vec<_>, _>>()?;
    let p = cols.len();
    let mut rows = vec![0.0; n * p];
    for (j, col) in cols.iter().enumerate() {
        for i in 0..n {
            rows[i * p + j] = col[i];
        }
    }
    Ok((p, rows))
}

/// Outcome regressors. The treatment block depends on `(z, k, d)` and is
/// evaluated on demand; the covariate block is fixed per node.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeDesign {
    intercept: bool,
    treatment: TreatmentTerms,
    n_cov: usize,
    cov: Vec<f64>,
}

impl OutcomeDesign {
    pub fn new(spec: &ModelSpec, covariates: &Covariates, n: usize) -> Result<Self, ModelError> {
        let (n_cov, cov) = term_matrix(&spec.outcome_terms, covariates, n)?;
        Ok(Self { intercept: spec.intercept, treatment: spec.treatment, n_cov, cov })
    }

    pub fn n_beta(&self) -> usize {
        self.intercept as usize + self.treatment.len() + self.n_cov
    }

    fn treatment_offset(&self) -> usize {
        self.intercept as usize
    }

    fn covariate_offset(&self) -> usize {
        self.intercept as usize + self.treatment.len()
    }

    pub fn row(&self, node: usize, z: bool, k: usize, d: usize, out: &mut [f64]) {
        if self.intercept {
            out[0] = 1.0;
        }
        let t0 = self.treatment_offset();
        let c0 = self.covariate_offset();
        self.treatment.fill(z, k, d, &mut out[t0..c0]);
        out[c0..c0 + self.n_cov].copy_from_slice(&self.cov[node * self.n_cov..(node + 1) * self.n_cov]);
    }

    /// Intercept plus covariate part: everything that does not depend on
    /// `(z, k)`.
    pub fn baseline(&self, node: usize, beta: &[f64]) -> f64 {
        let c0 = self.covariate_offset();
        let intercept = if self.intercept { beta[0] } else { 0.0 };
        let row = &self.cov[node * self.n_cov..(node + 1) * self.n_cov];
        intercept + row.iter().zip(&beta[c0..]).map(|(x, b)| x * b).sum::<f64>()
    }

    pub fn treatment_effect(&self, z: bool, k: usize, d: usize, beta: &[f64]) -> f64 {
        let t0 = self.treatment_offset();
        let mut buf = [0.0; 3];
        let len = self.treatment.len();
        self.treatment.fill(z, k, d, &mut buf[..len]);
        buf[..len].iter().zip(&beta[t0..t0 + len]).map(|(x, b)| x * b).sum()
    }

    /// Systematic outcome mean without random effects.
    pub fn mean(&self, node: usize, z: bool, k: usize, d: usize, beta: &[f64]) -> f64 {
        self.baseline(node, beta) + self.treatment_effect(z, k, d, beta)
    }
}

/// Exposure regressors, fixed per node.
#[derive(Debug, Clone, PartialEq)]
pub struct ExposureDesign {
    n_gamma: usize,
    rows: Vec<f64>,
}

impl ExposureDesign {
    pub fn new(spec: &ModelSpec, covariates: &Covariates, n: usize) -> Result<Self, ModelError> {
        let mut terms = Vec::new();
        if spec.exposure_intercept {
            terms.push(Term { factors: Vec::new() });
        }
        terms.extend(spec.exposure_terms.iter().cloned());
        let (n_gamma, rows) = term_matrix(&terms, covariates, n)?;
        Ok(Self { n_gamma, rows })
    }

    pub fn n_gamma(&self) -> usize {
        self.n_gamma
    }

    pub fn row(&self, node: usize) -> &[f64] {
        &self.rows[node * self.n_gamma..(node + 1) * self.n_gamma]
    }

    pub fn linear(&self, node: usize, gamma: &[f64]) -> f64 {
        self.row(node).iter().zip(gamma).map(|(x, g)| x * g).sum()
    }
}

/// A dataset bound to a model specification, with design matrices and SAR
/// blocks precomputed.
#[derive(Debug, Clone)]
pub struct FitData {
    pub spec: ModelSpec,
    pub network: ClusteredNetwork,
    pub y: Vec<f64>,
    pub z: Vec<bool>,
    /// Observed treated-neighbor count of every node.
    pub k: Vec<usize>,
    pub outcome: OutcomeDesign,
    pub exposure: Option<ExposureDesign>,
    /// Outcome random-effect design `W_i`.
    pub w: Vec<f64>,
    /// Exposure random-effect design `U_i`.
    pub u: Vec<f64>,
    /// Observed outcome design, `N × n_beta` row major.
    pub x_obs: Vec<f64>,
    pub sar_blocks: Option<Vec<SarBlock>>,
}

impl FitData {
    pub fn new(spec: &ModelSpec, network: &ClusteredNetwork, panel: &NodePanel) -> Result<Self, ModelError> {
        let n = network.n_nodes();
        if panel.y.len() != n || panel.z.len() != n {
            return Err(ModelError::Shape(format!(
                "panel has {} outcomes and {} treatments for {n} nodes",
                panel.y.len(),
                panel.z.len()
            )));
        }
        if let Some(rows) = panel.covariates.n_rows() {
            if rows != n {
                return Err(ModelError::Shape(format!("covariates have {rows} rows for {n} nodes")));
            }
        }
        if let Some(bad) = panel.y.iter().position(|v| !v.is_finite()) {
            return Err(ModelError::Shape(format!("outcome of node {bad} is not finite")));
        }
        spec.check(network)?;
        let outcome = OutcomeDesign::new(spec, &panel.covariates, n)?;
        let exposure = if spec.kind.has_exposure_model() {
            Some(ExposureDesign::new(spec, &panel.covariates, n)?)
        } else {
            None
        };
        let re_column = |name: &Option<String>| -> Result<Vec<f64>, ModelError> {
            match name {
                None => Ok(vec![1.0; n]),
                Some(c) => panel
                    .covariates
                    .column(c)
                    .map(|v| v.to_vec())
                    .ok_or_else(|| ModelError::MissingCovariate(c.clone())),
            }
        };
        let w = re_column(&spec.outcome_re_design)?;
        let u = re_column(&spec.exposure_re_design)?;
        let k = network.treated_neighbor_counts(&panel.z);
        let p = outcome.n_beta();
        let mut x_obs = vec![0.0; n * p];
        for i in 0..n {
            outcome.row(i, panel.z[i], k[i], network.degree(i), &mut x_obs[i * p..(i + 1) * p]);
        }
        let sar_blocks = spec.sar.then(|| {
            (0..network.n_subgraphs()).map(|s| SarBlock::new(network.block_adjacency(s))).collect()
        });
        Ok(Self {
            spec: spec.clone(),
            network: network.clone(),
            y: panel.y.clone(),
            z: panel.z.clone(),
            k,
            outcome,
            exposure,
            w,
            u,
            x_obs,
            sar_blocks,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.y.len()
    }

    pub fn n_subgraphs(&self) -> usize {
        self.network.n_subgraphs()
    }

    pub fn n_beta(&self) -> usize {
        self.outcome.n_beta()
    }

    pub fn n_gamma(&self) -> usize {
        self.exposure.as_ref().map_or(0, |e| e.n_gamma())
    }

    pub fn x_row(&self, i: usize) -> &[f64] {
        let p = self.n_beta();
        &self.x_obs[i * p..(i + 1) * p]
    }

    /// Fixed-effect part of the observed outcome mean.
    pub fn fixed_mean(&self, i: usize, beta: &[f64]) -> f64 {
        self.x_row(i).iter().zip(beta).map(|(x, b)| x * b).sum()
    }

    /// `y − Xβ − W b^y`, in node order.
    pub fn outcome_residuals(&self, beta: &[f64], b: &[[f64; 2]]) -> Vec<f64> {
        let use_re = self.spec.kind.has_outcome_re();
        (0..self.n_nodes())
            .map(|i| {
                let re = if use_re { self.w[i] * b[self.network.subgraph_of(i)][0] } else { 0.0 };
                self.y[i] - self.fixed_mean(i, beta) - re
            })
            .collect()
    }

    /// Exposure linear predictor `η_i` in node order; empty without an
    /// exposure model.
    pub fn exposure_linear(&self, gamma: &[f64], b: &[[f64; 2]]) -> Vec<f64> {
        match &self.exposure {
            None => Vec::new(),
            Some(e) => (0..self.n_nodes())
                .map(|i| e.linear(i, gamma) + self.u[i] * b[self.network.subgraph_of(i)][1])
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelKind;

    #[test]
    fn simulation_truth_mean_at_full_exposure() {
        let spec = ModelSpec::simulation(ModelKind::Jmm, false);
        let cov = Covariates::new()
            .with("x1", vec![0.0])
            .unwrap()
            .with("x2", vec![0.0])
            .unwrap()
            .with("h", vec![0.0])
            .unwrap();
        let design = OutcomeDesign::new(&spec, &cov, 1).unwrap();
        let beta = [2.0, 2.0, 1.0, 1.0, -1.5, 2.0, -3.0];
        assert_eq!(design.mean(0, true, 4, 4, &beta), 6.0);
        assert_eq!(design.mean(0, false, 0, 4, &beta), 2.0);
        assert_eq!(design.mean(0, true, 0, 0, &[0.0; 7]), 0.0);
    }

    #[test]
    fn untreated_unexposed_mean_is_baseline_only() {
        let spec = ModelSpec::simulation(ModelKind::Fem, false);
        let cov = Covariates::new()
            .with("x1", vec![-0.7])
            .unwrap()
            .with("x2", vec![1.0])
            .unwrap();
        let design = OutcomeDesign::new(&spec, &cov, 1).unwrap();
        let beta = [0.3, 5.0, 7.0, 11.0, 1.0, 2.0, 3.0];
        let expected = 0.3 + 0.7 + 2.0 + 3.0 * 0.7;
        assert!((design.mean(0, false, 0, 3, &beta) - expected).abs() < 1e-12);
        assert_eq!(design.baseline(0, &beta), design.mean(0, false, 0, 3, &beta));
    }

    #[test]
    fn exposure_truth_predictor() {
        let spec = ModelSpec::simulation(ModelKind::Jmm, false);
        let cov = Covariates::new()
            .with("x1", vec![1.0])
            .unwrap()
            .with("x2", vec![1.0])
            .unwrap()
            .with("h", vec![0.0])
            .unwrap();
        let design = ExposureDesign::new(&spec, &cov, 1).unwrap();
        let eta = design.linear(0, &[0.1, 0.2, 0.2, -1.0]);
        assert!((eta - 0.5).abs() < 1e-12);
        let p = 1.0 / (1.0 + (-eta).exp());
        assert!((p - 0.6225).abs() < 1e-4);
    }

    #[test]
    fn missing_covariate_is_an_error() {
        let spec = ModelSpec::simulation(ModelKind::Jmm, false);
        let cov = Covariates::new().with("x1", vec![0.0]).unwrap();
        assert_eq!(
            OutcomeDesign::new(&spec, &cov, 1).unwrap_err(),
            ModelError::MissingCovariate("x2".into())
        );
    }
}
