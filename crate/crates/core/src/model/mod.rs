//! The joint mixed-effects model and its two ablations.
//!
//! Outcome model for node `i` of subgraph `ν` under individual treatment `z`
//! and `k` treated neighbors among `d`:
//!
//! ```text
//! y(z, k) = β_0 + β_Z z + β_N h(k, d) + β_ZN z·h(k, d) + Σ_j β_j x_j + W_i b^y_ν + δ_i
//! ```
//!
//! with `h(k, d) = k / d` by default (`0` for isolates). Errors are iid
//! `N(0, σ²)` or SAR, `δ_ν ~ N(0, σ² (I − τA_ν)⁻¹(I − τA_ν)⁻ᵀ)`. The exposure
//! model is `logit P(Z_i = 1) = Σ_j γ_j x^z_j + U_i b^z_ν`, and
//! `(b^y_ν, b^z_ν) ~ N₂(0, Σ)`.
//!
//! * `Jmm` fits both models with correlated random intercepts.
//! * `Lmm` fits only the outcome model with a random intercept.
//! * `Fem` fits only the outcome model without random effects.

mod density;
mod design;
mod terms;

pub use density::{
    exposure_loglik, half_cauchy_logpdf, iid_normal_loglik, joint_logpost, lkj2_logpdf, log1p_exp,
    log_posterior_terms, normal_logpdf, prior_logdensity, re_logprior, sar_loglik, LogPostTerms,
    SarBlock,
};
pub use design::{Covariates, ExposureDesign, FitData, NodePanel, OutcomeDesign};
pub use terms::{ExposureFn, Factor, Term, TreatmentTerms};

use serde::{Deserialize, Serialize};

use crate::graph::ClusteredNetwork;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("term references unknown covariate {0:?}")]
    MissingCovariate(String),
    #[error("cannot parse term {0:?}")]
    BadTerm(String),
    #[error("I - tau*A is singular at tau = {tau}")]
    SingularSar { tau: f64 },
    #[error("SAR errors require a block-diagonal adjacency (found {0} cross-subgraph ties)")]
    SarNeedsBlockDiagonal(usize),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Jmm,
    Lmm,
    Fem,
}

impl ModelKind {
    pub fn label(self) -> &'static str {
        match self {
            ModelKind::Jmm => "JMM",
            ModelKind::Lmm => "LMM",
            ModelKind::Fem => "FEM",
        }
    }

    pub fn has_outcome_re(self) -> bool {
        !matches!(self, ModelKind::Fem)
    }

    pub fn has_exposure_model(self) -> bool {
        matches!(self, ModelKind::Jmm)
    }
}

impl std::str::FromStr for ModelKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "jmm" => Ok(ModelKind::Jmm),
            "lmm" => Ok(ModelKind::Lmm),
            "fem" => Ok(ModelKind::Fem),
            other => Err(format!("unknown model kind {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub intercept: bool,
    pub treatment: TreatmentTerms,
    pub outcome_terms: Vec<Term>,
    pub exposure_intercept: bool,
    pub exposure_terms: Vec<Term>,
    pub sar: bool,
    /// Covariate column for the outcome random-intercept design; all ones
    /// when absent.
    pub outcome_re_design: Option<String>,
    /// Covariate column for the exposure random-intercept design; all ones
    /// when absent.
    pub exposure_re_design: Option<String>,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            kind: ModelKind::Jmm,
            intercept: true,
            treatment: TreatmentTerms::default(),
            outcome_terms: Vec::new(),
            exposure_intercept: true,
            exposure_terms: Vec::new(),
            sar: false,
            outcome_re_design: None,
            exposure_re_design: None,
        }
    }
}

impl ModelSpec {
    /// Correctly specified model for the simulation laboratory's generator,
    /// with covariates named `x1`, `x2` and trait `h`.
    pub fn simulation(kind: ModelKind, sar: bool) -> Self {
        let t = |s: &str| s.parse::<Term>().expect("static term");
        Self {
            kind,
            outcome_terms: vec![t("abs(x1)"), t("x2"), t("abs(x1)*x2")],
            exposure_terms: vec![t("abs(x1)"), t("x2*abs(x1)"), t("h")],
            sar,
            ..Self::default()
        }
    }

    pub fn with_kind(&self, kind: ModelKind) -> Self {
        Self { kind, ..self.clone() }
    }

    pub fn check(&self, network: &ClusteredNetwork) -> Result<(), ModelError> {
        if self.sar && !network.block_diagonal() {
            return Err(ModelError::SarNeedsBlockDiagonal(network.cross_subgraph_edges()));
        }
        Ok(())
    }

    pub fn outcome_labels(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.intercept {
            out.push("(Intercept)".to_string());
        }
        out.extend(self.treatment.labels());
        out.extend(self.outcome_terms.iter().map(|t| t.to_string()));
        out
    }

    pub fn exposure_labels(&self) -> Vec<String> {
        if !self.kind.has_exposure_model() {
            return Vec::new();
        }
        let mut out = Vec::new();
        if self.exposure_intercept {
            out.push("(Intercept)".to_string());
        }
        out.extend(self.exposure_terms.iter().map(|t| t.to_string()));
        out
    }

    pub fn n_beta(&self) -> usize {
        self.outcome_labels().len()
    }

    pub fn n_gamma(&self) -> usize {
        self.exposure_labels().len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorConfig {
    /// Variance of the independent normal priors on β and γ.
    pub coef_prior_var: f64,
    /// Scale of the half-Cauchy priors on σ_ε, σ_{b^y} and σ_{b^z}.
    pub half_cauchy_scale: f64,
    /// LKJ shape for the random-effect correlation matrix.
    pub lkj_eta: f64,
    /// Support of the uniform prior on τ.
    pub tau_bounds: (f64, f64),
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            coef_prior_var: 100.0,
            half_cauchy_scale: 25.0,
            lkj_eta: 1.0,
            tau_bounds: (-1.0, 1.0),
        }
    }
}

impl PriorConfig {
    pub fn check(&self) -> Result<(), ModelError> {
        let (lo, hi) = self.tau_bounds;
        if !(self.coef_prior_var > 0.0 && self.half_cauchy_scale > 0.0 && self.lkj_eta > 0.0 && lo < hi) {
            return Err(ModelError::Parameter(format!("invalid prior configuration {self:?}")));
        }
        Ok(())
    }
}

/// One value of all model parameters plus the subgraph random effects.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamDraw {
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub sigma_eps: f64,
    pub tau: f64,
    pub sigma_by: f64,
    pub sigma_bz: f64,
    pub rho: f64,
    /// `(b^y_ν, b^z_ν)` per subgraph.
    pub b: Vec<[f64; 2]>,
}

impl ParamDraw {
    /// All-zero coefficients, unit scales, no correlation.
    pub fn zeros(spec: &ModelSpec, n_subgraphs: usize) -> Self {
        Self {
            beta: vec![0.0; spec.n_beta()],
            gamma: vec![0.0; spec.n_gamma()],
            sigma_eps: 1.0,
            tau: 0.0,
            sigma_by: if spec.kind.has_outcome_re() { 1.0 } else { 0.0 },
            sigma_bz: if spec.kind.has_exposure_model() { 1.0 } else { 0.0 },
            rho: 0.0,
            b: vec![[0.0; 2]; n_subgraphs],
        }
    }

    /// Checks the parameter invariants; the returned message names the
    /// first violation.
    pub fn check(&self) -> Result<(), ModelError> {
        if !(self.sigma_eps > 0.0) {
            return Err(ModelError::Parameter(format!("sigma_eps = {} must be positive", self.sigma_eps)));
        }
        if !(self.sigma_by >= 0.0 && self.sigma_bz >= 0.0) {
            return Err(ModelError::Parameter("random-effect scales must be nonnegative".into()));
        }
        if !(-1.0..=1.0).contains(&self.rho) {
            return Err(ModelError::Parameter(format!("rho = {} outside [-1, 1]", self.rho)));
        }
        if !self.beta.iter().chain(&self.gamma).all(|v| v.is_finite()) || !self.tau.is_finite() {
            return Err(ModelError::Parameter("non-finite coefficient".into()));
        }
        Ok(())
    }

    /// Random-effect covariance `Σ = S R S` as `[[a, c], [c, d]]`.
    pub fn re_covariance(&self) -> [[f64; 2]; 2] {
        let c = self.rho * self.sigma_by * self.sigma_bz;
        [[self.sigma_by * self.sigma_by, c], [c, self.sigma_bz * self.sigma_bz]]
    }
}
