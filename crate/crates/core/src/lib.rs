//! Bayesian causal inference on clustered networks with interference.
//!
//! A joint mixed-effects model links a Gaussian outcome model (optionally with
//! simultaneous autoregressive errors) and a logistic exposure model through
//! correlated subgraph random intercepts. Posterior draws are turned into
//! average potential outcomes under Bernoulli allocations by Monte Carlo
//! standardization. The [`simlab`] module reproduces a simulation study of
//! the estimator's frequentist properties.

pub mod cli;
pub mod estimands;
pub mod graph;
pub mod model;
pub mod rng;
pub mod sampler;
pub mod simlab;
pub mod standardize;
