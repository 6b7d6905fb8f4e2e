//! Bernoulli allocation weights, average potential outcomes and causal
//! contrasts.
//!
//! Under an allocation `α` each neighbor of a node is treated independently
//! with probability `α`, so the treated-neighbor count of a node of degree
//! `d` is Binomial(`d`, `α`). The individual average potential outcome is the
//! binomial average of the node's potential outcomes `y(z, k)`, subgraph
//! averages weight nodes equally, and the population average weights
//! subgraphs equally.

use std::fmt;
use std::io::Write;

use statrs::function::factorial::ln_binomial;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum EstimandError {
    #[error("treated-neighbor count {k} exceeds degree {d}")]
    CountAboveDegree { k: usize, d: usize },
    #[error("allocation {0} outside [0, 1]")]
    BadAlpha(f64),
    #[error("potential-outcome table has {got} exposure levels, degree {degree} needs {}", .degree + 1)]
    MissingLevel { degree: usize, got: usize },
    #[error("subgraph {0} has no nodes")]
    EmptySubgraph(usize),
    #[error("allocation {0} is not on the evaluated grid")]
    AlphaNotOnGrid(f64),
    #[error("length mismatch: {0}")]
    Shape(String),
}

const EXACT_BINOMIAL_MAX_DEGREE: usize = 30;

fn check_alpha(alpha: f64) -> Result<(), EstimandError> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(EstimandError::BadAlpha(alpha))
    }
}

fn binomial_exact(d: usize, k: usize) -> f64 {
    let k = k.min(d - k);
    let mut c: u64 = 1;
    for i in 0..k as u64 {
        c = c * (d as u64 - i) / (i + 1);
    }
    c as f64
}

/// Probability `C(d, k) α^k (1 − α)^(d − k)` of `k` treated neighbors among
/// `d` under allocation `α`. `α = 0` and `α = 1` are the degenerate
/// allocations with all mass at `k = 0` and `k = d`.
pub fn allocation_weight(k: usize, d: usize, alpha: f64) -> Result<f64, EstimandError> {
    if k > d {
        return Err(EstimandError::CountAboveDegree { k, d });
    }
    check_alpha(alpha)?;
    if alpha == 0.0 {
        return Ok(if k == 0 { 1.0 } else { 0.0 });
    }
    if alpha == 1.0 {
        return Ok(if k == d { 1.0 } else { 0.0 });
    }
    if d <= EXACT_BINOMIAL_MAX_DEGREE {
        Ok(binomial_exact(d, k) * alpha.powi(k as i32) * (1.0 - alpha).powi((d - k) as i32))
    } else {
        let ln = ln_binomial(d as u64, k as u64)
            + k as f64 * alpha.ln()
            + (d - k) as f64 * (-alpha).ln_1p();
        Ok(ln.exp())
    }
}

/// All weights `k = 0..=d` for one degree.
pub fn allocation_weights(d: usize, alpha: f64) -> Result<Vec<f64>, EstimandError> {
    (0..=d).map(|k| allocation_weight(k, d, alpha)).collect()
}

/// Weights for every degree up to `max_degree` at one allocation.
#[derive(Debug, Clone)]
pub struct WeightTable {
    pub alpha: f64,
    by_degree: Vec<Vec<f64>>,
}

impl WeightTable {
    pub fn new(max_degree: usize, alpha: f64) -> Result<Self, EstimandError> {
        let by_degree = (0..=max_degree)
            .map(|d| allocation_weights(d, alpha))
            .collect::<Result<_, _>>()?;
        Ok(Self { alpha, by_degree })
    }

    pub fn weights(&self, d: usize) -> &[f64] {
        &self.by_degree[d]
    }
}

/// Count-indexed potential outcomes `y(z, k)`, `k = 0..=d`, of one node.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialOutcomes {
    pub untreated: Vec<f64>,
    pub treated: Vec<f64>,
}

impl PotentialOutcomes {
    pub fn degree(&self) -> usize {
        self.untreated.len().saturating_sub(1)
    }

    pub fn levels(&self, z: bool) -> &[f64] {
        if z {
            &self.treated
        } else {
            &self.untreated
        }
    }

    pub fn get(&self, z: bool, k: usize) -> f64 {
        self.levels(z)[k]
    }
}

/// Individual average potential outcome `Σ_k y(z, k) π(k; d, α)` for a node
/// of degree `d` whose outcomes at the chosen `z` are `levels`.
pub fn individual_apo(levels: &[f64], degree: usize, alpha: f64) -> Result<f64, EstimandError> {
    if levels.len() != degree + 1 {
        return Err(EstimandError::MissingLevel { degree, got: levels.len() });
    }
    let w = allocation_weights(degree, alpha)?;
    Ok(weighted_sum(levels, &w))
}

pub(crate) fn weighted_sum(levels: &[f64], weights: &[f64]) -> f64 {
    levels.iter().zip(weights).map(|(y, w)| y * w).sum()
}

/// Averages node values within subgraphs, then subgraphs with equal weight.
/// Returns the subgraph-level values and the population value.
pub fn aggregate(
    values: &[f64],
    subgraph_of: &[usize],
    n_subgraphs: usize,
) -> Result<(Vec<f64>, f64), EstimandError> {
    if values.len() != subgraph_of.len() {
        return Err(EstimandError::Shape(format!(
            "{} values for {} nodes",
            values.len(),
            subgraph_of.len()
        )));
    }
    let mut sums = vec![0.0; n_subgraphs];
    let mut counts = vec![0usize; n_subgraphs];
    for (&v, &s) in values.iter().zip(subgraph_of) {
        if s >= n_subgraphs {
            return Err(EstimandError::Shape(format!("subgraph {s} out of range")));
        }
        sums[s] += v;
        counts[s] += 1;
    }
    if let Some(s) = counts.iter().position(|&c| c == 0) {
        return Err(EstimandError::EmptySubgraph(s));
    }
    let per_subgraph: Vec<f64> = sums.iter().zip(&counts).map(|(s, &c)| s / c as f64).collect();
    let population = per_subgraph.iter().sum::<f64>() / n_subgraphs as f64;
    Ok((per_subgraph, population))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Contrast {
    /// `DE(α) = μ_{1α} − μ_{0α}`
    Direct,
    /// `IE(α, α′) = μ_{0α} − μ_{0α′}`
    Indirect,
    /// `TE(α, α′) = DE(α) + IE(α, α′)`
    Total,
    /// `OE(α, α′) = μ_α − μ_{α′}`
    Overall,
    /// Spillover among the treated, `μ_{1α} − μ_{1α′}`.
    IndirectTreated,
}

impl Contrast {
    pub const ALL: [Contrast; 5] = [
        Contrast::Direct,
        Contrast::Indirect,
        Contrast::Total,
        Contrast::Overall,
        Contrast::IndirectTreated,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Contrast::Direct => "DE",
            Contrast::Indirect => "IE",
            Contrast::Total => "TE",
            Contrast::Overall => "OE",
            Contrast::IndirectTreated => "IE1",
        }
    }

    pub fn is_pairwise(self) -> bool {
        !matches!(self, Contrast::Direct)
    }
}

/// Identifies one scalar estimand.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Estimand {
    Mu { z: bool, alpha: f64 },
    MuMarginal { alpha: f64 },
    Contrast { kind: Contrast, alpha: f64, alpha_prime: Option<f64> },
}

impl Estimand {
    pub fn label(&self) -> &'static str {
        match self {
            Estimand::Mu { z: false, .. } => "mu0",
            Estimand::Mu { z: true, .. } => "mu1",
            Estimand::MuMarginal { .. } => "mu",
            Estimand::Contrast { kind, .. } => kind.label(),
        }
    }

    pub fn alpha(&self) -> f64 {
        match *self {
            Estimand::Mu { alpha, .. } | Estimand::MuMarginal { alpha } | Estimand::Contrast { alpha, .. } => alpha,
        }
    }

    pub fn alpha_prime(&self) -> Option<f64> {
        match *self {
            Estimand::Contrast { alpha_prime, .. } => alpha_prime,
            _ => None,
        }
    }

    pub fn de(alpha: f64) -> Self {
        Estimand::Contrast { kind: Contrast::Direct, alpha, alpha_prime: None }
    }

    pub fn ie(alpha: f64, alpha_prime: f64) -> Self {
        Estimand::Contrast { kind: Contrast::Indirect, alpha, alpha_prime: Some(alpha_prime) }
    }
}

impl fmt::Display for Estimand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.alpha_prime() {
            Some(ap) => write!(f, "{}({}, {})", self.label(), self.alpha(), ap),
            None => write!(f, "{}({})", self.label(), self.alpha()),
        }
    }
}

/// Posterior mean, SD and equi-tailed 95% interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub sd: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { mean: f64::NAN, sd: f64::NAN, lower: f64::NAN, upper: f64::NAN };
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = if n < 2 || sorted[0] == sorted[n - 1] {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        Self {
            mean,
            sd,
            lower: quantile_sorted(&sorted, 0.025),
            upper: quantile_sorted(&sorted, 0.975),
        }
    }

    pub fn covers(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }
}

/// Linear-interpolation quantile of sorted data (Hyndman–Fan type 7).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = q * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

const GRID_TOL: f64 = 1e-9;

/// Per-draw average potential outcomes on an allocation grid, with contrasts
/// derived on demand.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimandPosterior {
    alpha_grid: Vec<f64>,
    /// `mu[z][a][s]`
    mu: [Vec<Vec<f64>>; 2],
    /// `mu_marginal[a][s] = α μ_{1α} + (1 − α) μ_{0α}`
    mu_marginal: Vec<Vec<f64>>,
}

impl EstimandPosterior {
    /// `mu0[a][s]` and `mu1[a][s]` hold draw `s` at grid point `a`.
    pub fn new(alpha_grid: Vec<f64>, mu0: Vec<Vec<f64>>, mu1: Vec<Vec<f64>>) -> Result<Self, EstimandError> {
        if mu0.len() != alpha_grid.len() || mu1.len() != alpha_grid.len() {
            return Err(EstimandError::Shape("one draw vector per grid point required".into()));
        }
        let s = mu0.first().map_or(0, Vec::len);
        if mu0.iter().chain(&mu1).any(|v| v.len() != s) {
            return Err(EstimandError::Shape("ragged draw vectors".into()));
        }
        for &a in &alpha_grid {
            check_alpha(a)?;
        }
        let mu_marginal = alpha_grid
            .iter()
            .enumerate()
            .map(|(a, &alpha)| {
                mu1[a].iter().zip(&mu0[a]).map(|(m1, m0)| alpha * m1 + (1.0 - alpha) * m0).collect()
            })
            .collect();
        Ok(Self { alpha_grid, mu: [mu0, mu1], mu_marginal })
    }

    pub fn alpha_grid(&self) -> &[f64] {
        &self.alpha_grid
    }

    pub fn n_draws(&self) -> usize {
        self.mu[0].first().map_or(0, Vec::len)
    }

    pub fn alpha_index(&self, alpha: f64) -> Result<usize, EstimandError> {
        self.alpha_grid
            .iter()
            .position(|&a| (a - alpha).abs() < GRID_TOL)
            .ok_or(EstimandError::AlphaNotOnGrid(alpha))
    }

    pub fn mu(&self, z: bool, alpha: f64) -> Result<&[f64], EstimandError> {
        Ok(&self.mu[z as usize][self.alpha_index(alpha)?])
    }

    pub fn mu_marginal(&self, alpha: f64) -> Result<&[f64], EstimandError> {
        Ok(&self.mu_marginal[self.alpha_index(alpha)?])
    }

    /// Per-draw values of a contrast. `alpha_prime` is ignored for `DE`.
    pub fn contrast(&self, kind: Contrast, alpha: f64, alpha_prime: f64) -> Result<Vec<f64>, EstimandError> {
        let a = self.alpha_index(alpha)?;
        let b = self.alpha_index(alpha_prime)?;
        let diff = |x: &[f64], y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(p, q)| p - q).collect() };
        let (m0, m1) = (&self.mu[0], &self.mu[1]);
        Ok(match kind {
            Contrast::Direct => diff(&m1[a], &m0[a]),
            Contrast::Indirect => diff(&m0[a], &m0[b]),
            Contrast::Total => {
                let de = diff(&m1[a], &m0[a]);
                let ie = diff(&m0[a], &m0[b]);
                de.iter().zip(&ie).map(|(d, i)| d + i).collect()
            }
            Contrast::Overall => diff(&self.mu_marginal[a], &self.mu_marginal[b]),
            Contrast::IndirectTreated => diff(&m1[a], &m1[b]),
        })
    }

    pub fn values(&self, estimand: &Estimand) -> Result<Vec<f64>, EstimandError> {
        match *estimand {
            Estimand::Mu { z, alpha } => Ok(self.mu(z, alpha)?.to_vec()),
            Estimand::MuMarginal { alpha } => Ok(self.mu_marginal(alpha)?.to_vec()),
            Estimand::Contrast { kind, alpha, alpha_prime } => {
                self.contrast(kind, alpha, alpha_prime.unwrap_or(alpha))
            }
        }
    }

    pub fn summary(&self, estimand: &Estimand) -> Result<Summary, EstimandError> {
        Ok(Summary::of(&self.values(estimand)?))
    }

    /// Every estimand on the grid: `mu0`, `mu1`, `mu` and `DE` per point,
    /// then each pairwise contrast over all ordered grid pairs.
    pub fn estimands(&self) -> Vec<Estimand> {
        let mut out = Vec::new();
        for &alpha in &self.alpha_grid {
            out.push(Estimand::Mu { z: false, alpha });
            out.push(Estimand::Mu { z: true, alpha });
            out.push(Estimand::MuMarginal { alpha });
            out.push(Estimand::de(alpha));
        }
        for kind in Contrast::ALL.into_iter().filter(|k| k.is_pairwise()) {
            for &alpha in &self.alpha_grid {
                for &ap in &self.alpha_grid {
                    out.push(Estimand::Contrast { kind, alpha, alpha_prime: Some(ap) });
                }
            }
        }
        out
    }

    /// Long-format draws: `estimand alpha alpha_prime draw_index value`.
    pub fn write_draws<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "estimand\talpha\talpha_prime\tdraw_index\tvalue")?;
        for e in self.estimands() {
            let values = self.values(&e).expect("grid estimand");
            let ap = e.alpha_prime().map_or("NA".to_string(), |a| a.to_string());
            for (s, v) in values.iter().enumerate() {
                writeln!(w, "{}\t{}\t{}\t{}\t{}", e.label(), e.alpha(), ap, s, v)?;
            }
        }
        Ok(())
    }

    pub fn write_summary<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "estimand\talpha\talpha_prime\tmean\tsd\tq2.5\tq97.5")?;
        for e in self.estimands() {
            let s = self.summary(&e).expect("grid estimand");
            let ap = e.alpha_prime().map_or("NA".to_string(), |a| a.to_string());
            writeln!(w, "{}\t{}\t{}\t{}\t{}\t{}\t{}", e.label(), e.alpha(), ap, s.mean, s.sd, s.lower, s.upper)?;
        }
        Ok(())
    }

    /// DE(α) summary per grid point.
    pub fn write_de_curve<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "alpha\tmean\tsd\tq2.5\tq97.5")?;
        for &a in &self.alpha_grid {
            let s = self.summary(&Estimand::de(a)).expect("grid estimand");
            writeln!(w, "{}\t{}\t{}\t{}\t{}", a, s.mean, s.sd, s.lower, s.upper)?;
        }
        Ok(())
    }

    /// IE(α, α′) posterior mean on the grid lattice.
    pub fn write_ie_lattice<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "alpha\talpha_prime\tmean\tsd")?;
        for &a in &self.alpha_grid {
            for &b in &self.alpha_grid {
                let s = self.summary(&Estimand::ie(a, b)).expect("grid estimand");
                writeln!(w, "{}\t{}\t{}\t{}", a, b, s.mean, s.sd)?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn degenerate_and_simple_weights() {
        assert!((allocation_weight(0, 5, 1e-12).unwrap() - 1.0).abs() < 1e-10);
        assert_eq!(allocation_weight(1, 2, 0.5).unwrap(), 0.5);
        let s: f64 = allocation_weights(7, 0.7).unwrap().iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
        assert_eq!(allocation_weight(0, 4, 0.0).unwrap(), 1.0);
        assert_eq!(allocation_weight(4, 4, 1.0).unwrap(), 1.0);
        assert_eq!(allocation_weight(3, 4, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn count_above_degree_is_an_error() {
        assert_eq!(
            allocation_weight(3, 2, 0.5),
            Err(EstimandError::CountAboveDegree { k: 3, d: 2 })
        );
        assert_eq!(allocation_weight(0, 2, 1.5), Err(EstimandError::BadAlpha(1.5)));
    }

    #[test]
    fn log_space_matches_exact_near_switch() {
        // d = 31 goes through the log-gamma path; compare to a product form.
        let d = 31;
        for k in [0, 5, 15, 31] {
            let exact = (0..k).fold(1.0f64, |c, i| c * (d - i) as f64 / (i + 1) as f64)
                * 0.3f64.powi(k as i32)
                * 0.7f64.powi((d - k) as i32);
            let w = allocation_weight(k, d, 0.3).unwrap();
            assert!((w - exact).abs() <= 1e-12 * exact.max(1e-300), "{k}: {w} vs {exact}");
        }
    }

    #[test]
    fn apo_examples() {
        assert!((individual_apo(&[4.2; 6], 5, 0.37).unwrap() - 4.2).abs() < 1e-12);
        assert!((individual_apo(&[0.0, 1.0, 2.0, 3.0], 3, 0.5).unwrap() - 1.5).abs() < 1e-12);
        assert!((individual_apo(&[0.0, 1.0, 2.0, 3.0], 3, 0.7).unwrap() - 2.1).abs() < 1e-12);
        assert_eq!(
            individual_apo(&[0.0, 1.0], 3, 0.5),
            Err(EstimandError::MissingLevel { degree: 3, got: 2 })
        );
        // Isolates have a single exposure level.
        assert_eq!(individual_apo(&[2.5], 0, 0.4).unwrap(), 2.5);
    }

    #[test]
    fn aggregate_weights_subgraphs_equally() {
        let (sub, pop) = aggregate(&[1.0, 1.0, 3.0, 3.0, 3.0, 3.0], &[0, 0, 1, 1, 1, 1], 2).unwrap();
        assert_eq!(sub, vec![1.0, 3.0]);
        assert_eq!(pop, 2.0);
        let (_, single) = aggregate(&[1.0, 2.0, 6.0], &[0, 0, 0], 1).unwrap();
        assert_eq!(single, 3.0);
        assert_eq!(aggregate(&[1.0], &[0], 2), Err(EstimandError::EmptySubgraph(1)));
    }

    #[test]
    fn aggregate_differs_from_node_weighted_mean() {
        let (a, b, c) = (1.0, 2.0, 10.0);
        let mut values = vec![a, a, b, b];
        let mut groups = vec![0, 0, 1, 1];
        values.extend(std::iter::repeat_n(c, 10));
        groups.extend(std::iter::repeat_n(2, 10));
        let (_, pop) = aggregate(&values, &groups, 3).unwrap();
        assert!((pop - (a + b + c) / 3.0).abs() < 1e-12);
        let node_weighted = values.iter().sum::<f64>() / 14.0;
        assert!((pop - node_weighted).abs() > 1.0);
    }

    fn posterior(mu0: Vec<Vec<f64>>, mu1: Vec<Vec<f64>>) -> EstimandPosterior {
        EstimandPosterior::new(vec![0.3, 0.7], mu0, mu1).unwrap()
    }

    #[test]
    fn contrasts_with_equal_arms() {
        let m = vec![vec![1.0, 2.0], vec![1.5, 2.5]];
        let p = posterior(m.clone(), m);
        assert_eq!(p.contrast(Contrast::Direct, 0.3, 0.3).unwrap(), vec![0.0, 0.0]);
        assert_eq!(
            p.contrast(Contrast::Total, 0.7, 0.3).unwrap(),
            p.contrast(Contrast::Indirect, 0.7, 0.3).unwrap()
        );
    }

    #[test]
    fn contrasts_with_flat_untreated_arm() {
        let p = posterior(vec![vec![1.0], vec![1.0]], vec![vec![3.0], vec![4.0]]);
        assert_eq!(p.contrast(Contrast::Indirect, 0.7, 0.3).unwrap(), vec![0.0]);
        assert_eq!(
            p.contrast(Contrast::Total, 0.7, 0.3).unwrap(),
            p.contrast(Contrast::Direct, 0.7, 0.7).unwrap()
        );
        assert_eq!(p.contrast(Contrast::IndirectTreated, 0.7, 0.3).unwrap(), vec![1.0]);
    }

    #[test]
    fn main_scenario_truth_direct_effect() {
        let p = posterior(vec![vec![0.0], vec![1.27]], vec![vec![0.0], vec![3.93]]);
        let de = p.contrast(Contrast::Direct, 0.7, 0.7).unwrap()[0];
        assert!((de - 2.66).abs() < 1e-12);
    }

    #[test]
    fn off_grid_alpha_is_rejected() {
        let p = posterior(vec![vec![0.0], vec![0.0]], vec![vec![0.0], vec![0.0]]);
        assert_eq!(p.contrast(Contrast::Direct, 0.5, 0.5), Err(EstimandError::AlphaNotOnGrid(0.5)));
    }

    #[test]
    fn summary_of_identical_draws_has_zero_sd() {
        let s = Summary::of(&[0.1; 17]);
        assert_eq!(s.sd, 0.0);
        assert_eq!(s.lower, 0.1);
        assert_eq!(s.upper, 0.1);
    }

    #[test]
    fn tables_have_expected_rows() {
        let p = posterior(vec![vec![0.0, 1.0], vec![1.0, 2.0]], vec![vec![2.0, 3.0], vec![3.0, 5.0]]);
        let mut buf = Vec::new();
        p.write_summary(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        // 4 per grid point + 4 pairwise kinds × 4 ordered pairs.
        assert_eq!(text.lines().count(), 1 + 2 * 4 + 4 * 4);
        let mut buf = Vec::new();
        p.write_draws(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1 + 2 * 24);
    }

    /// Enumerates all 2^d neighborhood treatment vectors with their Bernoulli
    /// probabilities and looks up the outcome by treated count.
    fn brute_force_apo(levels: &[f64], d: usize, alpha: f64) -> f64 {
        let mut total = 0.0;
        for mask in 0u32..(1 << d) {
            let k = mask.count_ones() as usize;
            let prob = alpha.powi(k as i32) * (1.0 - alpha).powi((d - k) as i32);
            total += prob * levels[k];
        }
        total
    }

    proptest! {
        #[test]
        fn weights_sum_to_one(d in 0usize..=200, a in 1usize..=99) {
            let alpha = a as f64 / 100.0;
            let s: f64 = allocation_weights(d, alpha).unwrap().iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
        }

        #[test]
        fn apo_matches_enumeration(levels in prop::collection::vec(-5.0f64..5.0, 1..=13), a in 1usize..=99) {
            let d = levels.len() - 1;
            let alpha = a as f64 / 100.0;
            let fast = individual_apo(&levels, d, alpha).unwrap();
            prop_assert!((fast - brute_force_apo(&levels, d, alpha)).abs() < 1e-10);
        }

        #[test]
        fn monotone_tables_give_monotone_apo(
            steps in prop::collection::vec(0.0f64..2.0, 0..12),
            start in -3.0f64..3.0,
        ) {
            let mut levels = vec![start];
            for s in &steps {
                let last = *levels.last().unwrap();
                levels.push(last + s);
            }
            let d = levels.len() - 1;
            let mut prev = f64::NEG_INFINITY;
            for a in 1..=19 {
                let v = individual_apo(&levels, d, a as f64 / 20.0).unwrap();
                prop_assert!(v >= prev - 1e-12);
                prev = v;
            }
        }

        #[test]
        fn per_draw_identities(
            draws in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0, -5.0f64..5.0, -5.0f64..5.0), 1..20)
        ) {
            let mu0 = vec![draws.iter().map(|d| d.0).collect(), draws.iter().map(|d| d.1).collect()];
            let mu1 = vec![draws.iter().map(|d| d.2).collect(), draws.iter().map(|d| d.3).collect()];
            let p = EstimandPosterior::new(vec![0.2, 0.9], mu0, mu1).unwrap();
            for &(a, b) in &[(0.2, 0.9), (0.9, 0.2), (0.2, 0.2)] {
                let de = p.contrast(Contrast::Direct, a, a).unwrap();
                let ie = p.contrast(Contrast::Indirect, a, b).unwrap();
                let te = p.contrast(Contrast::Total, a, b).unwrap();
                for s in 0..de.len() {
                    prop_assert_eq!(te[s], de[s] + ie[s]);
                }
            }
            prop_assert!(p.contrast(Contrast::Indirect, 0.9, 0.9).unwrap().iter().all(|&v| v == 0.0));
            prop_assert!(p.contrast(Contrast::Overall, 0.2, 0.2).unwrap().iter().all(|&v| v == 0.0));
            let mix = p.mu_marginal(0.9).unwrap();
            for s in 0..draws.len() {
                let expect = 0.9 * draws[s].3 + 0.1 * draws[s].1;
                prop_assert!((mix[s] - expect).abs() < 1e-12);
            }
        }
    }
}
