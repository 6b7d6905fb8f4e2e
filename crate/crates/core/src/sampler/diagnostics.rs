//! Split-chain potential scale reduction and rank-normalized bulk effective
//! sample size.

use statrs::distribution::{ContinuousCDF, Normal};

/// Threshold above which a run is flagged unhealthy.
pub const RHAT_THRESHOLD: f64 = 1.05;

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn var(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)
}

/// Splits every chain in half, dropping the middle draw of odd lengths.
fn split(chains: &[Vec<f64>]) -> Vec<&[f64]> {
    chains
        .iter()
        .flat_map(|c| {
            let h = c.len() / 2;
            [&c[..h], &c[c.len() - h..]]
        })
        .collect()
}

/// Split R-hat, `sqrt(max(V̂ / W, 1))`. `None` for fewer than two chains,
/// chains of unequal length or fewer than four draws per chain. Constant
/// input gives exactly one.
pub fn split_rhat(chains: &[Vec<f64>]) -> Option<f64> {
    if chains.len() < 2 {
        return None;
    }
    let n = chains[0].len();
    if n < 4 || chains.iter().any(|c| c.len() != n) {
        return None;
    }
    let halves = split(chains);
    let h = halves[0].len() as f64;
    let means: Vec<f64> = halves.iter().map(|c| mean(c)).collect();
    let w = halves.iter().map(|c| var(c)).sum::<f64>() / halves.len() as f64;
    let b = h * var(&means);
    if w == 0.0 {
        return Some(if b == 0.0 { 1.0 } else { f64::INFINITY });
    }
    let v = (h - 1.0) / h * w + b / h;
    Some((v / w).max(1.0).sqrt())
}

/// Replaces values by normal scores of their pooled ranks, averaging ties.
fn rank_normalize(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let total: usize = chains.iter().map(|c| c.len()).sum();
    let mut idx: Vec<(f64, usize, usize)> = chains
        .iter()
        .enumerate()
        .flat_map(|(c, xs)| xs.iter().enumerate().map(move |(i, &v)| (v, c, i)))
        .collect();
    idx.sort_by(|a, b| a.0.total_cmp(&b.0));
    let normal = Normal::standard();
    let mut out: Vec<Vec<f64>> = chains.iter().map(|c| vec![0.0; c.len()]).collect();
    let s = total as f64;
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && idx[end].0 == idx[start].0 {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        let z = normal.inverse_cdf((rank - 0.375) / (s + 0.25));
        for &(_, c, i) in &idx[start..end] {
            out[c][i] = z;
        }
        start = end;
    }
    out
}

/// Multi-chain effective sample size with Geyer's initial monotone sequence.
fn ess_raw(chains: &[&[f64]]) -> Option<f64> {
    let m = chains.len();
    let n = chains.iter().map(|c| c.len()).min()?;
    if m == 0 || n < 4 {
        return None;
    }
    let chains: Vec<&[f64]> = chains.iter().map(|c| &c[..n]).collect();
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let nf = n as f64;
    let acov = |lag: usize| -> f64 {
        let mut acc = 0.0;
        for (c, &mu) in chains.iter().zip(&means) {
            let mut s = 0.0;
            for t in 0..n - lag {
                s += (c[t] - mu) * (c[t + lag] - mu);
            }
            acc += s / nf;
        }
        acc / m as f64
    };
    let w_biased = acov(0);
    let w = w_biased * nf / (nf - 1.0);
    let b_over_n = if m > 1 { var(&means) } else { 0.0 };
    let var_plus = (nf - 1.0) / nf * w + b_over_n;
    if !(var_plus > 0.0) {
        return None;
    }
    let rho = |lag: usize| -> f64 {
        if lag == 0 {
            1.0
        } else {
            1.0 - (w - acov(lag)) / var_plus
        }
    };
    let mut tau = -1.0;
    let mut prev_pair = f64::INFINITY;
    let mut t = 0;
    while t + 1 < n {
        let mut pair = rho(t) + rho(t + 1);
        if pair < 0.0 {
            break;
        }
        if pair > prev_pair {
            pair = prev_pair;
        }
        tau += 2.0 * pair;
        prev_pair = pair;
        t += 2;
    }
    let total = (m * n) as f64;
    // Antithetic chains can push τ below its floor; cap ESS at S log10 S.
    let tau = tau.max(1.0 / total.log10());
    Some(total / tau)
}

/// Bulk ESS on rank-normalized split chains. One chain is enough; `None`
/// for constant or too-short input.
pub fn bulk_ess(chains: &[Vec<f64>]) -> Option<f64> {
    if chains.is_empty() || chains.iter().any(|c| c.len() < 4) {
        return None;
    }
    let all_same = chains.iter().flatten().all(|&v| v == chains[0][0]);
    if all_same {
        return None;
    }
    let z = rank_normalize(chains);
    ess_raw(&split(&z))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamDiagnostics {
    pub name: String,
    pub rhat: Option<f64>,
    pub ess: Option<f64>,
}

impl ParamDiagnostics {
    pub fn of(name: impl Into<String>, chains: &[Vec<f64>]) -> Self {
        Self { name: name.into(), rhat: split_rhat(chains), ess: bulk_ess(chains) }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    pub params: Vec<ParamDiagnostics>,
}

impl Diagnostics {
    /// Parameters whose R-hat exceeds the threshold.
    pub fn unhealthy(&self) -> Vec<&ParamDiagnostics> {
        self.params.iter().filter(|p| p.rhat.is_some_and(|r| !(r <= RHAT_THRESHOLD))).collect()
    }

    pub fn healthy(&self) -> bool {
        self.unhealthy().is_empty()
    }

    pub fn max_rhat(&self) -> Option<f64> {
        self.params.iter().filter_map(|p| p.rhat).reduce(f64::max)
    }

    pub fn min_ess(&self) -> Option<f64> {
        self.params.iter().filter_map(|p| p.ess).reduce(f64::min)
    }

    /// Tab-separated table `parameter rhat ess`; undefined values print as
    /// `NA`.
    pub fn write_table<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "parameter\trhat\tess")?;
        let fmt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| x.to_string());
        for p in &self.params {
            writeln!(w, "{}\t{}\t{}", p.name, fmt(p.rhat), fmt(p.ess))?;
        }
        Ok(())
    }
}
