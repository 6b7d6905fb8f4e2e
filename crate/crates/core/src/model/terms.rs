use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::ModelError;

/// One covariate column, optionally taken in absolute value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Factor {
    pub column: String,
    pub abs: bool,
}

/// A product of factors, written `x1`, `abs(x1)` or `abs(x1)*x2`. The empty
/// product, written `1`, is a constant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Term {
    pub factors: Vec<Factor>,
}

impl Term {
    pub fn columns(&self) -> impl Iterator<Item = &str> {
        self.factors.iter().map(|f| f.column.as_str())
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.factors.is_empty() {
            return write!(f, "1");
        }
        for (i, factor) in self.factors.iter().enumerate() {
            if i > 0 {
                write!(f, "*")?;
            }
            if factor.abs {
                write!(f, "abs({})", factor.column)?;
            } else {
                write!(f, "{}", factor.column)?;
            }
        }
        Ok(())
    }
}

impl FromStr for Term {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, ModelError> {
        let s = s.trim();
        if s == "1" {
            return Ok(Term { factors: Vec::new() });
        }
        let bad = || ModelError::BadTerm(s.to_string());
        let factors = s
            .split('*')
            .map(|part| {
                let part = part.trim();
                let (column, abs) = match part.strip_prefix("abs(").and_then(|p| p.strip_suffix(')')) {
                    Some(inner) => (inner.trim(), true),
                    None => (part, false),
                };
                let valid = !column.is_empty()
                    && column.chars().all(|c| c.is_alphanumeric() || "_.=-".contains(c));
                if valid {
                    Ok(Factor { column: column.to_string(), abs })
                } else {
                    Err(bad())
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Term { factors })
    }
}

impl Serialize for Term {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Term {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// How the treated-neighbor count enters the outcome model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExposureFn {
    /// `k / d`, and `0` for isolates.
    Proportion,
    /// `k`.
    Count,
}

impl ExposureFn {
    pub fn eval(self, k: usize, d: usize) -> f64 {
        match self {
            ExposureFn::Proportion if d == 0 => 0.0,
            ExposureFn::Proportion => k as f64 / d as f64,
            ExposureFn::Count => k as f64,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            ExposureFn::Proportion => "p",
            ExposureFn::Count => "k",
        }
    }
}

/// Treatment part of the outcome model: `β_Z z + β_N h(k) + β_ZN z·h(k)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TreatmentTerms {
    pub direct: bool,
    pub spillover: Option<ExposureFn>,
    pub interaction: Option<ExposureFn>,
}

impl Default for TreatmentTerms {
    fn default() -> Self {
        Self {
            direct: true,
            spillover: Some(ExposureFn::Proportion),
            interaction: Some(ExposureFn::Proportion),
        }
    }
}

impl TreatmentTerms {
    pub fn labels(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.direct {
            out.push("z".to_string());
        }
        if let Some(h) = self.spillover {
            out.push(h.symbol().to_string());
        }
        if let Some(h) = self.interaction {
            out.push(format!("z:{}", h.symbol()));
        }
        out
    }

    pub fn len(&self) -> usize {
        self.direct as usize + self.spillover.is_some() as usize + self.interaction.is_some() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Writes the treatment regressors for `(z, k, d)` into `out`.
    pub fn fill(&self, z: bool, k: usize, d: usize, out: &mut [f64]) {
        let zf = z as u8 as f64;
        let mut j = 0;
        if self.direct {
            out[j] = zf;
            j += 1;
        }
        if let Some(h) = self.spillover {
            out[j] = h.eval(k, d);
            j += 1;
        }
        if let Some(h) = self.interaction {
            out[j] = zf * h.eval(k, d);
        }
    }
}
