//! Node attribute tables: `node_id,subgraph_id,<attributes…>` CSV with typed
//! columns and a missingness mask.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::CliError;
use crate::model::Covariates;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ColumnType {
    #[default]
    Real,
    Binary,
    Categorical,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ColumnData {
    Numeric(Vec<Option<f64>>),
    Categorical(Vec<Option<String>>),
}

impl ColumnData {
    fn len(&self) -> usize {
        match self {
            ColumnData::Numeric(v) => v.len(),
            ColumnData::Categorical(v) => v.len(),
        }
    }

    fn n_missing(&self) -> usize {
        match self {
            ColumnData::Numeric(v) => v.iter().filter(|x| x.is_none()).count(),
            ColumnData::Categorical(v) => v.iter().filter(|x| x.is_none()).count(),
        }
    }

    fn select(&self, rows: &[usize]) -> Self {
        match self {
            ColumnData::Numeric(v) => ColumnData::Numeric(rows.iter().map(|&i| v[i]).collect()),
            ColumnData::Categorical(v) => ColumnData::Categorical(rows.iter().map(|&i| v[i].clone()).collect()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeColumn {
    pub name: String,
    pub kind: ColumnType,
    pub data: ColumnData,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeTable {
    pub ids: Vec<u64>,
    pub subgraph: Vec<String>,
    pub columns: Vec<NodeColumn>,
}

/// One imputed column.
#[derive(Debug, Clone, PartialEq)]
pub struct ImputeRecord {
    pub column: String,
    pub n_missing: usize,
    pub value: String,
}

fn is_missing(s: &str) -> bool {
    s.is_empty() || s == "NA"
}

impl NodeTable {
    /// Parses a node CSV. Columns not listed in `types` are real-valued.
    pub fn read_csv<R: Read>(reader: R, types: &BTreeMap<String, ColumnType>) -> Result<Self, CliError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header: Vec<String> = rdr.headers().map_err(parse_err)?.iter().map(str::to_string).collect();
        if header.len() < 2 || header[0] != "node_id" || header[1] != "subgraph_id" {
            return Err(CliError::Parse("node table must start with columns node_id,subgraph_id".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for h in &header[2..] {
            if !seen.insert(h.as_str()) {
                return Err(CliError::Parse(format!("duplicate node table column {h:?}")));
            }
        }
        if let Some(unknown) = types.keys().find(|k| !header[2..].contains(k)) {
            return Err(CliError::Validation(format!("declared column {unknown:?} is not in the node table")));
        }
        let mut ids = Vec::new();
        let mut subgraph = Vec::new();
        let mut raw: Vec<Vec<Option<String>>> = vec![Vec::new(); header.len() - 2];
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(parse_err)?;
            let line = row + 2;
            let id = rec[0]
                .parse::<u64>()
                .map_err(|_| CliError::Parse(format!("line {line}: bad node_id {:?}", &rec[0])))?;
            if is_missing(&rec[1]) {
                return Err(CliError::Validation(format!("node {id} has no subgraph_id")));
            }
            ids.push(id);
            subgraph.push(rec[1].to_string());
            for (c, col) in raw.iter_mut().enumerate() {
                let v = &rec[c + 2];
                col.push((!is_missing(v)).then(|| v.to_string()));
            }
        }
        let mut unique = std::collections::BTreeSet::new();
        if let Some(dup) = ids.iter().find(|i| !unique.insert(**i)) {
            return Err(CliError::Validation(format!("duplicate node_id {dup}")));
        }
        let columns = header[2..]
            .iter()
            .zip(raw)
            .map(|(name, vals)| {
                let kind = types.get(name).copied().unwrap_or_default();
                let data = match kind {
                    ColumnType::Categorical => ColumnData::Categorical(vals),
                    ColumnType::Real | ColumnType::Binary => ColumnData::Numeric(
                        vals.iter()
                            .enumerate()
                            .map(|(i, v)| {
                                v.as_deref()
                                    .map(|s| {
                                        let x: f64 = s.parse().map_err(|_| {
                                            CliError::Parse(format!("column {name:?}, node {}: {s:?} is not a number", ids[i]))
                                        })?;
                                        if kind == ColumnType::Binary && x != 0.0 && x != 1.0 {
                                            return Err(CliError::Validation(format!(
                                                "binary column {name:?}, node {}: value {s}",
                                                ids[i]
                                            )));
                                        }
                                        if !x.is_finite() {
                                            return Err(CliError::Validation(format!("column {name:?}, node {}: non-finite {s}", ids[i])));
                                        }
                                        Ok(x)
                                    })
                                    .transpose()
                            })
                            .collect::<Result<_, _>>()?,
                    ),
                };
                Ok(NodeColumn { name: name.clone(), kind, data })
            })
            .collect::<Result<_, CliError>>()?;
        Ok(Self { ids, subgraph, columns })
    }

    /// Writes the table back in the same layout; missing values as `NA`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["node_id".to_string(), "subgraph_id".to_string()];
        header.extend(self.columns.iter().map(|c| c.name.clone()));
        w.write_record(&header).map_err(io_err)?;
        for i in 0..self.ids.len() {
            let mut row = vec![self.ids[i].to_string(), self.subgraph[i].clone()];
            for c in &self.columns {
                row.push(match &c.data {
                    ColumnData::Numeric(v) => v[i].map_or("NA".to_string(), |x| x.to_string()),
                    ColumnData::Categorical(v) => v[i].clone().unwrap_or_else(|| "NA".to_string()),
                });
            }
            w.write_record(&row).map_err(io_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn column(&self, name: &str) -> Option<&NodeColumn> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn types(&self) -> BTreeMap<String, ColumnType> {
        self.columns.iter().map(|c| (c.name.clone(), c.kind)).collect()
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            ids: rows.iter().map(|&i| self.ids[i]).collect(),
            subgraph: rows.iter().map(|&i| self.subgraph[i].clone()).collect(),
            columns: self
                .columns
                .iter()
                .map(|c| NodeColumn { name: c.name.clone(), kind: c.kind, data: c.data.select(rows) })
                .collect(),
        }
    }

    /// Fully observed numeric column.
    pub fn numeric(&self, name: &str) -> Result<Vec<f64>, CliError> {
        let c = self.column(name).ok_or_else(|| CliError::Validation(format!("node table has no column {name:?}")))?;
        match &c.data {
            ColumnData::Numeric(v) => v
                .iter()
                .enumerate()
                .map(|(i, x)| x.ok_or_else(|| CliError::Validation(format!("column {name:?} is missing for node {}", self.ids[i]))))
                .collect(),
            ColumnData::Categorical(_) => Err(CliError::Validation(format!("column {name:?} is categorical"))),
        }
    }

    /// Fully observed 0/1 column as booleans.
    pub fn binary(&self, name: &str) -> Result<Vec<bool>, CliError> {
        let v = self.numeric(name)?;
        v.iter()
            .enumerate()
            .map(|(i, &x)| match x {
                0.0 => Ok(false),
                1.0 => Ok(true),
                _ => Err(CliError::Validation(format!("column {name:?} is not 0/1 at node {}", self.ids[i]))),
            })
            .collect()
    }

    /// Mean imputation of real columns and mode imputation of binary and
    /// categorical ones; ties of the mode go to the smallest level. Columns
    /// in `skip` are left untouched.
    pub fn simple_impute(&self, skip: &[&str]) -> Result<(Self, Vec<ImputeRecord>), CliError> {
        let mut out = self.clone();
        let mut log = Vec::new();
        for col in out.columns.iter_mut().filter(|c| !skip.contains(&c.name.as_str())) {
            let n_missing = col.data.n_missing();
            if n_missing == 0 {
                continue;
            }
            if n_missing == col.data.len() {
                return Err(CliError::Validation(format!("column {:?} is entirely missing", col.name)));
            }
            let value = match (&mut col.data, col.kind) {
                (ColumnData::Numeric(v), ColumnType::Real) => {
                    let obs: Vec<f64> = v.iter().flatten().copied().collect();
                    let mean = obs.iter().sum::<f64>() / obs.len() as f64;
                    v.iter_mut().filter(|x| x.is_none()).for_each(|x| *x = Some(mean));
                    mean.to_string()
                }
                (ColumnData::Numeric(v), _) => {
                    let ones = v.iter().flatten().filter(|&&x| x == 1.0).count();
                    let zeros = v.iter().flatten().count() - ones;
                    let mode = if ones > zeros { 1.0 } else { 0.0 };
                    v.iter_mut().filter(|x| x.is_none()).for_each(|x| *x = Some(mode));
                    mode.to_string()
                }
                (ColumnData::Categorical(v), _) => {
                    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
                    for s in v.iter().flatten() {
                        *counts.entry(s.as_str()).or_default() += 1;
                    }
                    let best = counts.values().copied().max().unwrap_or(0);
                    let mode = counts.iter().find(|(_, &c)| c == best).map(|(k, _)| k.to_string()).unwrap_or_default();
                    v.iter_mut().filter(|x| x.is_none()).for_each(|x| *x = Some(mode.clone()));
                    mode
                }
            };
            log::info!("imputed {n_missing} missing values of {:?} with {value}", col.name);
            log.push(ImputeRecord { column: col.name.clone(), n_missing, value });
        }
        Ok((out, log))
    }

    /// Covariates for every column except `exclude`. Categorical columns
    /// become indicators `<name>_<level>` for every level but the first in
    /// sorted order. Any remaining missing value is an error.
    pub fn to_covariates(&self, exclude: &[&str]) -> Result<Covariates, CliError> {
        let mut cov = Covariates::new();
        for col in self.columns.iter().filter(|c| !exclude.contains(&c.name.as_str())) {
            match &col.data {
                ColumnData::Numeric(_) => {
                    cov.insert(col.name.clone(), self.numeric(&col.name)?).map_err(|e| CliError::Validation(e.to_string()))?;
                }
                ColumnData::Categorical(v) => {
                    if let Some(i) = v.iter().position(Option::is_none) {
                        return Err(CliError::Validation(format!("column {:?} is missing for node {}", col.name, self.ids[i])));
                    }
                    let levels: std::collections::BTreeSet<&str> = v.iter().flatten().map(String::as_str).collect();
                    for level in levels.into_iter().skip(1) {
                        let ind = v.iter().map(|x| (x.as_deref() == Some(level)) as u8 as f64).collect();
                        cov.insert(indicator_name(&col.name, level), ind).map_err(|e| CliError::Validation(e.to_string()))?;
                    }
                }
            }
        }
        Ok(cov)
    }
}

/// Indicator column name for a categorical level; characters a model term
/// cannot carry become `_`.
pub fn indicator_name(column: &str, level: &str) -> String {
    let clean: String = level.chars().map(|c| if c.is_alphanumeric() || "_.=-".contains(c) { c } else { '_' }).collect();
    format!("{column}_{clean}")
}

fn parse_err(e: csv::Error) -> CliError {
    CliError::Parse(format!("node table: {e}"))
}

fn io_err(e: csv::Error) -> CliError {
    CliError::Io(std::io::Error::other(e.to_string()))
}
