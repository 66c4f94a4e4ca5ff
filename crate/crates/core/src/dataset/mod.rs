//! Tabular data model, CSV ingestion and the preprocessing chain.
//!
//! Every operation takes a `&Dataset` and returns a new one; nothing is
//! mutated in place. Each transform appends a line to the provenance log
//! of the form `STEP <name> <param=value ...> <rows_before>-><rows_after>`.

mod io;
mod preprocess;
mod split;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::FeatureMatrix;

pub use io::{load_csv, load_schema, read_csv, write_csv, write_csv_string};
pub use preprocess::{
    basin_weights, basin_weights_from_density, drop_low_variance, filter_salinity_outliers,
    finalize_weights, impute_mean, one_hot_encode, prune_correlated, standardize, ScaledColumn,
    ScalerParams, DEFAULT_CORRELATION_THRESHOLD, DEFAULT_OUTLIER_THRESHOLD,
    DEFAULT_VARIANCE_EPS,
};
pub use split::{temporal_split, SplitPlan, DEFAULT_VALID_FRACTION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ColumnKind {
    Numeric,
    Categorical,
    GroupKey,
    TimeKey,
    Target,
}

impl ColumnKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ColumnKind::Numeric => "numeric",
            ColumnKind::Categorical => "categorical",
            ColumnKind::GroupKey => "group-key",
            ColumnKind::TimeKey => "time-key",
            ColumnKind::Target => "target",
        }
    }

    /// Numeric, target and time-key columns hold numbers; the rest hold text.
    pub fn is_numeric_storage(self) -> bool {
        matches!(
            self,
            ColumnKind::Numeric | ColumnKind::Target | ColumnKind::TimeKey
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
    #[serde(default)]
    pub units: Option<String>,
}

impl ColumnSpec {
    pub fn new(name: impl Into<String>, kind: ColumnKind) -> Self {
        Self {
            name: name.into(),
            kind,
            units: None,
        }
    }

    pub fn with_units(mut self, units: impl Into<String>) -> Self {
        self.units = Some(units.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "values", rename_all = "lowercase")]
pub enum ColumnData {
    Numeric(Vec<Option<f64>>),
    Text(Vec<Option<String>>),
}

impl ColumnData {
    pub fn len(&self) -> usize {
        match self {
            ColumnData::Numeric(v) => v.len(),
            ColumnData::Text(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn missing_count(&self) -> usize {
        match self {
            ColumnData::Numeric(v) => v.iter().filter(|c| c.is_none()).count(),
            ColumnData::Text(v) => v.iter().filter(|c| c.is_none()).count(),
        }
    }

    fn select(&self, idx: &[usize]) -> ColumnData {
        match self {
            ColumnData::Numeric(v) => ColumnData::Numeric(idx.iter().map(|&i| v[i]).collect()),
            ColumnData::Text(v) => ColumnData::Text(idx.iter().map(|&i| v[i].clone()).collect()),
        }
    }

    /// Cell rendered as a grouping key.
    pub fn key(&self, row: usize) -> Option<String> {
        match self {
            ColumnData::Numeric(v) => v[row].map(|x| x.to_string()),
            ColumnData::Text(v) => v[row].clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub spec: ColumnSpec,
    pub data: ColumnData,
}

impl Column {
    pub fn numeric(spec: ColumnSpec, values: Vec<Option<f64>>) -> Self {
        Self {
            spec,
            data: ColumnData::Numeric(values),
        }
    }

    pub fn text(spec: ColumnSpec, values: Vec<Option<String>>) -> Self {
        Self {
            spec,
            data: ColumnData::Text(values),
        }
    }

    pub fn name(&self) -> &str {
        &self.spec.name
    }

    pub fn kind(&self) -> ColumnKind {
        self.spec.kind
    }

    pub fn numeric_values(&self) -> Option<&[Option<f64>]> {
        match &self.data {
            ColumnData::Numeric(v) => Some(v),
            ColumnData::Text(_) => None,
        }
    }

    pub fn text_values(&self) -> Option<&[Option<String>]> {
        match &self.data {
            ColumnData::Text(v) => Some(v),
            ColumnData::Numeric(_) => None,
        }
    }
}

/// Column-typed table of observations with per-row sample weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    columns: Vec<Column>,
    weights: Vec<f64>,
    provenance: Vec<String>,
}

pub(crate) fn validate_schema(specs: &[&ColumnSpec]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for s in specs {
        if !seen.insert(s.name.as_str()) {
            return Err(Error::DuplicateColumn(s.name.clone()));
        }
    }
    let count = |k: ColumnKind| specs.iter().filter(|s| s.kind == k).count();
    if count(ColumnKind::Target) != 1 {
        return Err(Error::Schema(format!(
            "exactly one target column required, found {}",
            count(ColumnKind::Target)
        )));
    }
    if count(ColumnKind::GroupKey) > 1 {
        return Err(Error::Schema("more than one group-key column".into()));
    }
    if count(ColumnKind::TimeKey) > 1 {
        return Err(Error::Schema("more than one time-key column".into()));
    }
    Ok(())
}

impl Dataset {
    pub fn new(columns: Vec<Column>, weights: Option<Vec<f64>>) -> Result<Self> {
        validate_schema(&columns.iter().map(|c| &c.spec).collect::<Vec<_>>())?;
        let n = columns.first().map_or(0, |c| c.data.len());
        for c in &columns {
            if c.data.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "column `{}` has {} cells, expected {n}",
                    c.name(),
                    c.data.len()
                )));
            }
            if c.kind().is_numeric_storage() != matches!(c.data, ColumnData::Numeric(_)) {
                return Err(Error::Schema(format!(
                    "column `{}` storage does not match kind {}",
                    c.name(),
                    c.kind().as_str()
                )));
            }
        }
        let weights = weights.unwrap_or_else(|| vec![1.0; n]);
        if weights.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{} weights for {n} rows",
                weights.len()
            )));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidParam("weights must be finite and nonnegative".into()));
        }
        Ok(Self {
            columns,
            weights,
            provenance: Vec::new(),
        })
    }

    pub fn n_rows(&self) -> usize {
        self.weights.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn schema(&self) -> Vec<ColumnSpec> {
        self.columns.iter().map(|c| c.spec.clone()).collect()
    }

    pub fn column_names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.spec.name.clone()).collect()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn provenance(&self) -> &[String] {
        &self.provenance
    }

    pub fn column(&self, name: &str) -> Result<&Column> {
        self.columns
            .iter()
            .find(|c| c.spec.name == name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    pub fn column_of_kind(&self, kind: ColumnKind) -> Option<&Column> {
        self.columns.iter().find(|c| c.kind() == kind)
    }

    pub fn target(&self) -> &Column {
        self.column_of_kind(ColumnKind::Target)
            .expect("dataset invariant: exactly one target column")
    }

    pub fn target_name(&self) -> &str {
        self.target().name()
    }

    /// Numeric predictor columns (kind `numeric`) in schema order.
    pub fn feature_names(&self) -> Vec<String> {
        self.columns
            .iter()
            .filter(|c| c.kind() == ColumnKind::Numeric)
            .map(|c| c.spec.name.clone())
            .collect()
    }

    /// Dense values of a numeric column; fails if any cell is missing.
    pub fn numeric_dense(&self, name: &str) -> Result<Vec<f64>> {
        let col = self.column(name)?;
        let vals = col.numeric_values().ok_or(Error::ColumnKind {
            column: name.to_string(),
            expected: "numeric",
            actual: col.kind().as_str(),
        })?;
        vals.iter()
            .map(|v| v.ok_or_else(|| Error::InvalidParam(format!("column `{name}` has missing cells"))))
            .collect()
    }

    pub fn target_values(&self) -> Result<Vec<f64>> {
        self.numeric_dense(self.target_name())
    }

    pub fn feature_matrix(&self) -> Result<FeatureMatrix> {
        self.feature_matrix_of(&self.feature_names())
    }

    pub fn feature_matrix_of(&self, names: &[String]) -> Result<FeatureMatrix> {
        if names.is_empty() {
            return FeatureMatrix::new(Vec::new(), self.n_rows(), Vec::new());
        }
        let cols = names
            .iter()
            .map(|n| self.numeric_dense(n))
            .collect::<Result<Vec<_>>>()?;
        FeatureMatrix::from_columns(names.to_vec(), &cols)
    }

    /// Row labels of a grouping column, or an error naming the first missing row.
    pub fn group_labels(&self, name: &str) -> Result<Vec<String>> {
        let col = self.column(name)?;
        (0..self.n_rows())
            .map(|i| {
                col.data.key(i).ok_or_else(|| Error::MissingGroup {
                    row: i,
                    column: name.to_string(),
                })
            })
            .collect()
    }

    /// Labels of the group-key column, or one label per row when there is none.
    pub fn drill_labels(&self) -> Result<Vec<String>> {
        match self.column_of_kind(ColumnKind::GroupKey) {
            Some(c) => self.group_labels(&c.spec.name.clone()),
            None => Ok((0..self.n_rows()).map(|i| i.to_string()).collect()),
        }
    }

    pub fn missing_cells(&self) -> usize {
        self.columns.iter().map(|c| c.data.missing_count()).sum()
    }

    pub fn select_rows(&self, idx: &[usize]) -> Dataset {
        Dataset {
            columns: self
                .columns
                .iter()
                .map(|c| Column {
                    spec: c.spec.clone(),
                    data: c.data.select(idx),
                })
                .collect(),
            weights: idx.iter().map(|&i| self.weights[i]).collect(),
            provenance: self.provenance.clone(),
        }
    }

    pub fn with_weights(&self, weights: Vec<f64>) -> Result<Dataset> {
        let mut out = Dataset::new(self.columns.clone(), Some(weights))?;
        out.provenance = self.provenance.clone();
        Ok(out)
    }

    /// Replace or insert numeric values for an existing numeric column.
    pub fn with_numeric_column(&self, name: &str, values: Vec<f64>) -> Result<Dataset> {
        if values.len() != self.n_rows() {
            return Err(Error::DimensionMismatch(format!(
                "{} values for {} rows",
                values.len(),
                self.n_rows()
            )));
        }
        let mut out = self.clone();
        let col = out
            .columns
            .iter_mut()
            .find(|c| c.spec.name == name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))?;
        if !col.kind().is_numeric_storage() {
            return Err(Error::ColumnKind {
                column: name.to_string(),
                expected: "numeric",
                actual: col.kind().as_str(),
            });
        }
        col.data = ColumnData::Numeric(values.into_iter().map(Some).collect());
        Ok(out)
    }

    pub(crate) fn from_parts(columns: Vec<Column>, weights: Vec<f64>, provenance: Vec<String>) -> Self {
        Self {
            columns,
            weights,
            provenance,
        }
    }

    pub(crate) fn into_parts(self) -> (Vec<Column>, Vec<f64>, Vec<String>) {
        (self.columns, self.weights, self.provenance)
    }

    pub(crate) fn log_step(&mut self, name: &str, params: &[(&str, String)], before: usize) {
        let mut line = format!("STEP {name}");
        for (k, v) in params {
            line.push_str(&format!(" {k}={v}"));
        }
        line.push_str(&format!(" {before}->{}", self.n_rows()));
        self.provenance.push(line);
    }
}

/// Compact rendering of an `f64` parameter for provenance lines.
pub(crate) fn fmt_param(x: f64) -> String {
    format!("{x}")
}
