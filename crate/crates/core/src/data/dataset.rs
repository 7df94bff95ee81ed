use std::fmt;

use serde::{Deserialize, Serialize};

use super::schema::{ColumnKind, ColumnSpec};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Planting {
    Early,
    Late,
}

impl Planting {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "early" | "e" => Some(Planting::Early),
            "late" | "l" => Some(Planting::Late),
            _ => None,
        }
    }
}

impl fmt::Display for Planting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Planting::Early => "early",
            Planting::Late => "late",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RowKey {
    pub year: i32,
    pub region: String,
    pub planting: Planting,
    pub clone_id: String,
}

/// Typed table: one `Option<f64>` per cell (`None` is a missing cell), column-major.
///
/// Categorical cells hold the index of their level in the column's declared level list.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    specs: Vec<ColumnSpec>,
    columns: Vec<Vec<Option<f64>>>,
    labels: Option<Vec<u8>>,
    keys: Vec<RowKey>,
}

impl Dataset {
    pub fn new(
        specs: Vec<ColumnSpec>,
        columns: Vec<Vec<Option<f64>>>,
        labels: Option<Vec<u8>>,
        keys: Vec<RowKey>,
    ) -> Result<Self> {
        if specs.len() != columns.len() {
            return Err(Error::Shape(format!(
                "{} specs for {} columns",
                specs.len(),
                columns.len()
            )));
        }
        let n = keys.len();
        for (spec, col) in specs.iter().zip(&columns) {
            spec.validate()?;
            if col.len() != n {
                return Err(Error::Shape(format!(
                    "column '{}' has {} cells, expected {n}",
                    spec.name,
                    col.len()
                )));
            }
            if col.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::Consistency(format!(
                    "column '{}' stores a non-finite value",
                    spec.name
                )));
            }
            if spec.kind == ColumnKind::Categorical {
                if col.iter().any(Option::is_none) {
                    return Err(Error::Consistency(format!(
                        "categorical column '{}' has missing cells",
                        spec.name
                    )));
                }
                let m = spec.levels.len() as f64;
                if col
                    .iter()
                    .flatten()
                    .any(|&v| v < 0.0 || v >= m || v.fract() != 0.0)
                {
                    return Err(Error::Consistency(format!(
                        "categorical column '{}' stores an undeclared level",
                        spec.name
                    )));
                }
            }
        }
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(Error::Shape(format!("{} labels for {n} rows", l.len())));
            }
            if l.iter().any(|&v| v > 1) {
                return Err(Error::Consistency("labels must be 0 or 1".into()));
            }
        }
        Ok(Dataset {
            specs,
            columns,
            labels,
            keys,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.keys.len()
    }

    pub fn n_cols(&self) -> usize {
        self.specs.len()
    }

    pub fn specs(&self) -> &[ColumnSpec] {
        &self.specs
    }

    pub fn spec(&self, j: usize) -> &ColumnSpec {
        &self.specs[j]
    }

    pub fn column(&self, j: usize) -> &[Option<f64>] {
        &self.columns[j]
    }

    pub fn columns(&self) -> &[Vec<Option<f64>>] {
        &self.columns
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.specs.iter().position(|s| s.name == name)
    }

    pub fn column_by_name(&self, name: &str) -> Option<&[Option<f64>]> {
        self.column_index(name).map(|j| self.column(j))
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        self.columns[col][row]
    }

    pub fn labels(&self) -> Option<&[u8]> {
        self.labels.as_deref()
    }

    pub fn require_labels(&self) -> Result<&[u8]> {
        self.labels
            .as_deref()
            .ok_or_else(|| Error::Consistency("dataset has no labels".into()))
    }

    pub fn keys(&self) -> &[RowKey] {
        &self.keys
    }

    pub fn missing_count(&self, j: usize) -> usize {
        self.columns[j].iter().filter(|v| v.is_none()).count()
    }

    pub fn is_complete(&self) -> bool {
        self.columns.iter().all(|c| c.iter().all(Option::is_some))
    }

    pub fn complete_rows(&self) -> Vec<usize> {
        (0..self.n_rows())
            .filter(|&i| self.columns.iter().all(|c| c[i].is_some()))
            .collect()
    }

    pub fn select_rows(&self, idx: &[usize]) -> Dataset {
        Dataset {
            specs: self.specs.clone(),
            columns: self
                .columns
                .iter()
                .map(|c| idx.iter().map(|&i| c[i]).collect())
                .collect(),
            labels: self
                .labels
                .as_ref()
                .map(|l| idx.iter().map(|&i| l[i]).collect()),
            keys: idx.iter().map(|&i| self.keys[i].clone()).collect(),
        }
    }

    pub fn select_columns(&self, idx: &[usize]) -> Dataset {
        Dataset {
            specs: idx.iter().map(|&j| self.specs[j].clone()).collect(),
            columns: idx.iter().map(|&j| self.columns[j].clone()).collect(),
            labels: self.labels.clone(),
            keys: self.keys.clone(),
        }
    }

    pub fn with_labels(mut self, labels: Option<Vec<u8>>) -> Result<Self> {
        if let Some(l) = &labels {
            if l.len() != self.n_rows() || l.iter().any(|&v| v > 1) {
                return Err(Error::Shape("labels do not match the dataset".into()));
            }
        }
        self.labels = labels;
        Ok(self)
    }

    /// Replace column `j`, keeping its spec.
    pub fn with_column(mut self, j: usize, values: Vec<Option<f64>>) -> Result<Self> {
        if values.len() != self.n_rows() {
            return Err(Error::Shape(format!(
                "replacement for '{}' has {} cells",
                self.specs[j].name,
                values.len()
            )));
        }
        self.columns[j] = values;
        Ok(self)
    }

    pub fn push_column(mut self, spec: ColumnSpec, values: Vec<Option<f64>>) -> Result<Self> {
        if self.column_index(&spec.name).is_some() {
            return Err(Error::Schema(format!("column '{}' already present", spec.name)));
        }
        if values.len() != self.n_rows() {
            return Err(Error::Shape(format!(
                "new column '{}' has {} cells",
                spec.name,
                values.len()
            )));
        }
        spec.validate()?;
        self.specs.push(spec);
        self.columns.push(values);
        Ok(self)
    }

    /// Decompose into parts for rebuilding.
    pub fn into_parts(self) -> (Vec<ColumnSpec>, Vec<Vec<Option<f64>>>, Option<Vec<u8>>, Vec<RowKey>) {
        (self.specs, self.columns, self.labels, self.keys)
    }

    /// Observed values of column `j`.
    pub fn observed(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        self.columns[j].iter().flatten().copied()
    }
}
