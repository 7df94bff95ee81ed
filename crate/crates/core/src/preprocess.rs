//! Column dropping, train-fitted standardization, one-hot encoding and stratified splits.

use serde::{Deserialize, Serialize};

use crate::data::{ColumnKind, ColumnSpec, Dataset, RowKey};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::seed;

/// Default NA threshold: columns with more missing cells are dropped.
pub const DEFAULT_MAX_NA: usize = 400;

pub fn drop_high_na_columns(ds: &Dataset, max_na: usize) -> Dataset {
    let keep: Vec<usize> = (0..ds.n_cols())
        .filter(|&j| ds.missing_count(j) <= max_na)
        .collect();
    ds.select_columns(&keep)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnScale {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub constant: bool,
}

/// Per-column mean and population standard deviation, fitted on observed training cells.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub columns: Vec<ColumnScale>,
    pub sd_convention: String,
}

impl Standardizer {
    pub fn fit(ds: &Dataset) -> Self {
        let columns = (0..ds.n_cols())
            .filter(|&j| ds.spec(j).kind.is_numeric_feature() && ds.spec(j).source.is_none())
            .map(|j| {
                let obs: Vec<f64> = ds.observed(j).collect();
                let n = obs.len() as f64;
                let (mean, sd) = if obs.is_empty() {
                    (0.0, 0.0)
                } else {
                    let m = obs.iter().sum::<f64>() / n;
                    let v = obs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
                    (m, v.sqrt())
                };
                ColumnScale {
                    name: ds.spec(j).name.clone(),
                    mean,
                    sd,
                    constant: !(sd > 1e-12 * mean.abs().max(1.0)),
                }
            })
            .collect();
        Standardizer {
            columns,
            sd_convention: "population".into(),
        }
    }

    pub fn apply(&self, ds: &Dataset) -> Result<Dataset> {
        let mut out = ds.clone();
        for c in &self.columns {
            let j = ds
                .column_index(&c.name)
                .ok_or_else(|| Error::Schema(format!("column '{}' missing at apply time", c.name)))?;
            let col = ds
                .column(j)
                .iter()
                .map(|v| v.map(|x| if c.constant { 0.0 } else { (x - c.mean) / c.sd }))
                .collect();
            out = out.with_column(j, col)?;
        }
        Ok(out)
    }
}

pub fn standardize(fit_on: &Dataset, apply_to: &Dataset) -> Result<Dataset> {
    Standardizer::fit(fit_on).apply(apply_to)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OneHotBlock {
    pub source: String,
    /// Observed levels in declared order.
    pub levels: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OneHotEncoder {
    pub blocks: Vec<OneHotBlock>,
}

pub fn indicator_name(source: &str, level: &str) -> String {
    format!("{source}={level}")
}

impl OneHotEncoder {
    pub fn fit(ds: &Dataset) -> Self {
        let blocks = (0..ds.n_cols())
            .filter(|&j| ds.spec(j).kind == ColumnKind::Categorical)
            .map(|j| {
                let spec = ds.spec(j);
                let mut seen = vec![false; spec.levels.len()];
                for v in ds.observed(j) {
                    seen[v as usize] = true;
                }
                OneHotBlock {
                    source: spec.name.clone(),
                    levels: spec
                        .levels
                        .iter()
                        .zip(&seen)
                        .filter(|(_, &s)| s)
                        .map(|(l, _)| l.clone())
                        .collect(),
                }
            })
            .collect();
        OneHotEncoder { blocks }
    }

    /// Replace each categorical column by one indicator per fitted level, in place.
    pub fn apply(&self, ds: &Dataset) -> Result<Dataset> {
        let (specs, columns, labels, keys) = ds.clone().into_parts();
        let mut out_specs = Vec::new();
        let mut out_cols = Vec::new();
        for (spec, col) in specs.into_iter().zip(columns) {
            if spec.kind != ColumnKind::Categorical {
                out_specs.push(spec);
                out_cols.push(col);
                continue;
            }
            let block = self
                .blocks
                .iter()
                .find(|b| b.source == spec.name)
                .ok_or_else(|| Error::Schema(format!("encoder was not fitted on '{}'", spec.name)))?;
            let mut indicators = vec![vec![Some(0.0); col.len()]; block.levels.len()];
            for (i, v) in col.iter().enumerate() {
                let code = v.ok_or_else(|| {
                    Error::Consistency(format!("categorical column '{}' has a missing cell in row {i}", spec.name))
                })?;
                let level = &spec.levels[code as usize];
                let k = block
                    .levels
                    .iter()
                    .position(|l| l == level)
                    .ok_or_else(|| Error::UnseenLevel {
                        column: spec.name.clone(),
                        level: level.clone(),
                    })?;
                indicators[k][i] = Some(1.0);
            }
            for (level, ind) in block.levels.iter().zip(indicators) {
                let mut s = ColumnSpec::numeric(&indicator_name(&spec.name, level), ColumnKind::Derived, "indicator", Some((0.0, 1.0)), 0);
                s.source = Some(spec.name.clone());
                out_specs.push(s);
                out_cols.push(ind);
            }
        }
        Dataset::new(out_specs, out_cols, labels, keys)
    }
}

pub fn one_hot(ds: &Dataset) -> Result<Dataset> {
    OneHotEncoder::fit(ds).apply(ds)
}

/// A named block of design-matrix columns that is selected as a unit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureGroup {
    pub name: String,
    pub columns: Vec<usize>,
}

/// Complete numeric design matrix ready for the classifiers.
#[derive(Clone, Debug, PartialEq)]
pub struct Design {
    pub x: Matrix,
    pub names: Vec<String>,
    pub groups: Vec<FeatureGroup>,
    pub y: Vec<u8>,
    pub keys: Vec<RowKey>,
}

impl Design {
    /// Build from an encoded, complete, labelled dataset.
    pub fn from_dataset(ds: &Dataset) -> Result<Self> {
        if ds.specs().iter().any(|s| s.kind == ColumnKind::Categorical) {
            return Err(Error::Consistency("categorical columns must be one-hot encoded first".into()));
        }
        let y = ds.require_labels()?.to_vec();
        let mut x = Matrix::zeros(ds.n_rows(), ds.n_cols());
        for j in 0..ds.n_cols() {
            for (i, v) in ds.column(j).iter().enumerate() {
                x[(i, j)] = v.ok_or_else(|| {
                    Error::Consistency(format!("column '{}' has missing cells", ds.spec(j).name))
                })?;
            }
        }
        let mut groups: Vec<FeatureGroup> = Vec::new();
        for (j, s) in ds.specs().iter().enumerate() {
            let g = s.source.clone().unwrap_or_else(|| s.name.clone());
            match groups.iter_mut().find(|f| f.name == g) {
                Some(f) if s.source.is_some() => f.columns.push(j),
                _ => groups.push(FeatureGroup {
                    name: g,
                    columns: vec![j],
                }),
            }
        }
        Ok(Design {
            x,
            names: ds.specs().iter().map(|s| s.name.clone()).collect(),
            groups,
            y,
            keys: ds.keys().to_vec(),
        })
    }

    pub fn n_rows(&self) -> usize {
        self.x.rows()
    }

    pub fn select_rows(&self, idx: &[usize]) -> Design {
        Design {
            x: self.x.select_rows(idx),
            names: self.names.clone(),
            groups: self.groups.clone(),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            keys: idx.iter().map(|&i| self.keys[i].clone()).collect(),
        }
    }

    /// Columns of the given groups, in group order.
    pub fn group_columns(&self, groups: &[usize]) -> Vec<usize> {
        groups.iter().flat_map(|&g| self.groups[g].columns.iter().copied()).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

fn key_hash(key: &RowKey, seed: u64) -> u64 {
    let text = format!("{}|{}|{}|{}", key.year, key.region, key.planting, key.clone_id);
    seed::derive(seed, &text, 0)
}

/// Row indices of each class ordered by a seeded hash of the row identity.
fn class_orders(labels: &[u8], keys: &[RowKey], seed: u64) -> [Vec<usize>; 2] {
    let mut classes: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, &l) in labels.iter().enumerate() {
        classes[l as usize].push(i);
    }
    for c in &mut classes {
        c.sort_by_key(|&i| (key_hash(&keys[i], seed), i));
    }
    classes
}

pub fn stratified_split_rows(labels: &[u8], keys: &[RowKey], train_frac: f64, seed: u64) -> Result<SplitPlan> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::Stratification(format!(
            "train fraction must lie strictly between 0 and 1, got {train_frac}"
        )));
    }
    if labels.len() != keys.len() {
        return Err(Error::Shape("labels and keys differ in length".into()));
    }
    let orders = class_orders(labels, keys, seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (c, rows) in orders.iter().enumerate() {
        if rows.len() < 2 {
            return Err(Error::Stratification(format!(
                "class {c} has {} member(s); at least 2 are needed",
                rows.len()
            )));
        }
        let n_train = ((train_frac * rows.len() as f64).round() as usize).clamp(1, rows.len() - 1);
        train.extend_from_slice(&rows[..n_train]);
        test.extend_from_slice(&rows[n_train..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(SplitPlan { train, test, seed })
}

pub fn stratified_split(ds: &Dataset, train_frac: f64, seed: u64) -> Result<SplitPlan> {
    stratified_split_rows(ds.require_labels()?, ds.keys(), train_frac, seed)
}

pub fn stratified_kfold_rows(labels: &[u8], keys: &[RowKey], k: usize, seed: u64) -> Result<Vec<SplitPlan>> {
    if k < 2 {
        return Err(Error::Stratification(format!("k must be at least 2, got {k}")));
    }
    let orders = class_orders(labels, keys, seed);
    let mut fold_of = vec![0usize; labels.len()];
    let mut offset = 0;
    for (c, rows) in orders.iter().enumerate() {
        if rows.len() < k {
            return Err(Error::Stratification(format!(
                "class {c} has {} members, fewer than k = {k}",
                rows.len()
            )));
        }
        for (p, &i) in rows.iter().enumerate() {
            fold_of[i] = (p + offset) % k;
        }
        offset = (offset + rows.len()) % k;
    }
    Ok((0..k)
        .map(|f| {
            let (test, train): (Vec<usize>, Vec<usize>) = (0..labels.len()).partition(|&i| fold_of[i] == f);
            SplitPlan { train, test, seed }
        })
        .collect())
}

pub fn stratified_kfold(ds: &Dataset, k: usize, seed: u64) -> Result<Vec<SplitPlan>> {
    stratified_kfold_rows(ds.require_labels()?, ds.keys(), k, seed)
}
