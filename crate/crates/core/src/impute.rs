//! Chained-equation imputation and missingness mimicry.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{ColumnKind, Dataset, NaProfile};
use crate::error::{Error, Result};
use crate::linalg::{dot, ridge_solve, Matrix};
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MiceConfig {
    pub n_iterations: usize,
    pub ridge: f64,
    pub posterior_sampling: bool,
    pub seed: u64,
}

impl Default for MiceConfig {
    fn default() -> Self {
        MiceConfig {
            n_iterations: 10,
            ridge: 1e-6,
            posterior_sampling: true,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MiceMetadata {
    pub visit_order: Vec<String>,
    pub n_iterations: usize,
    pub seed: u64,
    pub posterior_sampling: bool,
    /// Residual standard deviation of each visited column's final regression.
    pub residual_sds: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MiceOutput {
    pub train: Dataset,
    pub apply: Dataset,
    pub metadata: MiceMetadata,
}

fn imputable(ds: &Dataset, j: usize) -> bool {
    ds.spec(j).kind.is_numeric_feature() && ds.spec(j).source.is_none()
}

/// Impute `train` and `apply` using per-column regressions fitted on training rows only.
pub fn mice(train: &Dataset, apply: &Dataset, cfg: &MiceConfig) -> Result<(Dataset, Dataset)> {
    mice_with_metadata(train, apply, cfg).map(|o| (o.train, o.apply))
}

pub fn mice_with_metadata(train: &Dataset, apply: &Dataset, cfg: &MiceConfig) -> Result<MiceOutput> {
    if cfg.n_iterations == 0 {
        return Err(Error::Domain("n_iterations must be at least 1".into()));
    }
    if train.specs() != apply.specs() {
        return Err(Error::Schema("train and apply datasets have different columns".into()));
    }
    let cols: Vec<usize> = (0..train.n_cols()).filter(|&j| imputable(train, j)).collect();
    let holes_train: Vec<Vec<usize>> = cols
        .iter()
        .map(|&j| (0..train.n_rows()).filter(|&i| train.get(i, j).is_none()).collect())
        .collect();
    let holes_apply: Vec<Vec<usize>> = cols
        .iter()
        .map(|&j| (0..apply.n_rows()).filter(|&i| apply.get(i, j).is_none()).collect())
        .collect();

    let mut visit: Vec<usize> = (0..cols.len())
        .filter(|&c| !holes_train[c].is_empty() || !holes_apply[c].is_empty())
        .collect();
    if visit.is_empty() {
        return Ok(MiceOutput {
            train: train.clone(),
            apply: apply.clone(),
            metadata: MiceMetadata {
                visit_order: Vec::new(),
                n_iterations: cfg.n_iterations,
                seed: cfg.seed,
                posterior_sampling: cfg.posterior_sampling,
                residual_sds: Vec::new(),
            },
        });
    }
    for &c in &visit {
        if holes_train[c].len() == train.n_rows() {
            return Err(Error::Imputation(train.spec(cols[c]).name.clone()));
        }
    }
    visit.sort_by_key(|&c| (holes_train[c].len(), c));

    // Working matrices: one column per imputable feature plus a leading intercept.
    let p = cols.len();
    let fill = |ds: &Dataset, means: &[f64]| {
        let mut m = Matrix::zeros(ds.n_rows(), p + 1);
        for i in 0..ds.n_rows() {
            m[(i, 0)] = 1.0;
            for (c, &j) in cols.iter().enumerate() {
                m[(i, c + 1)] = ds.get(i, j).unwrap_or(means[c]);
            }
        }
        m
    };
    let means: Vec<f64> = cols
        .iter()
        .map(|&j| {
            let (s, n) = train.observed(j).fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
            if n == 0 { 0.0 } else { s / n as f64 }
        })
        .collect();
    let mut wt = fill(train, &means);
    let mut wa = fill(apply, &means);
    let mut residual_sds = vec![0.0; visit.len()];

    for it in 0..cfg.n_iterations {
        for (v, &c) in visit.iter().enumerate() {
            let target = c + 1;
            let predictors: Vec<usize> = (0..=p).filter(|&k| k != target).collect();
            let observed: Vec<usize> = {
                let mut is_hole = vec![false; train.n_rows()];
                for &i in &holes_train[c] {
                    is_hole[i] = true;
                }
                (0..train.n_rows()).filter(|&i| !is_hole[i]).collect()
            };
            let x = wt.select_rows(&observed).select_cols(&predictors);
            let y: Vec<f64> = observed.iter().map(|&i| wt[(i, target)]).collect();
            let w = ridge_solve(&x, &y, cfg.ridge)?;
            let ssr: f64 = (0..x.rows()).map(|r| (y[r] - dot(x.row(r), &w)).powi(2)).sum();
            let dof = (x.rows() as f64 - predictors.len() as f64).max(1.0);
            let sd = (ssr / dof).sqrt();
            residual_sds[v] = sd;

            let index = (it * p + c) as u64;
            let mut rng_t = seed::derived_rng(cfg.seed, "mice-train", index);
            let mut rng_a = seed::derived_rng(cfg.seed, "mice-apply", index);
            let predict = |m: &Matrix, i: usize| -> f64 {
                predictors.iter().zip(&w).map(|(&k, wk)| m[(i, k)] * wk).sum()
            };
            for &i in &holes_train[c] {
                let mut val = predict(&wt, i);
                if cfg.posterior_sampling {
                    let z: f64 = StandardNormal.sample(&mut rng_t);
                    val += sd * z;
                }
                wt[(i, target)] = val;
            }
            for &i in &holes_apply[c] {
                let mut val = predict(&wa, i);
                if cfg.posterior_sampling {
                    let z: f64 = StandardNormal.sample(&mut rng_a);
                    val += sd * z;
                }
                wa[(i, target)] = val;
            }
        }
    }

    let rebuild = |ds: &Dataset, m: &Matrix, holes: &[Vec<usize>]| -> Result<Dataset> {
        let mut out = ds.clone();
        for (c, &j) in cols.iter().enumerate() {
            if holes[c].is_empty() {
                continue;
            }
            let mut col = ds.column(j).to_vec();
            for &i in &holes[c] {
                col[i] = Some(m[(i, c + 1)]);
            }
            out = out.with_column(j, col)?;
        }
        Ok(out)
    };
    Ok(MiceOutput {
        train: rebuild(train, &wt, &holes_train)?,
        apply: rebuild(apply, &wa, &holes_apply)?,
        metadata: MiceMetadata {
            visit_order: visit.iter().map(|&c| train.spec(cols[c]).name.clone()).collect(),
            n_iterations: cfg.n_iterations,
            seed: cfg.seed,
            posterior_sampling: cfg.posterior_sampling,
            residual_sds,
        },
    })
}

/// Number of holes a profile asks for in a dataset of `n_rows`.
pub fn mimicked_count(profile: &NaProfile, column: &str, n_rows: usize) -> usize {
    (profile.count(column) as f64 / profile.n_rows as f64 * n_rows as f64).round() as usize
}

/// Punch MCAR holes into each numeric column at the profile's per-column rate.
pub fn mimic_missingness(ds: &Dataset, profile: &NaProfile, seed: u64) -> Result<Dataset> {
    let mut out = ds.clone();
    let n = ds.n_rows();
    for j in 0..ds.n_cols() {
        let spec = ds.spec(j);
        if matches!(spec.kind, ColumnKind::Categorical | ColumnKind::Response) || spec.source.is_some() {
            continue;
        }
        if profile.count(&spec.name) > profile.n_rows {
            return Err(Error::Domain(format!(
                "profile asks for {} holes in '{}' but has {} rows",
                profile.count(&spec.name),
                spec.name,
                profile.n_rows
            )));
        }
        let k = mimicked_count(profile, &spec.name, n);
        if k > n {
            return Err(Error::Domain(format!("cannot punch {k} holes into {n} rows")));
        }
        if k == 0 {
            continue;
        }
        let mut rng = seed::derived_rng(seed, &format!("mimic:{}", spec.name), 0);
        let mut col = ds.column(j).to_vec();
        for i in rand::seq::index::sample(&mut rng, n, k) {
            col[i] = None;
        }
        out = out.with_column(j, col)?;
    }
    Ok(out)
}
