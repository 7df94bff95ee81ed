//! Two-level stacking: boosted trees and an RBF SVM feed a logistic combiner
//! trained on their out-of-fold probabilities.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::hgb::{HgbModel, HgbParams};
use super::logistic::{LogisticModel, LogisticParams};
use super::params::{Hyperparams, Param, Reader};
use super::svm::{SvmModel, SvmParams};
use crate::error::Result;
use crate::linalg::Matrix;
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StackingParams {
    pub cv: usize,
    pub hgbc: HgbParams,
    pub svm: SvmParams,
    pub meta: LogisticParams,
}

impl StackingParams {
    pub fn from_hyper(h: &Hyperparams, n_features: usize) -> Result<Self> {
        let mut r = Reader::new("stacking", h);
        let cv = r.usize("cv", 5)?;
        let meta_l2 = r.f64("meta_l2", 1e-3)?;
        let hgbc = HgbParams::from_hyper(&r.prefixed("hgbc."))?;
        let mut svm_h = r.prefixed("svm.");
        svm_h.entry("probability".into()).or_insert(Param::Bool(true));
        let svm = SvmParams::from_hyper(&svm_h, n_features)?;
        r.check(cv >= 2, "cv must be at least 2")?;
        r.check(svm.probability, "svm.probability must stay enabled for stacking")?;
        r.finish()?;
        Ok(StackingParams {
            cv,
            hgbc,
            svm,
            meta: LogisticParams { l2: meta_l2, max_iter: 100 },
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StackingModel {
    pub hgbc: HgbModel,
    pub svm: SvmModel,
    pub meta: LogisticModel,
}

/// Stratified fold index per row from a seeded shuffle within each class.
pub fn stratified_folds(y: &[u8], k: usize, seed_value: u64) -> Vec<usize> {
    let mut rng = seed::rng(seed_value);
    let mut fold = vec![0; y.len()];
    let mut offset = 0;
    for class in [0u8, 1] {
        let mut idx: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
        idx.shuffle(&mut rng);
        for (pos, i) in idx.into_iter().enumerate() {
            fold[i] = (pos + offset) % k;
        }
        offset = (offset + y.iter().filter(|&&v| v == class).count()) % k;
    }
    fold
}

fn level_one(x: &Matrix, y: &[u8], p: &StackingParams) -> Result<(HgbModel, SvmModel)> {
    Ok((HgbModel::fit(x, y, &p.hgbc), SvmModel::fit(x, y, &p.svm)?))
}

fn meta_row(h: &HgbModel, s: &SvmModel, q: &[f64]) -> Vec<f64> {
    vec![h.proba_row(q), s.proba(q).unwrap_or(0.5)]
}

impl StackingModel {
    pub fn fit(x: &Matrix, y: &[u8], p: &StackingParams, seed_value: u64) -> Result<Self> {
        let n = x.rows();
        let minority = y.iter().filter(|&&v| v == 1).count().min(y.iter().filter(|&&v| v == 0).count());
        let k = p.cv.min(minority);
        let (hgbc, svm) = level_one(x, y, p)?;
        let mut z = vec![vec![0.0; 2]; n];
        if k >= 2 {
            let fold = stratified_folds(y, k, seed::derive(seed_value, "stacking-folds", 0));
            let parts: Vec<Result<Vec<(usize, Vec<f64>)>>> = (0..k)
                .into_par_iter()
                .map(|f| {
                    let tr: Vec<usize> = (0..n).filter(|&i| fold[i] != f).collect();
                    let te: Vec<usize> = (0..n).filter(|&i| fold[i] == f).collect();
                    let ytr: Vec<u8> = tr.iter().map(|&i| y[i]).collect();
                    let (h, s) = level_one(&x.select_rows(&tr), &ytr, p)?;
                    Ok(te.into_iter().map(|i| (i, meta_row(&h, &s, x.row(i)))).collect())
                })
                .collect();
            for part in parts {
                for (i, row) in part? {
                    z[i] = row;
                }
            }
        } else {
            for (i, row) in z.iter_mut().enumerate() {
                *row = meta_row(&hgbc, &svm, x.row(i));
            }
        }
        let meta = LogisticModel::fit(&Matrix::from_rows(&z)?, y, &p.meta)?;
        Ok(StackingModel { hgbc, svm, meta })
    }

    pub fn proba_row(&self, q: &[f64]) -> f64 {
        self.meta.proba_row(&meta_row(&self.hgbc, &self.svm, q))
    }
}
