//! Random forest: bootstrap-weighted CART trees with per-node feature subsampling.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::params::{Hyperparams, Reader};
use super::tree::{Tree, TreeParams};
use crate::error::Result;
use crate::linalg::Matrix;
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_estimators: usize,
    pub max_features: usize,
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
}

impl ForestParams {
    pub fn from_hyper(h: &Hyperparams, n_features: usize) -> Result<Self> {
        let mut r = Reader::new("random_forest", h);
        let p = ForestParams {
            n_estimators: r.usize("n_estimators", 100)?,
            max_features: r.max_features("max_features", n_features)?,
            max_depth: r.opt_usize("max_depth", None)?,
            min_samples_leaf: r.usize("min_samples_leaf", 1)?,
        };
        r.check(p.n_estimators >= 1, "n_estimators must be at least 1")?;
        r.finish()?;
        Ok(p)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
}

impl ForestModel {
    pub fn fit(x: &Matrix, y: &[u8], p: &ForestParams, seed_value: u64) -> Self {
        let n = x.rows();
        let tp = TreeParams {
            max_depth: p.max_depth,
            min_samples_leaf: p.min_samples_leaf.max(1),
            max_features: Some(p.max_features),
            ..Default::default()
        };
        let trees = (0..p.n_estimators)
            .into_par_iter()
            .map(|t| {
                let mut rng = seed::derived_rng(seed_value, "forest-tree", t as u64);
                let mut w = vec![0.0; n];
                for _ in 0..n {
                    w[rng.random_range(0..n)] += 1.0;
                }
                Tree::fit(x, y, &w, &tp, &mut rng)
            })
            .collect();
        ForestModel { trees }
    }

    pub fn score_row(&self, q: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict_row(q)).sum::<f64>() / self.trees.len() as f64
    }
}
