//! Brute-force k-nearest neighbors under Euclidean distance.

use serde::{Deserialize, Serialize};

use super::params::{Hyperparams, Reader};
use crate::error::Result;
use crate::linalg::{sq_dist, Matrix};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnnParams {
    pub k: usize,
}

impl KnnParams {
    pub fn from_hyper(h: &Hyperparams) -> Result<Self> {
        let mut r = Reader::new("knn", h);
        let k = r.usize("k", 5)?;
        r.check(k >= 1, "k must be at least 1")?;
        r.finish()?;
        Ok(KnnParams { k })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub k: usize,
    pub x: Matrix,
    pub y: Vec<u8>,
}

impl KnnModel {
    pub fn fit(x: &Matrix, y: &[u8], p: &KnnParams) -> Self {
        KnnModel {
            k: p.k.min(x.rows()),
            x: x.clone(),
            y: y.to_vec(),
        }
    }

    /// Indices of the k nearest training rows, nearer first, ties by index.
    pub fn neighbors(&self, q: &[f64]) -> Vec<usize> {
        let mut d: Vec<(f64, usize)> = (0..self.x.rows()).map(|i| (sq_dist(self.x.row(i), q), i)).collect();
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if self.k < d.len() {
            d.select_nth_unstable_by(self.k - 1, cmp);
            d.truncate(self.k);
        }
        d.sort_by(cmp);
        d.into_iter().map(|(_, i)| i).collect()
    }

    /// Fraction of positive labels among the neighbors.
    pub fn score_row(&self, q: &[f64]) -> f64 {
        let nb = self.neighbors(q);
        nb.iter().filter(|&&i| self.y[i] == 1).count() as f64 / nb.len() as f64
    }
}
