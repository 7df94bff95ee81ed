//! Gaussian naive Bayes: per-class priors and per-feature means and variances.

use serde::{Deserialize, Serialize};

use super::params::{Hyperparams, Reader};
use crate::error::Result;
use crate::linalg::Matrix;

pub const VARIANCE_FLOOR: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassGaussian {
    pub log_prior: f64,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NaiveBayesModel {
    pub classes: [ClassGaussian; 2],
}

pub fn validate(h: &Hyperparams) -> Result<()> {
    Reader::new("gaussian_nb", h).finish()
}

fn class_stats(x: &Matrix, rows: &[usize], n: usize) -> ClassGaussian {
    let d = x.cols();
    let m = rows.len() as f64;
    let mut mean = vec![0.0; d];
    for &i in rows {
        for (mu, v) in mean.iter_mut().zip(x.row(i)) {
            *mu += v;
        }
    }
    mean.iter_mut().for_each(|v| *v /= m);
    let mut var = vec![0.0; d];
    for &i in rows {
        for ((s, v), mu) in var.iter_mut().zip(x.row(i)).zip(&mean) {
            *s += (v - mu) * (v - mu);
        }
    }
    var.iter_mut().for_each(|v| *v = (*v / m).max(VARIANCE_FLOOR));
    ClassGaussian {
        log_prior: (m / n as f64).ln(),
        mean,
        var,
    }
}

impl ClassGaussian {
    pub fn log_joint(&self, q: &[f64]) -> f64 {
        let mut s = self.log_prior;
        for ((v, mu), var) in q.iter().zip(&self.mean).zip(&self.var) {
            s -= 0.5 * ((2.0 * std::f64::consts::PI * var).ln() + (v - mu) * (v - mu) / var);
        }
        s
    }
}

impl NaiveBayesModel {
    pub fn fit(x: &Matrix, y: &[u8]) -> Self {
        let r0: Vec<usize> = (0..y.len()).filter(|&i| y[i] == 0).collect();
        let r1: Vec<usize> = (0..y.len()).filter(|&i| y[i] == 1).collect();
        NaiveBayesModel {
            classes: [class_stats(x, &r0, y.len()), class_stats(x, &r1, y.len())],
        }
    }

    /// Normalized posterior (P(0), P(1)).
    pub fn proba_row(&self, q: &[f64]) -> [f64; 2] {
        softmax2(self.classes[0].log_joint(q), self.classes[1].log_joint(q))
    }
}

pub(crate) fn softmax2(l0: f64, l1: f64) -> [f64; 2] {
    let m = l0.max(l1);
    let (e0, e1) = ((l0 - m).exp(), (l1 - m).exp());
    let z = e0 + e1;
    [e0 / z, e1 / z]
}
