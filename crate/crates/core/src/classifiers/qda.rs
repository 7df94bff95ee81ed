//! Quadratic discriminant analysis with trace-scaled covariance shrinkage.

use serde::{Deserialize, Serialize};

use super::naive_bayes::{softmax2, VARIANCE_FLOOR};
use super::params::{Hyperparams, Reader};
use crate::error::Result;
use crate::linalg::{Cholesky, Matrix};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QdaParams {
    pub reg: f64,
}

impl QdaParams {
    pub fn from_hyper(h: &Hyperparams) -> Result<Self> {
        let mut r = Reader::new("qda", h);
        let reg = r.f64("reg", 0.0)?;
        r.check((0.0..=1.0).contains(&reg), "reg must lie in [0, 1]")?;
        r.finish()?;
        Ok(QdaParams { reg })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassDiscriminant {
    pub log_prior: f64,
    pub mean: Vec<f64>,
    pub cov: Matrix,
    pub chol: Cholesky,
    pub log_det: f64,
}

impl ClassDiscriminant {
    fn fit(x: &Matrix, rows: &[usize], n: usize, reg: f64) -> Result<Self> {
        let d = x.cols();
        let m = rows.len();
        let mut mean = vec![0.0; d];
        for &i in rows {
            for (mu, v) in mean.iter_mut().zip(x.row(i)) {
                *mu += v;
            }
        }
        mean.iter_mut().for_each(|v| *v /= m as f64);
        let mut cov = Matrix::zeros(d, d);
        for &i in rows {
            let r = x.row(i);
            for a in 0..d {
                let da = r[a] - mean[a];
                for b in 0..=a {
                    cov[(a, b)] += da * (r[b] - mean[b]);
                }
            }
        }
        let denom = if m > 1 { (m - 1) as f64 } else { 1.0 };
        for a in 0..d {
            for b in 0..=a {
                let v = cov[(a, b)] / denom;
                cov[(a, b)] = v;
                cov[(b, a)] = v;
            }
        }
        let trace: f64 = (0..d).map(|a| cov[(a, a)]).sum();
        for a in 0..d {
            for b in 0..d {
                cov[(a, b)] *= 1.0 - reg;
            }
            cov[(a, a)] = (cov[(a, a)] + reg * trace / d as f64).max(VARIANCE_FLOOR);
        }
        let ch = Cholesky::with_jitter(&cov)?;
        Ok(ClassDiscriminant {
            log_prior: (m as f64 / n as f64).ln(),
            log_det: ch.log_det(),
            chol: ch,
            mean,
            cov,
        })
    }

    /// δ_k(x) = −½ log|Σ_k| − ½ (x−μ_k)ᵀ Σ_k⁻¹ (x−μ_k) + log π_k
    pub fn discriminant(&self, q: &[f64]) -> f64 {
        let diff: Vec<f64> = q.iter().zip(&self.mean).map(|(a, b)| a - b).collect();
        let z = self.chol.solve_lower(&diff);
        let maha: f64 = z.iter().map(|v| v * v).sum();
        -0.5 * self.log_det - 0.5 * maha + self.log_prior
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QdaModel {
    pub reg: f64,
    pub classes: [ClassDiscriminant; 2],
}

impl QdaModel {
    pub fn fit(x: &Matrix, y: &[u8], p: &QdaParams) -> Result<Self> {
        let r0: Vec<usize> = (0..y.len()).filter(|&i| y[i] == 0).collect();
        let r1: Vec<usize> = (0..y.len()).filter(|&i| y[i] == 1).collect();
        Ok(QdaModel {
            reg: p.reg,
            classes: [
                ClassDiscriminant::fit(x, &r0, y.len(), p.reg)?,
                ClassDiscriminant::fit(x, &r1, y.len(), p.reg)?,
            ],
        })
    }

    pub fn discriminants(&self, q: &[f64]) -> [f64; 2] {
        [self.classes[0].discriminant(q), self.classes[1].discriminant(q)]
    }

    pub fn proba_row(&self, q: &[f64]) -> [f64; 2] {
        let [d0, d1] = self.discriminants(q);
        softmax2(d0, d1)
    }
}
