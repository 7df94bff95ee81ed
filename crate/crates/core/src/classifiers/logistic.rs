//! L2-penalized logistic regression fitted by damped Newton iterations.

use serde::{Deserialize, Serialize};

use super::params::{Hyperparams, Reader};
use crate::error::{Error, Result};
use crate::linalg::{dot, Cholesky, Matrix};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticParams {
    pub l2: f64,
    pub max_iter: usize,
}

impl LogisticParams {
    pub fn from_hyper(h: &Hyperparams) -> Result<Self> {
        let mut r = Reader::new("logistic_regression", h);
        let l2 = r.f64("l2", 0.1)?;
        let max_iter = r.usize("max_iter", 100)?;
        r.check(l2 >= 0.0, "l2 must be nonnegative")?;
        r.check(max_iter >= 1, "max_iter must be at least 1")?;
        r.finish()?;
        Ok(LogisticParams { l2, max_iter })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub intercept: f64,
    pub coef: Vec<f64>,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// log(1 + e^z) without overflow.
pub fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn objective(x: &Matrix, y: &[u8], beta: &[f64], l2: f64) -> f64 {
    let mut s = 0.0;
    for i in 0..x.rows() {
        let z = beta[0] + dot(&beta[1..], x.row(i));
        s += softplus(z) - if y[i] == 1 { z } else { 0.0 };
    }
    s + 0.5 * l2 * beta[1..].iter().map(|b| b * b).sum::<f64>()
}

impl LogisticModel {
    pub fn fit(x: &Matrix, y: &[u8], p: &LogisticParams) -> Result<Self> {
        let (n, d) = (x.rows(), x.cols());
        let mut beta = vec![0.0; d + 1];
        let ybar = y.iter().filter(|&&v| v == 1).count() as f64 / n as f64;
        beta[0] = (ybar / (1.0 - ybar)).ln();
        let mut f = objective(x, y, &beta, p.l2);
        for _ in 0..p.max_iter {
            let mut g = vec![0.0; d + 1];
            let mut h = Matrix::zeros(d + 1, d + 1);
            for i in 0..n {
                let r = x.row(i);
                let mu = sigmoid(beta[0] + dot(&beta[1..], r));
                let e = mu - y[i] as f64;
                let w = (mu * (1.0 - mu)).max(1e-12);
                g[0] += e;
                h[(0, 0)] += w;
                for a in 0..d {
                    g[a + 1] += e * r[a];
                    h[(a + 1, 0)] += w * r[a];
                    for b in 0..=a {
                        h[(a + 1, b + 1)] += w * r[a] * r[b];
                    }
                }
            }
            for a in 1..=d {
                g[a] += p.l2 * beta[a];
                h[(a, a)] += p.l2;
            }
            for a in 0..=d {
                for b in 0..a {
                    h[(b, a)] = h[(a, b)];
                }
            }
            if g.iter().map(|v| v.abs()).fold(0.0, f64::max) <= 1e-9 * n as f64 {
                break;
            }
            let step = Cholesky::with_jitter(&h)?.solve(&g);
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..50 {
                let trial: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b - t * s).collect();
                let ft = objective(x, y, &trial, p.l2);
                if ft.is_finite() && ft <= f {
                    let improvement = f - ft;
                    beta = trial;
                    f = ft;
                    accepted = improvement > 1e-14 * f.abs().max(1.0);
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        if beta.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("logistic regression diverged".into()));
        }
        Ok(LogisticModel {
            intercept: beta[0],
            coef: beta[1..].to_vec(),
        })
    }

    pub fn decision(&self, q: &[f64]) -> f64 {
        self.intercept + dot(&self.coef, q)
    }

    pub fn proba_row(&self, q: &[f64]) -> f64 {
        sigmoid(self.decision(q))
    }
}
