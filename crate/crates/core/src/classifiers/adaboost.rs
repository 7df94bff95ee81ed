//! Discrete AdaBoost (SAMME, two classes) over depth-one trees.

use serde::{Deserialize, Serialize};

use super::params::{Hyperparams, Reader};
use super::tree::{Tree, TreeParams};
use crate::error::Result;
use crate::linalg::Matrix;
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaBoostParams {
    pub n_estimators: usize,
    pub learning_rate: f64,
}

impl AdaBoostParams {
    pub fn from_hyper(h: &Hyperparams) -> Result<Self> {
        let mut r = Reader::new("adaboost", h);
        let p = AdaBoostParams {
            n_estimators: r.usize("n_estimators", 50)?,
            learning_rate: r.f64("learning_rate", 1.0)?,
        };
        r.check(p.n_estimators >= 1, "n_estimators must be at least 1")?;
        r.check(p.learning_rate > 0.0, "learning_rate must be positive")?;
        r.finish()?;
        Ok(p)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub stump: Tree,
    pub alpha: f64,
    /// Weighted training error when the stage was accepted.
    pub error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaBoostModel {
    pub stages: Vec<Stage>,
    /// Positive share used when no weak learner beat chance.
    pub prior: f64,
}

fn vote(stump: &Tree, q: &[f64]) -> u8 {
    u8::from(stump.predict_row(q) > 0.5)
}

impl AdaBoostModel {
    pub fn fit(x: &Matrix, y: &[u8], p: &AdaBoostParams) -> Self {
        let n = x.rows();
        let mut w = vec![1.0 / n as f64; n];
        let stump_params = TreeParams { max_depth: Some(1), ..Default::default() };
        let mut rng = seed::rng(0);
        let mut stages = Vec::new();
        for _ in 0..p.n_estimators {
            let stump = Tree::fit(x, y, &w, &stump_params, &mut rng);
            let miss: Vec<bool> = (0..n).map(|i| vote(&stump, x.row(i)) != y[i]).collect();
            let total: f64 = w.iter().sum();
            let err: f64 = w.iter().zip(&miss).filter(|(_, &m)| m).map(|(v, _)| v).sum::<f64>() / total;
            if err >= 0.5 {
                break;
            }
            let e = err.max(1e-10);
            let alpha = p.learning_rate * ((1.0 - e) / e).ln();
            stages.push(Stage { stump, alpha, error: err });
            if err <= 1e-10 {
                break;
            }
            for (wi, &m) in w.iter_mut().zip(&miss) {
                if m {
                    *wi *= alpha.exp();
                }
            }
            let s: f64 = w.iter().sum();
            w.iter_mut().for_each(|v| *v /= s);
        }
        let prior = y.iter().filter(|&&v| v == 1).count() as f64 / n as f64;
        AdaBoostModel { stages, prior }
    }

    /// Share of the total stage weight voting for class 1.
    pub fn score_row(&self, q: &[f64]) -> f64 {
        let total: f64 = self.stages.iter().map(|s| s.alpha).sum();
        if total <= 0.0 {
            return self.prior;
        }
        self.stages.iter().filter(|s| vote(&s.stump, q) == 1).map(|s| s.alpha).sum::<f64>() / total
    }
}
