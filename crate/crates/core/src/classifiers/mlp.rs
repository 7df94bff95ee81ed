//! Feed-forward network with tanh hidden layers and a logistic output unit,
//! trained full-batch on penalized cross-entropy with quasi-Newton steps.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::bfgs::{bfgs_minimize, BfgsOptions, Memory};
use super::logistic::{sigmoid, softplus};
use super::params::{Hyperparams, Reader};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::seed;

/// Parameter counts above this use the limited-memory update.
pub const DENSE_LIMIT: usize = 1000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub hidden_sizes: Vec<usize>,
    pub l2: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl MlpParams {
    pub fn from_hyper(h: &Hyperparams) -> Result<Self> {
        let mut r = Reader::new("mlp_bfgs", h);
        let p = MlpParams {
            hidden_sizes: r.list("hidden_sizes", &[16])?,
            l2: r.f64("l2", 1e-4)?,
            max_iter: r.usize("max_iter", 200)?,
            tol: r.f64("tol", 1e-5)?,
        };
        r.check(!p.hidden_sizes.is_empty(), "hidden_sizes must be nonempty")?;
        r.check(p.l2 >= 0.0, "l2 must be nonnegative")?;
        r.check(p.max_iter >= 1, "max_iter must be at least 1")?;
        r.finish()?;
        Ok(p)
    }
}

/// Layer widths from input to the single output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub sizes: Vec<usize>,
}

impl Layout {
    pub fn new(n_inputs: usize, hidden: &[usize]) -> Self {
        let mut sizes = vec![n_inputs];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        Layout { sizes }
    }

    pub fn n_params(&self) -> usize {
        self.sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// Offsets of (weights, biases) for each layer; weights are `out × in`, row-major.
    fn offsets(&self) -> Vec<(usize, usize)> {
        let mut o = 0;
        self.sizes
            .windows(2)
            .map(|w| {
                let wo = o;
                o += w[0] * w[1];
                let bo = o;
                o += w[1];
                (wo, bo)
            })
            .collect()
    }
}

/// Mean cross-entropy plus (l2 / 2n)·‖W‖², and its gradient by backpropagation.
pub fn loss_and_grad(layout: &Layout, theta: &[f64], x: &Matrix, y: &[u8], l2: f64) -> (f64, Vec<f64>) {
    let n = x.rows();
    let offs = layout.offsets();
    let nl = offs.len();
    let mut grad = vec![0.0; theta.len()];
    let mut loss = 0.0;
    let mut acts: Vec<Vec<f64>> = layout.sizes.iter().map(|&s| vec![0.0; s]).collect();
    for i in 0..n {
        acts[0].copy_from_slice(x.row(i));
        let mut z_out = 0.0;
        for l in 0..nl {
            let (fi, fo) = (layout.sizes[l], layout.sizes[l + 1]);
            let (wo, bo) = offs[l];
            let (prev, rest) = acts.split_at_mut(l + 1);
            let input = &prev[l];
            for o in 0..fo {
                let w = &theta[wo + o * fi..wo + (o + 1) * fi];
                let z = theta[bo + o] + w.iter().zip(input).map(|(a, b)| a * b).sum::<f64>();
                if l + 1 == nl {
                    z_out = z;
                    rest[0][o] = sigmoid(z);
                } else {
                    rest[0][o] = z.tanh();
                }
            }
        }
        let t = y[i] as f64;
        loss += softplus(z_out) - t * z_out;
        let mut delta = vec![(acts[nl][0] - t) / n as f64];
        for l in (0..nl).rev() {
            let (fi, fo) = (layout.sizes[l], layout.sizes[l + 1]);
            let (wo, bo) = offs[l];
            let input = &acts[l];
            for o in 0..fo {
                grad[bo + o] += delta[o];
                let gw = &mut grad[wo + o * fi..wo + (o + 1) * fi];
                for (g, a) in gw.iter_mut().zip(input) {
                    *g += delta[o] * a;
                }
            }
            if l > 0 {
                let mut next = vec![0.0; fi];
                for o in 0..fo {
                    let w = &theta[wo + o * fi..wo + (o + 1) * fi];
                    for (nx, wv) in next.iter_mut().zip(w) {
                        *nx += wv * delta[o];
                    }
                }
                for (nx, a) in next.iter_mut().zip(input) {
                    *nx *= 1.0 - a * a;
                }
                delta = next;
            }
        }
    }
    loss /= n as f64;
    let scale = l2 / n as f64;
    for &(wo, bo) in &offs {
        for k in wo..bo {
            loss += 0.5 * scale * theta[k] * theta[k];
            grad[k] += scale * theta[k];
        }
    }
    (loss, grad)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub layout: Layout,
    pub theta: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

pub fn init_params(layout: &Layout, seed_value: u64) -> Vec<f64> {
    let mut rng = seed::rng(seed_value);
    let mut theta = vec![0.0; layout.n_params()];
    for (l, (wo, bo)) in layout.offsets().into_iter().enumerate() {
        let (fi, fo) = (layout.sizes[l], layout.sizes[l + 1]);
        let bound = (6.0 / (fi + fo) as f64).sqrt();
        for v in &mut theta[wo..bo] {
            *v = rng.random_range(-bound..bound);
        }
        for v in &mut theta[bo..bo + fo] {
            *v = rng.random_range(-bound..bound);
        }
    }
    theta
}

impl MlpModel {
    pub fn fit(x: &Matrix, y: &[u8], p: &MlpParams, seed_value: u64) -> Result<Self> {
        let layout = Layout::new(x.cols(), &p.hidden_sizes);
        let theta0 = init_params(&layout, seed::derive(seed_value, "mlp-init", 0));
        let memory = if layout.n_params() <= DENSE_LIMIT { Memory::Full } else { Memory::Limited(10) };
        let opts = BfgsOptions { tol: p.tol, max_iter: p.max_iter, memory };
        let r = bfgs_minimize(|t| loss_and_grad(&layout, t, x, y, p.l2), &theta0, opts)?;
        if r.x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("network weights became non-finite".into()));
        }
        Ok(MlpModel {
            layout,
            theta: r.x,
            iterations: r.iterations,
            converged: r.converged,
        })
    }

    pub fn proba_row(&self, q: &[f64]) -> f64 {
        let offs = self.layout.offsets();
        let mut a = q.to_vec();
        let nl = offs.len();
        for (l, &(wo, bo)) in offs.iter().enumerate() {
            let (fi, fo) = (self.layout.sizes[l], self.layout.sizes[l + 1]);
            let next: Vec<f64> = (0..fo)
                .map(|o| {
                    let w = &self.theta[wo + o * fi..wo + (o + 1) * fi];
                    let z = self.theta[bo + o] + w.iter().zip(&a).map(|(x, y)| x * y).sum::<f64>();
                    if l + 1 == nl { sigmoid(z) } else { z.tanh() }
                })
                .collect();
            a = next;
        }
        a[0]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_count() {
        assert_eq!(Layout::new(5, &[4, 3]).n_params(), 5 * 4 + 4 + 4 * 3 + 3 + 3 + 1);
    }

    #[test]
    fn forward_matches_loss() {
        let x = Matrix::from_rows(&[vec![0.1, -0.4], vec![1.0, 0.3]]).unwrap();
        let y = [0, 1];
        let layout = Layout::new(2, &[3]);
        let theta = init_params(&layout, 7);
        let m = MlpModel { layout: layout.clone(), theta: theta.clone(), iterations: 0, converged: false };
        let (loss, _) = loss_and_grad(&layout, &theta, &x, &y, 0.0);
        let direct: f64 = (0..2)
            .map(|i| {
                let p = m.proba_row(x.row(i));
                if y[i] == 1 { -p.ln() } else { -(1.0 - p).ln() }
            })
            .sum::<f64>()
            / 2.0;
        assert!((loss - direct).abs() < 1e-12);
    }
}
