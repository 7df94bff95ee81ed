//! Gaussian-process classification with the Laplace approximation and an
//! RBF kernel.

use serde::{Deserialize, Serialize};

use super::logistic::sigmoid;
use super::params::{Hyperparams, Reader};
use crate::error::{Error, Result};
use crate::linalg::{dot, sq_dist, Cholesky, Matrix};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpParams {
    pub gamma: f64,
    pub max_iter: usize,
}

impl GpParams {
    pub fn from_hyper(h: &Hyperparams, n_features: usize) -> Result<Self> {
        let mut r = Reader::new("gp_laplace", h);
        let gamma = r.gamma("gamma", n_features)?;
        let max_iter = r.usize("max_iter", 100)?;
        r.check(gamma > 0.0 && gamma.is_finite(), "gamma must be positive")?;
        r.check(max_iter >= 1, "max_iter must be at least 1")?;
        r.finish()?;
        Ok(GpParams { gamma, max_iter })
    }
}

pub fn rbf_kernel(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    (-gamma * sq_dist(a, b)).exp()
}

pub fn gram(x: &Matrix, gamma: f64) -> Matrix {
    let n = x.rows();
    let mut k = Matrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = 1.0;
        for j in 0..i {
            let v = rbf_kernel(x.row(i), x.row(j), gamma);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Posterior mode and the quantities the predictive distribution needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LaplaceState {
    pub f: Vec<f64>,
    /// ∇ log p(y | f̂) = t − σ(f̂), with t = (y + 1) / 2.
    pub grad: Vec<f64>,
    pub sqrt_w: Vec<f64>,
    /// Factor of B = I + W½ K W½.
    pub chol: Cholesky,
    pub iterations: usize,
}

const NEWTON_TOL: f64 = 1e-8;

pub fn laplace_fit(k: &Matrix, y: &[f64], max_iter: usize) -> Result<LaplaceState> {
    let n = k.rows();
    if k.cols() != n || y.len() != n {
        return Err(Error::Shape(format!("gram {}x{} vs {} labels", k.rows(), k.cols(), y.len())));
    }
    let t: Vec<f64> = y.iter().map(|&v| if v > 0.0 { 1.0 } else { 0.0 }).collect();
    let mut f = vec![0.0; n];
    for it in 1..=max_iter {
        let pi: Vec<f64> = f.iter().map(|&v| sigmoid(v)).collect();
        let w: Vec<f64> = pi.iter().map(|p| p * (1.0 - p)).collect();
        let sw: Vec<f64> = w.iter().map(|v| v.sqrt()).collect();
        let grad: Vec<f64> = t.iter().zip(&pi).map(|(a, b)| a - b).collect();
        let mut b_mat = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                b_mat[(i, j)] = sw[i] * k[(i, j)] * sw[j];
            }
            b_mat[(i, i)] += 1.0;
        }
        let chol = Cholesky::with_jitter(&b_mat)?;
        let b: Vec<f64> = (0..n).map(|i| w[i] * f[i] + grad[i]).collect();
        let kb = k.matvec(&b);
        let swkb: Vec<f64> = (0..n).map(|i| sw[i] * kb[i]).collect();
        let inner = chol.solve(&swkb);
        let a: Vec<f64> = (0..n).map(|i| b[i] - sw[i] * inner[i]).collect();
        let f_new = k.matvec(&a);
        if f_new.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("Laplace Newton step produced a non-finite latent".into()));
        }
        let update = f_new.iter().zip(&f).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        f = f_new;
        if update <= NEWTON_TOL {
            let pi: Vec<f64> = f.iter().map(|&v| sigmoid(v)).collect();
            let sqrt_w: Vec<f64> = pi.iter().map(|p| (p * (1.0 - p)).sqrt()).collect();
            let mut b_mat = Matrix::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    b_mat[(i, j)] = sqrt_w[i] * k[(i, j)] * sqrt_w[j];
                }
                b_mat[(i, i)] += 1.0;
            }
            return Ok(LaplaceState {
                grad: t.iter().zip(&pi).map(|(a, b)| a - b).collect(),
                chol: Cholesky::with_jitter(&b_mat)?,
                sqrt_w,
                f,
                iterations: it,
            });
        }
    }
    Err(Error::Numerical(format!("Laplace Newton iteration did not converge in {max_iter} steps")))
}

/// Latent posterior mode f̂ satisfying f̂ = K ∇ log p(y | f̂).
pub fn laplace_mode(k: &Matrix, y: &[f64]) -> Result<Vec<f64>> {
    Ok(laplace_fit(k, y, 100)?.f)
}

const GH_NODES: [f64; 9] = [
    -3.1909932017815277,
    -2.266580584531843,
    -1.468553289216668,
    -0.7235510187528376,
    0.0,
    0.7235510187528376,
    1.468553289216668,
    2.266580584531843,
    3.1909932017815277,
];
const GH_WEIGHTS: [f64; 9] = [
    3.9606977263264365e-05,
    0.004943624275536941,
    0.08847452739437664,
    0.43265155900255564,
    0.720235215606051,
    0.43265155900255564,
    0.08847452739437664,
    0.004943624275536941,
    3.9606977263264365e-05,
];

/// E[σ(z)] for z ~ N(mean, var) by 9-node Gauss-Hermite quadrature.
pub fn expected_sigmoid(mean: f64, var: f64) -> f64 {
    let s = (2.0 * var.max(0.0)).sqrt();
    let total: f64 = GH_NODES
        .iter()
        .zip(&GH_WEIGHTS)
        .map(|(x, w)| w * sigmoid(mean + s * x))
        .sum();
    (total / std::f64::consts::PI.sqrt()).clamp(0.0, 1.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpModel {
    pub gamma: f64,
    pub x: Matrix,
    pub state: LaplaceState,
}

impl GpModel {
    pub fn fit(x: &Matrix, y: &[u8], p: &GpParams) -> Result<Self> {
        let k = gram(x, p.gamma);
        let ys: Vec<f64> = y.iter().map(|&v| if v == 1 { 1.0 } else { -1.0 }).collect();
        Ok(GpModel {
            gamma: p.gamma,
            x: x.clone(),
            state: laplace_fit(&k, &ys, p.max_iter)?,
        })
    }

    /// Predictive latent mean and variance.
    pub fn latent(&self, q: &[f64]) -> (f64, f64) {
        let ks: Vec<f64> = (0..self.x.rows()).map(|i| rbf_kernel(self.x.row(i), q, self.gamma)).collect();
        let mean = dot(&ks, &self.state.grad);
        let wk: Vec<f64> = ks.iter().zip(&self.state.sqrt_w).map(|(a, b)| a * b).collect();
        let v = self.state.chol.solve_lower(&wk);
        (mean, (1.0 - dot(&v, &v)).max(0.0))
    }

    pub fn proba_row(&self, q: &[f64]) -> [f64; 2] {
        let (m, v) = self.latent(q);
        let p1 = expected_sigmoid(m, v);
        let p0 = expected_sigmoid(-m, v);
        let z = p0 + p1;
        [p0 / z, p1 / z]
    }
}
