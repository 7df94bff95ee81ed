//! Soft-margin kernel SVM trained by SMO with second-order working-set selection.

use serde::{Deserialize, Serialize};

use super::gp::{gram, rbf_kernel};
use super::logistic::{sigmoid, softplus};
use super::params::{Hyperparams, Reader};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

const TAU: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct SmoSolution {
    pub alpha: Vec<f64>,
    pub b: f64,
    pub iterations: usize,
    /// False when the iteration cap stopped the solver before the tolerance was met.
    pub converged: bool,
}

/// Dual solution (α, b) of the C-SVM with Gram matrix `k` and labels in {−1, +1}.
pub fn smo_solve(k: &Matrix, y: &[f64], c: f64, tol: f64) -> Result<(Vec<f64>, f64)> {
    let cap = (100 * y.len()).max(100_000);
    let s = smo_solve_with(k, y, c, tol, cap)?;
    Ok((s.alpha, s.b))
}

pub fn smo_solve_with(k: &Matrix, y: &[f64], c: f64, tol: f64, max_iter: usize) -> Result<SmoSolution> {
    let n = y.len();
    if k.rows() != n || k.cols() != n {
        return Err(Error::Shape(format!("gram {}x{} vs {n} labels", k.rows(), k.cols())));
    }
    if !k.is_symmetric(1e-12) {
        return Err(Error::Domain("kernel matrix is not symmetric".into()));
    }
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::Domain(format!("C must be positive, got {c}")));
    }
    if y.iter().any(|&v| v != 1.0 && v != -1.0) {
        return Err(Error::Domain("labels must be -1 or +1".into()));
    }
    let mut a = vec![0.0; n];
    let mut g = vec![-1.0; n];
    let q = |i: usize, j: usize| y[i] * y[j] * k[(i, j)];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        let Some((i, j)) = select_working_set(k, y, &a, &g, c, tol) else {
            converged = true;
            break;
        };
        iterations += 1;
        let (old_i, old_j) = (a[i], a[j]);
        let quad = {
            let v = k[(i, i)] + k[(j, j)] - 2.0 * k[(i, j)];
            if v > 0.0 { v } else { TAU }
        };
        if y[i] != y[j] {
            let delta = (-g[i] - g[j]) / quad;
            let diff = a[i] - a[j];
            a[i] += delta;
            a[j] += delta;
            if diff > 0.0 {
                if a[j] < 0.0 {
                    a[j] = 0.0;
                    a[i] = diff;
                }
            } else if a[i] < 0.0 {
                a[i] = 0.0;
                a[j] = -diff;
            }
            if diff > 0.0 {
                if a[i] > c {
                    a[i] = c;
                    a[j] = c - diff;
                }
            } else if a[j] > c {
                a[j] = c;
                a[i] = c + diff;
            }
        } else {
            let delta = (g[i] - g[j]) / quad;
            let sum = a[i] + a[j];
            a[i] -= delta;
            a[j] += delta;
            if sum > c {
                if a[i] > c {
                    a[i] = c;
                    a[j] = sum - c;
                }
            } else if a[j] < 0.0 {
                a[j] = 0.0;
                a[i] = sum;
            }
            if sum > c {
                if a[j] > c {
                    a[j] = c;
                    a[i] = sum - c;
                }
            } else if a[i] < 0.0 {
                a[i] = 0.0;
                a[j] = sum;
            }
        }
        let (di, dj) = (a[i] - old_i, a[j] - old_j);
        for t in 0..n {
            g[t] += q(t, i) * di + q(t, j) * dj;
        }
    }
    Ok(SmoSolution {
        b: -rho(y, &a, &g, c),
        alpha: a,
        iterations,
        converged,
    })
}

fn in_up(y: f64, a: f64, c: f64) -> bool {
    (y > 0.0 && a < c) || (y < 0.0 && a > 0.0)
}

fn in_low(y: f64, a: f64, c: f64) -> bool {
    (y > 0.0 && a > 0.0) || (y < 0.0 && a < c)
}

fn select_working_set(k: &Matrix, y: &[f64], a: &[f64], g: &[f64], c: f64, tol: f64) -> Option<(usize, usize)> {
    let n = y.len();
    let mut gmax = f64::NEG_INFINITY;
    let mut i = None;
    for t in 0..n {
        if in_up(y[t], a[t], c) && -y[t] * g[t] > gmax {
            gmax = -y[t] * g[t];
            i = Some(t);
        }
    }
    let i = i?;
    let mut gmax2 = f64::NEG_INFINITY;
    let mut best = None;
    let mut best_obj = f64::INFINITY;
    for t in 0..n {
        if !in_low(y[t], a[t], c) {
            continue;
        }
        let v = y[t] * g[t];
        gmax2 = gmax2.max(v);
        let grad_diff = gmax + v;
        if grad_diff > 0.0 {
            let quad = k[(i, i)] + k[(t, t)] - 2.0 * k[(i, t)];
            let quad = if quad > 0.0 { quad } else { TAU };
            let obj = -grad_diff * grad_diff / quad;
            if obj < best_obj {
                best_obj = obj;
                best = Some(t);
            }
        }
    }
    if gmax + gmax2 < tol {
        return None;
    }
    best.map(|j| (i, j))
}

fn rho(y: &[f64], a: &[f64], g: &[f64], c: f64) -> f64 {
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut n_free, mut sum_free) = (0usize, 0.0);
    for t in 0..y.len() {
        let yg = y[t] * g[t];
        if a[t] >= c {
            if y[t] < 0.0 { ub = ub.min(yg) } else { lb = lb.max(yg) }
        } else if a[t] <= 0.0 {
            if y[t] > 0.0 { ub = ub.min(yg) } else { lb = lb.max(yg) }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    if n_free > 0 {
        sum_free / n_free as f64
    } else if ub.is_finite() && lb.is_finite() {
        0.5 * (ub + lb)
    } else if ub.is_finite() {
        ub
    } else if lb.is_finite() {
        lb
    } else {
        0.0
    }
}

/// Largest KKT violation of (α, b): yᵢf(xᵢ) ≥ 1 at α=0, = 1 when free, ≤ 1 at α=C.
pub fn kkt_violation(k: &Matrix, y: &[f64], alpha: &[f64], b: f64, c: f64) -> f64 {
    let n = y.len();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        let f: f64 = (0..n).map(|j| alpha[j] * y[j] * k[(i, j)]).sum::<f64>() + b;
        let m = y[i] * f - 1.0;
        let v = if alpha[i] <= 0.0 {
            (-m).max(0.0)
        } else if alpha[i] >= c {
            m.max(0.0)
        } else {
            m.abs()
        };
        worst = worst.max(v);
    }
    worst
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub c: f64,
    pub gamma: f64,
    pub tol: f64,
    pub probability: bool,
}

impl SvmParams {
    pub fn from_hyper(h: &Hyperparams, n_features: usize) -> Result<Self> {
        let mut r = Reader::new("svm_rbf", h);
        let c = r.f64("C", 1.0)?;
        let gamma = r.gamma("gamma", n_features)?;
        let tol = r.f64("tol", 1e-3)?;
        let probability = r.bool("probability", false)?;
        r.check(c > 0.0 && c.is_finite(), "C must be positive")?;
        r.check(gamma > 0.0 && gamma.is_finite(), "gamma must be positive")?;
        r.check(tol > 0.0, "tol must be positive")?;
        r.finish()?;
        Ok(SvmParams { c, gamma, tol, probability })
    }
}

/// Sigmoid map p = 1 / (1 + exp(a·f + b)) from margin to probability.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Platt {
    pub a: f64,
    pub b: f64,
}

impl Platt {
    /// Newton fit with regularized targets, after Lin, Lin and Weng's formulation.
    pub fn fit(margins: &[f64], y: &[u8]) -> Platt {
        let n_pos = y.iter().filter(|&&v| v == 1).count() as f64;
        let n_neg = y.len() as f64 - n_pos;
        let hi = (n_pos + 1.0) / (n_pos + 2.0);
        let lo = 1.0 / (n_neg + 2.0);
        let t: Vec<f64> = y.iter().map(|&v| if v == 1 { hi } else { lo }).collect();
        let obj = |a: f64, b: f64| -> f64 {
            margins
                .iter()
                .zip(&t)
                .map(|(f, ti)| {
                    let z = a * f + b;
                    // −[t log p + (1−t) log(1−p)] with p = σ(−z)
                    ti * softplus(z) + (1.0 - ti) * softplus(-z)
                })
                .sum()
        };
        let (mut a, mut b) = (0.0, ((n_neg + 1.0) / (n_pos + 1.0)).ln());
        let mut fval = obj(a, b);
        for _ in 0..100 {
            let (mut h11, mut h22, mut h21, mut g1, mut g2) = (1e-12, 1e-12, 0.0, 0.0, 0.0);
            for (f, ti) in margins.iter().zip(&t) {
                let p = sigmoid(-(a * f + b));
                let d2 = p * (1.0 - p);
                h11 += f * f * d2;
                h22 += d2;
                h21 += f * d2;
                let d1 = ti - p;
                g1 += f * d1;
                g2 += d1;
            }
            if g1.abs() < 1e-5 && g2.abs() < 1e-5 {
                break;
            }
            let det = h11 * h22 - h21 * h21;
            let da = -(h22 * g1 - h21 * g2) / det;
            let db = -(-h21 * g1 + h11 * g2) / det;
            let gd = g1 * da + g2 * db;
            let mut step = 1.0;
            let mut moved = false;
            while step >= 1e-10 {
                let (na, nb) = (a + step * da, b + step * db);
                let nf = obj(na, nb);
                if nf < fval + 1e-4 * step * gd {
                    a = na;
                    b = nb;
                    fval = nf;
                    moved = true;
                    break;
                }
                step *= 0.5;
            }
            if !moved {
                break;
            }
        }
        Platt { a, b }
    }

    pub fn apply(&self, margin: f64) -> f64 {
        sigmoid(-(self.a * margin + self.b))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub gamma: f64,
    pub support: Matrix,
    /// αᵢyᵢ for each support vector.
    pub coef: Vec<f64>,
    pub b: f64,
    pub platt: Option<Platt>,
    pub converged: bool,
}

impl SvmModel {
    pub fn fit(x: &Matrix, y: &[u8], p: &SvmParams) -> Result<Self> {
        let k = gram(x, p.gamma);
        let ys: Vec<f64> = y.iter().map(|&v| if v == 1 { 1.0 } else { -1.0 }).collect();
        let cap = (100 * y.len()).max(100_000);
        let sol = smo_solve_with(&k, &ys, p.c, p.tol, cap)?;
        let sv: Vec<usize> = (0..y.len()).filter(|&i| sol.alpha[i] > 0.0).collect();
        let mut model = SvmModel {
            gamma: p.gamma,
            support: x.select_rows(&sv),
            coef: sv.iter().map(|&i| sol.alpha[i] * ys[i]).collect(),
            b: sol.b,
            platt: None,
            converged: sol.converged,
        };
        if p.probability {
            let margins: Vec<f64> = (0..x.rows()).map(|i| model.margin(x.row(i))).collect();
            model.platt = Some(Platt::fit(&margins, y));
        }
        Ok(model)
    }

    pub fn margin(&self, q: &[f64]) -> f64 {
        let mut s = self.b;
        for (i, c) in self.coef.iter().enumerate() {
            s += c * rbf_kernel(self.support.row(i), q, self.gamma);
        }
        s
    }

    pub fn proba(&self, q: &[f64]) -> Option<f64> {
        self.platt.map(|pl| pl.apply(self.margin(q)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_point_identity_kernel() {
        let (a, b) = smo_solve(&Matrix::identity(2), &[1.0, -1.0], 1.0, 1e-3).unwrap();
        assert!((a[0] - 1.0).abs() < 1e-12 && (a[1] - 1.0).abs() < 1e-12);
        assert!(b.abs() < 1e-12);
    }

    #[test]
    fn small_c_clips_at_box() {
        let (a, _) = smo_solve(&Matrix::identity(2), &[1.0, -1.0], 0.3, 1e-3).unwrap();
        assert_eq!(a, vec![0.3, 0.3]);
    }

    #[test]
    fn single_class_gives_zero_alpha() {
        let k = gram(&Matrix::from_rows(&[vec![0.0], vec![1.0], vec![3.0]]).unwrap(), 0.5);
        let (a, b) = smo_solve(&k, &[1.0, 1.0, 1.0], 1.0, 1e-3).unwrap();
        assert!(a.iter().all(|v| *v == 0.0));
        assert!(b > 0.0);
    }

    #[test]
    fn asymmetric_kernel_rejected() {
        let k = Matrix::from_rows(&[vec![1.0, 0.2], vec![0.1, 1.0]]).unwrap();
        assert!(smo_solve(&k, &[1.0, -1.0], 1.0, 1e-3).is_err());
    }

    #[test]
    fn platt_is_monotone_increasing_in_margin() {
        let m = [-2.0, -1.0, -0.5, 0.3, 1.0, 2.0, -0.2, 0.1];
        let y = [0, 0, 0, 1, 1, 1, 1, 0];
        let p = Platt::fit(&m, &y);
        assert!(p.a < 0.0);
        assert!(p.apply(1.0) > p.apply(-1.0));
    }
}
