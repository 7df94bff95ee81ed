//! Quasi-Newton minimization with a strong-Wolfe line search.
//!
//! Dense BFGS keeps the full inverse-Hessian estimate; the limited-memory
//! variant keeps the last `m` curvature pairs and is used for large parameter
//! vectors.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::linalg::dot;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Memory {
    Full,
    Limited(usize),
}

#[derive(Clone, Copy, Debug)]
pub struct BfgsOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub memory: Memory,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        BfgsOptions {
            tol: 1e-6,
            max_iter: 200,
            memory: Memory::Full,
        }
    }
}

#[derive(Clone, Debug)]
pub struct BfgsResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    /// Gradient tolerance reached. False when stopped by `max_iter` or a stalled line search.
    pub converged: bool,
    /// Objective value after each accepted step, starting with f(x0).
    pub trace: Vec<f64>,
}

const C1: f64 = 1e-4;
const C2: f64 = 0.9;
const MAX_HALVINGS: usize = 60;

fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

pub fn bfgs_minimize<F>(f: F, x0: &[f64], opts: BfgsOptions) -> Result<BfgsResult>
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let (mut fx, mut g) = f(&x);
    if !fx.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("objective or gradient not finite at the starting point".into()));
    }
    let mut trace = vec![fx];
    let mut h_inv: Vec<f64> = match opts.memory {
        Memory::Full => {
            let mut h = vec![0.0; n * n];
            for i in 0..n {
                h[i * n + i] = 1.0;
            }
            h
        }
        Memory::Limited(_) => Vec::new(),
    };
    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut first = true;
    let mut iterations = 0;

    while iterations < opts.max_iter {
        let gn = norm(&g);
        if gn <= opts.tol {
            return Ok(BfgsResult { x, f: fx, grad_norm: gn, iterations, converged: true, trace });
        }
        let mut d = match opts.memory {
            Memory::Full => {
                let mut d = vec![0.0; n];
                for i in 0..n {
                    d[i] = -dot(&h_inv[i * n..(i + 1) * n], &g);
                }
                d
            }
            Memory::Limited(_) => two_loop(&pairs, &g),
        };
        let mut slope = dot(&d, &g);
        if slope >= 0.0 || !slope.is_finite() {
            // Curvature estimate went bad; restart from steepest descent.
            d = g.iter().map(|v| -v).collect();
            slope = -gn * gn;
            pairs.clear();
            if opts.memory == Memory::Full {
                h_inv.iter_mut().for_each(|v| *v = 0.0);
                for i in 0..n {
                    h_inv[i * n + i] = 1.0;
                }
            }
            first = true;
        }
        let alpha0 = if first { (1.0 / gn).min(1.0) } else { 1.0 };
        let step = match line_search(&f, &x, fx, slope, &d, alpha0)? {
            Some(s) => s,
            None => {
                return Ok(BfgsResult { x, f: fx, grad_norm: gn, iterations, converged: false, trace });
            }
        };
        let (alpha, f_new, g_new) = step;
        let s: Vec<f64> = d.iter().map(|v| alpha * v).collect();
        let yv: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        for (xi, si) in x.iter_mut().zip(&s) {
            *xi += si;
        }
        fx = f_new;
        g = g_new;
        trace.push(fx);
        iterations += 1;

        let sy = dot(&s, &yv);
        if sy > 1e-12 * norm(&s) * norm(&yv) {
            match opts.memory {
                Memory::Full => {
                    if first {
                        let scale = sy / dot(&yv, &yv);
                        h_inv.iter_mut().for_each(|v| *v *= scale);
                    }
                    update_inverse(&mut h_inv, &s, &yv, sy);
                }
                Memory::Limited(m) => {
                    if pairs.len() == m.max(1) {
                        pairs.pop_front();
                    }
                    pairs.push_back((s, yv, 1.0 / sy));
                }
            }
            first = false;
        }
    }
    let gn = norm(&g);
    Ok(BfgsResult { x, f: fx, grad_norm: gn, iterations, converged: gn <= opts.tol, trace })
}

/// H ← (I − ρ s yᵀ) H (I − ρ y sᵀ) + ρ s sᵀ
fn update_inverse(h: &mut [f64], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..n).map(|i| dot(&h[i * n..(i + 1) * n], y)).collect();
    let yhy = dot(y, &hy);
    let coef = (1.0 + rho * yhy) * rho;
    for i in 0..n {
        for j in 0..n {
            h[i * n + j] += coef * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
        }
    }
}

fn two_loop(pairs: &VecDeque<(Vec<f64>, Vec<f64>, f64)>, g: &[f64]) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(pairs.len());
    for (s, y, rho) in pairs.iter().rev() {
        let a = rho * dot(s, &q);
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    if let Some((s, y, _)) = pairs.back() {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for ((s, y, rho), a) in pairs.iter().zip(alphas.iter().rev()) {
        let b = rho * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (a - b) * si;
        }
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

type Eval = (f64, f64, Vec<f64>);

/// Returns the accepted (step, value, gradient), or `None` when no decrease
/// can be found in floating point.
fn line_search<F>(f: &F, x: &[f64], f0: f64, slope0: f64, d: &[f64], alpha0: f64) -> Result<Option<Eval>>
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let eval = |alpha: f64| -> (f64, Vec<f64>, f64) {
        let xt: Vec<f64> = x.iter().zip(d).map(|(a, b)| a + alpha * b).collect();
        let (v, g) = f(&xt);
        let slope = dot(&g, d);
        (v, g, slope)
    };
    let finite = |v: f64, g: &[f64]| v.is_finite() && g.iter().all(|x| x.is_finite());

    let mut alpha = alpha0;
    let mut prev: (f64, f64, f64) = (0.0, f0, slope0);
    let mut halvings = 0;
    for i in 0..40 {
        let (v, g, slope) = eval(alpha);
        if !finite(v, &g) {
            halvings += 1;
            if halvings > MAX_HALVINGS {
                return Err(Error::Numerical("objective remained non-finite along the search direction".into()));
            }
            alpha = prev.0 + 0.5 * (alpha - prev.0);
            continue;
        }
        if v > f0 + C1 * alpha * slope0 || (i > 0 && v >= prev.1) {
            return zoom(&eval, f0, slope0, prev, (alpha, v, slope));
        }
        if slope.abs() <= -C2 * slope0 {
            return Ok(Some((alpha, v, g)));
        }
        if slope >= 0.0 {
            return zoom(&eval, f0, slope0, (alpha, v, slope), prev);
        }
        prev = (alpha, v, slope);
        alpha *= 2.0;
    }
    let (v, g, _) = eval(prev.0);
    Ok((prev.0 > 0.0 && v < f0).then_some((prev.0, v, g)))
}

fn zoom<E>(eval: &E, f0: f64, slope0: f64, mut lo: (f64, f64, f64), mut hi: (f64, f64, f64)) -> Result<Option<Eval>>
where
    E: Fn(f64) -> (f64, Vec<f64>, f64),
{
    let mut best: Option<Eval> = None;
    for _ in 0..MAX_HALVINGS {
        let alpha = 0.5 * (lo.0 + hi.0);
        if (hi.0 - lo.0).abs() <= 1e-16 * lo.0.abs().max(1e-300) {
            break;
        }
        let (v, g, slope) = eval(alpha);
        if !v.is_finite() || g.iter().any(|x| !x.is_finite()) {
            hi = (alpha, f64::INFINITY, 0.0);
            continue;
        }
        if v < f0 && best.as_ref().is_none_or(|b| v < b.1) {
            best = Some((alpha, v, g.clone()));
        }
        if v > f0 + C1 * alpha * slope0 || v >= lo.1 {
            hi = (alpha, v, slope);
        } else {
            if slope.abs() <= -C2 * slope0 {
                return Ok(Some((alpha, v, g)));
            }
            if slope * (hi.0 - lo.0) >= 0.0 {
                hi = lo;
            }
            lo = (alpha, v, slope);
        }
    }
    // Curvature condition never met; accept the best sufficient decrease seen.
    if lo.0 > 0.0 && lo.1 < f0 {
        let (v, g, _) = eval(lo.0);
        return Ok(Some((lo.0, v, g)));
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> (f64, Vec<f64>) {
        let (a, b) = (x[0], x[1]);
        let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
        let g = vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
        (f, g)
    }

    #[test]
    fn quadratic_minimum() {
        let r = bfgs_minimize(|x| ((x[0] - 3.0).powi(2), vec![2.0 * (x[0] - 3.0)]), &[0.0], BfgsOptions::default()).unwrap();
        assert!(r.converged);
        assert!((r.x[0] - 3.0).abs() < 1e-6);
    }

    #[test]
    fn rosenbrock_dense_and_limited() {
        for memory in [Memory::Full, Memory::Limited(5)] {
            let opts = BfgsOptions { tol: 1e-8, max_iter: 500, memory };
            let r = bfgs_minimize(rosenbrock, &[-1.2, 1.0], opts).unwrap();
            assert!((r.x[0] - 1.0).abs() < 1e-4 && (r.x[1] - 1.0).abs() < 1e-4, "{memory:?} {:?}", r.x);
            assert!(r.trace.windows(2).all(|w| w[1] <= w[0]));
        }
    }

    #[test]
    fn stationary_start_returns_start() {
        let r = bfgs_minimize(|x| ((x[0] - 3.0).powi(2), vec![2.0 * (x[0] - 3.0)]), &[3.0], BfgsOptions::default()).unwrap();
        assert_eq!(r.x, vec![3.0]);
        assert_eq!(r.iterations, 0);
    }

    #[test]
    fn non_finite_region_is_avoided() {
        // log barrier: infinite for x <= 0, minimum at x = 1
        let f = |x: &[f64]| {
            if x[0] <= 0.0 {
                (f64::NAN, vec![f64::NAN])
            } else {
                (x[0] - x[0].ln(), vec![1.0 - 1.0 / x[0]])
            }
        };
        let r = bfgs_minimize(f, &[5.0], BfgsOptions::default()).unwrap();
        assert!((r.x[0] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn non_finite_start_is_error() {
        assert!(bfgs_minimize(|_| (f64::NAN, vec![0.0]), &[0.0], BfgsOptions::default()).is_err());
    }
}
