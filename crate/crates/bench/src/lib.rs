//! Deterministic fixtures shared by the benchmarks.

use clonesel::data::{ColumnKind, ColumnSpec, Dataset, Planting, RowKey};
use clonesel::linalg::Matrix;
use clonesel::metrics::ConfusionCounts;
use clonesel::seed;

/// Uniform draw on [0, 1) keyed by purpose and index.
pub fn unit(master: u64, purpose: &str, index: u64) -> f64 {
    (seed::derive(master, purpose, index) >> 11) as f64 / (1u64 << 53) as f64
}

/// Four noisy XOR clusters in the plane.
pub fn xor(n: usize, master: u64) -> (Matrix, Vec<u8>) {
    let mut rows = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let (a, b) = ((i % 2) as f64, ((i / 2) % 2) as f64);
        let jitter = |k: u64| 0.5 * (unit(master, "xor", 2 * i as u64 + k) - 0.5);
        rows.push(vec![2.0 * a - 1.0 + jitter(0), 2.0 * b - 1.0 + jitter(1), unit(master, "noise", i as u64)]);
        y.push(u8::from(a != b));
    }
    (Matrix::from_rows(&rows).expect("rectangular"), y)
}

/// RBF Gram matrix and ±1 labels of the XOR fixture.
pub fn rbf_problem(n: usize, gamma: f64) -> (Matrix, Vec<f64>) {
    let (x, y) = xor(n, 3);
    let mut k = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            k[(i, j)] = (-gamma * clonesel::linalg::sq_dist(x.row(i), x.row(j))).exp();
        }
    }
    (k, y.iter().map(|&v| if v == 1 { 1.0 } else { -1.0 }).collect())
}

/// Two columns correlated at 0.9 with about 20% of cells missing in each.
pub fn correlated_holes(n: usize) -> Dataset {
    let normal = |purpose: &str, i: usize| {
        let (u1, u2) = (unit(5, purpose, 2 * i as u64).max(1e-300), unit(5, purpose, 2 * i as u64 + 1));
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    };
    let a: Vec<f64> = (0..n).map(|i| normal("a", i)).collect();
    let b: Vec<f64> = (0..n).map(|i| 0.9 * a[i] + 0.19f64.sqrt() * normal("b", i)).collect();
    let holed = |v: &[f64], purpose: &str| -> Vec<Option<f64>> {
        v.iter().enumerate().map(|(i, &x)| (unit(5, purpose, i as u64) >= 0.2).then_some(x)).collect()
    };
    let keys = (0..n)
        .map(|i| RowKey { year: 2020, region: "HER".into(), planting: Planting::Late, clone_id: format!("B{i}") })
        .collect();
    Dataset::new(
        vec![
            ColumnSpec::numeric("a", ColumnKind::Mass, "", None, 0),
            ColumnSpec::numeric("b", ColumnKind::Mass, "", None, 0),
        ],
        vec![holed(&a, "hole-a"), holed(&b, "hole-b")],
        None,
        keys,
    )
    .expect("consistent fixture")
}

pub fn confusions(n: usize) -> Vec<ConfusionCounts> {
    (0..n as u64)
        .map(|i| {
            let c = |k: u64| (unit(9, "cell", 4 * i + k) * 200.0) as u64;
            ConfusionCounts::new(c(0), c(1), c(2), c(3))
        })
        .collect()
}
