//! Histogram gradient boosting for log-loss with best-first leaf-wise trees.

use serde::{Deserialize, Serialize};

use super::logistic::{sigmoid, softplus};
use super::params::{Hyperparams, Reader};
use crate::error::Result;
use crate::linalg::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HgbParams {
    pub learning_rate: f64,
    pub max_iter: usize,
    pub max_depth: Option<usize>,
    pub l2: f64,
    pub max_bins: usize,
    pub max_leaf_nodes: usize,
    pub min_samples_leaf: usize,
}

impl HgbParams {
    pub fn from_hyper(h: &Hyperparams) -> Result<Self> {
        let mut r = Reader::new("hgbc", h);
        let p = HgbParams {
            learning_rate: r.f64("learning_rate", 0.1)?,
            max_iter: r.usize("max_iter", 100)?,
            max_depth: r.opt_usize("max_depth", None)?,
            l2: r.f64("l2", 0.0)?,
            max_bins: r.usize("max_bins", 255)?,
            max_leaf_nodes: r.usize("max_leaf_nodes", 31)?,
            min_samples_leaf: r.usize("min_samples_leaf", 20)?,
        };
        r.check(p.learning_rate > 0.0, "learning_rate must be positive")?;
        r.check(p.max_iter >= 1, "max_iter must be at least 1")?;
        r.check(p.l2 >= 0.0, "l2 must be nonnegative")?;
        r.check((2..=255).contains(&p.max_bins), "max_bins must lie in [2, 255]")?;
        r.check(p.max_leaf_nodes >= 2, "max_leaf_nodes must be at least 2")?;
        r.check(p.max_depth != Some(0), "max_depth must be at least 1")?;
        r.finish()?;
        Ok(p)
    }
}

const MIN_HESSIAN: f64 = 1e-3;

/// Best prefix split of per-bin gradient and hessian sums:
/// `(number of bins sent left, gain)`, or `None` when no split has positive gain.
pub fn hgb_best_split(g: &[f64], h: &[f64], l2: f64) -> Option<(usize, f64)> {
    best_bin_split(g, h, None, l2, 0, 0.0)
}

fn best_bin_split(
    g: &[f64],
    h: &[f64],
    counts: Option<&[usize]>,
    l2: f64,
    min_leaf: usize,
    min_hess: f64,
) -> Option<(usize, f64)> {
    let (gt, ht): (f64, f64) = (g.iter().sum(), h.iter().sum());
    let nt: usize = counts.map_or(0, |c| c.iter().sum());
    let term = |gs: f64, hs: f64| if hs + l2 > 0.0 { gs * gs / (hs + l2) } else { 0.0 };
    let parent = term(gt, ht);
    let (mut gl, mut hl, mut nl) = (0.0, 0.0, 0usize);
    let mut best: Option<(usize, f64)> = None;
    for b in 0..g.len().saturating_sub(1) {
        gl += g[b];
        hl += h[b];
        if let Some(c) = counts {
            nl += c[b];
            if c[b] == 0 {
                continue;
            }
            if nl < min_leaf || nt - nl < min_leaf {
                continue;
            }
        }
        let (gr, hr) = (gt - gl, ht - hl);
        if hl < min_hess || hr < min_hess {
            continue;
        }
        let gain = term(gl, hl) + term(gr, hr) - parent;
        if gain > 1e-12 && best.is_none_or(|(_, bg)| gain > bg) {
            best = Some((b + 1, gain));
        }
    }
    best
}

/// Bin edges per feature: values ≤ edges[k] and > edges[k−1] fall in bin k.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinMapper {
    pub edges: Vec<Vec<f64>>,
}

impl BinMapper {
    pub fn fit(x: &Matrix, max_bins: usize) -> Self {
        let edges = (0..x.cols())
            .map(|j| {
                let mut v = x.column(j);
                v.sort_by(f64::total_cmp);
                let mut distinct = v.clone();
                distinct.dedup();
                if distinct.len() <= max_bins {
                    distinct.windows(2).map(|w| w[0] + 0.5 * (w[1] - w[0])).collect()
                } else {
                    let n = v.len();
                    let mut e: Vec<f64> = (1..max_bins)
                        .map(|k| {
                            let pos = k as f64 * (n - 1) as f64 / max_bins as f64;
                            let lo = pos.floor() as usize;
                            let frac = pos - lo as f64;
                            v[lo] + frac * (v[(lo + 1).min(n - 1)] - v[lo])
                        })
                        .collect();
                    e.dedup();
                    e
                }
            })
            .collect();
        BinMapper { edges }
    }

    pub fn bin(&self, j: usize, v: f64) -> u8 {
        self.edges[j].partition_point(|&e| e < v) as u8
    }

    pub fn n_bins(&self, j: usize) -> usize {
        self.edges[j].len() + 1
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HgbNode {
    Leaf { value: f64 },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HgbTree {
    pub nodes: Vec<HgbNode>,
}

impl HgbTree {
    pub fn predict_row(&self, q: &[f64]) -> f64 {
        let mut n = 0;
        loop {
            match self.nodes[n] {
                HgbNode::Leaf { value } => return value,
                HgbNode::Split { feature, threshold, left, right } => {
                    n = if q[feature] <= threshold { left } else { right };
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HgbModel {
    pub baseline: f64,
    pub trees: Vec<HgbTree>,
    /// Mean training log-loss before the first stage and after each stage.
    pub train_loss: Vec<f64>,
}

/// A node owns the same index range in every feature's ordering buffer; inside that
/// range the entries are sorted by (bin, row).
struct Candidate {
    node: usize,
    range: (usize, usize),
    depth: usize,
    split: Option<(usize, usize, f64)>,
}

const ROW_BITS: u32 = 24;
const ROW_MASK: u32 = (1 << ROW_BITS) - 1;

fn row_of(e: u32) -> usize {
    (e & ROW_MASK) as usize
}

fn bin_of(e: u32) -> u32 {
    e >> ROW_BITS
}

/// Best split of a node by scanning each feature's rows in bin order: every boundary
/// between occupied bins is a candidate, exactly as a prefix scan over the histogram.
/// Entries pack the bin in the top byte and the row below it.
fn find_split(gh: &[(f64, f64)], orders: &[Vec<u32>], (a, z): (usize, usize), p: &HgbParams) -> Option<(usize, usize, f64)> {
    let rows = &orders[0][a..z];
    let nt = rows.len();
    if nt < 2 * p.min_samples_leaf.max(1) {
        return None;
    }
    let (gt, ht) = rows.iter().fold((0.0, 0.0), |(a, b), &e| (a + gh[row_of(e)].0, b + gh[row_of(e)].1));
    let term = |gs: f64, hs: f64| if hs + p.l2 > 0.0 { gs * gs / (hs + p.l2) } else { 0.0 };
    let parent = term(gt, ht);
    let lo = p.min_samples_leaf.max(1);
    let mut best: Option<(usize, usize, f64)> = None;
    for (j, order) in orders.iter().enumerate() {
        let order = &order[a..z];
        let (mut gl, mut hl) = (0.0, 0.0);
        for k in 0..nt - 1 {
            let e = order[k];
            let (gi, hi) = gh[row_of(e)];
            gl += gi;
            hl += hi;
            let nl = k + 1;
            if nl < lo || nt - nl < p.min_samples_leaf || bin_of(order[k + 1]) == bin_of(e) {
                continue;
            }
            let (gr, hr) = (gt - gl, ht - hl);
            if hl < MIN_HESSIAN || hr < MIN_HESSIAN {
                continue;
            }
            let gain = term(gl, hl) + term(gr, hr) - parent;
            if gain > 1e-12 && best.is_none_or(|(_, _, bg)| gain > bg) {
                best = Some((j, bin_of(e) as usize + 1, gain));
            }
        }
    }
    best
}

fn mean_log_loss(raw: &[f64], y: &[u8]) -> f64 {
    raw.iter()
        .zip(y)
        .map(|(z, &t)| softplus(*z) - if t == 1 { *z } else { 0.0 })
        .sum::<f64>()
        / raw.len() as f64
}

impl HgbModel {
    pub fn fit(x: &Matrix, y: &[u8], p: &HgbParams) -> Self {
        let (n, d) = (x.rows(), x.cols());
        let mapper = BinMapper::fit(x, p.max_bins);
        let binned: Vec<Vec<u8>> = (0..d).map(|j| (0..n).map(|i| mapper.bin(j, x[(i, j)])).collect()).collect();
        let ybar = y.iter().filter(|&&v| v == 1).count() as f64 / n as f64;
        let baseline = (ybar / (1.0 - ybar)).ln();
        let mut raw = vec![baseline; n];
        let mut trees = Vec::with_capacity(p.max_iter);
        let mut train_loss = vec![mean_log_loss(&raw, y)];
        let roots: Vec<Vec<u32>> = binned
            .iter()
            .map(|col| {
                let mut o: Vec<u32> = (0..n as u32).map(|i| (u32::from(col[i as usize]) << ROW_BITS) | i).collect();
                o.sort_unstable();
                o
            })
            .collect();
        assert!(n <= ROW_MASK as usize, "row count exceeds the packed index range");
        let mut gh = vec![(0.0, 0.0); n];
        let mut work = roots.clone();
        for _ in 0..p.max_iter {
            for i in 0..n {
                let pr = sigmoid(raw[i]);
                gh[i] = (pr - y[i] as f64, pr * (1.0 - pr));
            }
            for (w, r) in work.iter_mut().zip(&roots) {
                w.copy_from_slice(r);
            }
            let (tree, leaves) = grow_tree(&binned, &mapper, &mut work, &gh, p);
            for (value, rows) in leaves {
                for e in rows {
                    raw[row_of(e)] += value;
                }
            }
            let single_leaf = tree.nodes.len() == 1;
            trees.push(tree);
            train_loss.push(mean_log_loss(&raw, y));
            if single_leaf {
                break;
            }
        }
        HgbModel { baseline, trees, train_loss }
    }

    pub fn raw(&self, q: &[f64]) -> f64 {
        self.baseline + self.trees.iter().map(|t| t.predict_row(q)).sum::<f64>()
    }

    pub fn proba_row(&self, q: &[f64]) -> f64 {
        sigmoid(self.raw(q))
    }
}

/// Grown tree plus (leaf value, packed rows) for every leaf. `orders` starts as the
/// root ordering and is permuted in place as nodes split.
fn grow_tree(binned: &[Vec<u8>], mapper: &BinMapper, orders: &mut [Vec<u32>], gh: &[(f64, f64)], p: &HgbParams) -> (HgbTree, Vec<(f64, Vec<u32>)>) {
    let leaf_value = |rows: &[u32]| {
        let (gs, hs): (f64, f64) = rows.iter().fold((0.0, 0.0), |(a, b), &e| (a + gh[row_of(e)].0, b + gh[row_of(e)].1));
        -p.learning_rate * gs / (hs + p.l2).max(1e-12)
    };
    let can_split = |depth: usize| p.max_depth.is_none_or(|m| depth < m);
    let n = gh.len();
    let mut nodes = vec![HgbNode::Leaf { value: leaf_value(&orders[0]) }];
    let mut open = vec![Candidate {
        node: 0,
        split: if can_split(0) { find_split(gh, orders, (0, n), p) } else { None },
        range: (0, n),
        depth: 0,
    }];
    let mut closed = Vec::new();
    let mut scratch: Vec<u32> = Vec::with_capacity(n);
    let mut leaves = 1;
    while leaves < p.max_leaf_nodes {
        // Highest gain first; earlier nodes win ties.
        let pick = open
            .iter()
            .enumerate()
            .filter_map(|(k, c)| c.split.map(|s| (k, s.2)))
            .fold(None, |acc: Option<(usize, f64)>, (k, gain)| match acc {
                Some((_, bg)) if bg >= gain => acc,
                _ => Some((k, gain)),
            });
        let Some((k, _)) = pick else { break };
        let cand = open.remove(k);
        let (feature, left_bins, _) = cand.split.unwrap();
        let (a, z) = cand.range;
        let col = &binned[feature];
        let mut mid = a;
        // Stable in-place partition of every ordering over the node's range.
        for order in orders.iter_mut() {
            scratch.clear();
            let mut w = a;
            for r in a..z {
                let e = order[r];
                if (col[row_of(e)] as usize) < left_bins {
                    order[w] = e;
                    w += 1;
                } else {
                    scratch.push(e);
                }
            }
            order[w..z].copy_from_slice(&scratch);
            mid = w;
        }
        let (li, ri) = (nodes.len(), nodes.len() + 1);
        nodes.push(HgbNode::Leaf { value: leaf_value(&orders[0][a..mid]) });
        nodes.push(HgbNode::Leaf { value: leaf_value(&orders[0][mid..z]) });
        nodes[cand.node] = HgbNode::Split {
            feature,
            threshold: mapper.edges[feature][left_bins - 1],
            left: li,
            right: ri,
        };
        leaves += 1;
        let depth = cand.depth + 1;
        for (node, range) in [(li, (a, mid)), (ri, (mid, z))] {
            let split = if can_split(depth) { find_split(gh, orders, range, p) } else { None };
            let c = Candidate { node, range, depth, split };
            if c.split.is_some() {
                open.push(c);
            } else {
                closed.push(c);
            }
        }
    }
    let mut leaf_rows: Vec<(usize, (usize, usize))> = open.into_iter().chain(closed).map(|c| (c.node, c.range)).collect();
    leaf_rows.sort_by_key(|(node, _)| *node);
    let leaf_rows = leaf_rows
        .into_iter()
        .map(|(node, (a, z))| match nodes[node] {
            HgbNode::Leaf { value } => (value, orders[0][a..z].to_vec()),
            HgbNode::Split { .. } => unreachable!("candidates are leaves"),
        })
        .collect();
    (HgbTree { nodes }, leaf_rows)
}
