//! Weighted CART with Gini impurity. Bootstrap multiplicities and boosting
//! weights both enter as sample weights.

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::params::{Hyperparams, Param, Reader};
use crate::error::Result;
use crate::linalg::Matrix;
use crate::seed::Rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Leaf { p: f64 },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    /// Features examined per node; `None` means all.
    pub max_features: Option<usize>,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: None,
            min_samples_split: 2,
            min_samples_leaf: 1,
            max_features: None,
        }
    }
}

impl TreeParams {
    pub fn from_hyper(h: &Hyperparams) -> Result<Self> {
        let mut crit = h.clone();
        let criterion = crit.remove("criterion");
        let mut r = Reader::new("decision_tree", &crit);
        let p = TreeParams {
            max_depth: r.opt_usize("max_depth", None)?,
            min_samples_split: r.usize("min_samples_split", 2)?,
            min_samples_leaf: r.usize("min_samples_leaf", 1)?,
            max_features: None,
        };
        let gini_ok = match &criterion {
            None => true,
            Some(Param::Text(c)) => c == "gini",
            Some(_) => false,
        };
        r.check(gini_ok, "criterion must be \"gini\"")?;
        r.check(p.max_depth != Some(0), "max_depth must be at least 1")?;
        r.check(p.min_samples_leaf >= 1, "min_samples_leaf must be at least 1")?;
        r.finish()?;
        Ok(p)
    }
}

/// Best split of a node: (feature, threshold, impurity decrease).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitChoice {
    pub feature: usize,
    pub threshold: f64,
    pub gain: f64,
}

const GAIN_EPS: f64 = 1e-12;

fn gini(w1: f64, w: f64) -> f64 {
    if w <= 0.0 {
        return 0.0;
    }
    let p = w1 / w;
    1.0 - p * p - (1.0 - p) * (1.0 - p)
}

/// Weighted Gini decrease for the best threshold over `features`, scanning
/// features in the given order and thresholds from low to high. Ties keep the
/// earliest candidate.
pub fn best_split(
    x: &Matrix,
    y: &[u8],
    w: &[f64],
    rows: &[usize],
    features: &[usize],
    min_leaf: usize,
) -> Option<SplitChoice> {
    let total_w: f64 = rows.iter().map(|&i| w[i]).sum();
    let total_w1: f64 = rows.iter().filter(|&&i| y[i] == 1).map(|&i| w[i]).sum();
    let parent = total_w * gini(total_w1, total_w);
    let mut best: Option<SplitChoice> = None;
    let mut order = rows.to_vec();
    for &f in features {
        order.sort_by(|&a, &b| x[(a, f)].total_cmp(&x[(b, f)]).then(a.cmp(&b)));
        let (mut wl, mut wl1) = (0.0, 0.0);
        for pos in 0..order.len() - 1 {
            let i = order[pos];
            wl += w[i];
            if y[i] == 1 {
                wl1 += w[i];
            }
            let (v, next) = (x[(i, f)], x[(order[pos + 1], f)]);
            if v == next || pos + 1 < min_leaf || order.len() - pos - 1 < min_leaf {
                continue;
            }
            let (wr, wr1) = (total_w - wl, total_w1 - wl1);
            let gain = parent - wl * gini(wl1, wl) - wr * gini(wr1, wr);
            if gain > GAIN_EPS && best.is_none_or(|b| gain > b.gain + GAIN_EPS) {
                best = Some(SplitChoice {
                    feature: f,
                    threshold: v + 0.5 * (next - v),
                    gain,
                });
            }
        }
    }
    best
}

impl Tree {
    pub fn fit(x: &Matrix, y: &[u8], w: &[f64], params: &TreeParams, rng: &mut Rng) -> Tree {
        let rows: Vec<usize> = (0..x.rows()).filter(|&i| w[i] > 0.0).collect();
        let mut tree = Tree { nodes: Vec::new() };
        tree.grow(x, y, w, rows, 0, params, rng);
        tree
    }

    fn grow(
        &mut self,
        x: &Matrix,
        y: &[u8],
        w: &[f64],
        rows: Vec<usize>,
        depth: usize,
        params: &TreeParams,
        rng: &mut Rng,
    ) -> usize {
        let id = self.nodes.len();
        let total: f64 = rows.iter().map(|&i| w[i]).sum();
        let pos: f64 = rows.iter().filter(|&&i| y[i] == 1).map(|&i| w[i]).sum();
        let p = if total > 0.0 { pos / total } else { 0.0 };
        self.nodes.push(Node::Leaf { p });
        let pure = pos <= 0.0 || pos >= total;
        let deep = params.max_depth.is_some_and(|d| depth >= d);
        if pure || deep || rows.len() < params.min_samples_split.max(2) {
            return id;
        }
        let d = x.cols();
        let features: Vec<usize> = match params.max_features {
            Some(m) if m < d => {
                let mut f = sample(rng, d, m.max(1)).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..d).collect(),
        };
        let Some(split) = best_split(x, y, w, &rows, &features, params.min_samples_leaf.max(1)) else {
            return id;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = rows
            .into_iter()
            .partition(|&i| x[(i, split.feature)] <= split.threshold);
        let left = self.grow(x, y, w, l, depth + 1, params, rng);
        let right = self.grow(x, y, w, r, depth + 1, params, rng);
        self.nodes[id] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        id
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut n = 0;
        loop {
            match self.nodes[n] {
                Node::Leaf { p } => return p,
                Node::Split { feature, threshold, left, right } => {
                    n = if row[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], n: usize) -> usize {
            match nodes[n] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    #[test]
    fn learns_threshold() {
        let x = Matrix::from_rows(&[vec![0.0], vec![1.0], vec![2.0], vec![3.0]]).unwrap();
        let y = [0, 0, 1, 1];
        let t = Tree::fit(&x, &y, &[1.0; 4], &TreeParams::default(), &mut seed::rng(0));
        assert_eq!(t.nodes.len(), 3);
        assert!(matches!(t.nodes[0], Node::Split { feature: 0, threshold, .. } if threshold == 1.5));
        assert_eq!(t.predict_row(&[0.2]), 0.0);
        assert_eq!(t.predict_row(&[2.7]), 1.0);
    }

    #[test]
    fn depth_limit_respected() {
        let rows: Vec<Vec<f64>> = (0..16).map(|i| vec![i as f64]).collect();
        let y: Vec<u8> = (0..16).map(|i| (i % 2) as u8).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let p = TreeParams { max_depth: Some(2), ..Default::default() };
        let t = Tree::fit(&x, &y, &vec![1.0; 16], &p, &mut seed::rng(0));
        assert!(t.depth() <= 2);
    }

    #[test]
    fn zero_weight_rows_ignored() {
        let x = Matrix::from_rows(&[vec![0.0], vec![1.0], vec![2.0]]).unwrap();
        let t = Tree::fit(&x, &[0, 1, 1], &[1.0, 0.0, 1.0], &TreeParams::default(), &mut seed::rng(0));
        assert!(matches!(t.nodes[0], Node::Split { threshold, .. } if threshold == 1.0));
    }
}
