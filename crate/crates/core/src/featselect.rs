//! Greedy forward selection over feature groups, scored by stratified k-fold CV.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifiers::{fit, ModelSpec};
use crate::error::{Error, Result};
use crate::metrics::{confusion, Metric};
use crate::preprocess::{stratified_kfold_rows, Design, SplitPlan};
use crate::seed;

pub const FRACTIONS: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 0.9];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    FractionReached,
    NoImprovement,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectConfig {
    pub k: usize,
    pub metric: Metric,
    pub min_gain: f64,
    pub seed: u64,
}

impl Default for SelectConfig {
    fn default() -> Self {
        SelectConfig {
            k: 5,
            metric: Metric::Mcc,
            min_gain: 1e-4,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionTrace {
    /// Feature group names in selection order.
    pub selected: Vec<String>,
    /// Indices into `Design::groups`, parallel to `selected`.
    pub groups: Vec<usize>,
    /// Mean CV score after each addition.
    pub scores: Vec<f64>,
    pub stop: StopReason,
}

impl SelectionTrace {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["step", "feature", "cv_score"])?;
        for (i, (f, s)) in self.selected.iter().zip(&self.scores).enumerate() {
            out.write_record([&(i + 1).to_string(), f, &format!("{s}")])?;
        }
        out.flush().map_err(|e| Error::io("<selection trace>", e))?;
        Ok(())
    }

    /// The first `n` selections; the stop reason becomes `fraction_reached`
    /// when the trace is long enough.
    pub fn truncate(&self, n: usize) -> SelectionTrace {
        let m = n.min(self.selected.len());
        SelectionTrace {
            selected: self.selected[..m].to_vec(),
            groups: self.groups[..m].to_vec(),
            scores: self.scores[..m].to_vec(),
            stop: if m == n { StopReason::FractionReached } else { self.stop },
        }
    }
}

/// Group budget for a fraction: ceil(fraction · groups).
pub fn budget(fraction: f64, n_groups: usize) -> Result<usize> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Domain(format!("fraction must lie in (0, 1], got {fraction}")));
    }
    let n = (fraction * n_groups as f64 - 1e-9).ceil() as usize;
    if n == 0 {
        return Err(Error::Domain(format!("fraction {fraction} of {n_groups} groups selects nothing")));
    }
    Ok(n)
}

pub fn selection_folds(design: &Design, cfg: &SelectConfig) -> Result<Vec<SplitPlan>> {
    stratified_kfold_rows(&design.y, &design.keys, cfg.k, seed::derive(cfg.seed, "select-folds", 0))
}

/// Mean CV score of the model restricted to the given groups.
pub fn evaluate_subset(spec: &ModelSpec, design: &Design, groups: &[usize], folds: &[SplitPlan], metric: Metric) -> Result<f64> {
    let cols = design.group_columns(groups);
    let x = design.x.select_cols(&cols);
    let scores: Vec<Result<f64>> = folds
        .par_iter()
        .map(|f| {
            let ytr: Vec<u8> = f.train.iter().map(|&i| design.y[i]).collect();
            let m = fit(spec, &x.select_rows(&f.train), &ytr)?;
            let pred = m.predict(&x.select_rows(&f.test))?;
            let yte: Vec<u8> = f.test.iter().map(|&i| design.y[i]).collect();
            Ok(metric.eval(&confusion(&yte, &pred)?).value)
        })
        .collect();
    let mut total = 0.0;
    for s in scores {
        total += s?;
    }
    Ok(total / folds.len() as f64)
}

/// Greedy ordering of at most `max_groups` groups; each step appends the
/// candidate with the highest CV score, ties to the lower group index.
pub fn greedy_order(spec: &ModelSpec, design: &Design, max_groups: usize, cfg: &SelectConfig) -> Result<SelectionTrace> {
    let folds = selection_folds(design, cfg)?;
    let n_groups = design.groups.len();
    let mut chosen: Vec<usize> = Vec::new();
    let mut scores = Vec::new();
    let mut current = 0.0;
    let limit = max_groups.min(n_groups);
    while chosen.len() < limit {
        let candidates: Vec<usize> = (0..n_groups).filter(|g| !chosen.contains(g)).collect();
        let results: Vec<Result<f64>> = candidates
            .par_iter()
            .map(|&g| {
                let mut set = chosen.clone();
                set.push(g);
                evaluate_subset(spec, design, &set, &folds, cfg.metric)
            })
            .collect();
        let mut best: Option<(usize, f64)> = None;
        for (&g, r) in candidates.iter().zip(results) {
            let s = r.map_err(|e| e.context(format!("forward selection step {} with '{}'", chosen.len() + 1, design.groups[g].name)))?;
            if best.is_none_or(|(_, bs)| s > bs) {
                best = Some((g, s));
            }
        }
        let (g, s) = best.expect("at least one candidate remains");
        if s - current < cfg.min_gain {
            return Ok(trace(design, chosen, scores, StopReason::NoImprovement));
        }
        chosen.push(g);
        scores.push(s);
        current = s;
    }
    let stop = if chosen.len() == max_groups { StopReason::FractionReached } else { StopReason::NoImprovement };
    Ok(trace(design, chosen, scores, stop))
}

fn trace(design: &Design, groups: Vec<usize>, scores: Vec<f64>, stop: StopReason) -> SelectionTrace {
    SelectionTrace {
        selected: groups.iter().map(|&g| design.groups[g].name.clone()).collect(),
        groups,
        scores,
        stop,
    }
}

pub fn forward_select(spec: &ModelSpec, design: &Design, fraction: f64, cfg: &SelectConfig) -> Result<SelectionTrace> {
    greedy_order(spec, design, budget(fraction, design.groups.len())?, cfg)
}

/// Traces for every fraction from a single greedy ordering.
pub fn forward_select_fractions(spec: &ModelSpec, design: &Design, fractions: &[f64], cfg: &SelectConfig) -> Result<Vec<(f64, SelectionTrace)>> {
    let n = design.groups.len();
    let budgets = fractions.iter().map(|&f| budget(f, n)).collect::<Result<Vec<_>>>()?;
    let full = greedy_order(spec, design, budgets.iter().copied().max().unwrap_or(0), cfg)?;
    Ok(fractions.iter().zip(budgets).map(|(&f, b)| (f, full.truncate(b))).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifiers::Family;
    use crate::data::{Planting, RowKey};
    use crate::linalg::Matrix;
    use crate::preprocess::FeatureGroup;
    use rand::Rng as _;

    fn fixture(n: usize, d: usize, planted: Option<usize>, seed_value: u64) -> Design {
        let mut rng = seed::rng(seed_value);
        let y: Vec<u8> = (0..n).map(|i| u8::from(i % 4 == 0)).collect();
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                (0..d)
                    .map(|j| if Some(j) == planted { y[i] as f64 } else { rng.random_range(-1.0..1.0) })
                    .collect()
            })
            .collect();
        Design {
            x: Matrix::from_rows(&rows).unwrap(),
            names: (0..d).map(|j| format!("f{j}")).collect(),
            groups: (0..d).map(|j| FeatureGroup { name: format!("f{j}"), columns: vec![j] }).collect(),
            y,
            keys: (0..n)
                .map(|i| RowKey { year: 2010, region: "KF".into(), planting: Planting::Late, clone_id: format!("K{i}") })
                .collect(),
        }
    }

    #[test]
    fn planted_feature_first_with_perfect_score() {
        let d = fixture(80, 10, Some(6), 1);
        let spec = ModelSpec::new(Family::DecisionTree);
        let t = forward_select(&spec, &d, 0.3, &SelectConfig::default()).unwrap();
        assert_eq!(t.selected[0], "f6");
        assert_eq!(t.scores[0], 1.0);
        assert_eq!(t.scores.len(), t.selected.len());
    }

    #[test]
    fn fractions_share_one_ordering_and_scores_reproduce() {
        let d = fixture(60, 10, None, 2);
        let spec = ModelSpec::new(Family::Knn).with("k", 1i64);
        let cfg = SelectConfig { min_gain: f64::NEG_INFINITY, ..Default::default() };
        let all = forward_select_fractions(&spec, &d, &FRACTIONS, &cfg).unwrap();
        let lens: Vec<usize> = all.iter().map(|(_, t)| t.selected.len()).collect();
        assert_eq!(lens, vec![1, 3, 5, 7, 9]);
        for w in all.windows(2) {
            assert_eq!(&w[1].1.selected[..w[0].1.selected.len()], &w[0].1.selected[..]);
        }
        let direct = forward_select(&spec, &d, 0.3, &cfg).unwrap();
        assert_eq!(direct, all[1].1);
        let folds = selection_folds(&d, &cfg).unwrap();
        let t = &all[4].1;
        for s in 0..t.groups.len() {
            let again = evaluate_subset(&spec, &d, &t.groups[..=s], &folds, cfg.metric).unwrap();
            assert!((again - t.scores[s]).abs() <= 1e-12);
        }
    }

    #[test]
    fn budget_rounds_up() {
        assert_eq!(budget(0.1, 41).unwrap(), 5);
        assert_eq!(budget(0.5, 10).unwrap(), 5);
        assert!(budget(0.0, 10).is_err());
    }
}
