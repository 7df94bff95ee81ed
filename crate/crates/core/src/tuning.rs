//! Exhaustive grid search with stratified k-fold cross-validation.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifiers::params::describe;
use crate::classifiers::{compare_hyperparams, fit, Family, FittedModel, Hyperparams, ModelSpec, Param};
use crate::error::{Error, Result};
use crate::metrics::{confusion, Metric};
use crate::preprocess::{stratified_kfold_rows, Design, SplitPlan};
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub family: Family,
    #[serde(default)]
    pub axes: BTreeMap<String, Vec<Param>>,
}

impl GridSpec {
    pub fn new(family: Family) -> Self {
        GridSpec {
            family,
            axes: BTreeMap::new(),
        }
    }

    pub fn axis(mut self, name: &str, values: Vec<Param>) -> Self {
        self.axes.insert(name.to_string(), values);
        self
    }

    pub fn n_cells(&self) -> usize {
        self.axes.values().map(Vec::len).product()
    }

    /// Cartesian product in axis-name order, listed value order within an axis.
    pub fn cells(&self) -> Vec<Hyperparams> {
        let mut out = vec![Hyperparams::new()];
        for (name, values) in &self.axes {
            out = out
                .into_iter()
                .flat_map(|base| {
                    values.iter().map(move |v| {
                        let mut h = base.clone();
                        h.insert(name.clone(), v.clone());
                        h
                    })
                })
                .collect();
        }
        out
    }

    pub fn validate(&self, n_features: usize) -> Result<()> {
        if self.n_cells() == 0 {
            return Err(Error::hyper(self.family, "grid has an empty axis"));
        }
        for cell in self.cells() {
            ModelSpec {
                family: self.family,
                hyperparams: cell,
                seed: 0,
            }
            .validate(n_features)?;
        }
        Ok(())
    }
}

fn floats(v: &[f64]) -> Vec<Param> {
    v.iter().map(|&x| Param::Float(x)).collect()
}

fn ints(v: &[i64]) -> Vec<Param> {
    v.iter().map(|&x| Param::Int(x)).collect()
}

/// Default search grid per family.
pub fn default_grid(family: Family) -> GridSpec {
    let g = GridSpec::new(family);
    match family {
        Family::Knn => g.axis("k", ints(&[3, 5, 9, 15])),
        Family::SvmRbf => g.axis("C", floats(&[0.1, 1.0, 10.0, 100.0])).axis(
            "gamma",
            vec![Param::Text("1/d".into()), Param::Float(0.01), Param::Float(0.1), Param::Float(1.0)],
        ),
        Family::Hgbc => g
            .axis("max_depth", vec![Param::Int(3), Param::Int(6), Param::Null])
            .axis("learning_rate", floats(&[0.05, 0.1, 0.3]))
            .axis("l2", floats(&[0.0, 1.0, 10.0]))
            .axis("max_bins", ints(&[255])),
        Family::MlpBfgs => g
            .axis("hidden_sizes", vec![Param::List(vec![16]), Param::List(vec![32]), Param::List(vec![64, 32])])
            .axis("l2", floats(&[1e-4, 1e-2])),
        Family::Adaboost => g.axis("n_estimators", ints(&[50, 200])),
        Family::RandomForest => g
            .axis("n_estimators", ints(&[100, 300]))
            .axis("max_features", vec![Param::Text("sqrt".into())]),
        Family::DecisionTree => g
            .axis("max_depth", vec![Param::Int(3), Param::Int(5), Param::Null])
            .axis("criterion", vec![Param::Text("gini".into())]),
        Family::LogisticRegression => g.axis("l2", floats(&[1e-3, 1e-1, 1.0])),
        Family::Qda => g.axis("reg", floats(&[0.0, 0.1])),
        Family::GpLaplace | Family::GaussianNb | Family::Stacking => g,
    }
}

pub fn default_grids() -> Vec<GridSpec> {
    Family::ALL.into_iter().map(default_grid).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuneConfig {
    pub k: usize,
    pub metric: Metric,
    pub seed: u64,
}

impl Default for TuneConfig {
    fn default() -> Self {
        TuneConfig {
            k: 5,
            metric: Metric::Mcc,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellScore {
    pub hyperparams: Hyperparams,
    pub fold_scores: Vec<f64>,
    pub fold_degenerate: Vec<bool>,
    /// Mean over folds; −∞ when no fold produced a defined score.
    pub mean: f64,
    pub flagged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable {
    pub family: Family,
    pub metric: Metric,
    pub cells: Vec<CellScore>,
}

impl ScoreTable {
    /// One row per cell per fold, then one `mean` row per cell.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["family", "cell", "hyperparams", "fold", "score", "degenerate"])?;
        for (c, cell) in self.cells.iter().enumerate() {
            let hp = describe(&cell.hyperparams);
            for (f, (s, d)) in cell.fold_scores.iter().zip(&cell.fold_degenerate).enumerate() {
                out.write_record([self.family.as_str(), &c.to_string(), &hp, &f.to_string(), &format!("{s}"), &d.to_string()])?;
            }
            out.write_record([self.family.as_str(), &c.to_string(), &hp, "mean", &format!("{}", cell.mean), &cell.flagged.to_string()])?;
        }
        out.flush().map_err(|e| Error::io("<score table>", e))?;
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct TuneResult {
    pub best: ModelSpec,
    pub cv_score: f64,
    pub table: ScoreTable,
    pub folds: Vec<SplitPlan>,
    /// Best cell refitted on all training rows.
    pub model: FittedModel,
}

fn score_fold(spec: &ModelSpec, design: &Design, fold: &SplitPlan, metric: Metric) -> Result<(f64, bool)> {
    let xtr = design.x.select_rows(&fold.train);
    let ytr: Vec<u8> = fold.train.iter().map(|&i| design.y[i]).collect();
    let m = fit(spec, &xtr, &ytr)?;
    let pred = m.predict(&design.x.select_rows(&fold.test))?;
    let yte: Vec<u8> = fold.test.iter().map(|&i| design.y[i]).collect();
    let v = metric.eval(&confusion(&yte, &pred)?);
    Ok((v.value, v.degenerate))
}

/// Index of the best cell: highest mean, ties to the lexicographically smaller assignment.
pub fn select_best(cells: &[CellScore]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, c) in cells.iter().enumerate() {
        best = match best {
            None => Some(i),
            Some(b) => {
                let cb = &cells[b];
                let better = c.mean > cb.mean
                    || (c.mean == cb.mean && compare_hyperparams(&c.hyperparams, &cb.hyperparams).is_lt());
                Some(if better { i } else { b })
            }
        };
    }
    best
}

pub fn grid_search(grid: &GridSpec, design: &Design, cfg: &TuneConfig) -> Result<TuneResult> {
    grid.validate(design.x.cols())?;
    let folds = stratified_kfold_rows(&design.y, &design.keys, cfg.k, seed::derive(cfg.seed, "cv-folds", 0))?;
    let model_seed = seed::derive(cfg.seed, "model", 0);
    let cells = grid.cells();
    let specs: Vec<ModelSpec> = cells
        .iter()
        .map(|h| ModelSpec {
            family: grid.family,
            hyperparams: h.clone(),
            seed: model_seed,
        })
        .collect();
    let jobs: Vec<(usize, usize)> = (0..specs.len()).flat_map(|c| (0..folds.len()).map(move |f| (c, f))).collect();
    let results: Vec<Result<(f64, bool)>> = jobs
        .par_iter()
        .map(|&(c, f)| score_fold(&specs[c], design, &folds[f], cfg.metric))
        .collect();
    let k = folds.len();
    let mut scored = Vec::with_capacity(specs.len());
    for (c, h) in cells.into_iter().enumerate() {
        let mut fold_scores = Vec::with_capacity(k);
        let mut fold_degenerate = Vec::with_capacity(k);
        let mut error = None;
        for r in &results[c * k..(c + 1) * k] {
            match r {
                Ok((v, d)) => {
                    fold_scores.push(*v);
                    fold_degenerate.push(*d);
                }
                Err(e) => {
                    error.get_or_insert_with(|| e.to_string());
                    fold_scores.push(f64::NEG_INFINITY);
                    fold_degenerate.push(true);
                }
            }
        }
        let flagged = error.is_some() || fold_degenerate.iter().all(|&d| d);
        let mean = if flagged { f64::NEG_INFINITY } else { fold_scores.iter().sum::<f64>() / k as f64 };
        scored.push(CellScore {
            hyperparams: h,
            fold_scores,
            fold_degenerate,
            mean,
            flagged,
            error,
        });
    }
    let b = select_best(&scored).expect("grid has at least one cell");
    let best = specs[b].clone();
    let model = fit(&best, &design.x, &design.y)?;
    Ok(TuneResult {
        best,
        cv_score: scored[b].mean,
        table: ScoreTable {
            family: grid.family,
            metric: cfg.metric,
            cells: scored,
        },
        folds,
        model,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Planting, RowKey};
    use crate::linalg::Matrix;
    use rand_distr::{Distribution, Normal};

    fn clustered(n: usize, seed_value: u64) -> Design {
        let mut rng = seed::rng(seed_value);
        let noise = Normal::new(0.0, 0.15).unwrap();
        let mut rows = Vec::new();
        let mut y = Vec::new();
        // Six tight clusters with alternating labels: local structure wins.
        for i in 0..n {
            let c = i % 6;
            rows.push(vec![c as f64 + noise.sample(&mut rng), noise.sample(&mut rng)]);
            y.push(u8::from(c % 2 == 1));
        }
        let keys = (0..n)
            .map(|i| RowKey {
                year: 2000 + (i % 7) as i32,
                region: "HER".into(),
                planting: Planting::Early,
                clone_id: format!("C{i}"),
            })
            .collect();
        Design {
            x: Matrix::from_rows(&rows).unwrap(),
            names: vec!["a".into(), "b".into()],
            groups: Vec::new(),
            y,
            keys,
        }
    }

    #[test]
    fn grid_cells_in_lexicographic_product_order() {
        let cells = default_grid(Family::SvmRbf).cells();
        assert_eq!(cells.len(), 16);
        assert_eq!(cells[0]["C"], Param::Float(0.1));
        assert_eq!(cells[1]["gamma"], Param::Float(0.01));
        assert_eq!(default_grid(Family::Hgbc).n_cells(), 27);
        for g in default_grids() {
            g.validate(10).unwrap();
        }
    }

    #[test]
    fn single_cell_grid() {
        let d = clustered(120, 1);
        let r = grid_search(&GridSpec::new(Family::Knn).axis("k", ints(&[3])), &d, &TuneConfig::default()).unwrap();
        assert_eq!(r.table.cells.len(), 1);
        assert_eq!(r.cv_score, r.table.cells[0].mean);
        assert_eq!(r.best.hyperparams["k"], Param::Int(3));
    }

    #[test]
    fn dominant_cell_wins_and_table_is_consistent() {
        let d = clustered(120, 2);
        let g = GridSpec::new(Family::Knn).axis("k", ints(&[101, 1]));
        let r = grid_search(&g, &d, &TuneConfig::default()).unwrap();
        assert_eq!(r.best.hyperparams["k"], Param::Int(1));
        for c in &r.table.cells {
            assert_eq!(c.fold_scores.len(), 5);
            if !c.flagged {
                let m = c.fold_scores.iter().sum::<f64>() / 5.0;
                assert!((m - c.mean).abs() < 1e-12);
            }
            assert!(r.cv_score >= c.mean);
        }
        let again = grid_search(&g, &d, &TuneConfig::default()).unwrap();
        assert_eq!(again.table, r.table);
    }

    #[test]
    fn degenerate_cells_are_flagged_and_ties_go_lexicographic() {
        let mk = |k: i64, mean: f64, flagged: bool| CellScore {
            hyperparams: [("k".to_string(), Param::Int(k))].into(),
            fold_scores: vec![],
            fold_degenerate: vec![],
            mean,
            flagged,
            error: None,
        };
        let cells = vec![mk(9, 0.5, false), mk(3, 0.5, false), mk(1, f64::NEG_INFINITY, true)];
        assert_eq!(select_best(&cells), Some(1));
        let all_flagged = vec![mk(9, f64::NEG_INFINITY, true), mk(3, f64::NEG_INFINITY, true)];
        assert_eq!(select_best(&all_flagged), Some(1));
    }

    #[test]
    fn csv_has_fold_and_mean_rows() {
        let d = clustered(60, 3);
        let r = grid_search(&GridSpec::new(Family::Knn).axis("k", ints(&[1, 3])), &d, &TuneConfig::default()).unwrap();
        let mut buf = Vec::new();
        r.table.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 2 * 6);
        assert_eq!(text.lines().filter(|l| l.contains(",mean,")).count(), 2);
    }
}
