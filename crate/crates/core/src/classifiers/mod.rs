//! Twelve binary classifiers behind one fit / score / predict interface.

pub mod adaboost;
pub mod bfgs;
pub mod forest;
pub mod gp;
pub mod hgb;
pub mod knn;
pub mod logistic;
pub mod mlp;
pub mod naive_bayes;
pub mod params;
pub mod qda;
pub mod stacking;
pub mod svm;
pub mod tree;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub use bfgs::{bfgs_minimize, BfgsOptions, BfgsResult, Memory};
pub use gp::laplace_mode;
pub use hgb::hgb_best_split;
pub use params::{compare_hyperparams, Hyperparams, Param};
pub use svm::{kkt_violation, smo_solve};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Knn,
    GpLaplace,
    GaussianNb,
    Qda,
    DecisionTree,
    Adaboost,
    RandomForest,
    MlpBfgs,
    Hgbc,
    SvmRbf,
    Stacking,
    LogisticRegression,
}

impl Family {
    pub const ALL: [Family; 12] = [
        Family::Knn,
        Family::GpLaplace,
        Family::GaussianNb,
        Family::Qda,
        Family::DecisionTree,
        Family::Adaboost,
        Family::RandomForest,
        Family::MlpBfgs,
        Family::Hgbc,
        Family::SvmRbf,
        Family::Stacking,
        Family::LogisticRegression,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::Knn => "knn",
            Family::GpLaplace => "gp_laplace",
            Family::GaussianNb => "gaussian_nb",
            Family::Qda => "qda",
            Family::DecisionTree => "decision_tree",
            Family::Adaboost => "adaboost",
            Family::RandomForest => "random_forest",
            Family::MlpBfgs => "mlp_bfgs",
            Family::Hgbc => "hgbc",
            Family::SvmRbf => "svm_rbf",
            Family::Stacking => "stacking",
            Family::LogisticRegression => "logistic_regression",
        }
    }

    /// Human-readable label used in report tables.
    pub fn label(self) -> &'static str {
        match self {
            Family::Knn => "k-Nearest Neighbors",
            Family::GpLaplace => "Gaussian Process",
            Family::GaussianNb => "Naive Bayes",
            Family::Qda => "QDA",
            Family::DecisionTree => "Decision Tree",
            Family::Adaboost => "AdaBoost",
            Family::RandomForest => "Random Forest",
            Family::MlpBfgs => "Neural Net",
            Family::Hgbc => "HGBC",
            Family::SvmRbf => "SVM",
            Family::Stacking => "Stacking",
            Family::LogisticRegression => "Logistic Regression",
        }
    }

    pub fn score_kind(self, hyperparams: &Hyperparams) -> ScoreKind {
        match self {
            Family::SvmRbf if hyperparams.get("probability") != Some(&Param::Bool(true)) => ScoreKind::Margin,
            _ => ScoreKind::Probability,
        }
    }

    /// Families whose exact decision ties resolve to class 0.
    fn ties_to_lower(self) -> bool {
        matches!(self, Family::Knn | Family::Qda)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| Error::hyper(s, "unknown model family"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreKind {
    /// Class-1 probability; predict 1 when score ≥ 0.5.
    Probability,
    /// Signed decision value; predict 1 when score ≥ 0.
    Margin,
}

impl ScoreKind {
    pub fn default_threshold(self) -> f64 {
        match self {
            ScoreKind::Probability => 0.5,
            ScoreKind::Margin => 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: Family,
    #[serde(default)]
    pub hyperparams: Hyperparams,
    #[serde(default)]
    pub seed: u64,
}

/// Hyperparameters after per-family validation.
#[derive(Clone, Debug, PartialEq)]
pub enum FamilyParams {
    Knn(knn::KnnParams),
    GpLaplace(gp::GpParams),
    GaussianNb,
    Qda(qda::QdaParams),
    DecisionTree(tree::TreeParams),
    Adaboost(adaboost::AdaBoostParams),
    RandomForest(forest::ForestParams),
    MlpBfgs(mlp::MlpParams),
    Hgbc(hgb::HgbParams),
    SvmRbf(svm::SvmParams),
    Stacking(stacking::StackingParams),
    LogisticRegression(logistic::LogisticParams),
}

impl ModelSpec {
    pub fn new(family: Family) -> Self {
        ModelSpec {
            family,
            hyperparams: Hyperparams::new(),
            seed: 0,
        }
    }

    pub fn with(mut self, key: &str, value: impl Into<Param>) -> Self {
        self.hyperparams.insert(key.to_string(), value.into());
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self, n_features: usize) -> Result<FamilyParams> {
        let h = &self.hyperparams;
        Ok(match self.family {
            Family::Knn => FamilyParams::Knn(knn::KnnParams::from_hyper(h)?),
            Family::GpLaplace => FamilyParams::GpLaplace(gp::GpParams::from_hyper(h, n_features)?),
            Family::GaussianNb => {
                naive_bayes::validate(h)?;
                FamilyParams::GaussianNb
            }
            Family::Qda => FamilyParams::Qda(qda::QdaParams::from_hyper(h)?),
            Family::DecisionTree => FamilyParams::DecisionTree(tree::TreeParams::from_hyper(h)?),
            Family::Adaboost => FamilyParams::Adaboost(adaboost::AdaBoostParams::from_hyper(h)?),
            Family::RandomForest => FamilyParams::RandomForest(forest::ForestParams::from_hyper(h, n_features)?),
            Family::MlpBfgs => FamilyParams::MlpBfgs(mlp::MlpParams::from_hyper(h)?),
            Family::Hgbc => FamilyParams::Hgbc(hgb::HgbParams::from_hyper(h)?),
            Family::SvmRbf => FamilyParams::SvmRbf(svm::SvmParams::from_hyper(h, n_features)?),
            Family::Stacking => FamilyParams::Stacking(stacking::StackingParams::from_hyper(h, n_features)?),
            Family::LogisticRegression => {
                FamilyParams::LogisticRegression(logistic::LogisticParams::from_hyper(h)?)
            }
        })
    }
}

/// Learned parameters, one variant per family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum Model {
    /// Fallback when the training labels are all one class.
    Constant { p: f64 },
    Knn(knn::KnnModel),
    GpLaplace(gp::GpModel),
    GaussianNb(naive_bayes::NaiveBayesModel),
    Qda(qda::QdaModel),
    DecisionTree(tree::Tree),
    Adaboost(adaboost::AdaBoostModel),
    RandomForest(forest::ForestModel),
    MlpBfgs(mlp::MlpModel),
    Hgbc(hgb::HgbModel),
    SvmRbf(svm::SvmModel),
    Stacking(stacking::StackingModel),
    LogisticRegression(logistic::LogisticModel),
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub version: u32,
    pub spec: ModelSpec,
    pub n_features: usize,
    pub score_kind: ScoreKind,
    pub model: Model,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

fn check_input(x: &Matrix, y: Option<&[u8]>) -> Result<()> {
    if let Some(y) = y {
        if y.len() != x.rows() {
            return Err(Error::Shape(format!("{} labels for {} rows", y.len(), x.rows())));
        }
        if y.iter().any(|&v| v > 1) {
            return Err(Error::Domain("labels must be 0 or 1".into()));
        }
    }
    if x.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("feature matrix contains missing or non-finite values".into()));
    }
    Ok(())
}

pub fn fit(spec: &ModelSpec, x: &Matrix, y: &[u8]) -> Result<FittedModel> {
    check_input(x, Some(y))?;
    if x.rows() == 0 {
        return Err(Error::Shape("cannot fit on zero rows".into()));
    }
    let params = spec.validate(x.cols())?;
    let positives = y.iter().filter(|&&v| v == 1).count();
    let mut warnings = Vec::new();
    let score_kind = spec.family.score_kind(&spec.hyperparams);
    let model = if positives == 0 || positives == y.len() {
        let p = if positives == 0 { 0.0 } else { 1.0 };
        warnings.push(format!("training labels are all {p}; fitted a constant predictor"));
        Model::Constant { p }
    } else {
        fit_family(params, x, y, spec.seed)?
    };
    let score_kind = if matches!(model, Model::Constant { .. }) { ScoreKind::Probability } else { score_kind };
    Ok(FittedModel {
        version: MODEL_FORMAT_VERSION,
        spec: spec.clone(),
        n_features: x.cols(),
        score_kind,
        model,
        warnings,
    })
}

fn fit_family(params: FamilyParams, x: &Matrix, y: &[u8], seed: u64) -> Result<Model> {
    Ok(match params {
        FamilyParams::Knn(p) => Model::Knn(knn::KnnModel::fit(x, y, &p)),
        FamilyParams::GpLaplace(p) => Model::GpLaplace(gp::GpModel::fit(x, y, &p)?),
        FamilyParams::GaussianNb => Model::GaussianNb(naive_bayes::NaiveBayesModel::fit(x, y)),
        FamilyParams::Qda(p) => Model::Qda(qda::QdaModel::fit(x, y, &p)?),
        FamilyParams::DecisionTree(p) => {
            let w = vec![1.0; x.rows()];
            Model::DecisionTree(tree::Tree::fit(x, y, &w, &p, &mut crate::seed::rng(seed)))
        }
        FamilyParams::Adaboost(p) => Model::Adaboost(adaboost::AdaBoostModel::fit(x, y, &p)),
        FamilyParams::RandomForest(p) => Model::RandomForest(forest::ForestModel::fit(x, y, &p, seed)),
        FamilyParams::MlpBfgs(p) => Model::MlpBfgs(mlp::MlpModel::fit(x, y, &p, seed)?),
        FamilyParams::Hgbc(p) => Model::Hgbc(hgb::HgbModel::fit(x, y, &p)),
        FamilyParams::SvmRbf(p) => Model::SvmRbf(svm::SvmModel::fit(x, y, &p)?),
        FamilyParams::Stacking(p) => Model::Stacking(stacking::StackingModel::fit(x, y, &p, seed)?),
        FamilyParams::LogisticRegression(p) => Model::LogisticRegression(logistic::LogisticModel::fit(x, y, &p)?),
    })
}

impl FittedModel {
    pub fn family(&self) -> Family {
        self.spec.family
    }

    fn check_dims(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.n_features {
            return Err(Error::Shape(format!(
                "model expects {} features, got {}",
                self.n_features,
                x.cols()
            )));
        }
        check_input(x, None)
    }

    fn proba_row(&self, q: &[f64]) -> [f64; 2] {
        let p1 = match &self.model {
            Model::Constant { p } => *p,
            Model::Knn(m) => m.score_row(q),
            Model::GpLaplace(m) => return m.proba_row(q),
            Model::GaussianNb(m) => return m.proba_row(q),
            Model::Qda(m) => return m.proba_row(q),
            Model::DecisionTree(t) => t.predict_row(q),
            Model::Adaboost(m) => m.score_row(q),
            Model::RandomForest(m) => m.score_row(q),
            Model::MlpBfgs(m) => m.proba_row(q),
            Model::Hgbc(m) => m.proba_row(q),
            Model::SvmRbf(m) => m.proba(q).unwrap_or_else(|| logistic::sigmoid(m.margin(q))),
            Model::Stacking(m) => m.proba_row(q),
            Model::LogisticRegression(m) => m.proba_row(q),
        };
        [1.0 - p1, p1]
    }

    fn score_row(&self, q: &[f64]) -> f64 {
        match (&self.model, self.score_kind) {
            (Model::SvmRbf(m), ScoreKind::Margin) => m.margin(q),
            _ => self.proba_row(q)[1],
        }
    }

    /// Class-1 probability for probability families, signed margin otherwise.
    pub fn score(&self, x: &Matrix) -> Result<Vec<f64>> {
        self.check_dims(x)?;
        Ok((0..x.rows()).into_par_iter().map(|i| self.score_row(x.row(i))).collect())
    }

    /// Per-row (P(class 0), P(class 1)). Margin-only SVMs pass the margin through a
    /// plain logistic, which preserves ranking but is not calibrated.
    pub fn probabilities(&self, x: &Matrix) -> Result<Vec<[f64; 2]>> {
        self.check_dims(x)?;
        Ok((0..x.rows()).into_par_iter().map(|i| self.proba_row(x.row(i))).collect())
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<u8>> {
        self.predict_at(x, self.score_kind.default_threshold())
    }

    /// Hard labels at a custom threshold on the score scale.
    pub fn predict_at(&self, x: &Matrix, threshold: f64) -> Result<Vec<u8>> {
        let s = self.score(x)?;
        Ok(self.decide(&s, threshold))
    }

    pub fn decide(&self, scores: &[f64], threshold: f64) -> Vec<u8> {
        let strict = self.family().ties_to_lower() && !matches!(self.model, Model::Constant { .. });
        scores
            .iter()
            .map(|&v| u8::from(if strict { v > threshold } else { v >= threshold }))
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: FittedModel = serde_json::from_str(s)?;
        if m.version != MODEL_FORMAT_VERSION {
            return Err(Error::Consistency(format!(
                "model format version {} is not supported (expected {MODEL_FORMAT_VERSION})",
                m.version
            )));
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests;
