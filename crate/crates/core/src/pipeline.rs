//! End-to-end preparation of model inputs and per-family evaluation, shared by
//! the benchmark, selection and simulation drivers.

use serde::{Deserialize, Serialize};

use std::io::Write;

use crate::classifiers::{fit, FittedModel, ModelSpec};
use crate::data::{ColumnKind, Dataset};
use crate::error::Result;
use crate::impute::{mice_with_metadata, MiceConfig, MiceMetadata};
use crate::metrics::{evaluate, BootstrapConfig, EvalReport};
use crate::preprocess::{drop_high_na_columns, stratified_split, Design, OneHotEncoder, SplitPlan, Standardizer, DEFAULT_MAX_NA};
use crate::seed;
use crate::tuning::{grid_search, GridSpec, ScoreTable, TuneConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    /// MICE fills the holes left after column dropping.
    Imputed,
    /// Rows with any missing cell are dropped instead.
    NotImputed,
}

impl Arm {
    pub fn as_str(self) -> &'static str {
        match self {
            Arm::Imputed => "imputed",
            Arm::NotImputed => "not_imputed",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub na_threshold: usize,
    pub train_frac: f64,
    pub mice_iterations: usize,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            na_threshold: DEFAULT_MAX_NA,
            train_frac: 0.8,
            mice_iterations: 10,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PreparedArm {
    pub arm: Arm,
    pub train: Design,
    pub test: Design,
    /// Rows of the input dataset that entered the split, in order.
    pub rows: Vec<usize>,
    pub split: SplitPlan,
    /// Split datasets after imputation, before scaling and encoding.
    pub train_data: Dataset,
    pub test_data: Dataset,
    pub dropped_columns: Vec<String>,
    pub mice: Option<MiceMetadata>,
    pub standardizer: Standardizer,
    pub encoder: OneHotEncoder,
}

/// Drop high-NA columns, then either impute (fitted on the training split) or
/// keep complete rows; standardize and encode with train-fitted transforms.
pub fn prepare_arm(ds: &Dataset, arm: Arm, cfg: &PipelineConfig) -> Result<PreparedArm> {
    ds.require_labels()?;
    let kept = drop_high_na_columns(ds, cfg.na_threshold);
    let dropped_columns: Vec<String> = ds
        .specs()
        .iter()
        .filter(|s| kept.column_index(&s.name).is_none())
        .map(|s| s.name.clone())
        .collect();
    let usable = |i: usize, j: usize| kept.get(i, j).is_some() || (arm == Arm::Imputed && kept.spec(j).kind != ColumnKind::Categorical);
    let rows: Vec<usize> = (0..kept.n_rows()).filter(|&i| (0..kept.n_cols()).all(|j| usable(i, j))).collect();
    let data = kept.select_rows(&rows);
    let split = stratified_split(&data, cfg.train_frac, seed::derive(cfg.seed, "split", 0))
        .map_err(|e| e.context(format!("{} arm with {} usable rows", arm.as_str(), rows.len())))?;
    let (mut train, mut test) = (data.select_rows(&split.train), data.select_rows(&split.test));
    let mut mice = None;
    if arm == Arm::Imputed {
        let mcfg = MiceConfig {
            n_iterations: cfg.mice_iterations,
            seed: seed::derive(cfg.seed, "mice", 0),
            ..Default::default()
        };
        let out = mice_with_metadata(&train, &test, &mcfg)?;
        train = out.train;
        test = out.apply;
        mice = Some(out.metadata);
    }
    let standardizer = Standardizer::fit(&train);
    let encoder = OneHotEncoder::fit(&train);
    let encode = |d: &Dataset| -> Result<Design> { Design::from_dataset(&encoder.apply(&standardizer.apply(d)?)?) };
    Ok(PreparedArm {
        arm,
        train: encode(&train)?,
        test: encode(&test)?,
        rows,
        split,
        train_data: train,
        test_data: test,
        dropped_columns,
        mice,
        standardizer,
        encoder,
    })
}

#[derive(Clone, Debug)]
pub struct FamilyOutcome {
    pub best: ModelSpec,
    pub cv_score: f64,
    pub table: ScoreTable,
    pub model: FittedModel,
    pub test_pred: Vec<u8>,
    pub test_scores: Vec<f64>,
    pub report: EvalReport,
}

/// Tune on the training design, refit, and evaluate once on the test design.
pub fn tune_and_evaluate(grid: &GridSpec, prepared: &PreparedArm, tune: &TuneConfig, boot: BootstrapConfig) -> Result<FamilyOutcome> {
    let r = grid_search(grid, &prepared.train, tune).map_err(|e| e.context(format!("tuning {}", grid.family)))?;
    let test_pred = r.model.predict(&prepared.test.x)?;
    let test_scores = r.model.score(&prepared.test.x)?;
    let report = evaluate(
        &prepared.test.y,
        &test_pred,
        &test_scores,
        boot,
        seed::derive(tune.seed, &format!("bootstrap:{}", grid.family), 0),
    )?;
    Ok(FamilyOutcome {
        best: r.best,
        cv_score: r.cv_score,
        table: r.table,
        model: r.model,
        test_pred,
        test_scores,
        report,
    })
}

/// Refit `spec` on the chosen feature groups of the training design and evaluate on the test design.
pub fn evaluate_groups(spec: &ModelSpec, prepared: &PreparedArm, groups: &[usize], boot: BootstrapConfig, seed_value: u64) -> Result<EvalReport> {
    let cols = prepared.train.group_columns(groups);
    let model = fit(spec, &prepared.train.x.select_cols(&cols), &prepared.train.y)?;
    let xt = prepared.test.x.select_cols(&cols);
    let pred = model.predict(&xt)?;
    let scores = model.score(&xt)?;
    evaluate(&prepared.test.y, &pred, &scores, boot, seed_value)
}

/// Model inputs as CSV: row keys, one column per design column, then the label.
pub fn write_design<W: Write>(d: &Design, w: W, label: &str) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["Year".to_string(), "Trial Region".into(), "Planting".into(), "Clone".into()];
    header.extend(d.names.iter().cloned());
    header.push(label.to_string());
    out.write_record(&header)?;
    for i in 0..d.n_rows() {
        let k = &d.keys[i];
        let mut rec = vec![k.year.to_string(), k.region.clone(), k.planting.to_string(), k.clone_id.clone()];
        rec.extend(d.x.row(i).iter().map(|v| format!("{v}")));
        rec.push(d.y[i].to_string());
        out.write_record(&rec)?;
    }
    out.flush().map_err(|e| crate::error::Error::io("<design>", e))?;
    Ok(())
}

/// Rows usable by the complete-case arm after column dropping.
pub fn complete_case_rows(ds: &Dataset, na_threshold: usize) -> usize {
    drop_high_na_columns(ds, na_threshold).complete_rows().len()
}
