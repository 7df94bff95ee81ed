//! Run configuration, result tables and confusion-matrix rendering.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classifiers::Family;
use crate::data::GddFormula;
use crate::error::{Error, Result};
use crate::featselect::FRACTIONS;
use crate::metrics::{BootstrapConfig, ConfusionCounts, EvalReport};
use crate::pipeline::Arm;
use crate::preprocess::DEFAULT_MAX_NA;
use crate::simstudy::{ScenarioSpec, SCENARIOS};
use crate::tuning::{default_grids, GridSpec};

pub const DEFAULT_REFERENCE_ROWS: usize = 885;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationConfig {
    pub scenarios: Vec<ScenarioSpec>,
    pub families: Vec<Family>,
    pub max_attempts: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            scenarios: SCENARIOS.iter().map(|n| ScenarioSpec::named(n).expect("built-in scenario")).collect(),
            families: vec![Family::MlpBfgs, Family::Hgbc, Family::SvmRbf, Family::LogisticRegression],
            max_attempts: 20,
        }
    }
}

/// Everything that determines a run. Every command writes the resolved value next
/// to its outputs, and re-running from that file reproduces them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Trial table; the synthetic reference is used when absent.
    pub data: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    pub weather: Option<PathBuf>,
    pub history: Option<PathBuf>,
    pub out: PathBuf,
    pub reference_rows: usize,
    pub arms: Vec<Arm>,
    pub na_threshold: usize,
    pub train_frac: f64,
    pub k_folds: usize,
    pub mice_iterations: usize,
    pub bootstrap: BootstrapConfig,
    pub gdd_formula: GddFormula,
    pub families: Vec<Family>,
    pub grids: Vec<GridSpec>,
    pub fractions: Vec<f64>,
    pub selection_families: Vec<Family>,
    pub min_gain: f64,
    pub simulation: SimulationConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            data: None,
            schema: None,
            weather: None,
            history: None,
            out: PathBuf::from("out"),
            reference_rows: DEFAULT_REFERENCE_ROWS,
            arms: vec![Arm::Imputed, Arm::NotImputed],
            na_threshold: DEFAULT_MAX_NA,
            train_frac: 0.8,
            k_folds: 5,
            mice_iterations: 10,
            bootstrap: BootstrapConfig::default(),
            gdd_formula: GddFormula::Mean,
            families: Family::ALL.to_vec(),
            grids: default_grids(),
            fractions: FRACTIONS.to_vec(),
            selection_families: vec![Family::MlpBfgs, Family::Hgbc, Family::SvmRbf],
            min_gain: 1e-4,
            simulation: SimulationConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: RunConfig = serde_json::from_str(&text).map_err(|e| Error::Json(e).context(format!("config {}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Domain(format!("config: {m}")));
        if !(self.train_frac > 0.0 && self.train_frac < 1.0) {
            return bad(format!("train_frac {} outside (0, 1)", self.train_frac));
        }
        if self.k_folds < 2 {
            return bad(format!("k_folds {} below 2", self.k_folds));
        }
        if self.arms.is_empty() {
            return bad("no pipeline arm enabled".into());
        }
        if self.fractions.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) {
            return bad("selection fractions must lie in (0, 1]".into());
        }
        for g in &self.grids {
            g.validate(1)?;
        }
        Ok(())
    }

    pub fn grid(&self, family: Family) -> GridSpec {
        self.grids
            .iter()
            .find(|g| g.family == family)
            .cloned()
            .unwrap_or_else(|| crate::tuning::default_grid(family))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalize {
    Counts,
    RowProportions,
}

impl std::str::FromStr for Normalize {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "counts" => Ok(Normalize::Counts),
            "row_proportions" | "row-proportions" => Ok(Normalize::RowProportions),
            _ => Err(Error::Domain(format!("unknown normalization '{s}'"))),
        }
    }
}

/// Rows are the true class (0 then 1), columns the predicted class (0 then 1).
/// `None` marks a row-normalized row whose true class never occurs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfusionTable {
    pub normalize: Normalize,
    pub cells: [[Option<f64>; 2]; 2],
}

pub const EMPTY_CELL: &str = "—";

pub fn render_confusion(c: &ConfusionCounts, normalize: Normalize) -> ConfusionTable {
    let raw = [[c.tn as f64, c.fp as f64], [c.fn_ as f64, c.tp as f64]];
    let cells = raw.map(|row| match normalize {
        Normalize::Counts => row.map(Some),
        Normalize::RowProportions => {
            let s = row[0] + row[1];
            if s == 0.0 {
                [None, None]
            } else {
                row.map(|v| Some(v / s))
            }
        }
    });
    ConfusionTable { normalize, cells }
}

impl ConfusionTable {
    fn cell(&self, r: usize, k: usize) -> String {
        match (self.cells[r][k], self.normalize) {
            (None, _) => EMPTY_CELL.to_string(),
            (Some(v), Normalize::Counts) => format!("{v}"),
            (Some(v), Normalize::RowProportions) => format!("{v:.4}"),
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{:<8} {:>10} {:>10}\n", "true", "pred 0", "pred 1");
        for r in 0..2 {
            s += &format!("{:<8} {:>10} {:>10}\n", r, self.cell(r, 0), self.cell(r, 1));
        }
        s
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["true_class", "pred_0", "pred_1"])?;
        for r in 0..2 {
            out.write_record([r.to_string(), self.cell(r, 0), self.cell(r, 1)])?;
        }
        out.flush().map_err(|e| Error::io("<confusion>", e))?;
        Ok(())
    }
}

/// Shortest text that parses back to the same value; `NA` for absent values.
pub fn num(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_else(|| crate::data::NA_TOKEN.to_string())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelComparisonRow {
    pub model: Family,
    pub imputed: Option<EvalReport>,
    pub not_imputed: Option<EvalReport>,
}

pub const MODEL_COMPARISON_HEADER: [&str; 7] = [
    "model",
    "imputed_test_mcc",
    "imputed_ci_lo",
    "imputed_ci_hi",
    "not_imputed_test_mcc",
    "not_imputed_ci_lo",
    "not_imputed_ci_hi",
];

pub fn write_model_comparison<W: Write>(rows: &[ModelComparisonRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(MODEL_COMPARISON_HEADER)?;
    for r in rows {
        let arm = |e: &Option<EvalReport>| {
            let ci = e.as_ref().and_then(|e| e.mcc_ci);
            [num(e.as_ref().map(|e| e.mcc)), num(ci.map(|c| c.0)), num(ci.map(|c| c.1))]
        };
        let mut rec = vec![r.model.label().to_string()];
        rec.extend(arm(&r.imputed));
        rec.extend(arm(&r.not_imputed));
        out.write_record(rec)?;
    }
    out.flush().map_err(|e| Error::io("<model comparison>", e))?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionRow {
    pub fraction: f64,
    pub model: Family,
    pub imputed: Option<EvalReport>,
    pub not_imputed: Option<EvalReport>,
}

pub const SELECTION_HEADER: [&str; 8] = [
    "fraction",
    "model",
    "imputed_accuracy",
    "imputed_f1",
    "imputed_mcc",
    "not_imputed_accuracy",
    "not_imputed_f1",
    "not_imputed_mcc",
];

pub fn write_selection_table<W: Write>(rows: &[SelectionRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(SELECTION_HEADER)?;
    for r in rows {
        let arm = |e: &Option<EvalReport>| [num(e.as_ref().map(|e| e.accuracy)), num(e.as_ref().map(|e| e.f1)), num(e.as_ref().map(|e| e.mcc))];
        let mut rec = vec![format!("{}", r.fraction), r.model.label().to_string()];
        rec.extend(arm(&r.imputed));
        rec.extend(arm(&r.not_imputed));
        out.write_record(rec)?;
    }
    out.flush().map_err(|e| Error::io("<selection table>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_proportions() {
        let t = render_confusion(&ConfusionCounts::new(2, 0, 0, 2), Normalize::RowProportions);
        assert_eq!(t.cells, [[Some(1.0), Some(0.0)], [Some(0.0), Some(1.0)]]);
        let t = render_confusion(&ConfusionCounts::new(60, 6, 40, 94), Normalize::RowProportions);
        assert_eq!(t.cells[0][0], Some(0.94));
        assert_eq!(t.cells[1][1], Some(0.6));
    }

    #[test]
    fn empty_rows_render_as_dash() {
        let t = render_confusion(&ConfusionCounts::new(0, 1, 0, 3), Normalize::RowProportions);
        assert_eq!(t.cells[1], [None, None]);
        assert!(t.to_text().contains(EMPTY_CELL));
        let counts = render_confusion(&ConfusionCounts::new(0, 1, 0, 3), Normalize::Counts);
        assert_eq!(counts.cells[1], [Some(0.0), Some(0.0)]);
    }

    #[test]
    fn config_round_trips() {
        let cfg = RunConfig::default();
        let back: RunConfig = serde_json::from_str(&cfg.to_json().unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert!(serde_json::from_str::<RunConfig>(r#"{"sed": 1}"#).is_err());
        let partial: RunConfig = serde_json::from_str(r#"{"seed": 9}"#).unwrap();
        assert_eq!(partial.seed, 9);
        assert_eq!(partial.grids, default_grids());
    }
}
