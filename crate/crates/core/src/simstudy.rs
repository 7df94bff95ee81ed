//! Scenario-driven synthetic trial generation and the replicate study loop.

use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::index::sample;
use rand::Rng as _;
use rand_distr::{Beta, Distribution, Gamma, Normal, Poisson, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifiers::logistic::sigmoid;
use crate::classifiers::{Family, Hyperparams};
use crate::data::{ColumnKind, Dataset, NaProfile, RowKey};
use crate::error::{Error, Result};
use crate::impute::{mimic_missingness, mimicked_count};
use crate::metrics::{auc_roc, confusion, mcc_flagged, se_over_replicates};
use crate::pipeline::{prepare_arm, Arm, PipelineConfig};
use crate::preprocess::DEFAULT_MAX_NA;
use crate::seed;
use crate::tuning::{grid_search, GridSpec, TuneConfig};

/// Row count the NA threshold was set against; thresholds scale with the row count.
pub const THRESHOLD_ROWS: usize = 885;
pub const CALIBRATION_ROWS: usize = 100_000;
pub const SCENARIOS: [&str; 4] = ["normal_uniform", "normal_beta", "gamma_uniform", "gamma_beta"];

pub fn scaled_threshold(threshold: usize, n_rows: usize) -> usize {
    (threshold as f64 * n_rows as f64 / THRESHOLD_ROWS as f64).round() as usize
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum MassFamily {
    /// Normal(μ_data, σ_data) per column.
    Normal,
    Gamma { shape: f64, scale: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum RatingFamily {
    /// Uniform(min_data, max_data) per column.
    Uniform,
    /// Beta(a, b) affinely mapped onto [min_data, max_data].
    Beta { a: f64, b: f64 },
}

/// Fully parameterized generator for one column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ColumnFamily {
    Normal { mean: f64, sd: f64 },
    Gamma { shape: f64, scale: f64 },
    Poisson { mean: f64 },
    Uniform { min: f64, max: f64 },
    Beta { a: f64, b: f64, min: f64, max: f64 },
    /// Level codes drawn with the given probabilities.
    Empirical { probs: Vec<f64> },
}

impl ColumnFamily {
    /// Analytic mean and standard deviation.
    pub fn moments(&self) -> (f64, f64) {
        match *self {
            ColumnFamily::Normal { mean, sd } => (mean, sd),
            ColumnFamily::Gamma { shape, scale } => (shape * scale, shape.sqrt() * scale),
            ColumnFamily::Poisson { mean } => (mean, mean.sqrt()),
            ColumnFamily::Uniform { min, max } => (0.5 * (min + max), (max - min) / 12f64.sqrt()),
            ColumnFamily::Beta { a, b, min, max } => {
                let m = a / (a + b);
                let v = a * b / ((a + b) * (a + b) * (a + b + 1.0));
                (min + (max - min) * m, (max - min) * v.sqrt())
            }
            ColumnFamily::Empirical { ref probs } => {
                let m: f64 = probs.iter().enumerate().map(|(k, p)| k as f64 * p).sum();
                let v: f64 = probs.iter().enumerate().map(|(k, p)| p * (k as f64 - m).powi(2)).sum();
                (m, v.sqrt())
            }
        }
    }

    fn legal_for(&self, kind: ColumnKind) -> bool {
        matches!(
            (kind, self),
            (ColumnKind::Mass, ColumnFamily::Normal { .. } | ColumnFamily::Gamma { .. })
                | (ColumnKind::Count, ColumnFamily::Poisson { .. })
                | (ColumnKind::Rating, ColumnFamily::Uniform { .. } | ColumnFamily::Beta { .. })
                | (ColumnKind::Derived, ColumnFamily::Normal { .. })
                | (ColumnKind::Categorical, ColumnFamily::Empirical { .. })
        )
    }
}

fn bad(msg: String) -> Error {
    Error::Scenario(msg)
}

/// `n` i.i.d. draws from `family`, which must be legal for the column kind.
pub fn sample_column(kind: ColumnKind, family: &ColumnFamily, n: usize, seed_value: u64) -> Result<Vec<f64>> {
    if !family.legal_for(kind) {
        return Err(bad(format!("{family:?} cannot generate a {kind:?} column")));
    }
    let mut rng = seed::rng(seed_value);
    let out = match *family {
        ColumnFamily::Normal { mean, sd } => {
            let d = Normal::new(mean, sd).map_err(|e| bad(format!("normal({mean}, {sd}): {e}")))?;
            (0..n).map(|_| d.sample(&mut rng)).collect()
        }
        ColumnFamily::Gamma { shape, scale } => {
            let d = Gamma::new(shape, scale).map_err(|e| bad(format!("gamma({shape}, {scale}): {e}")))?;
            (0..n).map(|_| d.sample(&mut rng)).collect()
        }
        ColumnFamily::Poisson { mean } if mean == 0.0 => vec![0.0; n],
        ColumnFamily::Poisson { mean } => {
            let d = Poisson::new(mean).map_err(|e| bad(format!("poisson({mean}): {e}")))?;
            (0..n).map(|_| d.sample(&mut rng)).collect()
        }
        ColumnFamily::Uniform { min, max } if min == max => vec![min; n],
        ColumnFamily::Uniform { min, max } => {
            let d = Uniform::new_inclusive(min, max).map_err(|e| bad(format!("uniform({min}, {max}): {e}")))?;
            (0..n).map(|_| d.sample(&mut rng)).collect()
        }
        ColumnFamily::Beta { a, b, min, max } => {
            let d = Beta::new(a, b).map_err(|e| bad(format!("beta({a}, {b}): {e}")))?;
            (0..n).map(|_| min + (max - min) * d.sample(&mut rng)).collect()
        }
        ColumnFamily::Empirical { ref probs } => {
            let total: f64 = probs.iter().sum();
            if probs.is_empty() || !(total > 0.0) {
                return Err(bad("empirical distribution has no mass".into()));
            }
            (0..n)
                .map(|_| {
                    let mut u = rng.random::<f64>() * total;
                    for (k, p) in probs.iter().enumerate() {
                        if u < *p {
                            return k as f64;
                        }
                        u -= p;
                    }
                    (probs.len() - 1) as f64
                })
                .collect()
        }
    };
    Ok(out)
}

/// Observed-cell summaries of one reference column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub name: String,
    pub kind: ColumnKind,
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub max: f64,
    pub level_probs: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub columns: Vec<ColumnStats>,
    /// Empirical (year, region, planting) rows for key resampling.
    pub keys: Vec<RowKey>,
    pub region_column: String,
    pub levels: BTreeMap<String, Vec<String>>,
    pub na_profile: NaProfile,
}

impl Reference {
    pub fn from_dataset(ds: &Dataset, region_column: &str) -> Result<Self> {
        let mut columns = Vec::new();
        let mut levels = BTreeMap::new();
        for j in 0..ds.n_cols() {
            let spec = ds.spec(j);
            if spec.kind == ColumnKind::Response {
                continue;
            }
            let obs: Vec<f64> = ds.observed(j).collect();
            if obs.is_empty() {
                return Err(Error::Generation(format!("reference column '{}' has no observed cells", spec.name)));
            }
            let n = obs.len() as f64;
            let mean = obs.iter().sum::<f64>() / n;
            let sd = if obs.len() > 1 {
                (obs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            let mut level_probs = Vec::new();
            if spec.kind == ColumnKind::Categorical {
                level_probs = vec![0.0; spec.levels.len()];
                for v in &obs {
                    level_probs[*v as usize] += 1.0 / n;
                }
                levels.insert(spec.name.clone(), spec.levels.clone());
            }
            columns.push(ColumnStats {
                name: spec.name.clone(),
                kind: spec.kind,
                mean,
                sd,
                min: obs.iter().cloned().fold(f64::INFINITY, f64::min),
                max: obs.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                level_probs,
            });
        }
        let na_profile = crate::data::na_profile(&ds.select_columns(
            &(0..ds.n_cols()).filter(|&j| ds.spec(j).kind != ColumnKind::Response).collect::<Vec<_>>(),
        ));
        Ok(Reference {
            columns,
            keys: ds.keys().to_vec(),
            region_column: region_column.to_string(),
            levels,
            na_profile,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MechanismKind {
    LogisticLinear,
    LogisticNonlinear,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LabelMechanism {
    pub kind: MechanismKind,
    /// Number of standardized features entering the linear score.
    pub sparsity: usize,
    /// Pairwise product terms (nonlinear only).
    pub interactions: usize,
    pub linear_scale: f64,
    pub interaction_scale: f64,
    pub target_positive_rate: f64,
    /// Only columns missing in at most this share of reference rows can enter
    /// the score, so the signal survives imputation.
    pub max_feature_na_rate: f64,
}

impl Default for LabelMechanism {
    fn default() -> Self {
        LabelMechanism {
            kind: MechanismKind::LogisticNonlinear,
            sparsity: 8,
            interactions: 3,
            linear_scale: 2.0,
            interaction_scale: 3.0,
            target_positive_rate: 0.12,
            max_feature_na_rate: 0.1,
        }
    }
}

/// A mechanism with its features, coefficients and intercept fixed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibratedMechanism {
    pub features: Vec<String>,
    /// (mean, sd) used to standardize each feature.
    pub moments: Vec<(f64, f64)>,
    pub coefficients: Vec<f64>,
    /// (i, j, coefficient) over indices into `features`.
    pub pairs: Vec<(usize, usize, f64)>,
    pub intercept: f64,
    pub realized_rate: f64,
}

impl CalibratedMechanism {
    fn score(&self, cols: &[Vec<f64>], i: usize) -> f64 {
        let z: Vec<f64> = cols.iter().zip(&self.moments).map(|(c, (m, s))| (c[i] - m) / s.max(1e-12)).collect();
        let mut s = self.intercept;
        for (zk, b) in z.iter().zip(&self.coefficients) {
            s += zk * b;
        }
        for &(a, b, w) in &self.pairs {
            s += w * z[a] * z[b];
        }
        s
    }

    pub fn probability(&self, cols: &[Vec<f64>], i: usize) -> f64 {
        sigmoid(self.score(cols, i))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    pub mass_family: MassFamily,
    pub rating_family: RatingFamily,
    pub n_rows: usize,
    pub n_replicates: usize,
    pub train_frac: f64,
    /// `None` uses the reference dataset's profile.
    #[serde(default)]
    pub na_profile: Option<NaProfile>,
    pub label_mechanism: LabelMechanism,
    pub master_seed: u64,
}

impl ScenarioSpec {
    pub fn named(name: &str) -> Result<Self> {
        let (mass_family, rating_family) = match name {
            "normal_uniform" => (MassFamily::Normal, RatingFamily::Uniform),
            "normal_beta" => (MassFamily::Normal, RatingFamily::Beta { a: 2.0, b: 5.0 }),
            "gamma_uniform" => (MassFamily::Gamma { shape: 2.0, scale: 2.0 }, RatingFamily::Uniform),
            "gamma_beta" => (MassFamily::Gamma { shape: 2.0, scale: 2.0 }, RatingFamily::Beta { a: 2.0, b: 5.0 }),
            _ => return Err(bad(format!("unknown scenario '{name}'; expected one of {SCENARIOS:?}"))),
        };
        Ok(ScenarioSpec {
            name: name.to_string(),
            mass_family,
            rating_family,
            n_rows: 885,
            n_replicates: 500,
            train_frac: 0.8,
            na_profile: None,
            label_mechanism: LabelMechanism::default(),
            master_seed: 0,
        })
    }

    pub fn column_family(&self, stats: &ColumnStats) -> ColumnFamily {
        match stats.kind {
            ColumnKind::Mass => match self.mass_family {
                MassFamily::Normal => ColumnFamily::Normal { mean: stats.mean, sd: stats.sd },
                MassFamily::Gamma { shape, scale } => ColumnFamily::Gamma { shape, scale },
            },
            ColumnKind::Count => ColumnFamily::Poisson { mean: stats.mean.max(0.0) },
            ColumnKind::Rating => match self.rating_family {
                RatingFamily::Uniform => ColumnFamily::Uniform { min: stats.min, max: stats.max },
                RatingFamily::Beta { a, b } => ColumnFamily::Beta { a, b, min: stats.min, max: stats.max },
            },
            ColumnKind::Categorical => ColumnFamily::Empirical { probs: stats.level_probs.clone() },
            ColumnKind::Derived | ColumnKind::Response => ColumnFamily::Normal { mean: stats.mean, sd: stats.sd },
        }
    }

    fn profile<'a>(&'a self, reference: &'a Reference) -> &'a NaProfile {
        self.na_profile.as_ref().unwrap_or(&reference.na_profile)
    }

    /// Choose features and coefficients, then bisect the intercept to the target rate.
    pub fn calibrate(&self, reference: &Reference) -> Result<CalibratedMechanism> {
        let lm = &self.label_mechanism;
        if !(lm.target_positive_rate > 0.0 && lm.target_positive_rate < 1.0) {
            return Err(bad("target positive rate must lie in (0, 1)".into()));
        }
        if !(0.0..=1.0).contains(&lm.max_feature_na_rate) {
            return Err(bad("max_feature_na_rate must lie in [0, 1]".into()));
        }
        let profile = self.profile(reference);
        let eligible: Vec<&ColumnStats> = reference
            .columns
            .iter()
            .filter(|c| c.kind.is_numeric_feature() && c.sd > 0.0)
            .filter(|c| (profile.count(&c.name) as f64 / profile.n_rows as f64) <= lm.max_feature_na_rate)
            .collect();
        if eligible.len() < lm.sparsity || lm.sparsity == 0 {
            return Err(bad(format!("label mechanism wants {} features, {} eligible", lm.sparsity, eligible.len())));
        }
        let mut rng = seed::derived_rng(self.master_seed, &format!("mechanism:{}", self.name), 0);
        let chosen: Vec<&ColumnStats> = sample(&mut rng, eligible.len(), lm.sparsity).into_iter().map(|k| eligible[k]).collect();
        let families: Vec<ColumnFamily> = chosen.iter().map(|c| self.column_family(c)).collect();
        let sign = |rng: &mut seed::Rng| if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let coefficients: Vec<f64> = (0..lm.sparsity).map(|_| sign(&mut rng) * lm.linear_scale * rng.random_range(0.5..1.0)).collect();
        let pairs = match lm.kind {
            MechanismKind::LogisticLinear => Vec::new(),
            MechanismKind::LogisticNonlinear => {
                if 2 * lm.interactions > lm.sparsity {
                    return Err(bad("each interaction needs two distinct features".into()));
                }
                let order = sample(&mut rng, lm.sparsity, 2 * lm.interactions).into_vec();
                order
                    .chunks(2)
                    .map(|p| (p[0], p[1], lm.interaction_scale * rng.random_range(0.75..1.0)))
                    .collect()
            }
        };
        let cols: Vec<Vec<f64>> = chosen
            .iter()
            .zip(&families)
            .enumerate()
            .map(|(k, (c, f))| sample_column(c.kind, f, CALIBRATION_ROWS, seed::derive(self.master_seed, &format!("calibration:{}", c.name), k as u64)))
            .collect::<Result<_>>()?;
        let mut mech = CalibratedMechanism {
            features: chosen.iter().map(|c| c.name.clone()).collect(),
            moments: families.iter().map(ColumnFamily::moments).collect(),
            coefficients,
            pairs,
            intercept: 0.0,
            realized_rate: 0.0,
        };
        let base: Vec<f64> = (0..CALIBRATION_ROWS).map(|i| mech.score(&cols, i)).collect();
        let rate = |b: f64| base.iter().map(|s| sigmoid(s + b)).sum::<f64>() / CALIBRATION_ROWS as f64;
        let (mut lo, mut hi) = (-60.0, 60.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if rate(mid) < lm.target_positive_rate {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        mech.intercept = 0.5 * (lo + hi);
        let mut draw = seed::derived_rng(self.master_seed, "calibration-labels", 0);
        let positives = base.iter().filter(|s| draw.random_bool(sigmoid(*s + mech.intercept))).count();
        mech.realized_rate = positives as f64 / CALIBRATION_ROWS as f64;
        if (mech.realized_rate - lm.target_positive_rate).abs() > 0.02 {
            return Err(bad(format!("calibrated rate {} misses target {}", mech.realized_rate, lm.target_positive_rate)));
        }
        Ok(mech)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnDraw {
    pub column: String,
    pub kind: ColumnKind,
    #[serde(flatten)]
    pub family: ColumnFamily,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicateMeta {
    pub replicate: usize,
    pub attempt: u64,
    pub seed: u64,
    pub missingness_seed: u64,
    pub columns: Vec<ColumnDraw>,
}

pub fn replicate_seed(master: u64, scenario: &str, replicate: usize, attempt: u64) -> u64 {
    seed::derive(seed::derive(master, &format!("replicate:{scenario}"), replicate as u64), "attempt", attempt)
}

/// One synthetic dataset for (scenario, replicate, attempt), with labels and injected holes.
pub fn make_dataset_attempt(scn: &ScenarioSpec, reference: &Reference, mech: &CalibratedMechanism, replicate: usize, attempt: u64) -> Result<(Dataset, ReplicateMeta)> {
    let n = scn.n_rows;
    let rep_seed = replicate_seed(scn.master_seed, &scn.name, replicate, attempt);
    let mut key_rng = seed::derived_rng(rep_seed, "keys", 0);
    if reference.keys.is_empty() {
        return Err(Error::Generation("reference has no rows to resample keys from".into()));
    }
    let keys: Vec<RowKey> = (0..n)
        .map(|i| {
            let k = &reference.keys[key_rng.random_range(0..reference.keys.len())];
            RowKey {
                year: k.year,
                region: k.region.clone(),
                planting: k.planting,
                clone_id: format!("SIM{replicate}-{i}"),
            }
        })
        .collect();
    let mut specs = Vec::new();
    let mut columns: Vec<Vec<Option<f64>>> = Vec::new();
    let mut draws = Vec::new();
    let mut raw: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (j, stats) in reference.columns.iter().enumerate() {
        let mut spec = crate::data::ColumnSpec::numeric(&stats.name, stats.kind, "", None, 0);
        let values: Vec<f64> = if stats.name == reference.region_column {
            let levels = &reference.levels[&stats.name];
            spec.levels = levels.clone();
            keys.iter()
                .map(|k| levels.iter().position(|l| *l == k.region).map(|p| p as f64))
                .collect::<Option<Vec<f64>>>()
                .ok_or_else(|| Error::Generation(format!("key region not among levels of '{}'", stats.name)))?
        } else {
            if stats.kind == ColumnKind::Categorical {
                spec.levels = reference.levels[&stats.name].clone();
            }
            let family = scn.column_family(stats);
            let s = seed::derive(rep_seed, &format!("column:{}", stats.name), j as u64);
            let v = sample_column(stats.kind, &family, n, s)?;
            draws.push(ColumnDraw {
                column: stats.name.clone(),
                kind: stats.kind,
                family,
                seed: s,
            });
            v
        };
        raw.insert(stats.name.clone(), values.clone());
        specs.push(spec);
        columns.push(values.into_iter().map(Some).collect());
    }
    let feats: Vec<Vec<f64>> = mech
        .features
        .iter()
        .map(|f| raw.get(f).cloned().ok_or_else(|| Error::Generation(format!("mechanism feature '{f}' not generated"))))
        .collect::<Result<_>>()?;
    let mut label_rng = seed::derived_rng(rep_seed, "labels", 0);
    let labels: Vec<u8> = (0..n).map(|i| u8::from(label_rng.random_bool(mech.probability(&feats, i)))).collect();
    let complete = Dataset::new(specs, columns, Some(labels), keys)?;
    let missingness_seed = seed::derive(rep_seed, "missingness", 0);
    let ds = mimic_missingness(&complete, scn.profile(reference), missingness_seed)?;
    Ok((
        ds,
        ReplicateMeta {
            replicate,
            attempt,
            seed: rep_seed,
            missingness_seed,
            columns: draws,
        },
    ))
}

pub fn make_dataset(scn: &ScenarioSpec, reference: &Reference, mech: &CalibratedMechanism, replicate: usize) -> Result<Dataset> {
    make_dataset_attempt(scn, reference, mech, replicate, 0).map(|(d, _)| d)
}

/// Holes each column receives at the scenario's row count.
pub fn expected_holes(scn: &ScenarioSpec, reference: &Reference, column: &str) -> usize {
    mimicked_count(scn.profile(reference), column, scn.n_rows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub families: Vec<Family>,
    pub grids: Vec<GridSpec>,
    pub k_folds: usize,
    pub na_threshold: usize,
    pub mice_iterations: usize,
    /// Attempts per replicate before giving up on a split with both classes.
    pub max_attempts: u64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            families: vec![Family::MlpBfgs, Family::Hgbc, Family::SvmRbf, Family::LogisticRegression],
            grids: crate::tuning::default_grids(),
            k_folds: 5,
            na_threshold: DEFAULT_MAX_NA,
            mice_iterations: 10,
            max_attempts: 20,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub scenario: String,
    pub replicate: usize,
    pub attempt: u64,
    pub model: Family,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
    pub auc: f64,
    pub mcc: f64,
    pub mcc_degenerate: bool,
    pub cv_score: f64,
    pub hyperparams: Hyperparams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub scenario: String,
    pub model: Family,
    pub tp: f64,
    pub fp: f64,
    #[serde(rename = "fn")]
    pub fn_: f64,
    pub tn: f64,
    pub auc: f64,
    pub mcc: f64,
    /// Absent for fewer than two replicates.
    pub se: Option<f64>,
    pub replicates: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioMeta {
    pub scenario: ScenarioSpec,
    pub mechanism: CalibratedMechanism,
    pub na_threshold: usize,
    pub regenerated: usize,
    pub replicates: Vec<ReplicateMeta>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub rows: Vec<StudyRow>,
    pub records: Vec<ReplicateRecord>,
    pub metadata: Vec<ScenarioMeta>,
}

fn grid_for(cfg: &StudyConfig, family: Family) -> GridSpec {
    cfg.grids
        .iter()
        .find(|g| g.family == family)
        .cloned()
        .unwrap_or_else(|| crate::tuning::default_grid(family))
}

fn run_replicate(scn: &ScenarioSpec, reference: &Reference, mech: &CalibratedMechanism, cfg: &StudyConfig, replicate: usize) -> Result<(ReplicateMeta, Vec<ReplicateRecord>)> {
    let threshold = scaled_threshold(cfg.na_threshold, scn.n_rows);
    for attempt in 0..cfg.max_attempts {
        let (ds, meta) = make_dataset_attempt(scn, reference, mech, replicate, attempt)?;
        let pcfg = PipelineConfig {
            na_threshold: threshold,
            train_frac: scn.train_frac,
            mice_iterations: cfg.mice_iterations,
            seed: meta.seed,
        };
        let prepared = match prepare_arm(&ds, Arm::Imputed, &pcfg) {
            Ok(p) => p,
            Err(e) if matches!(root(&e), Error::Stratification(_)) => continue,
            Err(e) => return Err(e),
        };
        let tcfg = TuneConfig {
            k: cfg.k_folds,
            seed: seed::derive(meta.seed, "tuning", 0),
            ..Default::default()
        };
        let mut records = Vec::new();
        let mut retry = false;
        for &family in &cfg.families {
            let grid = grid_for(cfg, family);
            let r = match grid_search(&grid, &prepared.train, &tcfg) {
                Ok(r) => r,
                Err(e) if matches!(root(&e), Error::Stratification(_)) => {
                    retry = true;
                    break;
                }
                Err(e) => return Err(e.context(format!("scenario {} replicate {replicate}, {family}", scn.name))),
            };
            let pred = r.model.predict(&prepared.test.x)?;
            let scores = r.model.score(&prepared.test.x)?;
            let c = confusion(&prepared.test.y, &pred)?;
            let m = mcc_flagged(&c);
            records.push(ReplicateRecord {
                scenario: scn.name.clone(),
                replicate,
                attempt,
                model: family,
                tp: c.tp,
                fp: c.fp,
                fn_: c.fn_,
                tn: c.tn,
                auc: auc_roc(&prepared.test.y, &scores)?,
                mcc: m.value,
                mcc_degenerate: m.degenerate,
                cv_score: r.cv_score,
                hyperparams: r.best.hyperparams,
            });
        }
        if !retry {
            return Ok((meta, records));
        }
    }
    Err(Error::Generation(format!(
        "scenario {} replicate {replicate}: no usable split in {} attempts",
        scn.name, cfg.max_attempts
    )))
}

fn root(e: &Error) -> &Error {
    match e {
        Error::Context { source, .. } => root(source),
        other => other,
    }
}

/// Aggregate per-replicate records for one (scenario, model) pair.
pub fn aggregate(scenario: &str, model: Family, records: &[&ReplicateRecord]) -> StudyRow {
    let n = records.len() as f64;
    let mean = |f: &dyn Fn(&ReplicateRecord) -> f64| records.iter().map(|r| f(r)).sum::<f64>() / n;
    let mccs: Vec<f64> = records.iter().map(|r| r.mcc).collect();
    StudyRow {
        scenario: scenario.to_string(),
        model,
        tp: mean(&|r| r.tp as f64),
        fp: mean(&|r| r.fp as f64),
        fn_: mean(&|r| r.fn_ as f64),
        tn: mean(&|r| r.tn as f64),
        auc: mean(&|r| r.auc),
        mcc: mean(&|r| r.mcc),
        se: se_over_replicates(&mccs).ok(),
        replicates: records.len(),
    }
}

pub fn run_study(scenarios: &[ScenarioSpec], reference: &Reference, cfg: &StudyConfig) -> Result<StudyResult> {
    let mut rows = Vec::new();
    let mut records = Vec::new();
    let mut metadata = Vec::new();
    for scn in scenarios {
        let mech = scn.calibrate(reference)?;
        let reps: Vec<Result<(ReplicateMeta, Vec<ReplicateRecord>)>> = (0..scn.n_replicates)
            .into_par_iter()
            .map(|r| run_replicate(scn, reference, &mech, cfg, r))
            .collect();
        let mut metas = Vec::new();
        let mut recs = Vec::new();
        for r in reps {
            let (m, rr) = r?;
            metas.push(m);
            recs.extend(rr);
        }
        for &family in &cfg.families {
            let mine: Vec<&ReplicateRecord> = recs.iter().filter(|r| r.model == family).collect();
            if !mine.is_empty() {
                rows.push(aggregate(&scn.name, family, &mine));
            }
        }
        metadata.push(ScenarioMeta {
            scenario: scn.clone(),
            mechanism: mech,
            na_threshold: scaled_threshold(cfg.na_threshold, scn.n_rows),
            regenerated: metas.iter().filter(|m| m.attempt > 0).count(),
            replicates: metas,
        });
        records.extend(recs);
    }
    Ok(StudyResult { rows, records, metadata })
}

fn fmt6(v: f64) -> String {
    format!("{v:.6}")
}

impl StudyResult {
    /// Aggregate table: TRIAL, MODEL, TP, FP, FN, TN, ROC, MCC, SE.
    pub fn write_table<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["TRIAL", "MODEL", "TP", "FP", "FN", "TN", "ROC", "MCC", "SE"])?;
        for r in &self.rows {
            out.write_record([
                r.scenario.clone(),
                r.model.label().to_string(),
                fmt6(r.tp),
                fmt6(r.fp),
                fmt6(r.fn_),
                fmt6(r.tn),
                fmt6(r.auc),
                fmt6(r.mcc),
                r.se.map(fmt6).unwrap_or_else(|| "NA".into()),
            ])?;
        }
        out.flush().map_err(|e| Error::io("<study table>", e))?;
        Ok(())
    }

    /// One row per replicate and model.
    pub fn write_log<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["scenario", "replicate", "attempt", "model", "tp", "fp", "fn", "tn", "auc", "mcc", "mcc_degenerate", "cv_score", "hyperparams"])?;
        for r in &self.records {
            out.write_record([
                r.scenario.clone(),
                r.replicate.to_string(),
                r.attempt.to_string(),
                r.model.as_str().to_string(),
                r.tp.to_string(),
                r.fp.to_string(),
                r.fn_.to_string(),
                r.tn.to_string(),
                format!("{}", r.auc),
                format!("{}", r.mcc),
                r.mcc_degenerate.to_string(),
                format!("{}", r.cv_score),
                crate::classifiers::params::describe(&r.hyperparams),
            ])?;
        }
        out.flush().map_err(|e| Error::io("<replicate log>", e))?;
        Ok(())
    }
}
