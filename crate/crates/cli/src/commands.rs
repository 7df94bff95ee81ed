use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use clonesel::classifiers::{Family, Hyperparams};
use clonesel::data::{
    add_control_features, add_gdd_features, appendix_schema, attach_true_keeps, derive_true_keeps, load_trials, read_history,
    read_weather, synthetic_trials, write_dataset, Dataset, KeyColumns, Schema, APPENDIX_ROWS, CTRL_AVE, RESPONSE, TOTAL_YIELD,
};
use clonesel::featselect::{forward_select_fractions, SelectConfig, SelectionTrace};
use clonesel::metrics::{EvalReport, Metric};
use clonesel::pipeline::{evaluate_groups, prepare_arm, tune_and_evaluate, write_design, Arm, PipelineConfig, PreparedArm};
use clonesel::report::{
    render_confusion, write_model_comparison, write_selection_table, ModelComparisonRow, Normalize, RunConfig, SelectionRow,
};
use clonesel::seed;
use clonesel::simstudy::{run_study, Reference, StudyConfig};
use clonesel::tuning::{grid_search, TuneConfig};

fn schema(cfg: &RunConfig) -> Result<Schema> {
    match &cfg.schema {
        Some(p) => Schema::from_json_file(p).with_context(|| format!("reading schema {}", p.display())),
        None => Ok(appendix_schema()),
    }
}

fn response_name(schema: &Schema) -> String {
    schema.response().map_or_else(|| RESPONSE.to_string(), |c| c.name.clone())
}

/// The trial table with engineered columns, or the synthetic stand-in when no data is given.
fn load_input(cfg: &RunConfig) -> Result<(Dataset, Schema)> {
    let schema = schema(cfg)?;
    let Some(path) = &cfg.data else {
        return Ok((synthetic_trials(&schema, cfg.reference_rows, cfg.seed)?, schema));
    };
    let mut ds = load_trials(path, &schema).with_context(|| format!("reading trials {}", path.display()))?;
    if let Some(h) = &cfg.history {
        let file = fs::File::open(h).with_context(|| format!("opening history {}", h.display()))?;
        ds = attach_true_keeps(&ds, &derive_true_keeps(&read_history(file)?)?)?;
    }
    if ds.column_index(TOTAL_YIELD).is_some() && ds.column_index(CTRL_AVE).is_none() {
        ds = add_control_features(ds)?;
    }
    if let Some(w) = &cfg.weather {
        let file = fs::File::open(w).with_context(|| format!("opening weather {}", w.display()))?;
        ds = add_gdd_features(ds, &read_weather(file)?, cfg.gdd_formula)?;
    }
    Ok((ds, schema))
}

fn pipeline_config(cfg: &RunConfig) -> PipelineConfig {
    PipelineConfig {
        na_threshold: cfg.na_threshold,
        train_frac: cfg.train_frac,
        mice_iterations: cfg.mice_iterations,
        seed: seed::derive(cfg.seed, "pipeline", 0),
    }
}

fn tune_config(cfg: &RunConfig, arm: Arm) -> TuneConfig {
    TuneConfig {
        k: cfg.k_folds,
        metric: Metric::Mcc,
        seed: seed::derive(cfg.seed, &format!("tune:{}", arm.as_str()), 0),
    }
}

/// Collects output files and writes them only once everything has been computed.
struct Outputs {
    dir: PathBuf,
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    fn new(cfg: &RunConfig, command: &str) -> Result<Self> {
        let mut o = Outputs {
            dir: cfg.out.join(command),
            files: Vec::new(),
        };
        o.add("run_config.json", cfg.to_json()?.into_bytes());
        Ok(o)
    }

    fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.add(name, text.into_bytes());
        Ok(())
    }

    fn csv(&mut self, name: &str, write: impl FnOnce(&mut Vec<u8>) -> clonesel::Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        write(&mut buf)?;
        self.add(name, buf);
        Ok(())
    }

    fn commit(self) -> Result<PathBuf> {
        fs::create_dir_all(&self.dir).with_context(|| format!("creating {}", self.dir.display()))?;
        for (name, bytes) in &self.files {
            let p = self.dir.join(name);
            fs::write(&p, bytes).with_context(|| format!("writing {}", p.display()))?;
        }
        Ok(self.dir)
    }
}

#[derive(Serialize, Deserialize)]
struct ArmSummary {
    arm: Arm,
    rows_used: usize,
    train_rows: usize,
    test_rows: usize,
    dropped_columns: Vec<String>,
    features: Vec<String>,
}

fn summary(p: &PreparedArm) -> ArmSummary {
    ArmSummary {
        arm: p.arm,
        rows_used: p.rows.len(),
        train_rows: p.train.n_rows(),
        test_rows: p.test.n_rows(),
        dropped_columns: p.dropped_columns.clone(),
        features: p.train.names.clone(),
    }
}

fn prepared_arms(cfg: &RunConfig, ds: &Dataset) -> Result<Vec<PreparedArm>> {
    let pcfg = pipeline_config(cfg);
    cfg.arms
        .iter()
        .map(|&arm| prepare_arm(ds, arm, &pcfg).with_context(|| format!("preparing the {} arm", arm.as_str())))
        .collect()
}

pub fn prepare(cfg: &RunConfig) -> Result<()> {
    let (ds, schema) = load_input(cfg)?;
    let arms = prepared_arms(cfg, &ds)?;
    let mut out = Outputs::new(cfg, "prepare")?;
    let label = response_name(&schema);
    out.csv("engineered.csv", |w| write_dataset(&ds, w, &schema.keys, &label))?;
    for p in &arms {
        out.csv(&format!("{}_train.csv", p.arm.as_str()), |w| write_design(&p.train, w, &label))?;
        out.csv(&format!("{}_test.csv", p.arm.as_str()), |w| write_design(&p.test, w, &label))?;
    }
    out.json("prepare.json", &arms.iter().map(summary).collect::<Vec<_>>())?;
    let dir = out.commit()?;
    println!("prepared {} arm(s) from {} rows into {}", arms.len(), ds.n_rows(), dir.display());
    Ok(())
}

pub fn impute(cfg: &RunConfig) -> Result<()> {
    let (ds, schema) = load_input(cfg)?;
    let p = prepare_arm(&ds, Arm::Imputed, &pipeline_config(cfg))?;
    let mut out = Outputs::new(cfg, "impute")?;
    let label = response_name(&schema);
    let keys: &KeyColumns = &schema.keys;
    out.csv("imputed_train.csv", |w| write_dataset(&p.train_data, w, keys, &label))?;
    out.csv("imputed_test.csv", |w| write_dataset(&p.test_data, w, keys, &label))?;
    out.json("mice.json", &p.mice)?;
    out.json("prepare.json", &summary(&p))?;
    let dir = out.commit()?;
    println!("imputed {} training and {} test rows into {}", p.train_data.n_rows(), p.test_data.n_rows(), dir.display());
    Ok(())
}

#[derive(Serialize, Deserialize)]
pub struct BenchEntry {
    pub model: Family,
    pub arm: Arm,
    pub hyperparams: Hyperparams,
    /// Absent when every grid cell failed.
    pub cv_score: Option<f64>,
    pub report: EvalReport,
}

#[derive(Serialize, Deserialize)]
struct BenchOutput {
    seed: u64,
    arms: Vec<ArmSummary>,
    entries: Vec<BenchEntry>,
}

pub fn bench(cfg: &RunConfig) -> Result<()> {
    let (ds, _) = load_input(cfg)?;
    let arms = prepared_arms(cfg, &ds)?;
    let mut out = Outputs::new(cfg, "bench")?;
    let mut entries = Vec::new();
    for p in &arms {
        let tune = tune_config(cfg, p.arm);
        for &family in &cfg.families {
            let r = tune_and_evaluate(&cfg.grid(family), p, &tune, cfg.bootstrap)
                .with_context(|| format!("{family} on the {} arm", p.arm.as_str()))?;
            out.csv(&format!("grid_{}_{}.csv", p.arm.as_str(), family.as_str()), |w| r.table.write_csv(w))?;
            let conf = render_confusion(&r.report.confusion, Normalize::RowProportions);
            out.csv(&format!("confusion_{}_{}.csv", p.arm.as_str(), family.as_str()), |w| conf.write_csv(w))?;
            entries.push(BenchEntry {
                model: family,
                arm: p.arm,
                hyperparams: r.best.hyperparams,
                cv_score: r.cv_score.is_finite().then_some(r.cv_score),
                report: r.report,
            });
        }
    }
    let rows = comparison_rows(&cfg.families, &entries);
    out.csv("model_comparison.csv", |w| write_model_comparison(&rows, w))?;
    out.json(
        "results.json",
        &BenchOutput {
            seed: cfg.seed,
            arms: arms.iter().map(summary).collect(),
            entries,
        },
    )?;
    let dir = out.commit()?;
    println!("benchmarked {} families on {} arm(s) into {}", cfg.families.len(), arms.len(), dir.display());
    Ok(())
}

fn comparison_rows(families: &[Family], entries: &[BenchEntry]) -> Vec<ModelComparisonRow> {
    let find = |f: Family, arm: Arm| entries.iter().find(|e| e.model == f && e.arm == arm).map(|e| e.report.clone());
    families
        .iter()
        .map(|&f| ModelComparisonRow {
            model: f,
            imputed: find(f, Arm::Imputed),
            not_imputed: find(f, Arm::NotImputed),
        })
        .collect()
}

#[derive(Serialize)]
struct SelectionEntry<'a> {
    arm: Arm,
    model: Family,
    hyperparams: &'a Hyperparams,
    fraction: f64,
    trace: &'a SelectionTrace,
    report: Option<&'a EvalReport>,
}

pub fn select(cfg: &RunConfig) -> Result<()> {
    let (ds, _) = load_input(cfg)?;
    let arms = prepared_arms(cfg, &ds)?;
    let mut out = Outputs::new(cfg, "select")?;
    // (arm, family, spec, [(fraction, trace, report)])
    let mut results = Vec::new();
    for p in &arms {
        let tune = tune_config(cfg, p.arm);
        for &family in &cfg.selection_families {
            let tuned = grid_search(&cfg.grid(family), &p.train, &tune).with_context(|| format!("tuning {family}"))?;
            let scfg = SelectConfig {
                k: cfg.k_folds,
                metric: Metric::Mcc,
                min_gain: cfg.min_gain,
                seed: seed::derive(cfg.seed, &format!("select:{}", p.arm.as_str()), 0),
            };
            let traces = forward_select_fractions(&tuned.best, &p.train, &cfg.fractions, &scfg)
                .with_context(|| format!("selecting features for {family} on the {} arm", p.arm.as_str()))?;
            let mut per_fraction = Vec::new();
            for (fraction, trace) in traces {
                let report = if trace.groups.is_empty() {
                    None
                } else {
                    let s = seed::derive(cfg.seed, &format!("select-bootstrap:{}:{}", p.arm.as_str(), family.as_str()), (fraction * 1000.0).round() as u64);
                    Some(evaluate_groups(&tuned.best, p, &trace.groups, cfg.bootstrap, s)?)
                };
                out.csv(&format!("trace_{}_{}_{}.csv", p.arm.as_str(), family.as_str(), fraction), |w| trace.write_csv(w))?;
                per_fraction.push((fraction, trace, report));
            }
            results.push((p.arm, family, tuned.best.hyperparams, per_fraction));
        }
    }
    let mut rows = Vec::new();
    for &fraction in &cfg.fractions {
        for &family in &cfg.selection_families {
            let get = |arm: Arm| {
                results
                    .iter()
                    .filter(|(a, f, _, _)| *a == arm && *f == family)
                    .flat_map(|(_, _, _, v)| v.iter())
                    .find(|(fr, _, _)| *fr == fraction)
                    .and_then(|(_, _, r)| r.clone())
            };
            rows.push(SelectionRow {
                fraction,
                model: family,
                imputed: get(Arm::Imputed),
                not_imputed: get(Arm::NotImputed),
            });
        }
    }
    out.csv("selection.csv", |w| write_selection_table(&rows, w))?;
    let entries: Vec<SelectionEntry> = results
        .iter()
        .flat_map(|(arm, model, h, v)| {
            v.iter().map(move |(fraction, trace, report)| SelectionEntry {
                arm: *arm,
                model: *model,
                hyperparams: h,
                fraction: *fraction,
                trace,
                report: report.as_ref(),
            })
        })
        .collect();
    out.json("selection.json", &entries)?;
    let dir = out.commit()?;
    println!("forward selection over {} fraction(s) into {}", cfg.fractions.len(), dir.display());
    Ok(())
}

pub fn simulate(cfg: &RunConfig) -> Result<()> {
    let schema = schema(cfg)?;
    let ds = match &cfg.data {
        Some(_) => load_input(cfg)?.0,
        None => synthetic_trials(&schema, APPENDIX_ROWS, cfg.seed)?,
    };
    let reference = Reference::from_dataset(&ds, &schema.keys.region)?;
    let study = StudyConfig {
        families: cfg.simulation.families.clone(),
        grids: cfg.grids.clone(),
        k_folds: cfg.k_folds,
        na_threshold: cfg.na_threshold,
        mice_iterations: cfg.mice_iterations,
        max_attempts: cfg.simulation.max_attempts,
    };
    let res = run_study(&cfg.simulation.scenarios, &reference, &study)?;
    let mut out = Outputs::new(cfg, "simulate")?;
    out.csv("simulation.csv", |w| res.write_table(w))?;
    out.csv("replicates.csv", |w| res.write_log(w))?;
    out.json("metadata.json", &res.metadata)?;
    let dir = out.commit()?;
    let regenerated: usize = res.metadata.iter().map(|m| m.regenerated).sum();
    println!("simulated {} scenario(s), {regenerated} replicate(s) regenerated, into {}", res.metadata.len(), dir.display());
    Ok(())
}

fn read_bench(dir: &Path) -> Result<BenchOutput> {
    let p = dir.join("bench").join("results.json");
    let text = fs::read_to_string(&p).with_context(|| format!("reading {}; run `bench` first", p.display()))?;
    Ok(serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?)
}

pub fn report(cfg: &RunConfig) -> Result<()> {
    let bench = read_bench(&cfg.out)?;
    if bench.entries.is_empty() {
        bail!("bench results hold no entries");
    }
    let mut text = format!("seed {}\n\n", bench.seed);
    for a in &bench.arms {
        text += &format!(
            "{} arm: {} rows ({} train, {} test), {} features, dropped: {}\n",
            a.arm.as_str(),
            a.rows_used,
            a.train_rows,
            a.test_rows,
            a.features.len(),
            if a.dropped_columns.is_empty() { "none".to_string() } else { a.dropped_columns.join(", ") }
        );
    }
    text += &format!("\n{:<24} {:<12} {:>10} {:>22}\n", "model", "arm", "test MCC", "95% CI");
    for e in &bench.entries {
        let ci = e.report.mcc_ci.map_or_else(|| "NA".to_string(), |(lo, hi)| format!("({lo}, {hi})"));
        text += &format!("{:<24} {:<12} {:>10} {:>22}\n", e.model.label(), e.arm.as_str(), e.report.mcc, ci);
    }
    for e in &bench.entries {
        text += &format!("\n{} ({}), row proportions\n", e.model.label(), e.arm.as_str());
        text += &render_confusion(&e.report.confusion, Normalize::RowProportions).to_text();
    }
    let rows = comparison_rows(&bench.entries.iter().fold(Vec::new(), |mut v, e| {
        if !v.contains(&e.model) {
            v.push(e.model);
        }
        v
    }), &bench.entries);
    let mut out = Outputs::new(cfg, "report")?;
    out.add("summary.txt", text.clone().into_bytes());
    out.csv("model_comparison.csv", |w| write_model_comparison(&rows, w))?;
    out.commit()?;
    print!("{text}");
    Ok(())
}
