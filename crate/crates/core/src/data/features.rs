//! Engineered features: response labels, control averages, percent of control and
//! growing degree day windows.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;

use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, Planting};
use super::schema::{ColumnKind, ColumnSpec};
use crate::error::{Error, Result};

pub const TOTAL_YIELD: &str = "Total Yield";
pub const CTRL_AVE: &str = "Ctrl ave";
pub const PERCENT_CA: &str = "% CA";
pub const GDD_1_60: &str = "GDD 1-60";
pub const GDD_61_90: &str = "GDD 61-90";
pub const GDD_91_END: &str = "GDD 91-end";

/// Control varieties grown in every region and year.
pub const CONTROLS: [&str; 3] = ["Ranger Russet", "Russet Burbank", "Russet Norkotah"];
/// Extra controls grown only in Hermiston.
pub const HERMISTON_CONTROLS: [&str; 2] = ["Shepody", "Umatilla"];
pub const HERMISTON: &str = "HER";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub clone_id: String,
    pub year_in_trial: u8,
    pub passed: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrueKeeps {
    pub labels: BTreeMap<String, u8>,
    /// Clones still in their first or second statewide year.
    pub removed: BTreeSet<String>,
}

/// Label each clone 1 iff it passed all three statewide trials.
///
/// A clone whose last recorded year was passed but is below year 3 is still in
/// the trials and goes to the removal set instead of being labeled.
pub fn derive_true_keeps(history: &[TrialRecord]) -> Result<TrueKeeps> {
    let mut by_clone: BTreeMap<&str, BTreeMap<u8, bool>> = BTreeMap::new();
    for rec in history {
        if !(1..=3).contains(&rec.year_in_trial) {
            return Err(Error::Consistency(format!(
                "clone '{}' has year in trial {}",
                rec.clone_id, rec.year_in_trial
            )));
        }
        let years = by_clone.entry(rec.clone_id.as_str()).or_default();
        if years.insert(rec.year_in_trial, rec.passed).is_some() {
            return Err(Error::Consistency(format!(
                "clone '{}' has two entries for year {}",
                rec.clone_id, rec.year_in_trial
            )));
        }
    }
    let mut out = TrueKeeps::default();
    for (clone, years) in by_clone {
        let passes = years.values().filter(|&&p| p).count();
        let (&last_year, &last_passed) = years.iter().next_back().expect("non-empty");
        if passes >= 3 {
            out.labels.insert(clone.to_string(), 1);
        } else if last_passed && last_year < 3 {
            out.removed.insert(clone.to_string());
        } else {
            out.labels.insert(clone.to_string(), 0);
        }
    }
    Ok(out)
}

/// Trial history CSV with columns `clone_id`, `year_in_trial`, `passed`
/// (`passed` as true/false or 1/0).
pub fn read_history<R: Read>(reader: R) -> Result<Vec<TrialRecord>> {
    #[derive(Deserialize)]
    struct Raw {
        clone_id: String,
        year_in_trial: u8,
        passed: String,
    }
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = Vec::new();
    for (row, rec) in rdr.deserialize::<Raw>().enumerate() {
        let r = rec?;
        let passed = match r.passed.to_ascii_lowercase().as_str() {
            "1" | "true" | "yes" => true,
            "0" | "false" | "no" => false,
            _ => {
                return Err(Error::Parse {
                    row: row + 1,
                    column: "passed".into(),
                    value: r.passed,
                })
            }
        };
        out.push(TrialRecord {
            clone_id: r.clone_id,
            year_in_trial: r.year_in_trial,
            passed,
        });
    }
    Ok(out)
}

/// Label rows by clone, dropping clones still in the trials and clones with no history.
pub fn attach_true_keeps(ds: &Dataset, keeps: &TrueKeeps) -> Result<Dataset> {
    let rows: Vec<usize> = (0..ds.n_rows()).filter(|&i| keeps.labels.contains_key(&ds.keys()[i].clone_id)).collect();
    let sub = ds.select_rows(&rows);
    let labels = sub.keys().iter().map(|k| keeps.labels[&k.clone_id]).collect();
    sub.with_labels(Some(labels))
}

pub fn is_control(clone_id: &str, region: &str) -> bool {
    let eq = |c: &&str| c.eq_ignore_ascii_case(clone_id.trim());
    CONTROLS.iter().any(eq) || (region == HERMISTON && HERMISTON_CONTROLS.iter().any(eq))
}

/// Mean control Total Yield for a (year, region).
pub fn control_average(ds: &Dataset, year: i32, region: &str) -> Result<f64> {
    let j = ds
        .column_index(TOTAL_YIELD)
        .ok_or_else(|| Error::Schema(format!("column '{TOTAL_YIELD}' is required")))?;
    let yields: Vec<f64> = ds
        .keys()
        .iter()
        .enumerate()
        .filter(|(_, k)| k.year == year && k.region == region && is_control(&k.clone_id, region))
        .filter_map(|(i, _)| ds.get(i, j))
        .collect();
    if yields.is_empty() {
        return Err(Error::UnavailableControl {
            year,
            region: region.to_string(),
        });
    }
    Ok(yields.iter().sum::<f64>() / yields.len() as f64)
}

pub fn percent_ca(total_yield: f64, ctrl_ave: f64) -> Result<f64> {
    if !(ctrl_ave > 0.0) {
        return Err(Error::Domain(format!("control average must be positive, got {ctrl_ave}")));
    }
    Ok(100.0 * total_yield / ctrl_ave)
}

/// Append "Ctrl ave" and "% CA" columns.
pub fn add_control_features(ds: Dataset) -> Result<Dataset> {
    let sites: BTreeSet<(i32, String)> = ds.keys().iter().map(|k| (k.year, k.region.clone())).collect();
    let mut averages = BTreeMap::new();
    for (year, region) in sites {
        let ave = control_average(&ds, year, &region)?;
        averages.insert((year, region), ave);
    }
    let j = ds.column_index(TOTAL_YIELD).expect("checked by control_average");
    let mut ctrl = Vec::with_capacity(ds.n_rows());
    let mut pca = Vec::with_capacity(ds.n_rows());
    for (i, k) in ds.keys().iter().enumerate() {
        let ave = averages[&(k.year, k.region.clone())];
        ctrl.push(Some(ave));
        pca.push(match ds.get(i, j) {
            Some(t) => Some(percent_ca(t, ave)?),
            None => None,
        });
    }
    let n_missing = pca.iter().filter(|v| v.is_none()).count();
    ds.push_column(ColumnSpec::numeric(CTRL_AVE, ColumnKind::Derived, "cwt/acre", None, 0), ctrl)?
        .push_column(
            ColumnSpec::numeric(PERCENT_CA, ColumnKind::Derived, "percent", None, n_missing),
            pca,
        )
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GddFormula {
    /// (t_max + t_min) / 2 − t_base
    #[default]
    Mean,
    /// (t_max − t_min) / 2 − t_base
    HalfRange,
}

impl std::str::FromStr for GddFormula {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(GddFormula::Mean),
            "half-range" => Ok(GddFormula::HalfRange),
            _ => Err(Error::Domain(format!("unknown GDD formula '{s}'"))),
        }
    }
}

pub const POTATO_T_BASE: f64 = 8.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DailyTemperatures {
    /// ISO dates (YYYY-MM-DD) from planting through vine kill.
    pub dates: Vec<String>,
    pub t_max: Vec<f64>,
    pub t_min: Vec<f64>,
    pub t_base: f64,
}

impl DailyTemperatures {
    pub fn new(dates: Vec<String>, t_max: Vec<f64>, t_min: Vec<f64>) -> Result<Self> {
        if dates.len() != t_max.len() || dates.len() != t_min.len() {
            return Err(Error::Shape("temperature series have different lengths".into()));
        }
        if dates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Consistency("dates are not strictly increasing".into()));
        }
        Ok(DailyTemperatures {
            dates,
            t_max,
            t_min,
            t_base: POTATO_T_BASE,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GddWindows {
    pub days_1_60: f64,
    pub days_61_90: f64,
    pub days_91_end: f64,
}

impl GddWindows {
    pub fn total(&self) -> f64 {
        self.days_1_60 + self.days_61_90 + self.days_91_end
    }
}

pub fn daily_gdd(t_max: f64, t_min: f64, t_base: f64, formula: GddFormula) -> f64 {
    let raw = match formula {
        GddFormula::Mean => (t_max + t_min) / 2.0 - t_base,
        GddFormula::HalfRange => (t_max - t_min) / 2.0 - t_base,
    };
    raw.max(0.0)
}

pub fn gdd_windows(temps: &DailyTemperatures, formula: GddFormula) -> Result<GddWindows> {
    let mut w = GddWindows {
        days_1_60: 0.0,
        days_61_90: 0.0,
        days_91_end: 0.0,
    };
    for (d, ((&hi, &lo), date)) in temps.t_max.iter().zip(&temps.t_min).zip(&temps.dates).enumerate() {
        if hi < lo {
            return Err(Error::Temperature {
                date: date.clone(),
                t_max: hi,
                t_min: lo,
            });
        }
        let g = daily_gdd(hi, lo, temps.t_base, formula);
        match d {
            0..=59 => w.days_1_60 += g,
            60..=89 => w.days_61_90 += g,
            _ => w.days_91_end += g,
        }
    }
    Ok(w)
}

pub type WeatherMap = BTreeMap<(i32, String, Planting), DailyTemperatures>;

/// Read daily temperatures from CSV with columns `year,region,planting,date,t_max,t_min`.
pub fn read_weather<R: Read>(reader: R) -> Result<WeatherMap> {
    #[derive(Deserialize)]
    struct Row {
        year: i32,
        region: String,
        planting: String,
        date: String,
        t_max: f64,
        t_min: f64,
    }
    let mut series: BTreeMap<(i32, String, Planting), (Vec<String>, Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for (i, row) in csv::Reader::from_reader(reader).deserialize::<Row>().enumerate() {
        let row = row?;
        let planting = Planting::parse(&row.planting).ok_or_else(|| Error::Parse {
            row: i + 1,
            column: "planting".into(),
            value: row.planting.clone(),
        })?;
        let e = series.entry((row.year, row.region, planting)).or_default();
        e.0.push(row.date);
        e.1.push(row.t_max);
        e.2.push(row.t_min);
    }
    series
        .into_iter()
        .map(|(k, (d, hi, lo))| Ok((k, DailyTemperatures::new(d, hi, lo)?)))
        .collect()
}

/// Append the three GDD window columns. Rows without a weather series get missing cells.
pub fn add_gdd_features(ds: Dataset, weather: &WeatherMap, formula: GddFormula) -> Result<Dataset> {
    let mut windows = BTreeMap::new();
    for (k, t) in weather {
        windows.insert(k.clone(), gdd_windows(t, formula)?);
    }
    let mut cols: [Vec<Option<f64>>; 3] = Default::default();
    for k in ds.keys() {
        let w = windows.get(&(k.year, k.region.clone(), k.planting));
        cols[0].push(w.map(|w| w.days_1_60));
        cols[1].push(w.map(|w| w.days_61_90));
        cols[2].push(w.map(|w| w.days_91_end));
    }
    let [a, b, c] = cols;
    let spec = |name: &str, v: &[Option<f64>]| {
        ColumnSpec::numeric(name, ColumnKind::Derived, "degree-days", None, v.iter().filter(|x| x.is_none()).count())
    };
    let (sa, sb, sc) = (spec(GDD_1_60, &a), spec(GDD_61_90, &b), spec(GDD_91_END, &c));
    ds.push_column(sa, a)?.push_column(sb, b)?.push_column(sc, c)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NaProfile {
    pub n_rows: usize,
    pub counts: BTreeMap<String, usize>,
}

impl NaProfile {
    pub fn new(n_rows: usize, counts: BTreeMap<String, usize>) -> Result<Self> {
        if n_rows == 0 {
            return Err(Error::Domain("profile needs a positive row count".into()));
        }
        if let Some((c, &v)) = counts.iter().find(|(_, &v)| v > n_rows) {
            return Err(Error::Domain(format!("profile count {v} for '{c}' exceeds {n_rows} rows")));
        }
        Ok(NaProfile { n_rows, counts })
    }

    pub fn zeros(ds: &Dataset) -> Self {
        NaProfile {
            n_rows: ds.n_rows().max(1),
            counts: ds.specs().iter().map(|s| (s.name.clone(), 0)).collect(),
        }
    }

    pub fn count(&self, column: &str) -> usize {
        self.counts.get(column).copied().unwrap_or(0)
    }
}

pub fn na_profile(ds: &Dataset) -> NaProfile {
    NaProfile {
        n_rows: ds.n_rows(),
        counts: (0..ds.n_cols())
            .map(|j| (ds.spec(j).name.clone(), ds.missing_count(j)))
            .collect(),
    }
}
