//! The trial attribute schema and a synthetic stand-in for the (unpublished) trial data.

use rand::Rng as _;
use rand_distr::{Beta, Distribution};

use super::dataset::{Dataset, Planting, RowKey};
use super::features::{CTRL_AVE, GDD_1_60, GDD_61_90, GDD_91_END, PERCENT_CA};
use super::schema::{ColumnKind, ColumnSpec, Schema};
use crate::error::Result;
use crate::seed;

/// Row count the attribute NA counts refer to.
pub const APPENDIX_ROWS: usize = 1086;
pub const RESPONSE: &str = "true_keeps";
pub const TRIAL_REGION: &str = "Trial Region";
pub const YEAR_IN_TRIAL: &str = "Year in trial";

pub fn appendix_schema() -> Schema {
    use ColumnKind::*;
    let n = ColumnSpec::numeric;
    let y = "cwt/acre";
    let columns = vec![
        n("Total Yield", Mass, y, Some((0.0, 1510.0)), 47),
        n("Rank", Count, "rank", Some((1.0, 44.0)), 47),
        n("% RB", Derived, "percent", Some((0.0, 274.0)), 47),
        n("Yield No. 1's", Mass, y, Some((0.0, 983.0)), 47),
        n("Rank (No. 1's)", Count, "rank", Some((1.0, 44.0)), 47),
        n("% RB (No. 1's)", Derived, "percent", Some((0.0, 336.0)), 47),
        n("% No. 1's", Derived, "percent", Some((0.0, 93.0)), 51),
        n("> 10 oz.", Mass, y, Some((0.0, 787.0)), 143),
        n("6-10 oz.", Mass, y, Some((0.0, 716.0)), 144),
        n("4-6 oz.", Mass, y, Some((0.0, 240.0)), 143),
        n("Yield No. 2's + > 20oz.", Mass, y, Some((0.0, 429.0)), 51),
        n("Yield Under 4 oz.", Mass, y, Some((0.0, 807.0)), 52),
        n("Yield Culls", Mass, y, Some((0.0, 178.0)), 53),
        n("Yield Over 20 oz.", Mass, y, None, 140),
        n("Tuber/plant", Count, "tubers/plant", None, 276),
        n("Average Tuber Size", Mass, "oz", Some((0.0, 20.0)), 175),
        n("Length/Width Ratio", Derived, "ratio", Some((0.52, 3.5)), 19),
        n("Specific Gravity", Derived, "ratio", Some((0.0, 1.1)), 18),
        n("Fry Color Stem", Derived, "photovolts", Some((14.4, 72.9)), 410),
        n("Fry Color Bud", Derived, "photovolts", Some((16.9, 76.3)), 410),
        n("Hollow Heart", Rating, "percent", Some((0.0, 90.0)), 40),
        n("Brown Center", Rating, "percent", Some((0.0, 30.0)), 40),
        n("Black Spot Bruise", Rating, "percent", Some((0.0, 87.5)), 169),
        n("Internal Brown Spot", Rating, "percent", Some((0.0, 100.0)), 40),
        n("Vascular Discoloration", Rating, "percent", Some((0.0, 100.0)), 40),
        n("Flower Color", Rating, "score", Some((1.0, 4.0)), 638),
        n("Vine Size", Rating, "score", Some((1.3, 5.125)), 583),
        n("Maturity", Rating, "score", Some((0.1375, 5.75)), 639),
        n("Skin Color", Rating, "score", Some((1.35, 71.3)), 290),
        n("Russeting", Rating, "score", Some((1.0, 14.625)), 153),
        n("Tuber Shape", Rating, "score", Some((1.0, 5.0)), 261),
        n("Shape Uniformity", Rating, "score", Some((1.0, 5.0)), 153),
        n("Eye Depth", Rating, "score", Some((1.0, 5.5)), 119),
        n("Greening", Rating, "score", Some((1.625, 5.0)), 153),
        n("Growth Cracks", Rating, "score", Some((1.0, 5.0)), 153),
        n("Scab", Rating, "score", Some((2.625, 5.0)), 325),
        n("Shatter Bruise", Rating, "score", Some((2.16, 20.83)), 176),
        n(CTRL_AVE, Derived, y, None, 0),
        n(PERCENT_CA, Derived, "percent", None, 47),
        n(GDD_1_60, Derived, "degree-days", None, 0),
        n(GDD_61_90, Derived, "degree-days", None, 0),
        n(GDD_91_END, Derived, "degree-days", None, 0),
        ColumnSpec::categorical(TRIAL_REGION, &["HER", "ONT", "KF", "COR"]),
        ColumnSpec::categorical(YEAR_IN_TRIAL, &["1", "2", "3"]),
        n(RESPONSE, Response, "", Some((0.0, 1.0)), 0),
    ];
    Schema::new(columns).expect("built-in schema is valid")
}

fn fallback_range(spec: &ColumnSpec) -> (f64, f64) {
    match spec.name.as_str() {
        "Yield Over 20 oz." => (0.0, 400.0),
        "Tuber/plant" => (0.0, 16.0),
        CTRL_AVE => (450.0, 800.0),
        PERCENT_CA => (0.0, 220.0),
        GDD_1_60 => (250.0, 700.0),
        GDD_61_90 => (300.0, 500.0),
        GDD_91_END => (100.0, 900.0),
        _ => (0.0, 100.0),
    }
}

/// Synthetic trial table shaped like the attribute schema: values drawn inside each
/// column's declared range, missing cells at the declared NA counts (rescaled to
/// `n_rows`), and labels from a fixed nonlinear score at roughly the empirical
/// 88/1086 positive rate.
pub fn synthetic_trials(schema: &Schema, n_rows: usize, master: u64) -> Result<Dataset> {
    let mut rng = seed::derived_rng(master, "synthetic-trials", 0);
    let shape = Beta::new(2.0, 2.0).expect("valid beta");
    let regions = ["HER", "ONT", "KF", "COR"];
    let keys: Vec<RowKey> = (0..n_rows)
        .map(|i| {
            let year = 2013 + rng.random_range(0..9);
            let region = regions[rng.random_range(0..if year < 2015 { 4 } else { 3 })];
            let planting = if region == "HER" && rng.random_bool(0.5) {
                Planting::Early
            } else {
                Planting::Late
            };
            RowKey {
                year,
                region: region.to_string(),
                planting,
                clone_id: format!("OR{:05}", i),
            }
        })
        .collect();

    let mut specs = Vec::new();
    let mut columns = Vec::new();
    let mut latent = vec![0.0; n_rows];
    // Shared per-row propensity so holes cluster in the same rows, as they do
    // when whole trials skip a measurement.
    let propensity: Vec<f64> = (0..n_rows).map(|_| rng.random::<f64>()).collect();
    for spec in schema.columns.iter().filter(|s| s.kind != ColumnKind::Response) {
        let mut col: Vec<Option<f64>> = match spec.kind {
            ColumnKind::Categorical if spec.name == schema.keys.region => keys
                .iter()
                .map(|k| Some(spec.level_index(&k.region).unwrap_or(0) as f64))
                .collect(),
            ColumnKind::Categorical => {
                let m = spec.levels.len();
                (0..n_rows).map(|_| Some(rng.random_range(0..m) as f64)).collect()
            }
            _ => {
                let (lo, hi) = spec.range.unwrap_or_else(|| fallback_range(spec));
                (0..n_rows)
                    .map(|_| {
                        let v = lo + (hi - lo) * shape.sample(&mut rng);
                        Some(if spec.kind == ColumnKind::Count { v.round() } else { v })
                    })
                    .collect()
            }
        };
        let z = |v: f64| {
            let (lo, hi) = spec.range.unwrap_or_else(|| fallback_range(spec));
            (v - (lo + hi) / 2.0) / ((hi - lo).max(1e-12) / 4.5)
        };
        let weight = match spec.name.as_str() {
            "Yield No. 1's" => 1.4,
            "Specific Gravity" => 0.9,
            "Hollow Heart" => -0.8,
            _ => 0.0,
        };
        for (l, v) in latent.iter_mut().zip(&col) {
            *l += weight * z(v.unwrap());
            if spec.name == "Fry Color Stem" {
                *l += 0.7 * z(v.unwrap()).powi(2);
            }
        }
        if spec.kind != ColumnKind::Categorical && spec.expected_na > 0 {
            let holes = ((spec.expected_na as f64) * n_rows as f64 / APPENDIX_ROWS as f64).round() as usize;
            let score: Vec<f64> = propensity.iter().map(|p| p + 0.6 * rng.random::<f64>()).collect();
            let mut idx: Vec<usize> = (0..n_rows).collect();
            idx.sort_by(|&a, &b| score[b].total_cmp(&score[a]).then(a.cmp(&b)));
            for &i in idx.iter().take(holes.min(n_rows)) {
                col[i] = None;
            }
        }
        let mut spec = spec.clone();
        spec.expected_na = col.iter().filter(|v| v.is_none()).count();
        specs.push(spec);
        columns.push(col);
    }
    // Roughly 12% positives.
    let labels = latent
        .iter()
        .map(|&l| {
            let p = 1.0 / (1.0 + (-(l - 3.9)).exp());
            u8::from(rng.random_bool(p.clamp(0.0, 1.0)))
        })
        .collect();
    Dataset::new(specs, columns, Some(labels), keys)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::na_profile;

    #[test]
    fn schema_feature_counts_around_the_na_threshold() {
        let s = appendix_schema();
        let kept = |rows: f64| {
            s.columns
                .iter()
                .filter(|c| c.kind != ColumnKind::Response)
                .filter(|c| (c.expected_na as f64 * rows / APPENDIX_ROWS as f64).round() <= 400.0)
                .count()
        };
        // Rescaled to 885 rows the fry colors survive: 41 features.
        assert_eq!(kept(885.0), 41);
        assert_eq!(kept(APPENDIX_ROWS as f64), 39);
    }

    #[test]
    fn synthetic_reference_reproduces_declared_na_counts() {
        let s = appendix_schema();
        let ds = synthetic_trials(&s, APPENDIX_ROWS, 1).unwrap();
        let p = na_profile(&ds);
        assert_eq!(p.count("Maturity"), 639);
        assert_eq!(p.count("Fry Color Stem"), 410);
        assert_eq!(p.count(TRIAL_REGION), 0);
        let pos = ds.labels().unwrap().iter().filter(|&&l| l == 1).count();
        assert!(pos > 30 && pos < 200, "{pos} positives");
    }
}
