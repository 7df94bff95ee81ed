//! Confusion algebra and evaluation metrics.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Binary confusion counts with class 1 as the positive class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub const fn new(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        ConfusionCounts { tp, fp, fn_, tn }
    }

    pub fn n(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn positives(&self) -> u64 {
        self.tp + self.fn_
    }

    pub fn negatives(&self) -> u64 {
        self.tn + self.fp
    }
}

pub fn confusion(y_true: &[u8], y_pred: &[u8]) -> Result<ConfusionCounts> {
    if y_true.len() != y_pred.len() {
        return Err(Error::Shape(format!(
            "{} true labels vs {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    let mut c = ConfusionCounts::default();
    for (&t, &p) in y_true.iter().zip(y_pred) {
        match (t, p) {
            (1, 1) => c.tp += 1,
            (0, 1) => c.fp += 1,
            (1, 0) => c.fn_ += 1,
            (0, 0) => c.tn += 1,
            _ => return Err(Error::Domain(format!("labels must be 0 or 1, got ({t}, {p})"))),
        }
    }
    Ok(c)
}

/// A metric value plus whether it hit a degenerate (zero-denominator) case.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Flagged {
    pub value: f64,
    pub degenerate: bool,
}

pub fn mcc_flagged(c: &ConfusionCounts) -> Flagged {
    let (tp, fp, fn_, tn) = (c.tp as f64, c.fp as f64, c.fn_ as f64, c.tn as f64);
    let factors = [tp + fp, tp + fn_, tn + fp, tn + fn_];
    if factors.iter().any(|&f| f == 0.0) {
        return Flagged {
            value: 0.0,
            degenerate: true,
        };
    }
    let denom = (factors[0] * factors[1]).sqrt() * (factors[2] * factors[3]).sqrt();
    Flagged {
        value: (tp * tn - fp * fn_) / denom,
        degenerate: false,
    }
}

/// Matthews correlation coefficient; 0 when any marginal is empty.
pub fn mcc(c: &ConfusionCounts) -> f64 {
    mcc_flagged(c).value
}

pub fn accuracy(c: &ConfusionCounts) -> f64 {
    let n = c.n();
    if n == 0 {
        return 0.0;
    }
    (c.tp + c.tn) as f64 / n as f64
}

pub fn f1_flagged(c: &ConfusionCounts) -> Flagged {
    if c.tp + c.fp == 0 || c.tp + c.fn_ == 0 {
        return Flagged {
            value: 0.0,
            degenerate: true,
        };
    }
    let precision = c.tp as f64 / (c.tp + c.fp) as f64;
    let recall = c.tp as f64 / (c.tp + c.fn_) as f64;
    let value = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Flagged {
        value,
        degenerate: false,
    }
}

pub fn f1(c: &ConfusionCounts) -> f64 {
    f1_flagged(c).value
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    #[default]
    Mcc,
    Accuracy,
    F1,
}

impl Metric {
    pub fn eval(self, c: &ConfusionCounts) -> Flagged {
        match self {
            Metric::Mcc => mcc_flagged(c),
            Metric::F1 => f1_flagged(c),
            Metric::Accuracy => Flagged {
                value: accuracy(c),
                degenerate: c.n() == 0,
            },
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mcc" => Ok(Metric::Mcc),
            "accuracy" => Ok(Metric::Accuracy),
            "f1" => Ok(Metric::F1),
            _ => Err(Error::Domain(format!("unknown metric '{s}'"))),
        }
    }
}

/// Area under the ROC curve: P(score⁺ > score⁻) + ½ P(tie), via mid-ranks.
pub fn auc_roc(y_true: &[u8], scores: &[f64]) -> Result<f64> {
    if y_true.len() != scores.len() {
        return Err(Error::Shape(format!(
            "{} labels vs {} scores",
            y_true.len(),
            scores.len()
        )));
    }
    let n_pos = y_true.iter().filter(|&&y| y == 1).count();
    let n_neg = y_true.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric("AUC needs both classes present".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their mean
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            if y_true[k] == 1 {
                rank_sum_pos += mid;
            }
        }
        i = j + 1;
    }
    let np = n_pos as f64;
    Ok((rank_sum_pos - np * (np + 1.0) / 2.0) / (np * n_neg as f64))
}

/// Linear-interpolation quantile of sorted data.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let w = pos - lo as f64;
    sorted[lo] * (1.0 - w) + sorted[hi] * w
}

const MAX_REDRAWS: u64 = 10;

/// Percentile bootstrap interval of `metric` over `b` row-resampled replicates.
pub fn bootstrap_ci(
    y_true: &[u8],
    y_pred: &[u8],
    metric: Metric,
    b: usize,
    level: f64,
    seed: u64,
) -> Result<(f64, f64)> {
    let n = y_true.len();
    if n < 10 {
        return Err(Error::Domain(format!("bootstrap needs at least 10 rows, got {n}")));
    }
    if y_pred.len() != n {
        return Err(Error::Shape("prediction length differs".into()));
    }
    if b == 0 || !(level > 0.0 && level < 1.0) {
        return Err(Error::Domain("bootstrap needs B > 0 and level in (0, 1)".into()));
    }
    let mut values = (0..b)
        .into_par_iter()
        .map(|r| {
            let rep_seed = seed::derive(seed, "bootstrap", r as u64);
            for attempt in 0..MAX_REDRAWS {
                let mut rng = seed::derived_rng(rep_seed, "draw", attempt);
                let mut c = ConfusionCounts::default();
                for _ in 0..n {
                    let i = rng.random_range(0..n);
                    match (y_true[i], y_pred[i]) {
                        (1, 1) => c.tp += 1,
                        (0, 1) => c.fp += 1,
                        (1, 0) => c.fn_ += 1,
                        _ => c.tn += 1,
                    }
                }
                let m = metric.eval(&c);
                if !m.degenerate {
                    return Ok(m.value);
                }
            }
            Err(Error::UndefinedMetric(format!(
                "bootstrap replicate {r} stayed degenerate after {MAX_REDRAWS} redraws"
            )))
        })
        .collect::<Result<Vec<f64>>>()?;
    values.sort_by(f64::total_cmp);
    let alpha = (1.0 - level) / 2.0;
    Ok((quantile_sorted(&values, alpha), quantile_sorted(&values, 1.0 - alpha)))
}

/// Sample standard deviation over √n.
pub fn se_over_replicates(values: &[f64]) -> Result<f64> {
    let n = values.len();
    if n < 2 {
        return Err(Error::Domain(format!("standard error needs at least 2 values, got {n}")));
    }
    let nf = n as f64;
    let mean = values.iter().sum::<f64>() / nf;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (nf - 1.0);
    Ok((var / nf).sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub f1: f64,
    pub mcc: f64,
    pub auc: f64,
    /// Percentile bootstrap interval; absent when every resample is degenerate or n < 10.
    pub mcc_ci: Option<(f64, f64)>,
    pub n: u64,
    pub confusion: ConfusionCounts,
    pub mcc_degenerate: bool,
    pub f1_degenerate: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub level: f64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            replicates: 1000,
            level: 0.95,
        }
    }
}

pub fn evaluate(y_true: &[u8], y_pred: &[u8], scores: &[f64], boot: BootstrapConfig, seed: u64) -> Result<EvalReport> {
    let c = confusion(y_true, y_pred)?;
    let m = mcc_flagged(&c);
    let f = f1_flagged(&c);
    Ok(EvalReport {
        accuracy: accuracy(&c),
        f1: f.value,
        mcc: m.value,
        auc: auc_roc(y_true, scores)?,
        mcc_ci: match bootstrap_ci(y_true, y_pred, Metric::Mcc, boot.replicates, boot.level, seed) {
            Ok(ci) => Some(ci),
            Err(Error::UndefinedMetric(_)) | Err(Error::Domain(_)) => None,
            Err(e) => return Err(e),
        },
        n: c.n(),
        confusion: c,
        mcc_degenerate: m.degenerate,
        f1_degenerate: f.degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn confusion_examples() {
        assert_eq!(confusion(&[1, 1, 0, 0], &[1, 1, 0, 0]).unwrap(), ConfusionCounts::new(2, 0, 0, 2));
        assert_eq!(confusion(&[1, 0], &[0, 0]).unwrap(), ConfusionCounts::new(0, 0, 1, 1));
        assert!(matches!(confusion(&[1], &[1, 0]), Err(Error::Shape(_))));
    }

    #[test]
    fn mcc_anchors() {
        assert!((mcc(&ConfusionCounts::new(136, 10, 7, 8)) - 0.428767).abs() < 5e-6);
        assert!((mcc(&ConfusionCounts::new(142, 4, 8, 7)) - 0.506071).abs() < 5e-6);
        assert_eq!(mcc(&ConfusionCounts::new(5, 0, 0, 9)), 1.0);
        let all_neg = mcc_flagged(&ConfusionCounts::new(0, 0, 3, 7));
        assert_eq!(all_neg.value, 0.0);
        assert!(all_neg.degenerate);
    }

    #[test]
    fn accuracy_and_f1_from_counts() {
        let c = ConfusionCounts::new(136, 10, 7, 8);
        assert!((accuracy(&c) - 144.0 / 161.0).abs() < 1e-15);
        let (p, r) = (136.0 / 146.0, 136.0 / 143.0);
        assert!((f1(&c) - 2.0 * p * r / (p + r)).abs() < 1e-15);
        assert!((f1(&c) - 0.9412).abs() < 1e-4);
        let perfect = ConfusionCounts::new(3, 0, 0, 4);
        assert_eq!((accuracy(&perfect), f1(&perfect)), (1.0, 1.0));
        assert!(f1_flagged(&ConfusionCounts::new(0, 0, 2, 2)).degenerate);
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc_roc(&[0, 0, 1, 1], &[0.1, 0.2, 0.3, 0.4]).unwrap(), 1.0);
        assert_eq!(auc_roc(&[0, 1, 0, 1], &[0.5; 4]).unwrap(), 0.5);
        assert_eq!(auc_roc(&[1, 0, 1, 0], &[0.9, 0.8, 0.7, 0.1]).unwrap(), 0.75);
        assert!(matches!(auc_roc(&[1, 1], &[0.2, 0.3]), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn bootstrap_perfect_and_deterministic() {
        let y: Vec<u8> = (0..40).map(|i| u8::from(i % 3 == 0)).collect();
        assert_eq!(bootstrap_ci(&y, &y, Metric::Mcc, 200, 0.95, 4).unwrap(), (1.0, 1.0));
        let mut p = y.clone();
        p[0] ^= 1;
        p[5] ^= 1;
        let a = bootstrap_ci(&y, &p, Metric::Mcc, 300, 0.95, 11).unwrap();
        assert_eq!(a, bootstrap_ci(&y, &p, Metric::Mcc, 300, 0.95, 11).unwrap());
        assert!(a.0 <= a.1);
        assert!(bootstrap_ci(&y[..5], &p[..5], Metric::Mcc, 10, 0.95, 1).is_err());
    }

    #[test]
    fn se_examples() {
        assert_eq!(se_over_replicates(&[0.3; 5]).unwrap(), 0.0);
        assert!((se_over_replicates(&[0.0, 1.0]).unwrap() - 0.5).abs() < 1e-15);
        assert!(se_over_replicates(&[1.0]).is_err());
    }
}
