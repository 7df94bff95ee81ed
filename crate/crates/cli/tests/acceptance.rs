//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any criterion fails.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use clonesel::classifiers::hgb::{hgb_best_split, HgbModel, HgbParams};
use clonesel::classifiers::knn::{KnnModel, KnnParams};
use clonesel::classifiers::mlp::{init_params, loss_and_grad, Layout};
use clonesel::classifiers::svm::{kkt_violation, smo_solve};
use clonesel::classifiers::tree::{best_split, Node, Tree, TreeParams};
use clonesel::classifiers::{fit, Family, ModelSpec};
use clonesel::data::{
    appendix_schema, synthetic_trials, ColumnKind, ColumnSpec, Dataset, Planting, RowKey, APPENDIX_ROWS, TRIAL_REGION,
};
use clonesel::featselect::{forward_select, forward_select_fractions, SelectConfig, FRACTIONS};
use clonesel::impute::{mice, MiceConfig};
use clonesel::linalg::Matrix;
use clonesel::metrics::{confusion, evaluate, mcc, BootstrapConfig, ConfusionCounts};
use clonesel::preprocess::{Design, FeatureGroup};
use clonesel::report::{
    render_confusion, write_selection_table, Normalize, RunConfig, SelectionRow, SimulationConfig, SELECTION_HEADER,
};
use clonesel::seed;
use clonesel::simstudy::{run_study, sample_column, ColumnFamily, Reference, ScenarioSpec, StudyConfig, SCENARIOS};
use rand::Rng as _;
use rand_distr::{Distribution, Normal};

type Outcome = Result<String, String>;

struct Criterion {
    id: &'static str,
    name: &'static str,
    budget: Option<Duration>,
    run: fn() -> Outcome,
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// (tp, fp, fn, tn, tabulated mcc) of the reference simulation table
const SIMULATION_TABLE: [(u64, u64, u64, u64, f64); 20] = [
    (136, 10, 7, 8, 0.428767),
    (143, 3, 10, 5, 0.418387),
    (142, 4, 8, 7, 0.506071),
    (132, 14, 6, 9, 0.418739),
    (137, 9, 11, 4, 0.192024),
    (139, 7, 10, 5, 0.346785),
    (141, 5, 10, 5, 0.41474),
    (134, 12, 8, 7, 0.322613),
    (137, 9, 11, 4, 0.202736),
    (140, 6, 10, 5, 0.357357),
    (142, 4, 10, 5, 0.424167),
    (133, 13, 8, 7, 0.328813),
    (137, 9, 11, 4, 0.202951),
    (139, 7, 10, 5, 0.357473),
    (141, 5, 10, 5, 0.414572),
    (133, 13, 8, 7, 0.328597),
    (137, 9, 11, 4, 0.209727),
    (140, 6, 10, 5, 0.35311),
    (142, 4, 10, 5, 0.417948),
    (133, 13, 8, 7, 0.32357),
];

fn c1_metric_reproduction() -> Outcome {
    let mut misses = Vec::new();
    for (i, &(tp, fp, fn_, tn, want)) in SIMULATION_TABLE.iter().enumerate() {
        let got = mcc(&ConfusionCounts::new(tp, fp, fn_, tn));
        if (got - want).abs() > 5e-6 {
            misses.push(format!("row {}: {got:.6} vs {want}", i + 1));
        }
    }
    let hit = SIMULATION_TABLE.len() - misses.len();
    let mut detail = format!("{hit}/20 rows within 5e-6");
    if !misses.is_empty() {
        detail.push_str(&format!("; first miss {}", misses[0]));
    }
    check(misses.is_empty(), detail)
}

fn c2_confusion_rates() -> Outcome {
    // (tn, fp, fn, tp) chosen so the row rates round to the target rates.
    let cases: [((u64, u64, u64, u64), (f64, f64)); 5] = [
        ((47, 3, 2, 3), (0.94, 0.60)),
        ((24, 1, 2, 5), (0.96, 0.71)),
        ((19, 1, 1, 2), (0.95, 0.67)),
        ((24, 1, 7, 11), (0.96, 0.61)),
        ((24, 1, 0, 5), (0.96, 1.00)),
    ];
    let mut worst: f64 = 0.0;
    for ((tn, fp, fn_, tp), (tnr, tpr)) in cases {
        let t = render_confusion(&ConfusionCounts::new(tp, fp, fn_, tn), Normalize::RowProportions);
        let got_tnr = t.cells[0][0].ok_or("empty true-0 row")?;
        let got_tpr = t.cells[1][1].ok_or("empty true-1 row")?;
        worst = worst.max((got_tnr - tnr).abs()).max((got_tpr - tpr).abs());
        let sums = [t.cells[0][0].unwrap() + t.cells[0][1].unwrap(), t.cells[1][0].unwrap() + t.cells[1][1].unwrap()];
        if sums.iter().any(|s| (s - 1.0).abs() > 1e-12) {
            return Err(format!("rows do not sum to one: {sums:?}"));
        }
    }
    check(worst <= 0.005, format!("5 rate pairs, worst deviation {worst:.4}"))
}

fn xor_points(n: usize, seed_value: u64) -> (Vec<Vec<f64>>, Vec<u8>) {
    let mut rng = seed::rng(seed_value);
    let noise = Normal::new(0.0, 0.25).unwrap();
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for i in 0..n {
        let (a, b) = ((i % 2) as f64, ((i / 2) % 2) as f64);
        rows.push(vec![2.0 * a - 1.0 + noise.sample(&mut rng), 2.0 * b - 1.0 + noise.sample(&mut rng)]);
        y.push(u8::from(a != b));
    }
    (rows, y)
}

/// Upper bound on the accuracy of any line in the plane. Every linear dichotomy
/// is realized by a line through two data points, and the points lying on that
/// line are all counted as correct.
fn best_linear_accuracy(rows: &[Vec<f64>], y: &[u8]) -> f64 {
    let n = rows.len();
    let mut best = 0usize;
    for i in 0..n {
        for j in i + 1..n {
            let (dx, dy) = (rows[j][0] - rows[i][0], rows[j][1] - rows[i][1]);
            let (mut pos, mut neg, mut on) = ([0usize; 2], [0usize; 2], [0usize; 2]);
            for (r, &c) in rows.iter().zip(y) {
                let s = dx * (r[1] - rows[i][1]) - dy * (r[0] - rows[i][0]);
                let bucket = if s.abs() < 1e-12 {
                    &mut on
                } else if s > 0.0 {
                    &mut pos
                } else {
                    &mut neg
                };
                bucket[c as usize] += 1;
            }
            let free = on[0] + on[1];
            let a = pos[1] + neg[0] + free;
            let b = pos[0] + neg[1] + free;
            best = best.max(a.max(b));
        }
    }
    best as f64 / n as f64
}

fn c3a_xor() -> Outcome {
    let (rows, y) = xor_points(400, 21);
    let oracle = best_linear_accuracy(&rows, &y);
    let x = Matrix::from_rows(&rows).unwrap();
    let train: Vec<usize> = (0..300).collect();
    let test: Vec<usize> = (300..400).collect();
    let (xtr, xte) = (x.select_rows(&train), x.select_rows(&test));
    let ytr: Vec<u8> = train.iter().map(|&i| y[i]).collect();
    let yte: Vec<u8> = test.iter().map(|&i| y[i]).collect();
    let mut scores = BTreeMap::new();
    for f in [Family::SvmRbf, Family::Hgbc, Family::LogisticRegression] {
        let m = fit(&ModelSpec::new(f).with_seed(5), &xtr, &ytr).map_err(|e| format!("{f}: {e}"))?;
        let p = m.predict(&xte).map_err(|e| e.to_string())?;
        scores.insert(f.as_str(), mcc(&confusion(&yte, &p).unwrap()));
    }
    let ok = scores["svm_rbf"] >= 0.9 && scores["hgbc"] >= 0.9 && scores["logistic_regression"] <= 0.2 && oracle <= 0.75;
    check(
        ok,
        format!(
            "svm {:.3}, hgbc {:.3}, logistic {:.3}, best linear accuracy {oracle:.4}",
            scores["svm_rbf"], scores["hgbc"], scores["logistic_regression"]
        ),
    )
}

fn c3b_mlp_gradient() -> Outcome {
    let mut rng = seed::rng(8);
    let rows: Vec<Vec<f64>> = (0..10).map(|_| (0..5).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let x = Matrix::from_rows(&rows).unwrap();
    let y: Vec<u8> = (0..10).map(|i| u8::from(i % 3 == 0)).collect();
    let layout = Layout::new(5, &[4, 3]);
    let theta = init_params(&layout, 3);
    let l2 = 1e-2;
    let (_, grad) = loss_and_grad(&layout, &theta, &x, &y, l2);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for k in 0..theta.len() {
        let (mut up, mut down) = (theta.clone(), theta.clone());
        up[k] += h;
        down[k] -= h;
        let numeric = (loss_and_grad(&layout, &up, &x, &y, l2).0 - loss_and_grad(&layout, &down, &x, &y, l2).0) / (2.0 * h);
        let rel = (grad[k] - numeric).abs() / grad[k].abs().max(numeric.abs()).max(1e-4);
        worst = worst.max(rel);
    }
    check(worst < 1e-5, format!("{} parameters, max relative error {worst:.2e}", theta.len()))
}

fn c3c_smo() -> Outcome {
    let mut worst_kkt: f64 = 0.0;
    let mut worst_eq: f64 = 0.0;
    for p in 0..20u64 {
        let mut rng = seed::rng(seed::derive(17, "smo", p));
        let pts: Vec<[f64; 2]> = (0..30).map(|_| [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)]).collect();
        let y: Vec<f64> = pts.iter().map(|q| if q[0] * q[1] + 0.3 * rng.random_range(-1.0..1.0) > 0.0 { 1.0 } else { -1.0 }).collect();
        let c = [0.5, 1.0, 10.0][p as usize % 3];
        let mut k = Matrix::zeros(30, 30);
        for i in 0..30 {
            for j in 0..30 {
                let d = (pts[i][0] - pts[j][0]).powi(2) + (pts[i][1] - pts[j][1]).powi(2);
                k[(i, j)] = (-0.5 * d).exp();
            }
        }
        let (alpha, b) = smo_solve(&k, &y, c, 1e-3).map_err(|e| e.to_string())?;
        if alpha.iter().any(|&a| !(0.0..=c).contains(&a)) {
            return Err(format!("problem {p}: alpha outside [0, {c}]"));
        }
        worst_eq = worst_eq.max(alpha.iter().zip(&y).map(|(a, y)| a * y).sum::<f64>().abs());
        worst_kkt = worst_kkt.max(kkt_violation(&k, &y, &alpha, b, c));
    }
    let (alpha, b) = smo_solve(&Matrix::identity(2), &[1.0, -1.0], 10.0, 1e-3).map_err(|e| e.to_string())?;
    let analytic = alpha == vec![1.0, 1.0] && b == 0.0;
    check(
        worst_kkt <= 1e-3 && worst_eq <= 1e-12 && analytic,
        format!("max KKT violation {worst_kkt:.1e}, max |sum alpha*y| {worst_eq:.1e}, two-point case alpha={alpha:?} b={b}"),
    )
}

fn c3d_oracles() -> Outcome {
    // knn against a full sort of all distances
    let mut rng = seed::rng(31);
    let rows: Vec<Vec<f64>> = (0..50).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let y: Vec<u8> = (0..50).map(|_| u8::from(rng.random_bool(0.4))).collect();
    let x = Matrix::from_rows(&rows).unwrap();
    let mut knn_queries = 0;
    for k in [1usize, 3, 5] {
        let m = KnnModel::fit(&x, &y, &KnnParams { k });
        for _ in 0..40 {
            let q: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut all: Vec<(f64, usize)> =
                rows.iter().enumerate().map(|(i, r)| (r.iter().zip(&q).map(|(a, b)| (a - b).powi(2)).sum(), i)).collect();
            all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            let want: Vec<usize> = all[..k].iter().map(|p| p.1).collect();
            if m.neighbors(&q) != want {
                return Err(format!("knn k={k} disagrees with the exhaustive scan"));
            }
            knn_queries += 1;
        }
    }

    // tree root split against enumeration of every (feature, midpoint) pair
    let mut tree_cases = 0;
    for case in 0..200u64 {
        let mut rng = seed::rng(seed::derive(32, "tree", case));
        let n = rng.random_range(2..=8usize);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..3).map(|_| rng.random_range(0..5) as f64).collect()).collect();
        let y: Vec<u8> = (0..n).map(|_| u8::from(rng.random_bool(0.5))).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let impurity = |idx: &[usize]| {
            if idx.is_empty() {
                return 0.0;
            }
            let p = idx.iter().filter(|&&i| y[i] == 1).count() as f64 / idx.len() as f64;
            idx.len() as f64 * (1.0 - p * p - (1.0 - p) * (1.0 - p))
        };
        let all: Vec<usize> = (0..n).collect();
        let parent = impurity(&all);
        let mut gains = Vec::new();
        for f in 0..3 {
            let mut vals: Vec<f64> = rows.iter().map(|r| r[f]).collect();
            vals.sort_by(f64::total_cmp);
            vals.dedup();
            for w in vals.windows(2) {
                let t = 0.5 * (w[0] + w[1]);
                let (l, r): (Vec<usize>, Vec<usize>) = all.iter().partition(|&&i| rows[i][f] <= t);
                gains.push((parent - impurity(&l) - impurity(&r), f, t));
            }
        }
        let top = gains.iter().map(|g| g.0).fold(0.0f64, f64::max);
        let got = best_split(&x, &y, &vec![1.0; n], &all, &[0, 1, 2], 1);
        match got {
            None if top <= 1e-12 => {}
            None => return Err(format!("tree case {case}: no split but enumeration gains {top}")),
            Some(s) => {
                let first = gains.iter().find(|g| g.0 > top - 1e-9).unwrap();
                if (s.gain - top).abs() > 1e-9 || s.feature != first.1 || s.threshold != first.2 {
                    return Err(format!("tree case {case}: {s:?} vs enumeration {first:?}"));
                }
                let fitted = Tree::fit(&x, &y, &vec![1.0; n], &TreeParams { max_depth: Some(1), ..Default::default() }, &mut seed::rng(0));
                match fitted.nodes[0] {
                    Node::Split { feature, threshold, .. } if feature == s.feature && threshold == s.threshold => {}
                    ref other => return Err(format!("tree case {case}: fitted root {other:?}")),
                }
            }
        }
        tree_cases += 1;
    }

    let hgb = hgb_best_split(&[-1.0, -1.0, 1.0, 1.0], &[1.0; 4], 0.0);
    let hgb_ok = matches!(hgb, Some((2, g)) if (g - 4.0).abs() < 1e-12);
    check(
        hgb_ok,
        format!("{knn_queries} knn queries and {tree_cases} tree fixtures agree; histogram split {hgb:?}"),
    )
}

fn c3e_hgbc_loss() -> Outcome {
    let mut rng = seed::rng(41);
    let noise = Normal::new(0.0, 0.6).unwrap();
    let rows: Vec<Vec<f64>> = (0..500).map(|_| (0..4).map(|_| noise.sample(&mut rng)).collect()).collect();
    let y: Vec<u8> = rows.iter().map(|r| u8::from(r[0] * r[1] + 0.3 * r[2] + 0.3 * noise.sample(&mut rng) > 0.0)).collect();
    let p = HgbParams {
        learning_rate: 0.1,
        max_iter: 50,
        max_depth: None,
        l2: 0.0,
        max_bins: 255,
        max_leaf_nodes: 31,
        min_samples_leaf: 20,
    };
    let m = HgbModel::fit(&Matrix::from_rows(&rows).unwrap(), &y, &p);
    let rises = m.train_loss.windows(2).filter(|w| w[1] > w[0]).count();
    check(
        rises == 0 && m.train_loss.len() >= 50,
        format!(
            "{} recorded losses, {:.4} -> {:.4}, {rises} increases",
            m.train_loss.len(),
            m.train_loss.first().copied().unwrap_or(f64::NAN),
            m.train_loss.last().copied().unwrap_or(f64::NAN)
        ),
    )
}

fn keys(n: usize) -> Vec<RowKey> {
    (0..n)
        .map(|i| RowKey { year: 2018, region: "HER".into(), planting: Planting::Late, clone_id: format!("A{i}") })
        .collect()
}

fn c4_mice() -> Outcome {
    let n = 500;
    let (mut wins, mut preserved) = (0, 0);
    for trial in 0..100u64 {
        let mut rng = seed::rng(seed::derive(51, "mice", trial));
        let z = Normal::new(0.0, 1.0).unwrap();
        let truth: Vec<[f64; 2]> = (0..n)
            .map(|_| {
                let a = z.sample(&mut rng);
                [a, 0.9 * a + (1.0f64 - 0.81).sqrt() * z.sample(&mut rng)]
            })
            .collect();
        let holes: Vec<[bool; 2]> = (0..n).map(|_| [rng.random_bool(0.2), rng.random_bool(0.2)]).collect();
        let cols: Vec<Vec<Option<f64>>> =
            (0..2).map(|j| (0..n).map(|i| (!holes[i][j]).then_some(truth[i][j])).collect()).collect();
        let specs = vec![
            ColumnSpec::numeric("a", ColumnKind::Mass, "", None, 0),
            ColumnSpec::numeric("b", ColumnKind::Mass, "", None, 0),
        ];
        let ds = Dataset::new(specs, cols.clone(), None, keys(n)).map_err(|e| e.to_string())?;
        let cfg = MiceConfig { seed: trial, ..MiceConfig::default() };
        let (imp, _) = mice(&ds, &ds, &cfg).map_err(|e| e.to_string())?;
        let (mut se_mice, mut se_mean, mut holes_n) = (0.0, 0.0, 0);
        let mut same = true;
        for (j, col) in cols.iter().enumerate() {
            let observed: Vec<f64> = col.iter().flatten().copied().collect();
            let mean = observed.iter().sum::<f64>() / observed.len() as f64;
            for i in 0..n {
                let v = imp.get(i, j).ok_or("imputed cell missing")?;
                match col[i] {
                    Some(o) => same &= v.to_bits() == o.to_bits(),
                    None => {
                        se_mice += (v - truth[i][j]).powi(2);
                        se_mean += (mean - truth[i][j]).powi(2);
                        holes_n += 1;
                    }
                }
            }
        }
        if holes_n > 0 && se_mice < se_mean {
            wins += 1;
        }
        if same {
            preserved += 1;
        }
    }
    check(wins >= 95 && preserved == 100, format!("MICE beats the mean in {wins}/100 trials; observed cells intact in {preserved}/100"))
}

fn c5_generators() -> Outcome {
    let n = 100_000;
    let stats = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        (m, v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64)
    };
    let draw = |kind, fam: ColumnFamily, s| sample_column(kind, &fam, n, s).map_err(|e| e.to_string());
    let (gm, gv) = stats(&draw(ColumnKind::Mass, ColumnFamily::Gamma { shape: 2.0, scale: 2.0 }, 1)?);
    let (bm, _) = stats(&draw(ColumnKind::Rating, ColumnFamily::Beta { a: 2.0, b: 5.0, min: 0.0, max: 1.0 }, 2)?);
    let (pm, pv) = stats(&draw(ColumnKind::Count, ColumnFamily::Poisson { mean: 6.5 }, 3)?);
    let u = draw(ColumnKind::Rating, ColumnFamily::Uniform { min: 1.0, max: 9.0 }, 4)?;
    let inside = u.iter().all(|v| (1.0..=9.0).contains(v));
    let ok = (gm - 4.0).abs() <= 0.1
        && (gv - 8.0).abs() <= 0.4
        && (bm - 2.0 / 7.0).abs() <= 0.01
        && (pv - pm).abs() <= 0.05 * pm
        && inside;
    check(
        ok,
        format!("gamma mean {gm:.3} var {gv:.3}; beta mean {bm:.4}; poisson mean {pm:.3} var {pv:.3}; uniform in bounds {inside}"),
    )
}

fn c6_simulation() -> Outcome {
    let ds = synthetic_trials(&appendix_schema(), APPENDIX_ROWS, 0).map_err(|e| e.to_string())?;
    let reference = Reference::from_dataset(&ds, TRIAL_REGION).map_err(|e| e.to_string())?;
    let scenario = |name: &str, reps: usize| {
        let mut s = ScenarioSpec::named(name).unwrap();
        s.n_rows = 200;
        s.n_replicates = reps;
        s
    };
    let main: Vec<ScenarioSpec> = SCENARIOS.iter().map(|n| scenario(n, 20)).collect();
    let cfg = StudyConfig {
        families: vec![Family::SvmRbf, Family::Hgbc, Family::LogisticRegression],
        ..StudyConfig::default()
    };
    let res = run_study(&main, &reference, &cfg).map_err(|e| format!("{e:#}"))?;
    let row = |scn: &str, f: Family| res.rows.iter().find(|r| r.scenario == scn && r.model == f).unwrap();
    let mut lines = Vec::new();
    let mut ok = true;
    for scn in SCENARIOS {
        let (s, h, l) = (row(scn, Family::SvmRbf), row(scn, Family::Hgbc), row(scn, Family::LogisticRegression));
        ok &= s.mcc > l.mcc && h.mcc > l.mcc;
        lines.push(format!(
            "{scn}: mcc svm {:.3} hgbc {:.3} lr {:.3} (auc {:.3} {:.3} {:.3})",
            s.mcc, h.mcc, l.mcc, s.auc, h.auc, l.auc
        ));
    }
    let se_positive = res.rows.iter().all(|r| r.se.is_some_and(|v| v > 0.0));
    ok &= se_positive;

    let cheap = StudyConfig { families: vec![Family::SvmRbf, Family::LogisticRegression], ..StudyConfig::default() };
    let big = run_study(&[scenario(SCENARIOS[0], 80)], &reference, &cheap).map_err(|e| format!("{e:#}"))?;
    for r in &big.rows {
        let small = res.rows.iter().find(|s| s.scenario == r.scenario && s.model == r.model).unwrap();
        let ratio = small.se.unwrap_or(f64::NAN) / r.se.unwrap_or(f64::NAN);
        ok &= (1.3..=2.8).contains(&ratio);
        lines.push(format!("{} se ratio 20->80 reps {ratio:.2}", r.model.as_str()));
    }
    check(ok, lines.join("; "))
}

fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_clonesel"))
}

fn small_config(dir: &Path) -> PathBuf {
    let mut scn = ScenarioSpec::named("gamma_beta").unwrap();
    scn.n_rows = 150;
    scn.n_replicates = 3;
    let cfg = RunConfig {
        seed: 13,
        mice_iterations: 3,
        bootstrap: BootstrapConfig { replicates: 50, level: 0.95 },
        families: vec![Family::LogisticRegression, Family::Knn, Family::DecisionTree],
        fractions: vec![0.1, 0.3],
        selection_families: vec![Family::Knn],
        simulation: SimulationConfig {
            scenarios: vec![scn],
            families: vec![Family::LogisticRegression, Family::Knn],
            ..SimulationConfig::default()
        },
        ..RunConfig::default()
    };
    let path = dir.join("config.json");
    std::fs::write(&path, cfg.to_json().unwrap()).unwrap();
    path
}

fn files_under(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn c7_determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = small_config(tmp.path());
    let runs: Vec<(PathBuf, &str)> = vec![(tmp.path().join("a"), "1"), (tmp.path().join("b"), "2")];
    for (dir, threads) in &runs {
        std::fs::create_dir_all(dir).unwrap();
        for cmd in ["prepare", "impute", "bench", "select", "simulate", "report"] {
            let out = cli()
                .current_dir(dir)
                .args([cmd, "--config", config.to_str().unwrap(), "--out", "out", "--threads", threads])
                .output()
                .map_err(|e| e.to_string())?;
            if !out.status.success() {
                return Err(format!("{cmd} --threads {threads} failed: {}", String::from_utf8_lossy(&out.stderr).trim()));
            }
        }
    }
    let (a, b) = (files_under(&runs[0].0.join("out")), files_under(&runs[1].0.join("out")));
    let differing: Vec<String> =
        a.iter().filter(|(k, v)| b.get(*k) != Some(*v)).map(|(k, _)| k.display().to_string()).collect();
    let same_set = a.keys().eq(b.keys());
    let kinds = a.keys().filter(|k| k.extension().is_some_and(|e| e == "csv" || e == "json")).count();
    check(
        same_set && differing.is_empty() && kinds > 0,
        format!("6 subcommands, {} files ({kinds} csv/json), differing: {differing:?}", a.len()),
    )
}

fn selection_design(n: usize, d: usize, planted: Option<usize>, seed_value: u64) -> Design {
    let mut rng = seed::rng(seed_value);
    let y: Vec<u8> = (0..n).map(|i| u8::from(i % 4 == 0)).collect();
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..d).map(|j| if Some(j) == planted { y[i] as f64 } else { rng.random_range(-1.0..1.0) }).collect())
        .collect();
    Design {
        x: Matrix::from_rows(&rows).unwrap(),
        names: (0..d).map(|j| format!("f{j}")).collect(),
        groups: (0..d).map(|j| FeatureGroup { name: format!("f{j}"), columns: vec![j] }).collect(),
        y,
        keys: keys(n),
    }
}

fn c8_forward_selection() -> Outcome {
    let spec = ModelSpec::new(Family::DecisionTree);
    let mut first = 0;
    for s in 0..100u64 {
        let planted = (s % 10) as usize;
        let d = selection_design(80, 10, Some(planted), seed::derive(61, "planted", s));
        let cfg = SelectConfig { seed: s, ..SelectConfig::default() };
        let t = forward_select(&spec, &d, 0.1, &cfg).map_err(|e| e.to_string())?;
        if t.groups.first() == Some(&planted) {
            first += 1;
        }
    }

    let knn = ModelSpec::new(Family::Knn).with("k", 3i64);
    let cfg = SelectConfig { min_gain: f64::NEG_INFINITY, seed: 4, ..SelectConfig::default() };
    let d = selection_design(60, 10, None, 62);
    let all = forward_select_fractions(&knn, &d, &FRACTIONS, &cfg).map_err(|e| e.to_string())?;
    let longest = &all.last().unwrap().1;
    let mut prefix = true;
    for (f, t) in &all {
        let alone = forward_select(&knn, &d, *f, &cfg).map_err(|e| e.to_string())?;
        prefix &= alone == *t;
        prefix &= longest.selected[..t.selected.len()] == t.selected[..];
        prefix &= longest.scores[..t.scores.len()] == t.scores[..];
    }

    let report = evaluate(&d.y, &d.y, &d.y.iter().map(|&v| v as f64).collect::<Vec<_>>(), BootstrapConfig::default(), 0)
        .map_err(|e| e.to_string())?;
    let rows: Vec<SelectionRow> = FRACTIONS
        .iter()
        .flat_map(|&fraction| {
            [Family::MlpBfgs, Family::Hgbc, Family::SvmRbf].map(|model| SelectionRow {
                fraction,
                model,
                imputed: Some(report.clone()),
                not_imputed: Some(report.clone()),
            })
        })
        .collect();
    let mut buf = Vec::new();
    write_selection_table(&rows, &mut buf).map_err(|e| e.to_string())?;
    let mut rd = csv::Reader::from_reader(buf.as_slice());
    let header: Vec<String> = rd.headers().unwrap().iter().map(String::from).collect();
    let body: Vec<csv::StringRecord> = rd.records().map(|r| r.unwrap()).collect();
    let fractions: Vec<String> = {
        let mut v: Vec<String> = body.iter().map(|r| r[0].to_string()).collect();
        v.dedup();
        v
    };
    let layout = header == SELECTION_HEADER
        && header
            == [
                "fraction",
                "model",
                "imputed_accuracy",
                "imputed_f1",
                "imputed_mcc",
                "not_imputed_accuracy",
                "not_imputed_f1",
                "not_imputed_mcc",
            ]
        && fractions == ["0.1", "0.3", "0.5", "0.7", "0.9"]
        && body.iter().all(|r| r.len() == 8);
    check(
        first == 100 && prefix && layout,
        format!("planted feature first in {first}/100 seeds; prefix property {prefix}; table layout {layout}"),
    )
}

fn main() -> ExitCode {
    let criteria = [
        Criterion { id: "1", name: "MCC from tabulated counts", budget: Some(Duration::from_secs(1)), run: c1_metric_reproduction },
        Criterion { id: "2", name: "row-normalized confusion rates", budget: Some(Duration::from_secs(1)), run: c2_confusion_rates },
        Criterion { id: "3a", name: "XOR separation", budget: Some(Duration::from_secs(30)), run: c3a_xor },
        Criterion { id: "3b", name: "MLP gradient check", budget: None, run: c3b_mlp_gradient },
        Criterion { id: "3c", name: "SMO correctness", budget: None, run: c3c_smo },
        Criterion { id: "3d", name: "oracle equivalence", budget: None, run: c3d_oracles },
        Criterion { id: "3e", name: "HGBC training loss monotone", budget: None, run: c3e_hgbc_loss },
        Criterion { id: "4", name: "MICE imputation quality", budget: Some(Duration::from_secs(60)), run: c4_mice },
        Criterion { id: "5", name: "distribution generators", budget: Some(Duration::from_secs(10)), run: c5_generators },
        Criterion { id: "6", name: "simulation study ordering and SE", budget: Some(Duration::from_secs(600)), run: c6_simulation },
        Criterion { id: "7", name: "CLI determinism across --threads", budget: None, run: c7_determinism },
        Criterion { id: "8", name: "forward selection", budget: Some(Duration::from_secs(120)), run: c8_forward_selection },
    ];
    let only: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for c in criteria.iter().filter(|c| only.is_empty() || only.iter().any(|o| o == c.id)) {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(c.run).unwrap_or_else(|_| Err("panicked".into()));
        let took = start.elapsed();
        let over = c.budget.is_some_and(|b| took > b);
        let (tag, detail) = match outcome {
            Ok(d) if !over => ("PASS", d),
            Ok(d) => ("FAIL", format!("{d}; over the {:?} budget", c.budget.unwrap())),
            Err(d) => ("FAIL", d),
        };
        if tag == "FAIL" {
            failed += 1;
        }
        println!("{tag} [{}] {} ({:.2}s): {detail}", c.id, c.name, took.as_secs_f64());
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
