use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use super::*;
use crate::metrics::{confusion, mcc};
use crate::seed;

fn blobs(n: usize, sep: f64, seed_value: u64) -> (Matrix, Vec<u8>) {
    let mut rng = seed::rng(seed_value);
    let noise = Normal::new(0.0, 0.5).unwrap();
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for i in 0..n {
        let c = (i % 2) as u8;
        let centre = if c == 1 { sep } else { -sep };
        rows.push(vec![centre + noise.sample(&mut rng), centre + noise.sample(&mut rng)]);
        y.push(c);
    }
    (Matrix::from_rows(&rows).unwrap(), y)
}

fn xor(n: usize, seed_value: u64) -> (Matrix, Vec<u8>) {
    let mut rng = seed::rng(seed_value);
    let noise = Normal::new(0.0, 0.25).unwrap();
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for i in 0..n {
        let (a, b) = ((i % 2) as f64, ((i / 2) % 2) as f64);
        rows.push(vec![2.0 * a - 1.0 + noise.sample(&mut rng), 2.0 * b - 1.0 + noise.sample(&mut rng)]);
        y.push(u8::from(a != b));
    }
    (Matrix::from_rows(&rows).unwrap(), y)
}

fn train_accuracy(spec: &ModelSpec, x: &Matrix, y: &[u8]) -> f64 {
    let m = fit(spec, x, y).unwrap();
    let p = m.predict(x).unwrap();
    p.iter().zip(y).filter(|(a, b)| a == b).count() as f64 / y.len() as f64
}

#[test]
fn every_family_separates_blobs() {
    let (x, y) = blobs(80, 2.5, 1);
    for f in Family::ALL {
        let acc = train_accuracy(&ModelSpec::new(f).with_seed(3), &x, &y);
        assert_eq!(acc, 1.0, "{f}");
    }
}

#[test]
fn every_family_handles_small_awkward_data() {
    let mut rng = seed::rng(9);
    let rows: Vec<Vec<f64>> = (0..12).map(|_| (0..3).map(|_| rng.random::<f64>()).collect()).collect();
    let x = Matrix::from_rows(&rows).unwrap();
    let mut y = vec![0u8; 12];
    y[4] = 1;
    for f in Family::ALL {
        let m = fit(&ModelSpec::new(f), &x, &y).unwrap_or_else(|e| panic!("{f}: {e}"));
        let s = m.score(&x).unwrap();
        assert!(s.iter().all(|v| v.is_finite()), "{f}");
    }
}

#[test]
fn constant_labels_give_constant_predictor() {
    let (x, _) = blobs(30, 1.0, 2);
    for f in Family::ALL {
        let m = fit(&ModelSpec::new(f), &x, &[0; 30]).unwrap();
        assert!(!m.warnings.is_empty());
        assert!(m.predict(&x).unwrap().iter().all(|&v| v == 0), "{f}");
        assert!(m.probabilities(&x).unwrap().iter().all(|p| p[0] == 1.0), "{f}");
    }
}

#[test]
fn probabilities_are_normalized() {
    let (x, y) = blobs(60, 0.6, 4);
    for f in Family::ALL {
        let m = fit(&ModelSpec::new(f).with_seed(1), &x, &y).unwrap();
        for p in m.probabilities(&x).unwrap() {
            assert!((0.0..=1.0).contains(&p[0]) && (0.0..=1.0).contains(&p[1]), "{f}");
            assert!((p[0] + p[1] - 1.0).abs() <= 1e-12, "{f}");
        }
    }
}

#[test]
fn knn_one_returns_own_label() {
    let (x, y) = blobs(40, 0.3, 5);
    let m = fit(&ModelSpec::new(Family::Knn).with("k", 1i64), &x, &y).unwrap();
    assert_eq!(m.predict(&x).unwrap(), y);
}

fn knn_oracle(x: &Matrix, y: &[u8], q: &[f64], k: usize) -> u8 {
    let mut all: Vec<(f64, usize)> = (0..x.rows())
        .map(|i| {
            let d: f64 = x.row(i).iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum();
            (d, i)
        })
        .collect();
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    let pos = all[..k].iter().filter(|(_, i)| y[*i] == 1).count();
    u8::from(2 * pos > k)
}

#[test]
fn knn_matches_exhaustive_scan() {
    for s in 0..5 {
        let (x, y) = blobs(50, 0.4, 100 + s);
        let (q, _) = blobs(30, 0.4, 200 + s);
        for k in [1usize, 3, 5] {
            let m = fit(&ModelSpec::new(Family::Knn).with("k", k as i64), &x, &y).unwrap();
            let pred = m.predict(&q).unwrap();
            for i in 0..q.rows() {
                assert_eq!(pred[i], knn_oracle(&x, &y, q.row(i), k));
            }
        }
    }
}

#[test]
fn knn_even_split_goes_to_class_zero() {
    let x = Matrix::from_rows(&[vec![-1.0], vec![1.0], vec![5.0]]).unwrap();
    let m = fit(&ModelSpec::new(Family::Knn).with("k", 2i64), &x, &[0, 1, 1]).unwrap();
    assert_eq!(m.predict(&Matrix::from_rows(&[vec![0.0]]).unwrap()).unwrap(), vec![0]);
}

fn gini_oracle(x: &[[u8; 3]], y: &[u8]) -> Option<usize> {
    let imp = |rows: &[usize]| -> f64 {
        if rows.is_empty() {
            return 0.0;
        }
        let p = rows.iter().filter(|&&i| y[i] == 1).count() as f64 / rows.len() as f64;
        rows.len() as f64 * (1.0 - p * p - (1.0 - p) * (1.0 - p))
    };
    let all: Vec<usize> = (0..y.len()).collect();
    let parent = imp(&all);
    let gains: Vec<Option<f64>> = (0..3)
        .map(|f| {
            let (l, r): (Vec<usize>, Vec<usize>) = all.iter().partition(|&&i| x[i][f] == 0);
            if l.is_empty() || r.is_empty() {
                None
            } else {
                Some(parent - imp(&l) - imp(&r))
            }
        })
        .collect();
    let best = gains.iter().flatten().cloned().fold(f64::NEG_INFINITY, f64::max);
    if best <= 1e-12 {
        return None;
    }
    gains.iter().position(|g| g.is_some_and(|g| g >= best - 1e-12))
}

#[test]
fn tree_first_split_matches_enumeration() {
    let mut rng = seed::rng(77);
    for _ in 0..300 {
        let n = rng.random_range(2..=8);
        let xs: Vec<[u8; 3]> = (0..n).map(|_| [rng.random_range(0..2), rng.random_range(0..2), rng.random_range(0..2)]).collect();
        let y: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
        if y.iter().all(|&v| v == y[0]) {
            continue;
        }
        let rows: Vec<Vec<f64>> = xs.iter().map(|r| r.iter().map(|&v| v as f64).collect()).collect();
        let m = fit(&ModelSpec::new(Family::DecisionTree), &Matrix::from_rows(&rows).unwrap(), &y).unwrap();
        let Model::DecisionTree(t) = &m.model else { unreachable!() };
        let got = match t.nodes[0] {
            tree::Node::Split { feature, threshold, .. } => {
                assert_eq!(threshold, 0.5);
                Some(feature)
            }
            tree::Node::Leaf { .. } => None,
        };
        assert_eq!(got, gini_oracle(&xs, &y), "{xs:?} {y:?}");
    }
}

#[test]
fn qda_tie_goes_to_lower_class() {
    let x = Matrix::from_rows(&[vec![-1.0], vec![-3.0], vec![1.0], vec![3.0]]).unwrap();
    let m = fit(&ModelSpec::new(Family::Qda), &x, &[0, 0, 1, 1]).unwrap();
    let Model::Qda(q) = &m.model else { unreachable!() };
    let d = q.discriminants(&[0.0]);
    assert_eq!(d[0], d[1]);
    assert_eq!(m.predict(&Matrix::from_rows(&[vec![0.0]]).unwrap()).unwrap(), vec![0]);
}

#[test]
fn mlp_gradient_matches_finite_differences() {
    let mut rng = seed::rng(11);
    let rows: Vec<Vec<f64>> = (0..10).map(|_| (0..4).map(|_| rng.random_range(-1.5..1.5)).collect()).collect();
    let x = Matrix::from_rows(&rows).unwrap();
    let y: Vec<u8> = (0..10).map(|i| (i % 3 == 0) as u8).collect();
    for hidden in [vec![5], vec![4, 3]] {
        let layout = mlp::Layout::new(4, &hidden);
        let theta = mlp::init_params(&layout, 5);
        let (_, g) = mlp::loss_and_grad(&layout, &theta, &x, &y, 0.3);
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for k in 0..theta.len() {
            let mut tp = theta.clone();
            let mut tm = theta.clone();
            tp[k] += h;
            tm[k] -= h;
            let fd = (mlp::loss_and_grad(&layout, &tp, &x, &y, 0.3).0 - mlp::loss_and_grad(&layout, &tm, &x, &y, 0.3).0) / (2.0 * h);
            let rel = (fd - g[k]).abs() / fd.abs().max(g[k].abs()).max(1e-8);
            worst = worst.max(rel);
        }
        assert!(worst < 1e-5, "{hidden:?} {worst}");
    }
}

#[test]
fn hgbc_training_loss_never_increases() {
    let (x, y) = xor(400, 3);
    for lr in [0.1, 0.3] {
        let m = fit(&ModelSpec::new(Family::Hgbc).with("learning_rate", lr), &x, &y).unwrap();
        let Model::Hgbc(h) = &m.model else { unreachable!() };
        assert!(h.train_loss.windows(2).all(|w| w[1] <= w[0] + 1e-15));
        assert!(h.train_loss.last().unwrap() < &h.train_loss[0]);
    }
}

#[test]
fn adaboost_stages_beat_chance() {
    let (x, y) = blobs(100, 0.5, 8);
    let m = fit(&ModelSpec::new(Family::Adaboost).with("n_estimators", 200i64), &x, &y).unwrap();
    let Model::Adaboost(a) = &m.model else { unreachable!() };
    assert!(!a.stages.is_empty());
    assert!(a.stages.iter().all(|s| s.error < 0.5));
}

#[test]
fn svm_margin_flips_with_labels() {
    let (x, y) = blobs(20, 0.5, 12);
    let flipped: Vec<u8> = y.iter().map(|v| 1 - v).collect();
    let spec = ModelSpec::new(Family::SvmRbf).with("C", 1.0).with_seed(4);
    let a = fit(&spec, &x, &y).unwrap().score(&x).unwrap();
    let b = fit(&spec, &x, &flipped).unwrap().score(&x).unwrap();
    for (u, v) in a.iter().zip(&b) {
        // Both solves stop at the same dual tolerance along different paths.
        assert!(u.signum() == -v.signum() && (u + v).abs() < 1e-2, "{u} {v}");
    }
}

#[test]
fn smo_satisfies_constraints_on_random_problems() {
    for s in 0..20u64 {
        let mut rng = seed::rng(s);
        let n = rng.random_range(5..40);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let k = gp::gram(&x, rng.random_range(0.2..3.0));
        let y: Vec<f64> = (0..n).map(|i| if i % 3 == 0 { 1.0 } else { -1.0 }).collect();
        let c = [0.1, 1.0, 10.0][s as usize % 3];
        let (a, b) = smo_solve(&k, &y, c, 1e-3).unwrap();
        assert!(a.iter().all(|&v| (0.0..=c).contains(&v)));
        let eq: f64 = a.iter().zip(&y).map(|(a, y)| a * y).sum();
        assert!(eq.abs() < 1e-9);
        assert!(kkt_violation(&k, &y, &a, b, c) <= 1e-3 + 1e-9);
    }
}

#[test]
fn xor_needs_nonlinear_models() {
    let (x, y) = xor(200, 21);
    let mcc_of = |spec: ModelSpec| {
        let m = fit(&spec, &x, &y).unwrap();
        mcc(&confusion(&y, &m.predict(&x).unwrap()).unwrap())
    };
    assert!(mcc_of(ModelSpec::new(Family::SvmRbf).with("C", 10.0).with("gamma", 1.0)) >= 0.9);
    assert!(mcc_of(ModelSpec::new(Family::LogisticRegression)) <= 0.2);
}

#[test]
fn fitting_is_deterministic_across_thread_counts() {
    let (x, y) = xor(120, 5);
    for f in [Family::RandomForest, Family::Stacking, Family::MlpBfgs, Family::Hgbc] {
        let spec = ModelSpec::new(f).with_seed(42);
        let run = |threads| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| fit(&spec, &x, &y).unwrap().to_json().unwrap())
        };
        assert_eq!(run(1), run(4), "{f}");
    }
}

#[test]
fn json_round_trip_preserves_scores() {
    let (x, y) = blobs(60, 0.8, 6);
    for f in Family::ALL {
        let m = fit(&ModelSpec::new(f).with_seed(3), &x, &y).unwrap();
        let back = FittedModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back.score(&x).unwrap(), m.score(&x).unwrap(), "{f}");
    }
}

#[test]
fn invalid_inputs_are_rejected() {
    let (x, y) = blobs(30, 1.0, 2);
    let bad = [
        ModelSpec::new(Family::Knn).with("k", 0i64),
        ModelSpec::new(Family::SvmRbf).with("C", 0.0),
        ModelSpec::new(Family::SvmRbf).with("gamma", -1.0),
        ModelSpec::new(Family::Hgbc).with("max_bins", 256i64),
        ModelSpec::new(Family::MlpBfgs).with("hidden_sizes", Param::List(vec![])),
        ModelSpec::new(Family::DecisionTree).with("criterion", "entropy"),
        ModelSpec::new(Family::Knn).with("neighbours", 3i64),
    ];
    for spec in bad {
        assert!(matches!(fit(&spec, &x, &y), Err(Error::Hyperparameter { .. })), "{spec:?}");
    }
    let m = fit(&ModelSpec::new(Family::Knn), &x, &y).unwrap();
    assert!(matches!(m.score(&Matrix::zeros(2, 3)), Err(Error::Shape(_))));
    let mut holes = x.clone();
    holes[(0, 0)] = f64::NAN;
    assert!(fit(&ModelSpec::new(Family::Knn), &holes, &y).is_err());
}

#[test]
fn family_names_round_trip() {
    for f in Family::ALL {
        assert_eq!(f.as_str().parse::<Family>().unwrap(), f);
        assert_eq!(serde_json::to_string(&f).unwrap(), format!("\"{f}\""));
    }
}
