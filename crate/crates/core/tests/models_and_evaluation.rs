//! Linear models, metrics and significance tests against brute-force and
//! closed-form oracles.

use afrec_core::data_model::FeatureVector;
use afrec_core::evaluation::{
    metrics, paired_bootstrap_test, roc_auc, subgroup_report, welch_t_test, ConfusionMatrix, Metric, Subgroup,
    SystemPredictions,
};
use afrec_core::models::{cross_validate, fit, Hyperparameters, Matrix, ModelKind};
use afrec_core::pipeline::Resources;
use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn accuracy(pred: &[bool], y: &[bool]) -> f64 {
    pred.iter().zip(y).filter(|(a, b)| a == b).count() as f64 / y.len() as f64
}

#[test]
fn separable_points_are_fit_exactly() {
    let rows = vec![
        vec![2.0, 1.0],
        vec![1.5, -0.5],
        vec![3.0, 0.2],
        vec![-2.0, 0.7],
        vec![-1.0, -1.2],
        vec![-2.5, 0.1],
    ];
    let y = [true, true, true, false, false, false];
    let x = Matrix::from_rows(&rows).unwrap();
    for kind in [ModelKind::Logistic, ModelKind::Hinge] {
        let m = fit(&x, &y, kind, &Hyperparameters::default(), &[]).unwrap();
        assert_eq!(accuracy(&m.predict(&x).unwrap(), &y), 1.0, "{kind:?}");
    }
}

/// Best accuracy of any `sign(w.x + b)` over a grid of directions and
/// offsets.
fn best_linear_accuracy(x: &[[f64; 2]], y: &[bool]) -> f64 {
    let mut best: f64 = 0.0;
    for a in 0..360 {
        let t = (a as f64).to_radians();
        let w = (t.cos(), t.sin());
        for bi in -30..=30 {
            let b = bi as f64 / 10.0;
            let pred: Vec<bool> = x.iter().map(|p| w.0 * p[0] + w.1 * p[1] + b > 0.0).collect();
            best = best.max(accuracy(&pred, y));
        }
    }
    best
}

#[test]
fn xor_is_out_of_reach() {
    let pts = [[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]];
    let y = [false, true, true, false];
    assert_eq!(best_linear_accuracy(&pts, &y), 0.75);
    let x = Matrix::from_rows(&pts.iter().map(|p| p.to_vec()).collect::<Vec<_>>()).unwrap();
    for kind in [ModelKind::Logistic, ModelKind::Hinge] {
        let m = fit(&x, &y, kind, &Hyperparameters::default(), &[]).unwrap();
        assert!(accuracy(&m.predict(&x).unwrap(), &y) <= 0.75);
    }
}

#[test]
fn heavy_regularization_predicts_the_majority() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let rows: Vec<Vec<f64>> = (0..200).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let y: Vec<bool> = (0..200).map(|i| i % 10 < 7).collect();
    let x = Matrix::from_rows(&rows).unwrap();
    let hp = Hyperparameters {
        c: 1e-6,
        ..Hyperparameters::default()
    };
    let m = fit(&x, &y, ModelKind::Logistic, &hp, &[]).unwrap();
    assert!(m.weights.iter().all(|w| w.abs() < 1e-3), "{:?}", m.weights);
    assert!(m.predict(&x).unwrap().iter().all(|&p| p));
}

#[test]
fn huge_decision_value_gives_probability_one() {
    let x = Matrix::from_rows(&[vec![1.0], vec![-1.0]]).unwrap();
    let mut m = fit(&x, &[true, false], ModelKind::Logistic, &Hyperparameters::default(), &[]).unwrap();
    m.weights = vec![1e6];
    m.bias = 0.0;
    let p = m.predict_proba(&Matrix::from_rows(&[vec![10.0]]).unwrap()).unwrap();
    assert_eq!(p, [1.0]);
}

#[test]
fn calibrated_hinge_probabilities_follow_the_decision() {
    let (x, y) = planted(120, 2);
    let m = fit(&x, &y, ModelKind::Hinge, &Hyperparameters::default(), &[]).unwrap();
    let p = m.predict_proba(&x).unwrap();
    let mut order: Vec<usize> = (0..x.rows).collect();
    order.sort_by(|&a, &b| m.decision(x.row(a)).total_cmp(&m.decision(x.row(b))));
    assert!(order.windows(2).all(|w| p[w[0]] <= p[w[1]]));
    assert!(m.calibration.unwrap().a > 0.0);
}

fn planted(n: usize, seed: u64) -> (Matrix, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for _ in 0..n {
        let r: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        y.push(r[0] - r[1] > 0.0);
        rows.push(r);
    }
    (Matrix::from_rows(&rows).unwrap(), y)
}

#[test]
fn cross_validation_on_a_planted_signal() {
    let (x, y) = planted(200, 8);
    let one = [Hyperparameters::default()];
    let (cv, _) = cross_validate(&x, &y, ModelKind::Logistic, &one, 5, 1, &[]).unwrap();
    assert_eq!((cv.grid.len(), cv.best, cv.k), (1, 0, 5));
    // The majority-class baseline has MCC 0.
    assert!(cv.grid[0].mean.mcc > 0.3, "{}", cv.grid[0].mean.mcc);

    let twice = [Hyperparameters::default(), Hyperparameters::default()];
    let (cv2, _) = cross_validate(&x, &y, ModelKind::Hinge, &twice, 5, 1, &[]).unwrap();
    assert_eq!(cv2.grid[0].mean, cv2.grid[1].mean);
    assert_eq!(cv2.best, 0);
}

#[test]
fn fold_without_a_class_is_an_error() {
    let x = Matrix::from_rows(&(0..10).map(|i| vec![i as f64]).collect::<Vec<_>>()).unwrap();
    let mut y = vec![false; 10];
    y[0] = true;
    y[1] = true;
    assert!(cross_validate(&x, &y, ModelKind::Logistic, &[Hyperparameters::default()], 5, 0, &[]).is_err());
}

#[test]
fn metric_edge_cases_and_worked_example() {
    let perfect = metrics(&ConfusionMatrix::new(10, 0, 5, 0)).unwrap();
    assert_eq!((perfect.mcc, perfect.acc), (1.0, 1.0));
    let all_pos = metrics(&ConfusionMatrix::new(10, 5, 0, 0)).unwrap();
    assert_eq!((all_pos.spe, all_pos.mcc), (0.0, 0.0));

    let (tp, tn, fp, fn_) = (50u64, 30u64, 20u64, 10u64);
    let m = metrics(&ConfusionMatrix::new(tp, fp, tn, fn_)).unwrap();
    let num = (tp * tn) as f64 - (fp * fn_) as f64;
    let den = (((tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_)) as f64).sqrt();
    assert!((m.mcc - num / den).abs() < 1e-12);
    assert!((m.mcc - 0.4485).abs() < 5e-5);
    assert!((m.acc - 80.0 / 110.0).abs() < 1e-12);
}

/// Fraction of positive/negative pairs ranked correctly, ties half.
fn pair_auc(y: &[bool], s: &[f64]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for i in (0..y.len()).filter(|&i| y[i]) {
        for j in (0..y.len()).filter(|&j| !y[j]) {
            pairs += 1.0;
            wins += if s[i] > s[j] {
                1.0
            } else if s[i] == s[j] {
                0.5
            } else {
                0.0
            };
        }
    }
    wins / pairs
}

#[test]
fn auc_matches_pair_counting() {
    let y = [true, false, true, false];
    let s = [0.9, 0.8, 0.4, 0.1];
    assert_eq!(roc_auc(&y, &s).unwrap(), 0.75);
    assert_eq!(roc_auc(&y, &[0.3; 4]).unwrap(), 0.5);
    assert_eq!(roc_auc(&y, &[0.9, 0.1, 0.8, 0.2]).unwrap(), 1.0);
    assert!(roc_auc(&[true, true], &[0.1, 0.2]).is_err());

    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..50 {
        let n = rng.random_range(2..40);
        let mut y: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
        y[0] = true;
        y[1] = false;
        let s: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0..6u8)) / 5.0).collect();
        assert!((roc_auc(&y, &s).unwrap() - pair_auc(&y, &s)).abs() < 1e-12);
    }
}

#[test]
fn bootstrap_on_identical_opposite_and_tiny_systems() {
    let y: Vec<bool> = (0..100).map(|i| i % 2 == 0).collect();
    let same = paired_bootstrap_test(&y, &y, &y, Metric::Mcc, 1000, 3).unwrap();
    assert_eq!((same.diff, same.p_value), (0.0, 1.0));

    let anti: Vec<bool> = y.iter().map(|v| !v).collect();
    let opposite = paired_bootstrap_test(&y, &y, &anti, Metric::Acc, 1000, 3).unwrap();
    assert!(opposite.p_value < 1e-3, "{opposite:?}");

    let y5 = [true, false, true, false, true];
    let a = [true, false, true, false, false];
    let b = [true, false, false, false, false];
    let tiny = paired_bootstrap_test(&y5, &a, &b, Metric::Acc, 1000, 3).unwrap();
    assert!(tiny.p_value > 0.05, "{tiny:?}");
}

#[test]
fn welch_on_separated_and_identical_samples() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let a: Vec<f64> = Normal::new(0.0, 1.0).unwrap().sample_iter(&mut rng).take(100).collect();
    let b: Vec<f64> = Normal::new(5.0, 1.0).unwrap().sample_iter(&mut rng).take(100).collect();
    assert!(welch_t_test(&a, &b).unwrap().p_value < 1e-10);

    let same = welch_t_test(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
    assert_eq!((same.t, same.p_value), (0.0, 1.0));
    assert!(welch_t_test(&[2.0, 2.0], &[3.0, 3.0]).is_err());
}

#[test]
fn subgroup_metrics_match_hand_counts() {
    let res = Resources::bundled().unwrap();
    let gender = res.schema.index_of("gender").unwrap();
    let age = res.schema.index_of("age").unwrap();
    let d = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
    // (female, age, label, prediction)
    let table = [
        (1.0, 80.0, true, true),
        (1.0, 70.0, false, true),
        (1.0, 77.0, true, false),
        (0.0, 60.0, true, true),
        (0.0, 90.0, false, false),
        (0.0, 50.0, false, false),
    ];
    let rows: Vec<FeatureVector> = table
        .iter()
        .enumerate()
        .map(|(i, (g, a, _, _))| {
            let mut v = FeatureVector::missing(format!("P{i}"), None, d, res.schema.len());
            v.cells[gender] = Some(*g);
            v.cells[age] = Some(*a);
            v
        })
        .collect();
    let labels: Vec<bool> = table.iter().map(|t| t.2).collect();
    let sys = SystemPredictions {
        name: "s".into(),
        predictions: table.iter().map(|t| t.3).collect(),
        probabilities: None,
    };
    let report = subgroup_report(&rows, &res.schema, &labels, std::slice::from_ref(&sys)).unwrap();
    let cm = |sg: Subgroup| report.rows.iter().find(|r| r.subgroup == sg).unwrap().confusion.unwrap();
    assert_eq!(cm(Subgroup::General), ConfusionMatrix::new(2, 1, 2, 1));
    assert_eq!(cm(Subgroup::Female), ConfusionMatrix::new(1, 1, 0, 1));
    assert_eq!(cm(Subgroup::Male), ConfusionMatrix::new(1, 0, 2, 0));
    assert_eq!(cm(Subgroup::AgeUnder75), ConfusionMatrix::new(1, 1, 1, 0));
    assert_eq!(cm(Subgroup::Age75Plus), ConfusionMatrix::new(1, 0, 1, 1));

    let males: Vec<usize> = (3..6).collect();
    let male_rows: Vec<FeatureVector> = males.iter().map(|&i| rows[i].clone()).collect();
    let male_sys = SystemPredictions {
        predictions: males.iter().map(|&i| sys.predictions[i]).collect(),
        ..sys.clone()
    };
    let male_labels: Vec<bool> = males.iter().map(|&i| labels[i]).collect();
    let only_male = subgroup_report(&male_rows, &res.schema, &male_labels, &[male_sys]).unwrap();
    let female = only_male.rows.iter().find(|r| r.subgroup == Subgroup::Female).unwrap();
    assert_eq!((female.n, female.metrics), (0, None));
}
