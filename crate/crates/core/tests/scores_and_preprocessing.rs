//! Clinical scores on hand-built vectors and the train-fitted preprocessing
//! steps on tiny tables.

use afrec_core::clinical_scores::{apple, chads2_vasc, hatch, impute_mode_for_scores, score_classify};
use afrec_core::data_model::{
    af_type, ColumnKind, ColumnSpec, Dataset, FeatureSchema, FeatureVector, Split, WindowClass,
};
use afrec_core::error::Error;
use afrec_core::models::{Hyperparameters, Matrix};
use afrec_core::pipeline::Resources;
use afrec_core::preprocessing::{impute_median, lsfm_select, rfe_select, standardize, undersample};
use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn day() -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 1, 1).unwrap()
}

fn patient(res: &Resources, cells: &[(&str, f64)]) -> FeatureVector {
    let mut v = FeatureVector::missing("P1", None, day(), res.schema.len());
    for (name, x) in cells {
        v.cells[res.schema.index_of(name).unwrap()] = Some(*x);
    }
    v
}

#[test]
fn chads2_vasc_cases() {
    let res = Resources::bundled().unwrap();
    let s = &res.schema;
    let male_40 = patient(&res, &[("gender", 0.0), ("age", 40.0)]);
    assert_eq!(chads2_vasc(&male_40, s).unwrap(), 0);
    let female_76_htn = patient(&res, &[("gender", 1.0), ("age", 76.0), ("hypertension", 1.0)]);
    assert_eq!(chads2_vasc(&female_76_htn, s).unwrap(), 2 + 1 + 1);
}

#[test]
fn hatch_cases() {
    let res = Resources::bundled().unwrap();
    let s = &res.schema;
    assert_eq!(hatch(&patient(&res, &[("age", 80.0), ("copd", 1.0)]), s).unwrap(), 2);
    assert_eq!(hatch(&patient(&res, &[("heart_failure", 1.0), ("stroke", 1.0)]), s).unwrap(), 4);
    assert_eq!(hatch(&patient(&res, &[("age", 50.0)]), s).unwrap(), 0);
}

#[test]
fn apple_cases() {
    let res = Resources::bundled().unwrap();
    let s = &res.schema;
    let v = patient(&res, &[("age", 70.0), ("lvef", 45.0), ("la_diameter", 45.0)]);
    assert_eq!(apple(&v, s).unwrap(), 3);
    let young = patient(
        &res,
        &[
            ("age", 50.0),
            ("af_type", f64::from(af_type::PAROXYSMAL)),
            ("lvef", 60.0),
            ("la_diameter", 38.0),
            ("creatinine", 0.8),
            ("gender", 0.0),
        ],
    );
    assert_eq!(apple(&young, s).unwrap(), 0);
    let permanent = patient(&res, &[("age", 50.0), ("af_type", f64::from(af_type::PERMANENT))]);
    assert_eq!(apple(&permanent, s).unwrap(), 1);
}

#[test]
fn scores_are_positive_from_two_points() {
    let res = Resources::bundled().unwrap();
    for score in &res.scores {
        for (points, positive) in [(0, false), (1, false), (2, true), (5, true)] {
            assert_eq!(score_classify(points, &score.definition), positive, "{} at {points}", score.name());
            assert_eq!(score.classify(points), positive);
        }
    }
}

#[test]
fn score_imputation_rejects_an_all_missing_column() {
    let res = Resources::bundled().unwrap();
    let rows: Vec<FeatureVector> = (0..4)
        .map(|i| FeatureVector::missing(format!("P{i}"), None, day(), res.schema.len()))
        .collect();
    let ds = Dataset::new(res.schema.clone(), rows, vec![true, false, true, false], vec![Split::Train; 4]).unwrap();
    assert!(matches!(
        impute_mode_for_scores(&ds, &res.scores),
        Err(Error::AllMissingColumn(_))
    ));
}

fn table(cols: &[(&str, ColumnKind)], rows: &[Vec<Option<f64>>], labels: &[bool]) -> Dataset {
    let schema = FeatureSchema::new(
        cols.iter()
            .map(|(n, k)| ColumnSpec::new(*n, *k, WindowClass::Lab))
            .collect(),
    )
    .unwrap();
    let rows = rows
        .iter()
        .enumerate()
        .map(|(i, cells)| FeatureVector {
            patient_id: format!("P{i:02}"),
            source_report_id: None,
            date: day(),
            cells: cells.clone(),
        })
        .collect();
    Dataset::new(schema, rows, labels.to_vec(), vec![Split::Train; labels.len()]).unwrap()
}

#[test]
fn median_fills_numeric_gaps() {
    let ds = table(
        &[("x", ColumnKind::Numeric), ("b", ColumnKind::Binary)],
        &[
            vec![Some(1.0), Some(1.0)],
            vec![Some(3.0), Some(1.0)],
            vec![None, Some(0.0)],
            vec![Some(3.0), None],
        ],
        &[true, false, true, false],
    );
    // Median over {1, 3} on the first two rows is their mean.
    let (out, imp) = impute_median(&ds, &[0, 1, 2]).unwrap();
    assert_eq!(imp.fill, [2.0, 1.0]);
    assert_eq!(out.rows[2].cells[0], Some(2.0));
    assert_eq!(out.rows[3].cells[1], Some(1.0));
    let (full, _) = impute_median(&out, &[0, 1, 2, 3]).unwrap();
    assert_eq!(full, out);
}

#[test]
fn standardizing_uses_the_population_sd() {
    let ds = table(
        &[("x", ColumnKind::Numeric), ("c", ColumnKind::Numeric), ("b", ColumnKind::Binary)],
        &[
            vec![Some(1.0), Some(7.0), Some(1.0)],
            vec![Some(2.0), Some(7.0), Some(0.0)],
            vec![Some(3.0), Some(7.0), Some(1.0)],
        ],
        &[true, false, true],
    );
    let (out, scaler) = standardize(&ds, &[0, 1, 2]).unwrap();
    let z = (1.5f64).sqrt();
    let col = |j: usize| out.rows.iter().map(|r| r.cells[j].unwrap()).collect::<Vec<_>>();
    for (got, want) in col(0).iter().zip([-z, 0.0, z]) {
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }
    assert_eq!(col(1), [0.0, 0.0, 0.0]);
    assert_eq!(col(2), [1.0, 0.0, 1.0]);
    assert_eq!(scaler.transform_value(0, 2.0), 0.0);
}

#[test]
fn undersampling_drops_the_sparsest_majority_rows() {
    // Row i has i % 4 missing cells in the last three columns.
    let rows: Vec<Vec<Option<f64>>> = (0..10)
        .map(|i| (0..4).map(|j| if j > 0 && j <= i % 4 { None } else { Some(1.0) }).collect())
        .collect();
    let labels = [true, true, true, true, true, true, true, false, false, false];
    let cols = [
        ("a", ColumnKind::Numeric),
        ("b", ColumnKind::Numeric),
        ("c", ColumnKind::Numeric),
        ("d", ColumnKind::Numeric),
    ];
    let ds = table(&cols, &rows, &labels);
    let all: Vec<usize> = (0..10).collect();
    let kept = undersample(&ds, &all).unwrap();
    // Positives 0..7 have missing counts 0,1,2,3,0,1,2; the four highest are
    // rows 3, 2, 6 and then 5 over 1 on the tie.
    assert_eq!(kept, [0, 1, 4, 7, 8, 9]);
    let balanced = undersample(&ds, &[0, 1, 2, 7, 8, 9]).unwrap();
    assert_eq!(balanced, [0, 1, 2, 7, 8, 9]);
    assert!(undersample(&ds, &[0, 1]).is_err());
}

/// Three columns carry the label and three are noise.
fn planted(n: usize, seed: u64) -> (Matrix, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for _ in 0..n {
        let r: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        y.push(r[0] + r[2] + r[4] > 0.0);
        rows.push(r);
    }
    (Matrix::from_rows(&rows).unwrap(), y)
}

#[test]
fn rfe_keeps_the_informative_columns() {
    let (x, y) = planted(300, 9);
    let hp = Hyperparameters::default();
    assert_eq!(rfe_select(&x, &y, 3, 1, &hp).unwrap(), [0, 2, 4]);
    assert_eq!(rfe_select(&x, &y, 6, 1, &hp).unwrap(), [0, 1, 2, 3, 4, 5]);
    assert!(rfe_select(&x, &y, 7, 1, &hp).is_err());
}

#[test]
fn lsfm_keeps_the_informative_columns() {
    let (x, y) = planted(300, 10);
    let half = lsfm_select(&x, &y, 0.5, 3).unwrap();
    assert_eq!(half.columns, [0, 2, 4]);
    let all = lsfm_select(&x, &y, 1.0, 3).unwrap();
    assert_eq!(all.columns, [0, 1, 2, 3, 4, 5]);
}
