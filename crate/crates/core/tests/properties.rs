//! Property tests for round trips and metric invariants.

use afrec_core::data_model::{io, DischargeReport, FeatureVector, SectionedReport};
use afrec_core::evaluation::{metrics, mcc, roc_auc, ConfusionMatrix};
use afrec_core::pipeline::Resources;
use afrec_core::section_parser::parse_sections;
use chrono::NaiveDate;
use proptest::prelude::*;

fn cell_for(kind: afrec_core::data_model::ColumnKind) -> BoxedStrategy<Option<f64>> {
    use afrec_core::data_model::ColumnKind;
    let value = match kind {
        ColumnKind::Binary => prop_oneof![Just(0.0), Just(1.0)].boxed(),
        ColumnKind::Categorical(k) => (0..k).prop_map(f64::from).boxed(),
        ColumnKind::Numeric => (0.0..500.0f64).boxed(),
    };
    prop::option::of(value).boxed()
}

fn vectors(res: &Resources) -> impl Strategy<Value = Vec<FeatureVector>> {
    let cells: Vec<_> = res.schema.columns().iter().map(|c| cell_for(c.kind)).collect();
    prop::collection::vec((cells, 0u32..4000), 1..6).prop_map(|rows| {
        rows.into_iter()
            .enumerate()
            .map(|(i, (cells, d))| FeatureVector {
                patient_id: format!("P{i}"),
                source_report_id: None,
                date: NaiveDate::from_ymd_opt(2010, 1, 1).unwrap() + chrono::Days::new(d.into()),
                cells,
            })
            .collect()
    })
}

const LINES: [&str; 8] = [
    "Antecedentes: HTA",
    "DIAGNÓSTICO: fibrilación auricular",
    "Tratamiento:",
    "texto libre sin cabecera",
    "Evolución: favorable, no FA.",
    "Pruebas complementarias: FEVI 45%",
    "",
    "Juicio clínico: ACxFA",
];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn feature_matrix_round_trips(rows in vectors(&Resources::bundled().unwrap())) {
        let res = Resources::bundled().unwrap();
        let mut buf = Vec::new();
        io::write_feature_matrix(&mut buf, &res.schema, &rows).unwrap();
        let back = io::read_feature_matrix(buf.as_slice(), &res.schema, "mem".as_ref()).unwrap();
        prop_assert_eq!(back, rows);
    }

    #[test]
    fn sections_tile_the_body(picks in prop::collection::vec(0..LINES.len(), 1..12)) {
        let res = Resources::bundled().unwrap();
        let body: String = picks.iter().map(|&i| format!("{}\n", LINES[i])).collect();
        prop_assume!(!body.trim().is_empty());
        let r = DischargeReport::new("R", "P", NaiveDate::from_ymd_opt(2020, 1, 1).unwrap(), body.clone()).unwrap();
        let s = parse_sections(&r, &res.lexicon);
        s.validate().unwrap();
        prop_assert_eq!(s.reconstruct(), body);
        let json = serde_json::to_string(&s).unwrap();
        let back: SectionedReport = serde_json::from_str(&json).unwrap();
        prop_assert_eq!(back, s);
    }

    #[test]
    fn mcc_is_bounded_and_symmetric(tp in 0u64..200, fp in 0u64..200, tn in 0u64..200, fn_ in 0u64..200) {
        prop_assume!(tp + fp + tn + fn_ > 0);
        let cm = ConfusionMatrix::new(tp, fp, tn, fn_);
        let m = mcc(&cm);
        prop_assert!((-1.0..=1.0).contains(&m));
        // Swapping the roles of the classes leaves MCC unchanged.
        prop_assert!((m - mcc(&ConfusionMatrix::new(tn, fn_, tp, fp))).abs() < 1e-12);
        let set = metrics(&cm).unwrap();
        prop_assert!((set.acc - (tp + tn) as f64 / (tp + fp + tn + fn_) as f64).abs() < 1e-12);
    }

    #[test]
    fn auc_flips_with_the_scores(pairs in prop::collection::vec((any::<bool>(), 0u8..20), 2..60)) {
        let mut y: Vec<bool> = pairs.iter().map(|p| p.0).collect();
        y[0] = true;
        y[1] = false;
        let s: Vec<f64> = pairs.iter().map(|p| f64::from(p.1)).collect();
        let neg: Vec<f64> = s.iter().map(|v| -v).collect();
        let a = roc_auc(&y, &s).unwrap();
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert!((a + roc_auc(&y, &neg).unwrap() - 1.0).abs() < 1e-12);
    }
}
