//! Generator label frequencies and the file protocol shared with external
//! predictors.

use std::io::Write as _;

use afrec_core::data_model::{RecurrenceLabel, Split};
use afrec_core::error::Error;
use afrec_core::external::{read_predictions, run_predictor, write_request, ExternalOutcome, Variant};
use afrec_core::pipeline::{build_cohort, build_dataset, Resources};
use afrec_core::preprocessing::{FittedPipeline, PipelineConfig};
use afrec_core::synthetic_corpus::{generate, GeneratorConfig};

#[test]
fn label_frequency_tracks_the_requested_prevalence() {
    let res = Resources::bundled().unwrap();
    let mut config = GeneratorConfig::new(100, 7);
    config.prevalence = 0.63;
    let corpus = generate(&config, &res.schema).unwrap();
    let labels: Vec<bool> = corpus
        .truth
        .iter()
        .filter(|t| t.in_dataset())
        .map(|t| t.label == Some(RecurrenceLabel::Recurred))
        .collect();
    let n = labels.len() as f64;
    let share = labels.iter().filter(|&&l| l).count() as f64 / n;
    // 99% normal-approximation interval around the target.
    let half = 2.576 * (0.63f64 * 0.37 / n).sqrt();
    assert!((share - 0.63).abs() <= half, "{share} from {n} rows");
}

#[test]
fn same_seed_writes_identical_files() {
    let res = Resources::bundled().unwrap();
    let config = GeneratorConfig::new(40, 13);
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        generate(&config, &res.schema).unwrap().write(d.path(), &res.schema).unwrap();
    }
    let mut names: Vec<_> = std::fs::read_dir(dirs[0].path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(!names.is_empty());
    for name in names {
        let a = std::fs::read(dirs[0].path().join(&name)).unwrap();
        let b = std::fs::read(dirs[1].path().join(&name)).unwrap();
        assert_eq!(a, b, "{name:?}");
    }
}

struct Fixture {
    ds: afrec_core::data_model::Dataset,
    pipeline: FittedPipeline,
    kept: Vec<usize>,
}

fn fixture() -> Fixture {
    let res = Resources::bundled().unwrap();
    let corpus = generate(&GeneratorConfig::new(120, 17), &res.schema).unwrap();
    let build = build_cohort(&corpus.reports, &corpus.coded, &corpus.deaths, &res).unwrap();
    let ds = build_dataset(&build.entries(), &res.schema, 0.2, 17).unwrap();
    let train = ds.indices(Split::Train);
    let (pipeline, kept) = FittedPipeline::fit(&ds, &train, &PipelineConfig::default()).unwrap();
    Fixture { ds, pipeline, kept }
}

fn write_predictions(path: &std::path::Path, header: &str, rows: &[(String, &str, &str)]) {
    let mut f = std::fs::File::create(path).unwrap();
    writeln!(f, "{header}").unwrap();
    for (id, p, y) in rows {
        writeln!(f, "{id},{p},{y}").unwrap();
    }
}

#[test]
fn request_files_describe_both_variants() {
    let fx = fixture();
    let dir = tempfile::tempdir().unwrap();
    let raw = write_request(dir.path(), &fx.ds, Variant::Raw, &fx.pipeline, &fx.kept).unwrap();
    let pre = write_request(dir.path(), &fx.ds, Variant::Pre, &fx.pipeline, &fx.kept).unwrap();
    let test_ids: Vec<String> = fx.ds.indices(Split::Test).iter().map(|&i| fx.ds.rows[i].patient_id.clone()).collect();
    assert_eq!(raw.test_ids, test_ids);
    assert_eq!(pre.test_ids, test_ids);

    let lines = |p: &std::path::Path| std::fs::read_to_string(p).unwrap().lines().count();
    assert_eq!(lines(&raw.labels) - 1, fx.ds.indices(Split::Train).len());
    assert_eq!(lines(&pre.labels) - 1, fx.kept.len());
    assert_eq!(lines(&raw.test) - 1, test_ids.len());
    let header = std::fs::read_to_string(&raw.labels).unwrap();
    assert!(header.starts_with("patient_id,label,split\n"));

    // The preprocessed matrices have no empty cells.
    let pre_test = std::fs::read_to_string(&pre.test).unwrap();
    assert!(pre_test.lines().skip(1).all(|l| !l.split(',').any(str::is_empty)));
    let raw_train = std::fs::read_to_string(&raw.train).unwrap();
    assert!(raw_train.lines().skip(1).any(|l| l.split(',').any(str::is_empty)));
}

#[test]
fn predictions_round_trip_in_request_order() {
    let fx = fixture();
    let dir = tempfile::tempdir().unwrap();
    let req = write_request(dir.path(), &fx.ds, Variant::Raw, &fx.pipeline, &fx.kept).unwrap();
    let mut rows: Vec<(String, &str, &str)> = req
        .test_ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.clone(), if i % 2 == 0 { "0.8" } else { "0.25" }, if i % 2 == 0 { "1" } else { "0" }))
        .collect();
    rows.reverse();
    write_predictions(&req.out, "patient_id,probability,prediction", &rows);
    let (p, y) = read_predictions(&req.out, &req.test_ids).unwrap();
    for i in 0..req.test_ids.len() {
        assert_eq!(p[i], if i % 2 == 0 { 0.8 } else { 0.25 });
        assert_eq!(y[i], i % 2 == 0);
    }
}

#[test]
fn malformed_predictions_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.csv");
    let ids = vec!["A".to_string(), "B".to_string()];
    let ok = |p: &'static str| vec![("A".to_string(), p, "1"), ("B".to_string(), "0.1", "0")];

    write_predictions(&path, "id,prob,pred", &ok("0.9"));
    assert!(matches!(read_predictions(&path, &ids), Err(Error::SchemaMismatch(_))));

    write_predictions(&path, "patient_id,probability,prediction", &ok("1.5"));
    assert!(matches!(read_predictions(&path, &ids), Err(Error::MalformedRecord { .. })));

    write_predictions(&path, "patient_id,probability,prediction", &ok("0.9")[..1]);
    assert!(read_predictions(&path, &ids).is_err());

    let missing = dir.path().join("absent.csv");
    assert!(matches!(read_predictions(&missing, &ids), Err(Error::Io { .. })));
}

fn shell(script: &str) -> Vec<String> {
    ["sh", "-c", script, "predictor"].iter().map(|s| s.to_string()).collect()
}

#[test]
fn predictor_exit_statuses() {
    let fx = fixture();
    let dir = tempfile::tempdir().unwrap();
    let req = write_request(dir.path(), &fx.ds, Variant::Raw, &fx.pipeline, &fx.kept).unwrap();

    let gone = run_predictor(&shell("echo no model >&2; exit 75"), &req, "ext").unwrap();
    assert_eq!(gone, ExternalOutcome::Unavailable("no model".into()));

    let failed = run_predictor(&shell("exit 3"), &req, "ext");
    assert!(matches!(failed, Err(Error::External(_))));

    // Predicts positive for every test row; arguments arrive as flag pairs.
    let script = r#"
        while [ $# -gt 0 ]; do
            case "$1" in --test) test="$2";; --out) out="$2";; esac; shift
        done
        echo patient_id,probability,prediction > "$out"
        tail -n +2 "$test" | cut -d, -f1 | sed 's/$/,0.9,1/' >> "$out"
    "#;
    match run_predictor(&shell(script), &req, "ext").unwrap() {
        ExternalOutcome::Predictions(p) => {
            assert_eq!(p.name, "ext");
            assert_eq!(p.predictions.len(), req.test_ids.len());
            assert!(p.predictions.iter().all(|&x| x));
        }
        other => panic!("{other:?}"),
    }
}
