//! Subprocess protocol for externally implemented predictors.
//!
//! The predictor is invoked as
//! `<command> predict --train X --labels y --test Z --out P --variant raw|pre`
//! where X and Z are feature matrices (`patient_id,date,<columns>`), y is a
//! labels file (`patient_id,label,split`) and P receives
//! `patient_id,probability,prediction`. Exit status [`UNAVAILABLE_EXIT`]
//! means the model is not installed; the caller skips that system.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data_model::{io, Dataset, FeatureVector, Split};
use crate::error::{Error, Result};
use crate::evaluation::SystemPredictions;
use crate::preprocessing::FittedPipeline;

/// EX_TEMPFAIL from sysexits.h.
pub const UNAVAILABLE_EXIT: i32 = 75;
pub const PREDICTIONS_HEADER: [&str; 3] = ["patient_id", "probability", "prediction"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Un-imputed matrices; missing cells are empty fields.
    Raw,
    /// Output of the fitted preprocessing pipeline.
    Pre,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Raw => "raw",
            Variant::Pre => "pre",
        }
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "raw" => Ok(Variant::Raw),
            "pre" | "preprocessed" => Ok(Variant::Pre),
            other => Err(Error::Config(format!("unknown predictor variant `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredictRequest {
    pub train: PathBuf,
    pub labels: PathBuf,
    pub test: PathBuf,
    pub out: PathBuf,
    pub variant: Variant,
    /// Test patient ids in matrix order.
    pub test_ids: Vec<String>,
}

fn write_labels(path: &Path, ds: &Dataset, rows: &[usize]) -> Result<()> {
    let mut w = io::csv_writer(path)?;
    let err = |e| io::csv_write_error(path, e);
    w.write_record(["patient_id", "label", "split"]).map_err(err)?;
    for &i in rows {
        w.write_record([
            ds.rows[i].patient_id.as_str(),
            if ds.labels[i] { "1" } else { "0" },
            ds.splits[i].as_str(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes `train_<variant>.csv`, `test_<variant>.csv` and
/// `train_labels_<variant>.csv` into `dir`.
///
/// The raw variant uses every training row; the preprocessed variant uses the
/// rows the pipeline kept after undersampling.
pub fn write_request(
    dir: &Path,
    ds: &Dataset,
    variant: Variant,
    pipeline: &FittedPipeline,
    kept_train: &[usize],
) -> Result<PredictRequest> {
    let v = variant.as_str();
    let req = PredictRequest {
        train: dir.join(format!("train_{v}.csv")),
        labels: dir.join(format!("train_labels_{v}.csv")),
        test: dir.join(format!("test_{v}.csv")),
        out: dir.join(format!("predictions_{v}.csv")),
        variant,
        test_ids: Vec::new(),
    };
    let test = ds.indices(Split::Test);
    let train = match variant {
        Variant::Raw => ds.indices(Split::Train),
        Variant::Pre => kept_train.to_vec(),
    };
    match variant {
        Variant::Raw => {
            let pick = |rows: &[usize]| rows.iter().map(|&i| ds.rows[i].clone()).collect::<Vec<_>>();
            io::write_feature_matrix_file(&req.train, &ds.schema, &pick(&train))?;
            io::write_feature_matrix_file(&req.test, &ds.schema, &pick(&test))?;
        }
        Variant::Pre => {
            let cols: Vec<usize> = pipeline
                .selected_columns
                .iter()
                .map(|c| ds.schema.require(c))
                .collect::<Result<_>>()?;
            let schema = ds.schema.project(&cols)?;
            for (rows, path) in [(&train, &req.train), (&test, &req.test)] {
                let m = pipeline.transform(ds, rows)?;
                let vectors: Vec<FeatureVector> = rows
                    .iter()
                    .enumerate()
                    .map(|(r, &i)| FeatureVector {
                        patient_id: ds.rows[i].patient_id.clone(),
                        source_report_id: None,
                        date: ds.rows[i].date,
                        cells: m.row(r).iter().map(|&x| Some(x)).collect(),
                    })
                    .collect();
                io::write_feature_matrix_file(path, &schema, &vectors)?;
            }
        }
    }
    write_labels(&req.labels, ds, &train)?;
    Ok(PredictRequest {
        test_ids: test.iter().map(|&i| ds.rows[i].patient_id.clone()).collect(),
        ..req
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExternalOutcome {
    Predictions(SystemPredictions),
    /// The predictor reported that its model is not installed.
    Unavailable(String),
}

/// Runs `command` (program followed by fixed arguments) on `req`.
pub fn run_predictor(command: &[String], req: &PredictRequest, name: &str) -> Result<ExternalOutcome> {
    let (program, fixed) = command
        .split_first()
        .ok_or_else(|| Error::Config("empty external predictor command".into()))?;
    let output = Command::new(program)
        .args(fixed)
        .arg("predict")
        .arg("--train")
        .arg(&req.train)
        .arg("--labels")
        .arg(&req.labels)
        .arg("--test")
        .arg(&req.test)
        .arg("--out")
        .arg(&req.out)
        .arg("--variant")
        .arg(req.variant.as_str())
        .output()
        .map_err(|e| Error::External(format!("cannot start `{program}`: {e}")))?;
    let stderr = String::from_utf8_lossy(&output.stderr).trim().to_string();
    match output.status.code() {
        Some(0) => {}
        Some(UNAVAILABLE_EXIT) => return Ok(ExternalOutcome::Unavailable(stderr)),
        code => {
            return Err(Error::External(format!(
                "`{program}` exited with {}: {stderr}",
                code.map_or("a signal".to_string(), |c| c.to_string())
            )))
        }
    }
    let (probabilities, predictions) = read_predictions(&req.out, &req.test_ids)?;
    Ok(ExternalOutcome::Predictions(SystemPredictions {
        name: name.to_string(),
        predictions,
        probabilities: Some(probabilities),
    }))
}

/// Reads a predictions file and aligns it with `expected` patient ids.
pub fn read_predictions(path: &Path, expected: &[String]) -> Result<(Vec<f64>, Vec<bool>)> {
    let mut rdr = io::open_csv(path)?;
    let header = rdr.headers().map_err(|e| io::csv_write_error(path, e))?.clone();
    if header.iter().ne(PREDICTIONS_HEADER) {
        return Err(Error::SchemaMismatch(format!(
            "{}: expected header `{}`",
            path.display(),
            PREDICTIONS_HEADER.join(",")
        )));
    }
    let mut by_id = std::collections::HashMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| io::csv_write_error(path, e))?;
        let pid = rec[0].to_string();
        let p: f64 = rec[1]
            .parse()
            .ok()
            .filter(|p: &f64| (0.0..=1.0).contains(p))
            .ok_or_else(|| Error::malformed(&pid, "probability", rec[1].to_string()))?;
        let pred = match &rec[2] {
            "1" => true,
            "0" => false,
            other => return Err(Error::malformed(&pid, "prediction", other.to_string())),
        };
        if by_id.insert(pid.clone(), (p, pred)).is_some() {
            return Err(Error::malformed(&pid, "patient_id", "listed twice".to_string()));
        }
    }
    if by_id.len() != expected.len() {
        return Err(Error::InvalidArgument(format!(
            "{} has {} rows, expected {}",
            path.display(),
            by_id.len(),
            expected.len()
        )));
    }
    expected
        .iter()
        .map(|id| {
            by_id
                .get(id)
                .copied()
                .ok_or_else(|| Error::malformed(id, "patient_id", format!("missing from {}", path.display())))
        })
        .collect::<Result<Vec<_>>>()
        .map(|v| v.into_iter().unzip())
}
