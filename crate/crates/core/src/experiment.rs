//! Training and evaluation of the compared systems: first-party linear
//! models under each feature-selection variant, the clinical scores, and any
//! externally predicted systems.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::clinical_scores::{impute_mode_for_scores, score_rows, Modes, Score};
use crate::data_model::{Dataset, Split};
use crate::error::{Error, Result};
use crate::evaluation::{paired_bootstrap_test, subgroup_report, EvalReport, Metric, SignificanceRow, SystemPredictions};
use crate::models::{cross_validate, default_grid, CvResult, Hyperparameters, LinearModel, ModelKind};
use crate::preprocessing::{FittedPipeline, PipelineConfig, Selection};

pub const DEFAULT_FOLDS: usize = 5;
pub const DEFAULT_BOOTSTRAP: usize = 1000;
pub const BOOTSTRAP_METHOD: &str = "paired bootstrap-t (substitute for an unspecified paired t-test)";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    pub name: String,
    pub kind: ModelKind,
    pub selection: Selection,
}

impl FromStr for SystemSpec {
    type Err = Error;

    /// `kind` or `kind+selection`, e.g. `svm+rfe` or `lr`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (kind, sel) = s.split_once('+').unwrap_or((s, "none"));
        let kind: ModelKind = kind.parse()?;
        let selection: Selection = sel.parse()?;
        let short = match kind {
            ModelKind::Logistic => "lr",
            ModelKind::Hinge => "svm",
        };
        let name = match &selection {
            Selection::None => short.to_string(),
            Selection::Rfe { .. } => format!("{short}_rfe"),
            Selection::Lsfm { .. } => format!("{short}_lsfm"),
        };
        Ok(SystemSpec { name, kind, selection })
    }
}

pub fn default_systems() -> Vec<SystemSpec> {
    ["lr", "lr+rfe", "lr+lsfm", "svm", "svm+rfe", "svm+lsfm"]
        .iter()
        .map(|s| s.parse().expect("valid system spec"))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub systems: Vec<SystemSpec>,
    pub folds: usize,
    pub grid: Vec<Hyperparameters>,
    pub undersample: bool,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(seed: u64) -> Self {
        TrainConfig {
            systems: default_systems(),
            folds: DEFAULT_FOLDS,
            grid: default_grid(seed),
            undersample: true,
            seed,
        }
    }
}

/// Everything needed to apply one trained system to new rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedSystem {
    pub spec: SystemSpec,
    pub pipeline: FittedPipeline,
    pub cv: CvResult,
    pub model: LinearModel,
}

impl TrainedSystem {
    pub fn predict(&self, ds: &Dataset, rows: &[usize]) -> Result<SystemPredictions> {
        let x = self.pipeline.transform(ds, rows)?;
        let probabilities = self.model.predict_proba(&x)?;
        Ok(SystemPredictions {
            name: self.spec.name.clone(),
            predictions: probabilities.iter().map(|&p| p >= 0.5).collect(),
            probabilities: Some(probabilities),
        })
    }
}

/// Fits preprocessing on the train split, then grid-searches the model by
/// cross-validation on the kept training rows.
pub fn train_system(ds: &Dataset, spec: &SystemSpec, config: &TrainConfig) -> Result<TrainedSystem> {
    let train = ds.indices(Split::Train);
    let pc = PipelineConfig {
        undersample: config.undersample,
        selection: spec.selection.clone(),
        seed: config.seed,
    };
    let (pipeline, kept) = FittedPipeline::fit(ds, &train, &pc)?;
    let x = pipeline.transform(ds, &kept)?;
    let y = ds.labels_of(&kept);
    let (cv, model) = cross_validate(&x, &y, spec.kind, &config.grid, config.folds, config.seed, &pipeline.selected_columns)?;
    Ok(TrainedSystem {
        spec: spec.clone(),
        pipeline,
        cv,
        model,
    })
}

pub fn train_all(ds: &Dataset, config: &TrainConfig) -> Result<Vec<TrainedSystem>> {
    config.systems.iter().map(|s| train_system(ds, s, config)).collect()
}

/// Score predictions on `rows` after train-mode imputation. Probabilities
/// are the score over its maximum, which only serves the rank-based AUC.
pub fn score_predictions(ds: &Dataset, scores: &[Score], rows: &[usize]) -> Result<(Vec<SystemPredictions>, Modes)> {
    let (imputed, modes) = impute_mode_for_scores(ds, scores)?;
    let vectors: Vec<_> = rows.iter().map(|&i| imputed.rows[i].clone()).collect();
    let out = score_rows(&vectors, scores);
    let systems = scores
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let max = f64::from(s.definition.max_points().max(1));
            SystemPredictions {
                name: s.name().to_string(),
                predictions: out.iter().map(|r| r.predictions[k]).collect(),
                probabilities: Some(out.iter().map(|r| f64::from(r.scores[k]) / max).collect()),
            }
        })
        .collect();
    Ok((systems, modes))
}

/// Subgroup metrics for every system on the test split plus pairwise
/// bootstrap comparisons on MCC.
pub fn evaluate_systems(ds: &Dataset, systems: &[SystemPredictions], bootstrap: usize, seed: u64) -> Result<EvalReport> {
    let test = ds.indices(Split::Test);
    if test.is_empty() {
        return Err(Error::InvalidArgument("empty test split".into()));
    }
    let rows: Vec<_> = test.iter().map(|&i| ds.rows[i].clone()).collect();
    let labels = ds.labels_of(&test);
    let mut report = subgroup_report(&rows, &ds.schema, &labels, systems)?;
    for (a, sa) in systems.iter().enumerate() {
        for sb in &systems[a + 1..] {
            let result = paired_bootstrap_test(&labels, &sa.predictions, &sb.predictions, Metric::Mcc, bootstrap, seed)?;
            report.significance.push(SignificanceRow {
                system_a: sa.name.clone(),
                system_b: sb.name.clone(),
                metric: Metric::Mcc,
                method: BOOTSTRAP_METHOD.to_string(),
                result,
            });
        }
    }
    Ok(report)
}
