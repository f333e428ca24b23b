//! Subcommand bodies. Each stage takes in-memory inputs so `pipeline` can
//! chain them without re-reading its own outputs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use afrec_core::cohort_builder::{CohortEntry, ExclusionReason};
use afrec_core::data_model::{io, CodedRecord, Dataset, DischargeReport, RecurrenceLabel, Split};
use afrec_core::error::Error;
use afrec_core::evaluation::{EvalReport, SystemPredictions};
use afrec_core::experiment::{evaluate_systems, score_predictions, train_all, SystemSpec, TrainConfig, TrainedSystem, DEFAULT_BOOTSTRAP};
use afrec_core::external::{read_predictions, run_predictor, write_request, ExternalOutcome, Variant};
use afrec_core::pipeline::{build_cohort, build_dataset, vectorize_all_coded, vectorize_reports, write_manifest_file, Resources, DEFAULT_TEST_FRACTION};
use afrec_core::preprocessing::{FittedPipeline, PipelineConfig, Selection};
use afrec_core::synthetic_corpus::{generate, GeneratorConfig, Language, SyntheticCorpus};
use anyhow::{Context, Result};
use chrono::NaiveDate;
use log::{info, warn};
use serde::Serialize;

use crate::config::Settings;
use crate::provenance::{sha256_input, write_sidecar};

pub const DEFAULT_PATIENTS: usize = 500;
pub const ANNOTATED_FILE: &str = "annotated.jsonl";
pub const REPORT_VECTORS_FILE: &str = "report_vectors.csv";
pub const CODED_VECTORS_FILE: &str = "coded_vectors.csv";
pub const MANIFEST_FILE: &str = "manifest.csv";
pub const DATASET_DIR: &str = "dataset";
pub const CELL_SOURCES_FILE: &str = "cell_sources.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";
pub const SCORES_FILE: &str = "scores.csv";
pub const MODES_FILE: &str = "modes.json";

/// State shared by every stage of one invocation.
pub struct Ctx {
    pub settings: Settings,
    pub seed: u64,
    pub res: Resources,
    pub config_sha256: String,
}

pub type Inputs = BTreeMap<String, String>;

impl Ctx {
    pub fn new(settings: Settings, seed: u64) -> Result<Ctx> {
        let overrides = settings.resource_paths();
        let res = Resources::load(&overrides.as_paths())?;
        let config_sha256 = settings.digest();
        Ok(Ctx {
            settings,
            seed,
            res,
            config_sha256,
        })
    }

    fn seal(&self, dir: &Path, command: &str, inputs: &Inputs) -> Result<()> {
        write_sidecar(dir, command, self.seed, &self.config_sha256, inputs)
    }
}

pub fn input_sums(pairs: &[(&str, &Path)]) -> Result<Inputs> {
    pairs
        .iter()
        .map(|(role, p)| Ok((role.to_string(), sha256_input(p)?)))
        .collect()
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    Ok(())
}

pub struct Corpus {
    pub reports: Vec<DischargeReport>,
    pub coded: Vec<CodedRecord>,
    pub deaths: BTreeMap<String, NaiveDate>,
}

pub fn load_inputs(reports: &Path, coded: &Path, deaths: Option<&Path>, settings: &Settings) -> Result<Corpus> {
    let format: io::CorpusFormat = settings.get_or("corpus_format", io::CorpusFormat::Jsonl)?;
    Ok(Corpus {
        reports: io::load_corpus(reports, format)?,
        coded: io::read_coded_csv(coded)?,
        deaths: match deaths {
            Some(p) => io::read_deaths(p)?,
            None => BTreeMap::new(),
        },
    })
}

// synth

pub fn generator_config(ctx: &Ctx) -> Result<GeneratorConfig> {
    let s = &ctx.settings;
    let mut g = GeneratorConfig::new(s.get_or("patients", DEFAULT_PATIENTS)?, ctx.seed);
    if let Some(l) = s.get::<Language>("language")? {
        g.language = l;
    }
    if let Some(p) = s.get::<f64>("prevalence")? {
        g.prevalence = p;
    }
    if let Some(c) = s.get::<f64>("corruption")? {
        g.corruption_rate = c;
    }
    g.validate()?;
    Ok(g)
}

pub fn synth(ctx: &Ctx, out: &Path) -> Result<SyntheticCorpus> {
    let config = generator_config(ctx)?;
    info!("generating {} synthetic patients", config.patients);
    let corpus = generate(&config, &ctx.res.schema)?;
    create_dir(out)?;
    corpus.write(out, &ctx.res.schema)?;
    ctx.seal(out, "synth", &Inputs::new())?;
    info!(
        "wrote {} reports and {} coded rows to {}",
        corpus.reports.len(),
        corpus.coded.len(),
        out.display()
    );
    Ok(corpus)
}

// parse

pub fn parse(ctx: &Ctx, reports: &Path, out: &Path) -> Result<()> {
    let format: io::CorpusFormat = ctx.settings.get_or("corpus_format", io::CorpusFormat::Jsonl)?;
    let corpus = io::load_corpus(reports, format)?;
    let annotated: Vec<_> = corpus.iter().map(|r| ctx.res.annotate(r)).collect();
    create_dir(out)?;
    io::write_jsonl(&out.join(ANNOTATED_FILE), &annotated)?;
    ctx.seal(out, "parse", &input_sums(&[("reports", reports)])?)?;
    info!("annotated {} reports", annotated.len());
    Ok(())
}

// vectorize

pub fn vectorize(ctx: &Ctx, reports: Option<&Path>, coded: Option<&Path>, out: &Path) -> Result<()> {
    if reports.is_none() && coded.is_none() {
        return Err(Error::InvalidArgument("give --reports, --coded or both".into()).into());
    }
    create_dir(out)?;
    let mut inputs = Vec::new();
    if let Some(path) = reports {
        let format: io::CorpusFormat = ctx.settings.get_or("corpus_format", io::CorpusFormat::Jsonl)?;
        let vectors = vectorize_reports(&io::load_corpus(path, format)?, &ctx.res)?;
        io::write_feature_matrix_file(&out.join(REPORT_VECTORS_FILE), &ctx.res.schema, &vectors)?;
        info!("vectorized {} reports", vectors.len());
        inputs.push(("reports", path));
    }
    if let Some(path) = coded {
        let vectors = vectorize_all_coded(&io::read_coded_csv(path)?, &ctx.res)?;
        io::write_feature_matrix_file(&out.join(CODED_VECTORS_FILE), &ctx.res.schema, &vectors)?;
        info!("vectorized coded records into {} dated vectors", vectors.len());
        inputs.push(("coded", path));
    }
    ctx.seal(out, "vectorize", &input_sums(&inputs)?)
}

// cohort

#[derive(Debug, Serialize)]
struct CohortSummary {
    patients: usize,
    in_dataset: usize,
    recurred: usize,
    no_recurrence: usize,
    discarded: usize,
    excluded: BTreeMap<&'static str, usize>,
    unmapped_codes: usize,
    train_rows: usize,
    test_rows: usize,
}

#[derive(Serialize)]
struct CellSourcesLine<'a> {
    patient_id: &'a str,
    sources: BTreeMap<&'a str, &'a afrec_core::vector_merger::CellSource>,
}

pub fn cohort(ctx: &Ctx, corpus: &Corpus, out: &Path, inputs: &Inputs) -> Result<(Vec<CohortEntry>, Dataset)> {
    let build = build_cohort(&corpus.reports, &corpus.coded, &corpus.deaths, &ctx.res)?;
    for w in &build.exclusion_warnings {
        warn!("{}", serde_json::to_string(w)?);
    }
    let entries = build.entries();
    let test_fraction = ctx.settings.get_or("test_fraction", DEFAULT_TEST_FRACTION)?;
    let ds = build_dataset(&entries, &ctx.res.schema, test_fraction, ctx.seed)?;

    create_dir(out)?;
    write_manifest_file(&out.join(MANIFEST_FILE), &entries)?;
    let ds_dir = out.join(DATASET_DIR);
    create_dir(&ds_dir)?;
    io::write_dataset(&ds_dir, &ds)?;
    let names: Vec<&str> = ctx.res.schema.names().collect();
    let lines: Vec<CellSourcesLine> = build
        .patients
        .iter()
        .filter(|p| p.entry.in_dataset())
        .filter_map(|p| {
            let prov = p.provenance.as_ref()?;
            Some(CellSourcesLine {
                patient_id: &p.entry.patient_id,
                sources: names
                    .iter()
                    .zip(prov)
                    .filter_map(|(n, s)| s.as_ref().map(|s| (*n, s)))
                    .collect(),
            })
        })
        .collect();
    io::write_jsonl(&out.join(CELL_SOURCES_FILE), &lines)?;

    let mut excluded = BTreeMap::new();
    for reason in ExclusionReason::ALL {
        excluded.insert(reason.as_str(), entries.iter().filter(|e| e.exclusion == Some(reason)).count());
    }
    let summary = CohortSummary {
        patients: entries.len(),
        in_dataset: ds.rows.len(),
        recurred: build.count(RecurrenceLabel::Recurred),
        no_recurrence: build.count(RecurrenceLabel::NoRecurrence),
        discarded: entries
            .iter()
            .filter(|e| !e.excluded() && e.label == Some(RecurrenceLabel::Discarded))
            .count(),
        excluded,
        unmapped_codes: build.unmapped_codes,
        train_rows: ds.indices(Split::Train).len(),
        test_rows: ds.indices(Split::Test).len(),
    };
    io::write_json(&out.join(SUMMARY_FILE), &summary)?;
    ctx.seal(out, "cohort", inputs)?;
    info!(
        "cohort: {} patients, {} in dataset ({} recurred)",
        summary.patients, summary.in_dataset, summary.recurred
    );
    Ok((entries, ds))
}

pub fn read_dataset(ctx: &Ctx, dir: &Path) -> Result<Dataset> {
    Ok(io::read_dataset(dir, &ctx.res.schema)?)
}

// score

pub fn score(ctx: &Ctx, ds: &Dataset, out: &Path, inputs: &Inputs) -> Result<()> {
    let (imputed, modes) = afrec_core::clinical_scores::impute_mode_for_scores(ds, &ctx.res.scores)?;
    let rows = afrec_core::clinical_scores::score_rows(&imputed.rows, &ctx.res.scores);
    create_dir(out)?;
    afrec_core::clinical_scores::write_score_csv(io::create_file(&out.join(SCORES_FILE))?, &ctx.res.scores, &rows)?;
    io::write_json(&out.join(MODES_FILE), &modes)?;
    ctx.seal(out, "score", inputs)?;
    info!("scored {} patients", rows.len());
    Ok(())
}

// train

pub fn train_config(ctx: &Ctx) -> Result<TrainConfig> {
    let s = &ctx.settings;
    let mut c = TrainConfig::new(ctx.seed);
    let systems = s.list("systems");
    if !systems.is_empty() {
        c.systems = systems.iter().map(|x| x.parse::<SystemSpec>()).collect::<Result<_, _>>()?;
    }
    c.folds = s.get_or("folds", c.folds)?;
    c.undersample = s.get_or("undersample", c.undersample)?;
    Ok(c)
}

pub fn train(ctx: &Ctx, ds: &Dataset, out: &Path, inputs: &Inputs) -> Result<Vec<TrainedSystem>> {
    let config = train_config(ctx)?;
    let systems = train_all(ds, &config)?;
    create_dir(out)?;
    for s in &systems {
        io::write_json(&out.join(format!("{}.json", s.spec.name)), s)?;
        info!(
            "trained {} on {} columns, best C {}",
            s.spec.name,
            s.pipeline.selected_columns.len(),
            s.model.hyperparameters.c
        );
    }
    ctx.seal(out, "train", inputs)?;
    Ok(systems)
}

/// Models saved by [`train`], in file-name order.
pub fn read_models(dir: &Path) -> Result<Vec<TrainedSystem>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json") && !p.ends_with(crate::provenance::PROVENANCE_FILE))
        .collect();
    files.sort();
    files
        .iter()
        .map(|p| io::read_json::<TrainedSystem>(p).with_context(|| format!("loading model {}", p.display())))
        .collect()
}

// external

/// Runs the configured external predictor for each variant. Unavailable
/// models are skipped with a warning.
pub fn external(ctx: &Ctx, ds: &Dataset, out: &Path) -> Result<Vec<SystemPredictions>> {
    let Some(command) = ctx.settings.raw("external_predictor") else {
        return Ok(Vec::new());
    };
    let command: Vec<String> = command.split_whitespace().map(String::from).collect();
    let mut variants = ctx.settings.list("external_variants");
    if variants.is_empty() {
        variants = vec!["raw".into(), "pre".into()];
    }
    let train = ds.indices(Split::Train);
    let pc = PipelineConfig {
        undersample: ctx.settings.get_or("undersample", true)?,
        selection: Selection::None,
        seed: ctx.seed,
    };
    let (pipeline, kept) = FittedPipeline::fit(ds, &train, &pc)?;
    create_dir(out)?;
    let mut systems = Vec::new();
    for v in variants {
        let variant: Variant = v.parse()?;
        let req = write_request(out, ds, variant, &pipeline, &kept)?;
        let name = format!("external_{}", variant.as_str());
        match run_predictor(&command, &req, &name)? {
            ExternalOutcome::Predictions(p) => {
                info!("{name}: {} predictions", p.predictions.len());
                systems.push(p);
            }
            ExternalOutcome::Unavailable(msg) => warn!("{name} skipped, model unavailable: {msg}"),
        }
    }
    ctx.seal(out, "external", &Inputs::new())?;
    Ok(systems)
}

// evaluate

pub struct EvalInputs<'a> {
    pub models: &'a [TrainedSystem],
    pub scores: bool,
    pub predictions: &'a [(String, PathBuf)],
    pub extra: Vec<SystemPredictions>,
}

pub fn evaluate(ctx: &Ctx, ds: &Dataset, e: EvalInputs<'_>, out: &Path, inputs: &Inputs) -> Result<EvalReport> {
    let test = ds.indices(Split::Test);
    let test_ids: Vec<String> = test.iter().map(|&i| ds.rows[i].patient_id.clone()).collect();
    let mut systems = Vec::new();
    for m in e.models {
        systems.push(m.predict(ds, &test)?);
    }
    if e.scores {
        let (s, _) = score_predictions(ds, &ctx.res.scores, &test)?;
        systems.extend(s);
    }
    systems.extend(e.extra);
    for (name, path) in e.predictions {
        let (probabilities, predictions) =
            read_predictions(path, &test_ids).with_context(|| format!("predictions for `{name}`"))?;
        systems.push(SystemPredictions {
            name: name.clone(),
            predictions,
            probabilities: Some(probabilities),
        });
    }
    if systems.is_empty() {
        return Err(Error::InvalidArgument("nothing to evaluate".into()).into());
    }
    let bootstrap = ctx.settings.get_or("bootstrap", DEFAULT_BOOTSTRAP)?;
    let report = evaluate_systems(ds, &systems, bootstrap, ctx.seed)?;
    create_dir(out)?;
    report.write_csv(io::create_file(&out.join("eval.csv"))?)?;
    let txt = out.join("eval.txt");
    std::fs::write(&txt, report.text_table()).map_err(|err| Error::io(&txt, err))?;
    io::write_json(&out.join("eval.json"), &report)?;
    ctx.seal(out, "evaluate", inputs)?;
    info!("evaluated {} systems on {} test rows", systems.len(), test.len());
    Ok(report)
}

// pipeline

/// Synthesizes a corpus unless the config names one, then runs every stage.
pub fn pipeline(ctx: &Ctx, out: &Path) -> Result<()> {
    create_dir(out)?;
    let s = &ctx.settings;
    let (corpus, corpus_inputs) = match (s.path("reports"), s.path("coded")) {
        (Some(r), Some(c)) => {
            let d = s.path("deaths");
            let mut inputs = input_sums(&[("reports", &r), ("coded", &c)])?;
            if let Some(d) = &d {
                inputs.extend(input_sums(&[("deaths", d)])?);
            }
            (load_inputs(&r, &c, d.as_deref(), s)?, inputs)
        }
        (None, None) => {
            let dir = out.join("corpus");
            let g = synth(ctx, &dir)?;
            let inputs = input_sums(&[("corpus", &dir)])?;
            (
                Corpus {
                    reports: g.reports,
                    coded: g.coded,
                    deaths: g.deaths,
                },
                inputs,
            )
        }
        _ => return Err(Error::Config("`reports` and `coded` must be set together".into()).into()),
    };
    let cohort_dir = out.join("cohort");
    let (_, ds) = cohort(ctx, &corpus, &cohort_dir, &corpus_inputs)?;
    let ds_inputs = input_sums(&[("dataset", &cohort_dir.join(DATASET_DIR))])?;
    score(ctx, &ds, &out.join("scores"), &ds_inputs)?;
    let models_dir = out.join("models");
    let models = train(ctx, &ds, &models_dir, &ds_inputs)?;
    let extra = external(ctx, &ds, &out.join("external"))?;
    let mut eval_inputs = ds_inputs.clone();
    eval_inputs.extend(input_sums(&[("models", &models_dir)])?);
    evaluate(
        ctx,
        &ds,
        EvalInputs {
            models: &models,
            scores: true,
            predictions: &[],
            extra,
        },
        &out.join("eval"),
        &eval_inputs,
    )?;
    ctx.seal(out, "pipeline", &corpus_inputs)
}

/// Existing input paths for the stand-alone `cohort` subcommand.
pub fn corpus_paths<'a>(reports: &'a Path, coded: &'a Path, deaths: Option<&'a Path>) -> Vec<(&'static str, &'a Path)> {
    let mut v = vec![("reports", reports), ("coded", coded)];
    if let Some(d) = deaths {
        v.push(("deaths", d));
    }
    v
}
