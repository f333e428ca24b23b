//! `afrec`: AF recurrence cohort construction, scoring and model comparison
//! from discharge reports and coded records.

mod commands;
mod config;
mod logging;
mod provenance;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use afrec_core::error::{Error, ErrorKind};
use anyhow::{anyhow, Result};
use clap::{Args, Parser, Subcommand};

use commands::{Ctx, EvalInputs};
use config::Settings;

pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Parser)]
#[command(name = "afrec", version, about = "AF recurrence prediction pipeline")]
struct Cli {
    /// key=value config file; paths inside are relative to its directory.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random choice; overrides `seed` in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// error, warn, info, debug or trace.
    #[arg(long, global = true, default_value = "info", value_parser = parse_level)]
    log_level: log::LevelFilter,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic corpus with its truth manifest.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        patients: Option<usize>,
        /// es or en.
        #[arg(long)]
        language: Option<String>,
        /// Fraction of coded rows deleted after generation.
        #[arg(long)]
        corruption: Option<f64>,
        /// Target recurrence fraction among dataset patients.
        #[arg(long)]
        prevalence: Option<f64>,
    },
    /// Split reports into sections and extract entities (annotated JSONL).
    Parse {
        #[arg(long)]
        reports: PathBuf,
        #[command(flatten)]
        format: FormatArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Turn reports and coded records into feature matrices.
    Vectorize {
        #[arg(long)]
        reports: Option<PathBuf>,
        #[arg(long)]
        coded: Option<PathBuf>,
        #[command(flatten)]
        format: FormatArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Filter, confirm onset, merge, label and exclude; writes the manifest
    /// and the train/test dataset.
    Cohort {
        #[command(flatten)]
        inputs: CorpusArgs,
        #[arg(long)]
        test_fraction: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Clinical scores for every dataset row.
    Score {
        /// Dataset directory written by `cohort`.
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Preprocess, cross-validate and fit each system.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        /// Comma-separated systems such as `lr,svm+rfe,lr+lsfm`.
        #[arg(long)]
        systems: Option<String>,
        #[arg(long)]
        folds: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Metrics per subgroup and pairwise significance on the test split.
    Evaluate {
        #[arg(long)]
        dataset: PathBuf,
        /// Directory of models written by `train`.
        #[arg(long)]
        models: Option<PathBuf>,
        /// External predictions as `name=path`; repeatable.
        #[arg(long = "predictions", value_parser = parse_named_path)]
        predictions: Vec<(String, PathBuf)>,
        /// Leave the clinical scores out of the comparison.
        #[arg(long)]
        no_scores: bool,
        #[arg(long)]
        bootstrap: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Every stage end to end; synthesizes a corpus unless the config
    /// names `reports` and `coded`.
    Pipeline {
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
struct FormatArg {
    /// jsonl or text-dir.
    #[arg(long)]
    format: Option<String>,
}

#[derive(Debug, Args)]
struct CorpusArgs {
    /// Reports (JSONL file or text directory).
    #[arg(long)]
    reports: PathBuf,
    /// Coded records CSV.
    #[arg(long)]
    coded: PathBuf,
    /// Optional `patient_id,death_date` CSV.
    #[arg(long)]
    deaths: Option<PathBuf>,
    #[command(flatten)]
    format: FormatArg,
}

fn parse_level(s: &str) -> Result<log::LevelFilter, String> {
    s.parse().map_err(|_| format!("unknown log level `{s}`"))
}

fn parse_named_path(s: &str) -> Result<(String, PathBuf), String> {
    let (name, path) = s.split_once('=').ok_or_else(|| format!("expected name=path, got `{s}`"))?;
    if name.is_empty() || path.is_empty() {
        return Err(format!("expected name=path, got `{s}`"));
    }
    Ok((name.to_string(), PathBuf::from(path)))
}

/// Exit statuses; see README.
mod exit {
    pub const OTHER: u8 = 1;
    pub const USAGE: u8 = 2;
    pub const IO: u8 = 3;
    pub const SCHEMA: u8 = 4;
    pub const INVALID_INPUT: u8 = 5;
    pub const PROCESSING: u8 = 6;
}

fn classify(err: &anyhow::Error) -> (&'static str, u8) {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e.kind() {
                ErrorKind::Io => ("io", exit::IO),
                ErrorKind::Schema => ("schema", exit::SCHEMA),
                ErrorKind::InvalidInput => ("invalid_input", exit::INVALID_INPUT),
                ErrorKind::Processing => ("processing", exit::PROCESSING),
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return ("io", exit::IO);
        }
    }
    ("other", exit::OTHER)
}

/// The cause chain joined by `: `, skipping causes the previous message
/// already ends with.
fn describe(err: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in err.chain() {
        let msg = cause.to_string();
        if !out.ends_with(&msg) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&msg);
        }
    }
    out
}

fn error_record(kind: &str, code: u8, message: &str) {
    let rec = serde_json::json!({
        "level": "error",
        "event": "failure",
        "kind": kind,
        "exit_code": code,
        "message": message,
    });
    eprintln!("{rec}");
}

fn settings_for(cli: &Cli) -> Result<Settings> {
    let mut s = match &cli.config {
        Some(p) => Settings::load(p)?,
        None => Settings::default(),
    };
    if let Some(seed) = cli.seed {
        s.set("seed", seed);
    }
    if let Some(w) = cli.workers {
        s.set("workers", w);
    }
    let set_opt = |s: &mut Settings, key: &str, v: Option<String>| {
        if let Some(v) = v {
            s.set(key, v);
        }
    };
    match &cli.command {
        Command::Synth {
            patients,
            language,
            corruption,
            prevalence,
            ..
        } => {
            set_opt(&mut s, "patients", patients.map(|x| x.to_string()));
            set_opt(&mut s, "language", language.clone());
            set_opt(&mut s, "corruption", corruption.map(|x| x.to_string()));
            set_opt(&mut s, "prevalence", prevalence.map(|x| x.to_string()));
        }
        Command::Parse { format, .. } | Command::Vectorize { format, .. } => {
            set_opt(&mut s, "corpus_format", format.format.clone());
        }
        Command::Cohort { inputs, test_fraction, .. } => {
            set_opt(&mut s, "corpus_format", inputs.format.format.clone());
            set_opt(&mut s, "test_fraction", test_fraction.map(|x| x.to_string()));
        }
        Command::Train { systems, folds, .. } => {
            set_opt(&mut s, "systems", systems.clone());
            set_opt(&mut s, "folds", folds.map(|x| x.to_string()));
        }
        Command::Evaluate { bootstrap, .. } => {
            set_opt(&mut s, "bootstrap", bootstrap.map(|x| x.to_string()));
        }
        Command::Score { .. } | Command::Pipeline { .. } => {}
    }
    Ok(s)
}

fn configure_workers(settings: &Settings) -> Result<()> {
    let workers: Option<usize> = settings.get("workers")?;
    if let Some(n) = workers {
        if n == 0 {
            return Err(Error::Config("workers must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| anyhow!("cannot start worker pool: {e}"))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let settings = settings_for(&cli)?;
    configure_workers(&settings)?;
    let seed = settings.get_or("seed", DEFAULT_SEED)?;
    let ctx = Ctx::new(settings, seed)?;
    log::debug!("config sha256 {}", ctx.config_sha256);
    match &cli.command {
        Command::Synth { out, .. } => commands::synth(&ctx, out).map(|_| ()),
        Command::Parse { reports, out, .. } => commands::parse(&ctx, reports, out),
        Command::Vectorize { reports, coded, out, .. } => {
            commands::vectorize(&ctx, reports.as_deref(), coded.as_deref(), out)
        }
        Command::Cohort { inputs, out, .. } => {
            let deaths = inputs.deaths.as_deref();
            let corpus = commands::load_inputs(&inputs.reports, &inputs.coded, deaths, &ctx.settings)?;
            let sums = commands::input_sums(&commands::corpus_paths(&inputs.reports, &inputs.coded, deaths))?;
            commands::cohort(&ctx, &corpus, out, &sums).map(|_| ())
        }
        Command::Score { dataset, out } => {
            let ds = commands::read_dataset(&ctx, dataset)?;
            commands::score(&ctx, &ds, out, &commands::input_sums(&[("dataset", dataset)])?)
        }
        Command::Train { dataset, out, .. } => {
            let ds = commands::read_dataset(&ctx, dataset)?;
            commands::train(&ctx, &ds, out, &commands::input_sums(&[("dataset", dataset)])?).map(|_| ())
        }
        Command::Evaluate {
            dataset,
            models,
            predictions,
            no_scores,
            out,
            ..
        } => {
            let ds = commands::read_dataset(&ctx, dataset)?;
            let trained = match models {
                Some(dir) => commands::read_models(dir)?,
                None => Vec::new(),
            };
            let mut roles: Vec<(String, &Path)> = vec![("dataset".into(), dataset.as_path())];
            if let Some(m) = models {
                roles.push(("models".into(), m.as_path()));
            }
            for (name, path) in predictions {
                if !path.is_file() {
                    return Err(Error::io(
                        path,
                        std::io::Error::new(std::io::ErrorKind::NotFound, "predictions file not found"),
                    )
                    .into());
                }
                roles.push((format!("predictions:{name}"), path.as_path()));
            }
            let pairs: Vec<(&str, &Path)> = roles.iter().map(|(r, p)| (r.as_str(), *p)).collect();
            let sums = commands::input_sums(&pairs)?;
            let inputs = EvalInputs {
                models: &trained,
                scores: !no_scores,
                predictions,
                extra: Vec::new(),
            };
            commands::evaluate(&ctx, &ds, inputs, out, &sums).map(|_| ())
        }
        Command::Pipeline { out } => commands::pipeline(&ctx, out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            if !e.use_stderr() {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            error_record("usage", exit::USAGE, e.render().to_string().trim());
            return ExitCode::from(exit::USAGE);
        }
    };
    logging::init(cli.log_level);
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let (kind, code) = classify(&err);
            error_record(kind, code, &describe(&err));
            ExitCode::from(code)
        }
    }
}
