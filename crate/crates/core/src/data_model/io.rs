//! Interchange formats: report corpora, coded-record CSV, schema CSV, the
//! feature-matrix CSV and dataset directories.

use std::collections::{BTreeMap, HashSet};
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::Serialize;

use crate::error::{Error, Result};

use super::report::{CodedRecord, DischargeReport};
use super::schema::{ColumnKind, ColumnSpec, FeatureSchema, WindowClass};
use super::vector::{Dataset, FeatureVector, Split};

pub const DATE_FORMAT: &str = "%Y-%m-%d";
pub const SIDECAR_FILE: &str = "index.csv";
pub const MATRIX_FILE: &str = "matrix.csv";
pub const LABELS_FILE: &str = "labels.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    /// One JSON object per line with `report_id`, `patient_id`, `date`, `body`.
    Jsonl,
    /// Directory of `.txt` bodies plus an `index.csv` sidecar
    /// (`report_id,patient_id,date,filename`).
    TextDirectory,
}

impl FromStr for CorpusFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jsonl" | "report-jsonl" => Ok(CorpusFormat::Jsonl),
            "text-dir" | "text-directory" => Ok(CorpusFormat::TextDirectory),
            other => Err(Error::Config(format!("unknown corpus format `{other}`"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LoadOptions {
    /// Reports dated after this are rejected.
    pub reference_date: NaiveDate,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            reference_date: chrono::Utc::now().date_naive(),
        }
    }
}

pub fn parse_date(record: &str, field: &str, s: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), DATE_FORMAT)
        .map_err(|e| Error::malformed(record, field, format!("`{s}` is not an ISO date ({e})")))
}

pub fn format_number(v: f64) -> String {
    format!("{v}")
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::malformed(path.display().to_string(), "csv", format!("{other:?}")),
    }
}

fn csv_reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(r)
}

fn check_header(path: &Path, actual: &csv::StringRecord, expected: &[&str]) -> Result<()> {
    let got: Vec<&str> = actual.iter().collect();
    if got != expected {
        return Err(Error::SchemaMismatch(format!(
            "{}: expected header `{}`, found `{}`",
            path.display(),
            expected.join(","),
            got.join(",")
        )));
    }
    Ok(())
}

/// Loads and validates a report corpus, sorted by patient, date and id.
pub fn load_corpus(path: &Path, format: CorpusFormat) -> Result<Vec<DischargeReport>> {
    load_corpus_with(path, format, &LoadOptions::default())
}

pub fn load_corpus_with(
    path: &Path,
    format: CorpusFormat,
    options: &LoadOptions,
) -> Result<Vec<DischargeReport>> {
    let mut reports = match format {
        CorpusFormat::Jsonl => read_jsonl(path)?,
        CorpusFormat::TextDirectory => read_text_directory(path)?,
    };
    let mut seen = HashSet::new();
    for r in &reports {
        r.validate()?;
        if r.date > options.reference_date {
            return Err(Error::malformed(
                &r.report_id,
                "date",
                format!("{} is after the corpus reference date {}", r.date, options.reference_date),
            ));
        }
        if !seen.insert(r.report_id.clone()) {
            return Err(Error::DuplicateReportId(r.report_id.clone()));
        }
    }
    sort_reports(&mut reports);
    Ok(reports)
}

pub fn sort_reports(reports: &mut [DischargeReport]) {
    reports.sort_by(|a, b| {
        (a.patient_id.as_str(), a.date, a.report_id.as_str())
            .cmp(&(b.patient_id.as_str(), b.date, b.report_id.as_str()))
    });
}

fn read_jsonl(path: &Path) -> Result<Vec<DischargeReport>> {
    let reader = BufReader::new(open(path)?);
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let at = format!("line {}", lineno + 1);
        let value: serde_json::Value = serde_json::from_str(&line)
            .map_err(|e| Error::malformed(&at, "json", e.to_string()))?;
        let field = |name: &str, id: &str| -> Result<String> {
            value
                .get(name)
                .and_then(|v| v.as_str())
                .map(str::to_owned)
                .ok_or_else(|| Error::malformed(id, name, "missing or not a string"))
        };
        let report_id = field("report_id", &at)?;
        let patient_id = field("patient_id", &report_id)?;
        let date = parse_date(&report_id, "date", &field("date", &report_id)?)?;
        let body = field("body", &report_id)?;
        out.push(DischargeReport {
            report_id,
            patient_id,
            date,
            body,
        });
    }
    Ok(out)
}

fn read_text_directory(dir: &Path) -> Result<Vec<DischargeReport>> {
    let sidecar = dir.join(SIDECAR_FILE);
    let mut rdr = csv_reader(open(&sidecar)?);
    let header = rdr.headers().map_err(|e| csv_error(&sidecar, e))?.clone();
    check_header(&sidecar, &header, &["report_id", "patient_id", "date", "filename"])?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(&sidecar, e))?;
        let report_id = rec[0].to_string();
        let date = parse_date(&report_id, "date", &rec[2])?;
        let file = dir.join(&rec[3]);
        let body = fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
        out.push(DischargeReport {
            report_id,
            patient_id: rec[1].to_string(),
            date,
            body,
        });
    }
    Ok(out)
}

#[derive(Serialize)]
struct JsonReport<'a> {
    report_id: &'a str,
    patient_id: &'a str,
    date: String,
    body: &'a str,
}

pub fn write_corpus_jsonl(path: &Path, reports: &[DischargeReport]) -> Result<()> {
    let mut w = create(path)?;
    for r in reports {
        let line = serde_json::to_string(&JsonReport {
            report_id: &r.report_id,
            patient_id: &r.patient_id,
            date: r.date.format(DATE_FORMAT).to_string(),
            body: &r.body,
        })
        .expect("report serializes");
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut w = create(path)?;
    for item in items {
        let line = serde_json::to_string(item).expect("item serializes");
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, item: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, item).expect("item serializes");
    writeln!(w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::malformed(path.display().to_string(), "json", e.to_string()))
}

const CODED_HEADER: [&str; 6] = ["patient_id", "date", "code_system", "code", "value", "unit"];

pub fn read_coded_csv(path: &Path) -> Result<Vec<CodedRecord>> {
    let mut rdr = csv_reader(open(path)?);
    let header = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    check_header(path, &header, &CODED_HEADER)?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let at = format!("{} row {}", path.display(), i + 2);
        let value = match rec[4].trim() {
            "" => None,
            s => Some(
                s.parse::<f64>()
                    .map_err(|e| Error::malformed(&at, "value", e.to_string()))?,
            ),
        };
        let unit = match rec[5].trim() {
            "" => None,
            s => Some(s.to_string()),
        };
        let record = CodedRecord {
            patient_id: rec[0].to_string(),
            date: parse_date(&at, "date", &rec[1])?,
            code_system: rec[2]
                .parse()
                .map_err(|_| Error::malformed(&at, "code_system", rec[2].to_string()))?,
            code: rec[3].to_string(),
            value,
            unit,
        };
        record.validate()?;
        out.push(record);
    }
    Ok(out)
}

pub fn write_coded_csv(path: &Path, records: &[CodedRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(CODED_HEADER).map_err(|e| csv_error(path, e))?;
    for r in records {
        w.write_record([
            r.patient_id.as_str(),
            &r.date.format(DATE_FORMAT).to_string(),
            r.code_system.as_str(),
            r.code.as_str(),
            &r.value.map(format_number).unwrap_or_default(),
            r.unit.as_deref().unwrap_or(""),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Parses schema CSV text (`column,kind,cardinality,window_class`).
pub fn parse_schema(text: &str, origin: &Path) -> Result<FeatureSchema> {
    let mut rdr = csv_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| csv_error(origin, e))?.clone();
    check_header(origin, &header, &["column", "kind", "cardinality", "window_class"])?;
    let mut columns = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(origin, e))?;
        let name = rec[0].to_string();
        let kind = match rec[1].trim() {
            "binary" => ColumnKind::Binary,
            "numeric" => ColumnKind::Numeric,
            "categorical" => {
                let card: u8 = rec[2].trim().parse().map_err(|_| Error::UnknownKind {
                    column: name.clone(),
                    kind: format!("categorical({})", &rec[2]),
                })?;
                ColumnKind::Categorical(card)
            }
            other => {
                return Err(Error::UnknownKind {
                    column: name,
                    kind: other.to_string(),
                })
            }
        };
        let window_class: WindowClass = rec[3].parse()?;
        columns.push(ColumnSpec::new(name, kind, window_class));
    }
    let schema = FeatureSchema::new(columns)?;
    schema.require_af_flags()?;
    Ok(schema)
}

pub fn load_schema(path: &Path) -> Result<FeatureSchema> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_schema(&text, path)
}

pub fn write_schema(path: &Path, schema: &FeatureSchema) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["column", "kind", "cardinality", "window_class"])
        .map_err(|e| csv_error(path, e))?;
    for c in schema.columns() {
        let (kind, card) = match c.kind {
            ColumnKind::Binary => ("binary", String::new()),
            ColumnKind::Numeric => ("numeric", String::new()),
            ColumnKind::Categorical(k) => ("categorical", k.to_string()),
        };
        w.write_record([c.name.as_str(), kind, &card, c.window_class.as_str()])
            .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes `patient_id,date,<schema columns>`; missing cells are empty.
pub fn write_feature_matrix<W: Write>(
    out: W,
    schema: &FeatureSchema,
    vectors: &[FeatureVector],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let origin = Path::new("<feature matrix>");
    let mut header = vec!["patient_id".to_string(), "date".to_string()];
    header.extend(schema.names().map(str::to_owned));
    w.write_record(&header).map_err(|e| csv_error(origin, e))?;
    for v in vectors {
        schema.validate_vector(v)?;
        let mut row = Vec::with_capacity(v.cells.len() + 2);
        row.push(v.patient_id.clone());
        row.push(v.date.format(DATE_FORMAT).to_string());
        row.extend(v.cells.iter().map(|c| c.map(format_number).unwrap_or_default()));
        w.write_record(&row).map_err(|e| csv_error(origin, e))?;
    }
    w.flush().map_err(|e| Error::io(origin, e))
}

pub fn write_feature_matrix_file(
    path: &Path,
    schema: &FeatureSchema,
    vectors: &[FeatureVector],
) -> Result<()> {
    write_feature_matrix(create(path)?, schema, vectors).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub fn read_feature_matrix<R: Read>(
    input: R,
    schema: &FeatureSchema,
    origin: &Path,
) -> Result<Vec<FeatureVector>> {
    let mut rdr = csv_reader(input);
    let header = rdr.headers().map_err(|e| csv_error(origin, e))?.clone();
    let mut expected = vec!["patient_id", "date"];
    expected.extend(schema.names());
    check_header(origin, &header, &expected)?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(origin, e))?;
        let at = format!("{} row {}", origin.display(), i + 2);
        let mut cells = Vec::with_capacity(schema.len());
        for (j, field) in rec.iter().skip(2).enumerate() {
            cells.push(match field {
                "" => None,
                s => Some(s.parse::<f64>().map_err(|e| {
                    Error::malformed(&at, &schema.column(j).name, e.to_string())
                })?),
            });
        }
        let v = FeatureVector {
            patient_id: rec[0].to_string(),
            source_report_id: None,
            date: parse_date(&at, "date", &rec[1])?,
            cells,
        };
        schema.validate_vector(&v)?;
        out.push(v);
    }
    Ok(out)
}

pub fn read_feature_matrix_file(path: &Path, schema: &FeatureSchema) -> Result<Vec<FeatureVector>> {
    read_feature_matrix(open(path)?, schema, path)
}

/// Writes `matrix.csv` and `labels.csv` (`patient_id,label,split`) into `dir`.
pub fn write_dataset(dir: &Path, dataset: &Dataset) -> Result<()> {
    write_feature_matrix_file(&dir.join(MATRIX_FILE), &dataset.schema, &dataset.rows)?;
    let path = dir.join(LABELS_FILE);
    let mut w = csv::Writer::from_writer(create(&path)?);
    w.write_record(["patient_id", "label", "split"])
        .map_err(|e| csv_error(&path, e))?;
    for ((row, label), split) in dataset.rows.iter().zip(&dataset.labels).zip(&dataset.splits) {
        w.write_record([row.patient_id.as_str(), if *label { "1" } else { "0" }, split.as_str()])
            .map_err(|e| csv_error(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))
}

pub fn read_dataset(dir: &Path, schema: &FeatureSchema) -> Result<Dataset> {
    let rows = read_feature_matrix_file(&dir.join(MATRIX_FILE), schema)?;
    let path = dir.join(LABELS_FILE);
    let mut rdr = csv_reader(open(&path)?);
    let header = rdr.headers().map_err(|e| csv_error(&path, e))?.clone();
    check_header(&path, &header, &["patient_id", "label", "split"])?;
    let mut by_patient = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(&path, e))?;
        let label = match &rec[1] {
            "1" => true,
            "0" => false,
            other => return Err(Error::malformed(&rec[0], "label", format!("`{other}`"))),
        };
        by_patient.insert(rec[0].to_string(), (label, rec[2].parse::<Split>()?));
    }
    let mut labels = Vec::with_capacity(rows.len());
    let mut splits = Vec::with_capacity(rows.len());
    for r in &rows {
        let (label, split) = by_patient
            .get(&r.patient_id)
            .ok_or_else(|| Error::malformed(&r.patient_id, "label", "no label for row"))?;
        labels.push(*label);
        splits.push(*split);
    }
    Dataset::new(schema.clone(), rows, labels, splits)
}

/// Optional `patient_id,death_date` file.
pub fn read_deaths(path: &Path) -> Result<BTreeMap<String, NaiveDate>> {
    let mut rdr = csv_reader(open(path)?);
    let header = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    check_header(path, &header, &["patient_id", "death_date"])?;
    let mut out = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        out.insert(rec[0].to_string(), parse_date(&rec[0], "death_date", &rec[1])?);
    }
    Ok(out)
}

pub fn write_deaths(path: &Path, deaths: &BTreeMap<String, NaiveDate>) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["patient_id", "death_date"])
        .map_err(|e| csv_error(path, e))?;
    for (pid, date) in deaths {
        w.write_record([pid.as_str(), &date.format(DATE_FORMAT).to_string()])
            .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Creates `path`'s parent directories and returns a buffered writer.
pub fn create_file(path: &Path) -> Result<BufWriter<File>> {
    create(path)
}

pub fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::Writer::from_writer(create(path)?))
}

pub fn csv_write_error(path: &Path, e: csv::Error) -> Error {
    csv_error(path, e)
}

pub fn open_csv(path: &Path) -> Result<csv::Reader<File>> {
    Ok(csv_reader(open(path)?))
}
