//! CHA2DS2-VASc, HATCH and APPLE as data-driven point tables.
//!
//! A score definition is JSON: a name, a threshold and a list of components,
//! each awarding `points` when its predicate holds. Predicates are
//!
//! ```json
//! {"flag": "hypertension"}                                  // cell == 1
//! {"cmp": {"column": "age", "op": "ge", "value": 75}}       // gt ge lt le eq
//! {"in": {"column": "af_type", "values": [2, 3]}}
//! {"any": [ ... ]}   {"all": [ ... ]}
//! ```
//!
//! A missing cell makes its predicate false. The pseudo-column `egfr` is
//! derived from creatinine, age and sex with the 2021 CKD-EPI equation.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data_model::{Dataset, FeatureSchema, FeatureVector, Split};
use crate::error::{Error, Result};

pub const EGFR: &str = "egfr";
pub const DEFAULT_THRESHOLD: i32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CmpOp {
    Gt,
    Ge,
    Lt,
    Le,
    Eq,
}

impl CmpOp {
    fn apply(self, x: f64, y: f64) -> bool {
        match self {
            CmpOp::Gt => x > y,
            CmpOp::Ge => x >= y,
            CmpOp::Lt => x < y,
            CmpOp::Le => x <= y,
            CmpOp::Eq => x == y,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CmpSpec {
    pub column: String,
    pub op: CmpOp,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InSpec {
    pub column: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Predicate {
    Flag(String),
    Cmp(CmpSpec),
    In(InSpec),
    Any(Vec<Predicate>),
    All(Vec<Predicate>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub label: String,
    pub points: u32,
    pub when: Predicate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreDefinition {
    pub name: String,
    #[serde(default = "default_threshold")]
    pub threshold: i32,
    pub components: Vec<Component>,
}

fn default_threshold() -> i32 {
    DEFAULT_THRESHOLD
}

impl ScoreDefinition {
    pub fn parse(json: &str) -> Result<Self> {
        serde_json::from_str(json).map_err(|e| Error::malformed("score definition", "json", e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ScoreDefinition::parse(&text)
    }

    pub fn max_points(&self) -> u32 {
        self.components.iter().map(|c| c.points).sum()
    }

    /// Base schema columns the predicates read, in first-use order. `egfr`
    /// is reported as itself.
    pub fn referenced_columns(&self) -> Vec<String> {
        fn walk(p: &Predicate, out: &mut Vec<String>) {
            let mut push = |c: &String| {
                if !out.contains(c) {
                    out.push(c.clone());
                }
            };
            match p {
                Predicate::Flag(c) => push(c),
                Predicate::Cmp(c) => push(&c.column),
                Predicate::In(i) => push(&i.column),
                Predicate::Any(ps) | Predicate::All(ps) => ps.iter().for_each(|p| walk(p, out)),
            }
        }
        let mut out = Vec::new();
        for c in &self.components {
            walk(&c.when, &mut out);
        }
        out
    }
}

#[derive(Debug, Clone, Copy)]
enum ColumnRef {
    Index(usize),
    Egfr,
}

#[derive(Debug, Clone)]
enum Compiled {
    Flag(ColumnRef),
    Cmp(ColumnRef, CmpOp, f64),
    In(ColumnRef, Vec<f64>),
    Any(Vec<Compiled>),
    All(Vec<Compiled>),
}

#[derive(Debug, Clone, Copy)]
struct EgfrInputs {
    creatinine: usize,
    age: usize,
    gender: usize,
}

/// A score definition bound to a schema.
#[derive(Debug, Clone)]
pub struct Score {
    pub definition: ScoreDefinition,
    components: Vec<(u32, Compiled)>,
    egfr: Option<EgfrInputs>,
}

impl Score {
    pub fn new(definition: ScoreDefinition, schema: &FeatureSchema) -> Result<Self> {
        if definition.threshold < 0 {
            return Err(Error::Config(format!("{}: threshold must be >= 0", definition.name)));
        }
        let mut uses_egfr = false;
        let mut components = Vec::with_capacity(definition.components.len());
        for c in &definition.components {
            if c.points < 1 {
                return Err(Error::Config(format!("{}: component `{}` awards no points", definition.name, c.label)));
            }
            components.push((c.points, compile(&c.when, schema, &mut uses_egfr)?));
        }
        let egfr = if uses_egfr {
            Some(EgfrInputs {
                creatinine: schema.require("creatinine")?,
                age: schema.require("age")?,
                gender: schema.require("gender")?,
            })
        } else {
            None
        };
        Ok(Score {
            definition,
            components,
            egfr,
        })
    }

    pub fn name(&self) -> &str {
        &self.definition.name
    }

    pub fn score(&self, v: &FeatureVector) -> u32 {
        let egfr = self.egfr.and_then(|e| egfr_of(v, e));
        self.components
            .iter()
            .filter(|(_, p)| holds(p, v, egfr))
            .map(|(pts, _)| pts)
            .sum()
    }

    pub fn classify(&self, score: u32) -> bool {
        score_classify(score, &self.definition)
    }
}

pub fn score_classify(score: u32, definition: &ScoreDefinition) -> bool {
    i64::from(score) >= i64::from(definition.threshold)
}

fn compile(p: &Predicate, schema: &FeatureSchema, uses_egfr: &mut bool) -> Result<Compiled> {
    let mut col = |name: &str| -> Result<ColumnRef> {
        if name == EGFR && schema.index_of(EGFR).is_none() {
            *uses_egfr = true;
            return Ok(ColumnRef::Egfr);
        }
        schema.require(name).map(ColumnRef::Index)
    };
    Ok(match p {
        Predicate::Flag(c) => Compiled::Flag(col(c)?),
        Predicate::Cmp(c) => Compiled::Cmp(col(&c.column)?, c.op, c.value),
        Predicate::In(i) => Compiled::In(col(&i.column)?, i.values.clone()),
        Predicate::Any(ps) => Compiled::Any(
            ps.iter().map(|p| compile(p, schema, uses_egfr)).collect::<Result<_>>()?,
        ),
        Predicate::All(ps) => Compiled::All(
            ps.iter().map(|p| compile(p, schema, uses_egfr)).collect::<Result<_>>()?,
        ),
    })
}

fn value(r: ColumnRef, v: &FeatureVector, egfr: Option<f64>) -> Option<f64> {
    match r {
        ColumnRef::Index(i) => v.cells[i],
        ColumnRef::Egfr => egfr,
    }
}

fn holds(p: &Compiled, v: &FeatureVector, egfr: Option<f64>) -> bool {
    match p {
        Compiled::Flag(c) => value(*c, v, egfr) == Some(1.0),
        Compiled::Cmp(c, op, y) => value(*c, v, egfr).is_some_and(|x| op.apply(x, *y)),
        Compiled::In(c, values) => value(*c, v, egfr).is_some_and(|x| values.contains(&x)),
        Compiled::Any(ps) => ps.iter().any(|p| holds(p, v, egfr)),
        Compiled::All(ps) => ps.iter().all(|p| holds(p, v, egfr)),
    }
}

fn egfr_of(v: &FeatureVector, e: EgfrInputs) -> Option<f64> {
    Some(ckd_epi_2021(v.cells[e.creatinine]?, v.cells[e.age]?, v.cells[e.gender]? == 1.0))
}

/// eGFR in mL/min/1.73m² from serum creatinine in mg/dL.
pub fn ckd_epi_2021(creatinine: f64, age: f64, female: bool) -> f64 {
    let (kappa, alpha) = if female { (0.7, -0.241) } else { (0.9, -0.302) };
    let r = creatinine / kappa;
    let sex = if female { 1.012 } else { 1.0 };
    142.0 * r.min(1.0).powf(alpha) * r.max(1.0).powf(-1.200) * 0.9938f64.powf(age) * sex
}

/// The three bundled scores bound to `schema`.
pub fn bundled_scores(schema: &FeatureSchema) -> Result<Vec<Score>> {
    [
        crate::resources::CHADS2VASC_JSON,
        crate::resources::HATCH_JSON,
        crate::resources::APPLE_JSON,
    ]
    .into_iter()
    .map(|json| Score::new(ScoreDefinition::parse(json)?, schema))
    .collect()
}

pub fn chads2_vasc(v: &FeatureVector, schema: &FeatureSchema) -> Result<u32> {
    named(schema, crate::resources::CHADS2VASC_JSON, v)
}

pub fn hatch(v: &FeatureVector, schema: &FeatureSchema) -> Result<u32> {
    named(schema, crate::resources::HATCH_JSON, v)
}

pub fn apple(v: &FeatureVector, schema: &FeatureSchema) -> Result<u32> {
    named(schema, crate::resources::APPLE_JSON, v)
}

fn named(schema: &FeatureSchema, json: &str, v: &FeatureVector) -> Result<u32> {
    Ok(Score::new(ScoreDefinition::parse(json)?, schema)?.score(v))
}

/// Train-split modes used to fill score inputs.
pub type Modes = BTreeMap<String, f64>;

/// Fills every column the scores reference with its train-split mode (ties
/// go to the lower value). `egfr` inputs other than those referenced
/// directly are left alone, so a missing creatinine still scores 0.
pub fn impute_mode_for_scores(dataset: &Dataset, scores: &[Score]) -> Result<(Dataset, Modes)> {
    let train = dataset.indices(Split::Train);
    if train.is_empty() {
        return Err(Error::InvalidArgument("mode imputation needs a non-empty train split".into()));
    }
    let mut modes = Modes::new();
    let mut out = dataset.clone();
    for s in scores {
        for name in s.definition.referenced_columns() {
            let Some(col) = dataset.schema.index_of(&name) else {
                continue;
            };
            if modes.contains_key(&name) {
                continue;
            }
            let values: Vec<f64> = train.iter().filter_map(|&i| dataset.rows[i].cells[col]).collect();
            let m = mode(&values).ok_or_else(|| Error::AllMissingColumn(name.clone()))?;
            modes.insert(name, m);
            for row in &mut out.rows {
                row.cells[col].get_or_insert(m);
            }
        }
    }
    Ok((out, modes))
}

/// Most frequent value; ties go to the lower value.
pub fn mode(values: &[f64]) -> Option<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut best: Option<(f64, usize)> = None;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        if best.is_none_or(|(_, n)| j - i > n) {
            best = Some((sorted[i], j - i));
        }
        i = j;
    }
    best.map(|(v, _)| v)
}

/// Per-patient scores and binary predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub patient_id: String,
    pub scores: Vec<u32>,
    pub predictions: Vec<bool>,
}

pub fn score_rows(rows: &[FeatureVector], scores: &[Score]) -> Vec<ScoreRow> {
    rows.iter()
        .map(|v| {
            let s: Vec<u32> = scores.iter().map(|sc| sc.score(v)).collect();
            let p = scores.iter().zip(&s).map(|(sc, &x)| sc.classify(x)).collect();
            ScoreRow {
                patient_id: v.patient_id.clone(),
                scores: s,
                predictions: p,
            }
        })
        .collect()
}

/// CSV `patient_id,<score>...,pred_<score>...`.
pub fn write_score_csv<W: std::io::Write>(out: W, scores: &[Score], rows: &[ScoreRow]) -> Result<()> {
    let origin = Path::new("<scores>");
    let err = |e: csv::Error| crate::data_model::io::csv_write_error(origin, e);
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["patient_id".to_string()];
    header.extend(scores.iter().map(|s| s.name().to_string()));
    header.extend(scores.iter().map(|s| format!("pred_{}", s.name())));
    w.write_record(&header).map_err(err)?;
    for r in rows {
        let mut rec = vec![r.patient_id.clone()];
        rec.extend(r.scores.iter().map(u32::to_string));
        rec.extend(r.predictions.iter().map(|&p| if p { "1" } else { "0" }.to_string()));
        w.write_record(&rec).map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(origin, e))
}
