use std::fs;
use std::path::Path;

use regex::{Regex, RegexSet};
use serde::{Deserialize, Serialize};

use crate::data_model::{ColumnKind, FeatureSchema};
use crate::error::{Error, Result};
use crate::text::fold;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityLabel {
    Disease,
    Drug,
    Procedure,
    Qualifier,
    BodyStructure,
    Allergy,
}

/// What a matched rule writes to.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Target {
    Column { index: usize, name: String },
    /// An atrial fibrillation term.
    Af,
    /// Evidence of sinus rhythm or an AF-free ECG.
    SinusRhythm,
}

impl Target {
    pub const AF: &'static str = "@af";
    pub const SINUS_RHYTHM: &'static str = "@sinus_rhythm";

    pub fn name(&self) -> &str {
        match self {
            Target::Column { name, .. } => name,
            Target::Af => Target::AF,
            Target::SinusRhythm => Target::SINUS_RHYTHM,
        }
    }

    pub fn column(&self) -> Option<usize> {
        match self {
            Target::Column { index, .. } => Some(*index),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EntityRuleSpec {
    pub pattern: String,
    pub label: EntityLabel,
    pub target: String,
    /// Value written to the target column; defaults to 1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NumericCaptureSpec {
    /// Regex with exactly one capture group holding the number.
    pub pattern: String,
    pub column: String,
    pub unit: String,
    /// Converts the captured unit to the column unit, e.g. cm to m.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub divide_by: Option<f64>,
}

/// Serialized rule pack.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RulePackSpec {
    pub entities: Vec<EntityRuleSpec>,
    pub negation_cues: Vec<String>,
    #[serde(default)]
    pub negation_terminators: Vec<String>,
    #[serde(default)]
    pub numeric_captures: Vec<NumericCaptureSpec>,
}

#[derive(Debug, Clone)]
pub(crate) enum RuleKind {
    Entity { label: EntityLabel, value: f64 },
    Numeric { unit: String, divide_by: Option<f64> },
}

#[derive(Debug, Clone)]
pub(crate) struct CompiledRule {
    pub regex: Regex,
    pub target: Target,
    pub kind: RuleKind,
}

/// A rule pack compiled and validated against a schema.
#[derive(Debug, Clone)]
pub struct RulePack {
    pub(crate) rules: Vec<CompiledRule>,
    pub(crate) prefilter: RegexSet,
    pub(crate) cues: Option<Regex>,
    pub(crate) word_terminators: Vec<String>,
    pub(crate) punct_terminators: Vec<String>,
    af_screen: Option<Regex>,
    spec: RulePackSpec,
}

fn invalid(pattern: &str, message: impl Into<String>) -> Error {
    Error::InvalidRule {
        pattern: pattern.to_string(),
        message: message.into(),
    }
}

fn bounded(pattern: &str) -> String {
    format!(r"\b(?:{pattern})\b")
}

fn compile(pattern: &str) -> Result<Regex> {
    Regex::new(&bounded(pattern)).map_err(|e| invalid(pattern, e.to_string()))
}

impl RulePack {
    pub fn new(spec: RulePackSpec, schema: &FeatureSchema) -> Result<Self> {
        let mut rules = Vec::with_capacity(spec.entities.len() + spec.numeric_captures.len());
        for e in &spec.entities {
            let target = match e.target.as_str() {
                Target::AF => Target::Af,
                Target::SINUS_RHYTHM => Target::SinusRhythm,
                name => {
                    let index = schema.index_of(name).ok_or_else(|| {
                        invalid(&e.pattern, format!("unknown feature column `{name}`"))
                    })?;
                    Target::Column {
                        index,
                        name: name.to_string(),
                    }
                }
            };
            let value = e.value.unwrap_or(1.0);
            if let Some(index) = target.column() {
                let kind = schema.column(index).kind;
                if kind.is_numeric() || !kind.accepts(value) {
                    return Err(invalid(
                        &e.pattern,
                        format!("value {value} is not valid for column `{}`", e.target),
                    ));
                }
            }
            rules.push(CompiledRule {
                regex: compile(&e.pattern)?,
                target,
                kind: RuleKind::Entity {
                    label: e.label,
                    value,
                },
            });
        }
        for n in &spec.numeric_captures {
            let index = schema
                .index_of(&n.column)
                .ok_or_else(|| invalid(&n.pattern, format!("unknown feature column `{}`", n.column)))?;
            if schema.column(index).kind != ColumnKind::Numeric {
                return Err(invalid(&n.pattern, format!("column `{}` is not numeric", n.column)));
            }
            if let Some(d) = n.divide_by {
                if !(d.is_finite() && d > 0.0) {
                    return Err(invalid(&n.pattern, "divide_by must be positive"));
                }
            }
            let regex = compile(&n.pattern)?;
            if regex.captures_len() != 2 {
                return Err(invalid(&n.pattern, "numeric captures need exactly one group"));
            }
            rules.push(CompiledRule {
                regex,
                target: Target::Column {
                    index,
                    name: n.column.clone(),
                },
                kind: RuleKind::Numeric {
                    unit: n.unit.clone(),
                    divide_by: n.divide_by,
                },
            });
        }
        let prefilter = RegexSet::new(rules.iter().map(|r| r.regex.as_str()))
            .map_err(|e| invalid("<rule set>", e.to_string()))?;

        for c in &spec.negation_cues {
            Regex::new(c).map_err(|e| invalid(c, e.to_string()))?;
        }
        let cues = if spec.negation_cues.is_empty() {
            None
        } else {
            // Longer cues first so "no evidencia de" beats "no".
            let mut cues = spec.negation_cues.clone();
            cues.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
            Some(compile(&cues.join("|"))?)
        };
        let (word_terminators, punct_terminators): (Vec<String>, Vec<String>) = spec
            .negation_terminators
            .iter()
            .map(|t| fold(t.trim()))
            .filter(|t| !t.is_empty())
            .partition(|t| t.chars().all(char::is_alphanumeric));

        let af_patterns: Vec<&str> = spec
            .entities
            .iter()
            .filter(|e| e.target == Target::AF)
            .map(|e| e.pattern.as_str())
            .collect();
        let af_screen = if af_patterns.is_empty() {
            None
        } else {
            Some(compile(&af_patterns.join("|"))?)
        };

        Ok(RulePack {
            rules,
            prefilter,
            cues,
            word_terminators,
            punct_terminators,
            af_screen,
            spec,
        })
    }

    pub fn parse(json: &str, schema: &FeatureSchema) -> Result<Self> {
        let spec: RulePackSpec = serde_json::from_str(json)
            .map_err(|e| Error::malformed("rule pack", "json", e.to_string()))?;
        RulePack::new(spec, schema)
    }

    pub fn load(path: &Path, schema: &FeatureSchema) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RulePack::parse(&text, schema)
    }

    pub fn bundled(schema: &FeatureSchema) -> Result<Self> {
        RulePack::parse(crate::resources::RULES_JSON, schema)
    }

    pub fn spec(&self) -> &RulePackSpec {
        &self.spec
    }

    /// Raw AF surface-form hit anywhere in `text`, negated or not.
    pub fn mentions_af_term(&self, text: &str) -> bool {
        self.af_screen
            .as_ref()
            .is_some_and(|re| re.is_match(&fold(text)))
    }
}
