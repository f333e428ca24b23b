//! Rule-based entity recognition, negation scoping and AF onset
//! classification over sectioned reports.
//!
//! Matching runs on folded text (lowercase, no diacritics) and every pattern
//! is wrapped in word boundaries. Candidates from all rules compete under a
//! leftmost-longest discipline: the earliest start wins, then the longest
//! span, then `(target, value)` so the result does not depend on rule order.
//!
//! A mention is negated when a cue precedes it in the same sentence, at most
//! five word tokens separate the two, and no terminator (a comma or a
//! coordinating conjunction from the rule pack) lies between them.

mod rules;

use serde::{Deserialize, Serialize};

use crate::data_model::{af_type, CanonicalSection, DischargeReport, SectionedReport, TextSpan};
use crate::section_parser::{parse_sections, SectionLexicon};
use crate::text::{word_tokens, Folded, Sentences};

pub use rules::{EntityLabel, EntityRuleSpec, NumericCaptureSpec, RulePack, RulePackSpec, Target};
use rules::RuleKind;

/// Largest number of word tokens allowed between a cue and its mention.
pub const NEGATION_WINDOW: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityMention {
    /// Byte range in the report body.
    pub span: TextSpan,
    pub section: Option<CanonicalSection>,
    pub label: Option<EntityLabel>,
    /// Column name, `@af` or `@sinus_rhythm`.
    pub target: String,
    #[serde(skip)]
    pub column: Option<usize>,
    pub negated: bool,
    /// Entity value, or the parsed number of a numeric capture.
    pub value: Option<f64>,
    pub numeric: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub unit: Option<String>,
    /// Sentence key, unique within the report.
    pub sentence: (usize, usize),
}

impl EntityMention {
    pub fn is_af(&self) -> bool {
        self.target == Target::AF
    }

    pub fn is_sinus_rhythm(&self) -> bool {
        self.target == Target::SINUS_RHYTHM
    }

    pub fn in_section(&self, s: CanonicalSection) -> bool {
        self.section == Some(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionWarning {
    pub report_id: String,
    pub span: TextSpan,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Extraction {
    pub mentions: Vec<EntityMention>,
    pub warnings: Vec<ExtractionWarning>,
}

/// One region of the body processed independently: the unsectioned prefix or
/// the content of one section.
struct Bucket {
    section: Option<CanonicalSection>,
    start: usize,
    end: usize,
}

fn buckets(sectioned: &SectionedReport) -> Vec<Bucket> {
    let mut out = Vec::with_capacity(sectioned.sections.len() + 1);
    if let Some(u) = sectioned.unsectioned {
        out.push(Bucket {
            section: None,
            start: u.start,
            end: u.end,
        });
    }
    for s in &sectioned.sections {
        out.push(Bucket {
            section: Some(s.section),
            start: s.content_start,
            end: s.span.end,
        });
    }
    out
}

struct Candidate {
    start: usize,
    end: usize,
    rule: usize,
    value: Option<f64>,
    group: Option<(usize, usize)>,
}

fn next_char(text: &str, at: usize) -> usize {
    text[at..].chars().next().map_or(text.len() + 1, |c| at + c.len_utf8())
}

fn candidates(folded: &str, pack: &RulePack) -> Vec<Candidate> {
    let mut out = Vec::new();
    for i in pack.prefilter.matches(folded).iter() {
        let rule = &pack.rules[i];
        let mut at = 0;
        while at <= folded.len() {
            let Some(caps) = rule.regex.captures_at(folded, at) else {
                break;
            };
            let m = caps.get(0).expect("group 0");
            let (value, group) = match &rule.kind {
                RuleKind::Entity { value, .. } => (Some(*value), None),
                RuleKind::Numeric { .. } => {
                    let g = caps.get(1).map(|g| (g.start(), g.end()));
                    (None, g)
                }
            };
            out.push(Candidate {
                start: m.start(),
                end: m.end(),
                rule: i,
                value,
                group,
            });
            at = next_char(folded, m.start());
        }
    }
    out
}

fn parse_number(raw: &str, divide_by: Option<f64>) -> Option<f64> {
    let v: f64 = raw.replace(',', ".").parse().ok()?;
    let v = match divide_by {
        Some(d) => v / d,
        None => v,
    };
    v.is_finite().then_some(v)
}

/// All non-overlapping leftmost-longest matches with section attribution.
/// Mentions come back un-negated; see [`apply_negation`].
pub fn extract_entities(sectioned: &SectionedReport, pack: &RulePack) -> Extraction {
    let body = sectioned.report.body.as_str();
    let mut out = Extraction::default();
    for (b, bucket) in buckets(sectioned).into_iter().enumerate() {
        let folded = Folded::new(&body[bucket.start..bucket.end]);
        let sentences = Sentences::new(&folded.text);
        let mut cands = candidates(&folded.text, pack);
        cands.sort_by(|a, b| {
            let (ra, rb) = (&pack.rules[a.rule], &pack.rules[b.rule]);
            a.start
                .cmp(&b.start)
                .then((b.end - b.start).cmp(&(a.end - a.start)))
                .then_with(|| ra.target.name().cmp(rb.target.name()))
                .then_with(|| a.value.partial_cmp(&b.value).unwrap_or(std::cmp::Ordering::Equal))
                .then(a.rule.cmp(&b.rule))
        });
        let mut cursor = 0;
        for c in cands {
            if c.start < cursor {
                continue;
            }
            cursor = c.end;
            let rule = &pack.rules[c.rule];
            let (s, e) = folded.original_range(c.start, c.end);
            let span = TextSpan::new(bucket.start + s, bucket.start + e);
            let mut mention = EntityMention {
                span,
                section: bucket.section,
                label: None,
                target: rule.target.name().to_string(),
                column: rule.target.column(),
                negated: false,
                value: c.value,
                numeric: false,
                unit: None,
                sentence: (b, sentences.sentence_of(c.start)),
            };
            match &rule.kind {
                RuleKind::Entity { label, .. } => mention.label = Some(*label),
                RuleKind::Numeric { unit, divide_by } => {
                    mention.numeric = true;
                    mention.unit = Some(unit.clone());
                    let raw = c.group.map_or("", |(gs, ge)| &folded.text[gs..ge]);
                    mention.value = parse_number(raw, *divide_by);
                    if mention.value.is_none() {
                        out.warnings.push(ExtractionWarning {
                            report_id: sectioned.report.report_id.clone(),
                            span,
                            message: format!("cannot parse `{raw}` for {}", mention.target),
                        });
                    }
                }
            }
            out.mentions.push(mention);
        }
    }
    out
}

/// Sets `negated` on every non-numeric mention per the cue scope rule.
pub fn apply_negation(mentions: &mut [EntityMention], sectioned: &SectionedReport, pack: &RulePack) {
    let Some(cue_re) = &pack.cues else {
        return;
    };
    let body = sectioned.report.body.as_str();
    for (b, bucket) in buckets(sectioned).into_iter().enumerate() {
        let in_bucket: Vec<usize> = (0..mentions.len())
            .filter(|&i| mentions[i].sentence.0 == b && !mentions[i].numeric)
            .collect();
        if in_bucket.is_empty() {
            continue;
        }
        let folded = Folded::new(&body[bucket.start..bucket.end]);
        let text = folded.text.as_str();
        let sentences = Sentences::new(text);
        let tokens = word_tokens(text);
        let cues: Vec<(usize, usize)> = cue_re.find_iter(text).map(|m| (m.start(), m.end())).collect();
        for i in in_bucket {
            let m = &mentions[i];
            let ms = folded_offset(&folded, m.span.start - bucket.start);
            mentions[i].negated = cues.iter().any(|&(cs, ce)| {
                ce <= ms && sentences.same_sentence(cs, ms) && in_scope(text, &tokens, ce, ms, pack)
            });
        }
    }
}

/// Folded offset of an original offset inside a bucket.
fn folded_offset(folded: &Folded, original: usize) -> usize {
    let mut lo = 0;
    let mut hi = folded.text.len();
    while lo < hi {
        let mid = (lo + hi) / 2;
        if folded.original_offset(mid) < original {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    lo
}

fn in_scope(text: &str, tokens: &[(usize, usize)], from: usize, to: usize, pack: &RulePack) -> bool {
    let between = &text[from..to];
    if pack.punct_terminators.iter().any(|t| between.contains(t.as_str())) {
        return false;
    }
    let lo = tokens.partition_point(|t| t.0 < from);
    let hi = tokens.partition_point(|t| t.0 < to);
    let words = &tokens[lo..hi];
    if words.len() > NEGATION_WINDOW {
        return false;
    }
    !words
        .iter()
        .any(|&(s, e)| pack.word_terminators.iter().any(|t| t == &text[s..e]))
}

/// Entity extraction followed by negation.
pub fn annotate(sectioned: &SectionedReport, pack: &RulePack) -> Extraction {
    let mut extraction = extract_entities(sectioned, pack);
    apply_negation(&mut extraction.mentions, sectioned, pack);
    extraction
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OnsetInfo {
    pub is_af_report: bool,
    pub is_onset: bool,
    /// Non-negated AF term in the past medical history.
    pub af_in_history: bool,
    /// One of the `af_type` codes.
    pub af_type: u8,
}

impl OnsetInfo {
    pub fn af_type_name(&self) -> &'static str {
        match self.af_type {
            af_type::PAROXYSMAL => "paroxysmal",
            af_type::PERSISTENT => "persistent",
            af_type::PERMANENT => "permanent",
            _ => "unspecified",
        }
    }
}

fn is_af_section(m: &EntityMention) -> bool {
    m.in_section(CanonicalSection::Diagnosis) || m.in_section(CanonicalSection::ComplementaryTests)
}

/// Onset classification from negation-annotated mentions.
pub fn classify_mentions(mentions: &[EntityMention]) -> OnsetInfo {
    let affirmed_af = |m: &&EntityMention| m.is_af() && !m.negated;
    let is_af_report = mentions.iter().filter(affirmed_af).any(is_af_section);
    let af_in_history = mentions
        .iter()
        .filter(affirmed_af)
        .any(|m| m.in_section(CanonicalSection::PastMedicalHistory));
    let af_sentences: Vec<(usize, usize)> = mentions
        .iter()
        .filter(affirmed_af)
        .filter(|m| is_af_section(m))
        .map(|m| m.sentence)
        .collect();
    let af_type = mentions
        .iter()
        .find(|m| {
            m.target == crate::data_model::AF_TYPE
                && !m.negated
                && is_af_section(m)
                && af_sentences.contains(&m.sentence)
        })
        .and_then(|m| m.value)
        .map_or(af_type::UNSPECIFIED, |v| v as u8);
    OnsetInfo {
        is_af_report,
        is_onset: is_af_report && !af_in_history,
        af_in_history,
        af_type,
    }
}

pub fn classify_af_onset(sectioned: &SectionedReport, pack: &RulePack) -> OnsetInfo {
    classify_mentions(&annotate(sectioned, pack).mentions)
}

/// A report with its sections, negation-annotated mentions and onset
/// classification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedReport {
    pub sectioned: SectionedReport,
    pub extraction: Extraction,
    pub onset: OnsetInfo,
}

impl AnnotatedReport {
    pub fn new(report: &DischargeReport, lexicon: &SectionLexicon, pack: &RulePack) -> Self {
        let sectioned = parse_sections(report, lexicon);
        let extraction = annotate(&sectioned, pack);
        let onset = classify_mentions(&extraction.mentions);
        AnnotatedReport {
            sectioned,
            extraction,
            onset,
        }
    }

    pub fn report(&self) -> &DischargeReport {
        &self.sectioned.report
    }

    pub fn has_sinus_rhythm(&self) -> bool {
        has_sinus_rhythm(&self.extraction.mentions)
    }
}

/// True when a non-negated sinus-rhythm term appears anywhere.
pub fn has_sinus_rhythm(mentions: &[EntityMention]) -> bool {
    mentions.iter().any(|m| m.is_sinus_rhythm() && !m.negated)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::resources::canonical_schema;
    use chrono::NaiveDate;

    fn run(body: &str) -> (SectionedReport, Extraction) {
        let schema = canonical_schema();
        let pack = RulePack::bundled(&schema).unwrap();
        let report =
            DischargeReport::new("R", "P", NaiveDate::from_ymd_opt(2020, 1, 1).unwrap(), body).unwrap();
        let s = parse_sections(&report, &SectionLexicon::bundled());
        let e = annotate(&s, &pack);
        (s, e)
    }

    fn find<'a>(e: &'a Extraction, target: &str) -> Vec<&'a EntityMention> {
        e.mentions.iter().filter(|m| m.target == target).collect()
    }

    #[test]
    fn longest_match_wins_over_shorter_overlap() {
        let (_, e) = run("Diagnóstico:\nInsuficiencia mitral moderada\n");
        let m = find(&e, "mitral_insufficiency");
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].value, Some(2.0));
    }

    #[test]
    fn window_limits_negation_reach() {
        let (_, e) = run("Antecedentes:\nno refiere nada de interes salvo que tiene diabetes\n");
        assert!(!find(&e, "diabetes_type2")[0].negated);
        let (_, e) = run("Antecedentes:\nno refiere ningun tipo de diabetes\n");
        assert!(find(&e, "diabetes_type2")[0].negated);
    }

    #[test]
    fn conjunction_terminates_scope() {
        let (_, e) = run("Antecedentes:\nno fuma pero tiene HTA\n");
        assert!(!find(&e, "hypertension")[0].negated);
    }

    #[test]
    fn decimal_comma_and_unit_division() {
        let (_, e) = run("Exploración física:\nTalla 165 cm. Creatinina 1,3 mg/dL\n");
        assert_eq!(find(&e, "height")[0].value, Some(165.0 / 100.0));
        assert_eq!(find(&e, "creatinine")[0].value, Some(1.3));
    }

    #[test]
    fn af_subtype_needs_af_sentence() {
        let (_, e) = run("Diagnóstico:\nFA paroxística. Insuficiencia renal crónica\n");
        let info = classify_mentions(&e.mentions);
        assert!(info.is_onset);
        assert_eq!(info.af_type, af_type::PAROXYSMAL);
        let (_, e) = run("Diagnóstico:\nFA. Paroxística\n");
        assert_eq!(classify_mentions(&e.mentions).af_type, af_type::UNSPECIFIED);
    }

    #[test]
    fn mentions_stay_inside_their_section() {
        let (s, e) = run("Previo\nAntecedentes: HTA\nDiagnóstico: FA persistente\n");
        for m in &e.mentions {
            match m.section {
                Some(sec) => assert_eq!(s.section_at(&m.span), Some(sec)),
                None => assert!(s.unsectioned.unwrap().contains(&m.span)),
            }
        }
    }
}
