//! Splits a report body into canonical sections with a line-anchored header
//! lexicon.
//!
//! A header is a line that starts (after optional spaces or tabs) with one of
//! the lexicon patterns and is followed by a colon or the end of the line.
//! Patterns are matched against the case- and accent-folded line, so they are
//! written in lowercase without diacritics. When several patterns match one
//! line the highest priority wins, then the longest header, then lexicon
//! order.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use regex::Regex;

use crate::data_model::{CanonicalSection, DischargeReport, Section, SectionedReport, TextSpan};
use crate::error::{Error, Result};
use crate::text::Folded;

#[derive(Debug, Clone)]
pub struct LexiconEntry {
    pub pattern: String,
    pub section: CanonicalSection,
    pub priority: i32,
    regex: Regex,
}

#[derive(Debug, Clone)]
pub struct SectionLexicon {
    entries: Vec<LexiconEntry>,
}

impl SectionLexicon {
    /// Fails when a pattern does not compile or a section has no pattern.
    pub fn new(entries: Vec<(String, CanonicalSection, i32)>) -> Result<Self> {
        let mut compiled = Vec::with_capacity(entries.len());
        for (pattern, section, priority) in entries {
            let anchored = format!(r"^[ \t]*(?:{pattern})[ \t]*(?::|$)");
            let regex = Regex::new(&anchored).map_err(|e| Error::InvalidRule {
                pattern: pattern.clone(),
                message: e.to_string(),
            })?;
            compiled.push(LexiconEntry {
                pattern,
                section,
                priority,
                regex,
            });
        }
        let covered: HashSet<_> = compiled.iter().map(|e| e.section).collect();
        if let Some(missing) = CanonicalSection::ALL.iter().find(|s| !covered.contains(s)) {
            return Err(Error::Config(format!("lexicon has no header pattern for {missing}")));
        }
        Ok(SectionLexicon { entries: compiled })
    }

    /// Parses lexicon CSV text (`pattern,section,priority`).
    pub fn parse(text: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let mut entries = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::malformed("lexicon", "csv", e.to_string()))?;
            let at = format!("lexicon row {}", i + 2);
            if rec.len() != 3 {
                return Err(Error::malformed(at, "row", "expected pattern,section,priority"));
            }
            let priority = rec[2]
                .parse()
                .map_err(|_| Error::malformed(&at, "priority", rec[2].to_string()))?;
            entries.push((rec[0].to_string(), rec[1].parse()?, priority));
        }
        SectionLexicon::new(entries)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        SectionLexicon::parse(&text)
    }

    pub fn bundled() -> Self {
        SectionLexicon::parse(crate::resources::LEXICON_CSV).expect("bundled lexicon is valid")
    }

    pub fn entries(&self) -> &[LexiconEntry] {
        &self.entries
    }

    /// Section and header length (in folded bytes) for a header line.
    fn classify_line(&self, folded_line: &str) -> Option<(CanonicalSection, usize)> {
        let mut best: Option<(usize, i32, usize)> = None;
        for (i, e) in self.entries.iter().enumerate() {
            if let Some(m) = e.regex.find(folded_line) {
                let better = match best {
                    None => true,
                    Some((_, p, len)) => e.priority > p || (e.priority == p && m.len() > len),
                };
                if better {
                    best = Some((i, e.priority, m.len()));
                }
            }
        }
        best.map(|(i, _, len)| (self.entries[i].section, len))
    }
}

/// Splits `report` into sections. Never fails: a report without headers
/// yields a single unsectioned bucket.
pub fn parse_sections(report: &DischargeReport, lexicon: &SectionLexicon) -> SectionedReport {
    let body = report.body.as_str();
    // (header line start, content start, section)
    let mut headers: Vec<(usize, usize, CanonicalSection)> = Vec::new();
    let mut line_start = 0;
    for line in body.split_inclusive('\n') {
        let trimmed = line.strip_suffix('\n').unwrap_or(line);
        let trimmed = trimmed.strip_suffix('\r').unwrap_or(trimmed);
        let folded = Folded::new(trimmed);
        if let Some((section, header_len)) = lexicon.classify_line(&folded.text) {
            let content = line_start + folded.original_offset(header_len);
            headers.push((line_start, content, section));
        }
        line_start += line.len();
    }

    let unsectioned = match headers.first() {
        None => Some(TextSpan::new(0, body.len())),
        Some(&(0, _, _)) => None,
        Some(&(start, _, _)) => Some(TextSpan::new(0, start)),
    };
    let sections = headers
        .iter()
        .enumerate()
        .map(|(i, &(start, content_start, section))| {
            let end = headers.get(i + 1).map_or(body.len(), |h| h.0);
            Section {
                section,
                span: TextSpan::new(start, end),
                content_start,
                text: body[start..end].to_string(),
            }
        })
        .collect();
    let sectioned = SectionedReport {
        report: report.clone(),
        unsectioned,
        sections,
    };
    debug_assert!(sectioned.validate().is_ok());
    sectioned
}
