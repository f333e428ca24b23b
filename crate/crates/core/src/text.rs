//! Case and diacritic folding with an offset map back to the original text,
//! plus the sentence and token segmentation used by negation scoping.

use std::sync::OnceLock;

use regex::Regex;

/// Lowercased, accent-stripped copy of a text.
///
/// `offsets[i]` is the byte offset in the original of the character that
/// produced folded byte `i`; `offsets[text.len()]` is the original length.
#[derive(Debug, Clone)]
pub struct Folded {
    pub text: String,
    offsets: Vec<usize>,
}

impl Folded {
    pub fn new(original: &str) -> Self {
        let mut text = String::with_capacity(original.len());
        let mut offsets = Vec::with_capacity(original.len() + 1);
        let mut buf = [0u8; 4];
        for (at, ch) in original.char_indices() {
            for lower in ch.to_lowercase() {
                if let Some(base) = strip_diacritic(lower) {
                    let s = base.encode_utf8(&mut buf);
                    text.push_str(s);
                    offsets.extend(std::iter::repeat_n(at, s.len()));
                }
            }
        }
        offsets.push(original.len());
        Folded { text, offsets }
    }

    /// Maps a folded byte offset to the original text.
    pub fn original_offset(&self, folded: usize) -> usize {
        self.offsets[folded]
    }

    /// Maps a folded half-open range to the original text.
    pub fn original_range(&self, start: usize, end: usize) -> (usize, usize) {
        let s = self.offsets[start];
        // The end maps to the start of the character after the range.
        let e = if end == 0 { s } else { self.offsets[end] };
        (s, e.max(s))
    }
}

/// Folds a single string without keeping offsets.
pub fn fold(s: &str) -> String {
    Folded::new(s).text
}

/// `None` drops combining marks.
fn strip_diacritic(c: char) -> Option<char> {
    if ('\u{300}'..='\u{36f}').contains(&c) {
        return None;
    }
    Some(match c {
        'à' | 'á' | 'â' | 'ã' | 'ä' | 'å' | 'ā' => 'a',
        'è' | 'é' | 'ê' | 'ë' | 'ē' => 'e',
        'ì' | 'í' | 'î' | 'ï' | 'ī' => 'i',
        'ò' | 'ó' | 'ô' | 'õ' | 'ö' | 'ō' => 'o',
        'ù' | 'ú' | 'û' | 'ü' | 'ū' => 'u',
        'ñ' => 'n',
        'ç' => 'c',
        'ý' | 'ÿ' => 'y',
        'º' => 'o',
        'ª' => 'a',
        other => other,
    })
}

/// Sentence break positions of a folded text.
///
/// Breaks fall on `;`, newline, and `.` unless the dot sits between two
/// digits (a decimal point).
#[derive(Debug, Clone)]
pub struct Sentences {
    breaks: Vec<usize>,
}

impl Sentences {
    pub fn new(text: &str) -> Self {
        let bytes = text.as_bytes();
        let mut breaks = Vec::new();
        for (i, &b) in bytes.iter().enumerate() {
            let is_break = match b {
                b';' | b'\n' => true,
                b'.' => {
                    let digit_before = i > 0 && bytes[i - 1].is_ascii_digit();
                    let digit_after = bytes.get(i + 1).is_some_and(u8::is_ascii_digit);
                    !(digit_before && digit_after)
                }
                _ => false,
            };
            if is_break {
                breaks.push(i);
            }
        }
        Sentences { breaks }
    }

    /// Index of the sentence containing byte `pos`.
    pub fn sentence_of(&self, pos: usize) -> usize {
        self.breaks.partition_point(|&b| b < pos)
    }

    /// True when no sentence break lies in `[start, end)`.
    pub fn same_sentence(&self, start: usize, end: usize) -> bool {
        self.sentence_of(start) == self.sentence_of(end)
    }
}

fn word_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\w+").expect("static regex"))
}

/// Word tokens of `text` as byte ranges.
pub fn word_tokens(text: &str) -> Vec<(usize, usize)> {
    word_regex()
        .find_iter(text)
        .map(|m| (m.start(), m.end()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn folding_strips_case_and_accents() {
        let f = Folded::new("Fibrilación AURICULAR paroxística");
        assert_eq!(f.text, "fibrilacion auricular paroxistica");
    }

    #[test]
    fn offsets_map_back_across_multibyte_chars() {
        let original = "Año: ¿Fibrilación?";
        let f = Folded::new(original);
        let start = f.text.find("fibrilacion").unwrap();
        let (s, e) = f.original_range(start, start + "fibrilacion".len());
        assert_eq!(&original[s..e], "Fibrilación");
    }

    #[test]
    fn decimal_points_do_not_break_sentences() {
        let s = Sentences::new("creatinina 1.2 mg. potasio 4;fa");
        assert!(s.same_sentence(0, 14));
        assert!(!s.same_sentence(0, 20));
        assert!(!s.same_sentence(20, 29));
    }
}
