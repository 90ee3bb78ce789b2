//! Splitting raw LLM text into restatement and rationale.

use regex::Regex;

use crate::corpus::Explanation;

/// Sentence openers that mark the start of the rationale.
///
/// A `...` in a marker stands for one to three words.
pub const DEFAULT_MARKERS: [&str; 7] = [
    "The ... relationship",
    "These two sentences",
    "Thus",
    "This",
    "Therefore",
    "The second sentence expands",
    "The ... relationship is",
];

#[derive(Debug, Clone)]
pub struct SplitMarkers {
    patterns: Vec<Regex>,
    min_restatement_sentences: usize,
}

impl Default for SplitMarkers {
    fn default() -> Self {
        Self::new(DEFAULT_MARKERS.iter().copied())
    }
}

impl SplitMarkers {
    pub fn new<'a>(markers: impl IntoIterator<Item = &'a str>) -> Self {
        let patterns = markers
            .into_iter()
            .map(|m| {
                let body = m
                    .split_whitespace()
                    .map(|w| {
                        if w == "..." {
                            r"(?:\S+\s+){0,2}\S+".to_string()
                        } else {
                            regex::escape(w)
                        }
                    })
                    .collect::<Vec<_>>()
                    .join(r"\s+");
                Regex::new(&format!(r"^{body}\b")).expect("marker regex")
            })
            .collect();
        Self {
            patterns,
            min_restatement_sentences: 2,
        }
    }

    fn matches(&self, sentence: &str) -> bool {
        self.patterns.iter().any(|p| p.is_match(sentence))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("explanation text is empty")]
    Empty,
    #[error("no rationale marker found after the restatement")]
    NoSplitPoint,
}

/// Byte offsets where sentences start.
pub fn sentence_starts(text: &str) -> Vec<usize> {
    static BOUNDARY: std::sync::OnceLock<Regex> = std::sync::OnceLock::new();
    let re = BOUNDARY
        .get_or_init(|| Regex::new(r#"[.!?]["')\]]*\s+(["'(\[]?[A-Z0-9])"#).unwrap());
    std::iter::once(0)
        .chain(re.captures_iter(text).map(|c| c.get(1).unwrap().start()))
        .collect()
}

/// Splits at the first marker sentence that follows at least two sentences.
pub fn parse_explanation(raw: &str, markers: &SplitMarkers) -> Result<Explanation, ParseError> {
    let text = raw.trim();
    if text.is_empty() {
        return Err(ParseError::Empty);
    }
    let starts = sentence_starts(text);
    let split = starts
        .iter()
        .skip(markers.min_restatement_sentences)
        .copied()
        .find(|&s| markers.matches(&text[s..]))
        .ok_or(ParseError::NoSplitPoint)?;
    Explanation::new(&text[..split], &text[split..]).map_err(|_| ParseError::NoSplitPoint)
}
