use regex::Regex;

use super::{Abstract, Corpus};
use crate::error::{Error, Result};

/// Patterns that mark a sentence as a CODE line (repository links, data or
/// code availability statements).
pub const DEFAULT_CODE_PATTERNS: &[&str] = &[
    r"(?i)\b(?:https?://|www\.)\S+",
    r"(?i)\b(?:git(?:hub|lab))\b",
    r"(?i)\b(?:code|data)\b.*\b(?:is|are)\s+(?:\w+\s+)?available\b",
];

/// A compiled set of CODE-line patterns.
#[derive(Debug, Clone)]
pub struct CodeFilter {
    patterns: Vec<Regex>,
}

impl CodeFilter {
    pub fn new<S: AsRef<str>>(patterns: &[S]) -> Result<Self> {
        if patterns.is_empty() {
            return Err(Error::Config(
                "CODE filter needs at least one pattern".into(),
            ));
        }
        let patterns = patterns
            .iter()
            .map(|p| {
                Regex::new(p.as_ref())
                    .map_err(|e| Error::Config(format!("invalid pattern `{}`: {e}", p.as_ref())))
            })
            .collect::<Result<_>>()?;
        Ok(Self { patterns })
    }

    pub fn is_code(&self, text: &str) -> bool {
        self.patterns.iter().any(|re| re.is_match(text))
    }
}

impl Default for CodeFilter {
    fn default() -> Self {
        Self::new(DEFAULT_CODE_PATTERNS).expect("default patterns compile")
    }
}

/// Drops sentences matching any filter pattern, then drops abstracts left
/// empty. Returns the filtered corpus and the number of removed sentences.
pub fn filter_code_sentences(corpus: &Corpus, filter: &CodeFilter) -> (Corpus, usize) {
    let mut removed = 0;
    let abstracts = corpus
        .abstracts()
        .iter()
        .filter_map(|abs| {
            let kept: Vec<_> = abs
                .sentences()
                .iter()
                .filter(|s| {
                    let code = filter.is_code(s.text());
                    removed += usize::from(code);
                    !code
                })
                .cloned()
                .collect();
            Abstract::new(abs.id(), kept).ok()
        })
        .collect();
    let filtered = Corpus::new(corpus.schema().clone(), abstracts, corpus.split())
        .expect("subset of a valid corpus is valid");
    (filtered, removed)
}
