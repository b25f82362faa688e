use std::collections::HashSet;

/// Splits raw abstract text into sentences.
pub trait SentenceSegmenter {
    fn segment(&self, text: &str) -> Vec<String>;
}

/// Words ending in a period that do not end a sentence (compared lowercased).
pub const DEFAULT_ABBREVIATIONS: &[&str] = &[
    "e.g.", "i.e.", "al.", "etc.", "cf.", "vs.", "viz.", "fig.", "figs.", "eq.", "eqs.", "sec.",
    "ref.", "refs.", "no.", "dr.", "mr.", "mrs.", "ms.", "prof.", "approx.", "resp.", "vol.",
];

/// Splits after `.`, `!` or `?` (plus any closing quotes or brackets) when the
/// next non-space character is uppercase, unless the word carrying the period
/// is a known abbreviation or a single-letter initial.
#[derive(Debug, Clone)]
pub struct RuleSegmenter {
    abbreviations: HashSet<String>,
}

impl RuleSegmenter {
    pub fn new<S: AsRef<str>>(abbreviations: &[S]) -> Self {
        Self {
            abbreviations: abbreviations
                .iter()
                .map(|a| a.as_ref().to_lowercase())
                .collect(),
        }
    }

    fn is_abbreviation(&self, word: &str) -> bool {
        let word = word.trim_start_matches(['(', '[', '"', '\'']);
        if self.abbreviations.contains(&word.to_lowercase()) {
            return true;
        }
        let mut chars = word.chars();
        matches!((chars.next(), chars.next(), chars.next()), (Some(c), Some('.'), None) if c.is_uppercase())
    }
}

impl Default for RuleSegmenter {
    fn default() -> Self {
        Self::new(DEFAULT_ABBREVIATIONS)
    }
}

const CLOSERS: &[char] = &['"', '\'', ')', ']', '\u{201d}', '\u{2019}'];

impl SentenceSegmenter for RuleSegmenter {
    fn segment(&self, text: &str) -> Vec<String> {
        let chars: Vec<(usize, char)> = text.char_indices().collect();
        let mut sentences = Vec::new();
        let mut start = 0;
        let mut i = 0;

        while i < chars.len() {
            let (pos, c) = chars[i];
            if !matches!(c, '.' | '!' | '?') {
                i += 1;
                continue;
            }
            let mut j = i + 1;
            while j < chars.len() && CLOSERS.contains(&chars[j].1) {
                j += 1;
            }
            let end = chars.get(j).map_or(text.len(), |&(p, _)| p);
            let mut k = j;
            while k < chars.len() && chars[k].1.is_whitespace() {
                k += 1;
            }
            let boundary = k > j && k < chars.len() && chars[k].1.is_uppercase();
            if boundary && c == '.' {
                let word_start = text[..pos].rfind(char::is_whitespace).map_or(0, |w| w + 1);
                if self.is_abbreviation(&text[word_start..=pos]) {
                    i = j;
                    continue;
                }
            }
            if boundary {
                let sentence = text[start..end].trim();
                if !sentence.is_empty() {
                    sentences.push(sentence.to_string());
                }
                start = end;
            }
            i = j;
        }
        let tail = text[start..].trim();
        if !tail.is_empty() {
            sentences.push(tail.to_string());
        }
        sentences
    }
}

/// Segments `raw_text` with the given strategy.
pub fn segment_abstract(raw_text: &str, segmenter: &dyn SentenceSegmenter) -> Vec<String> {
    segmenter.segment(raw_text)
}
