//! Labeled-abstract corpora.
//!
//! A corpus file holds one block per abstract:
//!
//! ```text
//! ###<id>
//! LABEL<TAB>sentence text
//! LABEL<TAB>sentence text
//!
//! ###<id>
//! ...
//! ```
//!
//! Blocks are separated by a single blank line. Sentences of an unlabeled
//! corpus are written without the `LABEL<TAB>` prefix.

mod filter;
mod schema;
mod segment;
mod split;
mod stats;
mod tokenize;

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::Path;

use crate::error::{contract, Error, Result};

pub use filter::{filter_code_sentences, CodeFilter, DEFAULT_CODE_PATTERNS};
pub use schema::{LabelMapping, LabelSchema};
pub use segment::{segment_abstract, RuleSegmenter, SentenceSegmenter, DEFAULT_ABBREVIATIONS};
pub use split::{split_corpus, SplitFractions};
pub use stats::{
    cohens_kappa, distribution_tsv, label_position_distribution, CorpusSummary,
    DEFAULT_NORMALIZED_LENGTH,
};
pub use tokenize::{tokenize, NUM_TOKEN};

/// One sentence of an abstract.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledSentence {
    text: String,
    label: Option<String>,
    tokens: Vec<String>,
}

impl LabeledSentence {
    pub fn new(text: impl Into<String>, label: Option<String>) -> Result<Self> {
        let text = text.into();
        if text.trim().is_empty() {
            return contract("sentence text is empty");
        }
        let tokens = tokenize(&text);
        debug_assert!(!tokens.is_empty());
        Ok(Self {
            text,
            label,
            tokens,
        })
    }

    pub fn labeled(text: impl Into<String>, label: impl Into<String>) -> Result<Self> {
        Self::new(text, Some(label.into()))
    }

    pub fn unlabeled(text: impl Into<String>) -> Result<Self> {
        Self::new(text, None)
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn with_label(mut self, label: Option<String>) -> Self {
        self.label = label;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Abstract {
    id: String,
    sentences: Vec<LabeledSentence>,
}

impl Abstract {
    pub fn new(id: impl Into<String>, sentences: Vec<LabeledSentence>) -> Result<Self> {
        let id = id.into();
        if id.is_empty() {
            return contract("abstract id is empty");
        }
        if sentences.is_empty() {
            return contract(format!("abstract `{id}` has no sentences"));
        }
        Ok(Self { id, sentences })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn sentences(&self) -> &[LabeledSentence] {
        &self.sentences
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    /// Gold labels, or `None` if any sentence is unlabeled.
    pub fn labels(&self) -> Option<Vec<&str>> {
        self.sentences.iter().map(|s| s.label()).collect()
    }

    pub fn is_fully_labeled(&self) -> bool {
        self.sentences.iter().all(|s| s.label.is_some())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SplitTag {
    Train,
    Validation,
    Test,
    Unlabeled,
}

impl fmt::Display for SplitTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitTag::Train => "train",
            SplitTag::Validation => "validation",
            SplitTag::Test => "test",
            SplitTag::Unlabeled => "unlabeled",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    schema: LabelSchema,
    abstracts: Vec<Abstract>,
    split: SplitTag,
}

impl Corpus {
    /// Builds a corpus, checking that labels belong to `schema` and ids are unique.
    pub fn new(schema: LabelSchema, abstracts: Vec<Abstract>, split: SplitTag) -> Result<Self> {
        let mut seen = HashSet::new();
        for abs in &abstracts {
            if !seen.insert(abs.id.as_str()) {
                return contract(format!("duplicate abstract id `{}`", abs.id));
            }
            for sentence in &abs.sentences {
                if let Some(label) = sentence.label() {
                    if schema.index_of(label).is_none() {
                        return contract(format!(
                            "label `{label}` is not in schema `{}`",
                            schema.name()
                        ));
                    }
                }
            }
        }
        Ok(Self {
            schema,
            abstracts,
            split,
        })
    }

    pub fn empty(schema: LabelSchema, split: SplitTag) -> Self {
        Self {
            schema,
            abstracts: Vec::new(),
            split,
        }
    }

    pub fn schema(&self) -> &LabelSchema {
        &self.schema
    }

    pub fn abstracts(&self) -> &[Abstract] {
        &self.abstracts
    }

    pub fn into_abstracts(self) -> Vec<Abstract> {
        self.abstracts
    }

    pub fn split(&self) -> SplitTag {
        self.split
    }

    pub fn with_split(mut self, split: SplitTag) -> Self {
        self.split = split;
        self
    }

    pub fn len(&self) -> usize {
        self.abstracts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.abstracts.is_empty()
    }

    pub fn sentence_count(&self) -> usize {
        self.abstracts.iter().map(Abstract::len).sum()
    }

    pub fn sentences(&self) -> impl Iterator<Item = &LabeledSentence> {
        self.abstracts.iter().flat_map(|a| a.sentences.iter())
    }

    pub fn is_fully_labeled(&self) -> bool {
        self.abstracts.iter().all(Abstract::is_fully_labeled)
    }

    pub fn has_labels(&self) -> bool {
        self.sentences().any(|s| s.label.is_some())
    }

    /// Per-label sentence counts in schema order.
    pub fn label_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.schema.len()];
        for sentence in self.sentences() {
            if let Some(idx) = sentence.label().and_then(|l| self.schema.index_of(l)) {
                counts[idx] += 1;
            }
        }
        counts
    }

    /// First `n` abstracts, in order.
    pub fn take(&self, n: usize) -> Corpus {
        Corpus {
            schema: self.schema.clone(),
            abstracts: self.abstracts.iter().take(n).cloned().collect(),
            split: self.split,
        }
    }

    /// Concatenates two corpora over the same schema.
    pub fn concat(&self, other: &Corpus) -> Result<Corpus> {
        if self.schema != other.schema {
            return contract(format!(
                "cannot join corpora over schemas `{}` and `{}`",
                self.schema.name(),
                other.schema.name()
            ));
        }
        let mut abstracts = self.abstracts.clone();
        abstracts.extend(other.abstracts.iter().cloned());
        Corpus::new(self.schema.clone(), abstracts, self.split)
    }
}

/// Reads a corpus file.
pub fn parse_corpus(path: impl AsRef<Path>, schema: &LabelSchema) -> Result<Corpus> {
    let text = fs::read_to_string(path)?;
    parse_corpus_str(&text, schema)
}

/// Parses corpus text. The split tag is `Unlabeled` when no sentence carries a
/// label and `Train` otherwise; use [`Corpus::with_split`] to retag.
pub fn parse_corpus_str(text: &str, schema: &LabelSchema) -> Result<Corpus> {
    struct Pending {
        id: String,
        line: usize,
        sentences: Vec<LabeledSentence>,
    }

    fn close(
        pending: Option<Pending>,
        abstracts: &mut Vec<Abstract>,
        ids: &mut HashSet<String>,
    ) -> Result<()> {
        let Some(p) = pending else { return Ok(()) };
        if p.sentences.is_empty() {
            return Err(Error::Parse {
                line: p.line,
                message: format!("abstract `{}` has no sentences", p.id),
            });
        }
        if !ids.insert(p.id.clone()) {
            return Err(Error::Parse {
                line: p.line,
                message: format!("duplicate abstract id `{}`", p.id),
            });
        }
        abstracts.push(Abstract {
            id: p.id,
            sentences: p.sentences,
        });
        Ok(())
    }

    let mut abstracts = Vec::new();
    let mut ids = HashSet::new();
    let mut pending: Option<Pending> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);

        if let Some(id) = line.strip_prefix("###") {
            close(pending.take(), &mut abstracts, &mut ids)?;
            if id.trim().is_empty() || id != id.trim() {
                return Err(Error::Parse {
                    line: line_no,
                    message: "malformed header: expected `###<id>`".into(),
                });
            }
            pending = Some(Pending {
                id: id.to_string(),
                line: line_no,
                sentences: Vec::new(),
            });
            continue;
        }

        if line.trim().is_empty() {
            close(pending.take(), &mut abstracts, &mut ids)?;
            continue;
        }

        let Some(current) = pending.as_mut() else {
            return Err(Error::Parse {
                line: line_no,
                message: "malformed header: sentence line outside an abstract".into(),
            });
        };

        let (label, sentence_text) = match line.split_once('\t') {
            Some((label, rest)) => {
                if schema.index_of(label).is_none() {
                    return Err(Error::Parse {
                        line: line_no,
                        message: format!("unknown label `{label}` for schema `{}`", schema.name()),
                    });
                }
                (Some(label.to_string()), rest)
            }
            None => (None, line),
        };
        if sentence_text.trim().is_empty() {
            return Err(Error::Parse {
                line: line_no,
                message: "empty sentence text".into(),
            });
        }
        current
            .sentences
            .push(LabeledSentence::new(sentence_text, label)?);
    }
    close(pending, &mut abstracts, &mut ids)?;

    let labeled = abstracts
        .iter()
        .any(|a| a.sentences.iter().any(|s| s.label.is_some()));
    let split = if labeled {
        SplitTag::Train
    } else {
        SplitTag::Unlabeled
    };
    Ok(Corpus {
        schema: schema.clone(),
        abstracts,
        split,
    })
}

/// Writes `corpus` in canonical form; `parse_corpus_str` inverts it exactly.
pub fn serialize_corpus(corpus: &Corpus) -> String {
    let mut out = String::new();
    for (i, abs) in corpus.abstracts.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        out.push_str("###");
        out.push_str(&abs.id);
        out.push('\n');
        for sentence in &abs.sentences {
            if let Some(label) = &sentence.label {
                out.push_str(label);
                out.push('\t');
            }
            out.push_str(&sentence.text);
            out.push('\n');
        }
    }
    out
}

pub fn write_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, serialize_corpus(corpus))?;
    Ok(())
}

/// Replaces every label by its image under `mapping`.
pub fn remap_labels(corpus: &Corpus, mapping: &LabelMapping) -> Result<Corpus> {
    if corpus.schema != *mapping.source() {
        return contract(format!(
            "corpus schema `{}` does not match mapping source `{}`",
            corpus.schema.name(),
            mapping.source().name()
        ));
    }
    let abstracts = corpus
        .abstracts
        .iter()
        .map(|abs| Abstract {
            id: abs.id.clone(),
            sentences: abs
                .sentences
                .iter()
                .map(|s| {
                    let label = s
                        .label
                        .as_deref()
                        .map(|l| mapping.apply(l).expect("label validated against schema"));
                    s.clone().with_label(label.map(str::to_string))
                })
                .collect(),
        })
        .collect();
    Ok(Corpus {
        schema: mapping.target().clone(),
        abstracts,
        split: corpus.split,
    })
}
