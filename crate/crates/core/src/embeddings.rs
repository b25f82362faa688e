//! Vocabularies and word-vector tables for the token-processing layer.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::corpus::{Corpus, LabeledSentence};
use crate::error::{contract, Error, Result};

pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";
pub const PAD_INDEX: usize = 0;
pub const UNK_INDEX: usize = 1;

/// Half-width of the uniform range for vectors not found in a pretrained file.
pub const OOV_INIT_RANGE: f64 = 0.05;
pub const DEFAULT_EMBEDDING_SEED: u64 = 0x5eed_0e;
pub const DEFAULT_DIM: usize = 50;

/// Token ↔ index map. Index 0 is PAD and index 1 is UNK.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Builds a vocabulary from tokens in index order (PAD and UNK first).
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < 2 || tokens[PAD_INDEX] != PAD_TOKEN || tokens[UNK_INDEX] != UNK_TOKEN {
            return contract("vocabulary must start with <pad>, <unk>");
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return contract(format!("duplicate vocabulary token `{t}`"));
            }
        }
        Ok(Self { tokens, index })
    }

    /// Tokens with frequency ≥ `min_count`, ordered by descending frequency
    /// and then lexicographically.
    pub fn build(corpus: &Corpus, min_count: usize) -> Result<Self> {
        Self::build_from(std::slice::from_ref(corpus), min_count)
    }

    /// Like [`Vocabulary::build`] over the union of several corpora.
    pub fn build_from(corpora: &[Corpus], min_count: usize) -> Result<Self> {
        if min_count == 0 {
            return contract("min_count must be at least 1");
        }
        if corpora.iter().all(Corpus::is_empty) {
            return contract("cannot build a vocabulary from an empty corpus");
        }
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for sentence in corpora.iter().flat_map(Corpus::sentences) {
            for token in sentence.tokens() {
                *counts.entry(token.as_str()).or_default() += 1;
            }
        }
        let mut kept: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|&(t, c)| c >= min_count && t != PAD_TOKEN && t != UNK_TOKEN)
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let mut tokens = vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()];
        tokens.extend(kept.into_iter().map(|(t, _)| t.to_string()));
        Self::from_tokens(tokens)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Index of `token`, or UNK.
    pub fn index(&self, token: &str) -> usize {
        self.get(token).unwrap_or(UNK_INDEX)
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.index(t.as_ref())).collect()
    }

    /// SHA-256 over the tokens in index order, newline separated.
    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        for t in &self.tokens {
            hasher.update(t.as_bytes());
            hasher.update(b"\n");
        }
        hex::encode(hasher.finalize())
    }

    /// One token per line in index order.
    pub fn to_text(&self) -> String {
        let mut out = self.tokens.join("\n");
        out.push('\n');
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Self::from_tokens(text.lines().map(str::to_string).collect())
    }
}

/// A `|vocabulary| × D` matrix of token vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    vectors: Array2<f64>,
}

impl EmbeddingTable {
    pub fn new(vectors: Array2<f64>) -> Result<Self> {
        if vectors.ncols() == 0 || vectors.nrows() < 2 {
            return contract("embedding table needs D ≥ 1 and PAD/UNK rows");
        }
        if vectors.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(
                "embedding table has non-finite entries".into(),
            ));
        }
        if vectors.row(PAD_INDEX).iter().any(|&v| v != 0.0) {
            return contract("PAD embedding row must be zero");
        }
        Ok(Self { vectors })
    }

    /// Every row uniform in ±[`OOV_INIT_RANGE`], except the zero PAD row.
    pub fn random(vocabulary: &Vocabulary, dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return contract("embedding dimension must be positive");
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut vectors = Array2::from_shape_simple_fn((vocabulary.len(), dim), || {
            rng.gen_range(-OOV_INIT_RANGE..=OOV_INIT_RANGE)
        });
        vectors.row_mut(PAD_INDEX).fill(0.0);
        Ok(Self { vectors })
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn len(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.nrows() == 0
    }

    pub fn vectors(&self) -> &Array2<f64> {
        &self.vectors
    }

    pub fn row(&self, index: usize) -> ArrayView1<'_, f64> {
        self.vectors.row(index)
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.vectors
    }
}

/// Loads word vectors (`token v1 … vD` per line) for `vocabulary` using the
/// default seed for tokens missing from the file.
pub fn load_pretrained(
    path: impl AsRef<Path>,
    vocabulary: &Vocabulary,
    dim: usize,
) -> Result<EmbeddingTable> {
    load_pretrained_seeded(path, vocabulary, dim, DEFAULT_EMBEDDING_SEED)
}

pub fn load_pretrained_seeded(
    path: impl AsRef<Path>,
    vocabulary: &Vocabulary,
    dim: usize,
    seed: u64,
) -> Result<EmbeddingTable> {
    let text = fs::read_to_string(path)?;
    parse_pretrained(&text, vocabulary, dim, seed).map(|(table, _)| table)
}

/// Parses word-vector text. Returns the table and how many vocabulary tokens
/// were found in the file. A leading `count dim` header line is skipped.
pub fn parse_pretrained(
    text: &str,
    vocabulary: &Vocabulary,
    dim: usize,
    seed: u64,
) -> Result<(EmbeddingTable, usize)> {
    let mut table = EmbeddingTable::random(vocabulary, dim, seed)?;
    let mut seen = vec![false; vocabulary.len()];
    let mut found = 0;
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let mut fields = line.split_whitespace();
        let Some(token) = fields.next() else { continue };
        let values: Vec<&str> = fields.collect();
        if line_no == 1 && values.len() == 1 && token.parse::<usize>().is_ok() {
            if values[0].parse::<usize>().ok() != Some(dim) {
                return Err(Error::Load {
                    line: line_no,
                    message: format!("header declares dimension {}, expected {dim}", values[0]),
                });
            }
            continue;
        }
        if values.len() != dim {
            return Err(Error::Load {
                line: line_no,
                message: format!("expected {dim} values, found {}", values.len()),
            });
        }
        let Some(row) = vocabulary.get(token) else {
            continue;
        };
        if row == PAD_INDEX || seen[row] {
            continue;
        }
        let mut target = table.vectors.row_mut(row);
        for (slot, raw) in target.iter_mut().zip(&values) {
            let v: f64 = raw.parse().map_err(|_| Error::Load {
                line: line_no,
                message: format!("invalid number `{raw}`"),
            })?;
            if !v.is_finite() {
                return Err(Error::Load {
                    line: line_no,
                    message: format!("non-finite value `{raw}`"),
                });
            }
            *slot = v;
        }
        seen[row] = true;
        found += 1;
    }
    Ok((table, found))
}

/// Stacks the table rows of a sentence's tokens into an `n × D` matrix.
pub fn embed_sentence(
    sentence: &LabeledSentence,
    vocabulary: &Vocabulary,
    table: &EmbeddingTable,
) -> Array2<f64> {
    embed_indices(&vocabulary.encode(sentence.tokens()), table.vectors())
}

pub(crate) fn embed_indices(indices: &[usize], vectors: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros((indices.len(), vectors.ncols()));
    for (mut row, &i) in out.rows_mut().into_iter().zip(indices) {
        row.assign(&vectors.row(i));
    }
    out
}
