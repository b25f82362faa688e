//! Binary model checkpoints.
//!
//! Layout: 8-byte magic, little-endian `u64` header length, a JSON header,
//! the tensors as little-endian `f64`, and a SHA-256 digest of everything
//! before it. Tensors are addressed by canonical name so a loader can check
//! every shape before touching the data.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::LabelSchema;
use crate::crf::CrfParams;
use crate::embeddings::Vocabulary;
use crate::encoder::EncoderParams;
use crate::error::{Error, Result};
use crate::model::{ModelConfig, ModelParams};

pub const MAGIC: &[u8; 8] = b"ABSEGCK1";
const DIGEST_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    /// Offset in `f64` elements from the start of the data block.
    offset: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    schema: LabelSchema,
    config: ModelConfig,
    vocab_hash: String,
    vocabulary: Vec<String>,
    tensors: Vec<TensorEntry>,
    metadata: BTreeMap<String, String>,
}

/// A loaded model with the free-form metadata stored alongside it.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: ModelParams,
    pub metadata: BTreeMap<String, String>,
}

impl Checkpoint {
    /// Fails unless the checkpoint was trained for `schema`.
    pub fn expect_schema(&self, schema: &LabelSchema) -> Result<()> {
        let have = &self.model.schema;
        if have != schema {
            return Err(Error::Checkpoint(format!(
                "checkpoint has {} classes (schema `{}`), expected {} (schema `{}`)",
                have.len(),
                have.name(),
                schema.len(),
                schema.name()
            )));
        }
        Ok(())
    }

    /// Fails unless the checkpoint vocabulary hashes to `hash`.
    pub fn expect_vocab_hash(&self, hash: &str) -> Result<()> {
        let have = self.model.vocabulary.hash();
        if have != hash {
            return Err(Error::Checkpoint(format!(
                "vocabulary hash mismatch: checkpoint {have}, expected {hash}"
            )));
        }
        Ok(())
    }
}

pub fn to_bytes(model: &ModelParams, metadata: &BTreeMap<String, String>) -> Result<Vec<u8>> {
    model.validate()?;
    let mut tensors = Vec::new();
    let mut data = Vec::new();
    let mut offset = 0;
    for (name, view) in model.named() {
        tensors.push(TensorEntry {
            name,
            shape: view.shape().to_vec(),
            offset,
        });
        offset += view.len();
        for v in view.iter() {
            data.extend_from_slice(&v.to_le_bytes());
        }
    }
    let header = Header {
        schema: model.schema.clone(),
        config: model.config(),
        vocab_hash: model.vocabulary.hash(),
        vocabulary: model.vocabulary.tokens().to_vec(),
        tensors,
        metadata: metadata.clone(),
    };
    let header = serde_json::to_vec(&header)
        .map_err(|e| Error::Checkpoint(format!("cannot encode header: {e}")))?;

    let mut out = Vec::with_capacity(16 + header.len() + data.len() + DIGEST_LEN);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&data);
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    Ok(out)
}

pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
    let bad = |m: &str| Error::Checkpoint(m.to_string());
    if bytes.len() < MAGIC.len() + 8 + DIGEST_LEN {
        return Err(bad("file is truncated"));
    }
    if &bytes[..8] != MAGIC {
        return Err(bad("not a checkpoint (bad magic)"));
    }
    let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
    if Sha256::digest(body).as_slice() != digest {
        return Err(bad("checksum mismatch: file is truncated or corrupt"));
    }
    let header_len = u64::from_le_bytes(body[8..16].try_into().expect("8 bytes")) as usize;
    let header_end = 16usize
        .checked_add(header_len)
        .filter(|&end| end <= body.len())
        .ok_or_else(|| bad("header length exceeds file size"))?;
    let header: Header = serde_json::from_slice(&body[16..header_end])
        .map_err(|e| Error::Checkpoint(format!("malformed header: {e}")))?;
    let data = &body[header_end..];
    if data.len() % 8 != 0 {
        return Err(bad("tensor data is not a whole number of f64 values"));
    }
    let values: Vec<f64> = data
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();

    let vocabulary = Vocabulary::from_tokens(header.vocabulary)?;
    if vocabulary.hash() != header.vocab_hash {
        return Err(bad("vocabulary hash does not match the stored vocabulary"));
    }
    if header.config.encoder.num_labels != header.schema.len() {
        return Err(Error::Checkpoint(format!(
            "model has {} classes but schema `{}` has {}",
            header.config.encoder.num_labels,
            header.schema.name(),
            header.schema.len()
        )));
    }
    header.config.encoder.validate()?;

    // Build a correctly shaped skeleton, then fill it by name.
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let c = header.schema.len();
    let mut model = ModelParams {
        embeddings: ndarray::Array2::zeros((vocabulary.len(), header.config.encoder.embedding_dim)),
        encoder: EncoderParams::init(&header.config.encoder, &mut rng)?.zeros_like(),
        crf: CrfParams::zeros(c),
        schema: header.schema,
        vocabulary: Arc::new(vocabulary),
        output: header.config.output,
    };
    let directory: BTreeMap<&str, &TensorEntry> = header
        .tensors
        .iter()
        .map(|t| (t.name.as_str(), t))
        .collect();
    if directory.len() != header.tensors.len() {
        return Err(bad("duplicate tensor name"));
    }
    let mut used = 0;
    for (name, mut target) in model.named_mut() {
        let entry = directory
            .get(name.as_str())
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor `{name}`")))?;
        if entry.shape != target.shape() {
            return Err(Error::Checkpoint(format!(
                "tensor `{name}` has shape {:?}, model expects {:?}",
                entry.shape,
                target.shape()
            )));
        }
        let end = entry.offset + target.len();
        let slice = values
            .get(entry.offset..end)
            .ok_or_else(|| Error::Checkpoint(format!("tensor `{name}` runs past the data")))?;
        for (dst, &src) in target.iter_mut().zip(slice) {
            *dst = src;
        }
        used += 1;
    }
    if used != directory.len() {
        return Err(bad("checkpoint has tensors the model does not use"));
    }
    model.validate()?;
    Ok(Checkpoint {
        model,
        metadata: header.metadata,
    })
}

pub fn save(path: &Path, model: &ModelParams, metadata: &BTreeMap<String, String>) -> Result<()> {
    fs::write(path, to_bytes(model, metadata)?)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    from_bytes(&fs::read(path)?)
}
