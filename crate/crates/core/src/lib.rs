//! Sentence-level discourse segmentation of scientific abstracts.
//!
//! The model embeds tokens, encodes each sentence with a BiLSTM and additive
//! attention, contextualizes sentences with an abstract-level BiLSTM, and
//! decodes labels with a linear-chain CRF.

pub mod checkpoint;
pub mod corpus;
pub mod crf;
pub mod embeddings;
pub mod encoder;
mod error;
pub mod evaluation;
pub mod model;
pub mod plot;
pub mod synthetic;
pub mod training;

pub use error::{Error, Result};
