//! Sentence encoding and abstract-level scoring.
//!
//! Each sentence's `n × D` embedding matrix passes through a BiLSTM and
//! additive attention pooling, giving one vector per sentence. The stacked
//! sentence vectors pass through a second BiLSTM and a dense layer that
//! emits one score per class and sentence.
//!
//! Ablated variants replace the sentence encoder by mean pooling of the
//! token embeddings, or drop the abstract-level BiLSTM.

mod attention;
mod dense;
mod lstm;

use ndarray::{
    Array, Array1, Array2, ArrayView2, ArrayViewD, ArrayViewMutD, Dimension, ShapeBuilder,
};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};

pub use attention::Attention;
pub use dense::Dense;
pub use lstm::{BiLstm, Lstm};

use attention::AttentionTrace;
use lstm::BiLstmTrace;

pub const DEFAULT_SENTENCE_HIDDEN: usize = 32;
pub const DEFAULT_ABSTRACT_HIDDEN: usize = 32;
pub const DEFAULT_ATTENTION_DIM: usize = 32;

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn uniform<Sh, D>(shape: Sh, bound: f64, rng: &mut impl Rng) -> Array<f64, D>
where
    Sh: ShapeBuilder<Dim = D>,
    D: Dimension,
{
    Array::from_shape_simple_fn(shape, || rng.gen_range(-bound..=bound))
}

/// How a sentence's token matrix becomes one vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SentenceEncoderKind {
    BiLstmAttention,
    /// Mean of the token embeddings.
    MeanPool,
}

/// Layer sizes and which layers are present.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub embedding_dim: usize,
    pub sentence_hidden: usize,
    pub attention_dim: usize,
    pub abstract_hidden: usize,
    pub num_labels: usize,
    pub sentence_encoder: SentenceEncoderKind,
    pub abstract_lstm: bool,
}

impl EncoderConfig {
    pub fn new(embedding_dim: usize, num_labels: usize) -> Self {
        Self {
            embedding_dim,
            sentence_hidden: DEFAULT_SENTENCE_HIDDEN,
            attention_dim: DEFAULT_ATTENTION_DIM,
            abstract_hidden: DEFAULT_ABSTRACT_HIDDEN,
            num_labels,
            sentence_encoder: SentenceEncoderKind::BiLstmAttention,
            abstract_lstm: true,
        }
    }

    pub fn sentence_dim(&self) -> usize {
        match self.sentence_encoder {
            SentenceEncoderKind::BiLstmAttention => 2 * self.sentence_hidden,
            SentenceEncoderKind::MeanPool => self.embedding_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut sizes = vec![self.embedding_dim, self.num_labels];
        if self.sentence_encoder == SentenceEncoderKind::BiLstmAttention {
            sizes.extend([self.sentence_hidden, self.attention_dim]);
        }
        if self.abstract_lstm {
            sizes.push(self.abstract_hidden);
        }
        if sizes.contains(&0) {
            return Err(Error::Config("layer sizes must be positive".into()));
        }
        Ok(())
    }
}

/// Trainable arrays of the sentence and abstract layers.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub sentence_lstm: Option<BiLstm>,
    pub attention: Option<Attention>,
    pub abstract_lstm: Option<BiLstm>,
    pub dense: Dense,
}

impl EncoderParams {
    pub fn init(config: &EncoderConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let (sentence_lstm, attention) = match config.sentence_encoder {
            SentenceEncoderKind::BiLstmAttention => (
                Some(BiLstm::init(
                    config.embedding_dim,
                    config.sentence_hidden,
                    rng,
                )),
                Some(Attention::init(
                    2 * config.sentence_hidden,
                    config.attention_dim,
                    rng,
                )),
            ),
            SentenceEncoderKind::MeanPool => (None, None),
        };
        let sentence_dim = config.sentence_dim();
        let (abstract_lstm, dense_in) = if config.abstract_lstm {
            (
                Some(BiLstm::init(sentence_dim, config.abstract_hidden, rng)),
                2 * config.abstract_hidden,
            )
        } else {
            (None, sentence_dim)
        };
        Ok(Self {
            sentence_lstm,
            attention,
            abstract_lstm,
            dense: Dense::init(dense_in, config.num_labels, rng),
        })
    }

    /// Same shapes, all zeros.
    pub fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        for (_, mut view) in out.named_mut() {
            view.fill(0.0);
        }
        out
    }

    pub fn config(&self) -> EncoderConfig {
        let sentence_encoder = if self.sentence_lstm.is_some() {
            SentenceEncoderKind::BiLstmAttention
        } else {
            SentenceEncoderKind::MeanPool
        };
        let embedding_dim = match (&self.sentence_lstm, &self.abstract_lstm) {
            (Some(l), _) => l.input_size(),
            (None, Some(l)) => l.input_size(),
            (None, None) => self.dense.input_size(),
        };
        EncoderConfig {
            embedding_dim,
            sentence_hidden: self.sentence_lstm.as_ref().map_or(0, BiLstm::hidden_size),
            attention_dim: self.attention.as_ref().map_or(0, Attention::width),
            abstract_hidden: self.abstract_lstm.as_ref().map_or(0, BiLstm::hidden_size),
            num_labels: self.dense.output_size(),
            sentence_encoder,
            abstract_lstm: self.abstract_lstm.is_some(),
        }
    }

    pub fn num_labels(&self) -> usize {
        self.dense.output_size()
    }

    /// Checks that layer shapes chain together.
    pub fn validate(&self) -> Result<()> {
        if self.sentence_lstm.is_some() != self.attention.is_some() {
            return contract("sentence BiLSTM and attention must be present together");
        }
        let mut width = match (&self.sentence_lstm, &self.attention) {
            (Some(lstm), Some(att)) => {
                if att.w.ncols() != lstm.output_size() {
                    return contract("attention input width does not match sentence BiLSTM");
                }
                lstm.output_size()
            }
            _ => self.config().embedding_dim,
        };
        if let Some(lstm) = &self.abstract_lstm {
            if lstm.input_size() != width {
                return contract("abstract BiLSTM input width does not match sentence encoding");
            }
            width = lstm.output_size();
        }
        if self.dense.input_size() != width {
            return contract("dense input width does not match its input layer");
        }
        for (name, view) in self.named() {
            if view.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!("parameter `{name}` is not finite")));
            }
        }
        Ok(())
    }

    /// Parameters under their canonical names, in a fixed order.
    pub fn named(&self) -> Vec<(String, ArrayViewD<'_, f64>)> {
        let mut out = Vec::new();
        if let Some(l) = &self.sentence_lstm {
            l.named("sentence_lstm", &mut out);
        }
        if let Some(a) = &self.attention {
            a.named("attention", &mut out);
        }
        if let Some(l) = &self.abstract_lstm {
            l.named("abstract_lstm", &mut out);
        }
        self.dense.named("dense", &mut out);
        out
    }

    pub fn named_mut(&mut self) -> Vec<(String, ArrayViewMutD<'_, f64>)> {
        let mut out = Vec::new();
        if let Some(l) = &mut self.sentence_lstm {
            l.named_mut("sentence_lstm", &mut out);
        }
        if let Some(a) = &mut self.attention {
            a.named_mut("attention", &mut out);
        }
        if let Some(l) = &mut self.abstract_lstm {
            l.named_mut("abstract_lstm", &mut out);
        }
        self.dense.named_mut("dense", &mut out);
        out
    }
}

/// A sentence vector together with the attention weights over its tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct SentenceEncoding {
    pub vector: Array1<f64>,
    pub attention: Array1<f64>,
}

fn ensure_finite<'a>(values: impl IntoIterator<Item = &'a f64>, what: &str) -> Result<()> {
    if values.into_iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!("non-finite value in {what}")));
    }
    Ok(())
}

enum SentenceTrace {
    Attentive {
        lstm: BiLstmTrace,
        attention: AttentionTrace,
    },
    Mean {
        tokens: usize,
    },
}

fn encode_one(
    embedded: ArrayView2<f64>,
    params: &EncoderParams,
) -> Result<(SentenceEncoding, SentenceTrace)> {
    let n = embedded.nrows();
    if n == 0 {
        return contract("sentence has no tokens");
    }
    match (&params.sentence_lstm, &params.attention) {
        (Some(lstm), Some(attention)) => {
            if embedded.ncols() != lstm.input_size() {
                return contract(format!(
                    "embedding width {} does not match encoder input {}",
                    embedded.ncols(),
                    lstm.input_size()
                ));
            }
            let lstm_trace = lstm.forward(embedded);
            let (vector, att_trace) = attention.forward(lstm_trace.output().view());
            ensure_finite(&vector, "sentence encoding")?;
            let encoding = SentenceEncoding {
                vector,
                attention: att_trace.weights().clone(),
            };
            Ok((
                encoding,
                SentenceTrace::Attentive {
                    lstm: lstm_trace,
                    attention: att_trace,
                },
            ))
        }
        _ => {
            let vector = embedded.sum_axis(ndarray::Axis(0)) / n as f64;
            ensure_finite(&vector, "sentence encoding")?;
            let encoding = SentenceEncoding {
                vector,
                attention: Array1::from_elem(n, 1.0 / n as f64),
            };
            Ok((encoding, SentenceTrace::Mean { tokens: n }))
        }
    }
}

/// Encodes one sentence's `n × D` embedding matrix.
pub fn encode_sentence(
    embedded: ArrayView2<f64>,
    params: &EncoderParams,
) -> Result<SentenceEncoding> {
    encode_one(embedded, params).map(|(e, _)| e)
}

fn score(
    encodings: ArrayView2<f64>,
    params: &EncoderParams,
) -> Result<(Array2<f64>, Option<BiLstmTrace>)> {
    if encodings.nrows() == 0 {
        return contract("abstract has no sentences");
    }
    let (features, trace) = match &params.abstract_lstm {
        Some(lstm) => {
            let trace = lstm.forward(encodings);
            (trace.output().clone(), Some(trace))
        }
        None => (encodings.to_owned(), None),
    };
    let emissions = params.dense.forward(features.view());
    ensure_finite(&emissions, "emission scores")?;
    Ok((emissions, trace))
}

/// Per-class scores for each sentence of an abstract (`N × C`).
pub fn score_abstract(encodings: ArrayView2<f64>, params: &EncoderParams) -> Result<Array2<f64>> {
    score(encodings, params).map(|(e, _)| e)
}

struct PassTrace {
    sentences: Vec<SentenceTrace>,
    encodings: Array2<f64>,
    abstract_trace: Option<BiLstmTrace>,
    attention: Vec<Array1<f64>>,
}

/// Gradients from one backward pass.
#[derive(Debug, Clone)]
pub struct EncoderGradients {
    pub params: EncoderParams,
    /// Gradient for each sentence's embedding matrix.
    pub embedded: Vec<Array2<f64>>,
}

/// One forward/backward evaluation over an abstract. Holds the activations
/// of the most recent forward pass.
pub struct EncoderPass<'a> {
    params: &'a EncoderParams,
    trace: Option<PassTrace>,
}

impl<'a> EncoderPass<'a> {
    pub fn new(params: &'a EncoderParams) -> Self {
        Self {
            params,
            trace: None,
        }
    }

    /// Scores an abstract given each sentence's embedding matrix.
    pub fn forward(&mut self, sentences: &[Array2<f64>]) -> Result<Array2<f64>> {
        self.trace = None;
        if sentences.is_empty() {
            return contract("abstract has no sentences");
        }
        let width = self.params.config().sentence_dim();
        let mut encodings = Array2::zeros((sentences.len(), width));
        let mut traces = Vec::with_capacity(sentences.len());
        let mut attention = Vec::with_capacity(sentences.len());
        for (i, embedded) in sentences.iter().enumerate() {
            let (encoding, trace) = encode_one(embedded.view(), self.params)?;
            encodings.row_mut(i).assign(&encoding.vector);
            attention.push(encoding.attention);
            traces.push(trace);
        }
        let (emissions, abstract_trace) = score(encodings.view(), self.params)?;
        self.trace = Some(PassTrace {
            sentences: traces,
            encodings,
            abstract_trace,
            attention,
        });
        Ok(emissions)
    }

    /// Attention weights of the last forward pass, one vector per sentence.
    pub fn attention_weights(&self) -> Option<&[Array1<f64>]> {
        self.trace.as_ref().map(|t| t.attention.as_slice())
    }

    /// Backpropagates `d_emissions` (`N × C`) through the last forward pass.
    pub fn backward(&self, d_emissions: ArrayView2<f64>) -> Result<EncoderGradients> {
        let Some(trace) = &self.trace else {
            return contract("backward called before forward");
        };
        let n = trace.encodings.nrows();
        if d_emissions.dim() != (n, self.params.num_labels()) {
            return contract("emission gradient shape does not match the forward pass");
        }
        let params = self.params;
        let mut grads = params.zeros_like();

        let features = match &trace.abstract_trace {
            Some(t) => t.output().view(),
            None => trace.encodings.view(),
        };
        let d_features = params
            .dense
            .backward(features, d_emissions, &mut grads.dense);
        let d_encodings = match (&params.abstract_lstm, &trace.abstract_trace) {
            (Some(lstm), Some(t)) => {
                lstm.backward(t, d_features.view(), grads.abstract_lstm.as_mut().unwrap())
            }
            _ => d_features,
        };

        let mut embedded = Vec::with_capacity(n);
        for (i, sentence) in trace.sentences.iter().enumerate() {
            let d_vector = d_encodings.row(i).to_owned();
            let d_embedded = match sentence {
                SentenceTrace::Attentive { lstm, attention } => {
                    let att_params = params.attention.as_ref().unwrap();
                    let d_states = att_params.backward(
                        attention,
                        lstm.output().view(),
                        &d_vector,
                        grads.attention.as_mut().unwrap(),
                    );
                    params.sentence_lstm.as_ref().unwrap().backward(
                        lstm,
                        d_states.view(),
                        grads.sentence_lstm.as_mut().unwrap(),
                    )
                }
                SentenceTrace::Mean { tokens } => {
                    let row = &d_vector / *tokens as f64;
                    let mut out = Array2::zeros((*tokens, row.len()));
                    for mut r in out.rows_mut() {
                        r.assign(&row);
                    }
                    out
                }
            };
            embedded.push(d_embedded);
        }
        Ok(EncoderGradients {
            params: grads,
            embedded,
        })
    }
}
