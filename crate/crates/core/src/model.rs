//! The full sentence-labeling network: token embeddings, encoder, and an
//! output layer that is either a linear-chain CRF or a per-sentence softmax.

use std::collections::BTreeMap;
use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView2, ArrayViewD, ArrayViewMutD};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Abstract, LabelSchema};
use crate::crf::{self, CrfParams};
use crate::embeddings::{embed_indices, EmbeddingTable, Vocabulary, PAD_INDEX};
use crate::encoder::{EncoderConfig, EncoderParams, EncoderPass};
use crate::error::{contract, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputLayer {
    /// Sequence NLL for training, Viterbi for prediction.
    Crf,
    /// Per-sentence cross-entropy and argmax; transitions unused.
    Softmax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub output: OutputLayer,
}

impl ModelConfig {
    pub fn new(embedding_dim: usize, num_labels: usize) -> Self {
        Self {
            encoder: EncoderConfig::new(embedding_dim, num_labels),
            output: OutputLayer::Crf,
        }
    }
}

/// An abstract mapped to vocabulary and class indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexedAbstract {
    pub tokens: Vec<Vec<usize>>,
    pub labels: Option<Vec<usize>>,
}

impl IndexedAbstract {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// All trainable arrays plus the label schema and vocabulary they belong to.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub schema: LabelSchema,
    pub vocabulary: Arc<Vocabulary>,
    /// `|vocabulary| × D`; the PAD row stays zero.
    pub embeddings: Array2<f64>,
    pub encoder: EncoderParams,
    pub crf: CrfParams,
    pub output: OutputLayer,
}

impl ModelParams {
    /// Fresh parameters. Without `embeddings`, token vectors are random.
    pub fn init(
        schema: LabelSchema,
        vocabulary: Arc<Vocabulary>,
        config: &ModelConfig,
        embeddings: Option<EmbeddingTable>,
        seed: u64,
    ) -> Result<Self> {
        if config.encoder.num_labels != schema.len() {
            return contract(format!(
                "model has {} classes but schema `{}` has {}",
                config.encoder.num_labels,
                schema.name(),
                schema.len()
            ));
        }
        let dim = config.encoder.embedding_dim;
        let table = match embeddings {
            Some(table) => table,
            None => EmbeddingTable::random(&vocabulary, dim, seed ^ 0x0e0b_ed)?,
        };
        if table.len() != vocabulary.len() || table.dim() != dim {
            return contract(format!(
                "embedding table is {}×{}, expected {}×{dim}",
                table.len(),
                table.dim(),
                vocabulary.len()
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let encoder = EncoderParams::init(&config.encoder, &mut rng)?;
        Ok(Self {
            crf: CrfParams::zeros(schema.len()),
            schema,
            vocabulary,
            embeddings: table.into_inner(),
            encoder,
            output: config.output,
        })
    }

    pub fn config(&self) -> ModelConfig {
        ModelConfig {
            encoder: self.encoder.config(),
            output: self.output,
        }
    }

    pub fn embedding_dim(&self) -> usize {
        self.embeddings.ncols()
    }

    pub fn num_labels(&self) -> usize {
        self.schema.len()
    }

    /// Checks the component invariants and that shapes agree.
    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        if self.embeddings.nrows() != self.vocabulary.len() {
            return contract("embedding rows do not match the vocabulary");
        }
        if self.encoder.config().embedding_dim != self.embedding_dim() {
            return contract("encoder input width does not match the embedding dimension");
        }
        let c = self.schema.len();
        if self.encoder.num_labels() != c
            || self.crf.transitions.dim() != (c, c)
            || self.crf.start.len() != c
            || self.crf.end.len() != c
        {
            return contract("class count differs between schema, dense layer and CRF");
        }
        if self.embeddings.row(PAD_INDEX).iter().any(|&v| v != 0.0) {
            return contract("PAD embedding row must be zero");
        }
        for (name, view) in self.named() {
            if view.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!("parameter `{name}` is not finite")));
            }
        }
        Ok(())
    }

    /// Maps tokens to vocabulary indices and gold labels to class indices.
    pub fn index_abstract(&self, abs: &Abstract) -> Result<IndexedAbstract> {
        index_abstract(abs, &self.vocabulary, &self.schema)
    }

    fn embed(&self, abs: &IndexedAbstract) -> Result<Vec<Array2<f64>>> {
        if abs.is_empty() {
            return contract("abstract has no sentences");
        }
        abs.tokens
            .iter()
            .map(|tokens| {
                if tokens.is_empty() {
                    return contract("sentence has no tokens");
                }
                if let Some(&bad) = tokens.iter().find(|&&t| t >= self.embeddings.nrows()) {
                    return contract(format!("token index {bad} outside the vocabulary"));
                }
                Ok(embed_indices(tokens, &self.embeddings))
            })
            .collect()
    }

    /// Per-sentence class scores (`N × C`).
    pub fn emissions(&self, abs: &IndexedAbstract) -> Result<Array2<f64>> {
        let embedded = self.embed(abs)?;
        EncoderPass::new(&self.encoder).forward(&embedded)
    }

    /// Decoded class indices: Viterbi with a CRF head, argmax otherwise.
    pub fn predict_indices(&self, abs: &IndexedAbstract) -> Result<Vec<usize>> {
        let emissions = self.emissions(abs)?;
        match self.output {
            OutputLayer::Crf => Ok(crf::viterbi_decode(emissions.view(), &self.crf)?.0),
            OutputLayer::Softmax => Ok(emissions
                .rows()
                .into_iter()
                .map(|row| argmax(row.iter().copied()))
                .collect()),
        }
    }

    /// Predicted label names for an abstract.
    pub fn predict(&self, abs: &Abstract) -> Result<Vec<String>> {
        let indexed = self.index_abstract(abs)?;
        Ok(self
            .predict_indices(&indexed)?
            .into_iter()
            .map(|i| self.schema.labels()[i].clone())
            .collect())
    }

    fn gold<'a>(&self, abs: &'a IndexedAbstract) -> Result<&'a [usize]> {
        match &abs.labels {
            Some(labels) if labels.len() == abs.len() => Ok(labels),
            Some(_) => contract("label count does not match sentence count"),
            None => contract("abstract has unlabeled sentences"),
        }
    }

    /// Training loss of one abstract.
    pub fn loss(&self, abs: &IndexedAbstract) -> Result<f64> {
        let gold = self.gold(abs)?;
        let emissions = self.emissions(abs)?;
        match self.output {
            OutputLayer::Crf => Ok(-crf::sequence_log_likelihood(
                emissions.view(),
                &self.crf,
                gold,
            )?),
            OutputLayer::Softmax => Ok(softmax_cross_entropy(emissions.view(), gold)?.0),
        }
    }

    /// Loss of one abstract and the gradient of every parameter.
    pub fn loss_and_gradients(&self, abs: &IndexedAbstract) -> Result<(f64, Gradients)> {
        let gold = self.gold(abs)?;
        let embedded = self.embed(abs)?;
        let mut pass = EncoderPass::new(&self.encoder);
        let emissions = pass.forward(&embedded)?;

        let (loss, d_emissions, crf_grad) = match self.output {
            OutputLayer::Crf => {
                let g = crf::crf_gradients(emissions.view(), &self.crf, gold)?;
                let crf_grad = CrfParams {
                    transitions: g.transitions,
                    start: g.start,
                    end: g.end,
                };
                (g.nll, g.emissions, crf_grad)
            }
            OutputLayer::Softmax => {
                let (loss, d) = softmax_cross_entropy(emissions.view(), gold)?;
                (loss, d, CrfParams::zeros(self.num_labels()))
            }
        };
        if !loss.is_finite() {
            return Err(Error::Numeric("loss is not finite".into()));
        }

        let enc = pass.backward(d_emissions.view())?;
        let mut embedding_rows: BTreeMap<usize, Array1<f64>> = BTreeMap::new();
        for (tokens, d_embedded) in abs.tokens.iter().zip(&enc.embedded) {
            for (&token, row) in tokens.iter().zip(d_embedded.rows()) {
                if token == PAD_INDEX {
                    continue;
                }
                embedding_rows
                    .entry(token)
                    .and_modify(|acc| *acc += &row)
                    .or_insert_with(|| row.to_owned());
            }
        }
        Ok((
            loss,
            Gradients {
                embedding_rows,
                encoder: enc.params,
                crf: crf_grad,
            },
        ))
    }

    /// Parameters under canonical names, in a fixed order.
    pub fn named(&self) -> Vec<(String, ArrayViewD<'_, f64>)> {
        let mut out = vec![(
            "embedding.weight".to_string(),
            self.embeddings.view().into_dyn(),
        )];
        out.extend(self.encoder.named());
        out.extend(crf_named(&self.crf));
        out
    }

    pub fn named_mut(&mut self) -> Vec<(String, ArrayViewMutD<'_, f64>)> {
        let mut out = vec![(
            "embedding.weight".to_string(),
            self.embeddings.view_mut().into_dyn(),
        )];
        out.extend(self.encoder.named_mut());
        out.extend(crf_named_mut(&mut self.crf));
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.named().iter().map(|(_, v)| v.len()).sum()
    }
}

pub fn index_abstract(
    abs: &Abstract,
    vocabulary: &Vocabulary,
    schema: &LabelSchema,
) -> Result<IndexedAbstract> {
    let tokens = abs
        .sentences()
        .iter()
        .map(|s| vocabulary.encode(s.tokens()))
        .collect();
    let labels = match abs.labels() {
        Some(labels) => Some(
            labels
                .into_iter()
                .map(|l| {
                    schema.index_of(l).ok_or_else(|| {
                        Error::Contract(format!("label `{l}` is not in schema `{}`", schema.name()))
                    })
                })
                .collect::<Result<Vec<_>>>()?,
        ),
        None => None,
    };
    Ok(IndexedAbstract { tokens, labels })
}

fn crf_named(crf: &CrfParams) -> Vec<(String, ArrayViewD<'_, f64>)> {
    vec![
        ("crf.transitions".into(), crf.transitions.view().into_dyn()),
        ("crf.start".into(), crf.start.view().into_dyn()),
        ("crf.end".into(), crf.end.view().into_dyn()),
    ]
}

fn crf_named_mut(crf: &mut CrfParams) -> Vec<(String, ArrayViewMutD<'_, f64>)> {
    vec![
        (
            "crf.transitions".into(),
            crf.transitions.view_mut().into_dyn(),
        ),
        ("crf.start".into(), crf.start.view_mut().into_dyn()),
        ("crf.end".into(), crf.end.view_mut().into_dyn()),
    ]
}

fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// Summed per-sentence cross-entropy and its gradient (softmax − one-hot).
pub fn softmax_cross_entropy(
    emissions: ArrayView2<f64>,
    gold: &[usize],
) -> Result<(f64, Array2<f64>)> {
    let (n, c) = emissions.dim();
    if gold.len() != n {
        return contract("label count does not match sentence count");
    }
    let mut grad = Array2::zeros((n, c));
    let mut loss = 0.0;
    for (t, &y) in gold.iter().enumerate() {
        if y >= c {
            return contract(format!("label index {y} out of range"));
        }
        let row = emissions.row(t);
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let log_z = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss += log_z - row[y];
        for j in 0..c {
            grad[[t, j]] = (row[j] - log_z).exp();
        }
        grad[[t, y]] -= 1.0;
    }
    Ok((loss, grad))
}

/// Gradients of one abstract's loss. Embedding gradients are kept per row
/// touched by the abstract.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub embedding_rows: BTreeMap<usize, Array1<f64>>,
    pub encoder: EncoderParams,
    pub crf: CrfParams,
}

/// Dense gradient (or optimizer moment) buffer shaped like [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBuffer {
    pub embeddings: Array2<f64>,
    pub encoder: EncoderParams,
    pub crf: CrfParams,
}

impl GradientBuffer {
    pub fn zeros_like(params: &ModelParams) -> Self {
        Self {
            embeddings: Array2::zeros(params.embeddings.raw_dim()),
            encoder: params.encoder.zeros_like(),
            crf: CrfParams::zeros(params.num_labels()),
        }
    }

    pub fn add(&mut self, grads: &Gradients) {
        for (&row, g) in &grads.embedding_rows {
            let mut target = self.embeddings.row_mut(row);
            target += g;
        }
        for ((_, mut acc), (_, g)) in self
            .encoder
            .named_mut()
            .into_iter()
            .zip(grads.encoder.named())
        {
            acc += &g;
        }
        self.crf.transitions += &grads.crf.transitions;
        self.crf.start += &grads.crf.start;
        self.crf.end += &grads.crf.end;
    }

    pub fn fill(&mut self, value: f64) {
        for (_, mut v) in self.named_mut() {
            v.fill(value);
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.named()
            .iter()
            .flat_map(|(_, v)| v.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for (_, mut v) in self.named_mut() {
            v *= factor;
        }
    }

    /// Same order and names as [`ModelParams::named`].
    pub fn named(&self) -> Vec<(String, ArrayViewD<'_, f64>)> {
        let mut out = vec![(
            "embedding.weight".to_string(),
            self.embeddings.view().into_dyn(),
        )];
        out.extend(self.encoder.named());
        out.extend(crf_named(&self.crf));
        out
    }

    pub fn named_mut(&mut self) -> Vec<(String, ArrayViewMutD<'_, f64>)> {
        let mut out = vec![(
            "embedding.weight".to_string(),
            self.embeddings.view_mut().into_dyn(),
        )];
        out.extend(self.encoder.named_mut());
        out.extend(crf_named_mut(&mut self.crf));
        out
    }
}
