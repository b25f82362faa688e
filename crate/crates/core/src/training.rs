//! Optimization: local training, pretraining followed by fine-tuning, and
//! self-labeling augmentation.

use std::fmt::Write as _;
use std::sync::Arc;

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Abstract, Corpus, LabeledSentence, SplitTag};
use crate::embeddings::{parse_pretrained, EmbeddingTable, Vocabulary, DEFAULT_DIM};
use crate::error::{contract, Error, Result};
use crate::model::{GradientBuffer, IndexedAbstract, ModelConfig, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    /// Abstracts per optimizer step.
    pub batch_size: usize,
    pub seed: u64,
    /// Global gradient-norm bound; 0 disables clipping.
    pub gradient_clip_norm: f64,
    /// Epochs without validation-accuracy improvement before stopping; 0 = off.
    pub early_stop_patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            batch_size: 8,
            seed: 13,
            gradient_clip_norm: 5.0,
            early_stop_patience: 5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Contract(m.to_string()));
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        for beta in [self.adam_beta1, self.adam_beta2] {
            if !(beta > 0.0 && beta < 1.0) {
                return bad("Adam betas must lie strictly between 0 and 1");
            }
        }
        if !(self.adam_epsilon > 0.0) {
            return bad("adam_epsilon must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(self.gradient_clip_norm >= 0.0 && self.gradient_clip_norm.is_finite()) {
            return bad("gradient_clip_norm must be non-negative");
        }
        Ok(())
    }
}

/// How to build a fresh model for a corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    /// `num_labels` is overridden by the schema at build time.
    pub config: ModelConfig,
    /// Minimum token frequency for the vocabulary.
    pub min_count: usize,
    /// Word-vector text (`token v1 … vD` lines); random init when absent.
    pub vectors: Option<Arc<str>>,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            config: ModelConfig::new(DEFAULT_DIM, 3),
            min_count: 1,
            vectors: None,
        }
    }
}

impl ModelSpec {
    /// Builds the vocabulary over `corpora` and initializes a model for it.
    pub fn build(&self, corpora: &[Corpus], seed: u64) -> Result<ModelParams> {
        let Some(first) = corpora.first() else {
            return contract("no corpora to build a model from");
        };
        let schema = first.schema().clone();
        if corpora.iter().any(|c| c.schema() != &schema) {
            return contract("corpora use different label schemas");
        }
        let vocabulary = Vocabulary::build_from(corpora, self.min_count)?;
        let mut config = self.config;
        config.encoder.num_labels = schema.len();
        let table = self
            .vectors
            .as_deref()
            .map(|text| -> Result<EmbeddingTable> {
                let (table, found) = parse_pretrained(
                    text,
                    &vocabulary,
                    config.encoder.embedding_dim,
                    seed ^ 0x0e0b_ed,
                )?;
                info!(
                    "pretrained vectors cover {found} of {} tokens",
                    vocabulary.len()
                );
                Ok(table)
            })
            .transpose()?;
        ModelParams::init(schema, Arc::new(vocabulary), &config, table, seed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Loss summed over the epoch's abstracts, divided by their count.
    pub train_loss: f64,
    /// Percentage of training sentences decoded correctly after the epoch.
    pub train_accuracy: f64,
    pub val_accuracy: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were returned (1-based).
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl History {
    /// `epoch, train_loss, train_acc, val_acc` with a header row.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("epoch\ttrain_loss\ttrain_acc\tval_acc\n");
        for r in &self.epochs {
            let val = r
                .val_accuracy
                .map_or_else(|| "-".to_string(), |v| format!("{v:.2}"));
            let _ = writeln!(
                out,
                "{}\t{:.6}\t{:.2}\t{val}",
                r.epoch, r.train_loss, r.train_accuracy
            );
        }
        out
    }
}

fn index_corpus(
    model: &ModelParams,
    corpus: &Corpus,
    need_labels: bool,
) -> Result<Vec<IndexedAbstract>> {
    if corpus.schema() != &model.schema {
        return contract(format!(
            "corpus schema `{}` does not match model schema `{}`",
            corpus.schema().name(),
            model.schema.name()
        ));
    }
    if need_labels && !corpus.is_fully_labeled() {
        return contract("training and validation corpora must be fully labeled");
    }
    corpus
        .abstracts()
        .iter()
        .map(|a| model.index_abstract(a))
        .collect()
}

/// Percentage of sentences whose decoded label equals the gold label.
pub(crate) fn indexed_accuracy(model: &ModelParams, data: &[IndexedAbstract]) -> Result<f64> {
    let counts = data
        .par_iter()
        .map(|abs| {
            let pred = model.predict_indices(abs)?;
            let gold = abs.labels.as_deref().unwrap_or_default();
            Ok((
                pred.iter().zip(gold).filter(|(p, g)| p == g).count(),
                pred.len(),
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let (hit, total) = counts
        .into_iter()
        .fold((0, 0), |(h, t), (a, b)| (h + a, t + b));
    Ok(if total == 0 {
        0.0
    } else {
        100.0 * hit as f64 / total as f64
    })
}

/// Mean per-abstract training loss over a labeled corpus.
pub fn mean_loss(model: &ModelParams, corpus: &Corpus) -> Result<f64> {
    let data = index_corpus(model, corpus, true)?;
    if data.is_empty() {
        return contract("corpus is empty");
    }
    let losses = data
        .par_iter()
        .map(|a| model.loss(a))
        .collect::<Result<Vec<_>>>()?;
    Ok(losses.iter().sum::<f64>() / data.len() as f64)
}

/// Adam with bias correction.
struct Adam {
    m: GradientBuffer,
    v: GradientBuffer,
    step: i32,
}

impl Adam {
    fn new(model: &ModelParams) -> Self {
        Self {
            m: GradientBuffer::zeros_like(model),
            v: GradientBuffer::zeros_like(model),
            step: 0,
        }
    }

    fn update(&mut self, model: &mut ModelParams, grad: &GradientBuffer, cfg: &TrainConfig) {
        self.step += 1;
        let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
        let c1 = 1.0 - b1.powi(self.step);
        let c2 = 1.0 - b2.powi(self.step);
        let params = model.named_mut();
        let moments = self.m.named_mut().into_iter().zip(self.v.named_mut());
        for (((_, mut p), (_, g)), ((_, mut m), (_, mut v))) in
            params.into_iter().zip(grad.named()).zip(moments)
        {
            ndarray::Zip::from(&mut p)
                .and(&g)
                .and(&mut m)
                .and(&mut v)
                .for_each(|p, &g, m, v| {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    *p -= cfg.learning_rate * (*m / c1) / ((*v / c2).sqrt() + cfg.adam_epsilon);
                });
        }
    }
}

/// Rescales `grad` so its global norm is at most `bound`. Returns the norm
/// before clipping.
pub fn clip_global_norm(grad: &mut GradientBuffer, bound: f64) -> f64 {
    let norm = grad.global_norm();
    if bound > 0.0 && norm > bound {
        grad.scale(bound / norm);
    }
    norm
}

/// Trains on `corpus_train`, starting from `init` or from a default model
/// built over the training vocabulary.
///
/// With a validation corpus the parameters from the epoch with the highest
/// validation accuracy are returned; otherwise the final ones.
pub fn train(
    corpus_train: &Corpus,
    corpus_val: Option<&Corpus>,
    config: &TrainConfig,
    init: Option<ModelParams>,
) -> Result<(ModelParams, History)> {
    config.validate()?;
    let mut model = match init {
        Some(model) => model,
        None => {
            let mut spec = ModelSpec::default();
            spec.config.encoder.num_labels = corpus_train.schema().len();
            spec.build(std::slice::from_ref(corpus_train), config.seed)?
        }
    };
    model.validate()?;
    let data = index_corpus(&model, corpus_train, true)?;
    if data.is_empty() {
        return contract("training corpus is empty");
    }
    let val = corpus_val
        .map(|c| index_corpus(&model, c, true))
        .transpose()?
        .filter(|v| !v.is_empty());

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = Adam::new(&model);
    let mut grad = GradientBuffer::zeros_like(&model);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = History::default();
    let mut best: Option<(f64, ModelParams)> = None;
    let mut stale = 0;
    let mut step = 0;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            step += 1;
            let diverged = |message: String| Error::Training {
                epoch,
                step,
                message,
            };
            let results = batch
                .par_iter()
                .map(|&i| model.loss_and_gradients(&data[i]))
                .collect::<Vec<_>>();
            grad.fill(0.0);
            for result in results {
                let (loss, g) = result.map_err(|e| diverged(e.to_string()))?;
                epoch_loss += loss;
                grad.add(&g);
            }
            let norm = clip_global_norm(&mut grad, config.gradient_clip_norm);
            if !norm.is_finite() {
                return Err(diverged("gradient norm is not finite".into()));
            }
            adam.update(&mut model, &grad, config);
        }
        if !epoch_loss.is_finite() {
            return Err(Error::Training {
                epoch,
                step,
                message: "loss is not finite".into(),
            });
        }
        let record = EpochRecord {
            epoch,
            train_loss: epoch_loss / data.len() as f64,
            train_accuracy: indexed_accuracy(&model, &data)?,
            val_accuracy: val
                .as_deref()
                .map(|v| indexed_accuracy(&model, v))
                .transpose()?,
        };
        debug!(
            "epoch {epoch}: loss {:.4} train acc {:.2} val acc {:?}",
            record.train_loss, record.train_accuracy, record.val_accuracy
        );
        history.epochs.push(record);

        match record.val_accuracy {
            Some(acc) if best.as_ref().map_or(true, |(b, _)| acc > *b) => {
                best = Some((acc, model.clone()));
                history.best_epoch = epoch;
                stale = 0;
            }
            Some(_) => {
                stale += 1;
                if config.early_stop_patience > 0 && stale >= config.early_stop_patience {
                    history.stopped_early = true;
                    info!("early stop after epoch {epoch}");
                    break;
                }
            }
            None => history.best_epoch = epoch,
        }
    }
    Ok((best.map_or(model, |(_, m)| m), history))
}

/// Builds a model over `source ∪ target_train` and trains it on `source`.
/// The target vocabulary is included so fine-tuning needs no re-indexing.
pub fn pretrain(
    source: &Corpus,
    target_train: &Corpus,
    spec: &ModelSpec,
    config_pre: &TrainConfig,
) -> Result<(ModelParams, History)> {
    if source.schema() != target_train.schema() {
        return contract(format!(
            "source schema `{}` differs from target schema `{}`; remap the source first",
            source.schema().name(),
            target_train.schema().name()
        ));
    }
    let model = spec.build(&[source.clone(), target_train.clone()], config_pre.seed)?;
    train(source, None, config_pre, Some(model))
}

/// Continues training every parameter on the target corpus. An empty target
/// returns the model unchanged.
pub fn finetune(
    pretrained: &ModelParams,
    target_train: &Corpus,
    target_val: Option<&Corpus>,
    config_ft: &TrainConfig,
) -> Result<(ModelParams, History)> {
    if target_train.is_empty() {
        config_ft.validate()?;
        return Ok((pretrained.clone(), History::default()));
    }
    train(
        target_train,
        target_val,
        config_ft,
        Some(pretrained.clone()),
    )
}

pub fn pretrain_then_finetune(
    source: &Corpus,
    target_train: &Corpus,
    spec: &ModelSpec,
    config_pre: &TrainConfig,
    config_ft: &TrainConfig,
) -> Result<ModelParams> {
    let (pretrained, _) = pretrain(source, target_train, spec, config_pre)?;
    Ok(finetune(&pretrained, target_train, None, config_ft)?.0)
}

/// Labels `unlabeled` with the model's predictions and appends it to `train`.
pub fn augment_with_self_labels(
    model: &ModelParams,
    unlabeled: &Corpus,
    train: &Corpus,
) -> Result<Corpus> {
    if unlabeled.schema() != &model.schema || train.schema() != &model.schema {
        return contract("model, training and unlabeled corpora must share one schema");
    }
    if unlabeled.has_labels() {
        return contract("the corpus to self-label already carries gold labels");
    }
    let labeled = unlabeled
        .abstracts()
        .par_iter()
        .map(|abs| {
            let labels = model.predict(abs)?;
            let sentences = abs
                .sentences()
                .iter()
                .zip(labels)
                .map(|(s, l)| LabeledSentence::labeled(s.text(), l))
                .collect::<Result<Vec<_>>>()?;
            Abstract::new(abs.id(), sentences)
        })
        .collect::<Result<Vec<_>>>()?;
    let extra = Corpus::new(model.schema.clone(), labeled, SplitTag::Train)?;
    train.concat(&extra)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{parse_corpus_str, LabelSchema};

    fn tiny_corpus() -> Corpus {
        parse_corpus_str(
            "###a\nBACKGROUND\tprior work is limited\nTECHNIQUE\twe propose a method\nOBSERVATION\tit works well\n\n\
             ###b\nBACKGROUND\tprior methods fail\nTECHNIQUE\twe design a system\nOBSERVATION\tresults improve\n",
            &LabelSchema::three(),
        )
        .unwrap()
    }

    fn small_spec() -> ModelSpec {
        let mut spec = ModelSpec::default();
        spec.config = ModelConfig::new(6, 3);
        spec.config.encoder.sentence_hidden = 4;
        spec.config.encoder.attention_dim = 4;
        spec.config.encoder.abstract_hidden = 4;
        spec
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let base = TrainConfig::default();
        for cfg in [
            TrainConfig { epochs: 0, ..base },
            TrainConfig {
                learning_rate: 0.0,
                ..base
            },
            TrainConfig {
                adam_beta1: 1.0,
                ..base
            },
            TrainConfig {
                adam_beta2: 0.0,
                ..base
            },
            TrainConfig {
                batch_size: 0,
                ..base
            },
        ] {
            assert!(matches!(cfg.validate(), Err(Error::Contract(_))), "{cfg:?}");
        }
        base.validate().unwrap();
    }

    #[test]
    fn zero_epochs_is_a_contract_error() {
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        assert!(matches!(
            train(&tiny_corpus(), None, &cfg, None),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn clipping_bounds_the_norm() {
        let model = small_spec().build(&[tiny_corpus()], 1).unwrap();
        let mut g = GradientBuffer::zeros_like(&model);
        g.fill(3.0);
        let before = clip_global_norm(&mut g, 5.0);
        assert!(before > 5.0);
        assert!(g.global_norm() <= 5.0 + 1e-9);
        let mut small = GradientBuffer::zeros_like(&model);
        small.fill(1e-4);
        let n = small.global_norm();
        clip_global_norm(&mut small, 5.0);
        assert_eq!(small.global_norm(), n);
    }

    #[test]
    fn pad_row_is_never_updated() {
        let corpus = tiny_corpus();
        let model = small_spec().build(&[corpus.clone()], 2).unwrap();
        let cfg = TrainConfig {
            epochs: 3,
            ..TrainConfig::default()
        };
        let (trained, _) = train(&corpus, None, &cfg, Some(model)).unwrap();
        assert!(trained.embeddings.row(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unlabeled_training_corpus_is_rejected() {
        let corpus = parse_corpus_str("###u\njust text\n", &LabelSchema::three()).unwrap();
        let model = small_spec().build(&[tiny_corpus()], 2).unwrap();
        let err = train(&corpus, None, &TrainConfig::default(), Some(model));
        assert!(matches!(err, Err(Error::Contract(_))));
    }

    #[test]
    fn non_finite_parameters_report_epoch_and_step() {
        let corpus = tiny_corpus();
        let mut model = small_spec().build(&[corpus.clone()], 2).unwrap();
        model.crf.transitions[[0, 0]] = f64::INFINITY;
        // validate() catches it before training
        assert!(matches!(
            train(&corpus, None, &TrainConfig::default(), Some(model.clone())),
            Err(Error::Numeric(_))
        ));
        // huge but finite weights overflow during the first step
        model.crf.transitions[[0, 0]] = 0.0;
        model.encoder.dense.bias.fill(f64::MAX);
        match train(&corpus, None, &TrainConfig::default(), Some(model)) {
            Err(Error::Training { epoch, step, .. }) => assert_eq!((epoch, step), (1, 1)),
            other => panic!("expected training error, got {other:?}"),
        }
    }

    #[test]
    fn history_tsv_has_header_and_rows() {
        let cfg = TrainConfig {
            epochs: 2,
            ..TrainConfig::default()
        };
        let corpus = tiny_corpus();
        let model = small_spec().build(&[corpus.clone()], 3).unwrap();
        let (_, history) = train(&corpus, Some(&corpus), &cfg, Some(model)).unwrap();
        let tsv = history.to_tsv();
        let lines: Vec<&str> = tsv.lines().collect();
        assert_eq!(lines[0], "epoch\ttrain_loss\ttrain_acc\tval_acc");
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[1].split('\t').count(), 4);
    }

    #[test]
    fn schema_mismatch_between_source_and_target() {
        let five = parse_corpus_str("###x\nMETHOD\twe do it\n", &LabelSchema::five()).unwrap();
        let err = pretrain(
            &five,
            &tiny_corpus(),
            &small_spec(),
            &TrainConfig::default(),
        );
        assert!(matches!(err, Err(Error::Contract(_))));
    }
}
