//! Resolved run settings. Precedence: flags, then the config file, then the
//! `ABSEG_SEED` environment variable (seed only), then built-in defaults.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use abseg::corpus::LabelSchema;
use abseg::embeddings::DEFAULT_DIM;
use abseg::encoder::{SentenceEncoderKind, DEFAULT_ABSTRACT_HIDDEN, DEFAULT_ATTENTION_DIM, DEFAULT_SENTENCE_HIDDEN};
use abseg::model::{ModelConfig, OutputLayer};
use abseg::training::{ModelSpec, TrainConfig};
use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use crate::GlobalArgs;

pub const SEED_ENV: &str = "ABSEG_SEED";
const DEFAULT_SEED: u64 = 13;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub embedding_dim: usize,
    pub sentence_hidden: usize,
    pub attention_dim: usize,
    pub abstract_hidden: usize,
    pub sentence_encoder: SentenceEncoderKind,
    pub abstract_lstm: bool,
    pub output: OutputLayer,
    pub min_count: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            embedding_dim: DEFAULT_DIM,
            sentence_hidden: DEFAULT_SENTENCE_HIDDEN,
            attention_dim: DEFAULT_ATTENTION_DIM,
            abstract_hidden: DEFAULT_ABSTRACT_HIDDEN,
            sentence_encoder: SentenceEncoderKind::BiLstmAttention,
            abstract_lstm: true,
            output: OutputLayer::Crf,
            min_count: 1,
        }
    }
}

/// Layout of the `--config` TOML file. Every key is optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub schema: Option<String>,
    pub embeddings: Option<PathBuf>,
    pub dataset: Option<String>,
    pub model: Option<ModelSection>,
    /// Local training and fine-tuning.
    pub train: Option<TrainConfig>,
    pub pretrain: Option<TrainConfig>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Settings {
    pub schema: String,
    pub seed: u64,
    pub embeddings: Option<PathBuf>,
    pub dataset: Option<String>,
    pub model: ModelSection,
    pub train: TrainConfig,
    pub pretrain: TrainConfig,
    #[serde(skip)]
    pub config_path: Option<PathBuf>,
}

impl Settings {
    pub fn resolve(global: &GlobalArgs) -> Result<Self> {
        let file = match &global.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .with_context(|| format!("cannot read config {}", path.display()))?;
                toml::from_str::<FileConfig>(&text)
                    .with_context(|| format!("invalid config {}", path.display()))?
            }
            None => FileConfig::default(),
        };
        let env_seed = match std::env::var(SEED_ENV) {
            Ok(v) => Some(
                v.trim()
                    .parse::<u64>()
                    .map_err(|_| anyhow!("{SEED_ENV} must be an unsigned integer, got `{v}`"))?,
            ),
            Err(_) => None,
        };
        let seed = global.seed.or(file.seed).or(env_seed).unwrap_or(DEFAULT_SEED);
        let schema = global
            .schema
            .clone()
            .or(file.schema)
            .unwrap_or_else(|| "three".to_string());
        if LabelSchema::by_name(&schema).is_none() {
            bail!("unknown schema `{schema}` (expected three or five)");
        }

        let mut train = file.train.unwrap_or_default();
        let mut pretrain = file.pretrain.unwrap_or(train);
        for cfg in [&mut train, &mut pretrain] {
            cfg.seed = seed;
            if let Some(epochs) = global.epochs {
                cfg.epochs = epochs;
            }
            if let Some(lr) = global.lr {
                cfg.learning_rate = lr;
            }
            cfg.validate()?;
        }
        // Relative paths in the config file are relative to the file.
        let embeddings = global.embeddings.clone().or_else(|| {
            file.embeddings.map(|p| match &global.config {
                Some(cfg) if p.is_relative() => cfg.parent().unwrap_or(Path::new(".")).join(p),
                _ => p,
            })
        });
        Ok(Self {
            schema,
            seed,
            embeddings,
            dataset: file.dataset,
            model: file.model.unwrap_or_default(),
            train,
            pretrain,
            config_path: global.config.clone(),
        })
    }

    pub fn label_schema(&self) -> LabelSchema {
        LabelSchema::by_name(&self.schema).expect("validated in resolve")
    }

    pub fn model_spec(&self, num_labels: usize) -> Result<ModelSpec> {
        let m = &self.model;
        let mut config = ModelConfig::new(m.embedding_dim, num_labels);
        config.encoder.sentence_hidden = m.sentence_hidden;
        config.encoder.attention_dim = m.attention_dim;
        config.encoder.abstract_hidden = m.abstract_hidden;
        config.encoder.sentence_encoder = m.sentence_encoder;
        config.encoder.abstract_lstm = m.abstract_lstm;
        config.output = m.output;
        let vectors = match &self.embeddings {
            Some(path) => Some(Arc::from(
                fs::read_to_string(path)
                    .with_context(|| format!("cannot read embeddings {}", path.display()))?,
            )),
            None => None,
        };
        Ok(ModelSpec {
            config,
            min_count: m.min_count,
            vectors,
        })
    }

    /// Dataset name for run directories: config value or the file stem.
    pub fn dataset_for(&self, path: &Path) -> String {
        self.dataset.clone().unwrap_or_else(|| {
            path.file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "dataset".to_string())
        })
    }

    /// Files the run depends on besides the explicit inputs.
    pub fn implicit_inputs(&self) -> Vec<PathBuf> {
        self.config_path.iter().chain(self.embeddings.iter()).cloned().collect()
    }
}
