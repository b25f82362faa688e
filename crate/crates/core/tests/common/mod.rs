//! Transfer setup shared by the experiment tests and the acceptance run.
#![allow(dead_code)]

use std::sync::Arc;

use abseg::evaluation::{ExperimentConfig, TransferData};
use abseg::model::ModelConfig;
use abseg::synthetic::{transfer_fixture, FixtureConfig, TransferFixture};
use abseg::training::{ModelSpec, TrainConfig};

pub const DIM: usize = 16;
pub const PRETRAIN_EPOCHS: usize = 20;
/// Upper bound; early stopping on the target validation split ends most runs sooner.
pub const FINETUNE_EPOCHS: usize = 100;

/// Fixture seeds are offset so they never coincide with training seeds.
pub fn fixture(seed: u64) -> TransferFixture {
    transfer_fixture(&FixtureConfig {
        seed: 100 + seed,
        embedding_dim: DIM,
        ..FixtureConfig::default()
    })
    .unwrap()
}

pub fn config(fx: &TransferFixture, seed: u64) -> ExperimentConfig {
    let mut model = ModelConfig::new(DIM, 3);
    model.encoder.sentence_hidden = DIM;
    model.encoder.attention_dim = DIM;
    model.encoder.abstract_hidden = DIM;
    let schedule = |epochs| TrainConfig {
        epochs,
        seed,
        ..TrainConfig::default()
    };
    ExperimentConfig {
        spec: ModelSpec {
            config: model,
            min_count: 1,
            vectors: Some(Arc::from(fx.vectors.as_str())),
        },
        pretrain: schedule(PRETRAIN_EPOCHS),
        finetune: schedule(FINETUNE_EPOCHS),
        dataset: format!("synthetic{seed}"),
    }
}

pub fn data(fx: &TransferFixture) -> TransferData<'_> {
    TransferData {
        source: &fx.source,
        target_train: &fx.target_train,
        target_validation: Some(&fx.target_validation),
        target_test: &fx.target_test,
    }
}
