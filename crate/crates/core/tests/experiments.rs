mod common;

use abseg::evaluation::{
    ablation_study, learning_curve, learning_curve_from, three_regime_comparison, AblationVariant,
    Regime, TransferData,
};
use abseg::synthetic::{transfer_fixture, FixtureConfig};
use abseg::training::TrainConfig;
use abseg::Error;

fn tiny() -> (
    abseg::synthetic::TransferFixture,
    abseg::evaluation::ExperimentConfig,
) {
    let fx = transfer_fixture(&FixtureConfig {
        source_abstracts: 30,
        target_train: 6,
        target_validation: 3,
        target_test: 8,
        embedding_dim: 8,
        ..FixtureConfig::default()
    })
    .unwrap();
    let mut cfg = common::config(&fx, 1);
    cfg.spec.config = abseg::model::ModelConfig::new(8, 3);
    cfg.spec.config.encoder.sentence_hidden = 5;
    cfg.spec.config.encoder.attention_dim = 5;
    cfg.spec.config.encoder.abstract_hidden = 5;
    cfg.pretrain.epochs = 2;
    cfg.finetune.epochs = 3;
    (fx, cfg)
}

#[test]
fn full_fraction_reproduces_fine_tuned_regime() {
    let (fx, cfg) = tiny();
    let cmp = three_regime_comparison(common::data(&fx), &cfg).unwrap();
    let curve = learning_curve(common::data(&fx), &[0.5, 1.0], &cfg).unwrap();
    assert_eq!(curve.len(), 2);
    assert_eq!(curve[1].train_size, fx.target_train.len());
    assert_eq!(curve[1].accuracy, cmp.accuracy(Regime::FineTuned));
    assert_eq!(curve[0].train_size, 3);
}

#[test]
fn regime_table_has_three_rows_in_order() {
    let (fx, cfg) = tiny();
    let cmp = three_regime_comparison(common::data(&fx), &cfg).unwrap();
    let names: Vec<_> = cmp.rows.iter().map(|r| r.regime.name()).collect();
    assert_eq!(names, ["locally-trained", "pre-trained", "fine-tuned"]);
    assert_eq!(cmp.to_tsv().lines().count(), 4);
    // the pre-trained regime is the pretrained model evaluated as is
    let direct = abseg::evaluation::evaluate(&cmp.pretrained, &fx.target_test).unwrap();
    assert_eq!(direct.accuracy, cmp.accuracy(Regime::PreTrained));
}

#[test]
fn fraction_edge_cases() {
    let (fx, cfg) = tiny();
    assert!(learning_curve(common::data(&fx), &[], &cfg)
        .unwrap()
        .is_empty());
    assert!(matches!(
        learning_curve(common::data(&fx), &[0.5, 0.25], &cfg),
        Err(Error::Config(_))
    ));
    let (pretrained, _) =
        abseg::training::pretrain(&fx.source, &fx.target_train, &cfg.spec, &cfg.pretrain).unwrap();
    // 0.05 of six abstracts rounds to zero and is skipped
    let curve =
        learning_curve_from(&pretrained, common::data(&fx), &[0.05, 1.0], &cfg.finetune).unwrap();
    assert_eq!(curve.len(), 1);
    assert_eq!(curve[0].fraction, 1.0);
}

#[test]
fn ablation_table_lists_five_variants() {
    let (fx, cfg) = tiny();
    let table = ablation_study(common::data(&fx), &cfg).unwrap();
    let names: Vec<_> = table.rows.iter().map(|r| r.variant.name()).collect();
    assert_eq!(
        names,
        [
            "Full model",
            "- Token processing",
            "- Sentence processing",
            "- Abstract processing",
            "- CRF in output layer"
        ]
    );
    assert_eq!(
        table.accuracy(AblationVariant::Full),
        table.rows[0].report.accuracy
    );
}

#[test]
fn mixed_schemas_are_rejected() {
    let (fx, cfg) = tiny();
    let data = TransferData {
        source: &fx.source_five,
        ..common::data(&fx)
    };
    assert!(three_regime_comparison(data, &cfg).is_err());
}

#[test]
fn invalid_schedule_is_rejected() {
    let (fx, mut cfg) = tiny();
    cfg.finetune = TrainConfig {
        learning_rate: -1.0,
        ..cfg.finetune
    };
    assert!(three_regime_comparison(common::data(&fx), &cfg).is_err());
}

#[test]
fn learning_curve_grows_with_data() {
    let fx = common::fixture(0);
    let cfg = common::config(&fx, 0);
    let curve = learning_curve(common::data(&fx), &[0.25, 0.5, 1.0], &cfg).unwrap();
    for pair in curve.windows(2) {
        assert!(
            pair[1].accuracy >= pair[0].accuracy - 2.0,
            "{:.2} at {} then {:.2} at {}",
            pair[0].accuracy,
            pair[0].fraction,
            pair[1].accuracy,
            pair[1].fraction
        );
    }
}
