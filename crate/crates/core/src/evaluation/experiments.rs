use std::fmt::{self, Write as _};

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{evaluate, EvalReport, RunInfo};
use crate::corpus::{Corpus, SplitTag};
use crate::encoder::SentenceEncoderKind;
use crate::error::{Error, Result};
use crate::model::{ModelParams, OutputLayer};
use crate::training::{finetune, pretrain, train, ModelSpec, TrainConfig};

/// Settings shared by the transfer experiments. Locally trained models use
/// the fine-tuning schedule so both target-side runs get the same budget.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub spec: ModelSpec,
    pub pretrain: TrainConfig,
    pub finetune: TrainConfig,
    /// Name used in reports and run directories.
    pub dataset: String,
}

/// The corpora of one transfer experiment, all in the same schema.
#[derive(Debug, Clone, Copy)]
pub struct TransferData<'a> {
    pub source: &'a Corpus,
    pub target_train: &'a Corpus,
    /// Used for early stopping on the target side when present.
    pub target_validation: Option<&'a Corpus>,
    pub target_test: &'a Corpus,
}

/// `<dataset>-<regime>-seed<seed>` with path-hostile characters replaced.
pub fn run_dir_name(dataset: &str, regime: &str, seed: u64) -> String {
    let clean = |s: &str| -> String {
        s.chars()
            .map(|c| {
                if c.is_ascii_alphanumeric() || c == '.' || c == '_' {
                    c
                } else {
                    '-'
                }
            })
            .collect()
    };
    format!("{}-{}-seed{seed}", clean(dataset), clean(regime))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    LocallyTrained,
    PreTrained,
    FineTuned,
}

impl Regime {
    pub const ALL: [Regime; 3] = [
        Regime::LocallyTrained,
        Regime::PreTrained,
        Regime::FineTuned,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Regime::LocallyTrained => "locally-trained",
            Regime::PreTrained => "pre-trained",
            Regime::FineTuned => "fine-tuned",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone)]
pub struct RegimeRow {
    pub regime: Regime,
    pub report: EvalReport,
}

#[derive(Debug, Clone)]
pub struct RegimeComparison {
    pub rows: Vec<RegimeRow>,
    pub pretrained: ModelParams,
    pub finetuned: ModelParams,
}

impl RegimeComparison {
    pub fn accuracy(&self, regime: Regime) -> f64 {
        self.rows
            .iter()
            .find(|r| r.regime == regime)
            .map_or(f64::NAN, |r| r.report.accuracy)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("regime\taccuracy\n");
        for row in &self.rows {
            let _ = writeln!(out, "{}\t{:.2}", row.regime, row.report.accuracy);
        }
        out
    }
}

fn info(cfg: &ExperimentConfig, regime: &str) -> RunInfo {
    RunInfo {
        regime: regime.to_string(),
        dataset: cfg.dataset.clone(),
        seed: cfg.finetune.seed,
    }
}

/// Evaluates on one test set a model trained on the target only, one trained
/// on the source only, and one pretrained on the source then fine-tuned.
pub fn three_regime_comparison(
    data: TransferData<'_>,
    cfg: &ExperimentConfig,
) -> Result<RegimeComparison> {
    let (local, pretrained) = rayon::join(
        || -> Result<ModelParams> {
            let init = cfg
                .spec
                .build(std::slice::from_ref(data.target_train), cfg.finetune.seed)?;
            Ok(train(
                data.target_train,
                data.target_validation,
                &cfg.finetune,
                Some(init),
            )?
            .0)
        },
        || pretrain(data.source, data.target_train, &cfg.spec, &cfg.pretrain).map(|(m, _)| m),
    );
    let (local, pretrained) = (local?, pretrained?);
    let (finetuned, _) = finetune(
        &pretrained,
        data.target_train,
        data.target_validation,
        &cfg.finetune,
    )?;

    let rows = [
        (Regime::LocallyTrained, &local),
        (Regime::PreTrained, &pretrained),
        (Regime::FineTuned, &finetuned),
    ]
    .into_par_iter()
    .map(|(regime, model)| {
        Ok(RegimeRow {
            regime,
            report: evaluate(model, data.target_test)?.with_info(info(cfg, regime.name())),
        })
    })
    .collect::<Result<Vec<_>>>()?;
    Ok(RegimeComparison {
        rows,
        pretrained,
        finetuned,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub fraction: f64,
    pub train_size: usize,
    pub accuracy: f64,
}

impl CurvePoint {
    pub fn to_tsv(points: &[CurvePoint]) -> String {
        let mut out = String::from("fraction\ttrain_size\taccuracy\n");
        for p in points {
            let _ = writeln!(out, "{}\t{}\t{:.2}", p.fraction, p.train_size, p.accuracy);
        }
        out
    }
}

/// Pretrains once, then fine-tunes on growing subsets of the target data.
pub fn learning_curve(
    data: TransferData<'_>,
    fractions: &[f64],
    cfg: &ExperimentConfig,
) -> Result<Vec<CurvePoint>> {
    if fractions.is_empty() {
        return Ok(Vec::new());
    }
    check_fractions(fractions)?;
    let (pretrained, _) = pretrain(data.source, data.target_train, &cfg.spec, &cfg.pretrain)?;
    learning_curve_from(&pretrained, data, fractions, &cfg.finetune)
}

fn check_fractions(fractions: &[f64]) -> Result<()> {
    let in_range = fractions.iter().all(|&f| f > 0.0 && f <= 1.0);
    let increasing = fractions.windows(2).all(|w| w[0] < w[1]);
    if !(in_range && increasing) {
        return Err(Error::Config(
            "fractions must be strictly increasing and lie in (0, 1]".into(),
        ));
    }
    Ok(())
}

/// Learning curve from an already pretrained model. Subsets are nested: a
/// seeded permutation of the target abstracts is cut at each size and the
/// chosen abstracts keep their corpus order, so fraction 1 reproduces the
/// full fine-tuning run.
pub fn learning_curve_from(
    pretrained: &ModelParams,
    data: TransferData<'_>,
    fractions: &[f64],
    config_ft: &TrainConfig,
) -> Result<Vec<CurvePoint>> {
    if fractions.is_empty() {
        return Ok(Vec::new());
    }
    check_fractions(fractions)?;
    let n = data.target_train.len();
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(config_ft.seed));

    let mut jobs = Vec::new();
    for &fraction in fractions {
        let size = (fraction * n as f64).round() as usize;
        if size == 0 {
            warn!("fraction {fraction} selects no abstracts; skipped");
            continue;
        }
        let mut chosen = perm[..size].to_vec();
        chosen.sort_unstable();
        jobs.push((fraction, chosen));
    }
    jobs.into_par_iter()
        .map(|(fraction, chosen)| {
            let abstracts = chosen
                .iter()
                .map(|&i| data.target_train.abstracts()[i].clone())
                .collect();
            let subset = Corpus::new(
                data.target_train.schema().clone(),
                abstracts,
                SplitTag::Train,
            )?;
            let (model, _) = finetune(pretrained, &subset, data.target_validation, config_ft)?;
            Ok(CurvePoint {
                fraction,
                train_size: subset.len(),
                accuracy: evaluate(&model, data.target_test)?.accuracy,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AblationVariant {
    Full,
    /// Seeded random embedding initialization instead of pretrained vectors.
    NoToken,
    /// Mean of token embeddings instead of BiLSTM + attention.
    NoSentence,
    /// Sentence encodings scored directly, without the abstract BiLSTM.
    NoAbstract,
    /// Per-sentence softmax and argmax instead of the CRF.
    NoCrf,
}

impl AblationVariant {
    pub const ALL: [AblationVariant; 5] = [
        AblationVariant::Full,
        AblationVariant::NoToken,
        AblationVariant::NoSentence,
        AblationVariant::NoAbstract,
        AblationVariant::NoCrf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AblationVariant::Full => "Full model",
            AblationVariant::NoToken => "- Token processing",
            AblationVariant::NoSentence => "- Sentence processing",
            AblationVariant::NoAbstract => "- Abstract processing",
            AblationVariant::NoCrf => "- CRF in output layer",
        }
    }

    pub fn definition(self) -> &'static str {
        match self {
            AblationVariant::Full => "all components",
            AblationVariant::NoToken => {
                "random embedding initialization instead of pretrained vectors"
            }
            AblationVariant::NoSentence => {
                "mean of token embeddings instead of BiLSTM with attention"
            }
            AblationVariant::NoAbstract => {
                "no abstract-level BiLSTM; sentences scored independently"
            }
            AblationVariant::NoCrf => "per-sentence softmax and argmax instead of the CRF",
        }
    }

    fn slug(self) -> &'static str {
        match self {
            AblationVariant::Full => "full",
            AblationVariant::NoToken => "no-token",
            AblationVariant::NoSentence => "no-sentence",
            AblationVariant::NoAbstract => "no-abstract",
            AblationVariant::NoCrf => "no-crf",
        }
    }

    pub fn apply(self, spec: &ModelSpec) -> ModelSpec {
        let mut spec = spec.clone();
        match self {
            AblationVariant::Full => {}
            AblationVariant::NoToken => spec.vectors = None,
            AblationVariant::NoSentence => {
                spec.config.encoder.sentence_encoder = SentenceEncoderKind::MeanPool
            }
            AblationVariant::NoAbstract => spec.config.encoder.abstract_lstm = false,
            AblationVariant::NoCrf => spec.config.output = OutputLayer::Softmax,
        }
        spec
    }
}

#[derive(Debug, Clone)]
pub struct AblationRow {
    pub variant: AblationVariant,
    pub report: EvalReport,
}

#[derive(Debug, Clone)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn accuracy(&self, variant: AblationVariant) -> f64 {
        self.rows
            .iter()
            .find(|r| r.variant == variant)
            .map_or(f64::NAN, |r| r.report.accuracy)
    }

    /// One row per variant; the definitions follow as comment lines.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("variant\taccuracy\n");
        for row in &self.rows {
            let _ = writeln!(out, "{}\t{:.2}", row.variant.name(), row.report.accuracy);
        }
        for row in &self.rows {
            let _ = writeln!(
                out,
                "# {}: {}",
                row.variant.name(),
                row.variant.definition()
            );
        }
        out
    }
}

/// Pretrains, fine-tunes and evaluates the full model and four ablations.
pub fn ablation_study(data: TransferData<'_>, cfg: &ExperimentConfig) -> Result<AblationTable> {
    let rows = AblationVariant::ALL
        .into_par_iter()
        .map(|variant| {
            let spec = variant.apply(&cfg.spec);
            let (pretrained, _) = pretrain(data.source, data.target_train, &spec, &cfg.pretrain)?;
            let (model, _) = finetune(
                &pretrained,
                data.target_train,
                data.target_validation,
                &cfg.finetune,
            )?;
            Ok(AblationRow {
                variant,
                report: evaluate(&model, data.target_test)?.with_info(info(cfg, variant.slug())),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AblationTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn run_dir_names() {
        assert_eq!(
            run_dir_name("cs.NI", "fine-tuned", 3),
            "cs.NI-fine-tuned-seed3"
        );
        assert_eq!(run_dir_name("a/b c", "x", 0), "a-b-c-x-seed0");
    }

    #[test]
    fn fraction_validation() {
        assert!(check_fractions(&[0.25, 0.5, 1.0]).is_ok());
        assert!(check_fractions(&[0.5, 0.25]).is_err());
        assert!(check_fractions(&[0.0, 1.0]).is_err());
        assert!(check_fractions(&[0.5, 1.5]).is_err());
    }

    #[test]
    fn variants_change_one_component_each() {
        let mut spec = ModelSpec::default();
        spec.vectors = Some("x 1".into());
        assert_eq!(AblationVariant::Full.apply(&spec), spec);
        assert!(AblationVariant::NoToken.apply(&spec).vectors.is_none());
        assert_eq!(
            AblationVariant::NoSentence
                .apply(&spec)
                .config
                .encoder
                .sentence_encoder,
            SentenceEncoderKind::MeanPool
        );
        assert!(
            !AblationVariant::NoAbstract
                .apply(&spec)
                .config
                .encoder
                .abstract_lstm
        );
        assert_eq!(
            AblationVariant::NoCrf.apply(&spec).config.output,
            OutputLayer::Softmax
        );
    }
}
