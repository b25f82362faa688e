//! Sentence-level metrics and the comparison experiments built on them.

mod experiments;

pub use experiments::{
    ablation_study, learning_curve, learning_curve_from, run_dir_name, three_regime_comparison,
    AblationRow, AblationTable, AblationVariant, CurvePoint, ExperimentConfig, Regime,
    RegimeComparison, RegimeRow, TransferData,
};

use std::fmt::Write as _;

use ndarray::Array2;
use rayon::prelude::*;

use crate::corpus::{Corpus, LabelSchema};
use crate::error::{contract, Result};
use crate::model::ModelParams;

/// Identifies the run a report belongs to.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunInfo {
    pub regime: String,
    pub dataset: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassMetrics {
    pub label: String,
    /// Percentages; 0 when undefined.
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub labels: Vec<String>,
    /// Percentage of sentences labeled correctly.
    pub accuracy: f64,
    pub per_class: Vec<ClassMetrics>,
    /// Rows are gold classes, columns predicted classes.
    pub confusion: Array2<usize>,
    pub n_sentences: usize,
    pub n_abstracts: usize,
    pub info: RunInfo,
}

fn percent(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        100.0 * num as f64 / den as f64
    }
}

impl EvalReport {
    /// Builds a report from per-abstract `(gold, predicted)` class indices.
    pub fn from_predictions(
        schema: &LabelSchema,
        pairs: &[(Vec<usize>, Vec<usize>)],
    ) -> Result<Self> {
        let c = schema.len();
        let mut confusion = Array2::zeros((c, c));
        for (gold, pred) in pairs {
            if gold.len() != pred.len() {
                return contract("gold and predicted sequences differ in length");
            }
            for (&g, &p) in gold.iter().zip(pred) {
                if g >= c || p >= c {
                    return contract("class index out of range");
                }
                confusion[[g, p]] += 1;
            }
        }
        let n_sentences = confusion.sum();
        let correct: usize = (0..c).map(|i| confusion[[i, i]]).sum();
        let per_class = (0..c)
            .map(|i| {
                let support = confusion.row(i).sum();
                let predicted = confusion.column(i).sum();
                let precision = percent(confusion[[i, i]], predicted);
                let recall = percent(confusion[[i, i]], support);
                let f1 = if precision + recall == 0.0 {
                    0.0
                } else {
                    2.0 * precision * recall / (precision + recall)
                };
                ClassMetrics {
                    label: schema.labels()[i].clone(),
                    precision,
                    recall,
                    f1,
                    support,
                }
            })
            .collect();
        Ok(Self {
            labels: schema.labels().to_vec(),
            accuracy: percent(correct, n_sentences),
            per_class,
            confusion,
            n_sentences,
            n_abstracts: pairs.len(),
            info: RunInfo::default(),
        })
    }

    pub fn with_info(mut self, info: RunInfo) -> Self {
        self.info = info;
        self
    }

    /// Per-class precision, recall, F1 and support, then accuracy. Two decimals.
    pub fn metrics_tsv(&self) -> String {
        let mut out = format!(
            "# regime={} dataset={} seed={} abstracts={} sentences={}\n",
            self.info.regime, self.info.dataset, self.info.seed, self.n_abstracts, self.n_sentences
        );
        out.push_str("label\tprecision\trecall\tf1\tsupport\n");
        for m in &self.per_class {
            let _ = writeln!(
                out,
                "{}\t{:.2}\t{:.2}\t{:.2}\t{}",
                m.label, m.precision, m.recall, m.f1, m.support
            );
        }
        let _ = writeln!(out, "accuracy\t{:.2}", self.accuracy);
        out
    }

    /// Confusion counts with gold labels down the rows.
    pub fn confusion_tsv(&self) -> String {
        let mut out = String::from("gold\\predicted");
        for l in &self.labels {
            let _ = write!(out, "\t{l}");
        }
        out.push('\n');
        for (label, row) in self.labels.iter().zip(self.confusion.rows()) {
            out.push_str(label);
            for v in row {
                let _ = write!(out, "\t{v}");
            }
            out.push('\n');
        }
        out
    }
}

/// Decodes every abstract of `corpus_test` and scores the predictions.
pub fn evaluate(model: &ModelParams, corpus_test: &Corpus) -> Result<EvalReport> {
    if corpus_test.schema() != &model.schema {
        return contract(format!(
            "test corpus schema `{}` does not match model schema `{}`",
            corpus_test.schema().name(),
            model.schema.name()
        ));
    }
    if !corpus_test.is_fully_labeled() {
        return contract("evaluation needs a fully labeled corpus");
    }
    let pairs = corpus_test
        .abstracts()
        .par_iter()
        .map(|abs| {
            let indexed = model.index_abstract(abs)?;
            let pred = model.predict_indices(&indexed)?;
            Ok((indexed.labels.unwrap_or_default(), pred))
        })
        .collect::<Result<Vec<_>>>()?;
    EvalReport::from_predictions(&model.schema, &pairs)
}
