use std::collections::BTreeMap;
use std::fmt::Write as _;

use ndarray::Array2;

use super::{Corpus, LabelSchema};
use crate::error::{contract, Result};

/// Number of positional bins used when summarizing label order.
pub const DEFAULT_NORMALIZED_LENGTH: usize = 9;

/// Cohen's kappa between two annotators' labels for the same items.
///
/// When chance agreement is 1 the statistic is undefined; this returns 1 if
/// the annotators also agree perfectly and 0 otherwise.
pub fn cohens_kappa<S: AsRef<str>>(labels_a: &[S], labels_b: &[S]) -> Result<f64> {
    if labels_a.len() != labels_b.len() {
        return contract(format!(
            "annotation lengths differ: {} vs {}",
            labels_a.len(),
            labels_b.len()
        ));
    }
    if labels_a.is_empty() {
        return contract("kappa needs at least one item");
    }
    let n = labels_a.len() as f64;
    let mut agree = 0usize;
    let mut marginals: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for (a, b) in labels_a.iter().zip(labels_b) {
        let (a, b) = (a.as_ref(), b.as_ref());
        agree += usize::from(a == b);
        marginals.entry(a).or_default().0 += 1;
        marginals.entry(b).or_default().1 += 1;
    }
    let p_o = agree as f64 / n;
    let p_e: f64 = marginals
        .values()
        .map(|&(ca, cb)| (ca as f64 / n) * (cb as f64 / n))
        .sum();
    if agree == labels_a.len() {
        return Ok(1.0);
    }
    if (1.0 - p_e).abs() < f64::EPSILON {
        return Ok(0.0);
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}

/// Fraction of each label at each normalized position.
///
/// Sentence `i` of an abstract with `L` sentences lands in bin
/// `floor(i * bins / L)`; when `L < bins` it also fills the bins up to the
/// next sentence's start, so every bin receives mass. Rows sum to 1.
pub fn label_position_distribution(corpus: &Corpus, bins: usize) -> Result<Array2<f64>> {
    if bins == 0 {
        return contract("normalized length must be at least 1");
    }
    let schema = corpus.schema();
    let mut counts = Array2::<f64>::zeros((bins, schema.len()));
    for abs in corpus.abstracts() {
        let len = abs.len();
        for (i, sentence) in abs.sentences().iter().enumerate() {
            let Some(label) = sentence.label() else {
                return contract(format!("abstract `{}` has an unlabeled sentence", abs.id()));
            };
            let class = schema.index_of(label).expect("corpus labels are in schema");
            let first = i * bins / len;
            let next = (i + 1) * bins / len;
            for bin in first..next.max(first + 1) {
                counts[[bin, class]] += 1.0;
            }
        }
    }
    for mut row in counts.rows_mut() {
        let total: f64 = row.sum();
        if total > 0.0 {
            row /= total;
        }
    }
    Ok(counts)
}

/// Renders a distribution matrix as a tab-separated table with a header row.
pub fn distribution_tsv(schema: &LabelSchema, matrix: &Array2<f64>) -> String {
    let mut out = String::from("position");
    for label in schema.labels() {
        out.push('\t');
        out.push_str(label);
    }
    out.push('\n');
    for (bin, row) in matrix.rows().into_iter().enumerate() {
        write!(out, "{}", bin + 1).unwrap();
        for v in row {
            write!(out, "\t{v:.4}").unwrap();
        }
        out.push('\n');
    }
    out
}

/// Size and label statistics for a corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSummary {
    pub abstracts: usize,
    pub sentences: usize,
    pub mean_sentences: f64,
    pub label_counts: Vec<(String, usize)>,
}

impl CorpusSummary {
    pub fn of(corpus: &Corpus) -> Self {
        let sentences = corpus.sentence_count();
        Self {
            abstracts: corpus.len(),
            sentences,
            mean_sentences: if corpus.is_empty() {
                0.0
            } else {
                sentences as f64 / corpus.len() as f64
            },
            label_counts: corpus
                .schema()
                .labels()
                .iter()
                .cloned()
                .zip(corpus.label_counts())
                .collect(),
        }
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("statistic\tvalue\n");
        writeln!(out, "abstracts\t{}", self.abstracts).unwrap();
        writeln!(out, "sentences\t{}", self.sentences).unwrap();
        writeln!(
            out,
            "mean_sentences_per_abstract\t{:.2}",
            self.mean_sentences
        )
        .unwrap();
        for (label, count) in &self.label_counts {
            writeln!(out, "count_{label}\t{count}").unwrap();
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::super::parse_corpus_str;
    use super::*;

    #[test]
    fn kappa_perfect_agreement() {
        let a = ["B", "T", "O", "O"];
        assert_eq!(cohens_kappa(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn kappa_hand_example() {
        // p_o = 3/4, p_e = .5*.25 + .25*.5 + .25*.25 = .3125
        let a = ["B", "B", "T", "O"];
        let b = ["B", "T", "T", "O"];
        let k = cohens_kappa(&a, &b).unwrap();
        assert!((k - (0.75 - 0.3125) / (1.0 - 0.3125)).abs() < 1e-12);
        assert!((k - 0.6364).abs() < 1e-4);
    }

    #[test]
    fn kappa_total_disagreement_is_negative() {
        assert!(cohens_kappa(&["B", "T"], &["T", "B"]).unwrap() < 0.0);
    }

    #[test]
    fn kappa_degenerate_chance() {
        assert_eq!(cohens_kappa(&["B", "B"], &["B", "B"]).unwrap(), 1.0);
        assert!(cohens_kappa(&["B"], &["B", "T"]).is_err());
        assert!(cohens_kappa::<&str>(&[], &[]).is_err());
    }

    fn one_abstract(labels: &[&str]) -> Corpus {
        let mut text = String::from("###1\n");
        for l in labels {
            text.push_str(&format!("{l}\tSentence.\n"));
        }
        parse_corpus_str(&text, &LabelSchema::three()).unwrap()
    }

    #[test]
    fn distribution_identity() {
        let m = label_position_distribution(
            &one_abstract(&["BACKGROUND", "TECHNIQUE", "OBSERVATION"]),
            3,
        )
        .unwrap();
        assert_eq!(m, Array2::<f64>::eye(3));
    }

    #[test]
    fn distribution_nine_sentence_blocks() {
        let mut labels = vec!["BACKGROUND"; 3];
        labels.extend(["TECHNIQUE"; 3]);
        labels.extend(["OBSERVATION"; 3]);
        let m = label_position_distribution(&one_abstract(&labels), 9).unwrap();
        for bin in 0..9 {
            let mut want = [0.0; 3];
            want[bin / 3] = 1.0;
            assert_eq!(m.row(bin).to_vec(), want);
        }
    }

    #[test]
    fn distribution_four_into_nine() {
        // sentence starts: 0, 2, 4, 6 → bins 0-1 B, 2-3 B, 4-5 T, 6-8 O
        let m = label_position_distribution(
            &one_abstract(&["BACKGROUND", "BACKGROUND", "TECHNIQUE", "OBSERVATION"]),
            9,
        )
        .unwrap();
        let expected = [0, 0, 0, 0, 1, 1, 2, 2, 2];
        for (bin, &class) in expected.iter().enumerate() {
            let mut want = [0.0; 3];
            want[class] = 1.0;
            assert_eq!(m.row(bin).to_vec(), want, "bin {bin}");
        }
    }

    #[test]
    fn distribution_long_abstract_rows_sum_to_one() {
        let labels: Vec<_> = (0..20)
            .map(|i| ["BACKGROUND", "TECHNIQUE", "OBSERVATION"][i * 3 / 20])
            .collect();
        let m = label_position_distribution(&one_abstract(&labels), 9).unwrap();
        for row in m.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn distribution_requires_labels() {
        let corpus = parse_corpus_str("###1\nNo label.\n", &LabelSchema::three()).unwrap();
        assert!(label_position_distribution(&corpus, 9).is_err());
        assert!(label_position_distribution(&one_abstract(&["BACKGROUND"]), 0).is_err());
    }
}
