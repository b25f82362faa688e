use std::collections::BTreeMap;
use std::sync::Arc;

use abseg::checkpoint;
use abseg::corpus::{
    cohens_kappa, filter_code_sentences, label_position_distribution, parse_corpus_str,
    serialize_corpus, split_corpus, Abstract, CodeFilter, Corpus, LabelSchema, LabeledSentence,
    SplitFractions, SplitTag,
};
use abseg::crf::{
    brute_force_decode, brute_force_log_partition, log_partition, viterbi_decode, CrfParams,
};
use abseg::embeddings::Vocabulary;
use abseg::evaluation::EvalReport;
use abseg::model::{ModelConfig, ModelParams};
use ndarray::{Array1, Array2};
use proptest::prelude::*;

const LABELS: [&str; 3] = ["BACKGROUND", "TECHNIQUE", "OBSERVATION"];

fn sentence() -> impl Strategy<Value = (Option<usize>, Vec<String>)> {
    (
        proptest::option::weighted(0.9, 0..3usize),
        proptest::collection::vec("[a-z]{1,6}|github|https://x\\.io/[a-z]{1,3}", 1..6),
    )
}

fn corpus_strategy(labeled: bool) -> impl Strategy<Value = Corpus> {
    proptest::collection::vec(proptest::collection::vec(sentence(), 1..7), 1..6).prop_map(
        move |abstracts| {
            let abstracts = abstracts
                .into_iter()
                .enumerate()
                .map(|(i, sentences)| {
                    let sentences = sentences
                        .into_iter()
                        .map(|(label, words)| {
                            let label = if labeled {
                                Some(label.unwrap_or(0))
                            } else {
                                label
                            };
                            LabeledSentence::new(
                                words.join(" "),
                                label.map(|l| LABELS[l].to_string()),
                            )
                            .unwrap()
                        })
                        .collect();
                    Abstract::new(format!("a{i}"), sentences).unwrap()
                })
                .collect();
            Corpus::new(LabelSchema::three(), abstracts, SplitTag::Train).unwrap()
        },
    )
}

fn labels(n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<&'static str>> {
    proptest::collection::vec(0..3usize, n).prop_map(|v| v.into_iter().map(|i| LABELS[i]).collect())
}

fn params(c: usize, n: usize) -> impl Strategy<Value = (Array2<f64>, CrfParams)> {
    proptest::collection::vec(-3.0..3.0f64, n * c + c * c + 2 * c).prop_map(move |v| {
        let emissions = Array2::from_shape_vec((n, c), v[..n * c].to_vec()).unwrap();
        let mut rest = v[n * c..].iter().copied();
        let transitions = Array2::from_shape_fn((c, c), |_| rest.next().unwrap());
        let start = Array1::from_iter((0..c).map(|_| rest.next().unwrap()));
        let end = Array1::from_iter((0..c).map(|_| rest.next().unwrap()));
        (
            emissions,
            CrfParams {
                transitions,
                start,
                end,
            },
        )
    })
}

proptest! {
    #[test]
    fn kappa_is_symmetric(pair in (1..40usize).prop_flat_map(|n| (labels(n..n + 1), labels(n..n + 1)))) {
        let (a, b) = pair;
        let ab = cohens_kappa(&a, &b).unwrap();
        let ba = cohens_kappa(&b, &a).unwrap();
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert!(ab <= 1.0 + 1e-12);
        prop_assert_eq!(cohens_kappa(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn code_filter_is_idempotent(corpus in corpus_strategy(false)) {
        let filter = CodeFilter::default();
        let (once, _) = filter_code_sentences(&corpus, &filter);
        let (twice, removed) = filter_code_sentences(&once, &filter);
        prop_assert_eq!(removed, 0);
        prop_assert_eq!(&once, &twice);
        prop_assert!(once.sentences().all(|s| !filter.is_code(s.text())));
    }

    #[test]
    fn distribution_rows_sum_to_one(corpus in corpus_strategy(true), bins in 1..15usize) {
        let m = label_position_distribution(&corpus, bins).unwrap();
        prop_assert_eq!(m.dim(), (bins, 3));
        for row in m.rows() {
            prop_assert!((row.sum() - 1.0).abs() < 1e-12);
            prop_assert!(row.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn parse_serialize_round_trip(corpus in corpus_strategy(false)) {
        let text = serialize_corpus(&corpus);
        let parsed = parse_corpus_str(&text, &LabelSchema::three()).unwrap();
        prop_assert_eq!(serialize_corpus(&parsed), text);
        prop_assert_eq!(parsed.abstracts(), corpus.abstracts());
    }

    #[test]
    fn accuracy_is_trace_over_total(
        pairs in proptest::collection::vec(
            (1..8usize).prop_flat_map(|n| (
                proptest::collection::vec(0..3usize, n),
                proptest::collection::vec(0..3usize, n),
            )),
            1..10,
        )
    ) {
        let r = EvalReport::from_predictions(&LabelSchema::three(), &pairs).unwrap();
        let trace: usize = (0..3).map(|i| r.confusion[[i, i]]).sum();
        let total: usize = pairs.iter().map(|(g, _)| g.len()).sum();
        prop_assert_eq!(r.n_sentences, total);
        prop_assert_eq!(r.confusion.sum(), total);
        prop_assert_eq!(r.accuracy, 100.0 * trace as f64 / total as f64);
        prop_assert_eq!(r.per_class.iter().map(|m| m.support).sum::<usize>(), total);
        let micro_recall: f64 = r.per_class.iter().map(|m| m.recall * m.support as f64).sum::<f64>() / total as f64;
        prop_assert!((micro_recall - r.accuracy).abs() < 1e-9);
        for m in &r.per_class {
            prop_assert!((0.0..=100.0).contains(&m.precision) && (0.0..=100.0).contains(&m.recall));
        }
    }

    #[test]
    fn crf_matches_enumeration((emissions, crf) in (1..6usize).prop_flat_map(|n| params(3, n))) {
        let z = log_partition(emissions.view(), &crf).unwrap();
        prop_assert!((z - brute_force_log_partition(emissions.view(), &crf).unwrap()).abs() < 1e-9);
        let (path, score) = viterbi_decode(emissions.view(), &crf).unwrap();
        let (bf_path, bf_score) = brute_force_decode(emissions.view(), &crf).unwrap();
        prop_assert_eq!(path, bf_path);
        prop_assert!((score - bf_score).abs() < 1e-9);
    }

    #[test]
    fn split_partitions_the_corpus(corpus in corpus_strategy(true), seed in any::<u64>()) {
        let fractions = SplitFractions::new(0.6, 0.2, 0.2).unwrap();
        if corpus.len() < 3 {
            prop_assert!(split_corpus(&corpus, fractions, seed).is_err());
            return Ok(());
        }
        let (a, b, c) = split_corpus(&corpus, fractions, seed).unwrap();
        prop_assert!(!a.is_empty() && !b.is_empty() && !c.is_empty());
        prop_assert_eq!(a.len() + b.len() + c.len(), corpus.len());
        let mut ids: Vec<&str> = a.abstracts().iter().chain(b.abstracts()).chain(c.abstracts()).map(|x| x.id()).collect();
        ids.sort_unstable();
        ids.dedup();
        prop_assert_eq!(ids.len(), corpus.len());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn checkpoint_round_trip_is_bit_exact(seed in any::<u64>(), dim in 2..6usize) {
        let vocab = Vocabulary::from_tokens(["<pad>", "<unk>", "x", "y"].iter().map(|s| s.to_string()).collect()).unwrap();
        let mut config = ModelConfig::new(dim, 3);
        config.encoder.sentence_hidden = 3;
        config.encoder.attention_dim = 2;
        config.encoder.abstract_hidden = 3;
        let model = ModelParams::init(LabelSchema::three(), Arc::new(vocab), &config, None, seed).unwrap();
        let meta = BTreeMap::from([("seed".to_string(), seed.to_string())]);
        let loaded = checkpoint::from_bytes(&checkpoint::to_bytes(&model, &meta).unwrap()).unwrap();
        prop_assert_eq!(&loaded.metadata, &meta);
        for ((_, a), (_, b)) in model.named().into_iter().zip(loaded.model.named()) {
            prop_assert!(a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }
}
