//! Seeded synthetic corpora for smoke tests and transfer experiments.
//!
//! Abstracts follow a positional BACKGROUND → TECHNIQUE → OBSERVATION layout.
//! Each class owns a lexicon shared by both domains plus one lexicon per
//! domain; sentences mix class words with uninformative fillers.

use std::fmt::Write as _;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{
    remap_labels, Abstract, Corpus, LabelMapping, LabelSchema, LabeledSentence, SplitTag,
};
use crate::error::Result;

/// `n` abstracts with one to three sentences per class in B → T → O order.
pub fn overfit_corpus(n: usize, seed: u64) -> Result<Corpus> {
    let schema = LabelSchema::three();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let abstracts = (0..n)
        .map(|i| {
            let mut sentences = Vec::new();
            for label in schema.labels() {
                for _ in 0..rng.gen_range(1..=3) {
                    let len = rng.gen_range(3..=7);
                    let words: Vec<String> = (0..len)
                        .map(|_| format!("w{}", rng.gen_range(0..40)))
                        .collect();
                    sentences.push(LabeledSentence::labeled(words.join(" "), label.clone())?);
                }
            }
            Abstract::new(format!("overfit-{i}"), sentences)
        })
        .collect::<Result<Vec<_>>>()?;
    Corpus::new(schema, abstracts, SplitTag::Train)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixtureConfig {
    pub source_abstracts: usize,
    pub target_train: usize,
    pub target_validation: usize,
    pub target_test: usize,
    pub target_unlabeled: usize,
    /// Words per class in the shared and in each domain-specific lexicon.
    pub lexicon_size: usize,
    pub fillers: usize,
    /// Probability that a token is a class word rather than a filler.
    pub class_token_rate: f64,
    /// Probability that a class word comes from the shared lexicon.
    pub shared_rate: f64,
    /// Probability that a class word is drawn for a random class.
    pub noise: f64,
    /// Magnitude of the class direction in shared-word vectors.
    pub vector_signal: f64,
    /// Longest run of sentences per class in an abstract.
    pub max_run: usize,
    pub embedding_dim: usize,
    pub seed: u64,
}

impl Default for FixtureConfig {
    fn default() -> Self {
        Self {
            source_abstracts: 500,
            target_train: 30,
            target_validation: 10,
            target_test: 100,
            target_unlabeled: 0,
            lexicon_size: 100,
            fillers: 150,
            class_token_rate: 0.2,
            shared_rate: 0.5,
            noise: 0.2,
            vector_signal: 0.5,
            max_run: 4,
            embedding_dim: 16,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TransferFixture {
    /// Source corpus in the five-class schema, as generated.
    pub source_five: Corpus,
    /// Source remapped to the three-class schema.
    pub source: Corpus,
    pub target_train: Corpus,
    pub target_validation: Corpus,
    pub target_test: Corpus,
    /// Target-domain abstracts without labels.
    pub target_unlabeled: Corpus,
    /// Word vectors in `token v1 … vD` text form for the shared lexicon and
    /// the fillers; domain-specific words have none.
    pub vectors: String,
}

#[derive(Clone, Copy)]
enum Domain {
    Source,
    Target,
}

struct Generator<'a> {
    cfg: &'a FixtureConfig,
    rng: ChaCha8Rng,
}

impl Generator<'_> {
    fn class_word(&mut self, class: usize, domain: Domain) -> String {
        let class = if self.rng.gen_bool(self.cfg.noise) {
            self.rng.gen_range(0..3)
        } else {
            class
        };
        let k = self.rng.gen_range(0..self.cfg.lexicon_size);
        if self.rng.gen_bool(self.cfg.shared_rate) {
            format!("s{class}w{k}")
        } else {
            match domain {
                Domain::Source => format!("p{class}w{k}"),
                Domain::Target => format!("q{class}w{k}"),
            }
        }
    }

    fn sentence(&mut self, class: usize, domain: Domain) -> String {
        let len = self.rng.gen_range(6..=10);
        let words: Vec<String> = (0..len)
            .map(|_| {
                if self.rng.gen_bool(self.cfg.class_token_rate) {
                    self.class_word(class, domain)
                } else {
                    format!("f{}", self.rng.gen_range(0..self.cfg.fillers))
                }
            })
            .collect();
        words.join(" ")
    }

    /// Five-class label sequence whose three-class image is B+ T+ O+.
    fn five_class_layout(&mut self) -> Vec<(&'static str, usize)> {
        let mut out = Vec::new();
        let max = self.cfg.max_run;
        let counts = [
            ("BACKGROUND", 0, self.rng.gen_range(0..max)),
            ("OBJECTIVE", 0, 1),
            ("METHOD", 1, self.rng.gen_range(1..=max)),
            ("RESULT", 2, 1),
            ("CONCLUSION", 2, self.rng.gen_range(0..max)),
        ];
        for (label, class, n) in counts {
            out.extend(std::iter::repeat((label, class)).take(n));
        }
        out
    }

    fn three_class_layout(&mut self) -> Vec<usize> {
        let mut out = Vec::new();
        for class in 0..3 {
            let run = self.rng.gen_range(1..=self.cfg.max_run);
            out.extend(std::iter::repeat(class).take(run));
        }
        out
    }

    fn target_corpus(
        &mut self,
        prefix: &str,
        n: usize,
        labeled: bool,
        split: SplitTag,
    ) -> Result<Corpus> {
        let schema = LabelSchema::three();
        let abstracts = (0..n)
            .map(|i| {
                let sentences = self
                    .three_class_layout()
                    .into_iter()
                    .map(|class| {
                        let text = self.sentence(class, Domain::Target);
                        if labeled {
                            LabeledSentence::labeled(text, schema.labels()[class].clone())
                        } else {
                            LabeledSentence::unlabeled(text)
                        }
                    })
                    .collect::<Result<Vec<_>>>()?;
                Abstract::new(format!("{prefix}-{i}"), sentences)
            })
            .collect::<Result<Vec<_>>>()?;
        Corpus::new(schema, abstracts, split)
    }

    fn vectors(&mut self) -> String {
        let dim = self.cfg.embedding_dim;
        let signal_size = self.cfg.vector_signal;
        let mut out = String::new();
        let row = |out: &mut String, word: String, class: Option<usize>, rng: &mut ChaCha8Rng| {
            out.push_str(&word);
            for d in 0..dim {
                let signal = match class {
                    Some(c) if d % 3 == c => signal_size,
                    _ => 0.0,
                };
                let _ = write!(out, " {:.6}", signal + rng.gen_range(-0.3..0.3));
            }
            out.push('\n');
        };
        for class in 0..3 {
            for k in 0..self.cfg.lexicon_size {
                row(
                    &mut out,
                    format!("s{class}w{k}"),
                    Some(class),
                    &mut self.rng,
                );
            }
        }
        for k in 0..self.cfg.fillers {
            row(&mut out, format!("f{k}"), None, &mut self.rng);
        }
        out
    }
}

/// Source and target corpora sharing positional structure and half of each
/// class lexicon, plus informative word vectors.
pub fn transfer_fixture(cfg: &FixtureConfig) -> Result<TransferFixture> {
    let mut g = Generator {
        cfg,
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
    };
    let five = LabelSchema::five();
    let source_abstracts = (0..cfg.source_abstracts)
        .map(|i| {
            let sentences = g
                .five_class_layout()
                .into_iter()
                .map(|(label, class)| {
                    LabeledSentence::labeled(g.sentence(class, Domain::Source), label)
                })
                .collect::<Result<Vec<_>>>()?;
            Abstract::new(format!("src-{i}"), sentences)
        })
        .collect::<Result<Vec<_>>>()?;
    let source_five = Corpus::new(five, source_abstracts, SplitTag::Train)?;
    let source = remap_labels(&source_five, &LabelMapping::five_to_three())?;
    let target_train = g.target_corpus("tgt-train", cfg.target_train, true, SplitTag::Train)?;
    let target_validation =
        g.target_corpus("tgt-val", cfg.target_validation, true, SplitTag::Validation)?;
    let target_test = g.target_corpus("tgt-test", cfg.target_test, true, SplitTag::Test)?;
    let target_unlabeled = g.target_corpus(
        "tgt-unlabeled",
        cfg.target_unlabeled,
        false,
        SplitTag::Unlabeled,
    )?;
    let vectors = g.vectors();
    Ok(TransferFixture {
        source_five,
        source,
        target_train,
        target_validation,
        target_test,
        target_unlabeled,
        vectors,
    })
}
