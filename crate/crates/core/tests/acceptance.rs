//! Desk-scale acceptance run. Prints one `[PASS]` or `[FAIL]` line per
//! criterion and exits nonzero if any criterion fails.

mod common;

use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use abseg::corpus::{
    cohens_kappa, parse_corpus, remap_labels, serialize_corpus, LabelMapping, LabelSchema,
};
use abseg::crf::{
    brute_force_decode, brute_force_log_partition, log_partition, viterbi_decode, CrfParams,
};
use abseg::embeddings::{Vocabulary, PAD_INDEX};
use abseg::evaluation::{
    ablation_study, three_regime_comparison, AblationTable, AblationVariant, EvalReport, Regime,
};
use abseg::model::{GradientBuffer, IndexedAbstract, ModelConfig, ModelParams, OutputLayer};
use abseg::synthetic::{overfit_corpus, transfer_fixture, FixtureConfig};
use abseg::training::{train, ModelSpec, TrainConfig};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const CRF_INSTANCES: usize = 1000;
const CRF_MAX_LEN: usize = 6;
const CRF_TOL: f64 = 1e-9;
const CRF_BUDGET: Duration = Duration::from_secs(30);

const GRAD_REL_TOL: f64 = 1e-4;
/// Gradients below this are at the loss's rounding floor (eps * |L| / h), so
/// they are compared absolutely against `GRAD_ABS_TOL` instead.
const GRAD_REL_SCALE: f64 = 1e-6;
const GRAD_ABS_TOL: f64 = 1e-10;
/// Richardson-extrapolated central differences: error O(h^4).
const GRAD_STEP: f64 = 1e-3;
const GRAD_BUDGET: Duration = Duration::from_secs(60);

const OVERFIT_ABSTRACTS: usize = 10;
const OVERFIT_EPOCHS: usize = 200;
const OVERFIT_TARGET: f64 = 99.0;
const OVERFIT_BUDGET: Duration = Duration::from_secs(120);

const TRANSFER_SEEDS: [u64; 3] = [0, 1, 2];
const TRANSFER_MARGIN: f64 = 5.0;
const TRANSFER_BUDGET: Duration = Duration::from_secs(600);

const ABLATION_SLACK: f64 = 2.0;
const ABLATION_BUDGET: Duration = Duration::from_secs(900);

const METRIC_SETS: usize = 100;
const KAPPA_TOL: f64 = 1e-4;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn timed(budget: Duration, run: impl FnOnce() -> Outcome) -> Outcome {
    let start = Instant::now();
    let mut out = run();
    let took = start.elapsed();
    out.detail = format!(
        "{} ({:.1}s, budget {}s)",
        out.detail,
        took.as_secs_f64(),
        budget.as_secs()
    );
    out.passed &= took <= budget;
    out
}

fn random_crf(rng: &mut ChaCha8Rng, n: usize, c: usize) -> (Array2<f64>, CrfParams) {
    let mut draw =
        |shape: (usize, usize)| Array2::from_shape_fn(shape, |_| rng.gen_range(-3.0..3.0));
    let emissions = draw((n, c));
    let transitions = draw((c, c));
    let start = draw((1, c)).row(0).to_owned();
    let end = draw((1, c)).row(0).to_owned();
    (
        emissions,
        CrfParams {
            transitions,
            start,
            end,
        },
    )
}

/// Every label sequence of length `n` over `c` classes.
fn all_paths(n: usize, c: usize) -> Vec<Vec<usize>> {
    (0..c.pow(n as u32))
        .map(|mut code| {
            (0..n)
                .map(|_| {
                    let l = code % c;
                    code /= c;
                    l
                })
                .collect()
        })
        .collect()
}

fn crf_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let c = 3;
    let mut worst = 0.0f64;
    let mut mismatched = 0;
    for i in 0..CRF_INSTANCES {
        let n = 1 + i % CRF_MAX_LEN;
        let (e, crf) = random_crf(&mut rng, n, c);
        let z = log_partition(e.view(), &crf).unwrap();
        let z_bf = brute_force_log_partition(e.view(), &crf).unwrap();
        let (path, score) = viterbi_decode(e.view(), &crf).unwrap();
        let (bf_path, bf_score) = brute_force_decode(e.view(), &crf).unwrap();
        let total: f64 = all_paths(n, c)
            .iter()
            .map(|p| (crf.path_score(e.view(), p).unwrap() - z).exp())
            .sum();
        worst = worst
            .max((z - z_bf).abs())
            .max((score - bf_score).abs())
            .max((total - 1.0).abs());
        if path != bf_path {
            mismatched += 1;
        }
    }
    outcome(
        worst <= CRF_TOL && mismatched == 0,
        format!(
            "{CRF_INSTANCES} instances, max deviation {worst:.1e}, {mismatched} path mismatches"
        ),
    )
}

fn tiny_model(output: OutputLayer, seed: u64) -> ModelParams {
    let vocab =
        Vocabulary::from_tokens(["<pad>", "<unk>", "a", "b", "c"].map(String::from).to_vec())
            .unwrap();
    let mut config = ModelConfig::new(4, 3);
    config.encoder.sentence_hidden = 3;
    config.encoder.attention_dim = 3;
    config.encoder.abstract_hidden = 3;
    config.output = output;
    let mut model =
        ModelParams::init(LabelSchema::three(), Arc::new(vocab), &config, None, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (name, mut v) in model.named_mut() {
        if name.starts_with("crf.") {
            v.mapv_inplace(|_| rng.gen_range(-0.5..0.5));
        }
    }
    model
}

fn random_abstract(rng: &mut ChaCha8Rng) -> IndexedAbstract {
    let n = rng.gen_range(1..=3);
    IndexedAbstract {
        tokens: (0..n)
            .map(|_| {
                (0..rng.gen_range(1..=3))
                    .map(|_| rng.gen_range(1..5))
                    .collect()
            })
            .collect(),
        labels: Some((0..n).map(|_| rng.gen_range(0..3)).collect()),
    }
}

#[derive(Default)]
struct GradStats {
    worst_rel: f64,
    worst_abs: f64,
    checked: usize,
}

impl GradStats {
    fn passed(&self) -> bool {
        self.checked > 0 && self.worst_rel < GRAD_REL_TOL && self.worst_abs < GRAD_ABS_TOL
    }
}

fn gradient_error(
    model: &ModelParams,
    abs: &IndexedAbstract,
    groups: &mut Vec<String>,
    stats: &mut GradStats,
) {
    let (_, grads) = model.loss_and_gradients(abs).unwrap();
    let mut buf = GradientBuffer::zeros_like(model);
    buf.add(&grads);
    let analytic: Vec<(String, Vec<f64>)> = buf
        .named()
        .into_iter()
        .map(|(n, v)| (n, v.iter().copied().collect()))
        .collect();
    for (g, (name, values)) in analytic.iter().enumerate() {
        if !groups.contains(name) {
            groups.push(name.clone());
        }
        for (k, &a) in values.iter().enumerate() {
            if name == "embedding.weight" && k / model.embedding_dim() == PAD_INDEX {
                continue;
            }
            let loss_at = |delta: f64| {
                let mut m = model.clone();
                *m.named_mut()[g].1.iter_mut().nth(k).unwrap() += delta;
                m.loss(abs).unwrap()
            };
            let central = |h: f64| (loss_at(h) - loss_at(-h)) / (2.0 * h);
            let numeric = (4.0 * central(GRAD_STEP / 2.0) - central(GRAD_STEP)) / 3.0;
            let gap = (a - numeric).abs();
            let scale = a.abs().max(numeric.abs());
            stats.checked += 1;
            if scale >= GRAD_REL_SCALE {
                stats.worst_rel = stats.worst_rel.max(gap / scale);
            } else {
                stats.worst_abs = stats.worst_abs.max(gap);
            }
        }
    }
}

fn gradient_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut groups = Vec::new();
    let mut stats = GradStats::default();
    for seed in 0..4 {
        for output in [OutputLayer::Crf, OutputLayer::Softmax] {
            let model = tiny_model(output, seed);
            let abs = random_abstract(&mut rng);
            gradient_error(&model, &abs, &mut groups, &mut stats);
        }
    }
    let has_transitions = groups.iter().any(|g| g == "crf.transitions");
    outcome(
        stats.passed() && has_transitions,
        format!(
            "{} parameter groups, {} scalars, max relative error {:.2e}, max absolute error below {GRAD_REL_SCALE:e} {:.2e}",
            groups.len(),
            stats.checked,
            stats.worst_rel,
            stats.worst_abs
        ),
    )
}

fn overfit() -> Outcome {
    let corpus = overfit_corpus(OVERFIT_ABSTRACTS, 3).unwrap();
    let mut spec = ModelSpec::default();
    spec.config = ModelConfig::new(16, 3);
    let cfg = TrainConfig {
        epochs: OVERFIT_EPOCHS,
        seed: 3,
        ..TrainConfig::default()
    };
    let model = spec.build(std::slice::from_ref(&corpus), cfg.seed).unwrap();
    let (_, history) = train(&corpus, None, &cfg, Some(model)).unwrap();
    match history
        .epochs
        .iter()
        .find(|r| r.train_accuracy >= OVERFIT_TARGET)
    {
        Some(r) => outcome(
            true,
            format!(
                "{:.2}% training accuracy at epoch {}",
                r.train_accuracy, r.epoch
            ),
        ),
        None => {
            let last = history.epochs.last().map_or(0.0, |r| r.train_accuracy);
            outcome(
                false,
                format!("only {last:.2}% after {OVERFIT_EPOCHS} epochs"),
            )
        }
    }
}

struct SeedResult {
    local: f64,
    pretrained: f64,
    finetuned: f64,
}

fn run_regimes(seed: u64) -> SeedResult {
    let fx = common::fixture(seed);
    let cmp = three_regime_comparison(common::data(&fx), &common::config(&fx, seed)).unwrap();
    SeedResult {
        local: cmp.accuracy(Regime::LocallyTrained),
        pretrained: cmp.accuracy(Regime::PreTrained),
        finetuned: cmp.accuracy(Regime::FineTuned),
    }
}

fn run_ablations(seed: u64) -> AblationTable {
    let fx = common::fixture(seed);
    ablation_study(common::data(&fx), &common::config(&fx, seed)).unwrap()
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn transfer(results: &[SeedResult]) -> Outcome {
    for (seed, r) in TRANSFER_SEEDS.iter().zip(results) {
        println!(
            "    seed {seed}: locally-trained {:.2}  pre-trained {:.2}  fine-tuned {:.2}",
            r.local, r.pretrained, r.finetuned
        );
    }
    let local = mean(results.iter().map(|r| r.local));
    let tuned = mean(results.iter().map(|r| r.finetuned));
    outcome(
        tuned - local >= TRANSFER_MARGIN,
        format!(
            "mean fine-tuned {tuned:.2} vs locally-trained {local:.2}, gap {:.2}",
            tuned - local
        ),
    )
}

fn ablation(tables: &[AblationTable]) -> Outcome {
    println!("    seed-0 table:");
    for line in tables[0].to_tsv().lines() {
        println!("      {line}");
    }
    let avg = |v: AblationVariant| mean(tables.iter().map(|t| t.accuracy(v)));
    let full = avg(AblationVariant::Full);
    let mut ok = tables.iter().all(|t| t.rows.len() == 5);
    let mut parts = vec![format!("full {full:.2}")];
    for &v in &AblationVariant::ALL[1..] {
        let acc = avg(v);
        ok &= full >= acc - ABLATION_SLACK;
        parts.push(format!("{} {acc:.2}", v.name()));
    }
    outcome(ok, parts.join(", "))
}

fn metrics() -> Outcome {
    let (b, t, o) = (0, 1, 2);
    let r = EvalReport::from_predictions(
        &LabelSchema::three(),
        &[(vec![b, b, t, o], vec![b, t, t, o])],
    )
    .unwrap();
    let got: Vec<(f64, f64, usize)> = r
        .per_class
        .iter()
        .map(|m| (m.precision, m.recall, m.support))
        .collect();
    let hand_ok = r.accuracy == 75.0
        && got == [(100.0, 50.0, 2), (50.0, 100.0, 1), (100.0, 100.0, 1)]
        && (r.per_class[0].f1 - 200.0 / 3.0).abs() < 1e-12
        && (r.per_class[1].f1 - 200.0 / 3.0).abs() < 1e-12
        && r.per_class[2].f1 == 100.0;

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut identity_failures = 0;
    for _ in 0..METRIC_SETS {
        let pairs: Vec<(Vec<usize>, Vec<usize>)> = (0..rng.gen_range(1..6))
            .map(|_| {
                let n = rng.gen_range(1..8);
                (
                    (0..n).map(|_| rng.gen_range(0..3)).collect(),
                    (0..n).map(|_| rng.gen_range(0..3)).collect(),
                )
            })
            .collect();
        let r = EvalReport::from_predictions(&LabelSchema::three(), &pairs).unwrap();
        let (correct, total) = pairs.iter().fold((0, 0), |(c, n), (g, p)| {
            (
                c + g.iter().zip(p).filter(|(a, b)| a == b).count(),
                n + g.len(),
            )
        });
        let trace: usize = (0..3).map(|i| r.confusion[[i, i]]).sum();
        if trace != correct || r.accuracy != 100.0 * trace as f64 / total as f64 {
            identity_failures += 1;
        }
    }
    outcome(
        hand_ok && identity_failures == 0,
        format!(
            "hand example {}, {identity_failures}/{METRIC_SETS} identity failures",
            if hand_ok { "exact" } else { "wrong" }
        ),
    )
}

fn corpus_round_trip() -> Outcome {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data");
    let mut identical = 0;
    let files = [
        ("five.txt", LabelSchema::five()),
        ("three.txt", LabelSchema::three()),
        ("unlabeled.txt", LabelSchema::three()),
    ];
    for (name, schema) in &files {
        let text = std::fs::read_to_string(dir.join(name)).unwrap();
        if serialize_corpus(&parse_corpus(dir.join(name), schema).unwrap()) == text {
            identical += 1;
        }
    }
    let five = parse_corpus(dir.join("five.txt"), &LabelSchema::five()).unwrap();
    let three = remap_labels(&five, &LabelMapping::five_to_three()).unwrap();
    let counts_ok = three.sentence_count() == five.sentence_count() && three.len() == five.len();
    let a = ["B", "B", "T", "O"];
    let k_same = cohens_kappa(&a, &a).unwrap();
    let k = cohens_kappa(&a, &["B", "T", "T", "O"]).unwrap();
    let kappa_ok = (k_same - 1.0).abs() < KAPPA_TOL && (k - 0.6364).abs() < KAPPA_TOL;
    outcome(
        identical == files.len() && counts_ok && kappa_ok,
        format!(
            "{identical}/{} files identical, remap counts {}, kappa {k_same:.4} and {k:.4}",
            files.len(),
            if counts_ok { "kept" } else { "changed" }
        ),
    )
}

fn determinism() -> Outcome {
    let fx = transfer_fixture(&FixtureConfig {
        source_abstracts: 40,
        target_train: 8,
        target_validation: 4,
        target_test: 10,
        ..FixtureConfig::default()
    })
    .unwrap();
    let mut cfg = common::config(&fx, 4);
    cfg.pretrain.epochs = 3;
    cfg.finetune.epochs = 5;
    let tables = || {
        let cmp = three_regime_comparison(common::data(&fx), &cfg).unwrap();
        let mut out = cmp.to_tsv();
        for row in &cmp.rows {
            out.push_str(&row.report.metrics_tsv());
            out.push_str(&row.report.confusion_tsv());
        }
        out.push_str(&ablation_study(common::data(&fx), &cfg).unwrap().to_tsv());
        out
    };
    let (first, second) = (tables(), tables());
    outcome(
        first == second,
        format!("{} bytes of tables compared", first.len()),
    )
}

fn main() -> ExitCode {
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    let mut report = |n, name, out: Outcome| {
        println!(
            "[{}] criterion {n}: {name}: {}",
            if out.passed { "PASS" } else { "FAIL" },
            out.detail
        );
        results.push((n, name, out));
    };

    report(
        1,
        "CRF matches brute-force enumeration",
        timed(CRF_BUDGET, crf_oracle),
    );
    report(
        2,
        "gradients match finite differences",
        timed(GRAD_BUDGET, gradient_check),
    );
    report(
        3,
        "overfits a patterned corpus",
        timed(OVERFIT_BUDGET, overfit),
    );

    let start = Instant::now();
    let regimes: Vec<SeedResult> = TRANSFER_SEEDS.iter().map(|&s| run_regimes(s)).collect();
    let regime_time = start.elapsed();
    let mut out = transfer(&regimes);
    out.detail = format!(
        "{} ({:.1}s, budget {}s)",
        out.detail,
        regime_time.as_secs_f64(),
        TRANSFER_BUDGET.as_secs()
    );
    out.passed &= regime_time <= TRANSFER_BUDGET;
    report(4, "fine-tuning beats local training", out);

    report(
        5,
        "full model is not beaten by an ablation",
        timed(ABLATION_BUDGET, || {
            let tables: Vec<AblationTable> =
                TRANSFER_SEEDS.iter().map(|&s| run_ablations(s)).collect();
            ablation(&tables)
        }),
    );
    report(6, "metrics match hand computation", metrics());
    report(7, "corpus round trip, remap and kappa", corpus_round_trip());
    report(8, "re-runs give byte-identical tables", determinism());

    let failed = results.iter().filter(|(_, _, o)| !o.passed).count();
    println!(
        "acceptance: {} passed, {failed} failed",
        results.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
