use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use abseg::checkpoint::{self, Checkpoint};
use abseg::corpus::{
    cohens_kappa, distribution_tsv, filter_code_sentences, label_position_distribution, parse_corpus,
    parse_corpus_str, remap_labels, segment_abstract, serialize_corpus, Abstract, CodeFilter, Corpus,
    CorpusSummary, LabelMapping, LabelSchema, LabeledSentence, RuleSegmenter, SplitTag,
};
use abseg::evaluation::{
    self, ablation_study, learning_curve, run_dir_name, three_regime_comparison, CurvePoint,
    EvalReport, ExperimentConfig, RunInfo, TransferData,
};
use abseg::model::ModelParams;
use abseg::plot;
use abseg::training::{self, augment_with_self_labels};
use anyhow::{bail, ensure, Context, Result};
use log::info;

use crate::manifest::RunManifest;
use crate::settings::Settings;
use crate::{Cli, Command, GlobalArgs, TransferArgs};

const DEFAULT_OUT: &str = "runs";

pub fn run(cli: Cli) -> Result<()> {
    let settings = Settings::resolve(&cli.global)?;
    let g = &cli.global;
    match &cli.command {
        Command::Train { train, val, vocab_from } => cmd_train(g, &settings, train, val.as_deref(), vocab_from),
        Command::Finetune { model, train, val } => cmd_finetune(g, &settings, model, train, val.as_deref()),
        Command::Predict { model, input } => cmd_predict(g, &settings, model, input),
        Command::Evaluate { model, test } => cmd_evaluate(g, &settings, model, test),
        Command::CompareRegimes { data } => cmd_compare(g, &settings, data),
        Command::LearningCurve { data, fractions } => cmd_curve(g, &settings, data, fractions),
        Command::Ablate { data } => cmd_ablate(g, &settings, data),
        Command::Stats { corpus, bins } => cmd_stats(g, &settings, corpus, *bins),
        Command::Kappa { a, b } => cmd_kappa(g, &settings, a, b),
        Command::Augment { model, train, unlabeled } => cmd_augment(g, &settings, model, train, unlabeled),
        Command::Remap { input } => cmd_remap(g, &settings, input),
        Command::FilterCode { input, patterns } => cmd_filter(g, &settings, input, patterns),
    }
}

fn write(path: &Path, content: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, content).with_context(|| format!("cannot write {}", path.display()))
}

fn read_corpus(path: &Path, schema: &LabelSchema) -> Result<Corpus> {
    parse_corpus(path, schema).with_context(|| format!("cannot read corpus {}", path.display()))
}

/// Creates `<out>/<dataset>-<name>-seed<seed>` and writes the manifest there.
fn run_dir(g: &GlobalArgs, settings: &Settings, command: &str, dataset: &str, inputs: &[&Path]) -> Result<PathBuf> {
    let base = g.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    let dir = base.join(run_dir_name(dataset, command, settings.seed));
    RunManifest::new(command, settings, inputs)?.write(&dir.join("manifest.json"))?;
    Ok(dir)
}

/// For single-file outputs the manifest sits next to the file.
fn out_file(g: &GlobalArgs, settings: &Settings, command: &str, inputs: &[&Path]) -> Result<Option<PathBuf>> {
    let Some(out) = g.out.clone() else {
        return Ok(None);
    };
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    RunManifest::new(command, settings, inputs)?.write(&out.with_file_name(name))?;
    Ok(Some(out))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => write(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn metadata(command: &str, settings: &Settings, dataset: &str) -> BTreeMap<String, String> {
    BTreeMap::from([
        ("command".to_string(), command.to_string()),
        ("dataset".to_string(), dataset.to_string()),
        ("seed".to_string(), settings.seed.to_string()),
        ("tool_version".to_string(), env!("CARGO_PKG_VERSION").to_string()),
    ])
}

fn load_model(path: &Path, settings: &Settings) -> Result<Checkpoint> {
    let ck = checkpoint::load(path).with_context(|| format!("cannot load checkpoint {}", path.display()))?;
    ck.expect_schema(&settings.label_schema())?;
    Ok(ck)
}

fn write_report(dir: &Path, report: &EvalReport) -> Result<()> {
    write(&dir.join("metrics.tsv"), report.metrics_tsv())?;
    write(&dir.join("confusion.tsv"), report.confusion_tsv())?;
    write(&dir.join("confusion.svg"), plot::confusion_svg(report))
}

fn cmd_train(
    g: &GlobalArgs,
    settings: &Settings,
    train_path: &Path,
    val_path: Option<&Path>,
    vocab_from: &[PathBuf],
) -> Result<()> {
    let schema = settings.label_schema();
    let dataset = settings.dataset_for(train_path);
    let mut inputs: Vec<&Path> = vec![train_path];
    inputs.extend(val_path);
    inputs.extend(vocab_from.iter().map(PathBuf::as_path));
    let dir = run_dir(g, settings, "train", &dataset, &inputs)?;

    let train = read_corpus(train_path, &schema)?;
    let val = val_path.map(|p| read_corpus(p, &schema)).transpose()?;
    let mut corpora = vec![train.clone()];
    for path in vocab_from {
        corpora.push(read_corpus(path, &schema)?);
    }
    let model = settings.model_spec(schema.len())?.build(&corpora, settings.seed)?;
    let (model, history) = training::train(&train, val.as_ref(), &settings.train, Some(model))?;
    checkpoint::save(&dir.join("model.ckpt"), &model, &metadata("train", settings, &dataset))?;
    write(&dir.join("history.tsv"), history.to_tsv())?;
    print!("{}", history.to_tsv());
    println!("model written to {}", dir.join("model.ckpt").display());
    Ok(())
}

fn cmd_finetune(
    g: &GlobalArgs,
    settings: &Settings,
    model_path: &Path,
    train_path: &Path,
    val_path: Option<&Path>,
) -> Result<()> {
    let schema = settings.label_schema();
    let dataset = settings.dataset_for(train_path);
    let mut inputs = vec![model_path, train_path];
    inputs.extend(val_path);
    let dir = run_dir(g, settings, "finetune", &dataset, &inputs)?;

    let ck = load_model(model_path, settings)?;
    let train = read_corpus(train_path, &schema)?;
    let val = val_path.map(|p| read_corpus(p, &schema)).transpose()?;
    let (model, history) = training::finetune(&ck.model, &train, val.as_ref(), &settings.train)?;
    checkpoint::save(&dir.join("model.ckpt"), &model, &metadata("finetune", settings, &dataset))?;
    write(&dir.join("history.tsv"), history.to_tsv())?;
    print!("{}", history.to_tsv());
    println!("model written to {}", dir.join("model.ckpt").display());
    Ok(())
}

/// A corpus file when any line starts with `###`, otherwise raw abstracts
/// separated by blank lines.
fn read_abstracts(path: &Path, schema: &LabelSchema) -> Result<Corpus> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    if text.lines().any(|l| l.starts_with("###")) {
        return Ok(parse_corpus_str(&text, schema)?);
    }
    let segmenter = RuleSegmenter::default();
    let mut abstracts = Vec::new();
    for block in text.split("\n\n").map(str::trim).filter(|b| !b.is_empty()) {
        let raw = block.split_whitespace().collect::<Vec<_>>().join(" ");
        let sentences = segment_abstract(&raw, &segmenter)
            .into_iter()
            .map(LabeledSentence::unlabeled)
            .collect::<abseg::Result<Vec<_>>>()?;
        abstracts.push(Abstract::new(format!("abstract-{}", abstracts.len() + 1), sentences)?);
    }
    Ok(Corpus::new(schema.clone(), abstracts, SplitTag::Unlabeled)?)
}

fn label_corpus(model: &ModelParams, corpus: &Corpus) -> Result<Corpus> {
    let abstracts = corpus
        .abstracts()
        .iter()
        .map(|abs| {
            let labels = model.predict(abs)?;
            let sentences = abs
                .sentences()
                .iter()
                .zip(labels)
                .map(|(s, l)| LabeledSentence::labeled(s.text(), l))
                .collect::<abseg::Result<Vec<_>>>()?;
            Abstract::new(abs.id(), sentences)
        })
        .collect::<abseg::Result<Vec<_>>>()?;
    Ok(Corpus::new(model.schema.clone(), abstracts, SplitTag::Test)?)
}

fn cmd_predict(g: &GlobalArgs, settings: &Settings, model_path: &Path, input: &Path) -> Result<()> {
    let out = out_file(g, settings, "predict", &[model_path, input])?;
    let ck = load_model(model_path, settings)?;
    let corpus = read_abstracts(input, &ck.model.schema)?;
    let labeled = label_corpus(&ck.model, &corpus)?;
    emit(out.as_deref(), &serialize_corpus(&labeled))
}

fn cmd_evaluate(g: &GlobalArgs, settings: &Settings, model_path: &Path, test_path: &Path) -> Result<()> {
    let dataset = settings.dataset_for(test_path);
    let dir = run_dir(g, settings, "evaluate", &dataset, &[model_path, test_path])?;
    let ck = load_model(model_path, settings)?;
    let test = read_corpus(test_path, &ck.model.schema)?;
    let report = evaluation::evaluate(&ck.model, &test)?.with_info(RunInfo {
        regime: ck.metadata.get("command").cloned().unwrap_or_else(|| "evaluate".into()),
        dataset,
        seed: settings.seed,
    });
    write_report(&dir, &report)?;
    print!("{}", report.metrics_tsv());
    Ok(())
}

struct LoadedTransfer {
    source: Corpus,
    train: Corpus,
    val: Option<Corpus>,
    test: Corpus,
}

impl LoadedTransfer {
    fn data(&self) -> TransferData<'_> {
        TransferData {
            source: &self.source,
            target_train: &self.train,
            target_validation: self.val.as_ref(),
            target_test: &self.test,
        }
    }
}

fn load_transfer(args: &TransferArgs, settings: &Settings) -> Result<LoadedTransfer> {
    let schema = settings.label_schema();
    let source_schema = match &args.source_schema {
        Some(name) => LabelSchema::by_name(name)
            .with_context(|| format!("unknown source schema `{name}`"))?,
        None => schema.clone(),
    };
    let mut source = read_corpus(&args.source, &source_schema)?;
    if source_schema != schema {
        let mapping = LabelMapping::five_to_three();
        ensure!(
            mapping.source() == &source_schema && mapping.target() == &schema,
            "no mapping from schema `{}` to `{}`",
            source_schema.name(),
            schema.name()
        );
        source = remap_labels(&source, &mapping)?;
        info!("source remapped to the {} schema", schema.name());
    }
    Ok(LoadedTransfer {
        source,
        train: read_corpus(&args.train, &schema)?,
        val: args.val.as_deref().map(|p| read_corpus(p, &schema)).transpose()?,
        test: read_corpus(&args.test, &schema)?,
    })
}

fn experiment_config(settings: &Settings, dataset: &str) -> Result<ExperimentConfig> {
    Ok(ExperimentConfig {
        spec: settings.model_spec(settings.label_schema().len())?,
        pretrain: settings.pretrain,
        finetune: settings.train,
        dataset: dataset.to_string(),
    })
}

fn transfer_inputs(args: &TransferArgs) -> Vec<&Path> {
    let mut inputs = vec![args.source.as_path(), args.train.as_path(), args.test.as_path()];
    inputs.extend(args.val.as_deref());
    inputs
}

fn cmd_compare(g: &GlobalArgs, settings: &Settings, args: &TransferArgs) -> Result<()> {
    let dataset = settings.dataset_for(&args.train);
    let dir = run_dir(g, settings, "compare-regimes", &dataset, &transfer_inputs(args))?;
    let loaded = load_transfer(args, settings)?;
    let cfg = experiment_config(settings, &dataset)?;
    let result = three_regime_comparison(loaded.data(), &cfg)?;
    for row in &result.rows {
        write_report(&dir.join(run_dir_name(&dataset, row.regime.name(), settings.seed)), &row.report)?;
    }
    let meta = metadata("compare-regimes", settings, &dataset);
    checkpoint::save(&dir.join("pretrained.ckpt"), &result.pretrained, &meta)?;
    checkpoint::save(&dir.join("finetuned.ckpt"), &result.finetuned, &meta)?;
    write(&dir.join("comparison.tsv"), result.to_tsv())?;
    print!("{}", result.to_tsv());
    Ok(())
}

fn cmd_curve(g: &GlobalArgs, settings: &Settings, args: &TransferArgs, fractions: &[f64]) -> Result<()> {
    let dataset = settings.dataset_for(&args.train);
    let dir = run_dir(g, settings, "learning-curve", &dataset, &transfer_inputs(args))?;
    let loaded = load_transfer(args, settings)?;
    let cfg = experiment_config(settings, &dataset)?;
    let points = learning_curve(loaded.data(), fractions, &cfg)?;
    let tsv = CurvePoint::to_tsv(&points);
    write(&dir.join("curve.tsv"), &tsv)?;
    write(&dir.join("curve.svg"), plot::curve_svg(&points))?;
    print!("{tsv}");
    Ok(())
}

fn cmd_ablate(g: &GlobalArgs, settings: &Settings, args: &TransferArgs) -> Result<()> {
    let dataset = settings.dataset_for(&args.train);
    let dir = run_dir(g, settings, "ablate", &dataset, &transfer_inputs(args))?;
    let loaded = load_transfer(args, settings)?;
    let cfg = experiment_config(settings, &dataset)?;
    let table = ablation_study(loaded.data(), &cfg)?;
    for row in &table.rows {
        write_report(&dir.join(run_dir_name(&dataset, &row.report.info.regime, settings.seed)), &row.report)?;
    }
    write(&dir.join("ablation.tsv"), table.to_tsv())?;
    print!("{}", table.to_tsv());
    Ok(())
}

fn cmd_stats(g: &GlobalArgs, settings: &Settings, path: &Path, bins: usize) -> Result<()> {
    let dataset = settings.dataset_for(path);
    let dir = run_dir(g, settings, "stats", &dataset, &[path])?;
    let corpus = read_corpus(path, &settings.label_schema())?;
    let summary = CorpusSummary::of(&corpus).to_tsv();
    write(&dir.join("summary.tsv"), &summary)?;
    print!("{summary}");
    if corpus.has_labels() {
        let matrix = label_position_distribution(&corpus, bins)?;
        let tsv = distribution_tsv(corpus.schema(), &matrix);
        write(&dir.join("distribution.tsv"), &tsv)?;
        write(&dir.join("distribution.svg"), plot::distribution_svg(corpus.schema(), &matrix))?;
        print!("{tsv}");
    }
    Ok(())
}

fn cmd_kappa(g: &GlobalArgs, settings: &Settings, a_path: &Path, b_path: &Path) -> Result<()> {
    let dataset = settings.dataset_for(a_path);
    let dir = run_dir(g, settings, "kappa", &dataset, &[a_path, b_path])?;
    let schema = settings.label_schema();
    let (a, b) = (read_corpus(a_path, &schema)?, read_corpus(b_path, &schema)?);
    ensure!(a.len() == b.len(), "annotations cover {} and {} abstracts", a.len(), b.len());
    let mut labels_a = Vec::new();
    let mut labels_b = Vec::new();
    for (x, y) in a.abstracts().iter().zip(b.abstracts()) {
        ensure!(x.id() == y.id(), "abstract order differs: `{}` vs `{}`", x.id(), y.id());
        ensure!(x.len() == y.len(), "abstract `{}` has different sentence counts", x.id());
        match (x.labels(), y.labels()) {
            (Some(la), Some(lb)) => {
                labels_a.extend(la);
                labels_b.extend(lb);
            }
            _ => bail!("abstract `{}` is not fully labeled in both files", x.id()),
        }
    }
    let kappa = cohens_kappa(&labels_a, &labels_b)?;
    let agree = labels_a.iter().zip(&labels_b).filter(|(x, y)| x == y).count();
    let tsv = format!(
        "sentences\tobserved_agreement\tkappa\n{}\t{:.4}\t{:.4}\n",
        labels_a.len(),
        agree as f64 / labels_a.len().max(1) as f64,
        kappa
    );
    write(&dir.join("kappa.tsv"), &tsv)?;
    print!("{tsv}");
    Ok(())
}

fn cmd_augment(
    g: &GlobalArgs,
    settings: &Settings,
    model_path: &Path,
    train_path: &Path,
    unlabeled_path: &Path,
) -> Result<()> {
    let out = out_file(g, settings, "augment", &[model_path, train_path, unlabeled_path])?;
    let ck = load_model(model_path, settings)?;
    let train = read_corpus(train_path, &ck.model.schema)?;
    let unlabeled = read_abstracts(unlabeled_path, &ck.model.schema)?;
    let augmented = augment_with_self_labels(&ck.model, &unlabeled, &train)?;
    eprintln!("{} + {} = {} abstracts", train.len(), unlabeled.len(), augmented.len());
    emit(out.as_deref(), &serialize_corpus(&augmented))
}

fn cmd_remap(g: &GlobalArgs, settings: &Settings, input: &Path) -> Result<()> {
    let out = out_file(g, settings, "remap", &[input])?;
    let mapping = LabelMapping::five_to_three();
    let corpus = read_corpus(input, mapping.source())?;
    let remapped = remap_labels(&corpus, &mapping)?;
    eprintln!("{} abstracts, {} sentences remapped", remapped.len(), remapped.sentence_count());
    emit(out.as_deref(), &serialize_corpus(&remapped))
}

fn cmd_filter(g: &GlobalArgs, settings: &Settings, input: &Path, patterns: &[String]) -> Result<()> {
    let out = out_file(g, settings, "filter-code", &[input])?;
    let filter = if patterns.is_empty() {
        CodeFilter::default()
    } else {
        CodeFilter::new(patterns)?
    };
    let corpus = read_corpus(input, &settings.label_schema())?;
    let (kept, removed) = filter_code_sentences(&corpus, &filter);
    eprintln!("removed {removed} sentences");
    emit(out.as_deref(), &serialize_corpus(&kept))
}
