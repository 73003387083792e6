//! The command implementations behind the `newsgate` binary.
//!
//! Every command reads its inputs and seeds from [`Settings`] and writes
//! files under `output_dir`; rerunning with the same settings rewrites the
//! same bytes.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use serde_json::Value;

use crate::cnn::{self, gradient_check, CnnConfig, EmbeddingTable, Example, TextCnnModel};
use crate::config::Settings;
use crate::container::{load_model, save_model, SavedModel};
use crate::corpus::{
    document_from_value, load_corpus, save_corpus, split_indices, CorpusFormat, DocumentSet, GateLabel, NewsDocument,
    PolarityLabel,
};
use crate::dtm::{Featurizer, Weighting};
use crate::error::{Error, Result};
use crate::eval::{confusion_matrix, metrics_from_confusion, EvalReport};
use crate::linear_svm::DtmSvmClassifier;
use crate::one_class::{cv_grid_search, fit_one_class, OneClassFilter, SolverParams};
use crate::seed;
use crate::valence::{annotate_corpus, load_lexicon, ScorerConfig};
use crate::vocab::build_vocabulary;

/// Every key the commands understand; anything else is a usage error.
pub const KNOWN_KEYS: &[&str] = &[
    "seed",
    "input",
    "format",
    "output_dir",
    "lexicon",
    "classifier",
    "model",
    "vocab_hash",
    "scorer.caps_boost",
    "scorer.negation_scalar",
    "scorer.negation_window",
    "scorer.booster_decay_near",
    "scorer.booster_decay_far",
    "scorer.exclamation_step",
    "scorer.max_exclamations",
    "scorer.but_before_weight",
    "scorer.but_after_weight",
    "scorer.alpha",
    "scorer.neutral_threshold",
    "vocab.min_count",
    "annotate.input",
    "filtration.input",
    "filtration.nu_grid",
    "filtration.gamma_grid",
    "filtration.folds",
    "filtration.repeats",
    "filtration.seed",
    "filtration.margin",
    "filtration.tol",
    "filtration.max_passes",
    "filtration.weighting",
    "train.input",
    "train.init_model",
    "split.test_fraction",
    "split.seed",
    "svm.lambda",
    "svm.epochs",
    "svm.seed",
    "svm.weighting",
    "cnn.n_filters",
    "cnn.kernel_size",
    "cnn.stride",
    "cnn.dropout",
    "cnn.epochs",
    "cnn.learning_rate",
    "cnn.batch_size",
    "cnn.max_len",
    "cnn.embedding_dim",
    "cnn.trainable_embeddings",
    "cnn.embeddings",
    "cnn.seed",
    "evaluate.input",
    "gate.quarantine",
    "gate.rejects",
    "gradcheck.n_filters",
    "gradcheck.kernel_size",
    "gradcheck.embedding_dim",
    "gradcheck.max_len",
    "gradcheck.vocab_size",
    "gradcheck.trainable_embeddings",
    "gradcheck.epsilon",
    "gradcheck.tolerance",
    "gradcheck.seeds",
];

pub fn check_keys(settings: &Settings) -> Result<()> {
    for k in settings.keys() {
        if !KNOWN_KEYS.contains(&k) {
            return Err(Error::Usage(format!("unknown setting {k:?}")));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassifierKind {
    Cnn,
    DtmSvm,
}

impl std::str::FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cnn" => Ok(ClassifierKind::Cnn),
            "dtm-svm" => Ok(ClassifierKind::DtmSvm),
            other => Err(Error::Usage(format!("unknown classifier {other:?} (expected cnn or dtm-svm)"))),
        }
    }
}

/// Typed view over [`Settings`] with defaults filled in.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub input: Option<PathBuf>,
    pub format: CorpusFormat,
    pub lexicon: Option<PathBuf>,
    pub classifier: ClassifierKind,
    pub model: Option<PathBuf>,
    pub vocab_hash: Option<String>,
    pub scorer: ScorerConfig,
    pub min_count: usize,
    pub annotate_input: Option<PathBuf>,
    pub filtration_input: Option<PathBuf>,
    pub nu_grid: Vec<f64>,
    pub gamma_grid: Vec<f64>,
    pub folds: usize,
    pub repeats: usize,
    pub filtration_seed: u64,
    pub margin: f64,
    pub solver: SolverParams,
    pub filtration_weighting: Weighting,
    pub train_input: Option<PathBuf>,
    pub init_model: Option<PathBuf>,
    pub test_fraction: f64,
    pub split_seed: u64,
    pub svm_lambda: f64,
    pub svm_epochs: usize,
    pub svm_seed: u64,
    pub svm_weighting: Weighting,
    pub cnn: CnnConfig,
    pub embeddings: Option<PathBuf>,
    pub evaluate_input: Option<PathBuf>,
    pub quarantine: Option<PathBuf>,
    pub rejects: Option<PathBuf>,
}

impl PipelineConfig {
    pub fn from_settings(s: &Settings) -> Result<Self> {
        check_keys(s)?;
        let seed = s.get_or("seed", 0u64)?;
        let path = |k: &str| s.raw(k).map(PathBuf::from);
        let d = ScorerConfig::default();
        let scorer = ScorerConfig {
            caps_boost: s.get_or("scorer.caps_boost", d.caps_boost)?,
            negation_scalar: s.get_or("scorer.negation_scalar", d.negation_scalar)?,
            negation_window: s.get_or("scorer.negation_window", d.negation_window)?,
            booster_decay: [
                s.get_or("scorer.booster_decay_near", d.booster_decay[0])?,
                s.get_or("scorer.booster_decay_far", d.booster_decay[1])?,
            ],
            exclamation_step: s.get_or("scorer.exclamation_step", d.exclamation_step)?,
            max_exclamations: s.get_or("scorer.max_exclamations", d.max_exclamations)?,
            but_before_weight: s.get_or("scorer.but_before_weight", d.but_before_weight)?,
            but_after_weight: s.get_or("scorer.but_after_weight", d.but_after_weight)?,
            alpha: s.get_or("scorer.alpha", d.alpha)?,
            neutral_threshold: s.get_or("scorer.neutral_threshold", d.neutral_threshold)?,
        };
        scorer.validate().map_err(usage)?;
        let c = CnnConfig::default();
        let cnn = CnnConfig {
            n_filters: s.get_or("cnn.n_filters", c.n_filters)?,
            kernel_size: s.get_or("cnn.kernel_size", c.kernel_size)?,
            stride: s.get_or("cnn.stride", c.stride)?,
            dropout: s.get_or("cnn.dropout", c.dropout)?,
            epochs: s.get_or("cnn.epochs", c.epochs)?,
            learning_rate: s.get_or("cnn.learning_rate", c.learning_rate)?,
            batch_size: s.get_or("cnn.batch_size", c.batch_size)?,
            max_len: s.get_or("cnn.max_len", c.max_len)?,
            embedding_dim: s.get_or("cnn.embedding_dim", c.embedding_dim)?,
            trainable_embeddings: s.get_or("cnn.trainable_embeddings", c.trainable_embeddings)?,
            seed: s.get_or("cnn.seed", seed)?,
        };
        cnn.validate().map_err(usage)?;
        let cfg = PipelineConfig {
            seed,
            output_dir: path("output_dir").unwrap_or_else(|| PathBuf::from("out")),
            input: path("input"),
            format: s.get_or("format", CorpusFormat::Jsonl)?,
            lexicon: path("lexicon"),
            classifier: s.get_or("classifier", ClassifierKind::Cnn)?,
            model: path("model"),
            vocab_hash: s.raw("vocab_hash").map(str::to_string),
            scorer,
            min_count: s.get_or("vocab.min_count", 2usize)?,
            annotate_input: path("annotate.input"),
            filtration_input: path("filtration.input"),
            nu_grid: s.list("filtration.nu_grid")?.unwrap_or_else(|| vec![0.05, 0.1, 0.2]),
            gamma_grid: s.list("filtration.gamma_grid")?.unwrap_or_else(|| vec![0.1, 0.5, 1.0]),
            folds: s.get_or("filtration.folds", 10usize)?,
            repeats: s.get_or("filtration.repeats", 10usize)?,
            filtration_seed: s.get_or("filtration.seed", seed)?,
            margin: s.get_or("filtration.margin", 0.0)?,
            solver: SolverParams {
                tol: s.get_or("filtration.tol", SolverParams::default().tol)?,
                max_passes: s.get_or("filtration.max_passes", SolverParams::default().max_passes)?,
            },
            filtration_weighting: s.get_or("filtration.weighting", Weighting::Tfidf)?,
            train_input: path("train.input"),
            init_model: path("train.init_model"),
            test_fraction: s.get_or("split.test_fraction", 0.2)?,
            split_seed: s.get_or("split.seed", seed)?,
            svm_lambda: s.get_or("svm.lambda", 1e-4)?,
            svm_epochs: s.get_or("svm.epochs", 20usize)?,
            svm_seed: s.get_or("svm.seed", seed)?,
            svm_weighting: s.get_or("svm.weighting", Weighting::Tfidf)?,
            cnn,
            embeddings: path("cnn.embeddings"),
            evaluate_input: path("evaluate.input"),
            quarantine: path("gate.quarantine"),
            rejects: path("gate.rejects"),
        };
        if cfg.min_count == 0 {
            return Err(Error::Usage("vocab.min_count must be at least 1".into()));
        }
        Ok(cfg)
    }

    fn out(&self, name: &str) -> PathBuf {
        self.output_dir.join(name)
    }

    fn or_out(&self, p: &Option<PathBuf>, name: &str) -> PathBuf {
        p.clone().unwrap_or_else(|| self.out(name))
    }
}

fn usage(e: Error) -> Error {
    match e {
        Error::InvalidArgument(m) => Error::Usage(m),
        other => other,
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn io_out(e: std::io::Error) -> Error {
    Error::io("<stdout>", e)
}

/// Validates and normalizes a raw corpus into `corpus.jsonl`.
pub fn run_ingest(cfg: &PipelineConfig, out: &mut dyn Write) -> Result<()> {
    let input = cfg
        .input
        .as_ref()
        .ok_or_else(|| Error::Usage("ingest needs --input".into()))?;
    let docs = load_corpus(input, cfg.format)?;
    ensure_dir(&cfg.output_dir)?;
    let target = cfg.out("corpus.jsonl");
    save_corpus(&target, &docs, CorpusFormat::Jsonl)?;
    writeln!(out, "documents={}", docs.len()).map_err(io_out)?;
    Ok(())
}

pub fn class_counts(docs: &DocumentSet) -> [usize; 3] {
    let mut counts = [0; 3];
    for d in docs.iter() {
        match d.weak_label {
            Some(PolarityLabel::Positive) => counts[0] += 1,
            Some(PolarityLabel::Negative) => counts[1] += 1,
            Some(PolarityLabel::Neutral) => counts[2] += 1,
            None => {}
        }
    }
    counts
}

/// Weak-labels the corpus and prints the class counts.
pub fn run_annotate(cfg: &PipelineConfig, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let lex_path = cfg
        .lexicon
        .as_ref()
        .ok_or_else(|| Error::Usage("annotate needs --lexicon".into()))?;
    let lexicon = load_lexicon(lex_path)?;
    if lexicon.is_empty() {
        writeln!(
            err,
            "warning: lexicon {} has no entries; every document will be neutral",
            lex_path.display()
        )
        .map_err(io_out)?;
    }
    let input = cfg.or_out(&cfg.annotate_input, "corpus.jsonl");
    let docs = load_corpus(&input, CorpusFormat::Jsonl)?;
    let annotated = annotate_corpus(&docs, &lexicon, &cfg.scorer);
    ensure_dir(&cfg.output_dir)?;
    save_corpus(&cfg.out("annotated.jsonl"), &annotated, CorpusFormat::Jsonl)?;
    let [p, n, z] = class_counts(&annotated);
    writeln!(out, "positive={p} negative={n} neutral={z}").map_err(io_out)?;
    Ok(())
}

/// Trains the one-class model on negative and neutral documents, quarantines
/// the positives it claims, and writes the training corpus for `train`.
pub fn run_filtrate(cfg: &PipelineConfig, out: &mut dyn Write) -> Result<()> {
    let input = cfg.or_out(&cfg.filtration_input, "annotated.jsonl");
    let docs = load_corpus(&input, CorpusFormat::Jsonl)?;
    let mut pos_idx = Vec::new();
    let mut neg_idx = Vec::new();
    for (i, d) in docs.iter().enumerate() {
        match d.weak_label {
            Some(PolarityLabel::Positive) => pos_idx.push(i),
            Some(_) => neg_idx.push(i),
            None => {
                return Err(Error::Contract(format!(
                    "document {:?} has no weak label; run annotate first",
                    d.id
                )))
            }
        }
    }
    if neg_idx.is_empty() {
        return Err(Error::Contract("no negative or neutral documents to train on".into()));
    }
    let negatives = docs.select(&neg_idx);
    let positives = docs.select(&pos_idx);

    let vocab = build_vocabulary(&docs, cfg.min_count)?;
    let features = Featurizer::fit(&docs, vocab, cfg.filtration_weighting, true)?;
    let neg_vectors = features.transform(&negatives);
    let grid: Vec<(f64, f64)> = cfg
        .nu_grid
        .iter()
        .flat_map(|&nu| cfg.gamma_grid.iter().map(move |&g| (nu, g)))
        .collect();
    let search = cv_grid_search(&neg_vectors, &grid, cfg.folds, cfg.repeats, cfg.filtration_seed, cfg.solver)?;
    let (nu, gamma) = search.selected;
    let (model, _) = fit_one_class(&neg_vectors, nu, gamma, cfg.solver)?;
    let filter = OneClassFilter {
        features,
        model,
        margin: cfg.margin,
    };
    let split = filter.split(&positives)?;

    let quarantined: std::collections::HashSet<&str> = split.quarantined.iter().map(|d| d.id.as_str()).collect();
    let training = DocumentSet {
        documents: docs
            .iter()
            .filter(|d| !quarantined.contains(d.id.as_str()))
            .cloned()
            .collect(),
        provenance: docs.provenance.clone(),
    };

    ensure_dir(&cfg.output_dir)?;
    save_corpus(&cfg.out("kept.jsonl"), &split.kept, CorpusFormat::Jsonl)?;
    save_corpus(&cfg.out("quarantine.jsonl"), &split.quarantined, CorpusFormat::Jsonl)?;
    save_corpus(&cfg.out("training.jsonl"), &training, CorpusFormat::Jsonl)?;
    save_model(&cfg.out("one_class.ngate"), &SavedModel::OneClass(filter))?;

    let mut report = String::new();
    let _ = writeln!(report, "negatives={}", negatives.len());
    let _ = writeln!(report, "positives={}", positives.len());
    let _ = writeln!(report, "kept={}", split.kept.len());
    let _ = writeln!(report, "quarantined={}", split.quarantined.len());
    let _ = writeln!(report, "folds={}", search.folds);
    let _ = writeln!(report, "repeats={}", search.repeats);
    let _ = writeln!(report, "fits={}", search.fits);
    let _ = writeln!(report, "selected_nu={nu}");
    let _ = writeln!(report, "selected_gamma={gamma}");
    let _ = writeln!(report, "criterion={:.9}", search.criterion_value);
    for (&(n, g), m) in search.grid.iter().zip(&search.mean_scores) {
        let _ = writeln!(report, "cell nu={n} gamma={g} mean_score={m:.9}");
    }
    for (d, v) in positives.iter().zip(&split.decisions) {
        let _ = writeln!(report, "decision {} {v:.9}", d.id);
    }
    write_file(&cfg.out("filtration_report.txt"), &report)?;
    writeln!(
        out,
        "kept={} quarantined={} nu={nu} gamma={gamma}",
        split.kept.len(),
        split.quarantined.len()
    )
    .map_err(io_out)?;
    Ok(())
}

fn binary_labels(docs: &DocumentSet) -> Result<Vec<bool>> {
    docs.iter()
        .map(|d| {
            d.is_positive()
                .ok_or_else(|| Error::Contract(format!("document {:?} has no label", d.id)))
        })
        .collect()
}

const GATE_CLASSES: [(bool, &str); 2] = [(true, "positive"), (false, "non_positive")];

/// Any model the gate can run.
#[derive(Debug, Clone, PartialEq)]
pub enum GateModel {
    Cnn(TextCnnModel),
    DtmSvm(DtmSvmClassifier),
}

impl GateModel {
    pub fn from_saved(model: SavedModel) -> Result<Self> {
        match model {
            SavedModel::Cnn(m) => Ok(GateModel::Cnn(m)),
            SavedModel::DtmSvm(m) => Ok(GateModel::DtmSvm(m)),
            SavedModel::OneClass(_) => Err(Error::Contract(
                "a one-class filtration model cannot be used as a gate classifier".into(),
            )),
        }
    }

    pub fn into_saved(self) -> SavedModel {
        match self {
            GateModel::Cnn(m) => SavedModel::Cnn(m),
            GateModel::DtmSvm(m) => SavedModel::DtmSvm(m),
        }
    }

    pub fn predict(&self, doc: &NewsDocument) -> Result<(GateLabel, f64)> {
        match self {
            GateModel::Cnn(m) => cnn::predict(m, doc),
            GateModel::DtmSvm(m) => m.predict_document(doc),
        }
    }
}

pub fn evaluate(model: &GateModel, docs: &DocumentSet) -> Result<EvalReport> {
    let gold = binary_labels(docs)?;
    let pred = docs
        .iter()
        .map(|d| model.predict(d).map(|(l, _)| l == GateLabel::Positive))
        .collect::<Result<Vec<_>>>()?;
    metrics_from_confusion(&confusion_matrix(&gold, &pred, &GATE_CLASSES)?)
}

/// Result of [`train_classifier`]: the model plus one history line per epoch.
pub struct Trained {
    pub model: GateModel,
    pub history: String,
}

/// Builds the vocabulary on `train` and fits the configured classifier.
pub fn train_classifier(cfg: &PipelineConfig, train: &DocumentSet, valid: &DocumentSet) -> Result<Trained> {
    let vocab = build_vocabulary(train, cfg.min_count)?;
    let mut history = String::new();
    match cfg.classifier {
        ClassifierKind::Cnn => {
            let table_seed = seed::derive(cfg.cnn.seed, &[3]);
            let table = match &cfg.embeddings {
                Some(p) => cnn::load_pretrained_embeddings(p, &vocab, cfg.cnn.embedding_dim, table_seed)?,
                None => EmbeddingTable::random(vocab.dimension(), cfg.cnn.embedding_dim, table_seed),
            };
            let mut model = TextCnnModel::new(vocab, table, cfg.cnn.clone())?;
            if let Some(init) = &cfg.init_model {
                let hash = model.vocab.content_hash();
                match load_model(init, Some(&hash))? {
                    SavedModel::Cnn(prev) => {
                        let fresh = model.clone();
                        model = TextCnnModel {
                            config: fresh.config,
                            ..prev
                        };
                        model.embeddings.trainable = model.config.trainable_embeddings;
                        model.validate()?;
                    }
                    other => {
                        return Err(Error::Contract(format!(
                            "warm start expects a cnn model, found {}",
                            other.kind()
                        )))
                    }
                }
            }
            let train_ex = cnn::encode_documents(&model, train)?;
            let valid_ex: Vec<Example> = cnn::encode_documents(&model, valid)?;
            let (model, h) = cnn::train(model, &train_ex, &valid_ex)?;
            for (i, e) in h.epochs.iter().enumerate() {
                let _ = writeln!(
                    history,
                    "epoch={} loss={:.9} train_accuracy={:.6}",
                    i + 1,
                    e.mean_loss,
                    e.train_accuracy
                );
            }
            Ok(Trained {
                model: GateModel::Cnn(model),
                history,
            })
        }
        ClassifierKind::DtmSvm => {
            if cfg.init_model.is_some() {
                return Err(Error::Usage("warm start is only supported for the cnn classifier".into()));
            }
            let (model, trace) =
                DtmSvmClassifier::fit(train, vocab, cfg.svm_weighting, cfg.svm_lambda, cfg.svm_epochs, cfg.svm_seed)?;
            for (i, obj) in trace.iter().enumerate() {
                let _ = writeln!(history, "epoch={} objective={obj:.9}", i + 1);
            }
            Ok(Trained {
                model: GateModel::DtmSvm(model),
                history,
            })
        }
    }
}

/// Stratified split on the binary gate label.
pub fn split_labeled(docs: &DocumentSet, test_fraction: f64, seed: u64) -> Result<(DocumentSet, DocumentSet)> {
    let labels = binary_labels(docs)?;
    let (train, test) = split_indices(docs.len(), test_fraction, seed, Some(&labels))?;
    Ok((docs.select(&train), docs.select(&test)))
}

/// Splits 80/20, trains, and writes the model with train/test reports.
pub fn run_train(cfg: &PipelineConfig, out: &mut dyn Write) -> Result<()> {
    let input = cfg.or_out(&cfg.train_input, "training.jsonl");
    let docs = load_corpus(&input, CorpusFormat::Jsonl)?;
    let labels = binary_labels(&docs)?;
    if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
        return Err(Error::Contract("training data contains a single class".into()));
    }
    let (train, test) = split_labeled(&docs, cfg.test_fraction, cfg.split_seed)?;
    let trained = train_classifier(cfg, &train, &test)?;
    let train_report = evaluate(&trained.model, &train)?;
    let test_report = evaluate(&trained.model, &test)?;

    ensure_dir(&cfg.output_dir)?;
    let model_path = cfg.or_out(&cfg.model, "model.ngate");
    save_model(&model_path, &trained.model.clone().into_saved())?;
    write_file(&cfg.out("train_report.txt"), &train_report.to_text())?;
    write_file(&cfg.out("test_report.txt"), &test_report.to_text())?;
    write_file(&cfg.out("history.txt"), &trained.history)?;
    writeln!(
        out,
        "train_accuracy={:.6} test_accuracy={:.6} model={}",
        train_report.accuracy,
        test_report.accuracy,
        model_path.display()
    )
    .map_err(io_out)?;
    Ok(())
}

fn load_gate_model(cfg: &PipelineConfig) -> Result<GateModel> {
    let path = cfg.or_out(&cfg.model, "model.ngate");
    GateModel::from_saved(load_model(&path, cfg.vocab_hash.as_deref())?)
}

/// Scores a labeled corpus with a saved model.
pub fn run_evaluate(cfg: &PipelineConfig, out: &mut dyn Write) -> Result<()> {
    let model = load_gate_model(cfg)?;
    let input = cfg.or_out(&cfg.evaluate_input, "training.jsonl");
    let docs = load_corpus(&input, CorpusFormat::Jsonl)?;
    let text = evaluate(&model, &docs)?.to_text();
    ensure_dir(&cfg.output_dir)?;
    write_file(&cfg.out("eval_report.txt"), &text)?;
    out.write_all(text.as_bytes()).map_err(io_out)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct GateCounts {
    pub input: usize,
    pub emitted: usize,
    pub quarantined: usize,
    pub rejected: usize,
}

fn json_line(v: &Value) -> String {
    serde_json::to_string(v).expect("json values always serialize")
}

fn confidence_value(p: f64) -> Value {
    serde_json::Number::from_f64(p).map_or(Value::Null, Value::Number)
}

/// Streams jsonl records through the model: predicted positives go to
/// `emit` with a `confidence` field appended, the rest to `quarantine` with
/// `gate_label` and `confidence`, unparsable lines to `rejects`. Every line
/// lands in exactly one of the three, in input order.
pub fn gate_stream(
    model: &GateModel,
    input: &mut dyn BufRead,
    emit: &mut dyn Write,
    quarantine: &mut dyn Write,
    rejects: &mut dyn Write,
) -> Result<GateCounts> {
    let mut counts = GateCounts::default();
    let mut line = String::new();
    let mut line_no = 0;
    loop {
        line.clear();
        let n = input.read_line(&mut line).map_err(|e| Error::io("<stdin>", e))?;
        if n == 0 {
            break;
        }
        line_no += 1;
        counts.input += 1;
        let raw = line.trim_end_matches(['\n', '\r']);
        let parsed = serde_json::from_str::<Value>(raw)
            .map_err(|e| e.to_string())
            .and_then(|v| match v {
                Value::Object(_) => Ok(v),
                _ => Err("record is not a JSON object".to_string()),
            })
            .and_then(|v| {
                document_from_value(&v, line_no)
                    .map(|d| (v, d))
                    .map_err(|e| match e {
                        Error::Parse { message, .. } => message,
                        other => other.to_string(),
                    })
            });
        let (mut value, doc) = match parsed {
            Ok(x) => x,
            Err(reason) => {
                let rec = serde_json::json!({ "line": line_no, "reason": reason, "raw": raw });
                writeln!(rejects, "{}", json_line(&rec)).map_err(io_out)?;
                counts.rejected += 1;
                continue;
            }
        };
        let (label, confidence) = model.predict(&doc)?;
        let obj = value.as_object_mut().expect("checked object");
        if label == GateLabel::Positive {
            obj.insert("confidence".into(), confidence_value(confidence));
            writeln!(emit, "{}", json_line(&value)).map_err(io_out)?;
            counts.emitted += 1;
        } else {
            obj.insert("gate_label".into(), Value::String(label.name().into()));
            obj.insert("confidence".into(), confidence_value(confidence));
            writeln!(quarantine, "{}", json_line(&value)).map_err(io_out)?;
            counts.quarantined += 1;
        }
    }
    Ok(counts)
}

pub fn run_gate(cfg: &PipelineConfig, input: &mut dyn BufRead, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let model = load_gate_model(cfg)?;
    let q_path = cfg.or_out(&cfg.quarantine, "gate_quarantine.jsonl");
    let r_path = cfg.or_out(&cfg.rejects, "gate_rejects.jsonl");
    for p in [&q_path, &r_path] {
        if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
            ensure_dir(dir)?;
        }
    }
    let open = |p: &Path| fs::File::create(p).map(std::io::BufWriter::new).map_err(|e| Error::io(p, e));
    let mut quarantine = open(&q_path)?;
    let mut rejects = open(&r_path)?;
    let counts = gate_stream(&model, input, out, &mut quarantine, &mut rejects)?;
    quarantine.flush().map_err(|e| Error::io(&q_path, e))?;
    rejects.flush().map_err(|e| Error::io(&r_path, e))?;
    out.flush().map_err(io_out)?;
    writeln!(
        err,
        "input={} emitted={} quarantined={} rejected={}",
        counts.input, counts.emitted, counts.quarantined, counts.rejected
    )
    .map_err(io_out)?;
    Ok(())
}

/// Central-difference check of a freshly initialized small CNN, one line
/// per seed and parameter group. Fails when any error reaches the tolerance.
pub fn run_gradcheck(settings: &Settings, out: &mut dyn Write) -> Result<()> {
    check_keys(settings)?;
    let n_filters = settings.get_or("gradcheck.n_filters", 8usize)?;
    let kernel_size = settings.get_or("gradcheck.kernel_size", 3usize)?;
    let dim = settings.get_or("gradcheck.embedding_dim", 10usize)?;
    let max_len = settings.get_or("gradcheck.max_len", 12usize)?;
    let vocab_size = settings.get_or("gradcheck.vocab_size", 20usize)?;
    let trainable = settings.get_or("gradcheck.trainable_embeddings", false)?;
    let epsilon = settings.get_or("gradcheck.epsilon", 1e-5)?;
    let tolerance = settings.get_or("gradcheck.tolerance", 1e-4)?;
    let base_seed = settings.get_or("seed", 0u64)?;
    let seeds: Vec<u64> = settings
        .list("gradcheck.seeds")?
        .unwrap_or_else(|| (0..5).map(|i| base_seed + i).collect());

    let mut worst = 0.0f64;
    for &s in &seeds {
        let (model, example) = gradcheck_instance(n_filters, kernel_size, dim, max_len, vocab_size, trainable, s)?;
        let report = gradient_check(&model, &example, epsilon)?;
        for g in &report.groups {
            writeln!(
                out,
                "seed={s} group={} parameters={} max_relative_error={:e}",
                g.group, g.parameters, g.max_relative_error
            )
            .map_err(io_out)?;
        }
        worst = worst.max(report.max_relative_error);
    }
    let pass = worst < tolerance;
    writeln!(
        out,
        "max_relative_error={worst:e} tolerance={tolerance:e} {}",
        if pass { "PASS" } else { "FAIL" }
    )
    .map_err(io_out)?;
    if pass {
        Ok(())
    } else {
        Err(Error::Contract(format!(
            "gradient check failed: {worst:e} >= {tolerance:e}"
        )))
    }
}

/// Random model with nonzero biases and one random example, all drawn from
/// `seed`.
pub fn gradcheck_instance(
    n_filters: usize,
    kernel_size: usize,
    dim: usize,
    max_len: usize,
    vocab_size: usize,
    trainable: bool,
    seed: u64,
) -> Result<(TextCnnModel, Example)> {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    let tokens: Vec<String> = (0..vocab_size).map(|i| format!("t{i}")).collect();
    let vocab = crate::vocab::Vocabulary::from_parts(tokens, vec![1; vocab_size])?;
    let config = CnnConfig {
        n_filters,
        kernel_size,
        embedding_dim: dim,
        max_len,
        trainable_embeddings: trainable,
        seed,
        ..CnnConfig::default()
    };
    let table = EmbeddingTable::random(vocab.dimension(), dim, seed::derive(seed, &[3]));
    let mut model = TextCnnModel::new(vocab, table, config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(seed, &[4]));
    for b in model.filter_bias.iter_mut().chain(model.dense_bias.iter_mut()) {
        *b = rng.gen_range(-0.1..0.1);
    }
    let len = rng.gen_range(kernel_size..=max_len);
    let ids = (0..max_len)
        .map(|i| if i < len { rng.gen_range(1..model.vocab.dimension()) } else { 0 })
        .collect();
    let label = rng.gen_range(0..2);
    Ok((model, Example { ids, label }))
}
