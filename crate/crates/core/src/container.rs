//! Plain-text model container.
//!
//! ```text
//! NGATE <version> <kind> <vocabulary hash>
//! ---params
//! key value
//! ---vocab
//! token frequency
//! ---<vector section>
//! <length>
//! value
//! ...
//! ```
//!
//! Floats are written in shortest round-trip exponent form, so loading and
//! saving again reproduces the file byte for byte.

use std::collections::HashMap;
use std::fmt::{Display, Write as _};
use std::path::Path;
use std::str::FromStr;

use crate::cnn::{CnnConfig, EmbeddingTable, TextCnnModel};
use crate::dtm::{Featurizer, IdfTable, SparseVector, Weighting};
use crate::error::{Error, Result};
use crate::linear_svm::{DtmSvmClassifier, LinearSvmModel};
use crate::one_class::{OneClassFilter, OneClassSvmModel};
use crate::vocab::Vocabulary;

pub const MAGIC: &str = "NGATE";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum SavedModel {
    Cnn(TextCnnModel),
    DtmSvm(DtmSvmClassifier),
    OneClass(OneClassFilter),
}

impl SavedModel {
    pub fn kind(&self) -> &'static str {
        match self {
            SavedModel::Cnn(_) => "cnn",
            SavedModel::DtmSvm(_) => "dtm-svm",
            SavedModel::OneClass(_) => "one-class-svm",
        }
    }

    pub fn vocab(&self) -> &Vocabulary {
        match self {
            SavedModel::Cnn(m) => &m.vocab,
            SavedModel::DtmSvm(m) => &m.features.vocab,
            SavedModel::OneClass(m) => &m.features.vocab,
        }
    }
}

struct Writer(String);

impl Writer {
    fn section(&mut self, name: &str) {
        let _ = writeln!(self.0, "---{name}");
    }

    fn param(&mut self, key: &str, value: impl Display) {
        let _ = writeln!(self.0, "{key} {value}");
    }

    fn float(&mut self, key: &str, value: f64) {
        let _ = writeln!(self.0, "{key} {value:e}");
    }

    fn floats(&mut self, name: &str, values: &[f64]) {
        self.section(name);
        let _ = writeln!(self.0, "{}", values.len());
        for v in values {
            let _ = writeln!(self.0, "{v:e}");
        }
    }

    fn vocab(&mut self, vocab: &Vocabulary) {
        self.section("vocab");
        for (t, f) in vocab.entries() {
            let _ = writeln!(self.0, "{t} {f}");
        }
    }

    fn features(&mut self, f: &Featurizer) {
        self.param("weighting", f.weighting.name());
        self.param("l2_normalize", f.l2_normalize);
        if let Some(idf) = &f.idf {
            self.param("idf_docs", idf.n_docs);
        }
    }

    fn feature_tables(&mut self, f: &Featurizer) {
        self.vocab(&f.vocab);
        if let Some(idf) = &f.idf {
            self.floats("idf", &idf.idf);
        }
    }
}

/// Serializes a model; the header carries the vocabulary hash.
pub fn to_text(model: &SavedModel) -> String {
    let mut w = Writer(String::new());
    let _ = writeln!(
        w.0,
        "{MAGIC} {FORMAT_VERSION} {} {}",
        model.kind(),
        model.vocab().content_hash()
    );
    w.section("params");
    match model {
        SavedModel::Cnn(m) => {
            let c = &m.config;
            w.param("n_filters", c.n_filters);
            w.param("kernel_size", c.kernel_size);
            w.param("stride", c.stride);
            w.float("dropout", c.dropout);
            w.param("epochs", c.epochs);
            w.float("learning_rate", c.learning_rate);
            w.param("batch_size", c.batch_size);
            w.param("max_len", c.max_len);
            w.param("embedding_dim", c.embedding_dim);
            w.param("trainable_embeddings", c.trainable_embeddings);
            w.param("seed", c.seed);
            w.vocab(&m.vocab);
            w.floats("embeddings", &m.embeddings.vectors);
            w.floats("filters", &m.filters);
            w.floats("filter_bias", &m.filter_bias);
            w.floats("dense_weights", &m.dense_weights);
            w.floats("dense_bias", &m.dense_bias);
        }
        SavedModel::DtmSvm(m) => {
            w.features(&m.features);
            w.float("lambda", m.svm.lambda);
            w.float("bias", m.svm.bias);
            w.param("epochs_trained", m.svm.epochs_trained);
            w.feature_tables(&m.features);
            w.floats("weights", &m.svm.weights);
        }
        SavedModel::OneClass(m) => {
            w.features(&m.features);
            w.float("nu", m.model.nu);
            w.float("gamma", m.model.gamma);
            w.float("rho", m.model.rho);
            w.float("margin", m.margin);
            w.param("train_size", m.model.train_size);
            w.feature_tables(&m.features);
            w.floats("coefficients", &m.model.coefficients);
            w.section("support_vectors");
            let _ = writeln!(w.0, "{}", m.model.support_vectors.len());
            for sv in &m.model.support_vectors {
                if sv.nnz() == 0 {
                    w.0.push_str("-\n");
                    continue;
                }
                let line: Vec<String> = sv.entries().iter().map(|(i, v)| format!("{i}:{v:e}")).collect();
                let _ = writeln!(w.0, "{}", line.join(" "));
            }
        }
    }
    w.0
}

struct Section<'a> {
    /// Line number of the header.
    line: usize,
    body: Vec<(usize, &'a str)>,
}

struct Parsed<'a> {
    sections: HashMap<&'a str, Section<'a>>,
    params: HashMap<&'a str, (usize, &'a str)>,
}

impl<'a> Parsed<'a> {
    fn section(&self, name: &str) -> Result<&Section<'a>> {
        self.sections
            .get(name)
            .ok_or_else(|| Error::Contract(format!("model file lacks section {name:?}")))
    }

    fn param<T: FromStr>(&self, key: &str) -> Result<T> {
        let &(line, raw) = self
            .params
            .get(key)
            .ok_or_else(|| Error::Contract(format!("model file lacks parameter {key:?}")))?;
        raw.parse()
            .map_err(|_| Error::parse(line, format!("bad value {raw:?} for {key}")))
    }

    fn floats(&self, name: &str) -> Result<Vec<f64>> {
        let s = self.section(name)?;
        let (count, rest) = counted(s, name)?;
        if rest.len() != count {
            return Err(Error::parse(s.line, format!("{name}: expected {count} values, found {}", rest.len())));
        }
        rest.iter()
            .map(|&(line, raw)| {
                raw.parse::<f64>()
                    .map_err(|_| Error::parse(line, format!("bad number {raw:?}")))
            })
            .collect()
    }

    fn vocab(&self) -> Result<Vocabulary> {
        let s = self.section("vocab")?;
        let mut tokens = Vec::with_capacity(s.body.len());
        let mut freqs = Vec::with_capacity(s.body.len());
        for &(line, raw) in &s.body {
            let (t, f) = raw
                .split_once(' ')
                .ok_or_else(|| Error::parse(line, "expected `token frequency`"))?;
            tokens.push(t.to_string());
            freqs.push(f.parse().map_err(|_| Error::parse(line, format!("bad frequency {f:?}")))?);
        }
        Vocabulary::from_parts(tokens, freqs)
    }

    fn features(&self, vocab: Vocabulary) -> Result<Featurizer> {
        let weighting: Weighting = self.param("weighting")?;
        let idf = match weighting {
            Weighting::Count => None,
            Weighting::Tfidf => Some(IdfTable {
                idf: self.floats("idf")?,
                n_docs: self.param("idf_docs")?,
            }),
        };
        let f = Featurizer {
            vocab,
            weighting,
            idf,
            l2_normalize: self.param("l2_normalize")?,
        };
        f.validate()?;
        Ok(f)
    }
}

fn counted<'s, 'a>(s: &'s Section<'a>, name: &str) -> Result<(usize, &'s [(usize, &'a str)])> {
    let (&(line, raw), rest) = s
        .body
        .split_first()
        .ok_or_else(|| Error::parse(s.line, format!("{name}: missing length line")))?;
    let count = raw
        .parse()
        .map_err(|_| Error::parse(line, format!("bad length {raw:?}")))?;
    Ok((count, rest))
}

fn parse_sparse(line: usize, raw: &str, dim: usize) -> Result<SparseVector> {
    if raw == "-" {
        return Ok(SparseVector::zeros(dim));
    }
    let entries = raw
        .split(' ')
        .map(|pair| {
            let (i, v) = pair
                .split_once(':')
                .ok_or_else(|| Error::parse(line, format!("bad entry {pair:?}")))?;
            Ok((
                i.parse().map_err(|_| Error::parse(line, format!("bad index {i:?}")))?,
                v.parse().map_err(|_| Error::parse(line, format!("bad number {v:?}")))?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    SparseVector::new(dim, entries).map_err(|e| Error::parse(line, e.to_string()))
}

/// Parses a container. The vocabulary hash in the header must match the
/// stored vocabulary and, when given, `expected_hash`.
pub fn from_text(text: &str, expected_hash: Option<&str>) -> Result<SavedModel> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines.next().ok_or_else(|| Error::parse(1, "empty model file"))?;
    let fields: Vec<&str> = header.split(' ').collect();
    let [magic, version, kind, hash] = fields[..] else {
        return Err(Error::parse(1, "malformed header"));
    };
    if magic != MAGIC {
        return Err(Error::parse(1, "not a model file"));
    }
    if version != FORMAT_VERSION.to_string() {
        return Err(Error::Contract(format!(
            "unsupported model format version {version} (this build reads {FORMAT_VERSION})"
        )));
    }

    let mut sections: HashMap<&str, Section> = HashMap::new();
    let mut current: Option<&str> = None;
    for (n, l) in lines {
        if let Some(name) = l.strip_prefix("---") {
            if sections.contains_key(name) {
                return Err(Error::parse(n, format!("section {name:?} repeated")));
            }
            sections.insert(name, Section { line: n, body: Vec::new() });
            current = Some(name);
            continue;
        }
        let Some(name) = current else {
            return Err(Error::parse(n, "content before the first section"));
        };
        sections.get_mut(name).expect("section inserted").body.push((n, l));
    }
    let mut params = HashMap::new();
    if let Some(s) = sections.get("params") {
        for &(n, l) in &s.body {
            let (k, v) = l.split_once(' ').ok_or_else(|| Error::parse(n, "expected `key value`"))?;
            params.insert(k, (n, v));
        }
    }
    let p = Parsed { sections, params };

    let vocab = p.vocab()?;
    let actual = vocab.content_hash();
    if actual != hash {
        return Err(Error::Contract(format!(
            "vocabulary hash {actual} does not match header {hash}"
        )));
    }
    if let Some(expected) = expected_hash {
        if expected != hash {
            return Err(Error::Contract(format!(
                "vocabulary hash mismatch: model has {hash}, expected {expected}"
            )));
        }
    }

    let model = match kind {
        "cnn" => {
            let config = CnnConfig {
                n_filters: p.param("n_filters")?,
                kernel_size: p.param("kernel_size")?,
                stride: p.param("stride")?,
                dropout: p.param("dropout")?,
                epochs: p.param("epochs")?,
                learning_rate: p.param("learning_rate")?,
                batch_size: p.param("batch_size")?,
                max_len: p.param("max_len")?,
                embedding_dim: p.param("embedding_dim")?,
                trainable_embeddings: p.param("trainable_embeddings")?,
                seed: p.param("seed")?,
            };
            let embeddings = EmbeddingTable {
                dim: config.embedding_dim,
                vectors: p.floats("embeddings")?,
                trainable: config.trainable_embeddings,
            };
            let m = TextCnnModel {
                vocab,
                embeddings,
                filters: p.floats("filters")?,
                filter_bias: p.floats("filter_bias")?,
                dense_weights: p.floats("dense_weights")?,
                dense_bias: p.floats("dense_bias")?,
                config,
            };
            m.validate()?;
            SavedModel::Cnn(m)
        }
        "dtm-svm" => {
            let features = p.features(vocab)?;
            let svm = LinearSvmModel {
                weights: p.floats("weights")?,
                bias: p.param("bias")?,
                lambda: p.param("lambda")?,
                epochs_trained: p.param("epochs_trained")?,
            };
            if svm.weights.len() != features.dim() {
                return Err(Error::DimensionMismatch {
                    expected: features.dim(),
                    found: svm.weights.len(),
                });
            }
            SavedModel::DtmSvm(DtmSvmClassifier { features, svm })
        }
        "one-class-svm" => {
            let features = p.features(vocab)?;
            let dim = features.dim();
            let coefficients = p.floats("coefficients")?;
            let s = p.section("support_vectors")?;
            let (count, rest) = counted(s, "support_vectors")?;
            if count != rest.len() || count != coefficients.len() {
                return Err(Error::parse(s.line, "support vector count does not match coefficients"));
            }
            let support_vectors = rest
                .iter()
                .map(|&(n, l)| parse_sparse(n, l, dim))
                .collect::<Result<Vec<_>>>()?;
            let model = OneClassSvmModel {
                support_vectors,
                coefficients,
                rho: p.param("rho")?,
                gamma: p.param("gamma")?,
                nu: p.param("nu")?,
                train_size: p.param("train_size")?,
                dim,
            };
            SavedModel::OneClass(OneClassFilter {
                features,
                model,
                margin: p.param("margin")?,
            })
        }
        other => return Err(Error::Contract(format!("unknown model kind {other:?}"))),
    };
    Ok(model)
}

pub fn save_model(path: &Path, model: &SavedModel) -> Result<()> {
    std::fs::write(path, to_text(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path, expected_hash: Option<&str>) -> Result<SavedModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_text(&text, expected_hash)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cnn::model::small_model;
    use crate::corpus::{DocumentSet, NewsDocument, PolarityLabel};
    use crate::one_class::train_one_class;
    use crate::vocab::build_vocabulary;

    fn docs() -> DocumentSet {
        let texts = [
            ("good great win", PolarityLabel::Positive),
            ("bad loss crash", PolarityLabel::Negative),
            ("great hope win", PolarityLabel::Positive),
            ("crash fear bad", PolarityLabel::Negative),
        ];
        let docs = texts
            .iter()
            .enumerate()
            .map(|(i, (t, l))| {
                let mut d = NewsDocument::new(i.to_string(), "", *t);
                d.gold_label = Some(*l);
                d
            })
            .collect();
        DocumentSet::new(docs).unwrap()
    }

    fn round_trip(m: &SavedModel) {
        let text = to_text(m);
        let back = from_text(&text, None).unwrap();
        assert_eq!(&back, m);
        assert_eq!(to_text(&back), text);
    }

    #[test]
    fn cnn_round_trip() {
        let mut m = small_model(3, true);
        m.filters[0] = 0.1 + 0.2;
        m.dense_bias[1] = -1e-300;
        round_trip(&SavedModel::Cnn(m));
    }

    #[test]
    fn dtm_svm_round_trip() {
        let d = docs();
        for w in [Weighting::Count, Weighting::Tfidf] {
            let vocab = build_vocabulary(&d, 1).unwrap();
            let (m, _) = DtmSvmClassifier::fit(&d, vocab, w, 0.01, 5, 1).unwrap();
            round_trip(&SavedModel::DtmSvm(m));
        }
    }

    #[test]
    fn one_class_round_trip() {
        let d = docs();
        let vocab = build_vocabulary(&d, 1).unwrap();
        let features = Featurizer::fit(&d, vocab, Weighting::Tfidf, true).unwrap();
        let mut rows = features.transform(&d);
        rows.push(SparseVector::zeros(features.dim()));
        let model = train_one_class(&rows, 0.5, 0.7, 1e-6, 200).unwrap();
        round_trip(&SavedModel::OneClass(OneClassFilter {
            features,
            model,
            margin: 0.0,
        }));
    }

    #[test]
    fn rejects_version_and_hash_mismatches() {
        let m = SavedModel::Cnn(small_model(1, false));
        let text = to_text(&m);
        let hash = m.vocab().content_hash();
        assert!(from_text(&text, Some(&hash)).is_ok());
        assert!(matches!(from_text(&text, Some("00")), Err(Error::Contract(_))));
        let bumped = text.replacen("NGATE 1 ", "NGATE 2 ", 1);
        assert!(matches!(from_text(&bumped, None), Err(Error::Contract(_))));
        let tampered = text.replacen("w19 1", "w99 1", 1);
        assert!(matches!(from_text(&tampered, None), Err(Error::Contract(_))));
        assert!(from_text("", None).is_err());
        assert!(from_text("hello", None).is_err());
    }
}
