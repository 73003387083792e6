//! News documents, corpus files, and train/test partitioning.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

/// Output of the gate classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateLabel {
    Positive,
    NonPositive,
}

impl GateLabel {
    pub fn name(self) -> &'static str {
        match self {
            GateLabel::Positive => "positive",
            GateLabel::NonPositive => "non_positive",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PolarityLabel {
    Negative = -1,
    Neutral = 0,
    Positive = 1,
}

impl PolarityLabel {
    pub const ALL: [PolarityLabel; 3] = [
        PolarityLabel::Positive,
        PolarityLabel::Negative,
        PolarityLabel::Neutral,
    ];

    pub fn value(self) -> i8 {
        self as i8
    }

    pub fn from_value(v: i64) -> Result<Self> {
        match v {
            1 => Ok(PolarityLabel::Positive),
            -1 => Ok(PolarityLabel::Negative),
            0 => Ok(PolarityLabel::Neutral),
            other => Err(Error::UnknownLabel(other.to_string())),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PolarityLabel::Positive => "positive",
            PolarityLabel::Negative => "negative",
            PolarityLabel::Neutral => "neutral",
        }
    }

    fn from_json(v: &Value) -> Result<Option<Self>> {
        match v {
            Value::Null => Ok(None),
            Value::Number(n) => match n.as_i64() {
                Some(i) => Self::from_value(i).map(Some),
                None => Err(Error::UnknownLabel(n.to_string())),
            },
            Value::String(s) if s.trim().is_empty() => Ok(None),
            Value::String(s) => s.parse().map(Some),
            other => Err(Error::UnknownLabel(other.to_string())),
        }
    }
}

impl FromStr for PolarityLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "1" | "+1" => Ok(PolarityLabel::Positive),
            "-1" => Ok(PolarityLabel::Negative),
            "0" => Ok(PolarityLabel::Neutral),
            other => Err(Error::UnknownLabel(other.to_string())),
        }
    }
}

impl fmt::Display for PolarityLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NewsDocument {
    pub id: String,
    pub title: String,
    pub body: String,
    pub source: Option<String>,
    pub gold_label: Option<PolarityLabel>,
    pub weak_label: Option<PolarityLabel>,
}

impl NewsDocument {
    pub fn new(id: impl Into<String>, title: impl Into<String>, body: impl Into<String>) -> Self {
        NewsDocument {
            id: id.into(),
            title: title.into(),
            body: body.into(),
            source: None,
            gold_label: None,
            weak_label: None,
        }
    }

    /// Title and body joined by a single space; either may be empty.
    pub fn text(&self) -> String {
        match (self.title.is_empty(), self.body.is_empty()) {
            (true, _) => self.body.clone(),
            (_, true) => self.title.clone(),
            _ => format!("{} {}", self.title, self.body),
        }
    }

    /// Whether this document is in the positive class of the binary gate
    /// task, using the gold label when present and the weak label otherwise.
    pub fn is_positive(&self) -> Option<bool> {
        self.gold_label
            .or(self.weak_label)
            .map(|l| l == PolarityLabel::Positive)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    Jsonl,
    Tsv,
}

impl CorpusFormat {
    pub fn name(self) -> &'static str {
        match self {
            CorpusFormat::Jsonl => "jsonl",
            CorpusFormat::Tsv => "tsv",
        }
    }
}

impl FromStr for CorpusFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jsonl" => Ok(CorpusFormat::Jsonl),
            "tsv" => Ok(CorpusFormat::Tsv),
            other => Err(Error::Usage(format!("unknown corpus format {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub path: String,
    pub format: CorpusFormat,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DocumentSet {
    pub documents: Vec<NewsDocument>,
    pub provenance: Option<Provenance>,
}

impl DocumentSet {
    /// Builds a set, checking id uniqueness and that no document is empty.
    pub fn new(documents: Vec<NewsDocument>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(documents.len());
        for doc in &documents {
            if doc.id.is_empty() {
                return Err(Error::InvalidArgument("document id is empty".into()));
            }
            if doc.title.is_empty() && doc.body.is_empty() {
                return Err(Error::InvalidArgument(format!(
                    "document {:?} has neither title nor body",
                    doc.id
                )));
            }
            if !seen.insert(doc.id.as_str()) {
                return Err(Error::DuplicateId(doc.id.clone()));
            }
        }
        Ok(DocumentSet {
            documents,
            provenance: None,
        })
    }

    pub fn empty() -> Self {
        DocumentSet {
            documents: Vec::new(),
            provenance: None,
        }
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, NewsDocument> {
        self.documents.iter()
    }

    /// Subset in the given index order. Indices must be in range.
    pub fn select(&self, indices: &[usize]) -> DocumentSet {
        DocumentSet {
            documents: indices.iter().map(|&i| self.documents[i].clone()).collect(),
            provenance: self.provenance.clone(),
        }
    }
}

#[derive(Deserialize)]
struct JsonRecord {
    id: Option<Value>,
    #[serde(default)]
    title: Option<String>,
    #[serde(default)]
    body: Option<String>,
    #[serde(default)]
    source: Option<String>,
    #[serde(default)]
    label: Option<Value>,
    #[serde(default)]
    weak_label: Option<Value>,
}

#[derive(Serialize)]
struct JsonRecordOut<'a> {
    id: &'a str,
    title: &'a str,
    body: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    source: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    label: Option<i8>,
    #[serde(skip_serializing_if = "Option::is_none")]
    weak_label: Option<i8>,
}

/// Parses a single jsonl record. Line numbers in errors are 1-based.
pub fn parse_json_record(line: &str, line_no: usize) -> Result<NewsDocument> {
    let rec: JsonRecord =
        serde_json::from_str(line).map_err(|e| Error::parse(line_no, e.to_string()))?;
    document_from_record(rec, line_no)
}

/// Same as [`parse_json_record`] for an already-parsed JSON value.
pub fn document_from_value(value: &Value, line_no: usize) -> Result<NewsDocument> {
    let rec: JsonRecord = serde_json::from_value(value.clone())
        .map_err(|e| Error::parse(line_no, e.to_string()))?;
    document_from_record(rec, line_no)
}

fn document_from_record(rec: JsonRecord, line_no: usize) -> Result<NewsDocument> {
    let id = match rec.id {
        Some(Value::String(s)) if !s.is_empty() => s,
        Some(Value::Number(n)) => n.to_string(),
        _ => return Err(Error::parse(line_no, "record has no id")),
    };
    let title = rec.title.unwrap_or_default();
    let body = rec.body.unwrap_or_default();
    if title.is_empty() && body.is_empty() {
        return Err(Error::parse(
            line_no,
            format!("record {id:?} has neither title nor body"),
        ));
    }
    let label = |v: Option<Value>| -> Result<Option<PolarityLabel>> {
        match v {
            None => Ok(None),
            Some(v) => PolarityLabel::from_json(&v).map_err(|e| Error::parse(line_no, e.to_string())),
        }
    };
    Ok(NewsDocument {
        id,
        title,
        body,
        source: rec.source,
        gold_label: label(rec.label)?,
        weak_label: label(rec.weak_label)?,
    })
}

pub fn document_to_json(doc: &NewsDocument) -> String {
    let rec = JsonRecordOut {
        id: &doc.id,
        title: &doc.title,
        body: &doc.body,
        source: doc.source.as_deref(),
        label: doc.gold_label.map(PolarityLabel::value),
        weak_label: doc.weak_label.map(PolarityLabel::value),
    };
    serde_json::to_string(&rec).expect("record serialization cannot fail")
}

fn check_unique(docs: &[NewsDocument]) -> Result<()> {
    let mut seen = HashSet::with_capacity(docs.len());
    for d in docs {
        if !seen.insert(d.id.as_str()) {
            return Err(Error::DuplicateId(d.id.clone()));
        }
    }
    Ok(())
}

pub fn parse_jsonl(text: &str) -> Result<Vec<NewsDocument>> {
    let mut docs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        docs.push(parse_json_record(line, i + 1)?);
    }
    check_unique(&docs)?;
    Ok(docs)
}

const TSV_REQUIRED: [&str; 4] = ["id", "title", "body", "label"];

pub fn parse_tsv(text: &str) -> Result<Vec<NewsDocument>> {
    let mut lines = text.lines().enumerate();
    let header: Vec<&str> = match lines.next() {
        Some((_, h)) => h.trim_start_matches('\u{feff}').split('\t').collect(),
        None => return Ok(Vec::new()),
    };
    let col = |name: &str| header.iter().position(|h| h.trim() == name);
    for name in TSV_REQUIRED {
        if col(name).is_none() {
            return Err(Error::parse(1, format!("tsv header lacks column {name:?}")));
        }
    }
    let (id_c, title_c, body_c, label_c) = (
        col("id").unwrap(),
        col("title").unwrap(),
        col("body").unwrap(),
        col("label").unwrap(),
    );
    let (source_c, weak_c) = (col("source"), col("weak_label"));

    let mut docs = Vec::new();
    for (i, line) in lines {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != header.len() {
            return Err(Error::parse(
                line_no,
                format!("expected {} columns, found {}", header.len(), fields.len()),
            ));
        }
        let label = |c: Option<usize>| -> Result<Option<PolarityLabel>> {
            match c.map(|c| fields[c].trim()) {
                None | Some("") => Ok(None),
                Some(v) => v
                    .parse()
                    .map(Some)
                    .map_err(|e: Error| Error::parse(line_no, e.to_string())),
            }
        };
        let id = fields[id_c].to_string();
        if id.is_empty() {
            return Err(Error::parse(line_no, "record has no id"));
        }
        let doc = NewsDocument {
            id,
            title: fields[title_c].to_string(),
            body: fields[body_c].to_string(),
            source: source_c
                .map(|c| fields[c].to_string())
                .filter(|s| !s.is_empty()),
            gold_label: label(Some(label_c))?,
            weak_label: label(weak_c)?,
        };
        if doc.title.is_empty() && doc.body.is_empty() {
            return Err(Error::parse(
                line_no,
                format!("record {:?} has neither title nor body", doc.id),
            ));
        }
        docs.push(doc);
    }
    check_unique(&docs)?;
    Ok(docs)
}

pub fn load_corpus(path: &Path, format: CorpusFormat) -> Result<DocumentSet> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let documents = match format {
        CorpusFormat::Jsonl => parse_jsonl(&text)?,
        CorpusFormat::Tsv => parse_tsv(&text)?,
    };
    Ok(DocumentSet {
        documents,
        provenance: Some(Provenance {
            path: path.display().to_string(),
            format,
        }),
    })
}

pub fn write_jsonl<W: Write>(mut out: W, docs: &DocumentSet) -> std::io::Result<()> {
    for doc in docs.iter() {
        writeln!(out, "{}", document_to_json(doc))?;
    }
    Ok(())
}

fn write_tsv(docs: &DocumentSet) -> Result<String> {
    let with_source = docs.iter().any(|d| d.source.is_some());
    let with_weak = docs.iter().any(|d| d.weak_label.is_some());
    let mut header = TSV_REQUIRED.to_vec();
    if with_source {
        header.push("source");
    }
    if with_weak {
        header.push("weak_label");
    }
    let mut out = header.join("\t");
    out.push('\n');
    let label = |l: Option<PolarityLabel>| l.map(|l| l.to_string()).unwrap_or_default();
    for d in docs.iter() {
        let mut fields = vec![
            d.id.clone(),
            d.title.clone(),
            d.body.clone(),
            label(d.gold_label),
        ];
        if with_source {
            fields.push(d.source.clone().unwrap_or_default());
        }
        if with_weak {
            fields.push(label(d.weak_label));
        }
        if let Some(f) = fields.iter().find(|f| f.contains(['\t', '\n', '\r'])) {
            return Err(Error::InvalidArgument(format!(
                "document {:?}: field {f:?} cannot be written as tsv",
                d.id
            )));
        }
        out.push_str(&fields.join("\t"));
        out.push('\n');
    }
    Ok(out)
}

pub fn save_corpus(path: &Path, docs: &DocumentSet, format: CorpusFormat) -> Result<()> {
    let bytes = match format {
        CorpusFormat::Jsonl => {
            let mut buf = Vec::new();
            write_jsonl(&mut buf, docs).expect("writing to memory");
            buf
        }
        CorpusFormat::Tsv => write_tsv(docs)?.into_bytes(),
    };
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Number of test items for a split of `n` items.
fn test_size(n: usize, test_fraction: f64) -> Result<usize> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "test fraction {test_fraction} is outside (0, 1)"
        )));
    }
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "cannot split {n} document(s)"
        )));
    }
    let n_test = (test_fraction * n as f64).round() as usize;
    if n_test == 0 || n_test == n {
        return Err(Error::InvalidArgument(format!(
            "test fraction {test_fraction} leaves an empty train or test side for {n} documents"
        )));
    }
    Ok(n_test)
}

/// Splits `0..n` into (train, test) index lists, each in ascending order.
///
/// With `strata`, the test quota is apportioned across strata by largest
/// remainder (ties to the smaller stratum key) and drawn uniformly inside
/// each stratum.
pub fn split_indices<S: Ord + Clone>(
    n: usize,
    test_fraction: f64,
    seed: u64,
    strata: Option<&[S]>,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let n_test = test_size(n, test_fraction)?;
    if let Some(s) = strata {
        if s.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: s.len(),
            });
        }
    }
    let mut groups: BTreeMap<S, Vec<usize>> = BTreeMap::new();
    if let Some(s) = strata {
        for (i, key) in s.iter().enumerate() {
            groups.entry(key.clone()).or_default().push(i);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut test = Vec::with_capacity(n_test);
    if groups.is_empty() {
        let mut all: Vec<usize> = (0..n).collect();
        all.shuffle(&mut rng);
        test.extend_from_slice(&all[..n_test]);
    } else {
        let mut quotas: Vec<(usize, f64)> = groups
            .values()
            .map(|g| {
                let ideal = n_test as f64 * g.len() as f64 / n as f64;
                (ideal.floor() as usize, ideal - ideal.floor())
            })
            .collect();
        let assigned: usize = quotas.iter().map(|q| q.0).sum();
        let mut order: Vec<usize> = (0..quotas.len()).collect();
        order.sort_by(|&a, &b| quotas[b].1.total_cmp(&quotas[a].1).then(a.cmp(&b)));
        for &g in order.iter().take(n_test - assigned) {
            quotas[g].0 += 1;
        }
        for (members, (quota, _)) in groups.values_mut().zip(&quotas) {
            members.shuffle(&mut rng);
            test.extend_from_slice(&members[..*quota]);
        }
    }
    test.sort_unstable();
    let mut in_test = vec![false; n];
    for &i in &test {
        in_test[i] = true;
    }
    let train = (0..n).filter(|&i| !in_test[i]).collect();
    Ok((train, test))
}

/// Deterministic (train, test) split; stratified by weak label when every
/// document carries one.
pub fn train_test_split(
    docs: &DocumentSet,
    test_fraction: f64,
    seed: u64,
) -> Result<(DocumentSet, DocumentSet)> {
    let labels: Option<Vec<PolarityLabel>> = docs.iter().map(|d| d.weak_label).collect();
    let (train, test) = split_indices(docs.len(), test_fraction, seed, labels.as_deref())?;
    Ok((docs.select(&train), docs.select(&test)))
}
