//! Sparse vectors, document-term matrices and tf-idf weighting.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::corpus::DocumentSet;
use crate::error::{Error, Result};
use crate::tokenize::tokenize;
use crate::vocab::{Vocabulary, FIRST_TOKEN_INDEX};

/// Sparse real vector with strictly increasing indices and no stored zeros.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseVector {
    dim: usize,
    entries: Vec<(usize, f64)>,
}

impl SparseVector {
    pub fn new(dim: usize, entries: Vec<(usize, f64)>) -> Result<Self> {
        let mut prev = None;
        for &(i, v) in &entries {
            if i >= dim {
                return Err(Error::InvalidArgument(format!(
                    "index {i} out of range for dimension {dim}"
                )));
            }
            if prev.is_some_and(|p| p >= i) {
                return Err(Error::InvalidArgument("indices must be strictly increasing".into()));
            }
            if v == 0.0 || !v.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "entry {i} holds {v}; stored values must be finite and nonzero"
                )));
            }
            prev = Some(i);
        }
        Ok(SparseVector { dim, entries })
    }

    pub fn zeros(dim: usize) -> Self {
        SparseVector {
            dim,
            entries: Vec::new(),
        }
    }

    pub fn from_dense(values: &[f64]) -> Self {
        SparseVector {
            dim: values.len(),
            entries: values
                .iter()
                .enumerate()
                .filter(|(_, &v)| v != 0.0)
                .map(|(i, &v)| (i, v))
                .collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn get(&self, index: usize) -> f64 {
        self.entries
            .binary_search_by_key(&index, |e| e.0)
            .map(|k| self.entries[k].1)
            .unwrap_or(0.0)
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for &(i, v) in &self.entries {
            out[i] = v;
        }
        out
    }

    pub fn sum(&self) -> f64 {
        self.entries.iter().map(|e| e.1).sum()
    }

    pub fn squared_norm(&self) -> f64 {
        self.entries.iter().map(|e| e.1 * e.1).sum()
    }

    pub fn check_dim(&self, expected: usize) -> Result<()> {
        if self.dim != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: self.dim,
            });
        }
        Ok(())
    }

    /// Dot product with a dense vector of the same dimension.
    pub fn dot_dense(&self, dense: &[f64]) -> f64 {
        debug_assert_eq!(dense.len(), self.dim);
        self.entries.iter().map(|&(i, v)| v * dense[i]).sum()
    }

    pub fn dot(&self, other: &SparseVector) -> f64 {
        let (a, b) = (&self.entries, &other.entries);
        let (mut i, mut j, mut acc) = (0, 0, 0.0);
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    acc += a[i].1 * b[j].1;
                    i += 1;
                    j += 1;
                }
            }
        }
        acc
    }

    /// `||self - other||^2`, summed over the union of supports.
    pub fn squared_distance(&self, other: &SparseVector) -> f64 {
        let (a, b) = (&self.entries, &other.entries);
        let (mut i, mut j, mut acc) = (0, 0, 0.0);
        while i < a.len() || j < b.len() {
            let d = match (a.get(i), b.get(j)) {
                (Some(x), Some(y)) if x.0 == y.0 => {
                    i += 1;
                    j += 1;
                    x.1 - y.1
                }
                (Some(x), Some(y)) if x.0 < y.0 => {
                    i += 1;
                    x.1
                }
                (Some(x), None) => {
                    i += 1;
                    x.1
                }
                (_, Some(y)) => {
                    j += 1;
                    y.1
                }
                (None, None) => unreachable!(),
            };
            acc += d * d;
        }
        acc
    }

    /// Maps each stored value; results equal to zero are dropped.
    pub fn map_values(&self, mut f: impl FnMut(usize, f64) -> f64) -> SparseVector {
        SparseVector {
            dim: self.dim,
            entries: self
                .entries
                .iter()
                .map(|&(i, v)| (i, f(i, v)))
                .filter(|e| e.1 != 0.0)
                .collect(),
        }
    }

    /// Appends an entry whose index must exceed every stored index.
    pub fn push(&mut self, index: usize, value: f64) {
        assert!(index < self.dim, "index {index} out of range");
        assert!(self.entries.last().is_none_or(|e| e.0 < index), "indices must increase");
        if value != 0.0 {
            self.entries.push((index, value));
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Weighting {
    Count,
    Tfidf,
}

impl Weighting {
    pub fn name(self) -> &'static str {
        match self {
            Weighting::Count => "count",
            Weighting::Tfidf => "tfidf",
        }
    }
}

impl FromStr for Weighting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "count" => Ok(Weighting::Count),
            "tfidf" => Ok(Weighting::Tfidf),
            other => Err(Error::Usage(format!("unknown weighting {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DocumentTermMatrix {
    pub rows: Vec<SparseVector>,
    pub dim: usize,
    pub weighting: Weighting,
    pub vocab_hash: String,
}

impl DocumentTermMatrix {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    /// Coordinate text dump: a `%%dtm <rows> <cols> <weighting>` header then
    /// one `row col value` line per stored entry, zero-based.
    pub fn to_coordinate_text(&self) -> String {
        let mut out = format!("%%dtm {} {} {}\n", self.rows.len(), self.dim, self.weighting.name());
        for (r, row) in self.rows.iter().enumerate() {
            for &(c, v) in row.entries() {
                writeln!(out, "{r} {c} {v:e}").unwrap();
            }
        }
        out
    }

    pub fn from_coordinate_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or_else(|| Error::parse(1, "missing %%dtm header"))?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 4 || parts[0] != "%%dtm" {
            return Err(Error::parse(1, "malformed %%dtm header"));
        }
        let parse_usize = |s: &str, line: usize| {
            s.parse::<usize>()
                .map_err(|_| Error::parse(line, format!("bad integer {s:?}")))
        };
        let n_rows = parse_usize(parts[1], 1)?;
        let dim = parse_usize(parts[2], 1)?;
        let weighting: Weighting = parts[3].parse()?;
        let mut rows = vec![SparseVector::zeros(dim); n_rows];
        for (i, line) in lines {
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 3 {
                return Err(Error::parse(i + 1, "expected `row col value`"));
            }
            let (r, c) = (parse_usize(f[0], i + 1)?, parse_usize(f[1], i + 1)?);
            let v: f64 = f[2]
                .parse()
                .map_err(|_| Error::parse(i + 1, format!("bad value {:?}", f[2])))?;
            if r >= n_rows || c >= dim {
                return Err(Error::parse(i + 1, "coordinate out of range"));
            }
            let row = &mut rows[r];
            if row.entries.last().is_some_and(|e| e.0 >= c) || v == 0.0 {
                return Err(Error::parse(i + 1, "entries must be nonzero and ordered"));
            }
            row.entries.push((c, v));
        }
        Ok(DocumentTermMatrix {
            rows,
            dim,
            weighting,
            vocab_hash: String::new(),
        })
    }
}

/// Count vector of one text; out-of-vocabulary tokens are dropped.
pub fn count_vector(text: &str, vocab: &Vocabulary) -> SparseVector {
    let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
    for tok in tokenize(text).tokens {
        if let Some(idx) = vocab.get(&tok.normalized) {
            *counts.entry(idx).or_default() += 1.0;
        }
    }
    SparseVector {
        dim: vocab.dimension(),
        entries: counts.into_iter().collect(),
    }
}

pub fn build_dtm(docs: &DocumentSet, vocab: &Vocabulary) -> DocumentTermMatrix {
    use rayon::prelude::*;
    let rows = docs
        .documents
        .par_iter()
        .map(|d| count_vector(&d.text(), vocab))
        .collect();
    DocumentTermMatrix {
        rows,
        dim: vocab.dimension(),
        weighting: Weighting::Count,
        vocab_hash: vocab.content_hash(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdfTable {
    pub idf: Vec<f64>,
    pub n_docs: usize,
}

impl IdfTable {
    /// Smoothed idf: `ln((1 + n) / (1 + df)) + 1`.
    pub fn from_document_frequencies(df: &[usize], n_docs: usize) -> Self {
        let idf = df
            .iter()
            .map(|&d| ((1.0 + n_docs as f64) / (1.0 + d as f64)).ln() + 1.0)
            .collect();
        IdfTable { idf, n_docs }
    }

    pub fn weight(&self, counts: &SparseVector, l2_normalize: bool) -> SparseVector {
        let v = counts.map_values(|i, c| c * self.idf[i]);
        if !l2_normalize {
            return v;
        }
        let norm = v.squared_norm().sqrt();
        if norm == 0.0 {
            v
        } else {
            v.map_values(|_, x| x / norm)
        }
    }
}

pub fn fit_idf(dtm: &DocumentTermMatrix) -> Result<IdfTable> {
    if dtm.weighting != Weighting::Count {
        return Err(Error::InvalidArgument("idf must be fitted on count weights".into()));
    }
    let mut df = vec![0usize; dtm.dim];
    for row in &dtm.rows {
        for &(i, _) in row.entries() {
            df[i] += 1;
        }
    }
    let mut table = IdfTable::from_document_frequencies(&df, dtm.rows.len());
    // Reserved slots never hold entries; pin them for a tidy table.
    for slot in table.idf.iter_mut().take(FIRST_TOKEN_INDEX) {
        *slot = 0.0;
    }
    Ok(table)
}

pub fn apply_tfidf(dtm: &DocumentTermMatrix, idf: &IdfTable, l2_normalize: bool) -> Result<DocumentTermMatrix> {
    if dtm.weighting != Weighting::Count {
        return Err(Error::InvalidArgument("tf-idf expects count weights".into()));
    }
    if idf.idf.len() != dtm.dim {
        return Err(Error::DimensionMismatch {
            expected: dtm.dim,
            found: idf.idf.len(),
        });
    }
    Ok(DocumentTermMatrix {
        rows: dtm.rows.iter().map(|r| idf.weight(r, l2_normalize)).collect(),
        dim: dtm.dim,
        weighting: Weighting::Tfidf,
        vocab_hash: dtm.vocab_hash.clone(),
    })
}

/// Fitted text-to-vector mapping: vocabulary counts, optionally tf-idf
/// weighted and l2 normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct Featurizer {
    pub vocab: Vocabulary,
    pub weighting: Weighting,
    /// Present exactly when `weighting` is tf-idf.
    pub idf: Option<IdfTable>,
    pub l2_normalize: bool,
}

impl Featurizer {
    /// Fits idf (when requested) on `docs`.
    pub fn fit(docs: &DocumentSet, vocab: Vocabulary, weighting: Weighting, l2_normalize: bool) -> Result<Self> {
        let idf = match weighting {
            Weighting::Count => None,
            Weighting::Tfidf => Some(fit_idf(&build_dtm(docs, &vocab))?),
        };
        Ok(Featurizer {
            vocab,
            weighting,
            idf,
            l2_normalize,
        })
    }

    pub fn dim(&self) -> usize {
        self.vocab.dimension()
    }

    pub fn vector(&self, text: &str) -> SparseVector {
        let counts = count_vector(text, &self.vocab);
        match &self.idf {
            Some(idf) => idf.weight(&counts, self.l2_normalize),
            None if self.l2_normalize => {
                let norm = counts.squared_norm().sqrt();
                if norm == 0.0 {
                    counts
                } else {
                    counts.map_values(|_, x| x / norm)
                }
            }
            None => counts,
        }
    }

    pub fn transform(&self, docs: &DocumentSet) -> Vec<SparseVector> {
        use rayon::prelude::*;
        docs.documents.par_iter().map(|d| self.vector(&d.text())).collect()
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.idf, self.weighting) {
            (None, Weighting::Count) => Ok(()),
            (Some(t), Weighting::Tfidf) if t.idf.len() == self.dim() => Ok(()),
            (Some(t), Weighting::Tfidf) => Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: t.idf.len(),
            }),
            _ => Err(Error::Contract("idf table does not match the weighting".into())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::NewsDocument;
    use crate::vocab::build_vocabulary;
    use proptest::prelude::*;

    fn corpus(texts: &[&str]) -> DocumentSet {
        DocumentSet::new(
            texts
                .iter()
                .enumerate()
                .map(|(i, t)| NewsDocument::new(i.to_string(), "", *t))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn featurizer_matches_matrix_path() {
        let docs = corpus(&["a b a", "b c", "c c d"]);
        let vocab = build_vocabulary(&docs, 1).unwrap();
        let dtm = build_dtm(&docs, &vocab);
        let expected = apply_tfidf(&dtm, &fit_idf(&dtm).unwrap(), true).unwrap();
        let f = Featurizer::fit(&docs, vocab.clone(), Weighting::Tfidf, true).unwrap();
        f.validate().unwrap();
        assert_eq!(f.transform(&docs), expected.rows);

        let counts = Featurizer::fit(&docs, vocab, Weighting::Count, false).unwrap();
        assert_eq!(counts.transform(&docs), dtm.rows);
        let unit = Featurizer { l2_normalize: true, ..counts }.vector("a a b b");
        assert!((unit.squared_norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn counts_by_hand() {
        let docs = corpus(&["a b a", "b c"]);
        let vocab = build_vocabulary(&docs, 1).unwrap();
        let dtm = build_dtm(&docs, &vocab);
        let (a, b, c) = (vocab.lookup("a"), vocab.lookup("b"), vocab.lookup("c"));
        assert_eq!(dtm.rows[0].entries(), &[(a, 2.0), (b, 1.0)]);
        assert_eq!(dtm.rows[1].entries(), &[(b, 1.0), (c, 1.0)]);
        assert_eq!(dtm.dim, 5);
    }

    #[test]
    fn empty_and_oov_rows() {
        let vocab = build_vocabulary(&corpus(&["a b"]), 1).unwrap();
        assert_eq!(count_vector("", &vocab).nnz(), 0);
        assert_eq!(count_vector("zzz yyy", &vocab).nnz(), 0);
    }

    #[test]
    fn idf_values() {
        let docs = corpus(&["a b", "a c", "a"]);
        let vocab = build_vocabulary(&docs, 1).unwrap();
        let mut dtm = build_dtm(&docs, &vocab);
        let idf = fit_idf(&dtm).unwrap();
        assert_eq!(idf.idf[vocab.lookup("a")], 1.0);
        assert!((idf.idf[vocab.lookup("b")] - ((4.0f64 / 2.0).ln() + 1.0)).abs() < 1e-15);
        // A column nobody uses.
        dtm.rows.iter_mut().for_each(|r| r.entries.retain(|e| e.0 != vocab.lookup("c")));
        let idf = fit_idf(&dtm).unwrap();
        assert!((idf.idf[vocab.lookup("c")] - 2.386294361).abs() < 1e-9);

        let single = corpus(&["x"]);
        let v1 = build_vocabulary(&single, 1).unwrap();
        assert_eq!(fit_idf(&build_dtm(&single, &v1)).unwrap().idf[2], 1.0);
    }

    #[test]
    fn tfidf_normalization() {
        let table = IdfTable { idf: vec![0.0, 0.0, 1.0], n_docs: 1 };
        let row = SparseVector::new(3, vec![(2, 2.0)]).unwrap();
        assert_eq!(table.weight(&row, true).entries(), &[(2, 1.0)]);
        assert_eq!(table.weight(&row, false).entries(), &[(2, 2.0)]);
        assert_eq!(table.weight(&SparseVector::zeros(3), true).nnz(), 0);
    }

    #[test]
    fn rejects_tfidf_input() {
        let docs = corpus(&["a"]);
        let vocab = build_vocabulary(&docs, 1).unwrap();
        let dtm = build_dtm(&docs, &vocab);
        let idf = fit_idf(&dtm).unwrap();
        let tf = apply_tfidf(&dtm, &idf, true).unwrap();
        assert!(fit_idf(&tf).is_err());
        assert!(apply_tfidf(&tf, &idf, true).is_err());
    }

    #[test]
    fn sparse_vector_contract() {
        assert!(SparseVector::new(3, vec![(1, 1.0), (1, 2.0)]).is_err());
        assert!(SparseVector::new(3, vec![(3, 1.0)]).is_err());
        assert!(SparseVector::new(3, vec![(0, 0.0)]).is_err());
        let u = SparseVector::new(4, vec![(0, 1.0), (2, 3.0)]).unwrap();
        let v = SparseVector::new(4, vec![(2, 1.0), (3, -2.0)]).unwrap();
        assert_eq!(u.dot(&v), 3.0);
        assert_eq!(u.squared_distance(&v), 1.0 + 4.0 + 4.0);
        assert_eq!(u.get(2), 3.0);
        assert_eq!(u.get(1), 0.0);
    }

    #[test]
    fn coordinate_dump_round_trip() {
        let docs = corpus(&["a b a", "b c", "zzz"]);
        let vocab = build_vocabulary(&docs, 1).unwrap();
        let dtm = build_dtm(&docs, &vocab);
        let text = dtm.to_coordinate_text();
        assert!(text.starts_with("%%dtm 3 6 count\n"));
        let mut back = DocumentTermMatrix::from_coordinate_text(&text).unwrap();
        back.vocab_hash = dtm.vocab_hash.clone();
        assert_eq!(back, dtm);
    }

    proptest! {
        #[test]
        fn matches_dense_brute_force(texts in proptest::collection::vec(proptest::collection::vec(0usize..50, 0..30), 1..20)) {
            let strings: Vec<String> = texts
                .iter()
                .map(|t| t.iter().map(|w| format!("w{w}")).collect::<Vec<_>>().join(" "))
                .collect();
            let docs: Vec<NewsDocument> = strings
                .iter()
                .enumerate()
                .map(|(i, t)| NewsDocument::new(i.to_string(), "t", t.clone()))
                .collect();
            let docs = DocumentSet::new(docs).unwrap();
            let vocab = build_vocabulary(&docs, 1).unwrap();
            let dtm = build_dtm(&docs, &vocab);

            // Dense oracle: count every (doc, token) pair directly.
            for (r, words) in texts.iter().enumerate() {
                let mut dense = vec![0.0; vocab.dimension()];
                dense[vocab.lookup("t")] += 1.0;
                for w in words {
                    dense[vocab.lookup(&format!("w{w}"))] += 1.0;
                }
                prop_assert_eq!(&dtm.rows[r].to_dense(), &dense);
                prop_assert_eq!(dtm.rows[r].sum(), (words.len() + 1) as f64);
            }
        }

        #[test]
        fn tfidf_rows_unit_norm(texts in proptest::collection::vec("[a-h ]{0,40}", 1..15)) {
            let refs: Vec<&str> = texts.iter().map(String::as_str).filter(|t| !t.trim().is_empty()).collect();
            prop_assume!(!refs.is_empty());
            let docs = corpus(&refs);
            let vocab = build_vocabulary(&docs, 1).unwrap();
            let dtm = build_dtm(&docs, &vocab);
            let tf = apply_tfidf(&dtm, &fit_idf(&dtm).unwrap(), true).unwrap();
            for row in &tf.rows {
                if row.nnz() > 0 {
                    prop_assert!((row.squared_norm().sqrt() - 1.0).abs() < 1e-12);
                }
            }
        }
    }
}
