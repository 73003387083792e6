//! Token vocabulary with reserved padding and out-of-vocabulary slots.

use std::collections::HashMap;

use sha2::{Digest, Sha256};

use crate::corpus::DocumentSet;
use crate::error::{Error, Result};
use crate::tokenize::tokenize;

pub const PAD_INDEX: usize = 0;
pub const OOV_INDEX: usize = 1;
/// First index handed to a real token.
pub const FIRST_TOKEN_INDEX: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Vocabulary {
    tokens: Vec<String>,
    frequencies: Vec<usize>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Rebuilds a vocabulary from tokens listed in index order (starting at
    /// index 2) with their frequencies.
    pub fn from_parts(tokens: Vec<String>, frequencies: Vec<usize>) -> Result<Self> {
        if tokens.len() != frequencies.len() {
            return Err(Error::DimensionMismatch {
                expected: tokens.len(),
                found: frequencies.len(),
            });
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() || t.contains(char::is_whitespace) {
                return Err(Error::InvalidArgument(format!("invalid vocabulary token {t:?}")));
            }
            if index.insert(t.clone(), i + FIRST_TOKEN_INDEX).is_some() {
                return Err(Error::InvalidArgument(format!("token {t:?} listed twice")));
            }
        }
        Ok(Vocabulary {
            tokens,
            frequencies,
            index,
        })
    }

    /// Number of real tokens (reserved slots excluded).
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Width of index space including the two reserved slots.
    pub fn dimension(&self) -> usize {
        self.tokens.len() + FIRST_TOKEN_INDEX
    }

    pub fn lookup(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(OOV_INDEX)
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, index: usize) -> Option<&str> {
        index
            .checked_sub(FIRST_TOKEN_INDEX)
            .and_then(|i| self.tokens.get(i))
            .map(String::as_str)
    }

    pub fn frequency(&self, token: &str) -> Option<usize> {
        self.get(token).map(|i| self.frequencies[i - FIRST_TOKEN_INDEX])
    }

    /// (token, frequency) pairs in index order.
    pub fn entries(&self) -> impl Iterator<Item = (&str, usize)> {
        self.tokens
            .iter()
            .map(String::as_str)
            .zip(self.frequencies.iter().copied())
    }

    /// Hex SHA-256 prefix over the tokens in index order; two vocabularies
    /// with the same hash map every token to the same index.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for t in &self.tokens {
            hasher.update(t.as_bytes());
            hasher.update(b"\n");
        }
        hasher.finalize()[..16]
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// Counts normalized tokens over the whole corpus and keeps those seen at
/// least `min_count` times, most frequent first, ties broken by token text.
pub fn build_vocabulary(docs: &DocumentSet, min_count: usize) -> Result<Vocabulary> {
    if min_count == 0 {
        return Err(Error::InvalidArgument("min_count must be at least 1".into()));
    }
    let mut counts: HashMap<String, usize> = HashMap::new();
    for doc in docs.iter() {
        for tok in tokenize(&doc.text()).tokens {
            *counts.entry(tok.normalized).or_default() += 1;
        }
    }
    let mut kept: Vec<(String, usize)> = counts.into_iter().filter(|&(_, c)| c >= min_count).collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let (tokens, frequencies) = kept.into_iter().unzip();
    Vocabulary::from_parts(tokens, frequencies)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::NewsDocument;
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
    fn frequency_order_with_tie_break() {
        let v = build_vocabulary(&corpus(&["a b a", "b c"]), 1).unwrap();
        assert_eq!(v.lookup("a"), 2);
        assert_eq!(v.lookup("b"), 3);
        assert_eq!(v.lookup("c"), 4);
        assert_eq!(v.frequency("a"), Some(2));
        assert_eq!(v.frequency("c"), Some(1));
        assert_eq!(v.dimension(), 5);
    }

    #[test]
    fn min_count_cut() {
        let v = build_vocabulary(&corpus(&["a b a", "b c"]), 2).unwrap();
        assert_eq!(v.entries().map(|e| e.0).collect::<Vec<_>>(), ["a", "b"]);
        assert_eq!(v.lookup("c"), OOV_INDEX);
    }

    #[test]
    fn empty_corpus() {
        let v = build_vocabulary(&DocumentSet::empty(), 1).unwrap();
        assert_eq!(v.len(), 0);
        assert_eq!(v.dimension(), 2);
        assert_eq!(v.lookup("anything"), OOV_INDEX);
        assert_eq!(v.token(0), None);
        assert_eq!(v.token(1), None);
    }

    #[test]
    fn hash_depends_on_order() {
        let a = Vocabulary::from_parts(vec!["x".into(), "y".into()], vec![1, 1]).unwrap();
        let b = Vocabulary::from_parts(vec!["y".into(), "x".into()], vec![1, 1]).unwrap();
        assert_ne!(a.content_hash(), b.content_hash());
        assert_eq!(a.content_hash().len(), 32);
    }

    proptest! {
        #[test]
        fn frequencies_sum_to_token_count(texts in proptest::collection::vec("[a-e ]{0,30}", 1..10)) {
            let refs: Vec<&str> = texts.iter().map(String::as_str).filter(|t| !t.trim().is_empty()).collect();
            let docs = corpus(&refs);
            let v = build_vocabulary(&docs, 1).unwrap();
            let total: usize = docs.iter().map(|d| tokenize(&d.text()).len()).sum();
            prop_assert_eq!(v.entries().map(|e| e.1).sum::<usize>(), total);
            for (i, (tok, _)) in v.entries().enumerate() {
                prop_assert_eq!(v.lookup(tok), i + FIRST_TOKEN_INDEX);
                prop_assert_eq!(v.token(i + FIRST_TOKEN_INDEX), Some(tok));
            }
        }
    }
}
