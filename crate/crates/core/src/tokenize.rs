//! Whitespace and edge-punctuation tokenizer.
//!
//! Tokens keep internal apostrophes and hyphens (`don't`, `long-term`); any
//! run of non-alphanumeric characters at either edge is stripped. `!` and
//! `?` characters removed this way are counted for the whole document so the
//! scorer can apply its punctuation rule.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    /// Token text with edge punctuation removed, original case.
    pub surface: String,
    pub normalized: String,
    pub is_allcaps: bool,
    pub position: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub tokens: Vec<Token>,
    pub exclamation_count: usize,
    pub question_count: usize,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn normalized(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(|t| t.normalized.as_str())
    }
}

fn is_allcaps(surface: &str) -> bool {
    let mut letters = 0usize;
    for c in surface.chars().filter(|c| c.is_alphabetic()) {
        if !c.is_uppercase() {
            return false;
        }
        letters += 1;
    }
    letters >= 2
}

fn strip_edges(s: &str) -> (&str, &str, &str) {
    let start = s
        .char_indices()
        .find(|(_, c)| c.is_alphanumeric())
        .map(|(i, _)| i)
        .unwrap_or(s.len());
    let end = s
        .char_indices()
        .rev()
        .find(|(_, c)| c.is_alphanumeric())
        .map(|(i, c)| i + c.len_utf8())
        .unwrap_or(start);
    (&s[..start], &s[start..end], &s[end..])
}

pub fn tokenize(text: &str) -> TokenSequence {
    let mut seq = TokenSequence::default();
    for chunk in text.split_whitespace() {
        let (lead, core, trail) = strip_edges(chunk);
        for c in lead.chars().chain(trail.chars()) {
            match c {
                '!' => seq.exclamation_count += 1,
                '?' => seq.question_count += 1,
                _ => {}
            }
        }
        if core.is_empty() {
            continue;
        }
        // Lowercasing can expose non-alphanumeric edges (combining marks),
        // so strip once more to keep the normalized form a fixed point.
        let lowered = core.to_lowercase();
        let (_, normalized, _) = strip_edges(&lowered);
        if normalized.is_empty() {
            continue;
        }
        seq.tokens.push(Token {
            surface: core.to_string(),
            normalized: normalized.to_string(),
            is_allcaps: is_allcaps(core),
            position: seq.tokens.len(),
        });
    }
    seq
}
