//! Lexicon-driven valence scoring and weak labeling.
//!
//! Each sentiment-bearing token starts at its lexicon valence and is then
//! adjusted by four context rules, applied in order: capitalization emphasis,
//! preceding degree modifiers (boosters), negation in a short lookback
//! window, and a document-wide contrast shift around the first contrast
//! marker. Document score is the sum of adjusted valences plus exclamation
//! emphasis, squashed into `[-1, 1]` by `s / sqrt(s^2 + alpha)`.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use crate::corpus::{DocumentSet, NewsDocument, PolarityLabel};
use crate::error::{Error, Result};
use crate::tokenize::{tokenize, TokenSequence};

pub const MAX_VALENCE: f64 = 4.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ValenceLexicon {
    pub valences: HashMap<String, f64>,
    pub boosters: HashMap<String, f64>,
    pub negations: HashSet<String>,
    pub contrast_markers: HashSet<String>,
}

impl Default for ValenceLexicon {
    fn default() -> Self {
        ValenceLexicon {
            valences: HashMap::new(),
            boosters: HashMap::new(),
            negations: HashSet::new(),
            contrast_markers: ["but".to_string()].into_iter().collect(),
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Section {
    Valence,
    Booster,
    Negation,
    Contrast,
}

impl ValenceLexicon {
    pub fn is_empty(&self) -> bool {
        self.valences.is_empty()
    }

    /// Whether `token` carries its own valence. Negation words and boosters
    /// never do, even if they also appear among the valences.
    pub fn sentiment_of(&self, token: &str) -> Option<f64> {
        if self.negations.contains(token) || self.boosters.contains_key(token) {
            return None;
        }
        self.valences.get(token).copied()
    }

    pub fn insert_valence(&mut self, token: &str, valence: f64) -> Result<()> {
        if !valence.is_finite() || valence.abs() > MAX_VALENCE {
            return Err(Error::InvalidArgument(format!(
                "valence {valence} for {token:?} is outside [-4, 4]"
            )));
        }
        self.valences.insert(token.to_lowercase(), valence);
        Ok(())
    }

    pub fn insert_booster(&mut self, token: &str, increment: f64) -> Result<()> {
        if !increment.is_finite() || increment.abs() >= 1.0 {
            return Err(Error::InvalidArgument(format!(
                "booster increment {increment} for {token:?} must have magnitude below 1"
            )));
        }
        self.boosters.insert(token.to_lowercase(), increment);
        Ok(())
    }

    /// Parses the tab-separated lexicon layout.
    ///
    /// Rows are `token<TAB>value`; extra columns are ignored, so a reference
    /// lexicon with mean/std/ratings columns loads as-is. A line starting
    /// with `#BOOSTER`, `#NEGATION`, `#CONTRAST` or `#VALENCE` switches
    /// section; other lines starting with `#` are comments. Negation and
    /// contrast rows need only the token. A `#CONTRAST` section replaces the
    /// default marker set (`but`).
    pub fn parse(text: &str) -> Result<Self> {
        let mut lex = ValenceLexicon::default();
        let mut section = Section::Valence;
        let mut saw_contrast = false;
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim_start_matches('\u{feff}');
            if line.trim().is_empty() {
                continue;
            }
            if let Some(marker) = line.strip_prefix('#') {
                let name = marker.split_whitespace().next().unwrap_or("");
                section = match name {
                    "BOOSTER" => Section::Booster,
                    "NEGATION" => Section::Negation,
                    "CONTRAST" => {
                        if !saw_contrast {
                            lex.contrast_markers.clear();
                            saw_contrast = true;
                        }
                        Section::Contrast
                    }
                    "VALENCE" => Section::Valence,
                    _ => section,
                };
                continue;
            }
            let mut cols = line.split('\t');
            let token = cols.next().unwrap_or("").trim().to_lowercase();
            if token.is_empty() {
                return Err(Error::parse(line_no, "empty token"));
            }
            let number = |cols: &mut std::str::Split<'_, char>| -> Result<f64> {
                let field = cols
                    .next()
                    .ok_or_else(|| Error::parse(line_no, format!("{token:?} has no value")))?
                    .trim();
                field.parse::<f64>().map_err(|_| {
                    Error::parse(line_no, format!("non-numeric value {field:?} for {token:?}"))
                })
            };
            match section {
                Section::Valence => {
                    let v = number(&mut cols)?;
                    lex.insert_valence(&token, v)
                        .map_err(|e| Error::parse(line_no, e.to_string()))?;
                }
                Section::Booster => {
                    let v = number(&mut cols)?;
                    lex.insert_booster(&token, v)
                        .map_err(|e| Error::parse(line_no, e.to_string()))?;
                }
                Section::Negation => {
                    lex.negations.insert(token);
                }
                Section::Contrast => {
                    lex.contrast_markers.insert(token);
                }
            }
        }
        Ok(lex)
    }
}

pub fn load_lexicon(path: &Path) -> Result<ValenceLexicon> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ValenceLexicon::parse(&text)
}

/// Rule constants for the scorer.
#[derive(Debug, Clone, PartialEq)]
pub struct ScorerConfig {
    pub caps_boost: f64,
    pub negation_scalar: f64,
    pub negation_window: usize,
    /// Booster multipliers at distances 2 and 3 (distance 1 is unscaled).
    pub booster_decay: [f64; 2],
    pub exclamation_step: f64,
    pub max_exclamations: usize,
    pub but_before_weight: f64,
    pub but_after_weight: f64,
    pub alpha: f64,
    pub neutral_threshold: f64,
}

impl Default for ScorerConfig {
    fn default() -> Self {
        ScorerConfig {
            caps_boost: 0.733,
            negation_scalar: -0.74,
            negation_window: 3,
            booster_decay: [0.95, 0.90],
            exclamation_step: 0.292,
            max_exclamations: 4,
            but_before_weight: 0.5,
            but_after_weight: 1.5,
            alpha: 15.0,
            neutral_threshold: 0.05,
        }
    }
}

impl ScorerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.neutral_threshold > 0.0) {
            return Err(Error::InvalidArgument("neutral_threshold must be positive".into()));
        }
        if self.negation_window == 0 {
            return Err(Error::InvalidArgument("negation_window must be at least 1".into()));
        }
        if !(self.alpha > 0.0) {
            return Err(Error::InvalidArgument("alpha must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SentimentScore {
    pub pos: f64,
    pub neu: f64,
    pub neg: f64,
    pub compound: f64,
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Adjusted valence of every sentiment-bearing token, by position.
pub fn token_valences(
    seq: &TokenSequence,
    lex: &ValenceLexicon,
    cfg: &ScorerConfig,
) -> Vec<(usize, f64)> {
    let tokens = &seq.tokens;
    // Caps emphasis only counts when capitalization is mixed.
    let caps_differential = {
        let caps = tokens.iter().filter(|t| t.is_allcaps).count();
        caps > 0 && caps < tokens.len()
    };
    let contrast_at = tokens
        .iter()
        .position(|t| lex.contrast_markers.contains(&t.normalized));

    let mut out = Vec::new();
    for (i, tok) in tokens.iter().enumerate() {
        let Some(base) = lex.sentiment_of(&tok.normalized) else {
            continue;
        };
        let direction = sign(base);
        let mut v = base;
        if tok.is_allcaps && caps_differential {
            v += cfg.caps_boost * direction;
        }

        for distance in 1..=3usize.min(i) {
            let prev = &tokens[i - distance];
            if let Some(&increment) = lex.boosters.get(&prev.normalized) {
                let mut scalar = increment;
                if prev.is_allcaps && caps_differential {
                    scalar += cfg.caps_boost;
                }
                let decay = match distance {
                    1 => 1.0,
                    d => cfg.booster_decay[d - 2],
                };
                v += scalar * direction * decay;
            }
        }

        let window = cfg.negation_window.min(i);
        if tokens[i - window..i]
            .iter()
            .any(|t| lex.negations.contains(&t.normalized))
        {
            v *= cfg.negation_scalar;
        }

        if let Some(m) = contrast_at {
            if i < m {
                v *= cfg.but_before_weight;
            } else if i > m {
                v *= cfg.but_after_weight;
            }
        }
        out.push((tok.position, v));
    }
    out
}

/// Maps a raw sum to `[-1, 1]`.
pub fn normalize_compound(s: f64, alpha: f64) -> f64 {
    if s == 0.0 {
        return 0.0;
    }
    (s / (s * s + alpha).sqrt()).clamp(-1.0, 1.0)
}

pub fn score_sequence(seq: &TokenSequence, lex: &ValenceLexicon, cfg: &ScorerConfig) -> SentimentScore {
    let adjusted = token_valences(seq, lex, cfg);
    let mut s: f64 = adjusted.iter().map(|&(_, v)| v).sum();
    let emphasis = if s != 0.0 {
        cfg.exclamation_step * seq.exclamation_count.min(cfg.max_exclamations) as f64
    } else {
        0.0
    };
    s += sign(s) * emphasis;
    let compound = normalize_compound(s, cfg.alpha);

    let mut pos_mass = 0.0;
    let mut neg_mass = 0.0;
    let mut neu_mass = (seq.len() - adjusted.len()) as f64;
    for &(_, v) in &adjusted {
        if v > 0.0 {
            pos_mass += v + 1.0;
        } else if v < 0.0 {
            neg_mass += -v + 1.0;
        } else {
            neu_mass += 1.0;
        }
    }
    if s > 0.0 {
        pos_mass += emphasis;
    } else if s < 0.0 {
        neg_mass += emphasis;
    }
    let total = pos_mass + neg_mass + neu_mass;
    if total == 0.0 {
        return SentimentScore {
            pos: 0.0,
            neu: 0.0,
            neg: 0.0,
            compound,
        };
    }
    SentimentScore {
        pos: pos_mass / total,
        neu: neu_mass / total,
        neg: neg_mass / total,
        compound,
    }
}

pub fn score_text(text: &str, lex: &ValenceLexicon, cfg: &ScorerConfig) -> SentimentScore {
    score_sequence(&tokenize(text), lex, cfg)
}

pub fn score_document(doc: &NewsDocument, lex: &ValenceLexicon, cfg: &ScorerConfig) -> SentimentScore {
    score_text(&doc.text(), lex, cfg)
}

pub fn assign_weak_label(score: &SentimentScore, cfg: &ScorerConfig) -> PolarityLabel {
    if score.compound >= cfg.neutral_threshold {
        PolarityLabel::Positive
    } else if score.compound <= -cfg.neutral_threshold {
        PolarityLabel::Negative
    } else {
        PolarityLabel::Neutral
    }
}

/// Fills every document's weak label; gold labels are left alone.
pub fn annotate_corpus(docs: &DocumentSet, lex: &ValenceLexicon, cfg: &ScorerConfig) -> DocumentSet {
    use rayon::prelude::*;
    let documents = docs
        .documents
        .par_iter()
        .map(|doc| {
            let mut d = doc.clone();
            d.weak_label = Some(assign_weak_label(&score_document(doc, lex, cfg), cfg));
            d
        })
        .collect();
    DocumentSet {
        documents,
        provenance: docs.provenance.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lexicon() -> ValenceLexicon {
        ValenceLexicon::parse(
            "good\t1.9\t0.9\t[2, 2]\nbad\t-2.5\nterrible\t-2.1\nhappy\t2.7\n\
             #BOOSTER\nvery\t0.293\nslightly\t-0.293\n#NEGATION\nnot\nnever\n",
        )
        .unwrap()
    }

    #[test]
    fn parses_sections() {
        let lex = lexicon();
        assert_eq!(lex.valences["good"], 1.9);
        assert_eq!(lex.boosters["very"], 0.293);
        assert!(lex.negations.contains("never"));
        assert!(lex.contrast_markers.contains("but"));
    }

    #[test]
    fn out_of_range_valence() {
        let err = ValenceLexicon::parse("x\t4.5\n").unwrap_err();
        assert!(err.to_string().contains("\"x\""), "{err}");
        assert!(ValenceLexicon::parse("x\t-4.0\n").is_ok());
    }

    #[test]
    fn non_numeric_valence() {
        assert!(matches!(
            ValenceLexicon::parse("a\t1\nx\tlots\n"),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn booster_magnitude_checked() {
        assert!(ValenceLexicon::parse("#BOOSTER\nhuge\t1.2\n").is_err());
    }

    #[test]
    fn contrast_section_replaces_default() {
        let lex = ValenceLexicon::parse("#CONTRAST\nhowever\n").unwrap();
        assert!(lex.contrast_markers.contains("however"));
        assert!(!lex.contrast_markers.contains("but"));
    }

    #[test]
    fn empty_lexicon_is_neutral() {
        let lex = ValenceLexicon::parse("").unwrap();
        let cfg = ScorerConfig::default();
        let s = score_text("GREAT news everyone!!!", &lex, &cfg);
        assert_eq!(s.compound, 0.0);
        assert_eq!(s.neu, 1.0);
        assert_eq!(assign_weak_label(&s, &cfg), PolarityLabel::Neutral);
    }

    #[test]
    fn negation_word_wins_over_valence() {
        let mut lex = lexicon();
        lex.insert_valence("not", -1.0).unwrap();
        assert_eq!(lex.sentiment_of("not"), None);
    }

    #[test]
    fn rule_examples() {
        let lex = lexicon();
        let cfg = ScorerConfig::default();
        assert_eq!(token_valences(&tokenize("good"), &lex, &cfg), vec![(0, 1.9)]);
        assert_eq!(token_valences(&tokenize("not good"), &lex, &cfg), vec![(1, 1.9 * -0.74)]);
        assert_eq!(
            token_valences(&tokenize("GOOD news"), &lex, &cfg),
            vec![(0, 1.9 + 0.733)]
        );
        // All-caps throughout: no emphasis.
        assert_eq!(token_valences(&tokenize("GOOD NEWS"), &lex, &cfg), vec![(0, 1.9)]);
    }

    #[test]
    fn negation_window_is_three_tokens() {
        let lex = lexicon();
        let cfg = ScorerConfig::default();
        assert_eq!(token_valences(&tokenize("not a b good"), &lex, &cfg)[0].1, 1.9 * -0.74);
        assert_eq!(token_valences(&tokenize("not a b c good"), &lex, &cfg)[0].1, 1.9);
    }

    #[test]
    fn compound_examples() {
        let lex = lexicon();
        let cfg = ScorerConfig::default();
        let good = score_text("good", &lex, &cfg);
        assert!((good.compound - 0.4404).abs() < 5e-5, "{}", good.compound);
        assert_eq!(assign_weak_label(&good, &cfg), PolarityLabel::Positive);
        let not_good = score_text("not good", &lex, &cfg);
        assert!((not_good.compound + 0.3412).abs() < 5e-5, "{}", not_good.compound);
        assert_eq!(assign_weak_label(&not_good, &cfg), PolarityLabel::Negative);
        let empty = score_text("", &lex, &cfg);
        assert_eq!((empty.compound, empty.pos, empty.neg, empty.neu), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn cancelling_masses_are_neutral() {
        let mut lex = lexicon();
        lex.insert_valence("win", 2.5).unwrap();
        let cfg = ScorerConfig::default();
        let s = score_text("win bad!!", &lex, &cfg);
        assert_eq!(s.compound, 0.0);
        assert_eq!(assign_weak_label(&s, &cfg), PolarityLabel::Neutral);
        assert!((s.pos - s.neg).abs() < 1e-12);
    }

    #[test]
    fn label_thresholds() {
        let cfg = ScorerConfig::default();
        let at = |c| SentimentScore { pos: 0.0, neu: 1.0, neg: 0.0, compound: c };
        assert_eq!(assign_weak_label(&at(0.4404), &cfg), PolarityLabel::Positive);
        assert_eq!(assign_weak_label(&at(0.05), &cfg), PolarityLabel::Positive);
        assert_eq!(assign_weak_label(&at(0.0), &cfg), PolarityLabel::Neutral);
        assert_eq!(assign_weak_label(&at(-0.05), &cfg), PolarityLabel::Negative);
        assert_eq!(assign_weak_label(&at(-0.3412), &cfg), PolarityLabel::Negative);
    }

    #[test]
    fn annotate_keeps_order_and_gold() {
        let lex = lexicon();
        let cfg = ScorerConfig::default();
        let mut docs = vec![
            NewsDocument::new("a", "", "happy day"),
            NewsDocument::new("b", "", "the weather report"),
            NewsDocument::new("c", "", "bad"),
        ];
        docs[2].gold_label = Some(PolarityLabel::Positive);
        let out = annotate_corpus(&DocumentSet::new(docs).unwrap(), &lex, &cfg);
        let labels: Vec<_> = out.iter().map(|d| d.weak_label.unwrap()).collect();
        assert_eq!(
            labels,
            [PolarityLabel::Positive, PolarityLabel::Neutral, PolarityLabel::Negative]
        );
        assert_eq!(out.documents[2].gold_label, Some(PolarityLabel::Positive));
    }

    fn word() -> impl Strategy<Value = &'static str> {
        prop::sample::select(vec![
            "good", "bad", "terrible", "happy", "very", "slightly", "not", "never", "but", "the",
            "GOOD", "BAD", "VERY", "news", "city",
        ])
    }

    proptest! {
        #[test]
        fn proportions_and_range(words in proptest::collection::vec(word(), 0..25), bangs in 0usize..6) {
            let lex = lexicon();
            let cfg = ScorerConfig::default();
            let text = format!("{}{}", words.join(" "), "!".repeat(bangs));
            let s = score_text(&text, &lex, &cfg);
            prop_assert!((-1.0..=1.0).contains(&s.compound));
            let total = s.pos + s.neu + s.neg;
            if words.is_empty() {
                prop_assert_eq!(total, 0.0);
            } else {
                prop_assert!((total - 1.0).abs() < 1e-9);
            }
            let raw: f64 = token_valences(&tokenize(&text), &lex, &cfg).iter().map(|p| p.1).sum();
            prop_assert_eq!(sign(s.compound), sign(raw));
        }

        #[test]
        fn appending_positive_never_lowers(words in proptest::collection::vec(prop::sample::select(vec!["good", "bad", "terrible", "happy", "very", "slightly", "the", "news"]), 0..20), extra in prop::sample::select(vec!["good", "happy"])) {
            let lex = lexicon();
            let cfg = ScorerConfig::default();
            let before = words.join(" ");
            let after = format!("{before} {extra}");
            prop_assert!(score_text(&after, &lex, &cfg).compound >= score_text(&before, &lex, &cfg).compound);
        }

        #[test]
        fn compound_strictly_increasing(a in -50.0f64..50.0, b in -50.0f64..50.0) {
            prop_assume!(a < b);
            prop_assert!(normalize_compound(a, 15.0) < normalize_compound(b, 15.0) || (b - a) < 1e-9);
        }

        #[test]
        fn negation_prefix_scales_exactly(w in prop::sample::select(vec!["good", "bad", "terrible", "happy"]), neg in prop::sample::select(vec!["not", "never"])) {
            let lex = lexicon();
            let cfg = ScorerConfig::default();
            let plain = token_valences(&tokenize(w), &lex, &cfg)[0].1;
            let negated = token_valences(&tokenize(&format!("{neg} {w}")), &lex, &cfg)[0].1;
            prop_assert_eq!(negated, plain * cfg.negation_scalar);
            prop_assert!(sign(negated) == -sign(plain));
        }

        #[test]
        fn label_depends_only_on_threshold_crossings(c in -1.0f64..1.0, scale in 0.1f64..10.0) {
            let cfg = ScorerConfig::default();
            let t = cfg.neutral_threshold;
            // Monotone map that fixes +-t: stretch the three regions separately.
            let remap = |x: f64| if x >= t { t + (x - t) * scale } else if x <= -t { -t + (x + t) * scale } else { x / scale.max(1.0) };
            let at = |c| SentimentScore { pos: 0.0, neu: 1.0, neg: 0.0, compound: c };
            prop_assert_eq!(assign_weak_label(&at(c), &cfg), assign_weak_label(&at(remap(c)), &cfg));
        }
    }
}
