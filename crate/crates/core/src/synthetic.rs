//! Seeded synthetic news corpus with a matching valence lexicon, for demos,
//! fixtures and end-to-end checks.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{DocumentSet, NewsDocument, PolarityLabel};
use crate::seed;
use crate::valence::ValenceLexicon;

pub const POSITIVE_WORDS: &[(&str, f64)] = &[
    ("gain", 2.0),
    ("rally", 1.8),
    ("praise", 2.4),
    ("win", 2.8),
    ("growth", 1.6),
    ("hope", 1.9),
    ("celebrate", 2.7),
    ("success", 2.9),
    ("recover", 1.5),
    ("award", 2.5),
    ("thrive", 2.6),
    ("rescue", 2.1),
];

pub const NEGATIVE_WORDS: &[(&str, f64)] = &[
    ("crash", -2.1),
    ("loss", -1.9),
    ("fear", -2.2),
    ("attack", -2.6),
    ("crisis", -2.5),
    ("scandal", -2.3),
    ("collapse", -2.4),
    ("death", -2.9),
    ("fraud", -2.8),
    ("injury", -1.8),
    ("protest", -1.2),
    ("flood", -1.6),
];

pub const BOOSTERS: &[(&str, f64)] = &[("very", 0.293), ("extremely", 0.293), ("slightly", -0.293)];

pub const NEGATIONS: &[&str] = &["not", "never", "no"];

pub const FILLER: &[&str] = &[
    "city", "council", "report", "monday", "official", "market", "school", "river", "budget",
    "minister", "station", "county", "week", "company", "board", "plan", "road", "hospital",
    "team", "season", "village", "court", "vote", "bank", "price", "farm", "harbor", "police",
    "museum", "street", "weather", "energy", "water", "factory", "student", "local", "national",
    "annual", "morning", "evening", "district", "mayor", "committee", "festival", "league",
    "railway", "airport", "library", "park", "bridge",
];

/// Lexicon covering the synthetic vocabulary.
pub fn lexicon() -> ValenceLexicon {
    let mut lex = ValenceLexicon::default();
    for &(w, v) in POSITIVE_WORDS.iter().chain(NEGATIVE_WORDS) {
        lex.insert_valence(w, v).expect("valence in range");
    }
    for &(w, b) in BOOSTERS {
        lex.insert_booster(w, b).expect("increment in range");
    }
    for w in NEGATIONS {
        lex.negations.insert(w.to_string());
    }
    lex
}

/// The same lexicon in the text layout read by `ValenceLexicon::parse`.
pub fn lexicon_text() -> String {
    let mut out = String::from("#BOOSTER\n");
    for (w, b) in BOOSTERS {
        out.push_str(&format!("{w}\t{b}\n"));
    }
    out.push_str("#NEGATION\n");
    for w in NEGATIONS {
        out.push_str(&format!("{w}\n"));
    }
    out.push_str("#VALENCE\n");
    for (w, v) in POSITIVE_WORDS.iter().chain(NEGATIVE_WORDS) {
        out.push_str(&format!("{w}\t{v}\n"));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub n_docs: usize,
    /// Class shares in the order positive, negative, neutral.
    pub shares: [f64; 3],
    /// Probability of a keyword in each body slot of a polar document.
    pub keyword_rate: f64,
    /// Probability that a document gets one opposite-polarity keyword.
    pub confounder_rate: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_docs: 1000,
            shares: [0.4, 0.35, 0.25],
            keyword_rate: 0.25,
            confounder_rate: 0.3,
            seed: 7,
        }
    }
}

fn pick<'a>(rng: &mut ChaCha8Rng, words: &[(&'a str, f64)]) -> &'a str {
    words.choose(rng).expect("non-empty word list").0
}

fn filler(rng: &mut ChaCha8Rng) -> &'static str {
    FILLER.choose(rng).expect("non-empty filler")
}

fn class_of(rng: &mut ChaCha8Rng, shares: &[f64; 3]) -> PolarityLabel {
    let total: f64 = shares.iter().sum();
    let u = rng.gen::<f64>() * total;
    if u < shares[0] {
        PolarityLabel::Positive
    } else if u < shares[0] + shares[1] {
        PolarityLabel::Negative
    } else {
        PolarityLabel::Neutral
    }
}

/// Document `i`'s words are drawn from its own stream, so a corpus is a
/// prefix of any larger corpus with the same seed.
pub fn generate(cfg: &SyntheticConfig) -> DocumentSet {
    let docs = (0..cfg.n_docs)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(cfg.seed, &[i as u64]));
            let label = class_of(&mut rng, &cfg.shares);
            let (own, other): (&[(&str, f64)], &[(&str, f64)]) = match label {
                PolarityLabel::Positive => (POSITIVE_WORDS, NEGATIVE_WORDS),
                PolarityLabel::Negative => (NEGATIVE_WORDS, POSITIVE_WORDS),
                PolarityLabel::Neutral => (&[], &[]),
            };
            let title_len = rng.gen_range(4..8);
            let body_len = rng.gen_range(15..31);
            let mut title: Vec<&str> = (0..title_len).map(|_| filler(&mut rng)).collect();
            let mut body: Vec<&str> = (0..body_len)
                .map(|_| {
                    if !own.is_empty() && rng.gen::<f64>() < cfg.keyword_rate {
                        pick(&mut rng, own)
                    } else {
                        filler(&mut rng)
                    }
                })
                .collect();
            if !own.is_empty() {
                // Guarantee polarity: two keywords in the body, one in the title.
                for _ in 0..2 {
                    let at = rng.gen_range(0..body.len());
                    body[at] = pick(&mut rng, own);
                }
                let at = rng.gen_range(0..title.len());
                title[at] = pick(&mut rng, own);
            }
            if rng.gen::<f64>() < cfg.confounder_rate {
                let pool = if other.is_empty() {
                    if rng.gen::<bool>() {
                        POSITIVE_WORDS
                    } else {
                        NEGATIVE_WORDS
                    }
                } else {
                    other
                };
                let at = rng.gen_range(0..body.len());
                body[at] = pick(&mut rng, pool);
            }
            let mut doc = NewsDocument::new(format!("syn-{i:05}"), title.join(" "), body.join(" "));
            doc.source = Some("synthetic".into());
            doc.gold_label = Some(label);
            doc
        })
        .collect();
    DocumentSet::new(docs).expect("generated ids are unique")
}

/// Documents built from negative keywords, optional boosters and at most
/// one weaker positive keyword; no negations or contrast markers.
pub fn negative_mass_corpus(n_docs: usize, seed: u64) -> DocumentSet {
    let docs = (0..n_docs)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(seed, &[i as u64]));
            let mut words: Vec<String> = (0..rng.gen_range(8..20)).map(|_| filler(&mut rng).to_string()).collect();
            for _ in 0..rng.gen_range(2..5) {
                let mut w = pick(&mut rng, NEGATIVE_WORDS).to_string();
                if rng.gen::<f64>() < 0.3 {
                    w = format!("{} {w}", BOOSTERS[0].0);
                }
                if rng.gen::<f64>() < 0.2 {
                    w = w.to_uppercase();
                }
                let at = rng.gen_range(0..=words.len());
                words.insert(at, w);
            }
            if rng.gen::<bool>() {
                let at = rng.gen_range(0..=words.len());
                words.insert(at, "recover".to_string());
            }
            let bangs = "!".repeat(rng.gen_range(0..3));
            let mut doc = NewsDocument::new(format!("neg-{i:05}"), "", format!("{}{bangs}", words.join(" ")));
            doc.gold_label = Some(PolarityLabel::Negative);
            doc
        })
        .collect();
    DocumentSet::new(docs).expect("generated ids are unique")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::valence::{annotate_corpus, ScorerConfig};

    #[test]
    fn deterministic_and_prefix_stable() {
        let small = generate(&SyntheticConfig {
            n_docs: 20,
            ..SyntheticConfig::default()
        });
        let big = generate(&SyntheticConfig::default());
        assert_eq!(small.documents[..], big.documents[..20]);
        assert_eq!(big, generate(&SyntheticConfig::default()));
    }

    #[test]
    fn lexicon_text_parses_to_lexicon() {
        assert_eq!(ValenceLexicon::parse(&lexicon_text()).unwrap(), lexicon());
    }

    #[test]
    fn weak_labels_mostly_agree_with_construction() {
        let docs = generate(&SyntheticConfig {
            n_docs: 300,
            ..SyntheticConfig::default()
        });
        let annotated = annotate_corpus(&docs, &lexicon(), &ScorerConfig::default());
        let agree = annotated
            .iter()
            .filter(|d| d.gold_label == d.weak_label)
            .count();
        assert!(agree as f64 / 300.0 > 0.7, "{agree}");
    }
}
