//! Writes a synthetic labeled corpus and its lexicon:
//!
//!     cargo run --example make_synthetic -- <out-dir> [n_docs] [seed]

use std::path::PathBuf;

use newsgate::corpus::{save_corpus, CorpusFormat};
use newsgate::synthetic::{generate, lexicon_text, SyntheticConfig};

fn main() -> newsgate::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "synthetic".into()));
    let mut cfg = SyntheticConfig::default();
    if let Some(n) = args.next() {
        cfg.n_docs = n.parse().map_err(|_| newsgate::Error::Usage(format!("bad n_docs {n:?}")))?;
    }
    if let Some(s) = args.next() {
        cfg.seed = s.parse().map_err(|_| newsgate::Error::Usage(format!("bad seed {s:?}")))?;
    }
    std::fs::create_dir_all(&dir).map_err(|e| newsgate::Error::io(&dir, e))?;
    save_corpus(&dir.join("corpus.jsonl"), &generate(&cfg), CorpusFormat::Jsonl)?;
    let lex = dir.join("lexicon.txt");
    std::fs::write(&lex, lexicon_text()).map_err(|e| newsgate::Error::io(&lex, e))?;
    println!("wrote {} documents to {}", cfg.n_docs, dir.display());
    Ok(())
}
