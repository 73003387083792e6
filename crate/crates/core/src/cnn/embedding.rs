use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::vocab::{Vocabulary, PAD_INDEX};

/// Half-width of the uniform range for vectors the file does not supply.
pub const INIT_RANGE: f64 = 0.25;

/// Word vectors aligned with a [`Vocabulary`]: row 0 is padding (all zero),
/// row 1 the out-of-vocabulary vector, rows 2.. the vocabulary tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub dim: usize,
    pub vectors: Vec<f64>,
    pub trainable: bool,
}

impl EmbeddingTable {
    /// Every non-padding row drawn from uniform(-0.25, 0.25).
    pub fn random(rows: usize, dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut vectors = vec![0.0; rows * dim];
        for v in vectors.iter_mut().skip(dim) {
            *v = rng.gen_range(-INIT_RANGE..INIT_RANGE);
        }
        EmbeddingTable {
            dim,
            vectors,
            trainable: false,
        }
    }

    pub fn rows(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.vectors.len() / self.dim
        }
    }

    pub fn row(&self, index: usize) -> &[f64] {
        &self.vectors[index * self.dim..(index + 1) * self.dim]
    }

    pub fn row_mut(&mut self, index: usize) -> &mut [f64] {
        &mut self.vectors[index * self.dim..(index + 1) * self.dim]
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.vectors.len() % self.dim != 0 {
            return Err(Error::InvalidArgument("embedding table shape is inconsistent".into()));
        }
        if self.row(PAD_INDEX).iter().any(|&v| v != 0.0) {
            return Err(Error::Contract("padding embedding row must be zero".into()));
        }
        if self.vectors.iter().any(|v| !v.is_finite()) {
            return Err(Error::Contract("embedding table holds non-finite values".into()));
        }
        Ok(())
    }
}

/// Reads `token v1 ... v_dim` lines (GloVe text layout).
///
/// Vocabulary tokens found in the file take the file vector (first
/// occurrence wins); every other non-padding row keeps its seeded random
/// initialization. A first line whose width differs from `dim` is reported
/// as a dimension mismatch; a later line of a different width as a parse
/// error on that line.
pub fn load_pretrained_embeddings(
    path: &Path,
    vocab: &Vocabulary,
    dim: usize,
    seed: u64,
) -> Result<EmbeddingTable> {
    if dim == 0 {
        return Err(Error::InvalidArgument("embedding dimension must be positive".into()));
    }
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut table = EmbeddingTable::random(vocab.dimension(), dim, seed);
    let mut filled = HashSet::new();
    let mut first = true;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let mut fields = line.split_whitespace();
        let Some(token) = fields.next() else { continue };
        let values: Vec<&str> = fields.collect();
        if values.len() != dim {
            if first {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: values.len(),
                });
            }
            return Err(Error::parse(
                i + 1,
                format!("expected {dim} values after {token:?}, found {}", values.len()),
            ));
        }
        first = false;
        let Some(idx) = vocab.get(token) else { continue };
        if !filled.insert(idx) {
            continue;
        }
        let row = table.row_mut(idx);
        for (slot, raw) in row.iter_mut().zip(&values) {
            *slot = raw
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::parse(i + 1, format!("bad vector component {raw:?}")))?;
        }
    }
    Ok(table)
}
