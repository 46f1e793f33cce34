//! Pretrained and random word-embedding initializations.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Vocabulary, OOV_ID, PAD_ID};
use crate::error::{Error, Result};

/// Half-width of the uniform distribution used for random rows.
pub const RANDOM_INIT_SCALE: f64 = 0.25;

pub const DEFAULT_EMBED_DIM: usize = 300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    Random,
    Pretrained,
}

impl std::fmt::Display for InitKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            InitKind::Random => "random",
            InitKind::Pretrained => "pretrained",
        })
    }
}

/// Row-major `rows × dim` matrix. Row 0 is the padding row and stays zero.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    pub values: Vec<f64>,
    pub rows: usize,
    pub dim: usize,
    pub kind: InitKind,
    /// Fraction of non-reserved vocabulary tokens found in the vector file.
    pub coverage: f64,
    pub warnings: Vec<String>,
}

impl EmbeddingMatrix {
    pub fn row(&self, index: usize) -> &[f64] {
        &self.values[index * self.dim..(index + 1) * self.dim]
    }
}

fn fill_uniform(values: &mut [f64], rng: &mut ChaCha8Rng) {
    let dist = Uniform::new_inclusive(-RANDOM_INIT_SCALE, RANDOM_INIT_SCALE);
    for v in values {
        *v = dist.sample(rng);
    }
}

pub fn random_embeddings(vocab: &Vocabulary, dim: usize, seed: u64) -> EmbeddingMatrix {
    assert!(dim >= 1, "embedding dimension must be positive");
    let rows = vocab.len();
    let mut values = vec![0.0; rows * dim];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    fill_uniform(&mut values[dim..], &mut rng);
    EmbeddingMatrix {
        values,
        rows,
        dim,
        kind: InitKind::Random,
        coverage: 1.0,
        warnings: Vec::new(),
    }
}

/// Loads a `<token> <v1> ... <vd>` text file. Tokens found in the file are
/// copied verbatim; the rest (and the OOV row) fall back to the random
/// distribution under `fallback_seed`.
pub fn load_pretrained(
    path: &Path,
    vocab: &Vocabulary,
    dim: usize,
    fallback_seed: u64,
) -> Result<EmbeddingMatrix> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);

    let rows = vocab.len();
    let mut base = random_embeddings(vocab, dim, fallback_seed);
    let mut found = vec![false; rows];

    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let mut fields = line.split_whitespace();
        let Some(token) = fields.next() else { continue };
        let rest: Vec<&str> = fields.collect();
        if line_no == 1
            && rest.len() == 1
            && token.parse::<usize>().is_ok()
            && rest[0].parse::<usize>().is_ok()
        {
            let header_dim: usize = rest[0].parse().unwrap();
            if header_dim != dim {
                return Err(Error::VectorDimension {
                    path: path.to_path_buf(),
                    line: line_no,
                    expected: dim,
                    found: header_dim,
                });
            }
            continue;
        }
        if rest.len() != dim {
            return Err(Error::VectorDimension {
                path: path.to_path_buf(),
                line: line_no,
                expected: dim,
                found: rest.len(),
            });
        }
        let Some(index) = vocab.get(token) else {
            continue;
        };
        if found[index] {
            continue;
        }
        let row = &mut base.values[index * dim..(index + 1) * dim];
        for (slot, field) in row.iter_mut().zip(&rest) {
            let v: f64 = field.parse().map_err(|_| Error::VectorParse {
                path: path.to_path_buf(),
                line: line_no,
                message: format!("`{field}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::VectorParse {
                    path: path.to_path_buf(),
                    line: line_no,
                    message: format!("non-finite value `{field}`"),
                });
            }
            *slot = v;
        }
        found[index] = true;
    }

    let total = rows.saturating_sub(2);
    let hits = found.iter().filter(|&&f| f).count();
    base.coverage = if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    };
    base.kind = InitKind::Pretrained;
    if hits == 0 {
        let msg = format!(
            "{}: no vocabulary token found in vector file",
            path.display()
        );
        log::warn!("{msg}");
        base.warnings.push(msg);
    }
    debug_assert!(!found[PAD_ID as usize] && !found[OOV_ID as usize]);
    Ok(base)
}
