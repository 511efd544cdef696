use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;

use super::pad_positions;
use crate::corpus::{TokenId, Vocabulary};
use crate::error::{CorpusError, LayerError};
use crate::tensor::{Matrix, SharedTensor};

/// Trainable `V × d` lookup table, one row per token id.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingMatrix {
    pub table: SharedTensor,
}

/// Sparse embedding gradient: only rows of looked-up tokens are present.
pub type EmbeddingGrad = BTreeMap<TokenId, Vec<f64>>;

impl EmbeddingMatrix {
    pub fn new(table: SharedTensor) -> Self {
        EmbeddingMatrix { table }
    }

    pub fn uniform<R: Rng>(rng: &mut R, vocab: usize, dim: usize, bound: f64) -> Self {
        let values = (0..vocab * dim)
            .map(|_| rng.gen_range(-bound..=bound))
            .collect();
        EmbeddingMatrix::new(SharedTensor::from_vec(vocab, dim, values))
    }

    pub fn vocab_size(&self) -> usize {
        self.table.rows()
    }

    pub fn dim(&self) -> usize {
        self.table.cols()
    }

    /// Looks up `tokens` and right-pads with zero rows up to `min_len`.
    pub fn embed(&self, tokens: &[TokenId], min_len: usize) -> Result<Matrix, LayerError> {
        if tokens.is_empty() {
            return Err(LayerError::EmptySequence);
        }
        let d = self.dim();
        let mut out = Matrix::zeros(tokens.len(), d);
        for (j, &t) in tokens.iter().enumerate() {
            if t as usize >= self.vocab_size() {
                return Err(LayerError::TokenOutOfRange {
                    id: t,
                    vocab: self.vocab_size(),
                });
            }
            self.table.read_row(t as usize, out.row_mut(j));
        }
        Ok(pad_positions(&out, min_len))
    }

    /// Accumulates the gradient of the looked-up rows. Padding rows of
    /// `grad` beyond `tokens.len()` are ignored.
    pub fn backward(&self, tokens: &[TokenId], grad: &Matrix, out: &mut EmbeddingGrad) {
        let d = self.dim();
        for (j, &t) in tokens.iter().enumerate() {
            let row = out.entry(t).or_insert_with(|| vec![0.0; d]);
            for (acc, g) in row.iter_mut().zip(grad.row(j)) {
                *acc += g;
            }
        }
    }
}

/// Word vectors read from the common text interchange format: an optional
/// `count dim` header line followed by `token v1 v2 ... vd` lines.
#[derive(Clone, Debug, Default)]
pub struct PretrainedVectors {
    pub dim: usize,
    pub vectors: Vec<(String, Vec<f64>)>,
}

impl PretrainedVectors {
    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CorpusError> {
        let mut out = PretrainedVectors::default();
        for (i, line) in text.lines().enumerate() {
            let mut parts = line.split_whitespace();
            let Some(token) = parts.next() else { continue };
            let values: Result<Vec<f64>, _> = parts.map(str::parse::<f64>).collect();
            let malformed = |reason: &str| CorpusError::Malformed {
                file: "embeddings".into(),
                line: i + 1,
                reason: reason.into(),
            };
            let values = values.map_err(|_| malformed("non-numeric vector component"))?;
            if i == 0 && values.len() == 1 && token.parse::<usize>().is_ok() {
                // `count dim` header
                continue;
            }
            if values.is_empty() {
                return Err(malformed("token without vector"));
            }
            if out.dim == 0 {
                out.dim = values.len();
            } else if values.len() != out.dim {
                return Err(malformed("inconsistent vector dimension"));
            }
            out.vectors.push((token.to_string(), values));
        }
        Ok(out)
    }

    /// Copies vectors of known tokens into `emb`. Returns how many rows
    /// were overwritten.
    pub fn apply(&self, vocab: &Vocabulary, emb: &EmbeddingMatrix) -> Result<usize, LayerError> {
        if !self.vectors.is_empty() && self.dim != emb.dim() {
            return Err(LayerError::ShapeMismatch(format!(
                "pretrained vectors have dimension {}, model expects {}",
                self.dim,
                emb.dim()
            )));
        }
        let mut hits = 0;
        for (token, values) in &self.vectors {
            if let Some(id) = vocab.id(token) {
                for (k, &v) in values.iter().enumerate() {
                    emb.table.set(id as usize, k, v);
                }
                hits += 1;
            }
        }
        Ok(hits)
    }
}
