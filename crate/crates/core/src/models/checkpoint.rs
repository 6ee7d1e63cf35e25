//! Versioned JSON checkpoint container.
//!
//! ```text
//! {
//!   "format": "poltweet-checkpoint",
//!   "version": 1,
//!   "architecture": {"kind": "cnn", "hyperparameters": {"widths": [3,4,5], "filters": 100, "dropout": 0.5}},
//!   "embedding_dim": 300,
//!   "max_len": 40,
//!   "vocabulary_size": 12345,
//!   "vocabulary_sha256": "<hex>",
//!   "tensors": [{"name": "conv3.weight", "shape": [3,300,100], "data": [...]}, ...],
//!   "embeddings": null
//! }
//! ```
//!
//! `embeddings` holds the full row-major matrix when embeddings were
//! fine-tuned, `null` otherwise. Tensor order and names follow
//! [`Architecture::shapes`]. Floats are written in shortest round-trip form,
//! so reading a checkpoint back yields bit-identical weights.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{Architecture, Model, ParamSet, Tensor};
use crate::embeddings::{EmbeddingMatrix, Vocabulary};
use crate::error::{Error, Result};

pub const FORMAT: &str = "poltweet-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingBlob {
    pub rows: usize,
    pub dim: usize,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub architecture: Architecture,
    pub embedding_dim: usize,
    pub max_len: usize,
    pub vocabulary_size: usize,
    pub vocabulary_sha256: String,
    pub tensors: Vec<Tensor>,
    pub embeddings: Option<EmbeddingBlob>,
}

impl Checkpoint {
    pub fn new(model: &Model, max_len: usize, vocab: &Vocabulary, fine_tuned: Option<&EmbeddingMatrix>) -> Self {
        Checkpoint {
            format: FORMAT.to_string(),
            version: VERSION,
            architecture: model.arch.clone(),
            embedding_dim: model.dim,
            max_len,
            vocabulary_size: vocab.len(),
            vocabulary_sha256: vocab.fingerprint(),
            tensors: model.params.tensors.clone(),
            embeddings: fine_tuned.map(|m| EmbeddingBlob { rows: m.rows(), dim: m.dim(), data: m.as_slice().to_vec() }),
        }
    }

    pub fn write<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer(out, self)?;
        Ok(())
    }

    /// Parse and validate a checkpoint.
    pub fn read<R: Read>(reader: R) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_reader(reader)?;
        ck.validate()?;
        Ok(ck)
    }

    pub fn from_slice(bytes: &[u8]) -> Result<Self> {
        Self::read(bytes)
    }

    fn validate(&self) -> Result<()> {
        if self.format != FORMAT {
            return Err(Error::invalid(format!("not a checkpoint: format `{}`", self.format)));
        }
        if self.version != VERSION {
            return Err(Error::invalid(format!("unsupported checkpoint version {}", self.version)));
        }
        if self.max_len == 0 {
            return Err(Error::invalid("max_len must be positive"));
        }
        self.model_unchecked().validate()?;
        if let Some(e) = &self.embeddings {
            let expected = e.rows.checked_mul(e.dim);
            if e.dim != self.embedding_dim || e.rows != self.vocabulary_size || expected != Some(e.data.len()) {
                return Err(Error::Dimension("fine-tuned embedding block has the wrong shape".into()));
            }
            if e.data.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid("non-finite embedding value"));
            }
        }
        Ok(())
    }

    fn model_unchecked(&self) -> Model {
        Model {
            arch: self.architecture.clone(),
            dim: self.embedding_dim,
            params: ParamSet { tensors: self.tensors.clone() },
        }
    }

    pub fn model(&self) -> Model {
        self.model_unchecked()
    }

    pub fn fine_tuned_embeddings(&self) -> Option<EmbeddingMatrix> {
        self.embeddings.as_ref().map(|e| EmbeddingMatrix::from_rows(e.dim, e.data.clone()).expect("validated on read"))
    }

    /// Fails unless `vocab` is the vocabulary the model was trained with.
    pub fn check_vocabulary(&self, vocab: &Vocabulary) -> Result<()> {
        let found = vocab.fingerprint();
        if found != self.vocabulary_sha256 || vocab.len() != self.vocabulary_size {
            return Err(Error::VocabularyMismatch { expected: self.vocabulary_sha256.clone(), found });
        }
        Ok(())
    }
}
