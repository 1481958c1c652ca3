//! Dense side of the retriever: unit-normalized embeddings and exact
//! brute-force cosine search.

mod cache;
mod provider;

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use cache::EmbeddingCache;
pub use provider::{
    Embedder, EmbeddingBackend, EmbeddingProviderSpec, HashBackend, HttpBackend, HttpFields,
    ProviderKind,
};

use crate::catalog::{CatalogEntity, CorpusScope, EntityRef};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::lexical::tokenize;
use crate::ranking::{RankedList, ScoredEntity};

pub const DENSE_FORMAT: &str = "toolroute-dense/1";

/// Below this many vectors a parallel scan costs more than it saves.
const PARALLEL_SCAN_MIN: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    values: Vec<f32>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    zero: bool,
}

impl EmbeddingVector {
    /// L2-normalizes `values`. An all-zero input stays zero and is flagged.
    pub fn normalized(mut values: Vec<f32>) -> Self {
        let norm = values
            .iter()
            .map(|&v| (v as f64) * (v as f64))
            .sum::<f64>()
            .sqrt();
        if norm == 0.0 || !norm.is_finite() {
            values.iter_mut().for_each(|v| *v = 0.0);
            return EmbeddingVector { values, zero: true };
        }
        for v in &mut values {
            *v = (*v as f64 / norm) as f32;
        }
        EmbeddingVector {
            values,
            zero: false,
        }
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }

    pub fn is_zero(&self) -> bool {
        self.zero
    }

    pub fn norm(&self) -> f64 {
        self.values
            .iter()
            .map(|&v| (v as f64) * (v as f64))
            .sum::<f64>()
            .sqrt()
    }

    pub fn dot(&self, other: &EmbeddingVector) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| a as f64 * b as f64)
            .sum()
    }
}

/// Offline feature-hashing embedder.
///
/// Each token picks one coordinate and a sign from a seeded SHA-256 of the
/// token; counts accumulate and the result is L2-normalized. Texts sharing a
/// token therefore share a coordinate.
pub fn hash_embed(text: &str, dimension: usize, seed: u64) -> EmbeddingVector {
    assert!(
        dimension >= 8,
        "hash embedding dimension must be at least 8"
    );
    let mut values = vec![0f32; dimension];
    for token in tokenize(text) {
        let digest = Sha256::new()
            .chain_update(seed.to_le_bytes())
            .chain_update(token.as_bytes())
            .finalize();
        let mut word = [0u8; 8];
        word.copy_from_slice(&digest[..8]);
        let slot = (u64::from_le_bytes(word) % dimension as u64) as usize;
        let sign = if digest[8] & 1 == 0 { 1.0 } else { -1.0 };
        values[slot] += sign;
    }
    EmbeddingVector::normalized(values)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseIndex {
    format: String,
    scope: CorpusScope,
    provider_fingerprint: String,
    dimension: usize,
    entities: Vec<EntityRef>,
    vectors: Vec<EmbeddingVector>,
}

impl DenseIndex {
    pub fn build(
        scope: CorpusScope,
        entities: &[CatalogEntity],
        embedder: &Embedder,
    ) -> Result<Self> {
        if entities.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let texts: Vec<String> = entities
            .iter()
            .map(|e| e.indexable_text().to_owned())
            .collect();
        let vectors = embedder.embed_batch(&texts)?;
        Self::from_vectors(
            scope,
            entities.iter().map(CatalogEntity::to_ref).collect(),
            vectors,
            embedder.fingerprint(),
            embedder.spec().dimension,
        )
    }

    pub fn from_vectors(
        scope: CorpusScope,
        entities: Vec<EntityRef>,
        vectors: Vec<EmbeddingVector>,
        provider_fingerprint: String,
        dimension: usize,
    ) -> Result<Self> {
        if entities.len() != vectors.len() {
            return Err(Error::Config(format!(
                "{} entities but {} vectors",
                entities.len(),
                vectors.len()
            )));
        }
        if let Some(bad) = vectors.iter().find(|v| v.dimension() != dimension) {
            return Err(Error::DimensionMismatch {
                expected: dimension,
                actual: bad.dimension(),
            });
        }
        Ok(DenseIndex {
            format: DENSE_FORMAT.to_owned(),
            scope,
            provider_fingerprint,
            dimension,
            entities,
            vectors,
        })
    }

    pub fn scope(&self) -> CorpusScope {
        self.scope
    }

    pub fn provider_fingerprint(&self) -> &str {
        &self.provider_fingerprint
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn entities(&self) -> &[EntityRef] {
        &self.entities
    }

    pub fn vectors(&self) -> &[EmbeddingVector] {
        &self.vectors
    }

    /// Cosine similarity against every stored vector.
    pub fn dense_scores(&self, query: &EmbeddingVector) -> Result<RankedList> {
        let exec = if self.vectors.len() >= PARALLEL_SCAN_MIN {
            Execution::default()
        } else {
            Execution::Sequential
        };
        self.dense_scores_with(query, exec)
    }

    pub fn dense_scores_with(
        &self,
        query: &EmbeddingVector,
        exec: Execution,
    ) -> Result<RankedList> {
        if query.dimension() != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                actual: query.dimension(),
            });
        }
        let scores = exec.map(&self.vectors, |v| v.dot(query));
        let items = scores
            .into_iter()
            .zip(&self.entities)
            .enumerate()
            .map(|(ordinal, (score, entity))| ScoredEntity {
                entity_id: entity.id.clone(),
                kind: entity.kind,
                score,
                ordinal,
                source_ranks: None,
            })
            .collect();
        Ok(RankedList::from_unsorted(self.scope, items))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("dense index serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Header {
            format: String,
        }
        let header: Header =
            serde_json::from_str(text).map_err(|e| Error::json("dense index", e))?;
        if header.format != DENSE_FORMAT {
            return Err(Error::FormatVersion {
                kind: "dense index",
                expected: DENSE_FORMAT.to_owned(),
                found: header.format,
            });
        }
        serde_json::from_str(text).map_err(|e| Error::json("dense index", e))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
