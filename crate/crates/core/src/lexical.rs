//! Okapi BM25 over an entity corpus.
//!
//! ```text
//! score(d, q) = Σ_{t ∈ q} idf(t) · tf(t,d)·(k1+1) / (tf(t,d) + k1·(1 − b + b·|d|/avgdl))
//! idf(t)      = ln(1 + (N − n(t) + 0.5) / (n(t) + 0.5))
//! ```
//!
//! Query terms are treated as a set. The `1 +` inside the logarithm keeps
//! idf positive for terms that occur in most documents.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::catalog::{CatalogEntity, CorpusScope, EntityRef};
use crate::error::{Error, Result};
use crate::ranking::{RankedList, ScoredEntity};

pub const LEXICAL_FORMAT: &str = "toolroute-lexical/1";

/// Lowercases, splits on every non-alphanumeric codepoint and drops empty
/// pieces. No stemming, no stopwords.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|piece| !piece.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

impl Bm25Params {
    pub fn validate(&self) -> Result<()> {
        if !(self.k1 > 0.0 && self.k1.is_finite()) {
            return Err(Error::Config(format!(
                "bm25 k1 must be > 0, got {}",
                self.k1
            )));
        }
        if !(0.0..=1.0).contains(&self.b) {
            return Err(Error::Config(format!(
                "bm25 b must lie in [0, 1], got {}",
                self.b
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Posting {
    pub ordinal: u32,
    pub tf: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LexicalIndex {
    format: String,
    scope: CorpusScope,
    params: Bm25Params,
    doc_count: usize,
    avg_doc_length: f64,
    doc_lengths: Vec<u32>,
    entities: Vec<EntityRef>,
    postings: BTreeMap<String, Vec<Posting>>,
}

impl LexicalIndex {
    pub fn build(
        scope: CorpusScope,
        entities: &[CatalogEntity],
        params: Bm25Params,
    ) -> Result<Self> {
        params.validate()?;
        if entities.is_empty() {
            return Err(Error::EmptyCorpus);
        }

        let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
        let mut doc_lengths = Vec::with_capacity(entities.len());
        for (ordinal, entity) in entities.iter().enumerate() {
            let tokens = tokenize(entity.indexable_text());
            doc_lengths.push(tokens.len() as u32);
            let mut counts: BTreeMap<String, u32> = BTreeMap::new();
            for token in tokens {
                *counts.entry(token).or_default() += 1;
            }
            // ordinals are visited ascending, so every postings list stays sorted
            for (term, tf) in counts {
                postings.entry(term).or_default().push(Posting {
                    ordinal: ordinal as u32,
                    tf,
                });
            }
        }

        let total: u64 = doc_lengths.iter().map(|&l| l as u64).sum();
        Ok(LexicalIndex {
            format: LEXICAL_FORMAT.to_owned(),
            scope,
            params,
            doc_count: entities.len(),
            avg_doc_length: total as f64 / entities.len() as f64,
            doc_lengths,
            entities: entities.iter().map(CatalogEntity::to_ref).collect(),
            postings,
        })
    }

    pub fn scope(&self) -> CorpusScope {
        self.scope
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn doc_count(&self) -> usize {
        self.doc_count
    }

    pub fn avg_doc_length(&self) -> f64 {
        self.avg_doc_length
    }

    pub fn doc_lengths(&self) -> &[u32] {
        &self.doc_lengths
    }

    pub fn entities(&self) -> &[EntityRef] {
        &self.entities
    }

    pub fn postings(&self, term: &str) -> Option<&[Posting]> {
        self.postings.get(term).map(Vec::as_slice)
    }

    pub fn idf(&self, term: &str) -> f64 {
        let n = self.doc_count as f64;
        let df = self.postings.get(term).map_or(0, Vec::len) as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    /// Every document sharing at least one term with the query, best first.
    pub fn bm25_scores(&self, query: &str) -> RankedList {
        let terms: BTreeSet<String> = tokenize(query).into_iter().collect();
        let Bm25Params { k1, b } = self.params;
        let mut scores: BTreeMap<u32, f64> = BTreeMap::new();
        for term in &terms {
            let Some(list) = self.postings.get(term) else {
                continue;
            };
            let idf = self.idf(term);
            for posting in list {
                let tf = posting.tf as f64;
                let dl = self.doc_lengths[posting.ordinal as usize] as f64;
                let norm = 1.0 - b + b * dl / self.avg_doc_length;
                *scores.entry(posting.ordinal).or_default() +=
                    idf * tf * (k1 + 1.0) / (tf + k1 * norm);
            }
        }

        let items = scores
            .into_iter()
            .map(|(ordinal, score)| {
                let entity = &self.entities[ordinal as usize];
                ScoredEntity {
                    entity_id: entity.id.clone(),
                    kind: entity.kind,
                    score,
                    ordinal: ordinal as usize,
                    source_ranks: None,
                }
            })
            .collect();
        RankedList::from_unsorted(self.scope, items)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("lexical index serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Header {
            format: String,
        }
        let header: Header =
            serde_json::from_str(text).map_err(|e| Error::json("lexical index", e))?;
        if header.format != LEXICAL_FORMAT {
            return Err(Error::FormatVersion {
                kind: "lexical index",
                expected: LEXICAL_FORMAT.to_owned(),
                found: header.format,
            });
        }
        serde_json::from_str(text).map_err(|e| Error::json("lexical index", e))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{AgentRecord, Catalog, ToolRecord};

    fn corpus(texts: &[(&str, &str)]) -> Vec<CatalogEntity> {
        let agents = texts
            .iter()
            .enumerate()
            .map(|(i, (name, desc))| AgentRecord::new(format!("d{}", i + 1), *name, *desc))
            .collect();
        Catalog::new(agents, Vec::<ToolRecord>::new())
            .unwrap()
            .entities(CorpusScope::AgentsOnly)
    }

    #[test]
    fn tokenize_rules() {
        assert_eq!(tokenize("Read_File v2!"), ["read", "file", "v2"]);
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("BM25"), ["bm25"]);
        assert_eq!(tokenize("  --a--B  "), ["a", "b"]);
        assert_eq!(tokenize("Größe über"), ["größe", "über"]);
    }

    #[test]
    fn build_counts_documents() {
        let entities = corpus(&[
            ("a", "x y"),
            ("b", "y z"),
            ("c", "z"),
            ("d", "q"),
            ("e", "r"),
        ]);
        let index =
            LexicalIndex::build(CorpusScope::AgentsOnly, &entities, Bm25Params::default()).unwrap();
        assert_eq!(index.doc_count(), 5);
        let mean = index.doc_lengths().iter().map(|&l| l as f64).sum::<f64>() / 5.0;
        assert_eq!(index.avg_doc_length(), mean);
    }

    #[test]
    fn identical_documents_have_average_length() {
        let entities = corpus(&[
            ("same", "text here"),
            ("same", "text here"),
            ("same", "text here"),
        ]);
        let index =
            LexicalIndex::build(CorpusScope::AgentsOnly, &entities, Bm25Params::default()).unwrap();
        assert!(index
            .doc_lengths()
            .iter()
            .all(|&l| l as f64 == index.avg_doc_length()));
    }

    #[test]
    fn empty_corpus_and_bad_params() {
        assert!(matches!(
            LexicalIndex::build(CorpusScope::Joint, &[], Bm25Params::default()),
            Err(Error::EmptyCorpus)
        ));
        let entities = corpus(&[("a", "b")]);
        for params in [
            Bm25Params { k1: 0.0, b: 0.5 },
            Bm25Params { k1: 1.0, b: 1.5 },
        ] {
            assert!(matches!(
                LexicalIndex::build(CorpusScope::AgentsOnly, &entities, params),
                Err(Error::Config(_))
            ));
        }
    }

    #[test]
    fn only_matching_documents_are_returned() {
        let entities = corpus(&[("file", "search tool"), ("weather", "lookup")]);
        let index =
            LexicalIndex::build(CorpusScope::AgentsOnly, &entities, Bm25Params::default()).unwrap();
        let ranked = index.bm25_scores("weather");
        assert_eq!(ranked.len(), 1);
        assert_eq!(ranked.items()[0].entity_id, "d2");
        assert!(ranked.items()[0].score > 0.0);
        assert!(index.bm25_scores("unrelated words").is_empty());
        assert!(index.bm25_scores("").is_empty());
    }

    #[test]
    fn postings_sorted_by_ordinal() {
        let entities = corpus(&[("x", "a b"), ("y", "b a"), ("z", "a")]);
        let index =
            LexicalIndex::build(CorpusScope::AgentsOnly, &entities, Bm25Params::default()).unwrap();
        let list = index.postings("a").unwrap();
        assert!(list.windows(2).all(|w| w[0].ordinal < w[1].ordinal));
    }

    #[test]
    fn sidecar_round_trip_and_version_check() {
        let entities = corpus(&[("file", "search tool"), ("weather", "lookup")]);
        let index =
            LexicalIndex::build(CorpusScope::AgentsOnly, &entities, Bm25Params::default()).unwrap();
        let json = index.to_json();
        assert_eq!(LexicalIndex::from_json(&json).unwrap(), index);
        let stale = json.replace(LEXICAL_FORMAT, "toolroute-lexical/0");
        assert!(matches!(
            LexicalIndex::from_json(&stale),
            Err(Error::FormatVersion { .. })
        ));
    }
}
