//! Joint tool/agent retrieval.
//!
//! Tools and the agents (MCP servers) that own them are indexed together in
//! one corpus. A query ranks the joint corpus with BM25 and dense similarity,
//! then walks the ranking and maps every hit to an executable agent through
//! the ownership links, keeping the first `K` distinct agents.
//!
//! The [`evaluation`] module scores agent selections against step-level
//! ground truth with Recall@K, mAP@K and nDCG@K.

pub mod catalog;
pub mod dense;
pub mod error;
pub mod evaluation;
pub mod exec;
pub mod lexical;
pub mod ranking;
pub mod retrieval;
pub mod synthetic;

pub use catalog::{
    entity_text, load_catalog, AgentRecord, Catalog, CatalogEntity, CorpusScope, EntityKind,
    TextTemplate, ToolRecord,
};
pub use dense::{
    hash_embed, DenseIndex, Embedder, EmbeddingBackend, EmbeddingProviderSpec, EmbeddingVector,
    ProviderKind,
};
pub use error::{Error, Result};
pub use exec::Execution;
pub use lexical::{tokenize, Bm25Params, LexicalIndex};
pub use ranking::{RankedList, ScoredEntity, SourceRanks};
pub use retrieval::{
    select_agents, AgentSelection, Engine, FusionMode, IndexBundle, QueryMode, QuerySpec,
    RetrievalConfig, StepSelection,
};
