//! Hybrid ranking over a corpus and top-K agent selection by owner traversal.

use std::collections::{BTreeMap, HashSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, CorpusScope, EntityKind, TextTemplate};
use crate::dense::{DenseIndex, Embedder, EmbeddingVector};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::lexical::{Bm25Params, LexicalIndex};
use crate::ranking::{RankedList, ScoredEntity, SourceRanks};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    Rrf,
    WeightedSum,
    DenseOnly,
    LexicalOnly,
}

impl FusionMode {
    pub fn as_str(self) -> &'static str {
        match self {
            FusionMode::Rrf => "rrf",
            FusionMode::WeightedSum => "weighted_sum",
            FusionMode::DenseOnly => "dense_only",
            FusionMode::LexicalOnly => "lexical_only",
        }
    }

    pub fn uses_dense(self) -> bool {
        self != FusionMode::LexicalOnly
    }

    pub fn uses_lexical(self) -> bool {
        self != FusionMode::DenseOnly
    }
}

fn default_top_k() -> usize {
    5
}
fn default_rrf_constant() -> f64 {
    60.0
}
fn default_dense_weight() -> f64 {
    0.5
}
fn default_fusion() -> FusionMode {
    FusionMode::Rrf
}
fn default_scope() -> CorpusScope {
    CorpusScope::Joint
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalConfig {
    /// Candidate list length `N`; `None` means `max(50, 10·K)`.
    #[serde(default)]
    pub top_n: Option<usize>,
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    #[serde(default = "default_fusion")]
    pub fusion: FusionMode,
    #[serde(default = "default_rrf_constant")]
    pub rrf_constant: f64,
    #[serde(default = "default_dense_weight")]
    pub dense_weight: f64,
    #[serde(default = "default_scope")]
    pub corpus_scope: CorpusScope,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        RetrievalConfig {
            top_n: None,
            top_k: default_top_k(),
            fusion: default_fusion(),
            rrf_constant: default_rrf_constant(),
            dense_weight: default_dense_weight(),
            corpus_scope: default_scope(),
        }
    }
}

impl RetrievalConfig {
    pub fn effective_top_n(&self) -> usize {
        self.top_n.unwrap_or_else(|| (10 * self.top_k).max(50))
    }

    pub fn validate(&self) -> Result<()> {
        if self.top_k == 0 {
            return Err(Error::Config("top_k must be >= 1".into()));
        }
        if self.effective_top_n() < self.top_k {
            return Err(Error::Config(format!(
                "top_n ({}) must be >= top_k ({})",
                self.effective_top_n(),
                self.top_k
            )));
        }
        if !(self.rrf_constant > 0.0 && self.rrf_constant.is_finite()) {
            return Err(Error::Config("rrf_constant must be > 0".into()));
        }
        if !(0.0..=1.0).contains(&self.dense_weight) {
            return Err(Error::Config("dense_weight must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Default)]
struct FusionSlot {
    id: String,
    kind: Option<EntityKind>,
    lexical: Option<(usize, f64)>,
    dense: Option<(usize, f64)>,
}

fn min_max(list: &RankedList) -> (f64, f64) {
    list.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), e| {
            (lo.min(e.score), hi.max(e.score))
        })
}

fn unit_scale(score: f64, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        (score - lo) / (hi - lo)
    } else {
        1.0
    }
}

/// Combines a lexical and a dense ranking of the same corpus.
///
/// * `rrf`: `Σ 1/(c + rank)` over the lists containing the entity (ranks from 1).
/// * `weighted_sum`: each list min-max scaled to `[0, 1]`, then
///   `w·dense + (1−w)·lexical`; absence from a list contributes 0.
/// * `dense_only` / `lexical_only`: the chosen list unchanged.
pub fn fuse(
    lexical: &RankedList,
    dense: &RankedList,
    config: &RetrievalConfig,
) -> Result<RankedList> {
    if lexical.scope != dense.scope {
        return Err(Error::ScopeMismatch {
            expected: lexical.scope,
            found: dense.scope,
        });
    }
    if lexical.scope != config.corpus_scope {
        return Err(Error::ScopeMismatch {
            expected: config.corpus_scope,
            found: lexical.scope,
        });
    }

    let mut slots: BTreeMap<usize, FusionSlot> = BTreeMap::new();
    for (rank, e) in lexical.iter().enumerate() {
        let slot = slots.entry(e.ordinal).or_default();
        slot.id.clone_from(&e.entity_id);
        slot.kind = Some(e.kind);
        slot.lexical = Some((rank + 1, e.score));
    }
    for (rank, e) in dense.iter().enumerate() {
        let slot = slots.entry(e.ordinal).or_default();
        if slot.kind.is_none() {
            slot.id.clone_from(&e.entity_id);
            slot.kind = Some(e.kind);
        }
        slot.dense = Some((rank + 1, e.score));
    }

    let c = config.rrf_constant;
    let w = config.dense_weight;
    let lex_range = min_max(lexical);
    let dense_range = min_max(dense);

    let items = slots
        .into_iter()
        .filter_map(|(ordinal, slot)| {
            let score = match config.fusion {
                FusionMode::Rrf => {
                    slot.lexical.map_or(0.0, |(r, _)| 1.0 / (c + r as f64))
                        + slot.dense.map_or(0.0, |(r, _)| 1.0 / (c + r as f64))
                }
                FusionMode::WeightedSum => {
                    w * slot.dense.map_or(0.0, |(_, s)| unit_scale(s, dense_range))
                        + (1.0 - w) * slot.lexical.map_or(0.0, |(_, s)| unit_scale(s, lex_range))
                }
                FusionMode::DenseOnly => slot.dense?.1,
                FusionMode::LexicalOnly => slot.lexical?.1,
            };
            Some(ScoredEntity {
                entity_id: slot.id,
                kind: slot.kind.expect("slot filled from an input list"),
                score,
                ordinal,
                source_ranks: Some(SourceRanks {
                    lexical: slot.lexical.map(|(r, _)| r),
                    dense: slot.dense.map(|(r, _)| r),
                }),
            })
        })
        .collect();
    Ok(RankedList::from_unsorted(lexical.scope, items))
}

/// Lexical and dense indexes over one corpus scope.
#[derive(Debug, Clone)]
pub struct IndexBundle {
    lexical: LexicalIndex,
    dense: DenseIndex,
}

impl IndexBundle {
    pub fn build(
        catalog: &Catalog,
        scope: CorpusScope,
        template: &TextTemplate,
        bm25: Bm25Params,
        embedder: &Embedder,
    ) -> Result<Self> {
        let entities = catalog.entities_with(scope, template);
        let lexical = LexicalIndex::build(scope, &entities, bm25)?;
        let dense = DenseIndex::build(scope, &entities, embedder)?;
        Self::from_parts(lexical, dense)
    }

    pub fn from_parts(lexical: LexicalIndex, dense: DenseIndex) -> Result<Self> {
        if lexical.scope() != dense.scope() {
            return Err(Error::ScopeMismatch {
                expected: lexical.scope(),
                found: dense.scope(),
            });
        }
        if lexical.entities() != dense.entities() {
            return Err(Error::Config(
                "lexical and dense indexes were built over different entity lists".into(),
            ));
        }
        Ok(IndexBundle { lexical, dense })
    }

    pub fn scope(&self) -> CorpusScope {
        self.lexical.scope()
    }

    pub fn len(&self) -> usize {
        self.lexical.doc_count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn lexical(&self) -> &LexicalIndex {
        &self.lexical
    }

    pub fn dense(&self) -> &DenseIndex {
        &self.dense
    }
}

/// `TopN`: the first `N` entries of the fused ranking. `query_vector` may be
/// omitted only in `lexical_only` mode.
pub fn top_n(
    bundle: &IndexBundle,
    query_text: &str,
    query_vector: Option<&EmbeddingVector>,
    config: &RetrievalConfig,
) -> Result<RankedList> {
    let scope = bundle.scope();
    if scope != config.corpus_scope {
        return Err(Error::ScopeMismatch {
            expected: config.corpus_scope,
            found: scope,
        });
    }
    let lexical = if config.fusion.uses_lexical() {
        bundle.lexical.bm25_scores(query_text)
    } else {
        RankedList::empty(scope)
    };
    let dense = if config.fusion.uses_dense() {
        let vector = query_vector.ok_or_else(|| {
            Error::Config(format!(
                "fusion `{}` needs a query embedding",
                config.fusion.as_str()
            ))
        })?;
        bundle.dense.dense_scores(vector)?
    } else {
        RankedList::empty(scope)
    };
    let mut fused = fuse(&lexical, &dense, config)?;
    fused.truncate(config.effective_top_n());
    Ok(fused)
}

/// An entity of `L` that resolved to a selected agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportingEntity {
    pub entity_id: String,
    pub kind: EntityKind,
    pub score: f64,
    /// 1-based position in the ranked list.
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AgentSelection {
    /// Selected agents, first-selected first.
    pub agents: Vec<String>,
    /// Every walked entity that mapped to a selected agent, in walk order.
    pub supporting_entities: BTreeMap<String, Vec<SupportingEntity>>,
    /// Set when fewer than `K` agents were found before `L` ran out.
    pub exhausted_list: bool,
}

impl AgentSelection {
    /// Supporting entities across all agents, in walk order.
    pub fn walk(&self) -> Vec<&SupportingEntity> {
        let mut all: Vec<_> = self.supporting_entities.values().flatten().collect();
        all.sort_by_key(|e| e.rank);
        all
    }
}

/// Walks `ranked` in order, maps each entity to an agent (itself, or the
/// owner of a tool), skips ownerless tools, and keeps the first `k` distinct
/// agents.
pub fn select_agents(ranked: &RankedList, catalog: &Catalog, k: usize) -> Result<AgentSelection> {
    if k == 0 {
        return Err(Error::InvalidCutoff);
    }
    let mut selection = AgentSelection::default();
    let mut chosen: HashSet<&str> = HashSet::new();

    for (i, entity) in ranked.iter().enumerate() {
        if selection.agents.len() >= k {
            break;
        }
        let Some(agent) = catalog.owner_of(entity.kind, &entity.entity_id)? else {
            continue;
        };
        if chosen.insert(agent) {
            selection.agents.push(agent.to_owned());
        }
        selection
            .supporting_entities
            .entry(agent.to_owned())
            .or_default()
            .push(SupportingEntity {
                entity_id: entity.entity_id.clone(),
                kind: entity.kind,
                score: entity.score,
                rank: i + 1,
            });
    }
    selection.exhausted_list = selection.agents.len() < k;
    Ok(selection)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryMode {
    Direct,
    StepWise,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryStep {
    pub step_index: usize,
    pub step_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuerySpec {
    pub mode: QueryMode,
    pub question_id: String,
    pub direct_text: String,
    #[serde(default)]
    pub steps: Vec<QueryStep>,
}

impl QuerySpec {
    pub fn direct(question_id: impl Into<String>, text: impl Into<String>) -> Self {
        QuerySpec {
            mode: QueryMode::Direct,
            question_id: question_id.into(),
            direct_text: text.into(),
            steps: Vec::new(),
        }
    }

    /// Steps are numbered from 1 in the given order.
    pub fn step_wise<S: Into<String>>(
        question_id: impl Into<String>,
        text: impl Into<String>,
        steps: impl IntoIterator<Item = S>,
    ) -> Result<Self> {
        let spec = QuerySpec {
            mode: QueryMode::StepWise,
            question_id: question_id.into(),
            direct_text: text.into(),
            steps: steps
                .into_iter()
                .enumerate()
                .map(|(i, s)| QueryStep {
                    step_index: i + 1,
                    step_text: s.into(),
                })
                .collect(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match self.mode {
            QueryMode::Direct if !self.steps.is_empty() => Err(Error::Config(format!(
                "query `{}`: direct mode takes no steps",
                self.question_id
            ))),
            QueryMode::StepWise if self.steps.is_empty() => Err(Error::Config(format!(
                "query `{}`: step-wise mode needs at least one step",
                self.question_id
            ))),
            QueryMode::StepWise => {
                for (i, step) in self.steps.iter().enumerate() {
                    if step.step_index != i + 1 {
                        return Err(Error::Config(format!(
                            "query `{}`: step indexes must run 1, 2, ... (found {} at position {})",
                            self.question_id,
                            step.step_index,
                            i + 1
                        )));
                    }
                }
                Ok(())
            }
            QueryMode::Direct => Ok(()),
        }
    }

    /// `(step_index, text)` pairs submitted to the retriever. Direct mode is
    /// a single step with index 1.
    pub fn retrieval_texts(&self) -> Vec<(usize, &str)> {
        match self.mode {
            QueryMode::Direct => vec![(1, self.direct_text.as_str())],
            QueryMode::StepWise => self
                .steps
                .iter()
                .map(|s| (s.step_index, s.step_text.as_str()))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepSelection {
    pub step_index: usize,
    pub selection: AgentSelection,
}

/// Catalog, indexes and configuration for one corpus scope. Immutable and
/// shareable across threads.
#[derive(Debug, Clone)]
pub struct Engine {
    catalog: Arc<Catalog>,
    bundle: Arc<IndexBundle>,
    embedder: Arc<Embedder>,
    config: RetrievalConfig,
    execution: Execution,
}

impl Engine {
    pub fn new(
        catalog: Arc<Catalog>,
        bundle: Arc<IndexBundle>,
        embedder: Arc<Embedder>,
        config: RetrievalConfig,
    ) -> Result<Self> {
        config.validate()?;
        if bundle.scope() != config.corpus_scope {
            return Err(Error::ScopeMismatch {
                expected: config.corpus_scope,
                found: bundle.scope(),
            });
        }
        if bundle.dense().provider_fingerprint() != embedder.fingerprint() {
            return Err(Error::Config(format!(
                "dense index was built with `{}` but the query embedder is `{}`",
                bundle.dense().provider_fingerprint(),
                embedder.fingerprint()
            )));
        }
        Ok(Engine {
            catalog,
            bundle,
            embedder,
            config,
            execution: Execution::default(),
        })
    }

    pub fn build(
        catalog: Arc<Catalog>,
        embedder: Arc<Embedder>,
        config: RetrievalConfig,
        template: &TextTemplate,
        bm25: Bm25Params,
    ) -> Result<Self> {
        let bundle = IndexBundle::build(&catalog, config.corpus_scope, template, bm25, &embedder)?;
        Self::new(catalog, Arc::new(bundle), embedder, config)
    }

    pub fn with_execution(mut self, execution: Execution) -> Self {
        self.execution = execution;
        self
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    pub fn bundle(&self) -> &IndexBundle {
        &self.bundle
    }

    pub fn embedder(&self) -> &Embedder {
        &self.embedder
    }

    pub fn config(&self) -> &RetrievalConfig {
        &self.config
    }

    pub fn embed_query(&self, text: &str) -> Result<Option<EmbeddingVector>> {
        if self.config.fusion.uses_dense() {
            self.embedder.embed_one(text).map(Some)
        } else {
            Ok(None)
        }
    }

    /// Embeds many query texts in one provider pass (`None`s for lexical-only).
    pub fn embed_queries(&self, texts: &[String]) -> Result<Vec<Option<EmbeddingVector>>> {
        if self.config.fusion.uses_dense() && !texts.is_empty() {
            Ok(self
                .embedder
                .embed_batch(texts)?
                .into_iter()
                .map(Some)
                .collect())
        } else {
            Ok(vec![None; texts.len()])
        }
    }

    pub fn top_n(&self, query_text: &str) -> Result<RankedList> {
        let vector = self.embed_query(query_text)?;
        self.top_n_with_vector(query_text, vector.as_ref())
    }

    pub fn top_n_with_vector(
        &self,
        query_text: &str,
        vector: Option<&EmbeddingVector>,
    ) -> Result<RankedList> {
        top_n(&self.bundle, query_text, vector, &self.config)
    }

    pub fn select(&self, query_text: &str, k: usize) -> Result<AgentSelection> {
        let ranked = self.top_n(query_text)?;
        select_agents(&ranked, &self.catalog, k)
    }

    /// Top-`K` agents for one query text, with `K` from the config.
    pub fn retrieve(&self, query_text: &str) -> Result<AgentSelection> {
        self.select(query_text, self.config.top_k)
    }

    /// One selection per step, each computed independently, in step order.
    pub fn run_query(&self, query: &QuerySpec) -> Result<Vec<StepSelection>> {
        self.run_query_k(query, self.config.top_k)
    }

    pub fn run_query_k(&self, query: &QuerySpec, k: usize) -> Result<Vec<StepSelection>> {
        query.validate()?;
        let texts = query.retrieval_texts();
        self.execution.try_map(&texts, |&(step_index, text)| {
            Ok(StepSelection {
                step_index,
                selection: self.select(text, k)?,
            })
        })
    }

    /// Baseline routing over agent names and descriptions only.
    pub fn agent_only_retrieve(&self, query_text: &str, k: usize) -> Result<AgentSelection> {
        if self.config.corpus_scope != CorpusScope::AgentsOnly {
            return Err(Error::ScopeMismatch {
                expected: CorpusScope::AgentsOnly,
                found: self.config.corpus_scope,
            });
        }
        self.select(query_text, k)
    }
}

/// Serializable result of [`Engine::run_query`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    pub question_id: String,
    pub mode: QueryMode,
    pub steps: Vec<StepResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    pub step_index: usize,
    pub agents: Vec<String>,
    pub supporting: BTreeMap<String, Vec<Support>>,
    pub exhausted: bool,
}

/// Supporting entity as emitted: a bare id, or id + kind + fused score when
/// explaining.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Support {
    Explained {
        id: String,
        kind: EntityKind,
        score: f64,
    },
    Id(String),
}

impl QueryResult {
    pub fn new(query: &QuerySpec, steps: &[StepSelection], explain: bool) -> Self {
        QueryResult {
            question_id: query.question_id.clone(),
            mode: query.mode,
            steps: steps
                .iter()
                .map(|s| StepResult {
                    step_index: s.step_index,
                    agents: s.selection.agents.clone(),
                    supporting: s
                        .selection
                        .supporting_entities
                        .iter()
                        .map(|(agent, list)| {
                            let list = list
                                .iter()
                                .map(|e| {
                                    if explain {
                                        Support::Explained {
                                            id: e.entity_id.clone(),
                                            kind: e.kind,
                                            score: e.score,
                                        }
                                    } else {
                                        Support::Id(e.entity_id.clone())
                                    }
                                })
                                .collect();
                            (agent.clone(), list)
                        })
                        .collect(),
                    exhausted: s.selection.exhausted_list,
                })
                .collect(),
        }
    }
}
