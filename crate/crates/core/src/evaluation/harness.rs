use std::collections::{BTreeMap, HashSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::benchmark::Benchmark;
use super::metrics::{ap_at_k, ndcg_at_k, recall_at_k};
use crate::catalog::{Catalog, CorpusScope, EntityKind, TextTemplate};
use crate::dense::Embedder;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::lexical::Bm25Params;
use crate::retrieval::{
    select_agents, Engine, FusionMode, IndexBundle, QueryMode, RetrievalConfig,
};

/// A retrieval method under evaluation: which corpus it searches and how
/// the two signals are combined (`None` inherits the run's fusion mode).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSpec {
    pub name: String,
    pub label: String,
    pub scope: CorpusScope,
    pub fusion: Option<FusionMode>,
}

impl MethodSpec {
    pub const PRESETS: [&'static str; 5] = [
        "tool_to_agent",
        "agent_only",
        "tools_only",
        "bm25_joint",
        "bm25_agents",
    ];

    pub fn preset(name: &str) -> Result<Self> {
        let (label, scope, fusion) = match name {
            "tool_to_agent" => ("Tool-to-Agent (joint corpus)", CorpusScope::Joint, None),
            "agent_only" => (
                "Agent-only retrieval (MCPZero-style stand-in)",
                CorpusScope::AgentsOnly,
                None,
            ),
            "tools_only" => (
                "Tool-only corpus + owner traversal",
                CorpusScope::ToolsOnly,
                None,
            ),
            "bm25_joint" => (
                "BM25 (joint corpus)",
                CorpusScope::Joint,
                Some(FusionMode::LexicalOnly),
            ),
            "bm25_agents" => (
                "BM25 (agent corpus)",
                CorpusScope::AgentsOnly,
                Some(FusionMode::LexicalOnly),
            ),
            other => {
                return Err(Error::Config(format!(
                    "unknown method `{other}` (known: {})",
                    Self::PRESETS.join(", ")
                )))
            }
        };
        Ok(MethodSpec {
            name: name.to_owned(),
            label: label.to_owned(),
            scope,
            fusion,
        })
    }

    pub fn is_lexical_only(&self) -> bool {
        self.fusion == Some(FusionMode::LexicalOnly)
    }
}

fn default_ks() -> Vec<usize> {
    vec![1, 3, 5, 10]
}
fn default_attribution_k() -> usize {
    5
}
fn default_query_mode() -> QueryMode {
    QueryMode::StepWise
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    #[serde(default = "default_ks")]
    pub ks: Vec<usize>,
    /// Cutoff at which source attribution shares are measured.
    #[serde(default = "default_attribution_k")]
    pub attribution_k: usize,
    #[serde(default = "default_query_mode")]
    pub query_mode: QueryMode,
    #[serde(default)]
    pub execution: Execution,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            ks: default_ks(),
            attribution_k: default_attribution_k(),
            query_mode: default_query_mode(),
            execution: Execution::default(),
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ks.is_empty() || self.ks.contains(&0) {
            return Err(Error::Config(
                "eval ks must be a non-empty list of cutoffs >= 1".into(),
            ));
        }
        if self.attribution_k == 0 {
            return Err(Error::Config("attribution_k must be >= 1".into()));
        }
        Ok(())
    }

    fn selection_depth(&self) -> usize {
        self.ks
            .iter()
            .copied()
            .max()
            .unwrap_or(1)
            .max(self.attribution_k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct KMetrics {
    pub recall: f64,
    pub map: f64,
    pub ndcg: f64,
}

impl KMetrics {
    fn add(&mut self, other: &KMetrics) {
        self.recall += other.recall;
        self.map += other.map;
        self.ndcg += other.ndcg;
    }

    fn scaled(mut self, by: f64) -> KMetrics {
        self.recall *= by;
        self.map *= by;
        self.ndcg *= by;
        self
    }

    pub fn compute(retrieved: &[String], relevant: &HashSet<String>, k: usize) -> Result<KMetrics> {
        Ok(KMetrics {
            recall: recall_at_k(retrieved, relevant, k)?,
            map: ap_at_k(retrieved, relevant, k)?,
            ndcg: ndcg_at_k(retrieved, relevant, k)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub method_name: String,
    pub method_label: String,
    pub embedding_model: String,
    /// Macro-average over evaluated steps.
    pub per_k: BTreeMap<usize, KMetrics>,
    /// Mean of per-question means.
    pub question_averaged: BTreeMap<usize, KMetrics>,
    pub step_count: usize,
    pub question_count: usize,
    pub attribution_k: usize,
    /// Share of walked top-K supporting entities that are agents.
    pub agent_corpus_share_topk: f64,
    /// Of the walked tools whose owner is relevant, the share whose owner
    /// also surfaced as an agent entity in the same walk.
    pub matched_tools_tracing_to_agents_share: f64,
}

/// One evaluated step as persisted to the JSON-lines log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLogRecord {
    pub question_id: String,
    pub step_index: usize,
    pub method: String,
    pub model: String,
    pub retrieved_agents: Vec<String>,
    pub supporting_kinds: Vec<EntityKind>,
    pub relevant_agents: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodFailure {
    pub method: String,
    pub model: String,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalOutcome {
    pub reports: Vec<MetricReport>,
    pub step_log: Vec<StepLogRecord>,
    pub failures: Vec<MethodFailure>,
}

/// Everything a run needs besides the benchmark and method list.
pub struct EvalContext<'a> {
    pub catalog: Arc<Catalog>,
    pub embedder: Arc<Embedder>,
    pub retrieval: &'a RetrievalConfig,
    pub template: &'a TextTemplate,
    pub bm25: Bm25Params,
    pub eval: &'a EvalConfig,
}

struct Unit<'b> {
    question_id: &'b str,
    step_index: usize,
    text: &'b str,
    relevant: HashSet<String>,
}

fn units(benchmark: &Benchmark, mode: QueryMode) -> Vec<Unit<'_>> {
    benchmark
        .questions
        .iter()
        .flat_map(|q| -> Vec<Unit<'_>> {
            match mode {
                QueryMode::StepWise => q
                    .steps
                    .iter()
                    .map(|s| Unit {
                        question_id: &q.question_id,
                        step_index: s.step_index,
                        text: &s.step_text,
                        relevant: s.relevant_agent_ids.iter().cloned().collect(),
                    })
                    .collect(),
                QueryMode::Direct => vec![Unit {
                    question_id: &q.question_id,
                    step_index: 1,
                    text: &q.question_text,
                    relevant: q.relevant_agents().into_iter().collect(),
                }],
            }
        })
        .collect()
}

#[derive(Default)]
struct Attribution {
    supporting: usize,
    supporting_agents: usize,
    matched_tools: usize,
    matched_tools_traced: usize,
}

struct UnitOutcome {
    metrics: BTreeMap<usize, KMetrics>,
    attribution: Attribution,
    log: StepLogRecord,
}

/// Runs every method over the benchmark with one embedding provider.
///
/// Index bundles are built once per corpus scope. A method whose bundle or
/// retrieval fails is recorded in `failures`; the others still run.
pub fn run_evaluation(
    ctx: &EvalContext<'_>,
    benchmark: &Benchmark,
    methods: &[MethodSpec],
) -> Result<EvalOutcome> {
    ctx.eval.validate()?;
    ctx.retrieval.validate()?;
    let mut bundles: BTreeMap<CorpusScope, std::result::Result<Arc<IndexBundle>, String>> =
        BTreeMap::new();
    let mut outcome = EvalOutcome::default();
    let model = ctx.embedder.spec().model_name.clone();

    for method in methods {
        let bundle = bundles
            .entry(method.scope)
            .or_insert_with(|| {
                IndexBundle::build(
                    &ctx.catalog,
                    method.scope,
                    ctx.template,
                    ctx.bm25,
                    &ctx.embedder,
                )
                .map(Arc::new)
                .map_err(|e| e.to_string())
            })
            .clone();
        let model_label = if method.is_lexical_only() {
            "none".to_owned()
        } else {
            model.clone()
        };
        let result = bundle
            .map_err(Error::Config)
            .and_then(|bundle| evaluate_method(ctx, benchmark, method, bundle, &model_label));
        match result {
            Ok((report, log)) => {
                outcome.reports.push(report);
                outcome.step_log.extend(log);
            }
            Err(e) => {
                log::error!("method `{}` with `{model_label}` failed: {e}", method.name);
                outcome.failures.push(MethodFailure {
                    method: method.name.clone(),
                    model: model_label,
                    error: e.to_string(),
                });
            }
        }
    }
    Ok(outcome)
}

fn evaluate_method(
    ctx: &EvalContext<'_>,
    benchmark: &Benchmark,
    method: &MethodSpec,
    bundle: Arc<IndexBundle>,
    model: &str,
) -> Result<(MetricReport, Vec<StepLogRecord>)> {
    let depth = ctx.eval.selection_depth();
    let config = RetrievalConfig {
        corpus_scope: method.scope,
        fusion: method.fusion.unwrap_or(ctx.retrieval.fusion),
        top_k: depth,
        top_n: ctx.retrieval.top_n.map(|n| n.max(depth)),
        ..ctx.retrieval.clone()
    };
    let engine = Engine::new(ctx.catalog.clone(), bundle, ctx.embedder.clone(), config)?;

    let units = units(benchmark, ctx.eval.query_mode);
    let texts: Vec<String> = units.iter().map(|u| u.text.to_owned()).collect();
    let vectors = engine.embed_queries(&texts)?;
    let jobs: Vec<(&Unit<'_>, Option<&crate::dense::EmbeddingVector>)> = units
        .iter()
        .zip(vectors.iter().map(Option::as_ref))
        .collect();

    let outcomes = ctx.eval.execution.try_map(&jobs, |&(unit, vector)| {
        evaluate_unit(&engine, unit, vector, method, model, ctx.eval, depth)
    })?;

    let ks = &ctx.eval.ks;
    let mut per_k: BTreeMap<usize, KMetrics> =
        ks.iter().map(|&k| (k, KMetrics::default())).collect();
    let mut per_question: BTreeMap<&str, (usize, BTreeMap<usize, KMetrics>)> = BTreeMap::new();
    let mut question_order: Vec<&str> = Vec::new();
    let mut attribution = Attribution::default();
    for (unit, out) in units.iter().zip(&outcomes) {
        let entry = per_question.entry(unit.question_id).or_insert_with(|| {
            question_order.push(unit.question_id);
            (0, ks.iter().map(|&k| (k, KMetrics::default())).collect())
        });
        entry.0 += 1;
        for (k, m) in &out.metrics {
            per_k.get_mut(k).expect("k from config").add(m);
            entry.1.get_mut(k).expect("k from config").add(m);
        }
        attribution.supporting += out.attribution.supporting;
        attribution.supporting_agents += out.attribution.supporting_agents;
        attribution.matched_tools += out.attribution.matched_tools;
        attribution.matched_tools_traced += out.attribution.matched_tools_traced;
    }

    let steps = units.len();
    let questions = question_order.len();
    let per_k = per_k
        .into_iter()
        .map(|(k, m)| (k, m.scaled(1.0 / steps.max(1) as f64)))
        .collect();
    let mut question_averaged: BTreeMap<usize, KMetrics> =
        ks.iter().map(|&k| (k, KMetrics::default())).collect();
    for qid in &question_order {
        let (count, sums) = &per_question[qid];
        for (k, m) in sums {
            question_averaged
                .get_mut(k)
                .expect("k from config")
                .add(&m.scaled(1.0 / *count as f64));
        }
    }
    let question_averaged = question_averaged
        .into_iter()
        .map(|(k, m)| (k, m.scaled(1.0 / questions.max(1) as f64)))
        .collect();

    let share = |num: usize, den: usize| {
        if den == 0 {
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    let report = MetricReport {
        method_name: method.name.clone(),
        method_label: method.label.clone(),
        embedding_model: model.to_owned(),
        per_k,
        question_averaged,
        step_count: steps,
        question_count: questions,
        attribution_k: ctx.eval.attribution_k,
        agent_corpus_share_topk: share(attribution.supporting_agents, attribution.supporting),
        matched_tools_tracing_to_agents_share: share(
            attribution.matched_tools_traced,
            attribution.matched_tools,
        ),
    };
    Ok((report, outcomes.into_iter().map(|o| o.log).collect()))
}

fn evaluate_unit(
    engine: &Engine,
    unit: &Unit<'_>,
    vector: Option<&crate::dense::EmbeddingVector>,
    method: &MethodSpec,
    model: &str,
    eval: &EvalConfig,
    depth: usize,
) -> Result<UnitOutcome> {
    let ranked = engine.top_n_with_vector(unit.text, vector)?;
    let deepest = select_agents(&ranked, engine.catalog(), depth)?;
    let metrics = eval
        .ks
        .iter()
        .map(|&k| Ok((k, KMetrics::compute(&deepest.agents, &unit.relevant, k)?)))
        .collect::<Result<BTreeMap<_, _>>>()?;

    let at_k = select_agents(&ranked, engine.catalog(), eval.attribution_k)?;
    let walk = at_k.walk();
    let surfaced_agents: HashSet<&str> = walk
        .iter()
        .filter(|e| e.kind == EntityKind::Agent)
        .map(|e| e.entity_id.as_str())
        .collect();
    let mut attribution = Attribution {
        supporting: walk.len(),
        supporting_agents: walk.iter().filter(|e| e.kind == EntityKind::Agent).count(),
        ..Attribution::default()
    };
    for entity in walk.iter().filter(|e| e.kind == EntityKind::Tool) {
        let owner = engine
            .catalog()
            .owner_of(EntityKind::Tool, &entity.entity_id)?
            .expect("supporting tools always have an owner");
        if unit.relevant.contains(owner) {
            attribution.matched_tools += 1;
            if surfaced_agents.contains(owner) {
                attribution.matched_tools_traced += 1;
            }
        }
    }

    let mut relevant: Vec<String> = unit.relevant.iter().cloned().collect();
    relevant.sort();
    Ok(UnitOutcome {
        metrics,
        attribution,
        log: StepLogRecord {
            question_id: unit.question_id.to_owned(),
            step_index: unit.step_index,
            method: method.name.clone(),
            model: model.to_owned(),
            retrieved_agents: deepest.agents,
            supporting_kinds: walk.iter().map(|e| e.kind).collect(),
            relevant_agents: relevant,
        },
    })
}

/// Recomputes step-macro-averaged metrics from a persisted step log, keyed
/// by `(method, model)`.
pub fn recompute_from_log(
    records: &[StepLogRecord],
    ks: &[usize],
) -> Result<BTreeMap<(String, String), BTreeMap<usize, KMetrics>>> {
    let mut sums: BTreeMap<(String, String), (usize, BTreeMap<usize, KMetrics>)> = BTreeMap::new();
    for r in records {
        let relevant: HashSet<String> = r.relevant_agents.iter().cloned().collect();
        let entry = sums
            .entry((r.method.clone(), r.model.clone()))
            .or_insert_with(|| (0, ks.iter().map(|&k| (k, KMetrics::default())).collect()));
        entry.0 += 1;
        for &k in ks {
            let m = KMetrics::compute(&r.retrieved_agents, &relevant, k)?;
            entry.1.get_mut(&k).expect("k listed").add(&m);
        }
    }
    Ok(sums
        .into_iter()
        .map(|(key, (n, per_k))| {
            let per_k = per_k
                .into_iter()
                .map(|(k, m)| (k, m.scaled(1.0 / n as f64)))
                .collect();
            (key, per_k)
        })
        .collect())
}

/// Mean and population standard deviation of a method's metrics across
/// embedding models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpread {
    pub method_name: String,
    pub k: usize,
    pub models: usize,
    pub mean: KMetrics,
    pub std_dev: KMetrics,
}

pub fn summarize_across_models(reports: &[MetricReport]) -> Vec<ModelSpread> {
    let mut grouped: BTreeMap<(&str, usize), Vec<KMetrics>> = BTreeMap::new();
    let mut order: Vec<&str> = Vec::new();
    for r in reports {
        if !order.contains(&r.method_name.as_str()) {
            order.push(&r.method_name);
        }
        for (&k, m) in &r.per_k {
            grouped.entry((&r.method_name, k)).or_default().push(*m);
        }
    }
    let mut out = Vec::new();
    for method in order {
        for ((name, k), values) in grouped.range((method, 0)..=(method, usize::MAX)) {
            let n = values.len() as f64;
            let mut mean = KMetrics::default();
            values.iter().for_each(|v| mean.add(v));
            let mean = mean.scaled(1.0 / n);
            let var = |f: fn(&KMetrics) -> f64| {
                (values
                    .iter()
                    .map(|v| (f(v) - f(&mean)).powi(2))
                    .sum::<f64>()
                    / n)
                    .sqrt()
            };
            out.push(ModelSpread {
                method_name: (*name).to_owned(),
                k: *k,
                models: values.len(),
                mean,
                std_dev: KMetrics {
                    recall: var(|m| m.recall),
                    map: var(|m| m.map),
                    ndcg: var(|m| m.ndcg),
                },
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{AgentRecord, ToolRecord};
    use crate::dense::EmbeddingProviderSpec;
    use crate::evaluation::benchmark::{BenchmarkQuestion, BenchmarkStep};

    fn fixture() -> (Arc<Catalog>, Benchmark) {
        let catalog = Catalog::new(
            vec![
                AgentRecord::new("fs", "filesystem", "local storage"),
                AgentRecord::new("wx", "weather", "forecast service"),
                AgentRecord::new("mail", "mail", "electronic messages"),
            ],
            vec![
                ToolRecord::new("read", "read_file", "read a file from disk", Some("fs")),
                ToolRecord::new(
                    "rain",
                    "rain_chance",
                    "probability of rain tomorrow",
                    Some("wx"),
                ),
                ToolRecord::new("send", "send_email", "send an email message", Some("mail")),
            ],
        )
        .unwrap();
        let step = |i: usize, text: &str, agent: &str| BenchmarkStep {
            step_index: i,
            step_text: text.into(),
            relevant_agent_ids: [agent.to_owned()].into(),
            relevant_tool_ids: Default::default(),
        };
        let questions = vec![
            BenchmarkQuestion {
                question_id: "q1".into(),
                question_text: "read my file and email it".into(),
                steps: vec![step(1, "read file", "fs"), step(2, "send email", "mail")],
            },
            BenchmarkQuestion {
                question_id: "q2".into(),
                question_text: "will it rain".into(),
                steps: vec![step(1, "rain tomorrow", "wx")],
            },
        ];
        let bench = Benchmark::new(questions, &catalog).unwrap();
        (Arc::new(catalog), bench)
    }

    fn run(methods: &[&str], exec: Execution) -> EvalOutcome {
        let (catalog, bench) = fixture();
        let embedder = Arc::new(
            Embedder::from_spec(EmbeddingProviderSpec::hash("hash-64", 64, 4), None).unwrap(),
        );
        let retrieval = RetrievalConfig::default();
        let eval = EvalConfig {
            execution: exec,
            ..EvalConfig::default()
        };
        let ctx = EvalContext {
            catalog,
            embedder,
            retrieval: &retrieval,
            template: &TextTemplate::default(),
            bm25: Bm25Params::default(),
            eval: &eval,
        };
        let methods: Vec<_> = methods
            .iter()
            .map(|m| MethodSpec::preset(m).unwrap())
            .collect();
        run_evaluation(&ctx, &bench, &methods).unwrap()
    }

    #[test]
    fn perfect_retrieval_scores_one() {
        let out = run(&["tool_to_agent"], Execution::Sequential);
        assert!(out.failures.is_empty());
        let report = &out.reports[0];
        assert_eq!(report.step_count, 3);
        assert_eq!(report.question_count, 2);
        for m in report.per_k.values() {
            assert_eq!((m.recall, m.map, m.ndcg), (1.0, 1.0, 1.0));
        }
        assert_eq!(out.step_log.len(), 3);
    }

    #[test]
    fn sequential_and_parallel_agree() {
        let methods = ["tool_to_agent", "agent_only", "bm25_joint"];
        assert_eq!(
            run(&methods, Execution::Sequential),
            run(&methods, Execution::Parallel)
        );
    }

    #[test]
    fn log_recomputes_report() {
        let out = run(&["tool_to_agent", "agent_only"], Execution::default());
        let recomputed = recompute_from_log(&out.step_log, &[1, 3, 5, 10]).unwrap();
        for r in &out.reports {
            let again = &recomputed[&(r.method_name.clone(), r.embedding_model.clone())];
            for (k, m) in &r.per_k {
                let a = again[k];
                assert!((a.recall - m.recall).abs() < 1e-12);
                assert!((a.map - m.map).abs() < 1e-12);
                assert!((a.ndcg - m.ndcg).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn lexical_methods_are_model_free() {
        let out = run(&["bm25_agents"], Execution::Sequential);
        assert_eq!(out.reports[0].embedding_model, "none");
    }

    #[test]
    fn agent_only_walk_is_all_agents() {
        let out = run(&["agent_only"], Execution::Sequential);
        assert_eq!(out.reports[0].agent_corpus_share_topk, 1.0);
        assert_eq!(out.reports[0].matched_tools_tracing_to_agents_share, 0.0);
    }

    #[test]
    fn spread_across_models() {
        let mut a = run(&["tool_to_agent"], Execution::Sequential)
            .reports
            .remove(0);
        let mut b = a.clone();
        b.embedding_model = "other".into();
        a.per_k.insert(
            5,
            KMetrics {
                recall: 0.8,
                map: 0.3,
                ndcg: 0.4,
            },
        );
        b.per_k.insert(
            5,
            KMetrics {
                recall: 0.6,
                map: 0.3,
                ndcg: 0.5,
            },
        );
        let spread = summarize_across_models(&[a, b]);
        let at5 = spread.iter().find(|s| s.k == 5).unwrap();
        assert_eq!(at5.models, 2);
        assert!((at5.mean.recall - 0.7).abs() < 1e-12);
        assert!((at5.std_dev.recall - 0.1).abs() < 1e-12);
        assert!(at5.std_dev.map.abs() < 1e-12);
    }

    #[test]
    fn unknown_method() {
        assert!(MethodSpec::preset("mcpzero").is_err());
    }
}
