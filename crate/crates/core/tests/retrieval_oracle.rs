use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::Arc;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use toolroute_core::evaluation::{run_evaluation, EvalConfig, EvalContext, MethodSpec};
use toolroute_core::retrieval::{fuse, top_n};
use toolroute_core::synthetic::dilution_fixture;
use toolroute_core::{
    AgentRecord, Bm25Params, Catalog, CorpusScope, Embedder, EmbeddingProviderSpec, FusionMode,
    IndexBundle, RankedList, RetrievalConfig, ScoredEntity, TextTemplate, ToolRecord,
};

fn list(scope: CorpusScope, scores: &[(usize, f64)]) -> RankedList {
    RankedList::from_unsorted(
        scope,
        scores
            .iter()
            .map(|&(ordinal, score)| ScoredEntity {
                entity_id: format!("e{ordinal}"),
                kind: toolroute_core::EntityKind::Tool,
                score,
                ordinal,
                source_ranks: None,
            })
            .collect(),
    )
}

/// Fuse-then-truncate written independently: scores per ordinal, one
/// global sort, cut at `n`.
fn reference_top(
    lex: &[(usize, f64)],
    dense: &[(usize, f64)],
    mode: FusionMode,
    n: usize,
) -> Vec<usize> {
    let rank_of = |l: &[(usize, f64)]| -> HashMap<usize, (usize, f64)> {
        let mut v = l.to_vec();
        v.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        v.into_iter()
            .enumerate()
            .map(|(r, (o, s))| (o, (r + 1, s)))
            .collect()
    };
    let lr = rank_of(lex);
    let dr = rank_of(dense);
    let range = |l: &[(usize, f64)]| {
        let lo = l.iter().map(|x| x.1).fold(f64::INFINITY, f64::min);
        let hi = l.iter().map(|x| x.1).fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    };
    let (llo, lhi) = range(lex);
    let (dlo, dhi) = range(dense);
    let norm = |s: f64, lo: f64, hi: f64| if hi > lo { (s - lo) / (hi - lo) } else { 1.0 };
    let all: HashSet<usize> = lr.keys().chain(dr.keys()).copied().collect();
    let mut scored: Vec<(usize, f64)> = all
        .into_iter()
        .filter_map(|o| {
            let l = lr.get(&o);
            let d = dr.get(&o);
            let s = match mode {
                FusionMode::Rrf => {
                    l.map_or(0.0, |x| 1.0 / (60.0 + x.0 as f64))
                        + d.map_or(0.0, |x| 1.0 / (60.0 + x.0 as f64))
                }
                FusionMode::WeightedSum => {
                    0.5 * d.map_or(0.0, |x| norm(x.1, dlo, dhi))
                        + 0.5 * l.map_or(0.0, |x| norm(x.1, llo, lhi))
                }
                FusionMode::DenseOnly => d?.1,
                FusionMode::LexicalOnly => l?.1,
            };
            Some((o, s))
        })
        .collect();
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    scored.into_iter().take(n).map(|(o, _)| o).collect()
}

#[test]
fn fused_top_n_matches_brute_force() {
    let mut rng = StdRng::seed_from_u64(7);
    let modes = [
        FusionMode::Rrf,
        FusionMode::WeightedSum,
        FusionMode::DenseOnly,
        FusionMode::LexicalOnly,
    ];
    for case in 0..200 {
        // 20-entity corpus; lexical hits only a subset, dense scores every entity
        let mut lex: Vec<(usize, f64)> = Vec::new();
        for o in 0..20 {
            if rng.random_bool(0.5) {
                lex.push((o, (rng.random_range(1..40) as f64) / 4.0));
            }
        }
        let dense: Vec<(usize, f64)> = (0..20).map(|o| (o, rng.random_range(-1.0..1.0))).collect();
        for mode in modes {
            let config = RetrievalConfig {
                top_n: Some(10),
                fusion: mode,
                ..RetrievalConfig::default()
            };
            let mut fused = fuse(
                &list(CorpusScope::Joint, &lex),
                &list(CorpusScope::Joint, &dense),
                &config,
            )
            .unwrap();
            fused.truncate(config.effective_top_n());
            let got: Vec<usize> = fused.iter().map(|e| e.ordinal).collect();
            assert_eq!(
                got,
                reference_top(&lex, &dense, mode, 10),
                "case {case} {mode:?}"
            );
        }
    }
}

#[test]
fn rrf_top_entity_wins_both_lists() {
    let lex = list(CorpusScope::Joint, &[(3, 9.0), (1, 5.0), (2, 1.0)]);
    let dense = list(
        CorpusScope::Joint,
        &[(3, 0.9), (2, 0.5), (1, 0.4), (0, 0.1)],
    );
    let fused = fuse(&lex, &dense, &RetrievalConfig::default()).unwrap();
    let top = &fused.items()[0];
    assert_eq!(top.ordinal, 3);
    assert!((top.score - 2.0 / 61.0).abs() < 1e-15);
}

fn embedder(dim: usize) -> Arc<Embedder> {
    Arc::new(Embedder::from_spec(EmbeddingProviderSpec::hash("hash", dim, 0), None).unwrap())
}

#[test]
fn top_n_is_prefix_of_full_ranking() {
    let agents = (0..5)
        .map(|i| AgentRecord::new(format!("a{i}"), format!("agent {i}"), "files and web pages"))
        .collect();
    let tools = (0..15)
        .map(|i| {
            ToolRecord::new(
                format!("t{i}"),
                format!("tool {i}"),
                "read web files",
                Some(format!("a{}", i % 5).as_str()),
            )
        })
        .collect();
    let catalog = Catalog::new(agents, tools).unwrap();
    let emb = embedder(64);
    let bundle = IndexBundle::build(
        &catalog,
        CorpusScope::Joint,
        &TextTemplate::default(),
        Bm25Params::default(),
        &emb,
    )
    .unwrap();
    let q = emb.embed_one("read a web page").unwrap();
    let full = RetrievalConfig {
        top_n: Some(20),
        ..RetrievalConfig::default()
    };
    let short = RetrievalConfig {
        top_n: Some(10),
        ..RetrievalConfig::default()
    };
    let a = top_n(&bundle, "read a web page", Some(&q), &full).unwrap();
    let b = top_n(&bundle, "read a web page", Some(&q), &short).unwrap();
    assert_eq!(b.len(), 10);
    assert_eq!(&a.items()[..10], b.items());
}

/// Per-step Recall@5 for one method, keyed by (question, step).
fn step_recall(
    log: &[toolroute_core::evaluation::StepLogRecord],
    method: &str,
) -> BTreeMap<(String, usize), f64> {
    log.iter()
        .filter(|r| r.method == method)
        .map(|r| {
            let rel: HashSet<&String> = r.relevant_agents.iter().collect();
            let hits = r
                .retrieved_agents
                .iter()
                .take(5)
                .filter(|a| rel.contains(a))
                .count();
            (
                (r.question_id.clone(), r.step_index),
                hits as f64 / rel.len() as f64,
            )
        })
        .collect()
}

#[test]
fn joint_corpus_beats_agent_corpus_on_diluted_catalog() {
    let (catalog, bench) = dilution_fixture(40, 6);
    let retrieval = RetrievalConfig::default();
    let eval = EvalConfig::default();
    let ctx = EvalContext {
        catalog: Arc::new(catalog),
        embedder: embedder(512),
        retrieval: &retrieval,
        template: &TextTemplate::default(),
        bm25: Bm25Params::default(),
        eval: &eval,
    };
    let methods = [
        MethodSpec::preset("tool_to_agent").unwrap(),
        MethodSpec::preset("agent_only").unwrap(),
    ];
    let out = run_evaluation(&ctx, &bench, &methods).unwrap();
    assert!(out.failures.is_empty());
    let joint = step_recall(&out.step_log, "tool_to_agent");
    let agent = step_recall(&out.step_log, "agent_only");
    assert_eq!(joint.len(), bench.step_count());
    let mut strict = 0;
    for (key, j) in &joint {
        let a = agent[key];
        assert!(*j >= a, "{key:?}: joint {j} < agent-only {a}");
        if *j > a {
            strict += 1;
        }
    }
    assert!(
        strict * 2 >= joint.len(),
        "strict improvement on {strict}/{}",
        joint.len()
    );
}
