use std::collections::HashMap;

use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use toolroute_core::{
    select_agents, AgentRecord, Catalog, CorpusScope, EntityKind, RankedList, ScoredEntity,
    ToolRecord,
};

/// Straight-line transcription of the selection loop, working only on
/// plain `(kind, id)` pairs and an owner table.
fn reference(
    list: &[(EntityKind, String)],
    owners: &HashMap<String, Option<String>>,
    k: usize,
) -> (Vec<String>, bool) {
    let mut selected: Vec<String> = Vec::new();
    let mut i = 0;
    while selected.len() < k && i < list.len() {
        let (kind, id) = &list[i];
        let candidate = match kind {
            EntityKind::Agent => id.clone(),
            EntityKind::Tool => match owners.get(id).cloned().flatten() {
                Some(owner) => owner,
                None => {
                    i += 1;
                    continue;
                }
            },
        };
        if !selected.contains(&candidate) {
            selected.push(candidate);
        }
        i += 1;
    }
    let exhausted = selected.len() < k;
    (selected, exhausted)
}

struct Instance {
    catalog: Catalog,
    owners: HashMap<String, Option<String>>,
    list: Vec<(EntityKind, String)>,
    k: usize,
}

fn random_instance(rng: &mut StdRng) -> Instance {
    let n_agents = rng.random_range(1..=20);
    let n_tools = rng.random_range(0..=100);
    let agents: Vec<AgentRecord> = (0..n_agents)
        .map(|i| AgentRecord::new(format!("a{i}"), format!("agent {i}"), "does things"))
        .collect();
    let mut owners = HashMap::new();
    let tools: Vec<ToolRecord> = (0..n_tools)
        .map(|i| {
            let owner = if rng.random_bool(0.1) {
                None
            } else {
                Some(format!("a{}", rng.random_range(0..n_agents)))
            };
            owners.insert(format!("t{i}"), owner.clone());
            ToolRecord::new(
                format!("t{i}"),
                format!("tool {i}"),
                "acts",
                owner.as_deref(),
            )
        })
        .collect();
    let catalog = Catalog::new(agents, tools).unwrap();

    let mut all: Vec<(EntityKind, String)> = (0..n_agents)
        .map(|i| (EntityKind::Agent, format!("a{i}")))
        .chain((0..n_tools).map(|i| (EntityKind::Tool, format!("t{i}"))))
        .collect();
    all.shuffle(rng);
    let n = rng.random_range(0..=all.len());
    all.truncate(n);
    let k = rng.random_range(1..=25);
    Instance {
        catalog,
        owners,
        list: all,
        k,
    }
}

fn ranked(list: &[(EntityKind, String)], catalog: &Catalog) -> RankedList {
    let ordinals: HashMap<(EntityKind, String), usize> = catalog
        .entities(CorpusScope::Joint)
        .iter()
        .enumerate()
        .map(|(i, e)| ((e.kind(), e.id().to_owned()), i))
        .collect();
    let n = list.len();
    let items = list
        .iter()
        .enumerate()
        .map(|(pos, (kind, id))| ScoredEntity {
            entity_id: id.clone(),
            kind: *kind,
            score: (n - pos) as f64,
            ordinal: ordinals[&(*kind, id.clone())],
            source_ranks: None,
        })
        .collect();
    RankedList::from_unsorted(CorpusScope::Joint, items)
}

#[test]
fn matches_reference_on_random_instances() {
    let mut rng = StdRng::seed_from_u64(0x5eed);
    for case in 0..1000 {
        let inst = random_instance(&mut rng);
        let list = ranked(&inst.list, &inst.catalog);
        let got = select_agents(&list, &inst.catalog, inst.k).unwrap();
        let (want, exhausted) = reference(&inst.list, &inst.owners, inst.k);
        assert_eq!(got.agents, want, "case {case}");
        assert_eq!(got.exhausted_list, exhausted, "case {case}");
    }
}

#[test]
fn invariants_on_random_instances() {
    let mut rng = StdRng::seed_from_u64(42);
    for _ in 0..300 {
        let inst = random_instance(&mut rng);
        let list = ranked(&inst.list, &inst.catalog);
        let full = select_agents(&list, &inst.catalog, inst.k).unwrap();
        // owner-skip soundness
        for agent in &full.agents {
            assert!(inst.catalog.agent(agent).is_some());
        }
        assert!(full.agents.len() <= inst.k);
        // every supporting entity resolves to the agent it is filed under
        for (agent, support) in &full.supporting_entities {
            for e in support {
                assert_eq!(
                    inst.catalog.owner_of(e.kind, &e.entity_id).unwrap(),
                    Some(agent.as_str())
                );
            }
        }
        // prefix monotonicity
        for k in 1..inst.k {
            let smaller = select_agents(&list, &inst.catalog, k).unwrap();
            assert_eq!(smaller.agents[..], full.agents[..smaller.agents.len()]);
        }
    }
}

proptest! {
    #[test]
    fn no_tool_id_is_ever_selected(seed in any::<u64>()) {
        let mut rng = StdRng::seed_from_u64(seed);
        let inst = random_instance(&mut rng);
        let list = ranked(&inst.list, &inst.catalog);
        let sel = select_agents(&list, &inst.catalog, inst.k).unwrap();
        for a in &sel.agents {
            prop_assert!(a.starts_with('a'));
        }
    }
}
