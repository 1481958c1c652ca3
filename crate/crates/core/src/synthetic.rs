//! Deterministic synthetic catalogs for tests and benchmarks.

use std::collections::BTreeSet;

use crate::catalog::{AgentRecord, Catalog, ToolRecord};
use crate::evaluation::{Benchmark, BenchmarkQuestion, BenchmarkStep};

const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
const VOWELS: &[u8] = b"aeiou";

/// The `n`-th pseudo-word: three consonant-vowel syllables. Distinct `n`
/// below 70^3 give distinct words.
pub fn pseudo_word(n: usize) -> String {
    let base = CONSONANTS.len() * VOWELS.len();
    let mut rest = n;
    let mut out = String::with_capacity(6);
    for _ in 0..3 {
        let syl = rest % base;
        rest /= base;
        out.push(CONSONANTS[syl / VOWELS.len()] as char);
        out.push(VOWELS[syl % VOWELS.len()] as char);
    }
    out
}

/// Agents whose descriptions are all the same generic sentence while every
/// tool carries its own vocabulary. Each benchmark step names the words of
/// one tool and expects that tool's owner.
pub fn dilution_fixture(n_agents: usize, tools_per_agent: usize) -> (Catalog, Benchmark) {
    let words_per_tool = 3;
    let mut agents = Vec::with_capacity(n_agents);
    let mut tools = Vec::new();
    let mut questions = Vec::new();
    for a in 0..n_agents {
        let agent_id = format!("server-{a:03}");
        agents.push(AgentRecord::new(
            agent_id.clone(),
            format!("server {a}"),
            "A general purpose server that offers a collection of handy utilities.",
        ));
        let mut steps = Vec::new();
        for t in 0..tools_per_agent {
            let base = (a * tools_per_agent + t) * words_per_tool;
            let words: Vec<String> = (base..base + words_per_tool).map(pseudo_word).collect();
            let tool_id = format!("{agent_id}-tool-{t}");
            tools.push(ToolRecord::new(
                tool_id.clone(),
                words[0].clone(),
                format!("Performs {} with {}", words[1], words[2]),
                Some(agent_id.as_str()),
            ));
            if t < 2 {
                steps.push(BenchmarkStep {
                    step_index: steps.len() + 1,
                    step_text: format!("please {} the {} {}", words[0], words[1], words[2]),
                    relevant_agent_ids: BTreeSet::from([agent_id.clone()]),
                    relevant_tool_ids: BTreeSet::from([tool_id]),
                });
            }
        }
        if !steps.is_empty() {
            questions.push(BenchmarkQuestion {
                question_id: format!("q{a:03}"),
                question_text: steps
                    .iter()
                    .map(|s| s.step_text.as_str())
                    .collect::<Vec<_>>()
                    .join(" then "),
                steps,
            });
        }
    }
    let catalog = Catalog::new(agents, tools).expect("fixture catalog is valid");
    let benchmark = Benchmark::new(questions, &catalog).expect("fixture benchmark is valid");
    (catalog, benchmark)
}

/// A catalog with `n_agents` agents and `n_tools` tools spread round-robin
/// over them. Every text is distinct.
pub fn scaled_catalog(n_agents: usize, n_tools: usize) -> Catalog {
    let agents = (0..n_agents)
        .map(|a| {
            AgentRecord::new(
                format!("agent-{a:04}"),
                format!("agent {}", pseudo_word(a)),
                format!(
                    "Server for {} and {} tasks",
                    pseudo_word(100_000 + 2 * a),
                    pseudo_word(100_001 + 2 * a)
                ),
            )
        })
        .collect();
    let tools = (0..n_tools)
        .map(|t| {
            let owner = format!("agent-{:04}", t % n_agents.max(1));
            ToolRecord::new(
                format!("tool-{t:05}"),
                pseudo_word(200_000 + t),
                format!(
                    "Handles {} requests using {} over {}",
                    pseudo_word(250_000 + 3 * t),
                    pseudo_word(250_001 + 3 * t),
                    pseudo_word(250_002 + 3 * t)
                ),
                (n_agents > 0).then_some(owner.as_str()),
            )
        })
        .collect();
    Catalog::new(agents, tools).expect("scaled catalog is valid")
}
