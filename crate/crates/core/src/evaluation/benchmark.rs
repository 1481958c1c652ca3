use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::catalog::Catalog;
use crate::error::{Error, Result};
use crate::retrieval::QuerySpec;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchmarkStep {
    #[serde(rename = "index")]
    pub step_index: usize,
    #[serde(rename = "text")]
    pub step_text: String,
    #[serde(rename = "relevant_agents")]
    pub relevant_agent_ids: BTreeSet<String>,
    #[serde(rename = "relevant_tools", default)]
    pub relevant_tool_ids: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchmarkQuestion {
    #[serde(rename = "id")]
    pub question_id: String,
    #[serde(rename = "question")]
    pub question_text: String,
    pub steps: Vec<BenchmarkStep>,
}

impl BenchmarkQuestion {
    pub fn step_query(&self) -> QuerySpec {
        QuerySpec::step_wise(
            self.question_id.clone(),
            self.question_text.clone(),
            self.steps.iter().map(|s| s.step_text.clone()),
        )
        .expect("validated benchmark question has steps")
    }

    pub fn direct_query(&self) -> QuerySpec {
        QuerySpec::direct(self.question_id.clone(), self.question_text.clone())
    }

    /// Relevant agents of every step combined.
    pub fn relevant_agents(&self) -> BTreeSet<String> {
        self.steps
            .iter()
            .flat_map(|s| s.relevant_agent_ids.iter().cloned())
            .collect()
    }

    pub fn relevant_tools(&self) -> BTreeSet<String> {
        self.steps
            .iter()
            .flat_map(|s| s.relevant_tool_ids.iter().cloned())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkStats {
    pub questions: usize,
    pub steps: usize,
    pub avg_steps_per_question: f64,
    pub avg_relevant_agents_per_question: f64,
    pub avg_relevant_tools_per_question: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Benchmark {
    pub questions: Vec<BenchmarkQuestion>,
    pub stats: BenchmarkStats,
}

impl Benchmark {
    pub fn new(questions: Vec<BenchmarkQuestion>, catalog: &Catalog) -> Result<Self> {
        let mut ids = std::collections::HashSet::new();
        for q in &questions {
            validate_question(q, catalog)?;
            if !ids.insert(q.question_id.as_str()) {
                return Err(Error::Validation {
                    id: q.question_id.clone(),
                    reason: "duplicate question id".into(),
                });
            }
        }
        let stats = compute_stats(&questions);
        Ok(Benchmark { questions, stats })
    }

    pub fn from_json_str(text: &str, catalog: &Catalog) -> Result<Self> {
        Self::parse(text, "benchmark", catalog)
    }

    fn parse(text: &str, locus: &str, catalog: &Catalog) -> Result<Self> {
        let questions: Vec<BenchmarkQuestion> =
            serde_json::from_str(text).map_err(|e| Error::json(locus, e))?;
        Self::new(questions, catalog)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.questions).expect("benchmark serializes")
    }

    pub fn step_count(&self) -> usize {
        self.stats.steps
    }
}

fn validate_question(q: &BenchmarkQuestion, catalog: &Catalog) -> Result<()> {
    if q.steps.is_empty() {
        return Err(Error::Validation {
            id: q.question_id.clone(),
            reason: "question has no steps".into(),
        });
    }
    for (pos, step) in q.steps.iter().enumerate() {
        if step.step_index != pos + 1 {
            return Err(Error::Validation {
                id: q.question_id.clone(),
                reason: format!(
                    "step indexes must run 1, 2, ... (found {} at position {})",
                    step.step_index,
                    pos + 1
                ),
            });
        }
        if step.relevant_agent_ids.is_empty() {
            return Err(Error::Validation {
                id: q.question_id.clone(),
                reason: format!("step {} has no relevant agents", step.step_index),
            });
        }
        let dangling = step
            .relevant_agent_ids
            .iter()
            .find(|id| catalog.agent(id).is_none())
            .or_else(|| {
                step.relevant_tool_ids
                    .iter()
                    .find(|id| catalog.tool(id).is_none())
            });
        if let Some(id) = dangling {
            return Err(Error::DanglingReference {
                question_id: q.question_id.clone(),
                step_index: step.step_index,
                id: id.clone(),
            });
        }
    }
    Ok(())
}

fn compute_stats(questions: &[BenchmarkQuestion]) -> BenchmarkStats {
    let n = questions.len();
    let steps: usize = questions.iter().map(|q| q.steps.len()).sum();
    let agents: usize = questions.iter().map(|q| q.relevant_agents().len()).sum();
    let tools: usize = questions.iter().map(|q| q.relevant_tools().len()).sum();
    let avg = |total: usize| if n == 0 { 0.0 } else { total as f64 / n as f64 };
    BenchmarkStats {
        questions: n,
        steps,
        avg_steps_per_question: avg(steps),
        avg_relevant_agents_per_question: avg(agents),
        avg_relevant_tools_per_question: avg(tools),
    }
}

pub fn load_benchmark(path: &Path, catalog: &Catalog) -> Result<Benchmark> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Benchmark::parse(&text, &path.display().to_string(), catalog)
}
