//! LiveMCPBench exports to the native catalog and benchmark files.
//!
//! Input shapes vary between releases, so keys are matched against a list
//! of aliases. Servers: an array (or `{"servers": [...]}`, or an object
//! keyed by server name) of
//! `{name|server_name|id, description|desc|summary, tools: [{name|tool_name, description|desc, inputSchema|input_schema|parameters}]}`.
//! Annotations: an array (or `{"tasks"|"questions": [...]}`) of
//! `{id|task_id|question_id, question|query|task, steps: [{text|step|description, servers|agents|relevant_agents, tools|relevant_tools}]}`.
//! Step-level server and tool references may use names or ids.

use std::collections::{BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use serde_json::{Map, Value};
use toolroute_core::evaluation::{Benchmark, BenchmarkQuestion, BenchmarkStep};
use toolroute_core::{AgentRecord, Catalog, ToolRecord};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, clap::Args)]
pub struct ConvertArgs {
    /// Server/tool listing (JSON)
    #[arg(long)]
    pub servers: PathBuf,
    /// Step annotations (JSON); omit to convert the catalog only
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    #[arg(long, default_value = "catalog.json")]
    pub out_catalog: PathBuf,
    #[arg(long, default_value = "benchmark.json")]
    pub out_benchmark: PathBuf,
}

#[derive(Debug, Clone)]
pub struct ConvertSummary {
    pub agents: usize,
    pub tools: usize,
    pub questions: usize,
    pub steps: usize,
    pub dropped_references: usize,
}

const NAME: &[&str] = &["name", "server_name", "title", "id"];
const SERVER_ID: &[&str] = &["id", "server_id", "name", "server_name"];
const DESCRIPTION: &[&str] = &["description", "desc", "summary"];
const TOOL_NAME: &[&str] = &["name", "tool_name", "id"];
const SCHEMA: &[&str] = &["inputSchema", "input_schema", "parameters"];
const QUESTION_ID: &[&str] = &["id", "task_id", "question_id", "qid"];
const QUESTION: &[&str] = &["question", "query", "task", "prompt"];
const STEP_TEXT: &[&str] = &["text", "step", "description", "content"];
const STEP_SERVERS: &[&str] = &[
    "servers",
    "agents",
    "relevant_agents",
    "relevant_servers",
    "server",
];
const STEP_TOOLS: &[&str] = &["tools", "relevant_tools", "tool"];

fn pick<'a>(obj: &'a Map<String, Value>, keys: &[&str]) -> Option<&'a Value> {
    keys.iter()
        .find_map(|k| obj.get(*k))
        .filter(|v| !v.is_null())
}

fn pick_str(obj: &Map<String, Value>, keys: &[&str]) -> Option<String> {
    pick(obj, keys).and_then(|v| match v {
        Value::String(s) => Some(s.trim().to_owned()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    })
}

/// A string or an array of strings.
fn pick_list(obj: &Map<String, Value>, keys: &[&str]) -> Vec<String> {
    match pick(obj, keys) {
        Some(Value::String(s)) => vec![s.clone()],
        Some(Value::Array(items)) => items
            .iter()
            .filter_map(|v| match v {
                Value::String(s) => Some(s.clone()),
                Value::Object(o) => pick_str(o, &["id", "name"]),
                _ => None,
            })
            .collect(),
        _ => Vec::new(),
    }
}

fn read_json(path: &Path) -> CliResult<Value> {
    let text = std::fs::read_to_string(path).map_err(|e| toolroute_core::Error::io(path, e))?;
    Ok(serde_json::from_str(&text)
        .map_err(|e| toolroute_core::Error::json(path.display().to_string(), e))?)
}

type Record<'a> = (Option<&'a str>, &'a Map<String, Value>);

fn records<'a>(root: &'a Value, wrappers: &[&str]) -> CliResult<Vec<Record<'a>>> {
    let items = match root {
        Value::Array(a) => a.iter().map(|v| (None, v)).collect::<Vec<_>>(),
        Value::Object(o) => match wrappers.iter().find_map(|w| o.get(*w)) {
            Some(Value::Array(a)) => a.iter().map(|v| (None, v)).collect(),
            _ => o.iter().map(|(k, v)| (Some(k.as_str()), v)).collect(),
        },
        _ => return Err(CliError::Data("expected a JSON array or object".into())),
    };
    items
        .into_iter()
        .map(|(key, v)| {
            v.as_object()
                .map(|o| (key, o))
                .ok_or_else(|| CliError::Data("expected every record to be a JSON object".into()))
        })
        .collect()
}

pub fn convert_servers(root: &Value) -> CliResult<Catalog> {
    let mut agents = Vec::new();
    let mut tools = Vec::new();
    let mut seen_tools = BTreeSet::new();
    for (key, server) in records(root, &["servers", "agents"])? {
        let id = pick_str(server, SERVER_ID)
            .or_else(|| key.map(str::to_owned))
            .ok_or_else(|| CliError::Data("server record without a name".into()))?;
        let name = pick_str(server, NAME).unwrap_or_else(|| id.clone());
        let description = pick_str(server, DESCRIPTION)
            .filter(|d| !d.is_empty())
            .unwrap_or_else(|| {
                log::warn!("server `{id}` has no description; using its name");
                name.clone()
            });
        agents.push(AgentRecord::new(id.clone(), name, description));

        let listed = server
            .get("tools")
            .and_then(Value::as_array)
            .cloned()
            .unwrap_or_default();
        for tool in listed {
            let Some(tool) = tool.as_object() else {
                continue;
            };
            let Some(tool_name) = pick_str(tool, TOOL_NAME) else {
                log::warn!("server `{id}` lists a tool without a name; skipped");
                continue;
            };
            let tool_id = format!("{id}::{tool_name}");
            if !seen_tools.insert(tool_id.clone()) {
                log::warn!("duplicate tool `{tool_id}`; keeping the first");
                continue;
            }
            let description = pick_str(tool, DESCRIPTION)
                .filter(|d| !d.is_empty())
                .unwrap_or_else(|| tool_name.clone());
            let mut record = ToolRecord::new(tool_id, tool_name, description, Some(id.as_str()));
            if let Some(schema) = pick(tool, SCHEMA) {
                record
                    .extra_metadata
                    .insert("parameters".into(), schema.clone());
            }
            tools.push(record);
        }
    }
    Ok(Catalog::new(agents, tools)?)
}

/// Resolves names or ids from annotations to catalog ids.
struct Resolver {
    agents: HashMap<String, String>,
    tools: HashMap<String, Vec<String>>,
}

impl Resolver {
    fn new(catalog: &Catalog) -> Self {
        let mut agents = HashMap::new();
        for a in catalog.agents() {
            agents.insert(a.name.to_lowercase(), a.agent_id.clone());
            agents.insert(a.agent_id.to_lowercase(), a.agent_id.clone());
        }
        let mut tools: HashMap<String, Vec<String>> = HashMap::new();
        for t in catalog.tools() {
            for key in [t.tool_id.to_lowercase(), t.name.to_lowercase()] {
                let ids = tools.entry(key).or_default();
                if !ids.contains(&t.tool_id) {
                    ids.push(t.tool_id.clone());
                }
            }
        }
        Resolver { agents, tools }
    }

    fn agent(&self, r: &str) -> Option<String> {
        self.agents.get(&r.trim().to_lowercase()).cloned()
    }

    /// A tool reference, narrowed to the step's servers when the bare name
    /// is ambiguous.
    fn tool(&self, r: &str, servers: &BTreeSet<String>) -> Option<String> {
        let hits = self.tools.get(&r.trim().to_lowercase())?;
        if hits.len() == 1 {
            return Some(hits[0].clone());
        }
        let narrowed: Vec<&String> = hits
            .iter()
            .filter(|id| servers.iter().any(|s| id.starts_with(&format!("{s}::"))))
            .collect();
        (narrowed.len() == 1).then(|| narrowed[0].clone())
    }
}

pub fn convert_annotations(root: &Value, catalog: &Catalog) -> CliResult<(Benchmark, usize)> {
    let resolver = Resolver::new(catalog);
    let owners = catalog.owner_map();
    let mut dropped = 0;
    let mut questions = Vec::new();
    for (n, (key, task)) in records(root, &["tasks", "questions", "data"])?
        .into_iter()
        .enumerate()
    {
        let question_id = pick_str(task, QUESTION_ID)
            .or_else(|| key.map(str::to_owned))
            .unwrap_or_else(|| format!("q{:04}", n + 1));
        let question_text = pick_str(task, QUESTION).unwrap_or_default();
        let raw_steps = task
            .get("steps")
            .and_then(Value::as_array)
            .cloned()
            .unwrap_or_default();
        let mut steps = Vec::new();
        for raw in &raw_steps {
            let step = match raw {
                Value::Object(o) => o.clone(),
                Value::String(s) => Map::from_iter([("text".to_owned(), Value::String(s.clone()))]),
                _ => continue,
            };
            let Some(text) = pick_str(&step, STEP_TEXT).filter(|t| !t.is_empty()) else {
                continue;
            };
            let mut agents = BTreeSet::new();
            for r in pick_list(&step, STEP_SERVERS) {
                match resolver.agent(&r) {
                    Some(id) => {
                        agents.insert(id);
                    }
                    None => {
                        log::warn!("question `{question_id}`: unknown server `{r}` dropped");
                        dropped += 1;
                    }
                }
            }
            let mut tools = BTreeSet::new();
            for r in pick_list(&step, STEP_TOOLS) {
                match resolver.tool(&r, &agents) {
                    Some(id) => {
                        tools.insert(id);
                    }
                    None => {
                        log::warn!("question `{question_id}`: unresolved tool `{r}` dropped");
                        dropped += 1;
                    }
                }
            }
            // A step that names only tools is credited to their owners.
            for t in &tools {
                if let Some(owner) = owners.get(t) {
                    agents.insert(owner.clone());
                }
            }
            if agents.is_empty() {
                log::warn!("question `{question_id}`: step without a resolvable server skipped");
                continue;
            }
            steps.push(BenchmarkStep {
                step_index: steps.len() + 1,
                step_text: text,
                relevant_agent_ids: agents,
                relevant_tool_ids: tools,
            });
        }
        if steps.is_empty() {
            log::warn!("question `{question_id}` has no usable steps; skipped");
            continue;
        }
        let question_text = if question_text.is_empty() {
            steps
                .iter()
                .map(|s| s.step_text.as_str())
                .collect::<Vec<_>>()
                .join(" ")
        } else {
            question_text
        };
        questions.push(BenchmarkQuestion {
            question_id,
            question_text,
            steps,
        });
    }
    Ok((Benchmark::new(questions, catalog)?, dropped))
}

pub fn run_convert(args: &ConvertArgs) -> CliResult<ConvertSummary> {
    let catalog = convert_servers(&read_json(&args.servers)?)?;
    catalog.save(&args.out_catalog)?;
    let mut summary = ConvertSummary {
        agents: catalog.agents().len(),
        tools: catalog.tools().len(),
        questions: 0,
        steps: 0,
        dropped_references: 0,
    };
    if let Some(path) = &args.annotations {
        let (benchmark, dropped) = convert_annotations(&read_json(path)?, &catalog)?;
        let text = benchmark.to_json_string();
        std::fs::write(&args.out_benchmark, text)
            .map_err(|e| toolroute_core::Error::io(&args.out_benchmark, e))?;
        summary.questions = benchmark.stats.questions;
        summary.steps = benchmark.stats.steps;
        summary.dropped_references = dropped;
    }
    Ok(summary)
}
