//! The tool/agent catalog.
//!
//! Agents and tools form a bipartite graph whose only edges are ownership
//! links `tool -> agent`. A tool may be ownerless when its metadata does not
//! name a parent; such tools are indexed but can never resolve to an agent.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

pub type Metadata = BTreeMap<String, Value>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentRecord {
    #[serde(rename = "id")]
    pub agent_id: String,
    pub name: String,
    pub description: String,
    #[serde(
        rename = "metadata",
        default,
        skip_serializing_if = "BTreeMap::is_empty"
    )]
    pub extra_metadata: Metadata,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolRecord {
    #[serde(rename = "id")]
    pub tool_id: String,
    pub name: String,
    pub description: String,
    #[serde(rename = "owner", default, skip_serializing_if = "Option::is_none")]
    pub owner_agent_id: Option<String>,
    #[serde(
        rename = "metadata",
        default,
        skip_serializing_if = "BTreeMap::is_empty"
    )]
    pub extra_metadata: Metadata,
}

impl AgentRecord {
    pub fn new(
        id: impl Into<String>,
        name: impl Into<String>,
        description: impl Into<String>,
    ) -> Self {
        AgentRecord {
            agent_id: id.into(),
            name: name.into(),
            description: description.into(),
            extra_metadata: Metadata::new(),
        }
    }
}

impl ToolRecord {
    pub fn new(
        id: impl Into<String>,
        name: impl Into<String>,
        description: impl Into<String>,
        owner: Option<&str>,
    ) -> Self {
        ToolRecord {
            tool_id: id.into(),
            name: name.into(),
            description: description.into(),
            owner_agent_id: owner.map(str::to_owned),
            extra_metadata: Metadata::new(),
        }
    }
}

/// Fields a record contributes to its indexable text.
pub trait Describe {
    fn name(&self) -> &str;
    fn description(&self) -> &str;
    fn metadata(&self) -> &Metadata;
}

impl Describe for AgentRecord {
    fn name(&self) -> &str {
        &self.name
    }
    fn description(&self) -> &str {
        &self.description
    }
    fn metadata(&self) -> &Metadata {
        &self.extra_metadata
    }
}

impl Describe for ToolRecord {
    fn name(&self) -> &str {
        &self.name
    }
    fn description(&self) -> &str {
        &self.description
    }
    fn metadata(&self) -> &Metadata {
        &self.extra_metadata
    }
}

/// Renders a record into the text that gets indexed.
///
/// `pattern` substitutes `{name}` and `{description}`. Metadata is never
/// indexed unless its key is listed in `include_metadata_keys` (e.g. a tool's
/// parameter schema); listed values are appended in list order as
/// `"\n<key>: <json>"`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TextTemplate {
    pub pattern: String,
    pub include_metadata_keys: Vec<String>,
}

impl Default for TextTemplate {
    fn default() -> Self {
        TextTemplate {
            pattern: "{name}: {description}".to_owned(),
            include_metadata_keys: Vec::new(),
        }
    }
}

impl TextTemplate {
    pub fn render(&self, record: &impl Describe) -> String {
        let mut out = self
            .pattern
            .replace("{name}", record.name())
            .replace("{description}", record.description());
        for key in &self.include_metadata_keys {
            if let Some(value) = record.metadata().get(key) {
                let rendered = match value {
                    Value::String(s) => s.clone(),
                    other => other.to_string(),
                };
                out.push('\n');
                out.push_str(key);
                out.push_str(": ");
                out.push_str(&rendered);
            }
        }
        out
    }
}

/// `"<name>: <description>"` for either record type.
pub fn entity_text(record: &impl Describe) -> String {
    TextTemplate::default().render(record)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntityKind {
    Agent,
    Tool,
}

impl EntityKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EntityKind::Agent => "agent",
            EntityKind::Tool => "tool",
        }
    }
}

impl fmt::Display for EntityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which sub-corpus an index covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusScope {
    Joint,
    AgentsOnly,
    ToolsOnly,
}

impl CorpusScope {
    pub const ALL: [CorpusScope; 3] = [
        CorpusScope::Joint,
        CorpusScope::AgentsOnly,
        CorpusScope::ToolsOnly,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CorpusScope::Joint => "joint",
            CorpusScope::AgentsOnly => "agents_only",
            CorpusScope::ToolsOnly => "tools_only",
        }
    }
}

impl fmt::Display for CorpusScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for CorpusScope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "joint" => Ok(CorpusScope::Joint),
            "agents_only" | "agents" => Ok(CorpusScope::AgentsOnly),
            "tools_only" | "tools" => Ok(CorpusScope::ToolsOnly),
            other => Err(Error::Config(format!("unknown corpus scope `{other}`"))),
        }
    }
}

/// `(kind, id)` pair identifying an entity without its text.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EntityRef {
    pub kind: EntityKind,
    pub id: String,
}

impl EntityRef {
    /// Namespaced key (`agent/<id>` or `tool/<id>`), unique across both corpora.
    pub fn key(&self) -> String {
        format!("{}/{}", self.kind, self.id)
    }
}

/// A retrievable unit of the corpus. Only [`Catalog::entities`] builds these,
/// so the text always matches the template output for the source record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogEntity {
    kind: EntityKind,
    id: String,
    indexable_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    owner_agent_id: Option<String>,
}

impl CatalogEntity {
    pub fn kind(&self) -> EntityKind {
        self.kind
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn indexable_text(&self) -> &str {
        &self.indexable_text
    }

    pub fn owner_agent_id(&self) -> Option<&str> {
        self.owner_agent_id.as_deref()
    }

    pub fn key(&self) -> String {
        format!("{}/{}", self.kind, self.id)
    }

    pub fn to_ref(&self) -> EntityRef {
        EntityRef {
            kind: self.kind,
            id: self.id.clone(),
        }
    }
}

#[derive(Deserialize, Serialize)]
struct CatalogFile {
    agents: Vec<AgentRecord>,
    #[serde(default)]
    tools: Vec<ToolRecord>,
}

/// Validated, immutable catalog.
#[derive(Debug, Clone, PartialEq)]
pub struct Catalog {
    agents: Vec<AgentRecord>,
    tools: Vec<ToolRecord>,
    owner_map: BTreeMap<String, String>,
    agent_pos: HashMap<String, usize>,
    tool_pos: HashMap<String, usize>,
}

impl Catalog {
    pub fn new(agents: Vec<AgentRecord>, tools: Vec<ToolRecord>) -> Result<Self> {
        let mut agent_pos = HashMap::with_capacity(agents.len());
        for (i, agent) in agents.iter().enumerate() {
            check_fields(&agent.agent_id, &agent.name, &agent.description)?;
            if agent_pos.insert(agent.agent_id.clone(), i).is_some() {
                return Err(Error::Validation {
                    id: agent.agent_id.clone(),
                    reason: "duplicate agent id".into(),
                });
            }
        }

        let mut tool_pos = HashMap::with_capacity(tools.len());
        let mut owner_map = BTreeMap::new();
        for (i, tool) in tools.iter().enumerate() {
            check_fields(&tool.tool_id, &tool.name, &tool.description)?;
            if tool_pos.insert(tool.tool_id.clone(), i).is_some() {
                return Err(Error::Validation {
                    id: tool.tool_id.clone(),
                    reason: "duplicate tool id".into(),
                });
            }
            if let Some(owner) = &tool.owner_agent_id {
                if !agent_pos.contains_key(owner) {
                    return Err(Error::Validation {
                        id: tool.tool_id.clone(),
                        reason: format!("owner `{owner}` is not a known agent"),
                    });
                }
                owner_map.insert(tool.tool_id.clone(), owner.clone());
            }
        }

        Ok(Catalog {
            agents,
            tools,
            owner_map,
            agent_pos,
            tool_pos,
        })
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        Self::from_json_with_locus(text, "catalog")
    }

    fn from_json_with_locus(text: &str, locus: &str) -> Result<Self> {
        let file: CatalogFile = serde_json::from_str(text).map_err(|e| Error::json(locus, e))?;
        Catalog::new(file.agents, file.tools)
    }

    pub fn to_json_string(&self) -> String {
        let file = CatalogFile {
            agents: self.agents.clone(),
            tools: self.tools.clone(),
        };
        serde_json::to_string_pretty(&file).expect("catalog serializes")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json_string()).map_err(|e| Error::io(path, e))
    }

    pub fn agents(&self) -> &[AgentRecord] {
        &self.agents
    }

    pub fn tools(&self) -> &[ToolRecord] {
        &self.tools
    }

    /// `tool_id -> agent_id` for every tool with a declared owner.
    pub fn owner_map(&self) -> &BTreeMap<String, String> {
        &self.owner_map
    }

    pub fn agent(&self, id: &str) -> Option<&AgentRecord> {
        self.agent_pos.get(id).map(|&i| &self.agents[i])
    }

    pub fn tool(&self, id: &str) -> Option<&ToolRecord> {
        self.tool_pos.get(id).map(|&i| &self.tools[i])
    }

    pub fn contains(&self, kind: EntityKind, id: &str) -> bool {
        match kind {
            EntityKind::Agent => self.agent_pos.contains_key(id),
            EntityKind::Tool => self.tool_pos.contains_key(id),
        }
    }

    pub fn scope_len(&self, scope: CorpusScope) -> usize {
        match scope {
            CorpusScope::Joint => self.agents.len() + self.tools.len(),
            CorpusScope::AgentsOnly => self.agents.len(),
            CorpusScope::ToolsOnly => self.tools.len(),
        }
    }

    pub fn entities(&self, scope: CorpusScope) -> Vec<CatalogEntity> {
        self.entities_with(scope, &TextTemplate::default())
    }

    /// Agents in input order, then tools in input order, restricted to `scope`.
    pub fn entities_with(&self, scope: CorpusScope, template: &TextTemplate) -> Vec<CatalogEntity> {
        let mut out = Vec::with_capacity(self.scope_len(scope));
        if scope != CorpusScope::ToolsOnly {
            out.extend(self.agents.iter().map(|a| CatalogEntity {
                kind: EntityKind::Agent,
                id: a.agent_id.clone(),
                indexable_text: template.render(a),
                owner_agent_id: None,
            }));
        }
        if scope != CorpusScope::AgentsOnly {
            out.extend(self.tools.iter().map(|t| CatalogEntity {
                kind: EntityKind::Tool,
                id: t.tool_id.clone(),
                indexable_text: template.render(t),
                owner_agent_id: t.owner_agent_id.clone(),
            }));
        }
        out
    }

    /// The agent an entity resolves to: itself for agents, the owner for tools.
    pub fn owner_of(&self, kind: EntityKind, id: &str) -> Result<Option<&str>> {
        match kind {
            EntityKind::Agent => self
                .agent(id)
                .map(|a| Some(a.agent_id.as_str()))
                .ok_or_else(|| Error::UnknownEntity(format!("agent/{id}"))),
            EntityKind::Tool => self
                .tool(id)
                .map(|t| t.owner_agent_id.as_deref())
                .ok_or_else(|| Error::UnknownEntity(format!("tool/{id}"))),
        }
    }

    pub fn owner_of_entity(&self, entity: &CatalogEntity) -> Result<Option<&str>> {
        self.owner_of(entity.kind, &entity.id)
    }
}

fn check_fields(id: &str, name: &str, description: &str) -> Result<()> {
    if id.trim().is_empty() {
        return Err(Error::Validation {
            id: id.to_owned(),
            reason: "empty id".into(),
        });
    }
    if name.trim().is_empty() {
        return Err(Error::Validation {
            id: id.to_owned(),
            reason: "empty name".into(),
        });
    }
    if description.trim().is_empty() {
        return Err(Error::Validation {
            id: id.to_owned(),
            reason: "empty description".into(),
        });
    }
    Ok(())
}

pub fn load_catalog(path: &Path) -> Result<Catalog> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Catalog::from_json_with_locus(&text, &path.display().to_string())
}
