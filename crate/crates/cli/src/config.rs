//! The run configuration file (TOML).
//!
//! Relative paths are resolved against the directory holding the config
//! file. Command-line flags override individual keys before validation.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toolroute_core::evaluation::{EvalConfig, MethodSpec, ReportFormat};
use toolroute_core::{
    Bm25Params, EmbeddingProviderSpec, Execution, FusionMode, ProviderKind, QueryMode,
    RetrievalConfig, TextTemplate,
};

use crate::error::{CliError, CliResult};

fn default_cache_dir() -> String {
    ".toolroute-cache".to_owned()
}
fn default_output_dir() -> String {
    "toolroute-out".to_owned()
}
fn default_methods() -> Vec<String> {
    ["tool_to_agent", "agent_only", "bm25_joint", "bm25_agents"]
        .map(str::to_owned)
        .to_vec()
}
fn default_formats() -> Vec<String> {
    ["json", "csv", "markdown"].map(str::to_owned).to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSection {
    #[serde(default = "default_methods")]
    pub methods: Vec<String>,
    #[serde(default = "default_formats")]
    pub formats: Vec<String>,
    #[serde(flatten)]
    pub settings: EvalConfig,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            methods: default_methods(),
            formats: default_formats(),
            settings: EvalConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub catalog_path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub benchmark_path: Option<String>,
    #[serde(default = "default_cache_dir")]
    pub cache_dir: String,
    #[serde(default = "default_output_dir")]
    pub output_dir: String,
    /// Seed for hash-embedder providers; copied into every such provider.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub retrieval: RetrievalConfig,
    #[serde(default)]
    pub bm25: Bm25Params,
    #[serde(default)]
    pub entity_text: TextTemplate,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub providers: Vec<EmbeddingProviderSpec>,
    #[serde(skip)]
    base_dir: PathBuf,
}

/// Flag values that replace config keys.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    /// Hash embedder seed
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub output_dir: Option<String>,
    #[arg(long, global = true)]
    pub cache_dir: Option<String>,
    /// rrf | weighted_sum | dense_only | lexical_only
    #[arg(long, global = true, value_parser = parse_fusion)]
    pub fusion: Option<FusionMode>,
    /// Candidate list length N
    #[arg(long, global = true)]
    pub top_n: Option<usize>,
    /// direct | step_wise
    #[arg(long, global = true, value_parser = parse_query_mode)]
    pub query_mode: Option<QueryMode>,
    /// Run loops on the calling thread only
    #[arg(long, global = true)]
    pub sequential: bool,
}

fn parse_fusion(s: &str) -> Result<FusionMode, String> {
    serde_json::from_value(serde_json::Value::String(s.to_owned()))
        .map_err(|_| format!("unknown fusion mode `{s}`"))
}

fn parse_query_mode(s: &str) -> Result<QueryMode, String> {
    serde_json::from_value(serde_json::Value::String(s.to_owned()))
        .map_err(|_| format!("unknown query mode `{s}`"))
}

impl RunConfig {
    pub fn load(path: &Path, overrides: &Overrides) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::ConfigFile {
            path: path.to_owned(),
            message: e.to_string(),
        })?;
        let mut config: RunConfig = toml::from_str(&text).map_err(|e| CliError::ConfigFile {
            path: path.to_owned(),
            message: e.to_string(),
        })?;
        config.base_dir = path.parent().map(Path::to_owned).unwrap_or_default();
        config.apply(overrides);
        config.finish()?;
        Ok(config)
    }

    /// Builds a config in code; relative paths resolve against `base_dir`.
    pub fn from_parts(mut self, base_dir: impl Into<PathBuf>) -> CliResult<Self> {
        self.base_dir = base_dir.into();
        self.finish()?;
        Ok(self)
    }

    pub fn minimal(catalog_path: impl Into<String>) -> Self {
        RunConfig {
            catalog_path: catalog_path.into(),
            benchmark_path: None,
            cache_dir: default_cache_dir(),
            output_dir: default_output_dir(),
            seed: 0,
            retrieval: RetrievalConfig::default(),
            bm25: Bm25Params::default(),
            entity_text: TextTemplate::default(),
            eval: EvalSection::default(),
            providers: Vec::new(),
            base_dir: PathBuf::new(),
        }
    }

    fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(dir) = &o.output_dir {
            self.output_dir.clone_from(dir);
        }
        if let Some(dir) = &o.cache_dir {
            self.cache_dir.clone_from(dir);
        }
        if let Some(f) = o.fusion {
            self.retrieval.fusion = f;
        }
        if let Some(n) = o.top_n {
            self.retrieval.top_n = Some(n);
        }
        if let Some(m) = o.query_mode {
            self.eval.settings.query_mode = m;
        }
        if o.sequential {
            self.eval.settings.execution = Execution::Sequential;
        }
    }

    fn finish(&mut self) -> CliResult<()> {
        if self.providers.is_empty() {
            self.providers
                .push(EmbeddingProviderSpec::hash("hash-512", 512, self.seed));
        }
        for p in &mut self.providers {
            if p.kind == ProviderKind::DeterministicHash {
                p.seed = self.seed;
            }
        }
        self.validate()
    }

    fn validate(&self) -> CliResult<()> {
        let mut names = BTreeSet::new();
        for p in &self.providers {
            p.validate()?;
            if !names.insert(p.model_name.as_str()) {
                return Err(CliError::Config(format!(
                    "provider `{}` is listed twice",
                    p.model_name
                )));
            }
        }
        self.retrieval.validate()?;
        self.bm25.validate()?;
        self.eval.settings.validate()?;
        for m in &self.eval.methods {
            MethodSpec::preset(m)?;
        }
        self.report_formats()?;
        Ok(())
    }

    pub fn resolve(&self, path: &str) -> PathBuf {
        self.base_dir.join(path)
    }

    pub fn catalog_file(&self) -> PathBuf {
        self.resolve(&self.catalog_path)
    }

    pub fn benchmark_file(&self) -> CliResult<PathBuf> {
        let path = self
            .benchmark_path
            .as_deref()
            .ok_or_else(|| CliError::Config("benchmark_path is not set".into()))?;
        Ok(self.resolve(path))
    }

    pub fn cache_path(&self) -> PathBuf {
        self.resolve(&self.cache_dir)
    }

    pub fn output_path(&self) -> PathBuf {
        self.resolve(&self.output_dir)
    }

    /// Fails unless every input file the command reads is present.
    pub fn check_inputs(&self, needs_benchmark: bool) -> CliResult<()> {
        let mut required = vec![("catalog_path", self.catalog_file())];
        if needs_benchmark {
            required.push(("benchmark_path", self.benchmark_file()?));
        }
        for (key, path) in required {
            if !path.is_file() {
                return Err(CliError::Config(format!(
                    "{key} `{}` does not exist",
                    path.display()
                )));
            }
        }
        Ok(())
    }

    pub fn provider(&self, name: Option<&str>) -> CliResult<&EmbeddingProviderSpec> {
        match name {
            None => Ok(&self.providers[0]),
            Some(n) => self
                .providers
                .iter()
                .find(|p| p.model_name == n)
                .ok_or_else(|| {
                    let known: Vec<&str> = self
                        .providers
                        .iter()
                        .map(|p| p.model_name.as_str())
                        .collect();
                    CliError::Config(format!(
                        "no provider named `{n}` (configured: {})",
                        known.join(", ")
                    ))
                }),
        }
    }

    pub fn methods(&self) -> CliResult<Vec<MethodSpec>> {
        Ok(self
            .eval
            .methods
            .iter()
            .map(|m| MethodSpec::preset(m))
            .collect::<Result<_, _>>()?)
    }

    pub fn report_formats(&self) -> CliResult<Vec<ReportFormat>> {
        Ok(self
            .eval
            .formats
            .iter()
            .map(|f| f.parse::<ReportFormat>())
            .collect::<Result<_, _>>()?)
    }

    /// SHA-256 over the effective configuration (after overrides).
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }
}

/// File-system safe form of a provider model name.
pub fn slug(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect()
}
