use std::path::PathBuf;

use toolroute_core::{CorpusScope, IndexBundle};

use super::{catalog, embedder, TOOL_VERSION};
use crate::config::RunConfig;
use crate::error::CliResult;
use crate::store::{self, IndexManifest, MANIFEST_FORMAT};

#[derive(Debug, Clone, Default, clap::Args)]
pub struct IndexArgs {
    /// Only index with this provider (model_name); default: all configured
    #[arg(long)]
    pub provider: Option<String>,
    /// Corpus scopes to build; default: joint, agents_only, tools_only
    #[arg(long, value_delimiter = ',')]
    pub scope: Vec<CorpusScope>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexSummary {
    pub agents: usize,
    pub tools: usize,
    pub joint: usize,
    pub bundles: Vec<(String, CorpusScope, usize)>,
    pub provider_requests: u64,
    pub index_dir: PathBuf,
}

impl IndexSummary {
    pub fn counts_line(&self) -> String {
        format!(
            "agents={} tools={} joint={}",
            self.agents, self.tools, self.joint
        )
    }
}

pub fn run_index(config: &RunConfig, args: &IndexArgs) -> CliResult<IndexSummary> {
    config.check_inputs(false)?;
    let catalog = catalog(config)?;
    let scopes = if args.scope.is_empty() {
        CorpusScope::ALL.to_vec()
    } else {
        args.scope.clone()
    };
    let providers = match &args.provider {
        Some(name) => vec![config.provider(Some(name))?],
        None => config.providers.iter().collect(),
    };

    let mut entries = Vec::new();
    let mut bundles = Vec::new();
    let mut requests = 0;
    for spec in providers {
        let embedder = embedder(config, spec)?;
        for &scope in &scopes {
            if catalog.scope_len(scope) == 0 {
                log::warn!("skipping empty `{scope}` corpus");
                continue;
            }
            let bundle =
                IndexBundle::build(&catalog, scope, &config.entity_text, config.bm25, &embedder)?;
            entries.push(store::save_bundle(config, &spec.model_name, &bundle)?);
            bundles.push((spec.model_name.clone(), scope, bundle.len()));
        }
        requests += embedder.request_count();
    }

    // Keep entries of providers not rebuilt this time.
    if let Ok(old) = store::read_manifest(config) {
        if old.config_hash == config.hash() {
            for e in old.entries {
                if !entries
                    .iter()
                    .any(|n| n.provider == e.provider && n.scope == e.scope)
                {
                    entries.push(e);
                }
            }
        }
    }
    entries.sort_by(|a, b| (&a.provider, a.scope).cmp(&(&b.provider, b.scope)));
    store::write_manifest(
        config,
        &IndexManifest {
            format: MANIFEST_FORMAT.to_owned(),
            tool_version: TOOL_VERSION.to_owned(),
            config_hash: config.hash(),
            seed: config.seed,
            bm25: config.bm25,
            entity_text: config.entity_text.clone(),
            entries,
        },
    )?;

    Ok(IndexSummary {
        agents: catalog.scope_len(CorpusScope::AgentsOnly),
        tools: catalog.scope_len(CorpusScope::ToolsOnly),
        joint: catalog.scope_len(CorpusScope::Joint),
        bundles,
        provider_requests: requests,
        index_dir: store::index_root(config),
    })
}
