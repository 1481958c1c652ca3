use std::path::PathBuf;
use std::sync::Arc;

use toolroute_core::retrieval::QueryResult;
use toolroute_core::{CorpusScope, Engine, QuerySpec, RetrievalConfig};

use super::{catalog, embedder};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::store;

#[derive(Debug, Clone, Default, clap::Args)]
pub struct QueryArgs {
    /// Query text (direct mode), or the question text when --steps is given
    pub text: Option<String>,
    /// File with one step per line, or a JSON array of step strings
    #[arg(long)]
    pub steps: Option<PathBuf>,
    /// Number of agents to return (default: retrieval.top_k)
    #[arg(long)]
    pub k: Option<usize>,
    /// Include kind and fused score of each supporting entity
    #[arg(long)]
    pub explain: bool,
    #[arg(long)]
    pub provider: Option<String>,
    /// Corpus scope of the index to query (default: retrieval.corpus_scope)
    #[arg(long)]
    pub scope: Option<CorpusScope>,
    #[arg(long, default_value = "query")]
    pub id: String,
}

/// Loads the persisted bundle and wires it to a fresh embedder.
pub fn load_engine(
    config: &RunConfig,
    provider: Option<&str>,
    scope: Option<CorpusScope>,
    top_k: Option<usize>,
) -> CliResult<Engine> {
    config.check_inputs(false)?;
    let spec = config.provider(provider)?;
    let scope = scope.unwrap_or(config.retrieval.corpus_scope);
    let bundle = store::load_bundle(config, &spec.model_name, scope)?;
    let retrieval = RetrievalConfig {
        corpus_scope: scope,
        top_k: top_k.unwrap_or(config.retrieval.top_k),
        ..config.retrieval.clone()
    };
    let engine = Engine::new(
        catalog(config)?,
        Arc::new(bundle),
        Arc::new(embedder(config, spec)?),
        retrieval,
    )?
    .with_execution(config.eval.settings.execution);
    Ok(engine)
}

fn read_steps(path: &PathBuf) -> CliResult<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| toolroute_core::Error::io(path, e))?;
    let steps: Vec<String> = if text.trim_start().starts_with('[') {
        serde_json::from_str(&text)
            .map_err(|e| toolroute_core::Error::json(path.display().to_string(), e))?
    } else {
        text.lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(str::to_owned)
            .collect()
    };
    if steps.is_empty() {
        return Err(CliError::Data(format!(
            "steps file `{}` has no steps",
            path.display()
        )));
    }
    Ok(steps)
}

pub fn build_query(args: &QueryArgs) -> CliResult<QuerySpec> {
    match (&args.text, &args.steps) {
        (_, Some(path)) => {
            let steps = read_steps(path)?;
            let question = args.text.clone().unwrap_or_else(|| steps.join(" "));
            Ok(QuerySpec::step_wise(args.id.clone(), question, steps)?)
        }
        (Some(text), None) if !text.trim().is_empty() => {
            Ok(QuerySpec::direct(args.id.clone(), text.clone()))
        }
        _ => Err(CliError::Config("give a query text or --steps FILE".into())),
    }
}

pub fn run_query(config: &RunConfig, args: &QueryArgs) -> CliResult<QueryResult> {
    if args.k == Some(0) {
        return Err(CliError::Config("--k must be at least 1".into()));
    }
    let query = build_query(args)?;
    let engine = load_engine(config, args.provider.as_deref(), args.scope, args.k)?;
    let steps = engine.run_query(&query)?;
    Ok(QueryResult::new(&query, &steps, args.explain))
}
