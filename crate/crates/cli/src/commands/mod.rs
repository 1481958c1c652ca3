pub mod convert;
pub mod eval;
pub mod index;
pub mod query;
pub mod serve;

use std::sync::Arc;

use toolroute_core::dense::EmbeddingCache;
use toolroute_core::{load_catalog, Catalog, Embedder, EmbeddingProviderSpec, ProviderKind};

use crate::config::RunConfig;
use crate::error::CliResult;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub(crate) fn catalog(config: &RunConfig) -> CliResult<Arc<Catalog>> {
    Ok(Arc::new(load_catalog(&config.catalog_file())?))
}

pub(crate) fn embedder(config: &RunConfig, spec: &EmbeddingProviderSpec) -> CliResult<Embedder> {
    let cache = match spec.kind {
        ProviderKind::HttpApi => Some(EmbeddingCache::open(config.cache_path())?),
        ProviderKind::DeterministicHash => None,
    };
    Ok(Embedder::from_spec(spec.clone(), cache)?)
}
