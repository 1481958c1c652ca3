//! On-disk layout of persisted index bundles:
//! `<output_dir>/index/<model>/<scope>/{lexical,dense}.json` plus
//! `<output_dir>/index/manifest.json`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toolroute_core::{
    Bm25Params, CorpusScope, DenseIndex, IndexBundle, LexicalIndex, TextTemplate,
};

use crate::config::{slug, RunConfig};
use crate::error::{CliError, CliResult};

pub const MANIFEST_FORMAT: &str = "toolroute-manifest/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub provider: String,
    pub provider_fingerprint: String,
    pub scope: CorpusScope,
    pub entities: usize,
    pub lexical: String,
    pub dense: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexManifest {
    pub format: String,
    pub tool_version: String,
    pub config_hash: String,
    pub seed: u64,
    pub bm25: Bm25Params,
    pub entity_text: TextTemplate,
    pub entries: Vec<ManifestEntry>,
}

pub fn index_root(config: &RunConfig) -> PathBuf {
    config.output_path().join("index")
}

fn manifest_path(config: &RunConfig) -> PathBuf {
    index_root(config).join("manifest.json")
}

fn relative_dir(model: &str, scope: CorpusScope) -> PathBuf {
    PathBuf::from(slug(model)).join(scope.as_str())
}

fn create_dir(path: &Path) -> CliResult<()> {
    std::fs::create_dir_all(path).map_err(|e| toolroute_core::Error::io(path, e).into())
}

/// Writes one bundle and returns its manifest entry.
pub fn save_bundle(
    config: &RunConfig,
    model: &str,
    bundle: &IndexBundle,
) -> CliResult<ManifestEntry> {
    let rel = relative_dir(model, bundle.scope());
    let dir = index_root(config).join(&rel);
    create_dir(&dir)?;
    bundle.lexical().save(&dir.join("lexical.json"))?;
    bundle.dense().save(&dir.join("dense.json"))?;
    let rel_str = |f: &str| rel.join(f).to_string_lossy().replace('\\', "/");
    Ok(ManifestEntry {
        provider: model.to_owned(),
        provider_fingerprint: bundle.dense().provider_fingerprint().to_owned(),
        scope: bundle.scope(),
        entities: bundle.len(),
        lexical: rel_str("lexical.json"),
        dense: rel_str("dense.json"),
    })
}

pub fn write_manifest(config: &RunConfig, manifest: &IndexManifest) -> CliResult<()> {
    let root = index_root(config);
    create_dir(&root)?;
    let path = manifest_path(config);
    let mut text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| toolroute_core::Error::io(&path, e))?;
    Ok(())
}

pub fn read_manifest(config: &RunConfig) -> CliResult<IndexManifest> {
    let path = manifest_path(config);
    if !path.is_file() {
        return Err(CliError::Data(format!(
            "no index at `{}`; run `toolroute index` first",
            index_root(config).display()
        )));
    }
    let text = std::fs::read_to_string(&path).map_err(|e| toolroute_core::Error::io(&path, e))?;
    let manifest: IndexManifest = serde_json::from_str(&text)
        .map_err(|e| toolroute_core::Error::json(path.display().to_string(), e))?;
    if manifest.format != MANIFEST_FORMAT {
        return Err(toolroute_core::Error::FormatVersion {
            kind: "index manifest",
            expected: MANIFEST_FORMAT.to_owned(),
            found: manifest.format,
        }
        .into());
    }
    Ok(manifest)
}

/// Loads the bundle for `(model, scope)`, refusing indexes built with
/// different text or BM25 settings than the current config.
pub fn load_bundle(config: &RunConfig, model: &str, scope: CorpusScope) -> CliResult<IndexBundle> {
    let manifest = read_manifest(config)?;
    if manifest.entity_text != config.entity_text
        || manifest.bm25 != config.bm25
        || manifest.seed != config.seed
    {
        return Err(CliError::Config(
            "index was built with different entity_text, bm25 or seed settings; re-run `toolroute index`".into(),
        ));
    }
    let entry = manifest
        .entries
        .iter()
        .find(|e| e.provider == model && e.scope == scope)
        .ok_or_else(|| {
            CliError::Data(format!(
                "index has no `{scope}` bundle for provider `{model}`"
            ))
        })?;
    let root = index_root(config);
    let lexical = LexicalIndex::load(&root.join(&entry.lexical))?;
    let dense = DenseIndex::load(&root.join(&entry.dense))?;
    Ok(IndexBundle::from_parts(lexical, dense)?)
}
