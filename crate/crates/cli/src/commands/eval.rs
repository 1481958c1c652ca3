use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use toolroute_core::evaluation::{
    load_benchmark, run_evaluation, summarize_across_models, write_step_log, EvalContext,
    MethodFailure, MethodSpec, ReportDocument, ReportFormat, RunMetadata,
};

use super::{catalog, embedder, TOOL_VERSION};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Default, clap::Args)]
pub struct EvalArgs {
    /// Methods to run (default: eval.methods)
    #[arg(long, value_delimiter = ',')]
    pub methods: Vec<String>,
    /// Report formats: json, csv, markdown (default: eval.formats)
    #[arg(long, value_delimiter = ',')]
    pub formats: Vec<String>,
    /// Restrict to these providers (model_name)
    #[arg(long, value_delimiter = ',')]
    pub provider: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct EvalSummary {
    pub document: ReportDocument,
    pub files: Vec<PathBuf>,
    /// Provider requests issued per model, retries included.
    pub provider_requests: BTreeMap<String, u64>,
}

pub fn run_metadata(config: &RunConfig, fingerprints: Vec<String>) -> RunMetadata {
    let settings = &config.eval.settings;
    let depth = settings
        .ks
        .iter()
        .copied()
        .max()
        .unwrap_or(1)
        .max(settings.attribution_k);
    RunMetadata {
        tool_version: TOOL_VERSION.to_owned(),
        config_hash: config.hash(),
        seed: config.seed,
        provider_fingerprints: fingerprints,
        retrieval: config.retrieval.clone(),
        effective_top_n: config
            .retrieval
            .top_n
            .map_or((10 * depth).max(50), |n| n.max(depth)),
        bm25: config.bm25,
        entity_text: config.entity_text.clone(),
        embedding_preprocessing: "none".to_owned(),
        query_mode: settings.query_mode,
        ks: settings.ks.clone(),
        attribution_k: settings.attribution_k,
    }
}

pub fn run_eval(config: &RunConfig, args: &EvalArgs) -> CliResult<EvalSummary> {
    config.check_inputs(true)?;
    let methods: Vec<MethodSpec> = if args.methods.is_empty() {
        config.methods()?
    } else {
        args.methods
            .iter()
            .map(|m| MethodSpec::preset(m))
            .collect::<Result<_, _>>()?
    };
    let formats: Vec<ReportFormat> = if args.formats.is_empty() {
        config.report_formats()?
    } else {
        args.formats
            .iter()
            .map(|f| f.parse())
            .collect::<Result<_, _>>()?
    };
    let providers: Vec<_> = if args.provider.is_empty() {
        config.providers.iter().collect()
    } else {
        args.provider
            .iter()
            .map(|p| config.provider(Some(p)))
            .collect::<Result<_, _>>()?
    };

    let catalog = catalog(config)?;
    let benchmark = load_benchmark(&config.benchmark_file()?, &catalog)?;
    log::info!(
        "benchmark: {} questions, {} steps",
        benchmark.stats.questions,
        benchmark.stats.steps
    );

    let mut reports = Vec::new();
    let mut step_log = Vec::new();
    let mut failures = Vec::new();
    let mut requests = BTreeMap::new();
    let fingerprints = providers.iter().map(|p| p.fingerprint()).collect();

    for (i, spec) in providers.iter().enumerate() {
        // Lexical-only methods do not depend on the embedder; run them once.
        let provider_methods: Vec<MethodSpec> = methods
            .iter()
            .filter(|m| i == 0 || !m.is_lexical_only())
            .cloned()
            .collect();
        if provider_methods.is_empty() {
            continue;
        }
        let embedder = match embedder(config, spec) {
            Ok(e) => Arc::new(e),
            Err(e) => {
                log::error!("provider `{}` unavailable: {e}", spec.model_name);
                failures.extend(provider_methods.iter().map(|m| MethodFailure {
                    method: m.name.clone(),
                    model: spec.model_name.clone(),
                    error: e.to_string(),
                }));
                continue;
            }
        };
        let ctx = EvalContext {
            catalog: catalog.clone(),
            embedder: embedder.clone(),
            retrieval: &config.retrieval,
            template: &config.entity_text,
            bm25: config.bm25,
            eval: &config.eval.settings,
        };
        let outcome = run_evaluation(&ctx, &benchmark, &provider_methods)?;
        reports.extend(outcome.reports);
        step_log.extend(outcome.step_log);
        failures.extend(outcome.failures);
        requests.insert(spec.model_name.clone(), embedder.request_count());
    }

    let document = ReportDocument {
        run_metadata: run_metadata(config, fingerprints),
        model_spread: summarize_across_models(&reports),
        reports,
        failures,
    };
    if document.reports.is_empty() {
        let detail: Vec<String> = document
            .failures
            .iter()
            .map(|f| format!("{}/{}: {}", f.method, f.model, f.error))
            .collect();
        return Err(CliError::Core(toolroute_core::Error::Provider {
            status: None,
            retries: 0,
            message: format!("every method failed: {}", detail.join("; ")),
        }));
    }

    let out_dir = config.output_path();
    std::fs::create_dir_all(&out_dir).map_err(|e| toolroute_core::Error::io(&out_dir, e))?;
    let mut files = Vec::new();
    for format in formats {
        let path = out_dir.join(format!("report.{}", format.extension()));
        document.write(format, &path)?;
        files.push(path);
    }
    let log_path = out_dir.join("steps.jsonl");
    write_step_log(&log_path, &document.run_metadata, &step_log)?;
    files.push(log_path);

    Ok(EvalSummary {
        document,
        files,
        provider_requests: requests,
    })
}

impl EvalSummary {
    pub fn failures_text(&self) -> Vec<String> {
        self.document
            .failures
            .iter()
            .map(|f| {
                format!(
                    "method `{}` with `{}` failed: {}",
                    f.method, f.model, f.error
                )
            })
            .collect()
    }
}
