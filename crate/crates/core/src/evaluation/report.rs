//! Report rendering. Every artifact carries the run metadata needed to
//! reproduce it from the embedding cache.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::harness::{MethodFailure, MetricReport, ModelSpread, StepLogRecord};
use crate::catalog::TextTemplate;
use crate::error::{Error, Result};
use crate::lexical::Bm25Params;
use crate::retrieval::{QueryMode, RetrievalConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub tool_version: String,
    pub config_hash: String,
    pub seed: u64,
    pub provider_fingerprints: Vec<String>,
    pub retrieval: RetrievalConfig,
    pub effective_top_n: usize,
    pub bm25: Bm25Params,
    pub entity_text: TextTemplate,
    /// Text preprocessing applied before embedding (queries and entities alike).
    pub embedding_preprocessing: String,
    pub query_mode: QueryMode,
    pub ks: Vec<usize>,
    pub attribution_k: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
    Markdown,
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Json => "json",
            ReportFormat::Csv => "csv",
            ReportFormat::Markdown => "md",
        }
    }
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            "markdown" | "markdown_table" | "md" => Ok(ReportFormat::Markdown),
            other => Err(Error::Config(format!("unknown report format `{other}`"))),
        }
    }
}

/// The complete output of an evaluation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub run_metadata: RunMetadata,
    pub reports: Vec<MetricReport>,
    #[serde(default)]
    pub model_spread: Vec<ModelSpread>,
    #[serde(default)]
    pub failures: Vec<MethodFailure>,
}

pub const CSV_COLUMNS: [&str; 8] = [
    "method",
    "model",
    "k",
    "recall",
    "map",
    "ndcg",
    "agent_corpus_share_topk",
    "matched_tools_tracing_to_agents_share",
];

impl ReportDocument {
    pub fn render(&self, format: ReportFormat) -> Result<String> {
        if self.reports.is_empty() && self.failures.is_empty() {
            return Err(Error::Config("no reports to emit".into()));
        }
        Ok(match format {
            ReportFormat::Json => self.render_json(),
            ReportFormat::Csv => self.render_csv(),
            ReportFormat::Markdown => self.render_markdown(),
        })
    }

    pub fn render_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::json("report", e))
    }

    pub fn render_csv(&self) -> String {
        let mut out = String::new();
        let meta = serde_json::to_string(&self.run_metadata).expect("metadata serializes");
        let _ = writeln!(out, "# run_metadata: {meta}");
        out.push_str(&CSV_COLUMNS.join(","));
        out.push('\n');
        for r in &self.reports {
            for (k, m) in &r.per_k {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{}",
                    csv_field(&r.method_name),
                    csv_field(&r.embedding_model),
                    k,
                    m.recall,
                    m.map,
                    m.ndcg,
                    r.agent_corpus_share_topk,
                    r.matched_tools_tracing_to_agents_share
                );
            }
        }
        out
    }

    pub fn render_markdown(&self) -> String {
        let mut out = String::new();
        let meta = serde_json::to_string(&self.run_metadata).expect("metadata serializes");
        let _ = writeln!(out, "<!-- run_metadata: {meta} -->");
        out.push_str(&results_table(&self.reports));

        let models: std::collections::BTreeSet<&str> = self
            .reports
            .iter()
            .map(|r| r.embedding_model.as_str())
            .filter(|m| *m != "none")
            .collect();
        if models.len() > 1 {
            out.push('\n');
            out.push_str(&per_model_table(&self.reports));
        }
        if !self.model_spread.is_empty() && models.len() > 1 {
            out.push_str(
                "\n| Method | K | Models | Recall mean ± sd | mAP mean ± sd | nDCG mean ± sd |\n",
            );
            out.push_str("|---|---|---|---|---|---|\n");
            for s in &self.model_spread {
                let _ = writeln!(
                    out,
                    "| {} | {} | {} | {:.4} ± {:.4} | {:.4} ± {:.4} | {:.4} ± {:.4} |",
                    s.method_name,
                    s.k,
                    s.models,
                    s.mean.recall,
                    s.std_dev.recall,
                    s.mean.map,
                    s.std_dev.map,
                    s.mean.ndcg,
                    s.std_dev.ndcg
                );
            }
        }

        out.push_str(
            "\n| Method | Model | Steps | Agent-corpus share | Matched tools tracing to agents |\n",
        );
        out.push_str("|---|---|---|---|---|\n");
        for r in &self.reports {
            let _ = writeln!(
                out,
                "| {} | {} | {} | {:.4} | {:.4} |",
                r.method_name,
                r.embedding_model,
                r.step_count,
                r.agent_corpus_share_topk,
                r.matched_tools_tracing_to_agents_share
            );
        }

        if !self.failures.is_empty() {
            out.push_str("\nFailed methods:\n\n");
            for f in &self.failures {
                let _ = writeln!(out, "- {} ({}): {}", f.method, f.model, f.error);
            }
        }
        out
    }

    pub fn write(&self, format: ReportFormat, path: &Path) -> Result<()> {
        let text = self.render(format)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

/// Methods as rows; Recall, mAP and nDCG as column groups over every K.
pub fn results_table(reports: &[MetricReport]) -> String {
    let ks: Vec<usize> = reports
        .first()
        .map(|r| r.per_k.keys().copied().collect())
        .unwrap_or_default();
    let k_labels = ks
        .iter()
        .map(|k| format!("@{k}"))
        .collect::<Vec<_>>()
        .join(" / ");
    let mut out = String::new();
    out.push_str("| Approach | Model | Recall | mAP | nDCG |\n");
    out.push_str("|---|---|---|---|---|\n");
    let _ = writeln!(out, "| | | {k_labels} | {k_labels} | {k_labels} |");
    for r in reports {
        let group = |f: fn(&super::harness::KMetrics) -> f64| {
            ks.iter()
                .map(|k| {
                    r.per_k
                        .get(k)
                        .map_or("-".to_owned(), |m| format!("{:.4}", f(m)))
                })
                .collect::<Vec<_>>()
                .join(" / ")
        };
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} |",
            r.method_name,
            r.embedding_model,
            group(|m| m.recall),
            group(|m| m.map),
            group(|m| m.ndcg)
        );
    }
    out
}

/// Embedding models as rows, one column per (metric, method) at the
/// largest K not above 5.
pub fn per_model_table(reports: &[MetricReport]) -> String {
    let mut methods: Vec<&str> = Vec::new();
    let mut models: Vec<&str> = Vec::new();
    for r in reports.iter().filter(|r| r.embedding_model != "none") {
        if !methods.contains(&r.method_name.as_str()) {
            methods.push(&r.method_name);
        }
        if !models.contains(&r.embedding_model.as_str()) {
            models.push(&r.embedding_model);
        }
    }
    let k = reports
        .first()
        .and_then(|r| r.per_k.keys().copied().filter(|&k| k <= 5).max())
        .or_else(|| reports.first().and_then(|r| r.per_k.keys().copied().min()))
        .unwrap_or(5);

    type Column = (&'static str, fn(&super::harness::KMetrics) -> f64);
    let metrics: [Column; 3] = [
        ("Recall", |m| m.recall),
        ("nDCG", |m| m.ndcg),
        ("mAP", |m| m.map),
    ];
    let mut out = String::new();
    out.push_str("| Retriever model |");
    for (name, _) in &metrics {
        for method in &methods {
            let _ = write!(out, " {name}@{k} {method} |");
        }
    }
    out.push('\n');
    out.push_str("|---|");
    out.push_str(&"---|".repeat(metrics.len() * methods.len()));
    out.push('\n');
    for model in &models {
        let _ = write!(out, "| {model} |");
        for (_, f) in &metrics {
            for method in &methods {
                let cell = reports
                    .iter()
                    .find(|r| r.method_name == *method && r.embedding_model == *model)
                    .and_then(|r| r.per_k.get(&k))
                    .map_or("-".to_owned(), |m| format!("{:.4}", f(m)));
                let _ = write!(out, " {cell} |");
            }
        }
        out.push('\n');
    }
    out
}

/// Writes the per-step log: a metadata line, then one record per line.
pub fn write_step_log(
    path: &Path,
    metadata: &RunMetadata,
    records: &[StepLogRecord],
) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let header = serde_json::json!({ "run_metadata": metadata });
    let io = |e| Error::io(path, e);
    writeln!(w, "{header}").map_err(io)?;
    for r in records {
        writeln!(
            w,
            "{}",
            serde_json::to_string(r).expect("log record serializes")
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_step_log(path: &Path) -> Result<Vec<StepLogRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() || line.starts_with("{\"run_metadata\"") {
            continue;
        }
        let record = serde_json::from_str(&line)
            .map_err(|e| Error::json(format!("{} record {}", path.display(), i + 1), e))?;
        out.push(record);
    }
    Ok(out)
}
