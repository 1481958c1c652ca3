//! Benchmark loading, ranking metrics and the method comparison harness.

pub mod benchmark;
pub mod harness;
pub mod metrics;
pub mod report;

pub use benchmark::{load_benchmark, Benchmark, BenchmarkQuestion, BenchmarkStats, BenchmarkStep};
pub use harness::{
    recompute_from_log, run_evaluation, summarize_across_models, EvalConfig, EvalContext,
    EvalOutcome, KMetrics, MethodFailure, MethodSpec, MetricReport, ModelSpread, StepLogRecord,
};
pub use metrics::{ap_at_k, ndcg_at_k, recall_at_k};
pub use report::{read_step_log, write_step_log, ReportDocument, ReportFormat, RunMetadata};
