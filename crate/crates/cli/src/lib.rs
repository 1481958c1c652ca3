//! Command-line front end: `index`, `query`, `eval`, `serve` and `convert`
//! driven by one TOML run configuration.

pub mod commands;
pub mod config;
pub mod error;
pub mod store;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::{Overrides, RunConfig};
pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(
    name = "toolroute",
    version,
    about = "Route queries to MCP servers through a joint tool/agent index"
)]
pub struct Cli {
    /// Run configuration file
    #[arg(long, short, global = true, default_value = "toolroute.toml")]
    pub config: PathBuf,
    #[command(flatten)]
    pub overrides: Overrides,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build and persist lexical and dense indexes
    Index(commands::index::IndexArgs),
    /// Route a query (or a file of steps) to agents; prints JSON
    Query(commands::query::QueryArgs),
    /// Evaluate methods against the benchmark and write reports
    Eval(commands::eval::EvalArgs),
    /// Serve GET /route and GET /healthz
    Serve(commands::serve::ServeArgs),
    /// Convert LiveMCPBench exports to native catalog/benchmark files
    Convert(commands::convert::ConvertArgs),
}

pub fn run(cli: &Cli) -> CliResult<()> {
    if let Command::Convert(args) = &cli.command {
        let s = commands::convert::run_convert(args)?;
        println!(
            "agents={} tools={} questions={} steps={} dropped_references={}",
            s.agents, s.tools, s.questions, s.steps, s.dropped_references
        );
        return Ok(());
    }
    let config = RunConfig::load(&cli.config, &cli.overrides)?;
    match &cli.command {
        Command::Index(args) => {
            let summary = commands::index::run_index(&config, args)?;
            println!("{}", summary.counts_line());
            for (model, scope, n) in &summary.bundles {
                log::info!("indexed {model}/{scope}: {n} entities");
            }
        }
        Command::Query(args) => {
            let result = commands::query::run_query(&config, args)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&result).expect("result serializes")
            );
        }
        Command::Eval(args) => {
            let summary = commands::eval::run_eval(&config, args)?;
            print!("{}", summary.document.render_markdown());
            for f in &summary.failures_text() {
                eprintln!("{f}");
            }
            for path in &summary.files {
                log::info!("wrote {}", path.display());
            }
        }
        Command::Serve(args) => commands::serve::run_serve(&config, args)?,
        Command::Convert(_) => unreachable!("handled above"),
    }
    Ok(())
}
