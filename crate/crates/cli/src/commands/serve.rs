//! Read-only HTTP endpoint over a loaded engine.
//!
//! `GET /route?q=..&k=..&explain=..` answers with the same JSON as `query`;
//! `GET /healthz` reports what is loaded. Until the index has loaded every
//! route answers 503.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock};

use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde_json::json;
use toolroute_core::retrieval::QueryResult;
use toolroute_core::{CorpusScope, Engine, Error as CoreError, QuerySpec};

use super::query::load_engine;
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, clap::Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1")]
    pub bind: String,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long)]
    pub provider: Option<String>,
    #[arg(long)]
    pub scope: Option<CorpusScope>,
}

#[derive(Default)]
pub struct ServeState {
    engine: OnceLock<Arc<Engine>>,
    config_hash: String,
}

impl ServeState {
    pub fn new(config_hash: impl Into<String>) -> Self {
        ServeState {
            engine: OnceLock::new(),
            config_hash: config_hash.into(),
        }
    }

    /// Installs the engine; later calls are ignored.
    pub fn install(&self, engine: Engine) {
        let _ = self.engine.set(Arc::new(engine));
    }

    fn engine(&self) -> Result<Arc<Engine>, Box<Response>> {
        self.engine
            .get()
            .cloned()
            .ok_or_else(|| Box::new(error(StatusCode::SERVICE_UNAVAILABLE, "index not loaded")))
    }
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": message.into() }))).into_response()
}

pub fn router(state: Arc<ServeState>) -> Router {
    Router::new()
        .route("/route", get(route))
        .route("/healthz", get(healthz))
        .with_state(state)
}

async fn healthz(State(state): State<Arc<ServeState>>) -> Response {
    let engine = match state.engine() {
        Ok(e) => e,
        Err(r) => return *r,
    };
    let bundle = engine.bundle();
    Json(json!({
        "status": "ok",
        "provider_fingerprint": bundle.dense().provider_fingerprint(),
        "scope": bundle.scope(),
        "entities": bundle.len(),
        "config_hash": state.config_hash,
    }))
    .into_response()
}

fn parse_flag(value: Option<&String>) -> Option<bool> {
    match value.map(String::as_str) {
        None => Some(false),
        Some("1" | "true" | "yes") => Some(true),
        Some("0" | "false" | "no") => Some(false),
        Some(_) => None,
    }
}

async fn route(
    State(state): State<Arc<ServeState>>,
    Query(params): Query<HashMap<String, String>>,
) -> Response {
    let engine = match state.engine() {
        Ok(e) => e,
        Err(r) => return *r,
    };
    let Some(q) = params.get("q").filter(|q| !q.trim().is_empty()).cloned() else {
        return error(StatusCode::BAD_REQUEST, "missing query parameter `q`");
    };
    let max_k = engine.config().effective_top_n();
    let k = match params.get("k") {
        None => engine.config().top_k,
        Some(raw) => match raw.parse::<usize>() {
            Ok(k) if (1..=max_k).contains(&k) => k,
            _ => {
                return error(
                    StatusCode::BAD_REQUEST,
                    format!("`k` must be an integer in 1..={max_k}"),
                )
            }
        },
    };
    let Some(explain) = parse_flag(params.get("explain")) else {
        return error(StatusCode::BAD_REQUEST, "`explain` must be true or false");
    };

    let outcome = tokio::task::spawn_blocking(move || {
        let query = QuerySpec::direct("route", q);
        engine
            .run_query_k(&query, k)
            .map(|steps| QueryResult::new(&query, &steps, explain))
    })
    .await;
    match outcome {
        Ok(Ok(result)) => Json(result).into_response(),
        Ok(Err(e @ (CoreError::Provider { .. } | CoreError::CredentialMissing(_)))) => {
            error(StatusCode::BAD_GATEWAY, e.to_string())
        }
        Ok(Err(e)) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

pub fn run_serve(config: &RunConfig, args: &ServeArgs) -> CliResult<()> {
    let runtime = tokio::runtime::Runtime::new()
        .map_err(|e| CliError::Config(format!("tokio runtime: {e}")))?;
    runtime.block_on(async {
        let addr = format!("{}:{}", args.bind, args.port);
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .map_err(|e| CliError::Config(format!("cannot bind {addr}: {e}")))?;
        let state = Arc::new(ServeState::new(config.hash()));

        let loader_state = state.clone();
        let config = config.clone();
        let args = args.clone();
        let loader = tokio::task::spawn_blocking(move || {
            let engine = load_engine(&config, args.provider.as_deref(), args.scope, None)?;
            loader_state.install(engine);
            CliResult::Ok(())
        });
        log::info!("listening on http://{addr}");

        // Resolves only if loading fails; a loaded index keeps it pending.
        let watcher = async move {
            match loader.await {
                Ok(Ok(())) => {
                    log::info!("index loaded");
                    std::future::pending::<CliResult<()>>().await
                }
                Ok(Err(e)) => Err(e),
                Err(e) => Err(CliError::Config(format!("index loader panicked: {e}"))),
            }
        };
        tokio::select! {
            res = axum::serve(listener, router(state)) => {
                res.map_err(|e| CliError::Config(format!("server error: {e}")))
            }
            failed = watcher => failed,
        }
    })
}
