mod support;

use std::process::Command;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use serde_json::Value;
use toolroute_cli::commands::convert::{run_convert, ConvertArgs};
use toolroute_cli::commands::eval::{run_eval, EvalArgs};
use toolroute_cli::commands::index::{run_index, IndexArgs};
use toolroute_cli::commands::query::{load_engine, run_query, QueryArgs};
use toolroute_cli::commands::serve::{router, ServeState};
use toolroute_cli::{Overrides, RunConfig};
use toolroute_core::retrieval::Support;
use toolroute_core::{CorpusScope, EntityKind};
use tower::ServiceExt;

fn load(path: &std::path::Path) -> RunConfig {
    RunConfig::load(path, &Overrides::default()).unwrap()
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_toolroute"))
}

#[test]
fn index_prints_counts_and_writes_bundles() {
    let (dir, path) = support::workspace();
    let config = load(&path);
    let summary = run_index(&config, &IndexArgs::default()).unwrap();
    assert_eq!(summary.counts_line(), "agents=5 tools=12 joint=17");
    // two providers, three scopes each
    assert_eq!(summary.bundles.len(), 6);
    assert!(dir
        .path()
        .join("out/index/hash-256/joint/dense.json")
        .is_file());
    assert!(dir.path().join("out/index/manifest.json").is_file());
}

#[test]
fn empty_tool_list_makes_joint_equal_agents() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("c.json"),
        r#"{"agents":[{"id":"a","name":"A","description":"alpha"}],"tools":[]}"#,
    )
    .unwrap();
    let config = RunConfig::minimal("c.json").from_parts(dir.path()).unwrap();
    let summary = run_index(&config, &IndexArgs::default()).unwrap();
    assert_eq!(summary.counts_line(), "agents=1 tools=0 joint=1");
    assert!(summary
        .bundles
        .iter()
        .all(|(_, s, _)| *s != CorpusScope::ToolsOnly));
}

#[test]
fn query_respects_k_and_explains_tool_matches() {
    let (_dir, path) = support::workspace();
    let config = load(&path);
    run_index(&config, &IndexArgs::default()).unwrap();
    let args = QueryArgs {
        text: Some("send an email message with a subject".into()),
        k: Some(2),
        explain: true,
        id: "q".into(),
        ..QueryArgs::default()
    };
    let result = run_query(&config, &args).unwrap();
    let step = &result.steps[0];
    assert!(step.agents.len() <= 2);
    assert_eq!(step.agents[0], "mail");
    let support = &step.supporting["mail"];
    assert!(support.iter().any(
        |s| matches!(s, Support::Explained { id, kind: EntityKind::Tool, .. } if id == "send_email")
    ));
}

#[test]
fn steps_file_gives_one_block_per_step() {
    let (dir, path) = support::workspace();
    let config = load(&path);
    run_index(&config, &IndexArgs::default()).unwrap();
    let steps = dir.path().join("steps.txt");
    std::fs::write(
        &steps,
        "search the web\n\nwrite a file\nschedule a meeting\n",
    )
    .unwrap();
    let args = QueryArgs {
        steps: Some(steps),
        id: "multi".into(),
        ..QueryArgs::default()
    };
    let result = run_query(&config, &args).unwrap();
    assert_eq!(result.steps.len(), 3);
    assert_eq!(
        result
            .steps
            .iter()
            .map(|s| s.step_index)
            .collect::<Vec<_>>(),
        vec![1, 2, 3]
    );
}

#[test]
fn query_without_index_is_a_data_error() {
    let (_dir, path) = support::workspace();
    let out = bin()
        .args(["-c", path.to_str().unwrap(), "query", "hello"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn eval_writes_every_report_and_log() {
    let (dir, path) = support::workspace();
    let config = load(&path);
    let summary = run_eval(&config, &EvalArgs::default()).unwrap();
    // 3 embedding methods x 2 providers + 2 lexical methods once
    assert_eq!(summary.document.reports.len(), 8);
    for f in ["report.json", "report.csv", "report.md", "steps.jsonl"] {
        let text = std::fs::read_to_string(dir.path().join("out").join(f)).unwrap();
        assert!(text.contains(&config.hash()), "{f} lacks the config hash");
    }
    let md = summary.document.render_markdown();
    assert!(md.contains("| Retriever model |"));
}

#[test]
fn eval_with_two_methods_gives_two_reports() {
    let (_dir, path) = support::workspace();
    let config = load(&path);
    let args = EvalArgs {
        methods: vec!["tool_to_agent".into(), "agent_only".into()],
        provider: vec!["hash-256".into()],
        ..EvalArgs::default()
    };
    assert_eq!(run_eval(&config, &args).unwrap().document.reports.len(), 2);
}

#[test]
fn unreachable_provider_exits_with_provider_code() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::copy(
        support::data_dir().join("catalog.json"),
        dir.path().join("catalog.json"),
    )
    .unwrap();
    std::fs::copy(
        support::data_dir().join("benchmark.json"),
        dir.path().join("benchmark.json"),
    )
    .unwrap();
    let cfg = support::remote_config(
        "catalog.json",
        "benchmark.json",
        "http://127.0.0.1:9/v1/embeddings",
        32,
    );
    std::fs::write(dir.path().join("run.toml"), cfg).unwrap();
    let out = bin()
        .args(["-c", dir.path().join("run.toml").to_str().unwrap(), "index"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("retrying"));
}

#[test]
fn missing_config_and_bad_flags_exit_with_config_code() {
    let out = bin()
        .args(["-c", "/nonexistent/run.toml", "index"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let out = bin().args(["index", "--no-such-flag"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn binary_index_prints_counts() {
    let (_dir, path) = support::workspace();
    let out = bin()
        .args(["-c", path.to_str().unwrap(), "index"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(
        String::from_utf8_lossy(&out.stdout).trim(),
        "agents=5 tools=12 joint=17"
    );
}

#[test]
fn warm_cache_eval_sends_no_requests() {
    let server = support::MockEmbedServer::start(48, 0);
    let (dir, _) = support::workspace();
    let path = dir.path().join("remote.toml");
    std::fs::write(
        &path,
        support::remote_config("catalog.json", "benchmark.json", &server.url, 48),
    )
    .unwrap();
    let config = load(&path);
    let first = run_eval(&config, &EvalArgs::default()).unwrap();
    assert!(first.provider_requests["mock-embed"] > 0);
    let report = std::fs::read(dir.path().join("out/report.json")).unwrap();
    let hits = server.hits();

    let second = run_eval(&config, &EvalArgs::default()).unwrap();
    assert_eq!(second.provider_requests["mock-embed"], 0);
    assert_eq!(server.hits(), hits);
    assert_eq!(
        std::fs::read(dir.path().join("out/report.json")).unwrap(),
        report
    );
}

#[test]
fn convert_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let servers = dir.path().join("servers.json");
    let annotations = dir.path().join("annotations.json");
    std::fs::write(
        &servers,
        r#"[{"server_name":"fs","description":"files","tools":[{"name":"read_file","description":"read a file"}]},
            {"name":"web","desc":"web","tools":[{"tool_name":"search","desc":"search the web"}]}]"#,
    )
    .unwrap();
    std::fs::write(
        &annotations,
        r#"{"tasks":[{"task_id":"1","query":"read then search","steps":[
            {"step":"read the file","servers":["fs"],"tools":["read_file"]},
            {"step":"search online","tools":["search"]}]}]}"#,
    )
    .unwrap();
    let args = ConvertArgs {
        servers,
        annotations: Some(annotations),
        out_catalog: dir.path().join("catalog.json"),
        out_benchmark: dir.path().join("benchmark.json"),
    };
    let summary = run_convert(&args).unwrap();
    assert_eq!(
        (
            summary.agents,
            summary.tools,
            summary.questions,
            summary.steps
        ),
        (2, 2, 1, 2)
    );
    let catalog = toolroute_core::load_catalog(&args.out_catalog).unwrap();
    let bench = toolroute_core::evaluation::load_benchmark(&args.out_benchmark, &catalog).unwrap();
    assert!(bench.questions[0].steps[1]
        .relevant_agent_ids
        .contains("web"));
}

async fn get(app: axum::Router, uri: &str) -> (StatusCode, Value) {
    let response = app
        .oneshot(Request::builder().uri(uri).body(Body::empty()).unwrap())
        .await
        .unwrap();
    let status = response.status();
    let bytes = response.into_body().collect().await.unwrap().to_bytes();
    (
        status,
        serde_json::from_slice(&bytes).unwrap_or(Value::Null),
    )
}

#[tokio::test]
async fn serve_routes() {
    let (_dir, path) = support::workspace();
    let config = load(&path);
    run_index(&config, &IndexArgs::default()).unwrap();
    let state = Arc::new(ServeState::new(config.hash()));

    let (status, _) = get(router(state.clone()), "/route?q=email").await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
    let (status, _) = get(router(state.clone()), "/healthz").await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);

    state.install(load_engine(&config, None, None, None).unwrap());

    let (status, body) = get(router(state.clone()), "/route?q=send%20an%20email&k=5").await;
    assert_eq!(status, StatusCode::OK);
    assert!(body["steps"][0]["agents"].as_array().unwrap().len() <= 5);
    assert_eq!(body["steps"][0]["agents"][0], "mail");

    let (status, body) = get(
        router(state.clone()),
        "/route?q=send%20an%20email&explain=true",
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["steps"][0]["supporting"]["mail"][0]["kind"], "tool");

    for bad in [
        "/route?q=x&k=abc",
        "/route?q=x&k=0",
        "/route?k=3",
        "/route?q=x&explain=maybe",
    ] {
        let (status, _) = get(router(state.clone()), bad).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{bad}");
    }

    let (status, body) = get(router(state), "/healthz").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["provider_fingerprint"], "hash-256:256");
    assert_eq!(body["entities"], 17);
}
