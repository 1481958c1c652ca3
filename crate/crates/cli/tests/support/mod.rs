#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use serde_json::{json, Value};
use toolroute_core::hash_embed;

pub fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data")
}

/// Copies the sample catalog, benchmark and config into a fresh directory.
pub fn workspace() -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    for f in ["catalog.json", "benchmark.json", "toolroute.toml"] {
        std::fs::copy(data_dir().join(f), dir.path().join(f)).unwrap();
    }
    let config = dir.path().join("toolroute.toml");
    (dir, config)
}

/// An OpenAI-style embeddings endpoint answering with hash embeddings.
/// The first `fail_first` requests get a 503.
pub struct MockEmbedServer {
    pub url: String,
    pub hits: Arc<AtomicUsize>,
}

impl MockEmbedServer {
    pub fn start(dimension: usize, fail_first: usize) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1/embeddings", listener.local_addr().unwrap());
        let hits = Arc::new(AtomicUsize::new(0));
        let counter = hits.clone();
        std::thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(stream) = stream else { continue };
                let counter = counter.clone();
                std::thread::spawn(move || handle(stream, &counter, dimension, fail_first));
            }
        });
        MockEmbedServer { url, hits }
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }
}

fn handle(
    mut stream: std::net::TcpStream,
    counter: &AtomicUsize,
    dimension: usize,
    fail_first: usize,
) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut length = 0usize;
    let mut line = String::new();
    loop {
        line.clear();
        if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
            break;
        }
        if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
            length = v.trim().parse().unwrap_or(0);
        }
    }
    let mut body = vec![0u8; length];
    if reader.read_exact(&mut body).is_err() {
        return;
    }
    let n = counter.fetch_add(1, Ordering::SeqCst);
    let (status, payload) = if n < fail_first {
        ("503 Service Unavailable", "{}".to_owned())
    } else {
        let request: Value = serde_json::from_slice(&body).unwrap();
        let data: Vec<Value> = request["input"]
            .as_array()
            .unwrap()
            .iter()
            .enumerate()
            .map(|(i, t)| json!({"index": i, "embedding": hash_embed(t.as_str().unwrap(), dimension, 5).values()}))
            .collect();
        ("200 OK", json!({"data": data}).to_string())
    };
    let _ = write!(
        stream,
        "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
        payload.len()
    );
}

/// Config text pointing at a mock endpoint.
pub fn remote_config(catalog: &str, benchmark: &str, url: &str, dimension: usize) -> String {
    format!(
        r#"catalog_path = "{catalog}"
benchmark_path = "{benchmark}"
cache_dir = "cache"
output_dir = "out"
seed = 1

[eval]
methods = ["tool_to_agent", "agent_only", "bm25_joint"]

[[providers]]
kind = "http_api"
model_name = "mock-embed"
endpoint = "{url}"
dimension = {dimension}
batch_size = 32
retry_base_ms = 1
"#
    )
}
