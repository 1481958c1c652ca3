use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{hash_embed, EmbeddingCache, EmbeddingVector};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    HttpApi,
    DeterministicHash,
}

/// JSON field names of an embedding endpoint. Defaults match the common
/// `{model, input: [..]}` → `{data: [{embedding: [..]}]}` shape.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpFields {
    pub model: String,
    pub input: String,
    pub data: String,
    pub embedding: String,
    pub auth_header: String,
    pub auth_scheme: String,
}

impl Default for HttpFields {
    fn default() -> Self {
        HttpFields {
            model: "model".into(),
            input: "input".into(),
            data: "data".into(),
            embedding: "embedding".into(),
            auth_header: "Authorization".into(),
            auth_scheme: "Bearer".into(),
        }
    }
}

fn default_batch_size() -> usize {
    64
}
fn default_in_flight() -> usize {
    4
}
fn default_attempts() -> u32 {
    3
}
fn default_retry_base_ms() -> u64 {
    500
}
fn default_timeout_secs() -> u64 {
    60
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingProviderSpec {
    pub kind: ProviderKind,
    pub model_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    pub dimension: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub credential_env_var: Option<String>,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    /// Hash embedder seed; ignored by HTTP providers.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub fields: HttpFields,
    #[serde(default = "default_attempts")]
    pub max_attempts: u32,
    #[serde(default = "default_retry_base_ms")]
    pub retry_base_ms: u64,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

impl EmbeddingProviderSpec {
    pub fn hash(model_name: impl Into<String>, dimension: usize, seed: u64) -> Self {
        EmbeddingProviderSpec {
            kind: ProviderKind::DeterministicHash,
            model_name: model_name.into(),
            endpoint: None,
            dimension,
            batch_size: default_batch_size(),
            credential_env_var: None,
            max_in_flight: default_in_flight(),
            seed,
            fields: HttpFields::default(),
            max_attempts: default_attempts(),
            retry_base_ms: default_retry_base_ms(),
            timeout_secs: default_timeout_secs(),
        }
    }

    pub fn http(
        model_name: impl Into<String>,
        endpoint: impl Into<String>,
        dimension: usize,
        credential_env_var: Option<&str>,
    ) -> Self {
        EmbeddingProviderSpec {
            kind: ProviderKind::HttpApi,
            endpoint: Some(endpoint.into()),
            credential_env_var: credential_env_var.map(str::to_owned),
            ..Self::hash(model_name, dimension, 0)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.model_name.trim().is_empty() {
            return Err(Error::Config("provider model_name is empty".into()));
        }
        if self.dimension == 0 {
            return Err(Error::Config(format!(
                "provider `{}`: dimension must be > 0",
                self.model_name
            )));
        }
        if self.batch_size == 0 || self.max_in_flight == 0 || self.max_attempts == 0 {
            return Err(Error::Config(format!(
                "provider `{}`: batch_size, max_in_flight and max_attempts must be >= 1",
                self.model_name
            )));
        }
        match self.kind {
            ProviderKind::DeterministicHash if self.dimension < 8 => Err(Error::Config(format!(
                "provider `{}`: hash embedder needs dimension >= 8",
                self.model_name
            ))),
            ProviderKind::HttpApi if self.endpoint.is_none() => Err(Error::Config(format!(
                "provider `{}`: http_api needs an endpoint",
                self.model_name
            ))),
            _ => Ok(()),
        }
    }

    pub fn fingerprint(&self) -> String {
        format!("{}:{}", self.model_name, self.dimension)
    }
}

/// Raw embedding source. One call is one provider request.
pub trait EmbeddingBackend: Send + Sync {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>>;

    /// Whether results are worth persisting to the on-disk cache.
    fn is_remote(&self) -> bool;

    /// Whether a failed call may succeed on retry.
    fn is_transient(&self, _err: &Error) -> bool {
        false
    }
}

pub struct HashBackend {
    dimension: usize,
    seed: u64,
}

impl HashBackend {
    pub fn new(dimension: usize, seed: u64) -> Self {
        HashBackend { dimension, seed }
    }
}

impl EmbeddingBackend for HashBackend {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>> {
        Ok(texts
            .iter()
            .map(|t| hash_embed(t, self.dimension, self.seed).values().to_vec())
            .collect())
    }

    fn is_remote(&self) -> bool {
        false
    }
}

pub struct HttpBackend {
    agent: ureq::Agent,
    endpoint: String,
    model: String,
    fields: HttpFields,
    credential_var: Option<String>,
    credential: Option<String>,
}

impl HttpBackend {
    /// The credential is read now but only required when a request is sent,
    /// so a fully cached run works without it.
    pub fn new(spec: &EmbeddingProviderSpec) -> Result<Self> {
        let endpoint = spec.endpoint.clone().ok_or_else(|| {
            Error::Config(format!("provider `{}` has no endpoint", spec.model_name))
        })?;
        let credential = spec
            .credential_env_var
            .as_deref()
            .and_then(|var| std::env::var(var).ok())
            .filter(|v| !v.is_empty());
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(spec.timeout_secs)))
            .build()
            .into();
        Ok(HttpBackend {
            agent,
            endpoint,
            model: spec.model_name.clone(),
            fields: spec.fields.clone(),
            credential_var: spec.credential_env_var.clone(),
            credential,
        })
    }

    fn parse_response(&self, body: &Value, expected: usize) -> Result<Vec<Vec<f32>>> {
        let bad = |message: String| Error::Provider {
            status: None,
            retries: 0,
            message,
        };
        let data = body
            .get(&self.fields.data)
            .and_then(Value::as_array)
            .ok_or_else(|| bad(format!("response has no `{}` array", self.fields.data)))?;
        if data.len() != expected {
            return Err(bad(format!(
                "expected {expected} embeddings, got {}",
                data.len()
            )));
        }
        let mut rows: Vec<(usize, Vec<f32>)> = Vec::with_capacity(data.len());
        for (pos, item) in data.iter().enumerate() {
            let index = item
                .get("index")
                .and_then(Value::as_u64)
                .map_or(pos, |i| i as usize);
            let values = item
                .get(&self.fields.embedding)
                .and_then(Value::as_array)
                .ok_or_else(|| {
                    bad(format!(
                        "item {pos} has no `{}` array",
                        self.fields.embedding
                    ))
                })?
                .iter()
                .map(|v| v.as_f64().map(|f| f as f32))
                .collect::<Option<Vec<f32>>>()
                .ok_or_else(|| bad(format!("item {pos} has a non-numeric component")))?;
            rows.push((index, values));
        }
        rows.sort_by_key(|(i, _)| *i);
        Ok(rows.into_iter().map(|(_, v)| v).collect())
    }
}

impl EmbeddingBackend for HttpBackend {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>> {
        let mut request = self.agent.post(&self.endpoint);
        match (&self.credential_var, &self.credential) {
            (Some(_), Some(key)) => {
                let value = if self.fields.auth_scheme.is_empty() {
                    key.clone()
                } else {
                    format!("{} {key}", self.fields.auth_scheme)
                };
                request = request.header(self.fields.auth_header.as_str(), value);
            }
            (Some(var), None) => return Err(Error::CredentialMissing(var.clone())),
            (None, _) => {}
        }

        let mut body = serde_json::Map::new();
        body.insert(self.fields.model.clone(), Value::String(self.model.clone()));
        body.insert(
            self.fields.input.clone(),
            Value::Array(texts.iter().cloned().map(Value::String).collect()),
        );

        let response = request
            .send_json(Value::Object(body))
            .map_err(|e| Error::Provider {
                status: None,
                retries: 0,
                message: e.to_string(),
            })?;
        let status = response.status().as_u16();
        let mut response_body = response.into_body();
        if !(200..300).contains(&status) {
            let text = response_body.read_to_string().unwrap_or_default();
            return Err(Error::Provider {
                status: Some(status),
                retries: 0,
                message: text.chars().take(300).collect(),
            });
        }
        let json: Value = response_body.read_json().map_err(|e| Error::Provider {
            status: Some(status),
            retries: 0,
            message: format!("invalid response body: {e}"),
        })?;
        self.parse_response(&json, texts.len())
    }

    fn is_remote(&self) -> bool {
        true
    }

    fn is_transient(&self, err: &Error) -> bool {
        match err {
            Error::Provider { status: None, .. } => true,
            Error::Provider {
                status: Some(s), ..
            } => *s == 429 || *s >= 500,
            _ => false,
        }
    }
}

/// Provider plus cache. Remote backends are consulted only for texts the
/// cache does not hold; at most `max_in_flight` requests run at once and the
/// calling thread is the only cache writer.
pub struct Embedder {
    spec: EmbeddingProviderSpec,
    backend: Box<dyn EmbeddingBackend>,
    cache: Option<EmbeddingCache>,
    requests: AtomicU64,
}

impl std::fmt::Debug for Embedder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Embedder")
            .field("spec", &self.spec)
            .field("cache", &self.cache)
            .field("requests", &self.requests)
            .finish()
    }
}

impl Embedder {
    pub fn from_spec(spec: EmbeddingProviderSpec, cache: Option<EmbeddingCache>) -> Result<Self> {
        spec.validate()?;
        let backend: Box<dyn EmbeddingBackend> = match spec.kind {
            ProviderKind::DeterministicHash => {
                Box::new(HashBackend::new(spec.dimension, spec.seed))
            }
            ProviderKind::HttpApi => Box::new(HttpBackend::new(&spec)?),
        };
        Ok(Self::with_backend(spec, backend, cache))
    }

    pub fn with_backend(
        spec: EmbeddingProviderSpec,
        backend: Box<dyn EmbeddingBackend>,
        cache: Option<EmbeddingCache>,
    ) -> Self {
        Embedder {
            spec,
            backend,
            cache,
            requests: AtomicU64::new(0),
        }
    }

    pub fn spec(&self) -> &EmbeddingProviderSpec {
        &self.spec
    }

    pub fn fingerprint(&self) -> String {
        self.spec.fingerprint()
    }

    /// Provider requests issued so far, retries included.
    pub fn request_count(&self) -> u64 {
        self.requests.load(Ordering::Relaxed)
    }

    fn cache(&self) -> Option<&EmbeddingCache> {
        self.cache.as_ref().filter(|_| self.backend.is_remote())
    }

    pub fn embed_one(&self, text: &str) -> Result<EmbeddingVector> {
        let mut out = self.embed_batch(&[text.to_owned()])?;
        Ok(out.pop().expect("one vector per text"))
    }

    pub fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        let mut raw: Vec<Option<Vec<f32>>> = vec![None; texts.len()];
        let mut missing: Vec<&str> = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for (slot, text) in raw.iter_mut().zip(texts) {
            match self
                .cache()
                .and_then(|c| c.get(&self.spec.model_name, text))
            {
                Some(values) if values.len() == self.spec.dimension => *slot = Some(values),
                _ => {
                    if seen.insert(text.as_str()) {
                        missing.push(text);
                    }
                }
            }
        }

        if !missing.is_empty() {
            let fetched = self.fetch(&missing)?;
            let by_text: std::collections::HashMap<&str, &Vec<f32>> =
                missing.iter().copied().zip(&fetched).collect();
            for (slot, text) in raw.iter_mut().zip(texts) {
                if slot.is_none() {
                    *slot = Some(by_text[text.as_str()].clone());
                }
            }
        }

        Ok(raw
            .into_iter()
            .map(|v| EmbeddingVector::normalized(v.expect("every text resolved")))
            .collect())
    }

    fn fetch(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>> {
        let chunks: Vec<Vec<String>> = texts
            .chunks(self.spec.batch_size)
            .map(|c| c.iter().map(|s| s.to_string()).collect())
            .collect();
        type Slot = Option<Result<Vec<Vec<f32>>>>;
        let results: Mutex<Vec<Slot>> = Mutex::new((0..chunks.len()).map(|_| None).collect());
        let next = AtomicUsize::new(0);
        let workers = self.spec.max_in_flight.min(chunks.len()).max(1);

        let work = || loop {
            let i = next.fetch_add(1, Ordering::Relaxed);
            if i >= chunks.len() {
                break;
            }
            let outcome = self.request_with_retries(&chunks[i]);
            results.lock().expect("result slots")[i] = Some(outcome);
        };
        if workers == 1 {
            work();
        } else {
            std::thread::scope(|s| {
                for _ in 0..workers {
                    s.spawn(work);
                }
            });
        }

        // Persist every successful chunk before reporting the first failure,
        // so an interrupted run resumes from what it already paid for.
        let mut out = Vec::with_capacity(texts.len());
        let mut first_err = None;
        for (chunk, slot) in chunks
            .iter()
            .zip(results.into_inner().expect("result slots"))
        {
            match slot.expect("every chunk attempted") {
                Ok(vectors) => {
                    if let Some(cache) = self.cache() {
                        for (text, values) in chunk.iter().zip(&vectors) {
                            cache.put(&self.spec.model_name, text, values)?;
                        }
                    }
                    out.extend(vectors);
                }
                Err(e) => {
                    first_err.get_or_insert(e);
                }
            }
        }
        match first_err {
            Some(e) => Err(e),
            None => Ok(out),
        }
    }

    fn request_with_retries(&self, chunk: &[String]) -> Result<Vec<Vec<f32>>> {
        let mut attempt = 0u32;
        loop {
            self.requests.fetch_add(1, Ordering::Relaxed);
            let result = self.backend.embed(chunk).and_then(|vectors| {
                if vectors.len() != chunk.len() {
                    return Err(Error::Provider {
                        status: None,
                        retries: attempt,
                        message: format!(
                            "expected {} embeddings, got {}",
                            chunk.len(),
                            vectors.len()
                        ),
                    });
                }
                match vectors.iter().find(|v| v.len() != self.spec.dimension) {
                    Some(v) => Err(Error::DimensionMismatch {
                        expected: self.spec.dimension,
                        actual: v.len(),
                    }),
                    None => Ok(vectors),
                }
            });
            match result {
                Ok(v) => return Ok(v),
                Err(e) if attempt + 1 < self.spec.max_attempts && self.backend.is_transient(&e) => {
                    let delay = self.spec.retry_base_ms.saturating_mul(1 << attempt.min(16));
                    log::warn!(
                        "provider `{}` attempt {} failed ({e}); retrying in {delay} ms",
                        self.spec.model_name,
                        attempt + 1
                    );
                    std::thread::sleep(Duration::from_millis(delay));
                    attempt += 1;
                }
                Err(Error::Provider {
                    status, message, ..
                }) => {
                    return Err(Error::Provider {
                        status,
                        retries: attempt,
                        message,
                    })
                }
                Err(e) => return Err(e),
            }
        }
    }
}
