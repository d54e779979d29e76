//! HTTP client for an external embedding provider.
//!
//! Wire contract: `POST {base_url}/embed` with `{"model": .., "inputs": [..]}`,
//! answered by `{"embeddings": [[..]], "dim": n}` holding one row per input.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{EmbedError, EmbeddingStore, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderSpec {
    pub base_url: String,
    pub model_names: Vec<String>,
    pub batch_size: usize,
    #[serde(with = "millis")]
    pub timeout: Duration,
    pub max_retries: u32,
    /// Delay before the first retry; doubles on each further attempt.
    #[serde(with = "millis", default = "default_backoff")]
    pub backoff: Duration,
    /// Maximum number of batch requests in flight.
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
}

fn default_backoff() -> Duration {
    Duration::from_millis(200)
}

fn default_parallelism() -> usize {
    1
}

mod millis {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        u64::deserialize(d).map(Duration::from_millis)
    }
}

impl ProviderSpec {
    pub fn new(base_url: impl Into<String>, model_names: Vec<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model_names,
            batch_size: 32,
            timeout: Duration::from_secs(60),
            max_retries: 3,
            backoff: default_backoff(),
            parallelism: default_parallelism(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.model_names.is_empty() {
            return Err(EmbedError::Provider("model list is empty".into()));
        }
        if self.batch_size == 0 {
            return Err(EmbedError::Provider("batch_size must be at least 1".into()));
        }
        Ok(())
    }

    fn endpoint(&self) -> String {
        format!("{}/embed", self.base_url.trim_end_matches('/'))
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    model: &'a str,
    inputs: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbedResponse {
    embeddings: Vec<Vec<Option<f64>>>,
    dim: usize,
}

enum Failure {
    Transient(String),
    Fatal(String),
}

fn request_once(
    client: &reqwest::blocking::Client,
    url: &str,
    model: &str,
    inputs: &[&str],
) -> std::result::Result<EmbedResponse, Failure> {
    let resp = client
        .post(url)
        .json(&EmbedRequest { model, inputs })
        .send()
        .map_err(|e| Failure::Transient(e.to_string()))?;
    let status = resp.status();
    if status.is_server_error() || status.as_u16() == 429 {
        return Err(Failure::Transient(format!("HTTP {status}")));
    }
    if !status.is_success() {
        return Err(Failure::Fatal(format!("HTTP {status}")));
    }
    resp.json::<EmbedResponse>()
        .map_err(|e| Failure::Fatal(format!("bad response body: {e}")))
}

fn request_with_retry(
    client: &reqwest::blocking::Client,
    spec: &ProviderSpec,
    model: &str,
    inputs: &[&str],
) -> Result<Vec<Vec<f32>>> {
    let url = spec.endpoint();
    let attempts = spec.max_retries + 1;
    let mut last = String::new();
    for attempt in 1..=attempts {
        match request_once(client, &url, model, inputs) {
            Ok(resp) => return decode(resp, inputs.len()),
            Err(Failure::Fatal(msg)) => return Err(EmbedError::Provider(msg)),
            Err(Failure::Transient(msg)) => {
                log::warn!("embed request to {url} failed (attempt {attempt}/{attempts}): {msg}");
                last = msg;
                if attempt < attempts {
                    thread::sleep(spec.backoff * 2u32.saturating_pow(attempt - 1));
                }
            }
        }
    }
    Err(EmbedError::Provider(format!(
        "giving up after {attempts} attempts: {last}"
    )))
}

fn decode(resp: EmbedResponse, expected_rows: usize) -> Result<Vec<Vec<f32>>> {
    if resp.embeddings.len() != expected_rows {
        return Err(EmbedError::Provider(format!(
            "expected {expected_rows} rows, got {}",
            resp.embeddings.len()
        )));
    }
    resp.embeddings
        .into_iter()
        .enumerate()
        .map(|(i, row)| {
            if row.len() != resp.dim {
                return Err(EmbedError::DimMismatch {
                    expected: resp.dim,
                    actual: row.len(),
                });
            }
            row.into_iter()
                .map(|v| match v {
                    Some(x) if x.is_finite() && (x as f32).is_finite() => Ok(x as f32),
                    _ => Err(EmbedError::Provider(format!("non-finite value in row {i}"))),
                })
                .collect()
        })
        .collect()
}

/// Embeds `texts` with `model`, returning a store whose row `i` belongs to
/// `ids[i]`. Batches may be requested concurrently; row order always follows
/// the input order.
pub fn fetch_embeddings(
    spec: &ProviderSpec,
    model: &str,
    ids: &[String],
    texts: &[&str],
) -> Result<EmbeddingStore> {
    spec.validate()?;
    if texts.is_empty() {
        return Err(EmbedError::Provider("no texts to embed".into()));
    }
    if ids.len() != texts.len() {
        return Err(EmbedError::CountMismatch {
            what: "texts",
            manifest: ids.len(),
            actual: texts.len(),
        });
    }
    let client = reqwest::blocking::Client::builder()
        .timeout(spec.timeout)
        .build()
        .map_err(|e| EmbedError::Provider(e.to_string()))?;

    let batches: Vec<&[&str]> = texts.chunks(spec.batch_size).collect();
    let results: Vec<Mutex<Option<Result<Vec<Vec<f32>>>>>> =
        batches.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let failed = AtomicUsize::new(0);
    let workers = spec.parallelism.clamp(1, batches.len());
    thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= batches.len() || failed.load(Ordering::SeqCst) > 0 {
                    break;
                }
                log::debug!("embedding batch {}/{} with {model}", i + 1, batches.len());
                let r = request_with_retry(&client, spec, model, batches[i]);
                if r.is_err() {
                    failed.fetch_add(1, Ordering::SeqCst);
                }
                *results[i].lock().unwrap() = Some(r);
            });
        }
    });

    let mut dim = None;
    let mut matrix = Vec::new();
    for slot in results {
        let Some(rows) = slot.into_inner().unwrap() else {
            continue;
        };
        for row in rows? {
            match dim {
                None => dim = Some(row.len()),
                Some(d) if d != row.len() => {
                    return Err(EmbedError::DimMismatch {
                        expected: d,
                        actual: row.len(),
                    })
                }
                _ => {}
            }
            matrix.extend(row);
        }
    }
    let dim = dim.unwrap_or(0);
    EmbeddingStore::new(model, dim, ids.to_vec(), matrix, false)
}
