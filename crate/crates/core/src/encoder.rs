//! Operation encoding: semantic embedding concatenated with a column-usage
//! bit vector over the original columns.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};
use std::time::Duration;

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::FeatureOperation;
use crate::util::{fnv1a64, sha256_hex};

pub const DEFAULT_SEMANTIC_DIM: usize = 256;
pub const DEFAULT_REMOTE_MODEL: &str = "text-embedding-3-small";

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("embedding transport failed: {0}")]
    Transport(String),
    #[error("embedding response malformed: {0}")]
    Response(String),
    #[error("embedding cache i/o: {0}")]
    Cache(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteEmbeddingConfig {
    /// Full URL of an OpenAI-compatible `/embeddings` endpoint.
    pub endpoint: String,
    #[serde(default = "default_model")]
    pub model: String,
    /// Environment variable holding the bearer token.
    #[serde(default = "default_key_env")]
    pub api_key_env: String,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

fn default_model() -> String {
    DEFAULT_REMOTE_MODEL.to_string()
}
fn default_key_env() -> String {
    "OPENAI_API_KEY".to_string()
}
fn default_retries() -> u32 {
    3
}
fn default_backoff_ms() -> u64 {
    500
}
fn default_timeout_secs() -> u64 {
    30
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EmbeddingBackend {
    #[default]
    LocalHash,
    Remote(RemoteEmbeddingConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    #[serde(default)]
    pub backend: EmbeddingBackend,
    /// Semantic dimension. For the remote backend this must equal the
    /// model's output size.
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
}

fn default_dim() -> usize {
    DEFAULT_SEMANTIC_DIM
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            backend: EmbeddingBackend::LocalHash,
            dim: DEFAULT_SEMANTIC_DIM,
            cache_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperationEncoding {
    pub semantic: Vec<f64>,
    pub usage: Vec<u8>,
    pub combined: Vec<f64>,
}

impl OperationEncoding {
    pub fn new(semantic: Vec<f64>, usage: Vec<u8>) -> Self {
        let combined = semantic
            .iter()
            .copied()
            .chain(usage.iter().map(|&b| f64::from(b)))
            .collect();
        Self {
            semantic,
            usage,
            combined,
        }
    }

    pub fn dim(&self) -> usize {
        self.combined.len()
    }
}

/// Bit i is set iff `original_columns[i]` is referenced by the expression.
/// Columns added by earlier operations have no slot.
pub fn encode_usage(op: &FeatureOperation, original_columns: &[String]) -> Vec<u8> {
    let used = op.columns_used();
    original_columns
        .iter()
        .map(|c| u8::from(used.contains(c)))
        .collect()
}

/// Text that is embedded: name, explanation and canonical expression.
pub fn semantic_text(op: &FeatureOperation) -> String {
    format!("{}\n{}\n{}", op.name, op.explanation, op.canonical())
}

/// Lowercased maximal runs of alphanumerics and underscores.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !(c.is_alphanumeric() || c == '_'))
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Signed hashed token counts before normalization: bucket = FNV-1a mod dim,
/// sign negative iff bit 63 of the hash is set.
pub fn hashed_token_counts(text: &str, dim: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    for token in tokenize(text) {
        let h = fnv1a64(token.as_bytes());
        let bucket = (h % dim as u64) as usize;
        let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
        v[bucket] += sign;
    }
    v
}

/// L2-normalized hashed token bag; the zero vector stays zero.
pub fn local_hash_embedding(text: &str, dim: usize) -> Vec<f64> {
    let mut v = hashed_token_counts(text, dim);
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

/// Encodes operations, caching semantic vectors by content hash.
#[derive(Debug)]
pub struct Encoder {
    config: EncoderConfig,
    cache: RwLock<HashMap<String, Arc<Vec<f64>>>>,
}

impl Encoder {
    pub fn new(config: EncoderConfig) -> Self {
        Self {
            config,
            cache: RwLock::new(HashMap::new()),
        }
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    fn backend_id(&self) -> String {
        match &self.config.backend {
            EmbeddingBackend::LocalHash => "local-hash".to_string(),
            EmbeddingBackend::Remote(r) => format!("remote:{}", r.model),
        }
    }

    fn cache_key(&self, text: &str) -> String {
        sha256_hex(format!("{}|{}|{}", self.backend_id(), self.config.dim, text).as_bytes())
    }

    pub fn cached_entries(&self) -> usize {
        self.cache.read().expect("cache lock").len()
    }

    pub fn encode_semantic(&self, op: &FeatureOperation) -> Result<Arc<Vec<f64>>, EncoderError> {
        let text = semantic_text(op);
        let key = self.cache_key(&text);
        if let Some(hit) = self.cache.read().expect("cache lock").get(&key) {
            return Ok(Arc::clone(hit));
        }
        if let Some(v) = self.read_disk(&key)? {
            return Ok(self.remember(key, v));
        }
        let vector = match &self.config.backend {
            EmbeddingBackend::LocalHash => local_hash_embedding(&text, self.config.dim),
            EmbeddingBackend::Remote(remote) => {
                match fetch_with_retries(remote, &text, self.config.dim) {
                    Ok(v) => v,
                    Err(e) => {
                        warn!(
                            "remote embedding failed after {} retries ({e}); using local-hash",
                            remote.max_retries
                        );
                        // Not cached: a later call may reach the service.
                        return Ok(Arc::new(local_hash_embedding(&text, self.config.dim)));
                    }
                }
            }
        };
        self.write_disk(&key, &vector)?;
        Ok(self.remember(key, vector))
    }

    pub fn encode(
        &self,
        op: &FeatureOperation,
        original_columns: &[String],
    ) -> Result<OperationEncoding, EncoderError> {
        let semantic = self.encode_semantic(op)?;
        Ok(OperationEncoding::new(
            semantic.as_ref().clone(),
            encode_usage(op, original_columns),
        ))
    }

    fn remember(&self, key: String, v: Vec<f64>) -> Arc<Vec<f64>> {
        let v = Arc::new(v);
        self.cache
            .write()
            .expect("cache lock")
            .insert(key, Arc::clone(&v));
        v
    }

    fn read_disk(&self, key: &str) -> Result<Option<Vec<f64>>, EncoderError> {
        let Some(dir) = &self.config.cache_dir else {
            return Ok(None);
        };
        let path = dir.join(format!("{key}.json"));
        match std::fs::read_to_string(&path) {
            Ok(text) => match serde_json::from_str::<Vec<f64>>(&text) {
                Ok(v) if v.len() == self.config.dim => Ok(Some(v)),
                _ => {
                    warn!("ignoring corrupt embedding cache entry {}", path.display());
                    Ok(None)
                }
            },
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    fn write_disk(&self, key: &str, v: &[f64]) -> Result<(), EncoderError> {
        let Some(dir) = &self.config.cache_dir else {
            return Ok(());
        };
        std::fs::create_dir_all(dir)?;
        let tmp = dir.join(format!("{key}.json.tmp"));
        std::fs::write(&tmp, serde_json::to_string(v).expect("vector serializes"))?;
        std::fs::rename(tmp, dir.join(format!("{key}.json")))?;
        Ok(())
    }
}

#[derive(Serialize)]
struct EmbeddingRequest<'a> {
    model: &'a str,
    input: Vec<&'a str>,
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingItem>,
}

#[derive(Deserialize)]
struct EmbeddingItem {
    embedding: Vec<f64>,
}

fn fetch_with_retries(
    remote: &RemoteEmbeddingConfig,
    text: &str,
    dim: usize,
) -> Result<Vec<f64>, EncoderError> {
    let mut last = EncoderError::Transport("no attempt made".into());
    for attempt in 0..=remote.max_retries {
        if attempt > 0 {
            std::thread::sleep(Duration::from_millis(remote.backoff_ms << (attempt - 1)));
        }
        match fetch_once(remote, text, dim) {
            Ok(v) => return Ok(v),
            Err(e) => {
                warn!("embedding attempt {} failed: {e}", attempt + 1);
                last = e;
            }
        }
    }
    Err(last)
}

fn fetch_once(
    remote: &RemoteEmbeddingConfig,
    text: &str,
    dim: usize,
) -> Result<Vec<f64>, EncoderError> {
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(Duration::from_secs(remote.timeout_secs)))
        .build()
        .into();
    let mut request = agent.post(&remote.endpoint);
    if let Ok(key) = std::env::var(&remote.api_key_env) {
        request = request.header("Authorization", &format!("Bearer {key}"));
    }
    let mut response = request
        .send_json(EmbeddingRequest {
            model: &remote.model,
            input: vec![text],
        })
        .map_err(|e| EncoderError::Transport(e.to_string()))?;
    let parsed: EmbeddingResponse = response
        .body_mut()
        .read_json()
        .map_err(|e| EncoderError::Response(e.to_string()))?;
    let v = parsed
        .data
        .into_iter()
        .next()
        .ok_or_else(|| EncoderError::Response("empty data list".into()))?
        .embedding;
    if v.len() != dim || v.iter().any(|x| !x.is_finite()) {
        return Err(EncoderError::Response(format!(
            "expected {dim} finite values, got {}",
            v.len()
        )));
    }
    Ok(v)
}
