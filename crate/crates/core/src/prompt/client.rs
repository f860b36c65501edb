//! Completion client with a content-addressed replay cache.
//!
//! Every prompt is keyed by a digest of (model, temperature, prompt). Live
//! responses append to an NDJSON cache file; replay mode answers purely
//! from the cache and never touches the network, which makes scoring runs
//! reproducible and testable offline.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::prompt::score::parse_response;
use crate::schema::LabelSchema;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointConfig {
    /// Full URL of the chat-completions endpoint.
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token. The
    /// token itself never appears in config files.
    pub auth_env: String,
    pub temperature: f64,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        EndpointConfig {
            base_url: "https://api.openai.com/v1/chat/completions".into(),
            model: "gpt-3.5-turbo".into(),
            auth_env: "OPENAI_API_KEY".into(),
            temperature: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompletionMode {
    Live,
    Replay,
}

/// One completed prompt: digest, raw model output, parsed label (None when
/// unparseable), and the unix timestamp of the live call.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionRecord {
    pub prompt_hash: String,
    pub raw_response: String,
    pub parsed: Option<i32>,
    pub timestamp: u64,
}

/// Stable content digest over model, temperature, and prompt.
pub fn prompt_hash(model: &str, temperature: f64, prompt: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(model.as_bytes());
    hasher.update([0]);
    hasher.update(format!("{temperature}").as_bytes());
    hasher.update([0]);
    hasher.update(prompt.as_bytes());
    hex::encode(hasher.finalize())
}

pub struct CompletionClient {
    config: EndpointConfig,
    mode: CompletionMode,
    schema: LabelSchema,
    cache_path: PathBuf,
    cache: BTreeMap<String, CompletionRecord>,
}

impl CompletionClient {
    /// Opens (or creates) the NDJSON cache at `cache_path`.
    pub fn new(
        config: EndpointConfig,
        mode: CompletionMode,
        schema: LabelSchema,
        cache_path: impl AsRef<Path>,
    ) -> Result<Self> {
        let cache_path = cache_path.as_ref().to_path_buf();
        let cache = if cache_path.exists() {
            load_cache(&cache_path)?
        } else {
            BTreeMap::new()
        };
        Ok(CompletionClient {
            config,
            mode,
            schema,
            cache_path,
            cache,
        })
    }

    pub fn mode(&self) -> CompletionMode {
        self.mode
    }

    pub fn cache_len(&self) -> usize {
        self.cache.len()
    }

    /// Completes one prompt. Cache hits are returned as stored (including
    /// their original timestamp), so replayed runs are bit-reproducible; in
    /// live mode a hit also skips the network call.
    pub fn complete(&mut self, prompt: &str) -> Result<CompletionRecord> {
        let hash = prompt_hash(&self.config.model, self.config.temperature, prompt);
        if let Some(record) = self.cache.get(&hash) {
            return Ok(record.clone());
        }
        match self.mode {
            CompletionMode::Replay => Err(Error::CacheMiss(hash)),
            CompletionMode::Live => {
                let raw_response = self.request_live(prompt)?;
                let record = CompletionRecord {
                    prompt_hash: hash.clone(),
                    parsed: parse_response(&raw_response, &self.schema),
                    raw_response,
                    timestamp: SystemTime::now()
                        .duration_since(UNIX_EPOCH)
                        .map(|d| d.as_secs())
                        .unwrap_or(0),
                };
                self.append_to_cache(&record)?;
                self.cache.insert(hash, record.clone());
                Ok(record)
            }
        }
    }

    fn request_live(&self, prompt: &str) -> Result<String> {
        let token = std::env::var(&self.config.auth_env)
            .map_err(|_| Error::MissingAuthToken(self.config.auth_env.clone()))?;
        let body = serde_json::json!({
            "model": self.config.model,
            "temperature": self.config.temperature,
            "messages": [{"role": "user", "content": prompt}],
        });
        let response: serde_json::Value = ureq::post(&self.config.base_url)
            .set("Authorization", &format!("Bearer {token}"))
            .set("Content-Type", "application/json")
            .send_json(body)
            .map_err(|e| Error::CompletionRequest(e.to_string()))?
            .into_json()
            .map_err(|e| Error::CompletionRequest(format!("malformed response body: {e}")))?;
        response["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| {
                Error::CompletionRequest("response missing choices[0].message.content".into())
            })
    }

    fn append_to_cache(&self, record: &CompletionRecord) -> Result<()> {
        let mut file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.cache_path)?;
        writeln!(file, "{}", serde_json::to_string(record)?)?;
        Ok(())
    }
}

fn load_cache(path: &Path) -> Result<BTreeMap<String, CompletionRecord>> {
    let text = std::fs::read_to_string(path)?;
    let mut cache = BTreeMap::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let record: CompletionRecord = serde_json::from_str(line)?;
        cache.insert(record.prompt_hash.clone(), record);
    }
    Ok(cache)
}

/// Appends records to a cache file directly (used to seed replay fixtures).
pub fn append_cache_records(
    path: impl AsRef<Path>,
    records: &[CompletionRecord],
) -> Result<()> {
    let mut file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)?;
    for record in records {
        writeln!(file, "{}", serde_json::to_string(record)?)?;
    }
    Ok(())
}
