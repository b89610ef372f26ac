//! Snapshot-descriptor acquisition: offline fixture replay, or an HTTP
//! client posting one of the shipped prompt variants to an external model
//! endpoint, with retries and a keyed on-disk response cache.

use std::path::PathBuf;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::tracks::{parse_snapshot, SnapshotDescriptor};

/// The upstream prompt shipped with the crate, chosen per provider.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptVariant {
    /// Lighter schema; no keyframes.
    OpenModel,
    /// Full schema with per-object keyframes.
    Proprietary,
}

pub const PROMPT_OPEN_MODEL: &str = include_str!("../resources/prompt_open_model.txt");
pub const PROMPT_PROPRIETARY: &str = include_str!("../resources/prompt_proprietary.txt");

impl PromptVariant {
    pub fn text(self) -> &'static str {
        match self {
            PromptVariant::OpenModel => PROMPT_OPEN_MODEL,
            PromptVariant::Proprietary => PROMPT_PROPRIETARY,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum ProviderConfig {
    /// Fully offline: descriptors live as `<question id>.json` under `dir`.
    Replay { dir: PathBuf },
    /// POST {prompt, media} to `endpoint`; cache responses under
    /// `cache_dir` keyed by (question id, prompt hash).
    Http {
        endpoint: String,
        #[serde(default = "default_timeout")]
        timeout_secs: u64,
        #[serde(default = "default_retries")]
        retries: u32,
        prompt: PromptVariant,
        #[serde(default)]
        cache_dir: Option<PathBuf>,
        #[serde(default)]
        bearer_token: Option<String>,
    },
}

fn default_timeout() -> u64 {
    30
}

fn default_retries() -> u32 {
    2
}

/// Request body for the HTTP provider.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DescriptorRequest {
    pub prompt: String,
    pub media: String,
}

fn cache_key(question_id: &str, prompt: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(question_id.as_bytes());
    hasher.update([0u8]);
    hasher.update(prompt.as_bytes());
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Fetch the descriptor for one question. `media` is an opaque reference
/// (URI or identifier); nothing is ever uploaded or decoded locally.
pub fn fetch_descriptor(
    question_id: &str,
    media: &str,
    config: &ProviderConfig,
) -> Result<SnapshotDescriptor> {
    match config {
        ProviderConfig::Replay { dir } => {
            let path = dir.join(format!("{question_id}.json"));
            let bytes = std::fs::read(&path).map_err(|e| {
                Error::Provider(format!("missing fixture {}: {e}", path.display()))
            })?;
            parse_snapshot(&bytes)
        }
        ProviderConfig::Http {
            endpoint,
            timeout_secs,
            retries,
            prompt,
            cache_dir,
            bearer_token,
        } => {
            let prompt_text = prompt.text();
            let cache_path = cache_dir
                .as_ref()
                .map(|d| d.join(format!("{}.json", cache_key(question_id, prompt_text))));
            if let Some(path) = &cache_path {
                if let Ok(bytes) = std::fs::read(path) {
                    return parse_snapshot(&bytes);
                }
            }
            let body = serde_json::to_string(&DescriptorRequest {
                prompt: prompt_text.to_owned(),
                media: media.to_owned(),
            })?;
            let mut last_err = String::new();
            for attempt in 0..=*retries {
                if attempt > 0 {
                    std::thread::sleep(Duration::from_millis(200 * attempt as u64));
                }
                let mut req = ureq::post(endpoint)
                    .timeout(Duration::from_secs(*timeout_secs))
                    .set("content-type", "application/json");
                if let Some(token) = bearer_token {
                    req = req.set("authorization", &format!("Bearer {token}"));
                }
                match req.send_string(&body) {
                    Ok(resp) => {
                        let text = resp.into_string().map_err(|e| {
                            Error::Provider(format!("failed reading response body: {e}"))
                        })?;
                        let descriptor = parse_snapshot(text.as_bytes()).map_err(|e| {
                            Error::Provider(format!(
                                "unparseable descriptor response ({e}); body: {text}"
                            ))
                        })?;
                        if let Some(path) = &cache_path {
                            if let Some(parent) = path.parent() {
                                std::fs::create_dir_all(parent)?;
                            }
                            std::fs::write(path, &text)?;
                        }
                        return Ok(descriptor);
                    }
                    Err(ureq::Error::Status(code, resp)) => {
                        let body = resp.into_string().unwrap_or_default();
                        last_err = format!("HTTP {code}: {body}");
                        // 4xx won't improve on retry
                        if (400..500).contains(&code) {
                            break;
                        }
                    }
                    Err(e) => last_err = e.to_string(),
                }
            }
            Err(Error::Provider(format!(
                "request to {endpoint} failed after {} attempts: {last_err}",
                retries + 1
            )))
        }
    }
}
