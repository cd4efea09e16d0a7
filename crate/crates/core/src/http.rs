//! Blocking JSON-over-HTTP client with bounded retries.

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HttpPolicy {
    pub timeout_ms: u64,
    /// Attempts after the first one for transport failures and 5xx replies.
    pub retries: u32,
    pub backoff_ms: u64,
}

impl Default for HttpPolicy {
    fn default() -> Self {
        Self {
            timeout_ms: 30_000,
            retries: 2,
            backoff_ms: 200,
        }
    }
}

#[derive(Debug, Clone)]
pub struct JsonClient {
    base: String,
    policy: HttpPolicy,
    http: reqwest::blocking::Client,
}

impl JsonClient {
    pub fn new(base: impl Into<String>, policy: HttpPolicy) -> Result<Self> {
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(policy.timeout_ms))
            .build()
            .map_err(|e| Error::BackendUnavailable(e.to_string()))?;
        Ok(Self {
            base: base.into().trim_end_matches('/').to_string(),
            policy,
            http,
        })
    }

    pub fn base(&self) -> &str {
        &self.base
    }

    /// POST `body` to `path`. Transport errors and 5xx replies are retried;
    /// once retries run out the call fails as backend-unavailable. A reply
    /// that does not match `R` is a protocol error and is not retried here.
    pub fn post<B: Serialize, R: DeserializeOwned>(&self, path: &str, body: &B) -> Result<R> {
        let url = format!("{}{}", self.base, path);
        let mut last = String::new();
        for attempt in 0..=self.policy.retries {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(
                    self.policy.backoff_ms.saturating_mul(1 << (attempt - 1).min(6)),
                ));
            }
            match self.http.post(&url).json(body).send() {
                Ok(resp) if resp.status().is_success() => {
                    let text = resp
                        .text()
                        .map_err(|e| Error::BackendUnavailable(format!("{url}: {e}")))?;
                    return serde_json::from_str(&text).map_err(|e| Error::Protocol(format!("{url}: {e}")));
                }
                Ok(resp) if resp.status().is_server_error() => {
                    last = format!("{url}: HTTP {}", resp.status());
                    tracing::debug!(attempt, %last, "retrying");
                }
                Ok(resp) => {
                    return Err(Error::BackendUnavailable(format!("{url}: HTTP {}", resp.status())));
                }
                Err(e) => {
                    last = format!("{url}: {e}");
                    tracing::debug!(attempt, %last, "retrying");
                }
            }
        }
        Err(Error::BackendUnavailable(last))
    }
}
