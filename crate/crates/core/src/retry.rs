//! Retry with exponential backoff, plus a small blocking JSON-over-HTTP client
//! shared by the remote model and embedding backends.

use std::time::Duration;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    /// Retries after the first attempt.
    pub max_retries: u32,
    #[serde(with = "serde_millis")]
    pub base_delay: Duration,
    #[serde(with = "serde_millis")]
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(8),
        }
    }
}

impl RetryPolicy {
    pub fn delay(&self, retry: u32) -> Duration {
        let factor = 2u32.saturating_pow(retry);
        self.base_delay.saturating_mul(factor).min(self.max_delay)
    }
}

mod serde_millis {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}

/// Outcome of one attempt of a retried operation.
#[derive(Debug)]
pub enum Failure<E> {
    Transient(E),
    Fatal(E),
}

#[derive(Debug, thiserror::Error)]
#[error("{source} (after {attempts} attempt(s))")]
pub struct Exhausted<E: std::error::Error + 'static> {
    pub attempts: u32,
    #[source]
    pub source: E,
}

/// Runs `op` until it succeeds, fails fatally, or runs out of retries.
pub fn with_backoff<T, E: std::error::Error + 'static>(
    policy: &RetryPolicy,
    mut op: impl FnMut(u32) -> Result<T, Failure<E>>,
) -> Result<T, Exhausted<E>> {
    let mut attempt = 0;
    loop {
        match op(attempt) {
            Ok(v) => return Ok(v),
            Err(Failure::Fatal(source)) => {
                return Err(Exhausted {
                    attempts: attempt + 1,
                    source,
                })
            }
            Err(Failure::Transient(source)) => {
                if attempt >= policy.max_retries {
                    return Err(Exhausted {
                        attempts: attempt + 1,
                        source,
                    });
                }
                tracing::warn!("transient failure (attempt {}): {source}", attempt + 1);
                std::thread::sleep(policy.delay(attempt));
                attempt += 1;
            }
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum HttpError {
    #[error("HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("invalid response body: {0}")]
    Body(String),
}

/// POSTs `body` as JSON and decodes a JSON response.
///
/// Transport errors, 429 and 5xx responses are transient; other statuses are fatal.
pub fn post_json(
    url: &str,
    bearer: Option<&str>,
    body: &serde_json::Value,
    timeout: Duration,
) -> Result<serde_json::Value, Failure<HttpError>> {
    let mut req = ureq::post(url)
        .timeout(timeout)
        .set("Content-Type", "application/json");
    if let Some(token) = bearer {
        req = req.set("Authorization", &format!("Bearer {token}"));
    }
    match req.send_json(body.clone()) {
        Ok(resp) => resp
            .into_json::<serde_json::Value>()
            .map_err(|e| Failure::Fatal(HttpError::Body(e.to_string()))),
        Err(ureq::Error::Status(status, resp)) => {
            let body = resp.into_string().unwrap_or_default();
            let err = HttpError::Status { status, body };
            if status == 429 || status >= 500 {
                Err(Failure::Transient(err))
            } else {
                Err(Failure::Fatal(err))
            }
        }
        Err(ureq::Error::Transport(t)) => Err(Failure::Transient(HttpError::Transport(t.to_string()))),
    }
}
