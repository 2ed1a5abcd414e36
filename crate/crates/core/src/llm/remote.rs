//! Chat-completion client for OpenAI-compatible endpoints.

use std::time::Duration;

use serde_json::json;
use tracing::debug;

use super::{Backend, BackendError, CompletionRequest};
use crate::retry::{post_json, with_backoff, RetryPolicy};

#[derive(Debug, Clone)]
pub struct RemoteChat {
    pub url: String,
    pub model: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
    pub retry: RetryPolicy,
}

impl Backend for RemoteChat {
    fn id(&self) -> String {
        format!("remote:{}", self.model)
    }

    fn complete(&mut self, request: &CompletionRequest) -> Result<String, BackendError> {
        debug!(
            "completion request {} attempt {} seed {}",
            request.location, request.attempt, request.seed
        );
        let body = json!({
            "model": self.model,
            "messages": [{ "role": "user", "content": request.prompt }],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        });
        let value = with_backoff(&self.retry, |_| {
            post_json(&self.url, self.api_key.as_deref(), &body, self.timeout)
        })
        .map_err(|e| BackendError::Request(e.to_string()))?;
        value
            .pointer("/choices/0/message/content")
            .and_then(|c| c.as_str())
            .map(str::to_string)
            .ok_or_else(|| BackendError::Protocol("missing choices[0].message.content".into()))
    }
}
