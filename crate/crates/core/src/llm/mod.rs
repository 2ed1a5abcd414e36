//! Language-model backends and the patch format they answer in.

mod patch;
mod remote;
mod scripted;

use serde::{Deserialize, Serialize};

pub use patch::{combine, parse_patch, Edit, ParseError, Patch, Provenance};
pub use remote::RemoteChat;
pub use scripted::{MissingResponse, ScriptedBackend};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub seed: u64,
    /// Suspicious-location id, such as `loc1`.
    pub location: String,
    /// 1-based attempt number within the location.
    pub attempt: u32,
}

#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    #[error("no scripted response {0}")]
    MissingResponse(String),
    #[error("cannot read scripted response {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("model request failed: {0}")]
    Request(String),
    #[error("malformed model response: {0}")]
    Protocol(String),
}

pub trait Backend: Send {
    fn id(&self) -> String;

    fn complete(&mut self, request: &CompletionRequest) -> Result<String, BackendError>;
}

impl<B: Backend + ?Sized> Backend for Box<B> {
    fn id(&self) -> String {
        (**self).id()
    }

    fn complete(&mut self, request: &CompletionRequest) -> Result<String, BackendError> {
        (**self).complete(request)
    }
}

/// File name of a scripted response.
pub fn response_file_name(location: &str, attempt: u32) -> String {
    format!("{location}_attempt{attempt}.txt")
}
