//! Replays model responses from a directory of text files.
//!
//! `<location>_attempt<k>.txt` answers attempt `k` at that location. A file
//! may start with header lines of the form
//!
//! ```text
//! @@requires-prompt: <substring>
//! ```
//!
//! in which case it only answers prompts containing every listed substring;
//! otherwise the response counts as missing.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::{response_file_name, Backend, BackendError, CompletionRequest};

const REQUIRES: &str = "@@requires-prompt:";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MissingResponse {
    Error,
    #[default]
    Empty,
}

#[derive(Debug, Clone)]
pub struct ScriptedBackend {
    dir: PathBuf,
    on_missing: MissingResponse,
}

impl ScriptedBackend {
    pub fn new(dir: impl Into<PathBuf>, on_missing: MissingResponse) -> Self {
        Self {
            dir: dir.into(),
            on_missing,
        }
    }

    fn missing(&self, name: String) -> Result<String, BackendError> {
        match self.on_missing {
            MissingResponse::Error => Err(BackendError::MissingResponse(name)),
            MissingResponse::Empty => Ok(String::new()),
        }
    }
}

/// Splits leading `@@requires-prompt:` headers off a scripted response.
fn split_headers(text: &str) -> (Vec<&str>, &str) {
    let mut required = Vec::new();
    let mut rest = text;
    loop {
        let line_end = rest.find('\n').unwrap_or(rest.len());
        let line = rest[..line_end].trim_end_matches('\r');
        let Some(req) = line.strip_prefix(REQUIRES) else {
            break;
        };
        required.push(req.trim());
        rest = rest.get(line_end + 1..).unwrap_or("");
    }
    (required, rest)
}

impl Backend for ScriptedBackend {
    fn id(&self) -> String {
        format!("scripted:{}", self.dir.display())
    }

    fn complete(&mut self, request: &CompletionRequest) -> Result<String, BackendError> {
        let name = response_file_name(&request.location, request.attempt);
        let path = self.dir.join(&name);
        let text = match std::fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return self.missing(name),
            Err(source) => {
                return Err(BackendError::Io {
                    path: path.display().to_string(),
                    source,
                })
            }
        };
        let (required, body) = split_headers(&text);
        if required.iter().all(|r| request.prompt.contains(r)) {
            Ok(body.to_string())
        } else {
            self.missing(format!("{name} (prompt precondition not met)"))
        }
    }
}
