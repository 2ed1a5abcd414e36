//! Project descriptors: a JSON file naming everything a run needs.
//!
//! Relative paths are resolved against the descriptor's directory.
//!
//! ```json
//! {
//!   "project_root": "project",
//!   "include": ["**/*.java"],
//!   "coverage": "coverage.txt",
//!   "harness": { "command": "sh \"$DESCRIPTOR_DIR/run-tests.sh\"", "timeout_secs": 60 },
//!   "backend": { "kind": "scripted", "dir": "responses" },
//!   "embedding": { "provider": "local-hash" },
//!   "mode": "sbfl"
//! }
//! ```

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::engine::RepairConfig;
use crate::llm::MissingResponse;
use crate::retry::RetryPolicy;
use crate::subject::Location;
use crate::validation::HarnessConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Ochiai ranking from coverage.
    Sbfl,
    /// Ochiai ranking with the first known location forced to rank 1.
    Spfl,
    /// The known locations, verbatim.
    Pfl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum BackendSpec {
    Scripted {
        dir: PathBuf,
        #[serde(default)]
        on_missing: MissingResponse,
    },
    Remote {
        url: String,
        model: String,
        #[serde(default = "default_llm_key")]
        api_key_env: String,
        #[serde(default = "default_request_timeout")]
        timeout_secs: u64,
        #[serde(default)]
        retry: RetryPolicy,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "provider", deny_unknown_fields)]
pub enum EmbeddingSpec {
    #[serde(rename = "local-hash")]
    LocalHash,
    #[serde(rename = "remote")]
    Remote {
        url: String,
        model: String,
        #[serde(default = "default_embed_key")]
        api_key_env: String,
        #[serde(default = "default_batch")]
        batch_size: usize,
        #[serde(default = "default_request_timeout")]
        timeout_secs: u64,
        #[serde(default)]
        retry: RetryPolicy,
    },
}

fn default_llm_key() -> String {
    "LLM_API_KEY".into()
}

fn default_embed_key() -> String {
    "EMBED_API_KEY".into()
}

fn default_request_timeout() -> u64 {
    120
}

fn default_batch() -> usize {
    64
}

fn default_embedding() -> EmbeddingSpec {
    EmbeddingSpec::LocalHash
}

fn default_mode() -> Mode {
    Mode::Sbfl
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectDescriptor {
    pub project_root: PathBuf,
    pub include: Vec<String>,
    pub coverage: PathBuf,
    pub harness: HarnessConfig,
    pub backend: BackendSpec,
    #[serde(default = "default_embedding")]
    pub embedding: EmbeddingSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,
    #[serde(default)]
    pub repair: RepairConfig,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub known_locations: Vec<Location>,
    /// Directory holding the descriptor; relative paths resolve against it.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, thiserror::Error)]
pub enum DescriptorError {
    #[error("cannot read descriptor {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid descriptor {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{what} {path} does not exist")]
    Missing { what: &'static str, path: PathBuf },
    #[error("mode {0:?} needs at least one entry in known_locations")]
    NoKnownLocation(Mode),
    #[error("include patterns are empty")]
    NoIncludes,
    #[error("invalid repair settings: {0}")]
    Config(#[from] crate::engine::ConfigError),
}

impl ProjectDescriptor {
    pub fn load(path: &Path) -> Result<Self, DescriptorError> {
        let text = std::fs::read_to_string(path).map_err(|source| DescriptorError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut d: ProjectDescriptor = serde_json::from_str(&text).map_err(|source| DescriptorError::Parse {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or(Path::new("."));
        d.base_dir = base.canonicalize().unwrap_or_else(|_| base.to_path_buf());
        d.project_root = d.resolve(&d.project_root);
        d.coverage = d.resolve(&d.coverage);
        d.cache_dir = d.cache_dir.as_ref().map(|c| d.resolve(c));
        if let BackendSpec::Scripted { dir, .. } = &mut d.backend {
            *dir = d.base_dir.join(&*dir);
        }
        d.harness.descriptor_dir = d.base_dir.clone();
        Ok(d)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Checks the invariants that do not depend on CLI overrides being applied.
    pub fn validate(&self) -> Result<(), DescriptorError> {
        let must_exist = |what, path: &Path| {
            if path.exists() {
                Ok(())
            } else {
                Err(DescriptorError::Missing {
                    what,
                    path: path.to_path_buf(),
                })
            }
        };
        must_exist("project root", &self.project_root)?;
        must_exist("coverage file", &self.coverage)?;
        if let BackendSpec::Scripted { dir, .. } = &self.backend {
            must_exist("scripted response directory", dir)?;
        }
        if self.include.is_empty() {
            return Err(DescriptorError::NoIncludes);
        }
        if self.mode != Mode::Sbfl && self.known_locations.is_empty() {
            return Err(DescriptorError::NoKnownLocation(self.mode));
        }
        self.repair.validate()?;
        Ok(())
    }

    pub fn request_timeout(secs: u64) -> Duration {
        Duration::from_secs(secs.max(1))
    }
}
