//! Method-level patches and their text format.
//!
//! A model response carries one block per edited method:
//!
//! ````text
//! === PATCH file=src/A.java method=compute ===
//! ```java
//! public int compute() { ... }
//! ```
//! ````
//!
//! `method` may carry `@<line>` to pick one overload by its signature line.

use std::collections::BTreeMap;

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::sync::OnceLock;
use tracing::warn;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Edit {
    pub file: String,
    pub method: String,
    pub replacement: String,
}

impl Edit {
    /// Method name without any `@line` selector.
    pub fn method_name(&self) -> &str {
        self.method.split('@').next().unwrap_or(&self.method)
    }

    /// Signature line selector, if given.
    pub fn method_line(&self) -> Option<u32> {
        self.method.split_once('@').and_then(|(_, l)| l.parse().ok())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Generated,
    Combined,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Patch {
    /// Sorted by `(file, method)`; at most one edit per pair.
    pub edits: Vec<Edit>,
    pub provenance: Provenance,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parent: Option<String>,
}

impl Patch {
    pub fn empty() -> Self {
        Self::generated(Vec::new())
    }

    /// Builds a generated patch; a later edit of the same method replaces an earlier one.
    pub fn generated(edits: Vec<Edit>) -> Self {
        let mut by_key: BTreeMap<(String, String), Edit> = BTreeMap::new();
        for e in edits {
            by_key.insert((e.file.clone(), e.method.clone()), e);
        }
        Self {
            edits: by_key.into_values().collect(),
            provenance: Provenance::Generated,
            parent: None,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.edits.is_empty()
    }

    /// Content hash of the edit set (provenance excluded).
    pub fn id(&self) -> String {
        let mut h = Sha256::new();
        for e in &self.edits {
            for part in [&e.file, &e.method, &e.replacement] {
                h.update((part.len() as u64).to_le_bytes());
                h.update(part.as_bytes());
            }
        }
        hex::encode(&h.finalize()[..8])
    }

    /// Renders the patch in the response format accepted by [`parse_patch`].
    pub fn render(&self) -> String {
        let mut out = String::new();
        for e in &self.edits {
            out.push_str(&format!("=== PATCH file={} method={} ===\n```\n", e.file, e.method));
            out.push_str(&e.replacement);
            out.push_str("\n```\n");
        }
        out
    }
}

/// Union of both edit sets; `generated` wins on a `(file, method)` collision.
pub fn combine(generated: &Patch, promising: &Patch) -> Patch {
    let mut by_key: BTreeMap<(&str, &str), &Edit> = BTreeMap::new();
    for e in promising.edits.iter().chain(&generated.edits) {
        by_key.insert((&e.file, &e.method), e);
    }
    Patch {
        edits: by_key.into_values().cloned().collect(),
        provenance: Provenance::Combined,
        parent: Some(promising.id()),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("response contains no patch blocks")]
    NoBlocks,
    #[error("malformed patch marker at byte {offset}: {line:?}")]
    MalformedMarker { offset: usize, line: String },
    #[error("patch marker at byte {offset} is not followed by a fenced code block")]
    MissingFence { offset: usize },
    #[error("code fence opened at byte {offset} is never closed")]
    UnterminatedFence { offset: usize },
}

fn marker_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^=== PATCH file=(\S+) method=(\S+) ===\s*$").unwrap())
}

/// Lines of `text` with their byte offsets, without terminators.
fn lines_with_offsets(text: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut offset = 0;
    for raw in text.split_inclusive('\n') {
        let line = raw.strip_suffix('\n').unwrap_or(raw);
        out.push((offset, line.strip_suffix('\r').unwrap_or(line)));
        offset += raw.len();
    }
    out
}

/// Extracts every patch block of a model response.
pub fn parse_patch(response: &str) -> Result<Patch, ParseError> {
    let lines = lines_with_offsets(response);
    let mut edits: Vec<Edit> = Vec::new();
    let mut k = 0;
    while k < lines.len() {
        let (offset, line) = lines[k];
        if !line.trim_start().starts_with("=== PATCH") {
            k += 1;
            continue;
        }
        let caps = marker_re()
            .captures(line.trim_start())
            .ok_or_else(|| ParseError::MalformedMarker {
                offset,
                line: line.to_string(),
            })?;
        k += 1;
        while k < lines.len() && lines[k].1.trim().is_empty() {
            k += 1;
        }
        if k >= lines.len() || !lines[k].1.trim_start().starts_with("```") {
            return Err(ParseError::MissingFence { offset });
        }
        let fence_offset = lines[k].0;
        let body_start = fence_offset + lines[k].1.len() + 1;
        k += 1;
        let close = (k..lines.len())
            .find(|&j| lines[j].1.trim() == "```")
            .ok_or(ParseError::UnterminatedFence {
                offset: fence_offset,
            })?;
        let body_end = lines[close].0;
        let body = if body_start <= body_end {
            let raw = &response[body_start..body_end];
            let raw = raw.strip_suffix('\n').unwrap_or(raw);
            raw.strip_suffix('\r').unwrap_or(raw).to_string()
        } else {
            String::new()
        };
        let edit = Edit {
            file: caps[1].to_string(),
            method: caps[2].to_string(),
            replacement: body,
        };
        if edits.iter().any(|e| e.file == edit.file && e.method == edit.method) {
            warn!("duplicate patch block for {}::{}; keeping the last", edit.file, edit.method);
        }
        edits.push(edit);
        k = close + 1;
    }
    if edits.is_empty() {
        return Err(ParseError::NoBlocks);
    }
    Ok(Patch::generated(edits))
}
