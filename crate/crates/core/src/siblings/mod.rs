//! Candidate sibling detection.
//!
//! For a suspicious statement: extract its reaching-definition context, prune
//! the pool of test-exercised contexts by TF-IDF cosine, then keep those whose
//! embedding is close enough to the target's. A Jaccard filter over token sets
//! narrows the list further before joint repair.

mod embedding;
mod matching;
mod tokenize;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::localization::CoverageMatrix;
use crate::subject::{
    defines_variable, identifiers_in, IdentifierKind, MethodRef, SourceIndex, Statement,
};

pub use embedding::{
    cache_key, cosine, embed, EmbedError, EmbeddingCache, EmbeddingProvider, EmbeddingVector,
    LocalHashEmbedder, MemoryCache, ProviderError, RemoteEmbedder, LOCAL_HASH_DIMENSION,
};
pub use matching::{embedding_match, jaccard, jaccard_filter, token_match};
pub use tokenize::tokenize;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatementContext {
    pub target: Statement,
    /// Context statements in source order; always includes the target.
    pub lines: Vec<Statement>,
    pub rendered: String,
}

impl StatementContext {
    pub fn new(target: Statement, mut lines: Vec<Statement>) -> Self {
        lines.sort_by_key(|s| s.ordinal);
        lines.dedup_by_key(|s| s.ordinal);
        let rendered = lines
            .iter()
            .map(|s| s.text.as_str())
            .collect::<Vec<_>>()
            .join("\n");
        Self {
            target,
            lines,
            rendered,
        }
    }

    /// Ordering key: `(file, first line, ordinal)` of the target.
    pub fn key(&self) -> (&str, u32, usize) {
        (&self.target.file, self.target.span.start, self.target.ordinal)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSibling {
    pub context: StatementContext,
    pub token_similarity: f64,
    pub embedding_similarity: Option<f64>,
    pub jaccard_similarity: Option<f64>,
}

impl CandidateSibling {
    /// The target itself, treated as a perfect match of every measure.
    pub fn of_target(context: StatementContext) -> Self {
        Self {
            context,
            token_similarity: 1.0,
            embedding_similarity: Some(1.0),
            jaccard_similarity: Some(1.0),
        }
    }
}

/// Reaching-definition context of `target` within its method (or file).
pub fn extract_context(index: &SourceIndex, target: &Statement) -> StatementContext {
    let scope: Vec<&Statement> = match index.file(&target.file) {
        Ok(f) => f
            .statements
            .iter()
            .filter(|s| s.method == target.method && s.ordinal < target.ordinal)
            .collect(),
        Err(_) => Vec::new(),
    };
    let mut vars: Vec<String> = Vec::new();
    for id in identifiers_in(target) {
        if id.kind == IdentifierKind::Variable && !vars.contains(&id.name) {
            vars.push(id.name);
        }
    }
    let mut lines = vec![target.clone()];
    let mut found = false;
    for var in &vars {
        if let Some(def) = scope.iter().rev().find(|s| defines_variable(&s.text, var)) {
            lines.push((*def).clone());
            found = true;
        }
    }
    if !found {
        if let Some(prev) = scope.last() {
            lines.push((*prev).clone());
        }
    }
    StatementContext::new(target.clone(), lines)
}

/// Contexts of every statement covered by at least one test.
pub fn sibling_pool(index: &SourceIndex, coverage: &CoverageMatrix) -> Vec<StatementContext> {
    let mut seen: BTreeMap<(String, usize), &Statement> = BTreeMap::new();
    for loc in coverage.locations() {
        if let Some(s) = index.statement_at(&loc.file, loc.line) {
            seen.entry((s.file.clone(), s.ordinal)).or_insert(s);
        }
    }
    seen.into_values()
        .map(|s| extract_context(index, s))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GroupScope {
    Method { method: MethodRef },
    /// Statements outside any method, grouped per file.
    TopLevel { file: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodGroup {
    pub scope: GroupScope,
    /// First lines of the sibling statements in this group.
    pub sibling_lines: BTreeSet<u32>,
    /// Highest Jaccard similarity among the group's candidates, if computed.
    pub best_jaccard: Option<f64>,
}

impl MethodGroup {
    pub fn file(&self) -> &str {
        match &self.scope {
            GroupScope::Method { method } => &method.file,
            GroupScope::TopLevel { file } => file,
        }
    }

    pub fn method(&self) -> Option<&MethodRef> {
        match &self.scope {
            GroupScope::Method { method } => Some(method),
            GroupScope::TopLevel { .. } => None,
        }
    }

    /// Short label such as `src/A.java::foo`.
    pub fn label(&self) -> String {
        match &self.scope {
            GroupScope::Method { method } => format!("{}::{}", method.file, method.name),
            GroupScope::TopLevel { file } => format!("{file}::<top-level>"),
        }
    }
}

/// Groups candidates by enclosing method, in order of first appearance.
pub fn group_by_method(candidates: &[CandidateSibling], index: &SourceIndex) -> Vec<MethodGroup> {
    let mut groups: Vec<MethodGroup> = Vec::new();
    for c in candidates {
        let target = &c.context.target;
        let scope = match index.method_of(target) {
            Some(m) => GroupScope::Method { method: m.clone() },
            None => GroupScope::TopLevel {
                file: target.file.clone(),
            },
        };
        let group = match groups.iter_mut().position(|g| g.scope == scope) {
            Some(k) => &mut groups[k],
            None => {
                groups.push(MethodGroup {
                    scope,
                    sibling_lines: BTreeSet::new(),
                    best_jaccard: None,
                });
                groups.last_mut().unwrap()
            }
        };
        group.sibling_lines.insert(target.span.start);
        if let Some(j) = c.jaccard_similarity {
            group.best_jaccard = Some(group.best_jaccard.map_or(j, |b| b.max(j)));
        }
    }
    groups
}
