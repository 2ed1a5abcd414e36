//! Sibling-aware multi-hunk program repair.
//!
//! The pipeline ranks suspicious statements from test coverage, finds code
//! locations that look like siblings of each suspicious statement, and asks a
//! language model for method-level patches which are validated against the
//! subject's own tests.

pub mod engine;
pub mod ingredients;
pub mod llm;
pub mod localization;
pub mod orchestrator;
pub mod prompt;
pub mod retry;
pub mod siblings;
pub mod subject;
pub mod tfidf;
pub mod validation;
