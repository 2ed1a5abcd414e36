//! The per-run `report.json`.

use serde::{Deserialize, Serialize};

use crate::engine::{
    AttemptRecord, LocationSummary, RepairConfig, RunResult, Termination, Timings,
};
use crate::llm::Patch;
use crate::localization::SuspiciousLocation;
use crate::validation::PatchVerdict;

use super::descriptor::Mode;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlausibleEntry {
    pub location: String,
    pub patch_id: String,
    pub patch: Patch,
    pub diff: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromisingEntry {
    pub patch_id: String,
    pub patch: Patch,
    pub verdict: PatchVerdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub tool_version: String,
    pub descriptor: String,
    pub mode: Mode,
    pub config: RepairConfig,
    pub backend: String,
    pub embedding_provider: String,
    pub termination: Termination,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abort_reason: Option<String>,
    pub exit_code: i32,
    pub baseline_failing: Vec<String>,
    pub suspicious: Vec<SuspiciousLocation>,
    pub locations: Vec<LocationSummary>,
    /// Deterministic for a fixed descriptor and scripted responses.
    pub attempts: Vec<AttemptRecord>,
    pub promising_history: Vec<(String, Vec<String>)>,
    pub plausible: Vec<PlausibleEntry>,
    pub promising: Vec<PromisingEntry>,
    pub requests: u32,
    pub estimated_prompt_tokens: usize,
    pub timings: Timings,
}

pub(crate) struct ReportHeader {
    pub descriptor: String,
    pub mode: Mode,
    pub config: RepairConfig,
    pub backend: String,
    pub embedding_provider: String,
    pub suspicious: Vec<SuspiciousLocation>,
}

impl RunReport {
    pub(crate) fn new(header: ReportHeader, result: RunResult, exit_code: i32) -> Self {
        let RunResult {
            state,
            termination,
            abort_reason,
            baseline,
            locations,
            timings,
            requests,
            prompt_tokens,
        } = result;
        Self {
            schema_version: SCHEMA_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            descriptor: header.descriptor,
            mode: header.mode,
            config: header.config,
            backend: header.backend,
            embedding_provider: header.embedding_provider,
            termination,
            abort_reason,
            exit_code,
            baseline_failing: baseline.non_passing().map(|r| r.test.clone()).collect(),
            suspicious: header.suspicious,
            locations,
            attempts: state.log,
            promising_history: state.promising_history,
            plausible: state
                .plausible
                .into_iter()
                .map(|p| PlausibleEntry {
                    location: p.location,
                    patch_id: p.patch.id(),
                    patch: p.patch,
                    diff: p.diff,
                })
                .collect(),
            promising: state
                .promising
                .into_iter()
                .map(|p| PromisingEntry {
                    patch_id: p.patch.id(),
                    patch: p.patch,
                    verdict: p.verdict,
                })
                .collect(),
            requests,
            estimated_prompt_tokens: prompt_tokens,
            timings,
        }
    }
}
