//! The repair loop.
//!
//! For each suspicious location in rank order the engine finds candidate
//! siblings, then tries a joint repair over all candidate methods and, failing
//! that, a method-by-method repair that carries promising partial patches
//! forward. The run stops at the first location that yields a patch passing
//! every test, or when the list or the time budget runs out.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tracing::{info, warn};

use crate::ingredients::extract_fix_ingredients;
use crate::llm::{combine, parse_patch, Backend, BackendError, CompletionRequest, Patch};
use crate::localization::{CoverageMatrix, SuspiciousLocation};
use crate::prompt::{build_prompt, BugEvidence, FeedbackEntry, DEFAULT_TOKEN_BUDGET};
use crate::siblings::{
    embedding_match, extract_context, group_by_method, jaccard_filter, sibling_pool, token_match,
    CandidateSibling, EmbedError, EmbeddingCache, EmbeddingProvider, MethodGroup, StatementContext,
};
use crate::subject::SourceIndex;
use crate::validation::{
    apply_patch, classify, run_tests, unified_diff, HarnessConfig, HarnessError, PatchVerdict,
    TestReport, VerdictKind,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RepairConfig {
    /// Maximum candidate siblings kept by token matching.
    pub k: usize,
    /// Embedding cosine threshold.
    pub theta: f64,
    /// Jaccard threshold applied before joint repair.
    pub alpha: f64,
    /// Attempts per phase.
    pub attempts: u32,
    /// Ranked fix ingredients per sibling line.
    pub ingredients: usize,
    #[serde(with = "humantime_text")]
    pub budget: Duration,
    pub suspicious_cap: usize,
    pub temperature: f64,
    pub max_tokens: u32,
    pub prompt_token_budget: usize,
    pub stop_on_first_plausible: bool,
}

impl Default for RepairConfig {
    fn default() -> Self {
        Self {
            k: 100,
            theta: 0.75,
            alpha: 0.30,
            attempts: 5,
            ingredients: 10,
            budget: Duration::from_secs(5 * 3600),
            suspicious_cap: 50,
            temperature: 0.7,
            max_tokens: 4096,
            prompt_token_budget: DEFAULT_TOKEN_BUDGET,
            stop_on_first_plausible: false,
        }
    }
}

mod humantime_text {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&humantime::format_duration(*d).to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let text = String::deserialize(d)?;
        humantime::parse_duration(&text).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConfigError {
    #[error("{0} must be at least 1")]
    TooSmall(&'static str),
    #[error("{name} must lie in [{lo}, {hi}], got {value}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("budget must be positive")]
    ZeroBudget,
}

impl RepairConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        for (name, v) in [("k", self.k), ("attempts", self.attempts as usize), ("suspicious_cap", self.suspicious_cap)] {
            if v == 0 {
                return Err(ConfigError::TooSmall(name));
            }
        }
        for (name, value, lo, hi) in [
            ("theta", self.theta, -1.0, 1.0),
            ("alpha", self.alpha, 0.0, 1.0),
            ("temperature", self.temperature, 0.0, f64::MAX),
        ] {
            if !(lo..=hi).contains(&value) {
                return Err(ConfigError::OutOfRange { name, value, lo, hi });
            }
        }
        if self.budget.is_zero() {
            return Err(ConfigError::ZeroBudget);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    /// Joint repair over all candidate methods.
    Simultaneous,
    /// Joint repair on top of a promising patch.
    SimultaneousCarry,
    /// Single-method repair.
    Iterative,
    /// Single-method repair on top of a promising patch.
    IterativeCarry,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AttemptOutcome {
    Verdict { verdict: VerdictKind },
    PromptError { message: String },
    ParseError { message: String },
    ApplyError { message: String },
    HarnessError { message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttemptRecord {
    pub location: String,
    pub phase: Phase,
    /// Method group label for single-method phases.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
    /// 1-based attempt within the phase (per carried patch for carry phases).
    pub attempt: u32,
    /// 1-based model request number within the location.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub request: Option<u32>,
    pub outcome: AttemptOutcome,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub patch_id: Option<String>,
    /// Id of the promising patch this attempt built on.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub base: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromisingPatch {
    pub patch: Patch,
    pub results: TestReport,
    pub verdict: PatchVerdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlausiblePatch {
    pub patch: Patch,
    pub location: String,
    pub diff: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RepairState {
    pub promising: Vec<PromisingPatch>,
    pub plausible: Vec<PlausiblePatch>,
    pub log: Vec<AttemptRecord>,
    /// Promising patch ids after each single-method group, in order.
    pub promising_history: Vec<(String, Vec<String>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationSummary {
    pub id: String,
    pub file: String,
    pub line: u32,
    pub score: f64,
    pub token_candidates: usize,
    pub embedding_candidates: usize,
    pub groups: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Plausible,
    ListExhausted,
    Budget,
    Aborted,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub total_ms: u64,
    pub baseline_ms: u64,
    pub per_location_ms: BTreeMap<String, u64>,
    pub model_ms: u64,
    pub validation_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub state: RepairState,
    pub termination: Termination,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub abort_reason: Option<String>,
    pub baseline: TestReport,
    pub locations: Vec<LocationSummary>,
    pub timings: Timings,
    pub requests: u32,
    pub prompt_tokens: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("baseline test run failed: {0}")]
    Baseline(#[from] HarnessError),
    #[error("baseline workspace: {0}")]
    Workspace(String),
    #[error("the unpatched program passes every test; nothing to repair")]
    NothingToRepair,
}

/// Receives prompts, responses and workspace requests as the run proceeds.
pub trait Recorder {
    fn exchange(&mut self, _location: &str, _request: u32, _prompt: &str, _response: &str) {}

    /// Where to keep the workspace of a request, if workspaces are kept.
    fn workspace_for(&mut self, _location: &str, _request: u32) -> Option<PathBuf> {
        None
    }
}

/// A recorder that keeps nothing.
pub struct NullRecorder;

impl Recorder for NullRecorder {}

/// Everything a run needs.
pub struct Session<'a> {
    pub config: &'a RepairConfig,
    pub index: &'a SourceIndex,
    pub coverage: &'a CoverageMatrix,
    pub harness: &'a HarnessConfig,
    pub backend: &'a mut dyn Backend,
    pub provider: &'a dyn EmbeddingProvider,
    pub cache: &'a dyn EmbeddingCache,
    pub recorder: &'a mut dyn Recorder,
    /// Paths under the project root that workspaces must not copy.
    pub exclude: Vec<PathBuf>,
}

enum Fatal {
    Backend(BackendError),
    Embed(EmbedError),
}

enum Step {
    Done(Box<AttemptResult>),
    OutOfBudget,
}

struct AttemptResult {
    verdict: Option<PatchVerdict>,
    feedback: FeedbackEntry,
}

struct Run<'s, 'a> {
    s: &'s mut Session<'a>,
    started: Instant,
    baseline: TestReport,
    evidence: BugEvidence,
    expected: Vec<String>,
    requests: BTreeMap<String, u32>,
    state: RepairState,
    timings: Timings,
    prompt_tokens: usize,
    out_of_budget: bool,
}

/// Runs the repair loop over `suspicious` (already ranked and capped by the caller
/// or capped here to the configured limit).
pub fn repair_bug(session: &mut Session<'_>, suspicious: &[SuspiciousLocation]) -> Result<RunResult, EngineError> {
    let started = Instant::now();
    let expected: Vec<String> = session.coverage.tests.iter().map(|(t, _)| t.clone()).collect();
    let ws = apply_patch(session.index, &Patch::empty(), None, &session.exclude)
        .map_err(|e| EngineError::Workspace(e.to_string()))?;
    let baseline = run_tests(ws.path(), session.harness, &expected)?;
    drop(ws);
    if baseline.non_passing().next().is_none() {
        return Err(EngineError::NothingToRepair);
    }
    let mut timings = Timings {
        baseline_ms: started.elapsed().as_millis() as u64,
        ..Timings::default()
    };
    timings.validation_ms = timings.baseline_ms;
    let mut run = Run {
        evidence: BugEvidence::from_report(&baseline),
        s: session,
        started,
        baseline,
        expected,
        requests: BTreeMap::new(),
        state: RepairState::default(),
        timings,
        prompt_tokens: 0,
        out_of_budget: false,
    };
    let pool = sibling_pool(run.s.index, run.s.coverage);
    let mut locations = Vec::new();
    let mut termination = Termination::ListExhausted;
    let mut abort_reason = None;
    let cap = run.s.config.suspicious_cap;
    for (k, loc) in suspicious.iter().take(cap).enumerate() {
        if run.budget_left().is_none() {
            termination = Termination::Budget;
            break;
        }
        let id = format!("loc{}", k + 1);
        let loc_started = Instant::now();
        let result = run.location(&id, loc, &pool, &mut locations);
        run.timings
            .per_location_ms
            .insert(id.clone(), loc_started.elapsed().as_millis() as u64);
        match result {
            Err(Fatal::Backend(e)) => {
                termination = Termination::Aborted;
                abort_reason = Some(e.to_string());
                break;
            }
            Err(Fatal::Embed(e)) => {
                termination = Termination::Aborted;
                abort_reason = Some(e.to_string());
                break;
            }
            Ok(()) => {}
        }
        if !run.state.plausible.is_empty() {
            termination = Termination::Plausible;
            break;
        }
        if run.out_of_budget {
            termination = Termination::Budget;
            break;
        }
    }
    if termination != Termination::Plausible && !run.state.plausible.is_empty() {
        termination = Termination::Plausible;
    }
    run.timings.total_ms = run.started.elapsed().as_millis() as u64;
    Ok(RunResult {
        requests: run.requests.values().sum(),
        state: run.state,
        termination,
        abort_reason,
        baseline: run.baseline,
        locations,
        timings: run.timings,
        prompt_tokens: run.prompt_tokens,
    })
}

/// Candidate siblings of a suspicious statement: the statement itself first,
/// then embedding matches among the top-`k` token matches.
pub fn detect_candidates(
    ctx: &StatementContext,
    pool: &[StatementContext],
    config: &RepairConfig,
    provider: &dyn EmbeddingProvider,
    cache: &dyn EmbeddingCache,
) -> Result<(usize, Vec<CandidateSibling>), EmbedError> {
    let tokens = token_match(ctx, pool, config.k);
    let token_count = tokens.len();
    let matched = embedding_match(ctx, tokens, config.theta, provider, cache)?;
    let mut out = vec![CandidateSibling::of_target(ctx.clone())];
    out.extend(matched);
    Ok((token_count, out))
}

fn dedupe_promising(list: Vec<PromisingPatch>) -> Vec<PromisingPatch> {
    let mut seen = BTreeSet::new();
    list.into_iter().filter(|p| seen.insert(p.patch.id())).collect()
}

impl Run<'_, '_> {
    fn budget_left(&self) -> Option<Duration> {
        self.s.config.budget.checked_sub(self.started.elapsed()).filter(|d| !d.is_zero())
    }

    fn stop_early(&self) -> bool {
        self.out_of_budget || (self.s.config.stop_on_first_plausible && !self.state.plausible.is_empty())
    }

    fn location(
        &mut self,
        id: &str,
        loc: &SuspiciousLocation,
        pool: &[StatementContext],
        summaries: &mut Vec<LocationSummary>,
    ) -> Result<(), Fatal> {
        let Some(stmt) = self.s.index.statement_at(&loc.file, loc.line) else {
            warn!("{id}: no statement at {}:{}; skipped", loc.file, loc.line);
            return Ok(());
        };
        let ctx = extract_context(self.s.index, stmt);
        let (token_count, candidates) =
            detect_candidates(&ctx, pool, self.s.config, self.s.provider, self.s.cache).map_err(Fatal::Embed)?;
        let groups = group_by_method(&candidates, self.s.index);
        info!(
            "{id}: {}:{} with {} candidate siblings in {} methods",
            loc.file,
            loc.line,
            candidates.len(),
            groups.len()
        );
        summaries.push(LocationSummary {
            id: id.to_string(),
            file: loc.file.clone(),
            line: loc.line,
            score: loc.score,
            token_candidates: token_count,
            embedding_candidates: candidates.len() - 1,
            groups: groups.len(),
        });
        self.simultaneous(id, &ctx, &candidates)?;
        if !self.state.plausible.is_empty() || self.stop_early() {
            return Ok(());
        }
        self.iterative(id, groups)
    }

    fn simultaneous(&mut self, id: &str, ctx: &StatementContext, candidates: &[CandidateSibling]) -> Result<(), Fatal> {
        let filtered = jaccard_filter(candidates, ctx, self.s.config.alpha);
        let groups = group_by_method(&filtered, self.s.index);
        if groups.is_empty() {
            return Ok(());
        }
        let t = self.s.config.attempts;
        let mut fb: Vec<FeedbackEntry> = Vec::new();
        for attempt in 1..=t {
            let Step::Done(r) = self.attempt(id, Phase::Simultaneous, None, attempt, &groups, &fb, None)? else {
                return Ok(());
            };
            fb = vec![r.feedback];
            if self.stop_early() {
                return Ok(());
            }
        }
        let carried = self.state.promising.clone();
        for pro in &carried {
            fb = vec![self.seed_feedback(pro)];
            for attempt in 1..=t {
                let Step::Done(r) =
                    self.attempt(id, Phase::SimultaneousCarry, None, attempt, &groups, &fb, Some(&pro.patch))?
                else {
                    return Ok(());
                };
                fb = vec![r.feedback];
                if self.stop_early() {
                    return Ok(());
                }
            }
        }
        Ok(())
    }

    fn iterative(&mut self, id: &str, groups: Vec<MethodGroup>) -> Result<(), Fatal> {
        let t = self.s.config.attempts;
        for group in groups {
            let label = group.label();
            let single = [group];
            let mut fb: Vec<FeedbackEntry> = Vec::new();
            let mut new_pro: Vec<PromisingPatch> = Vec::new();
            for attempt in 1..=t {
                let Step::Done(r) = self.attempt(id, Phase::Iterative, Some(&label), attempt, &single, &fb, None)? else {
                    return Ok(());
                };
                if let Some(v) = &r.verdict {
                    if v.kind == VerdictKind::Promising {
                        new_pro.push(PromisingPatch {
                            patch: r.feedback.patch.clone(),
                            results: r.feedback.results.clone().expect("validated"),
                            verdict: v.clone(),
                        });
                    }
                }
                fb = vec![r.feedback];
                if self.stop_early() {
                    return Ok(());
                }
            }
            let carried = self.state.promising.clone();
            for pro in &carried {
                fb = vec![self.seed_feedback(pro)];
                for attempt in 1..=t {
                    let Step::Done(r) =
                        self.attempt(id, Phase::IterativeCarry, Some(&label), attempt, &single, &fb, Some(&pro.patch))?
                    else {
                        return Ok(());
                    };
                    match &r.verdict {
                        Some(v) if v.kind == VerdictKind::PassAll => {}
                        Some(v) if v.kind == VerdictKind::Promising => new_pro.push(PromisingPatch {
                            patch: r.feedback.patch.clone(),
                            results: r.feedback.results.clone().expect("validated"),
                            verdict: v.clone(),
                        }),
                        // no progress, or the attempt failed: keep the carried patch alive
                        _ => new_pro.push(pro.clone()),
                    }
                    fb = vec![r.feedback];
                    if self.stop_early() {
                        return Ok(());
                    }
                }
            }
            self.state.promising = dedupe_promising(new_pro);
            let ids = self.state.promising.iter().map(|p| p.patch.id()).collect();
            self.state.promising_history.push((label, ids));
        }
        Ok(())
    }

    fn seed_feedback(&self, pro: &PromisingPatch) -> FeedbackEntry {
        FeedbackEntry {
            diff: unified_diff(self.s.index, &pro.patch).unwrap_or_else(|_| pro.patch.render()),
            patch: pro.patch.clone(),
            results: Some(pro.results.clone()),
            failure: None,
        }
    }

    fn next_request(&mut self, id: &str) -> u32 {
        let n = self.requests.entry(id.to_string()).or_insert(0);
        *n += 1;
        *n
    }

    #[allow(clippy::too_many_arguments)]
    fn attempt(
        &mut self,
        id: &str,
        phase: Phase,
        group: Option<&str>,
        attempt: u32,
        groups: &[MethodGroup],
        fb: &[FeedbackEntry],
        base: Option<&Patch>,
    ) -> Result<Step, Fatal> {
        if self.budget_left().is_none() {
            self.out_of_budget = true;
            return Ok(Step::OutOfBudget);
        }
        let mut record = AttemptRecord {
            location: id.to_string(),
            phase,
            group: group.map(str::to_string),
            attempt,
            request: None,
            outcome: AttemptOutcome::PromptError { message: String::new() },
            patch_id: None,
            base: base.map(Patch::id),
        };
        let failed = |patch: Patch, diff: String, message: String| AttemptResult {
            verdict: None,
            feedback: FeedbackEntry {
                patch,
                diff,
                results: None,
                failure: Some(message),
            },
        };

        let ingredients = extract_fix_ingredients(groups, self.s.index, self.s.config.ingredients);
        let prompt = match build_prompt(
            groups,
            &self.evidence,
            fb,
            &ingredients,
            self.s.index,
            self.s.config.prompt_token_budget,
        ) {
            Ok(p) => p,
            Err(e) => {
                record.outcome = AttemptOutcome::PromptError { message: e.to_string() };
                self.state.log.push(record);
                return Ok(Step::Done(Box::new(failed(Patch::empty(), String::new(), e.to_string()))));
            }
        };
        self.prompt_tokens += crate::prompt::estimate_tokens(&prompt.text);
        let request_no = self.next_request(id);
        record.request = Some(request_no);
        let request = CompletionRequest {
            prompt: prompt.text,
            temperature: self.s.config.temperature,
            max_tokens: self.s.config.max_tokens,
            seed: seed_for(id, request_no),
            location: id.to_string(),
            attempt: request_no,
        };
        let model_started = Instant::now();
        let response = self.s.backend.complete(&request).map_err(Fatal::Backend)?;
        self.timings.model_ms += model_started.elapsed().as_millis() as u64;
        self.s.recorder.exchange(id, request_no, &request.prompt, &response);

        let generated = match parse_patch(&response) {
            Ok(p) => p,
            Err(e) => {
                record.outcome = AttemptOutcome::ParseError { message: e.to_string() };
                self.state.log.push(record);
                let excerpt: String = response.chars().take(400).collect();
                return Ok(Step::Done(Box::new(failed(Patch::empty(), excerpt, format!("unreadable response: {e}")))));
            }
        };
        let patch = match base {
            Some(b) => combine(&generated, b),
            None => generated,
        };
        record.patch_id = Some(patch.id());
        let diff = match unified_diff(self.s.index, &patch) {
            Ok(d) => d,
            Err(e) => {
                record.outcome = AttemptOutcome::ApplyError { message: e.to_string() };
                self.state.log.push(record);
                let rendered = patch.render();
                return Ok(Step::Done(Box::new(failed(patch, rendered, e.to_string()))));
            }
        };
        let keep = self.s.recorder.workspace_for(id, request_no);
        let validation_started = Instant::now();
        let outcome = apply_patch(self.s.index, &patch, keep.as_deref(), &self.s.exclude)
            .map_err(|e| e.to_string())
            .and_then(|ws| run_tests(ws.path(), self.s.harness, &self.expected).map_err(|e| e.to_string()));
        self.timings.validation_ms += validation_started.elapsed().as_millis() as u64;
        let report = match outcome {
            Ok(r) => r,
            Err(message) => {
                record.outcome = AttemptOutcome::HarnessError { message: message.clone() };
                self.state.log.push(record);
                return Ok(Step::Done(Box::new(failed(patch, diff, message))));
            }
        };
        let verdict = classify(&self.baseline, &report);
        record.outcome = AttemptOutcome::Verdict { verdict: verdict.kind };
        self.state.log.push(record);
        info!("{id} {phase:?} attempt {attempt}: {:?}", verdict.kind);
        let results = if verdict.kind == VerdictKind::PassAll {
            self.state.plausible.push(PlausiblePatch {
                patch: patch.clone(),
                location: id.to_string(),
                diff: diff.clone(),
            });
            None
        } else {
            Some(report)
        };
        Ok(Step::Done(Box::new(AttemptResult {
            verdict: Some(verdict),
            feedback: FeedbackEntry {
                patch,
                diff,
                results,
                failure: None,
            },
        })))
    }
}

fn seed_for(location: &str, request: u32) -> u64 {
    let mut h = Sha256::new();
    h.update(location.as_bytes());
    h.update(request.to_le_bytes());
    let bytes: [u8; 8] = h.finalize()[..8].try_into().expect("8 bytes");
    u64::from_le_bytes(bytes)
}
