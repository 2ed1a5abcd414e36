//! Patch validation: workspace application, test execution and verdicts.

mod apply;
mod harness;

use std::time::Duration;

use serde::{Deserialize, Serialize};

pub use apply::{apply_patch, patched_sources, resolve_edit, unified_diff, ApplyError, Workspace};
pub use harness::{parse_results, run_tests, HarnessConfig, HarnessError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestStatus {
    Pass,
    Fail,
    Error,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StackFrame {
    pub unit: String,
    pub method: String,
    pub file: String,
    /// 0 when unknown.
    #[serde(default)]
    pub line: u32,
}

impl StackFrame {
    /// Equality with unknown lines acting as wildcards.
    fn matches(&self, other: &StackFrame) -> bool {
        self.same_method(other) && (self.line == other.line || self.line == 0 || other.line == 0)
    }

    fn same_method(&self, other: &StackFrame) -> bool {
        self.unit == other.unit && self.method == other.method && self.file == other.file
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestResult {
    pub test: String,
    pub status: TestStatus,
    #[serde(default)]
    pub message: String,
    /// Outermost (the test case) first.
    #[serde(default)]
    pub frames: Vec<StackFrame>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub tests: Vec<TestResult>,
    pub exit_status: Option<i32>,
    pub timed_out: bool,
    #[serde(skip)]
    pub wall_time: Duration,
}

impl TestReport {
    pub fn from_results(tests: Vec<TestResult>) -> Self {
        Self {
            tests,
            exit_status: Some(0),
            timed_out: false,
            wall_time: Duration::ZERO,
        }
    }

    pub fn get(&self, test: &str) -> Option<&TestResult> {
        self.tests.iter().find(|t| t.test == test)
    }

    pub fn non_passing(&self) -> impl Iterator<Item = &TestResult> {
        self.tests.iter().filter(|t| t.status != TestStatus::Pass)
    }

    fn passes(&self, test: &str) -> bool {
        self.get(test).is_some_and(|t| t.status == TestStatus::Pass)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TraceAlignment {
    Identical,
    Progressed {
        divergence: usize,
        before: StackFrame,
        after: StackFrame,
    },
    Other,
}

/// Compares a failing test's stack before and after a patch.
///
/// Frames are walked from the test case inward. At the first mismatch the
/// patch made progress if it fails later in the same method, or in another
/// method below an unchanged, non-empty prefix.
pub fn align_traces(before: &[StackFrame], after: &[StackFrame]) -> TraceAlignment {
    if before.is_empty() {
        return TraceAlignment::Other;
    }
    let d = before
        .iter()
        .zip(after)
        .take_while(|(b, a)| b.matches(a))
        .count();
    if d == before.len() && d == after.len() {
        return TraceAlignment::Identical;
    }
    let (Some(b), Some(a)) = (before.get(d), after.get(d)) else {
        return TraceAlignment::Other;
    };
    let progressed = if b.same_method(a) {
        a.line > b.line
    } else {
        d >= 1 && (b.unit != a.unit || b.method != a.method)
    };
    if progressed {
        TraceAlignment::Progressed {
            divergence: d,
            before: b.clone(),
            after: a.clone(),
        }
    } else {
        TraceAlignment::Other
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VerdictKind {
    PassAll,
    Promising,
    NoProgress,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvidence {
    pub test: String,
    pub divergence: usize,
    pub before: StackFrame,
    pub after: StackFrame,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchVerdict {
    pub kind: VerdictKind,
    pub newly_passing: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace_progress: Option<TraceEvidence>,
    /// Tests passing before the patch and not after. Recorded, never a veto.
    pub regressions: Vec<String>,
}

/// Classifies a patched report against the unpatched baseline.
pub fn classify(baseline: &TestReport, patched: &TestReport) -> PatchVerdict {
    let regressions: Vec<String> = baseline
        .tests
        .iter()
        .filter(|t| t.status == TestStatus::Pass && !patched.passes(&t.test))
        .map(|t| t.test.clone())
        .collect();
    let verdict = |kind, newly_passing, trace_progress| PatchVerdict {
        kind,
        newly_passing,
        trace_progress,
        regressions: regressions.clone(),
    };
    // a baseline test absent from the patched report counts as not passing
    let all_pass = patched.non_passing().next().is_none()
        && baseline.tests.iter().all(|t| patched.passes(&t.test));
    if all_pass {
        return verdict(VerdictKind::PassAll, Vec::new(), None);
    }
    let newly_passing: Vec<String> = baseline
        .non_passing()
        .filter(|t| patched.passes(&t.test))
        .map(|t| t.test.clone())
        .collect();
    if !newly_passing.is_empty() {
        return verdict(VerdictKind::Promising, newly_passing, None);
    }
    for before in baseline.non_passing() {
        let Some(after) = patched.get(&before.test) else {
            continue;
        };
        if after.status == TestStatus::Pass {
            continue;
        }
        if let TraceAlignment::Progressed {
            divergence,
            before: b,
            after: a,
        } = align_traces(&before.frames, &after.frames)
        {
            let evidence = TraceEvidence {
                test: before.test.clone(),
                divergence,
                before: b,
                after: a,
            };
            return verdict(VerdictKind::Promising, Vec::new(), Some(evidence));
        }
    }
    verdict(VerdictKind::NoProgress, Vec::new(), None)
}
