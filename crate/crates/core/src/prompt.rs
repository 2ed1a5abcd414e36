//! Repair prompt construction.
//!
//! A prompt has eight sections in a fixed order, each introduced by a
//! `## <NAME>` header line. Sibling lines inside the buggy methods carry a
//! trailing `// SIBLING` comment.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::ingredients::FixIngredient;
use crate::llm::Patch;
use crate::siblings::MethodGroup;
use crate::subject::SourceIndex;
use crate::validation::{TestReport, TestResult, TestStatus};

pub const SIBLING_MARKER: &str = "// SIBLING";
pub const DEFAULT_TOKEN_BUDGET: usize = 24_000;
const MAX_FRAMES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Section {
    Role,
    Task,
    ReasoningSteps,
    PatchDefinitions,
    BuggyMethods,
    TestResults,
    Feedback,
    Ingredients,
}

impl Section {
    pub const ALL: [Section; 8] = [
        Section::Role,
        Section::Task,
        Section::ReasoningSteps,
        Section::PatchDefinitions,
        Section::BuggyMethods,
        Section::TestResults,
        Section::Feedback,
        Section::Ingredients,
    ];

    pub fn header(self) -> &'static str {
        match self {
            Section::Role => "## ROLE",
            Section::Task => "## TASK",
            Section::ReasoningSteps => "## REASONING STEPS",
            Section::PatchDefinitions => "## PATCH DEFINITIONS",
            Section::BuggyMethods => "## BUGGY METHODS",
            Section::TestResults => "## TEST RESULTS",
            Section::Feedback => "## FEEDBACK",
            Section::Ingredients => "## FIX INGREDIENTS",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BugEvidence {
    /// Failing tests of the unpatched program, in report order.
    pub failing: Vec<TestResult>,
    pub originally_failing: usize,
}

impl BugEvidence {
    pub fn from_report(report: &TestReport) -> Self {
        let failing: Vec<TestResult> = report.non_passing().cloned().collect();
        Self {
            originally_failing: failing.len(),
            failing,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackEntry {
    pub patch: Patch,
    /// Unified diff of the patch, or its rendered blocks when it did not apply.
    pub diff: String,
    /// Absent for a bare plausible patch and for patches that never ran.
    pub results: Option<TestReport>,
    /// Why the attempt produced no test results, if it failed early.
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub text: String,
    pub sections: Vec<Section>,
    /// Sibling markers rendered (after any truncation).
    pub markers: usize,
    /// Groups dropped to fit the budget, by label.
    pub dropped_groups: Vec<String>,
    pub dropped_ingredients: usize,
    pub frames_trimmed: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum PromptError {
    #[error("no method groups to prompt on")]
    NoGroups,
    #[error("prompt needs about {tokens} tokens, over the budget of {budget}")]
    OverBudget { tokens: usize, budget: usize },
}

/// Rough token estimate: one token per four characters.
pub fn estimate_tokens(text: &str) -> usize {
    text.chars().count().div_ceil(4)
}

/// Builds the prompt, shrinking it to `budget` tokens if needed.
///
/// Ingredients are dropped first, then feedback stack frames, then whole
/// groups with the lowest Jaccard similarity.
pub fn build_prompt(
    groups: &[MethodGroup],
    evidence: &BugEvidence,
    feedback: &[FeedbackEntry],
    ingredients: &[FixIngredient],
    index: &SourceIndex,
    budget: usize,
) -> Result<PromptBundle, PromptError> {
    if groups.is_empty() {
        return Err(PromptError::NoGroups);
    }
    let mut kept_groups: Vec<&MethodGroup> = groups.iter().collect();
    let mut kept_ingredients = ingredients.len();
    let mut with_frames = true;
    loop {
        let text = render(&kept_groups, evidence, feedback, &ingredients[..kept_ingredients], index, with_frames);
        let tokens = estimate_tokens(&text);
        if tokens <= budget {
            let markers = kept_groups.iter().map(|g| g.sibling_lines.len()).sum();
            let dropped_groups = groups
                .iter()
                .filter(|g| !kept_groups.iter().any(|k| std::ptr::eq(*k, *g)))
                .map(|g| g.label())
                .collect();
            return Ok(PromptBundle {
                text,
                sections: Section::ALL.to_vec(),
                markers,
                dropped_groups,
                dropped_ingredients: ingredients.len() - kept_ingredients,
                frames_trimmed: !with_frames,
            });
        }
        if kept_ingredients > 0 {
            kept_ingredients -= 1;
        } else if with_frames && !feedback.is_empty() {
            with_frames = false;
        } else if kept_groups.len() > 1 {
            // lowest Jaccard first; among equals, the later group
            let victim = (0..kept_groups.len())
                .rev()
                .min_by(|&a, &b| {
                    let ja = kept_groups[a].best_jaccard.unwrap_or(f64::NEG_INFINITY);
                    let jb = kept_groups[b].best_jaccard.unwrap_or(f64::NEG_INFINITY);
                    ja.total_cmp(&jb)
                })
                .expect("at least two groups");
            kept_groups.remove(victim);
        } else {
            return Err(PromptError::OverBudget { tokens, budget });
        }
    }
}

/// Splits a rendered prompt back into its sections.
pub fn parse_sections(text: &str) -> Option<Vec<(Section, String)>> {
    let mut out: Vec<(Section, String)> = Vec::new();
    let mut expected = Section::ALL.iter();
    for line in text.lines() {
        if let Some(section) = Section::ALL.iter().find(|s| s.header() == line) {
            if expected.next() != Some(section) {
                return None;
            }
            out.push((*section, String::new()));
        } else if let Some((_, body)) = out.last_mut() {
            body.push_str(line);
            body.push('\n');
        }
    }
    (out.len() == Section::ALL.len()).then_some(out)
}

fn render(
    groups: &[&MethodGroup],
    evidence: &BugEvidence,
    feedback: &[FeedbackEntry],
    ingredients: &[FixIngredient],
    index: &SourceIndex,
    with_frames: bool,
) -> String {
    let mut out = String::new();
    let mut section = |s: Section, body: &str| {
        out.push_str(s.header());
        out.push('\n');
        out.push_str(body.trim_end());
        out.push_str("\n\n");
    };
    section(Section::Role, "You are an Automated Program Repair Tool.");
    section(Section::Task, TASK);
    section(Section::ReasoningSteps, REASONING);
    section(Section::PatchDefinitions, DEFINITIONS);
    section(Section::BuggyMethods, &render_groups(groups, index));
    section(Section::TestResults, &render_evidence(evidence));
    section(Section::Feedback, &render_feedback(feedback, with_frames));
    section(Section::Ingredients, &render_ingredients(ingredients));
    out.truncate(out.trim_end().len());
    out.push('\n');
    out
}

const TASK: &str = "\
The program below fails some of its tests. The fault may be repeated at several
sibling locations, marked with `// SIBLING`, that need the same kind of fix.
(a) Analyze the buggy methods and the marked lines.
(b) Evaluate the previous repair attempt shown under FEEDBACK, if any.
(c) Learn from its test results what still goes wrong.
(d) Produce consistent fixes for every location that shares the fault.";

const REASONING: &str = "\
1. Find the root cause from the failing tests, messages and stack traces.
2. Decide which marked sibling lines share that root cause.
3. Plan one repair strategy and apply it consistently to each of them.
4. Check the plan against the earlier attempt and its outcome.
5. Write the patch in the output format below.";

const DEFINITIONS: &str = "\
Plausible patch: after applying it, every test passes.
Promising patch: a test that failed before now passes, or a failing test now
fails further along its execution than before.

Output format. For each method you change, write a marker line followed by a
fenced code block holding the complete new method, or just its new body
starting with `{`:

=== PATCH file=<path> method=<name> ===
```
<replacement>
```

Use `method=<name>@<line>` with the signature line shown below when a name is
overloaded. Do not include the `// SIBLING` comments.";

fn render_groups(groups: &[&MethodGroup], index: &SourceIndex) -> String {
    let mut out = String::new();
    for g in groups {
        let Ok(file) = index.file(g.file()) else {
            continue;
        };
        let (title, first, last) = match g.method() {
            Some(m) => (
                format!("### file={} method={}@{}", m.file, m.name, m.signature_line),
                m.decl_start_line,
                m.body_span.end,
            ),
            None => {
                let first = *g.sibling_lines.first().unwrap_or(&1);
                let last = *g.sibling_lines.last().unwrap_or(&first);
                (format!("### file={} (top level)", g.file()), first, last)
            }
        };
        let _ = writeln!(out, "{title}\n```");
        for line in first..=last {
            let Some(text) = file.line_text(line) else { break };
            let text = text.trim_end_matches(['\n', '\r']);
            if g.sibling_lines.contains(&line) {
                let _ = writeln!(out, "{text} {SIBLING_MARKER}");
            } else if g.method().is_some() {
                let _ = writeln!(out, "{text}");
            }
        }
        out.push_str("```\n\n");
    }
    out
}

fn render_frames(out: &mut String, result: &TestResult) {
    // innermost first, as runtimes print them
    for f in result.frames.iter().rev().take(MAX_FRAMES) {
        let _ = writeln!(out, "    at {}.{}({}:{})", f.unit, f.method, f.file, f.line);
    }
}

fn status_word(s: TestStatus) -> &'static str {
    match s {
        TestStatus::Pass => "pass",
        TestStatus::Fail => "fail",
        TestStatus::Error => "error",
        TestStatus::Timeout => "timeout",
    }
}

fn render_evidence(evidence: &BugEvidence) -> String {
    let mut out = format!("Originally failing tests: {}\n", evidence.originally_failing);
    for t in &evidence.failing {
        let _ = writeln!(out, "- {} ({}): {}", t.test, status_word(t.status), t.message);
        render_frames(&mut out, t);
    }
    out
}

fn render_feedback(feedback: &[FeedbackEntry], with_frames: bool) -> String {
    if feedback.is_empty() {
        return "No previous attempts.".into();
    }
    let mut out = String::new();
    for (k, entry) in feedback.iter().enumerate() {
        let _ = writeln!(out, "### Previous attempt {}\n```diff\n{}\n```", k + 1, entry.diff.trim_end());
        if let Some(why) = &entry.failure {
            let _ = writeln!(out, "The patch could not be validated: {why}");
        }
        match &entry.results {
            None if entry.failure.is_none() => out.push_str("This patch made every test pass.\n"),
            None => {}
            Some(r) => {
                let failing: Vec<&TestResult> = r.non_passing().collect();
                let _ = writeln!(
                    out,
                    "Tests: {} passing, {} not passing.",
                    r.tests.len() - failing.len(),
                    failing.len()
                );
                for t in failing {
                    let _ = writeln!(out, "- {} ({}): {}", t.test, status_word(t.status), t.message);
                    if with_frames {
                        render_frames(&mut out, t);
                    }
                }
            }
        }
        out.push('\n');
    }
    out
}

fn render_ingredients(ingredients: &[FixIngredient]) -> String {
    if ingredients.is_empty() {
        return "None.".into();
    }
    let mut out = String::new();
    for i in ingredients {
        let _ = writeln!(out, "- {}  // {} in {}", i.signature, i.class, i.file);
    }
    out
}
