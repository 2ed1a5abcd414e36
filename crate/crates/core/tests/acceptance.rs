//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use regex::Regex;

use sibfix::engine::{AttemptOutcome, Phase};
use sibfix::llm::{Backend, BackendError, CompletionRequest};
use sibfix::localization::{apply_spfl, ochiai_rank, parse_coverage, CoverageMatrix, Outcome};
use sibfix::orchestrator::{self, Mode, Overrides, RunReport};
use sibfix::prompt::{parse_sections, Section};
use sibfix::siblings::{token_match, tokenize, StatementContext};
use sibfix::subject::{Location, SourceIndex};
use sibfix::validation::{classify, StackFrame, TestReport, TestResult, TestStatus, VerdictKind};

const SCORE_TOLERANCE: f64 = 1e-9;
const OCHIAI_LIMIT: Duration = Duration::from_secs(10);
const TOKEN_MATCH_LIMIT: Duration = Duration::from_secs(30);
const E2E_LIMIT: Duration = Duration::from_secs(60);
const BUDGET: Duration = Duration::from_secs(5);
const SLOW_HARNESS_TIMEOUT: Duration = Duration::from_secs(10);

type CheckResult = Result<String, String>;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    };
}

// ---------------------------------------------------------------- ochiai

fn random_matrix(rng: &mut StdRng) -> CoverageMatrix {
    let n_tests = rng.gen_range(1..=200);
    let n_locs = rng.gen_range(1..=500);
    let files = ["a/A.java", "a/B.java", "b/C.java"];
    let locs: Vec<Location> = (0..n_locs)
        .map(|k| Location::new(files[k % files.len()], 1 + (k / files.len()) as u32))
        .collect();
    let density = rng.gen_range(0.01..0.5);
    let mut tests = Vec::new();
    let mut covered = BTreeMap::new();
    for t in 0..n_tests {
        let outcome = if t == 0 || rng.gen_bool(0.2) { Outcome::Fail } else { Outcome::Pass };
        let id = format!("T{t}");
        let set: BTreeSet<Location> = locs.iter().filter(|_| rng.gen_bool(density)).cloned().collect();
        if !set.is_empty() {
            covered.insert(id.clone(), set);
        }
        tests.push((id, outcome));
    }
    CoverageMatrix { tests, covered }
}

/// Independent recomputation: loop over every (location, test) pair.
fn brute_ochiai(m: &CoverageMatrix) -> Vec<(Location, f64)> {
    let all: BTreeSet<&Location> = m.covered.values().flatten().collect();
    let failed_total = m.tests.iter().filter(|(_, o)| *o == Outcome::Fail).count() as f64;
    let mut out: Vec<(Location, f64)> = all
        .into_iter()
        .map(|loc| {
            let (mut ef, mut ep) = (0.0, 0.0);
            for (t, o) in &m.tests {
                if m.covered.get(t).is_some_and(|s| s.contains(loc)) {
                    match o {
                        Outcome::Fail => ef += 1.0,
                        Outcome::Pass => ep += 1.0,
                    }
                }
            }
            let score = if ef == 0.0 { 0.0 } else { ef / (failed_total * (ef + ep)).sqrt() };
            (loc.clone(), score)
        })
        .collect();
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    out
}

fn ochiai_oracle() -> CheckResult {
    let mut rng = StdRng::seed_from_u64(0x0c1a1);
    let mut took = Duration::ZERO;
    let mut entries = 0;
    for case in 0..100 {
        let m = random_matrix(&mut rng);
        let start = Instant::now();
        let got = ochiai_rank(&m);
        took += start.elapsed();
        let want = brute_ochiai(&m);
        ensure!(got.len() == want.len(), "case {case}: {} entries, oracle {}", got.len(), want.len());
        for (k, (g, (loc, score))) in got.iter().zip(&want).enumerate() {
            ensure!(g.rank == k + 1, "case {case}: rank {} at position {k}", g.rank);
            ensure!(
                g.file == loc.file && g.line == loc.line,
                "case {case} rank {}: {}:{} vs oracle {loc}",
                k + 1,
                g.file,
                g.line
            );
            ensure!((g.score - score).abs() <= SCORE_TOLERANCE, "case {case} {loc}: {} vs {score}", g.score);
        }
        entries += got.len();
    }
    ensure!(took < OCHIAI_LIMIT, "took {took:?}");
    Ok(format!("100 matrices, {entries} ranked entries, {took:.2?}"))
}

// ---------------------------------------------------------------- tokenizer

fn tokenizer_table() -> CheckResult {
    let got = tokenize("getUnboundParameters()");
    ensure!(got == ["get", "unbound", "parameters"], "getUnboundParameters() -> {got:?}");
    let table: [(&str, &[&str]); 30] = [
        ("getAllParameters", &["get", "all", "parameters"]),
        ("x", &["x"]),
        ("", &[]),
        ("   ", &[]),
        ("a.b(c);", &["a", "b", "c"]),
        ("HTTPServer", &["http", "server"]),
        ("parseHTTPResponse", &["parse", "http", "response"]),
        ("IOError", &["io", "error"]),
        ("snake_case_name", &["snake", "case", "name"]),
        ("SCREAMING_CONSTANT", &["screaming", "constant"]),
        ("__init__", &["init"]),
        ("value2", &["value", "2"]),
        ("utf8Decoder", &["utf", "8", "decoder"]),
        ("x1y2", &["x", "1", "y", "2"]),
        ("42", &["42"]),
        ("3.14", &["3", "14"]),
        ("i++", &["i"]),
        ("a+=b-c", &["a", "b", "c"]),
        ("if (x == null) return;", &["if", "x", "null", "return"]),
        ("new int[10]", &["new", "int", "10"]),
        ("String s = \"Hello World\";", &["string", "s", "hello", "world"]),
        ("// TODO fixMe", &["todo", "fix", "me"]),
        ("List<Map<String, Integer>>", &["list", "map", "string", "integer"]),
        ("this.problem.getSize()", &["this", "problem", "get", "size"]),
        ("ABC", &["abc"]),
        ("AbC", &["ab", "c"]),
        ("getX", &["get", "x"]),
        ("toJSONString()", &["to", "json", "string"]),
        ("a_b2C", &["a", "b", "2", "c"]),
        ("Ünïcode_naïveValue", &["ünïcode", "naïve", "value"]),
    ];
    for (input, want) in table {
        let got = tokenize(input);
        ensure!(got == want, "{input:?} -> {got:?}, expected {want:?}");
    }
    Ok("getUnboundParameters() plus 30 table cases".into())
}

// ---------------------------------------------------------------- token match

const WORDS: [&str; 40] = [
    "alpha", "beta", "gamma", "delta", "epsilon", "zeta", "theta", "kappa", "lambda", "sigma", "omega", "rho",
    "count", "index", "buffer", "value", "total", "offset", "limit", "cursor", "node", "edge", "weight", "parent",
    "child", "cache", "entry", "bound", "param", "result", "state", "scale", "range", "point", "store", "frame",
    "model", "event", "queue", "token",
];

fn camel(rng: &mut StdRng) -> String {
    let mut s = WORDS[rng.gen_range(0..WORDS.len())].to_string();
    for _ in 0..rng.gen_range(0..3) {
        let w = WORDS[rng.gen_range(0..WORDS.len())];
        s.push_str(&w[..1].to_uppercase());
        s.push_str(&w[1..]);
    }
    s
}

fn random_statement(rng: &mut StdRng) -> String {
    let args: Vec<String> = (0..rng.gen_range(0..4)).map(|_| camel(rng)).collect();
    format!("{} = {}.{}({});", camel(rng), camel(rng), camel(rng), args.join(", "))
}

/// Brute-force TF-IDF over string keys; returns cosine of every doc with doc 0.
fn brute_tfidf(docs: &[Vec<String>]) -> Vec<f64> {
    let n = docs.len() as f64;
    let mut df: HashMap<&str, f64> = HashMap::new();
    for d in docs {
        let uniq: BTreeSet<&str> = d.iter().map(String::as_str).collect();
        for t in uniq {
            *df.entry(t).or_default() += 1.0;
        }
    }
    let weights: Vec<HashMap<&str, f64>> = docs
        .iter()
        .map(|d| {
            let mut tf: HashMap<&str, f64> = HashMap::new();
            for t in d {
                *tf.entry(t).or_default() += 1.0;
            }
            tf.into_iter().map(|(t, f)| (t, f * (n / df[t]).ln())).filter(|(_, w)| *w != 0.0).collect()
        })
        .collect();
    let norm = |w: &HashMap<&str, f64>| w.values().map(|x| x * x).sum::<f64>().sqrt();
    let n0 = norm(&weights[0]);
    weights
        .iter()
        .map(|w| {
            let nw = norm(w);
            if n0 == 0.0 || nw == 0.0 {
                return 0.0;
            }
            let dot: f64 = w.iter().filter_map(|(t, x)| weights[0].get(t).map(|y| x * y)).sum();
            dot / (n0 * nw)
        })
        .collect()
}

fn token_match_oracle() -> CheckResult {
    let mut rng = StdRng::seed_from_u64(7);
    let target = "double[] sig = problem.getAllParameters(scaleFactor, lowerBound);".to_string();
    let planted = [
        "double[] sig = problem.getAllParameters(scaleFactor, upperBound);",
        "double[] start = problem.getAllParameters(scaleFactor, lowerBound);",
        "double[] sig = other.getAllParameters(scaleFactor, lowerBound);",
        "double[] sig = problem.getAllParameters(lowerBound, scaleFactor);",
        "float[] sig = problem.getAllParameters(scaleFactor, lowerBound);",
    ];
    let mut lines = vec![target.clone()];
    let mut planted_lines = BTreeSet::new();
    for k in 1..1000 {
        if k % 199 == 0 && planted_lines.len() < planted.len() {
            lines.push(planted[planted_lines.len()].to_string());
            planted_lines.insert(k as u32 + 3);
        } else {
            lines.push(random_statement(&mut rng));
        }
    }
    ensure!(planted_lines.len() == 5, "planted {}", planted_lines.len());
    // one statement per line, starting at line 3
    let body: String = lines.iter().map(|l| format!("    {l}\n")).collect();
    let src = format!("class Corpus {{\n  void m() {{\n{body}  }}\n}}\n");
    let index = SourceIndex::from_sources(Path::new("/corpus"), vec![("Corpus.java".into(), src)]);
    let stmts = &index.file("Corpus.java").map_err(|e| e.to_string())?.statements;
    ensure!(stmts.len() == 1000, "indexed {} statements", stmts.len());
    let pool: Vec<StatementContext> = stmts.iter().map(|s| StatementContext::new(s.clone(), vec![s.clone()])).collect();

    let start = Instant::now();
    let got = token_match(&pool[0], &pool, 100);
    let took = start.elapsed();

    let docs: Vec<Vec<String>> = pool.iter().map(|c| tokenize(&c.rendered)).collect();
    let scores = brute_tfidf(&docs);
    let mut want: Vec<(f64, u32)> = (1..pool.len()).map(|k| (scores[k], pool[k].target.span.start)).collect();
    want.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

    ensure!(got.len() == 100, "returned {}", got.len());
    // positions must agree; entries whose oracle scores tie within tolerance
    // may appear in any order among themselves
    let mut k = 0;
    while k < 100 {
        let mut end = k + 1;
        while end < want.len() && (want[end].0 - want[k].0).abs() <= SCORE_TOLERANCE {
            end += 1;
        }
        let group: BTreeSet<u32> = want[k..end].iter().map(|w| w.1).collect();
        for j in k..end.min(100) {
            let line = got[j].context.target.span.start;
            ensure!(group.contains(&line), "position {j}: line {line} not among oracle ties {group:?}");
            ensure!(
                (got[j].token_similarity - want[j].0).abs() <= SCORE_TOLERANCE,
                "position {j}: score {} vs oracle {}",
                got[j].token_similarity,
                want[j].0
            );
        }
        k = end;
    }
    let top: BTreeSet<u32> = got.iter().map(|c| c.context.target.span.start).collect();
    ensure!(planted_lines.is_subset(&top), "planted {planted_lines:?} not all in top-100");
    ensure!(took < TOKEN_MATCH_LIMIT, "took {took:?}");
    Ok(format!("1000 documents, top-100 equal to oracle, 5/5 planted found, {took:.2?}"))
}

// ---------------------------------------------------------------- verdicts

fn frame(unit: &str, method: &str, line: u32) -> StackFrame {
    StackFrame {
        unit: unit.into(),
        method: method.into(),
        file: format!("{unit}.java"),
        line,
    }
}

fn result(test: &str, status: TestStatus, frames: Vec<StackFrame>) -> TestResult {
    TestResult {
        test: test.into(),
        status,
        message: String::new(),
        frames,
    }
}

fn pass(test: &str) -> TestResult {
    result(test, TestStatus::Pass, Vec::new())
}

fn fail(test: &str, frames: Vec<StackFrame>) -> TestResult {
    result(test, TestStatus::Fail, frames)
}

fn report(tests: Vec<TestResult>) -> TestReport {
    TestReport::from_results(tests)
}

fn verdict_table() -> CheckResult {
    use VerdictKind::*;
    let trace = |lines: &[(&str, u32)]| -> Vec<StackFrame> {
        let mut v = vec![frame("CalcTest", "compute", 7)];
        v.extend(lines.iter().map(|(m, l)| frame("Calc", m, *l)));
        v
    };
    let base = trace(&[("compute", 31), ("a", 11)]);
    let baseline = report(vec![fail("CalcTest.compute", base.clone()), pass("CalcTest.parts")]);
    let two_failing = report(vec![
        fail("CalcTest.compute", base.clone()),
        fail("CalcTest.other", trace(&[("run", 40)])),
        pass("CalcTest.parts"),
    ]);
    let cases: Vec<(&str, &TestReport, TestReport, VerdictKind, usize)> = vec![
        (
            "every test passes",
            &baseline,
            report(vec![pass("CalcTest.compute"), pass("CalcTest.parts")]),
            PassAll,
            0,
        ),
        (
            "newly passing test",
            &two_failing,
            report(vec![pass("CalcTest.compute"), fail("CalcTest.other", trace(&[("run", 40)])), pass("CalcTest.parts")]),
            Promising,
            0,
        ),
        (
            "same method, deeper line",
            &baseline,
            report(vec![fail("CalcTest.compute", trace(&[("compute", 32), ("b", 16)])), pass("CalcTest.parts")]),
            Promising,
            0,
        ),
        (
            "same innermost method, later line",
            &baseline,
            report(vec![fail("CalcTest.compute", trace(&[("compute", 31), ("a", 12)])), pass("CalcTest.parts")]),
            Promising,
            0,
        ),
        (
            "cross-method divergence below identical prefix",
            &baseline,
            report(vec![fail("CalcTest.compute", trace(&[("compute", 31), ("helper", 50)])), pass("CalcTest.parts")]),
            Promising,
            0,
        ),
        (
            "identical traces",
            &baseline,
            report(vec![fail("CalcTest.compute", base.clone()), pass("CalcTest.parts")]),
            NoProgress,
            0,
        ),
        (
            "same method, shallower line",
            &baseline,
            report(vec![fail("CalcTest.compute", trace(&[("compute", 30), ("z", 5)])), pass("CalcTest.parts")]),
            NoProgress,
            0,
        ),
        (
            "regression only",
            &baseline,
            report(vec![fail("CalcTest.compute", base.clone()), fail("CalcTest.parts", trace(&[("parts", 3)]))]),
            NoProgress,
            1,
        ),
        (
            "newly passing despite a regression",
            &baseline,
            report(vec![pass("CalcTest.compute"), fail("CalcTest.parts", trace(&[("parts", 3)]))]),
            Promising,
            1,
        ),
        (
            "divergence at the test frame",
            &baseline,
            report(vec![
                fail("CalcTest.compute", vec![frame("OtherTest", "compute", 7), frame("Calc", "a", 11)]),
                pass("CalcTest.parts"),
            ]),
            NoProgress,
            0,
        ),
        (
            "failure now stops earlier (trace is a prefix)",
            &baseline,
            report(vec![fail("CalcTest.compute", trace(&[("compute", 31)])), pass("CalcTest.parts")]),
            NoProgress,
            0,
        ),
        (
            "patched failure has no frames",
            &baseline,
            report(vec![fail("CalcTest.compute", Vec::new()), pass("CalcTest.parts")]),
            NoProgress,
            0,
        ),
        (
            "timeout",
            &baseline,
            report(vec![result("CalcTest.compute", TestStatus::Timeout, Vec::new()), pass("CalcTest.parts")]),
            NoProgress,
            0,
        ),
        (
            "one of two failing tests progresses",
            &two_failing,
            report(vec![
                fail("CalcTest.compute", base.clone()),
                fail("CalcTest.other", trace(&[("run", 41)])),
                pass("CalcTest.parts"),
            ]),
            Promising,
            0,
        ),
        (
            "failing test missing from patched report",
            &baseline,
            report(vec![pass("CalcTest.parts")]),
            NoProgress,
            0,
        ),
        (
            "unknown lines match as wildcards",
            &baseline,
            report(vec![
                fail("CalcTest.compute", vec![frame("CalcTest", "compute", 0), frame("Calc", "compute", 0), frame("Calc", "a", 0)]),
                pass("CalcTest.parts"),
            ]),
            NoProgress,
            0,
        ),
    ];
    let n = cases.len();
    for (name, before, after, want, regressions) in cases {
        let v = classify(before, &after);
        ensure!(v.kind == want, "{name}: {:?}, expected {want:?}", v.kind);
        ensure!(v.regressions.len() == regressions, "{name}: regressions {:?}", v.regressions);
    }
    Ok(format!("{n} report pairs"))
}

// ---------------------------------------------------------------- end-to-end

fn repair_bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_repair"))
}

fn end_to_end() -> CheckResult {
    let dir = fixtures().join("sibling-bug");
    let out = tempfile::tempdir().map_err(|e| e.to_string())?;
    let start = Instant::now();
    let run = repair_bin()
        .args(["run", "--mode", "sbfl", "--out"])
        .arg(out.path())
        .arg(dir.join("descriptor.json"))
        .env("RUST_LOG", "warn")
        .output()
        .map_err(|e| e.to_string())?;
    let took = start.elapsed();
    ensure!(run.status.code() == Some(0), "exit {:?}: {}", run.status.code(), String::from_utf8_lossy(&run.stderr));
    let expected = std::fs::read(dir.join("expected.diff")).map_err(|e| e.to_string())?;
    ensure!(run.stdout == expected, "diff differs:\n{}", String::from_utf8_lossy(&run.stdout));
    let report = only_report(out.path())?;
    let patch = &report.plausible.first().ok_or("no plausible patch")?.patch;
    let methods: BTreeSet<&str> = patch.edits.iter().map(|e| e.method_name()).collect();
    ensure!(methods == BTreeSet::from(["estimate", "fit", "guess"]), "edited {methods:?}");
    let saved = std::fs::read_dir(only_run_dir(out.path())?.join("patches"))
        .map_err(|e| e.to_string())?
        .count();
    ensure!(saved == report.plausible.len(), "{saved} diff files saved");
    ensure!(took < E2E_LIMIT, "took {took:?}");
    Ok(format!("exit 0, 3 methods edited, diff byte-identical, {took:.2?}"))
}

fn only_run_dir(out: &Path) -> Result<PathBuf, String> {
    let dirs: Vec<PathBuf> = std::fs::read_dir(out)
        .map_err(|e| e.to_string())?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    ensure!(dirs.len() == 1, "{} run directories", dirs.len());
    Ok(dirs[0].clone())
}

fn only_report(out: &Path) -> Result<RunReport, String> {
    let text = std::fs::read_to_string(only_run_dir(out)?.join("report.json")).map_err(|e| e.to_string())?;
    serde_json::from_str(&text).map_err(|e| e.to_string())
}

// ---------------------------------------------------------------- feedback

/// Returns the full fix only once the feedback section names the failing test.
struct FeedbackGated {
    partial: String,
    full: String,
    prompts: Vec<String>,
}

impl Backend for FeedbackGated {
    fn id(&self) -> String {
        "feedback-gated".into()
    }

    fn complete(&mut self, request: &CompletionRequest) -> Result<String, BackendError> {
        self.prompts.push(request.prompt.clone());
        let sections = parse_sections(&request.prompt).ok_or_else(|| BackendError::Protocol("bad prompt".into()))?;
        let feedback = sections
            .iter()
            .find(|(s, _)| *s == Section::Feedback)
            .map(|(_, body)| body.as_str())
            .unwrap_or("");
        Ok(if feedback.contains("BoundsTest.fitIgnoresBoundParameters") {
            self.full.clone()
        } else {
            self.partial.clone()
        })
    }
}

fn feedback_loop() -> CheckResult {
    let dir = fixtures().join("sibling-bug");
    let read = |p: &str| std::fs::read_to_string(dir.join(p)).map_err(|e| e.to_string());
    let backend = FeedbackGated {
        partial: read("responses-feedback/loc1_attempt1.txt")?,
        full: read("responses/loc1_attempt1.txt")?,
        prompts: Vec::new(),
    };
    let out = tempfile::tempdir().map_err(|e| e.to_string())?;
    let overrides = Overrides {
        out: Some(out.path().to_path_buf()),
        stop_on_first_plausible: true,
        ..Overrides::default()
    };
    let outcome = orchestrator::run_with_backend(&dir.join("descriptor.json"), &overrides, Some(Box::new(backend)))
        .map_err(|e| e.to_string())?;
    ensure!(outcome.exit_code == 0, "exit {}", outcome.exit_code);
    let report = outcome.report.ok_or("no report")?;
    let kinds: Vec<(u32, &AttemptOutcome)> = report.attempts.iter().map(|a| (a.attempt, &a.outcome)).collect();
    ensure!(report.attempts.len() == 2, "attempt log {kinds:?}");
    let pass_all = AttemptOutcome::Verdict { verdict: VerdictKind::PassAll };
    ensure!(report.attempts[0].outcome != pass_all, "attempt 1 already plausible");
    ensure!(report.attempts[1].outcome == pass_all && report.attempts[1].attempt == 2, "log {kinds:?}");
    ensure!(report.attempts.iter().all(|a| a.phase == Phase::Simultaneous), "phases {kinds:?}");
    Ok("partial fix at attempt 1, plausible at attempt 2".into())
}

// ---------------------------------------------------------------- carry-over

/// Fixes the single method a prompt asks about; refuses joint prompts and the
/// distractor method `d`.
struct PerMethod {
    header: Regex,
}

impl Backend for PerMethod {
    fn id(&self) -> String {
        "per-method".into()
    }

    fn complete(&mut self, request: &CompletionRequest) -> Result<String, BackendError> {
        let methods: Vec<String> = self.header.captures_iter(&request.prompt).map(|c| c[1].to_string()).collect();
        let [m] = methods.as_slice() else {
            return Ok(String::new());
        };
        let k = match m.as_str() {
            "a" => 0,
            "b" => 1,
            "c" => 2,
            _ => return Ok(String::new()),
        };
        Ok(format!(
            "=== PATCH file=src/Calc.java method={m} ===\n```java\n    int {m}() {{\n        int v = store.readChecked({k}) + offset;\n        return v;\n    }}\n```\n"
        ))
    }
}

fn per_method_backend() -> PerMethod {
    PerMethod {
        header: Regex::new(r"(?m)^### file=\S+ method=(\w+)@").unwrap(),
    }
}

fn carry_over() -> CheckResult {
    let dir = fixtures().join("carry-over");
    let out = tempfile::tempdir().map_err(|e| e.to_string())?;
    let overrides = Overrides {
        out: Some(out.path().to_path_buf()),
        ..Overrides::default()
    };
    let outcome = orchestrator::run_with_backend(&dir.join("descriptor.json"), &overrides, Some(Box::new(per_method_backend())))
        .map_err(|e| e.to_string())?;
    let report = outcome.report.ok_or("no report")?;
    ensure!(outcome.exit_code == 0, "exit {}, termination {:?}", outcome.exit_code, report.termination);

    let verdict = |group: &str, phase: Phase| -> Vec<&AttemptOutcome> {
        report
            .attempts
            .iter()
            .filter(|a| a.phase == phase && a.group.as_deref() == Some(group))
            .map(|a| &a.outcome)
            .collect()
    };
    let v = |k| AttemptOutcome::Verdict { verdict: k };
    ensure!(
        report.attempts.iter().filter(|a| a.phase == Phase::Simultaneous).all(|a| matches!(a.outcome, AttemptOutcome::ParseError { .. })),
        "simultaneous repair was expected to fail"
    );
    let labels: Vec<&str> = report.promising_history.iter().map(|(l, _)| l.as_str()).collect();
    ensure!(labels == ["src/Calc.java::a", "src/Calc.java::b", "src/Calc.java::d", "src/Calc.java::c"], "group order {labels:?}");
    let [(_, after_a), (_, after_b), (_, after_d), (_, _after_c)] = &report.promising_history[..] else {
        unreachable!()
    };
    // independent repair of a alone progresses and is kept
    ensure!(verdict(labels[0], Phase::Iterative) == [&v(VerdictKind::Promising)], "a: {:?}", verdict(labels[0], Phase::Iterative));
    ensure!(after_a.len() == 1, "after a: {after_a:?}");
    // b alone shows no progress; on top of a it does
    ensure!(verdict(labels[1], Phase::Iterative) == [&v(VerdictKind::NoProgress)], "b alone");
    ensure!(verdict(labels[1], Phase::IterativeCarry) == [&v(VerdictKind::Promising)], "b carried");
    ensure!(after_b.len() == 1 && after_b != after_a, "after b: {after_b:?}");
    // the distractor fails; the carried patch survives
    let d_carry: Vec<_> = report
        .attempts
        .iter()
        .filter(|a| a.phase == Phase::IterativeCarry && a.group.as_deref() == Some(labels[2]))
        .collect();
    ensure!(!d_carry.is_empty() && d_carry.iter().all(|a| matches!(a.outcome, AttemptOutcome::ParseError { .. })), "d carry");
    ensure!(d_carry.iter().all(|a| a.base.as_ref() == after_b.first()), "d carried the wrong base");
    ensure!(after_d == after_b, "carried patch dropped after failed group: {after_d:?}");
    // c on top of a+b passes everything
    ensure!(verdict(labels[3], Phase::IterativeCarry) == [&v(VerdictKind::PassAll)], "c carried: {:?}", verdict(labels[3], Phase::IterativeCarry));
    let patch = &report.plausible.first().ok_or("no plausible patch")?.patch;
    let methods: Vec<&str> = patch.edits.iter().map(|e| e.method_name()).collect();
    ensure!(methods == ["a", "b", "c"], "plausible patch edits {methods:?}");
    Ok("a -> a+b -> (d fails, a+b kept) -> a+b+c passes all".into())
}

// ---------------------------------------------------------------- spfl

fn spfl_contract() -> CheckResult {
    let dir = fixtures().join("sibling-bug");
    let coverage = parse_coverage(&std::fs::read_to_string(dir.join("coverage.txt")).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let known = Location::new("src/main/java/org/fit/Fitter.java", 19);
    let ranked = ochiai_rank(&coverage);
    let before = ranked.iter().position(|r| r.location() == known).ok_or("known location not ranked")?;
    ensure!(before > 0, "known location already first");
    let promoted = apply_spfl(&ranked, &known);
    ensure!(promoted[0].location() == known, "rank 1 is {}", promoted[0].location());
    ensure!(promoted.len() == ranked.len(), "length changed");
    let rest: Vec<Location> = ranked.iter().filter(|r| r.location() != known).map(|r| r.location()).collect();
    let after: Vec<Location> = promoted[1..].iter().map(|r| r.location()).collect();
    ensure!(rest == after, "relative order of the others changed");
    let ranks: Vec<usize> = promoted.iter().map(|r| r.rank).collect();
    ensure!(ranks == (1..=promoted.len()).collect::<Vec<_>>(), "ranks {ranks:?}");

    let out = tempfile::tempdir().map_err(|e| e.to_string())?;
    let overrides = Overrides {
        out: Some(out.path().to_path_buf()),
        mode: Some(Mode::Spfl),
        ..Overrides::default()
    };
    let outcome = orchestrator::run(&dir.join("descriptor-spfl.json"), &overrides).map_err(|e| e.to_string())?;
    let report = outcome.report.ok_or("no report")?;
    let first = report.attempts.first().ok_or("no attempts")?;
    let loc1 = report.locations.iter().find(|l| l.id == first.location).ok_or("unknown location id")?;
    ensure!(first.location == "loc1" && Location::new(loc1.file.clone(), loc1.line) == known, "first processed {}:{}", loc1.file, loc1.line);
    Ok(format!("moved from rank {} to 1, others in order, processed first", before + 1))
}

// ---------------------------------------------------------------- determinism

fn determinism() -> CheckResult {
    let dir = fixtures().join("sibling-bug");
    let base = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut logs = Vec::new();
    let mut first_run: Option<PathBuf> = None;
    for k in 0..3 {
        let overrides = Overrides {
            out: Some(base.path().join(format!("out{k}"))),
            // the third run replays the first run's recorded responses
            replay: if k == 2 { first_run.clone() } else { None },
            ..Overrides::default()
        };
        let outcome = orchestrator::run(&dir.join("descriptor.json"), &overrides).map_err(|e| e.to_string())?;
        let report = outcome.report.ok_or("no report")?;
        let written = std::fs::read_to_string(outcome.run_dir.join("report.json")).map_err(|e| e.to_string())?;
        let parsed: serde_json::Value = serde_json::from_str(&written).map_err(|e| e.to_string())?;
        ensure!(parsed["attempts"] == serde_json::to_value(&report.attempts).unwrap(), "report.json disagrees with result");
        logs.push(serde_json::to_string_pretty(&parsed["attempts"]).map_err(|e| e.to_string())?);
        first_run.get_or_insert(outcome.run_dir);
    }
    ensure!(logs[0] == logs[1], "two runs differ");
    ensure!(logs[0] == logs[2], "replay differs");
    Ok(format!("attempt logs identical across 2 runs and a replay ({} bytes)", logs[0].len()))
}

// ---------------------------------------------------------------- budget

fn budget() -> CheckResult {
    let dir = fixtures().join("carry-over");
    let out = tempfile::tempdir().map_err(|e| e.to_string())?;
    let overrides = Overrides {
        out: Some(out.path().to_path_buf()),
        ..Overrides::default()
    };
    let start = Instant::now();
    let outcome = orchestrator::run_with_backend(&dir.join("descriptor-slow.json"), &overrides, Some(Box::new(per_method_backend())))
        .map_err(|e| e.to_string())?;
    let took = start.elapsed();
    let report = outcome.report.ok_or("no report")?;
    ensure!(report.config.budget == BUDGET, "budget {:?}", report.config.budget);
    ensure!(took < BUDGET + SLOW_HARNESS_TIMEOUT, "took {took:?}");
    ensure!(
        report.termination == sibfix::engine::Termination::Budget,
        "termination {:?} after {took:?}",
        report.termination
    );
    ensure!(!report.attempts.is_empty(), "no attempts recorded");
    ensure!(only_run_dir(out.path())?.join("report.json").exists(), "no report written");
    Ok(format!("stopped after {took:.2?} with {} attempts logged", report.attempts.len()))
}

fn main() {
    type Criterion = (&'static str, fn() -> CheckResult);
    let criteria: [Criterion; 10] = [
        ("ochiai-oracle", ochiai_oracle),
        ("tokenizer-table", tokenizer_table),
        ("token-match-oracle", token_match_oracle),
        ("verdict-table", verdict_table),
        ("end-to-end-sibling-bug", end_to_end),
        ("feedback-loop", feedback_loop),
        ("iterative-carry-over", carry_over),
        ("spfl-contract", spfl_contract),
        ("determinism-replay", determinism),
        ("budget-enforcement", budget),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(reason) => {
                failed += 1;
                println!("FAIL {name}: {reason}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
