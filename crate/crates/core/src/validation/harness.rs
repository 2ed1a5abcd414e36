//! Running the subject's test command and reading its results file.
//!
//! The command runs under `sh -c` inside the workspace with `RESULTS_PATH`
//! pointing at a file it must fill with one JSON object per test:
//!
//! ```text
//! {"test": "T.a", "status": "fail", "message": "...",
//!  "frames": [{"unit": "T", "method": "a", "file": "T.java", "line": 12}]}
//! ```
//!
//! `DESCRIPTOR_DIR` is also set so scripts can refer to files next to the
//! project descriptor. The exit status is advisory.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use tracing::warn;
use wait_timeout::ChildExt;

use super::{StackFrame, TestReport, TestResult, TestStatus};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnessConfig {
    pub command: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub setup: Option<String>,
    #[serde(default = "default_timeout", with = "secs", rename = "timeout_secs")]
    pub timeout: Duration,
    /// Directory exported as `DESCRIPTOR_DIR`.
    #[serde(skip)]
    pub descriptor_dir: PathBuf,
}

fn default_timeout() -> Duration {
    Duration::from_secs(300)
}

mod secs {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let secs = f64::deserialize(d)?;
        if !(secs > 0.0 && secs.is_finite()) {
            return Err(serde::de::Error::custom("timeout must be a positive number of seconds"));
        }
        Ok(Duration::from_secs_f64(secs))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("cannot start harness: {0}")]
    Spawn(#[source] std::io::Error),
    #[error("results line {line}: {message}")]
    Protocol { line: usize, message: String },
}

#[derive(Deserialize)]
struct RawResult {
    test: String,
    status: String,
    #[serde(default)]
    message: String,
    #[serde(default)]
    frames: Vec<StackFrame>,
}

enum Exit {
    Finished(Option<i32>),
    TimedOut,
}

fn run_shell(script: &str, cwd: &Path, env: &[(&str, &Path)], timeout: Duration) -> Result<Exit, HarnessError> {
    let mut cmd = Command::new("sh");
    cmd.arg("-c")
        .arg(script)
        .current_dir(cwd)
        .stdin(Stdio::null())
        .stdout(Stdio::null())
        .stderr(Stdio::null());
    for (k, v) in env {
        cmd.env(k, v);
    }
    #[cfg(unix)]
    {
        use std::os::unix::process::CommandExt;
        cmd.process_group(0);
    }
    let mut child = cmd.spawn().map_err(HarnessError::Spawn)?;
    match child.wait_timeout(timeout).map_err(HarnessError::Spawn)? {
        Some(status) => Ok(Exit::Finished(status.code())),
        None => {
            // the shell's children share its process group
            #[cfg(unix)]
            // SAFETY: plain syscall on the group created for this child
            unsafe {
                libc::killpg(child.id() as libc::pid_t, libc::SIGKILL);
            }
            let _ = child.kill();
            let _ = child.wait();
            Ok(Exit::TimedOut)
        }
    }
}

fn uniform(tests: &[String], status: TestStatus, message: &str) -> Vec<TestResult> {
    tests
        .iter()
        .map(|t| TestResult {
            test: t.clone(),
            status,
            message: message.to_string(),
            frames: Vec::new(),
        })
        .collect()
}

/// Runs the harness in `workspace`.
///
/// `expected` lists the test ids known to exist; tests missing from the
/// results file are reported as errors so they never count as passing.
pub fn run_tests(workspace: &Path, harness: &HarnessConfig, expected: &[String]) -> Result<TestReport, HarnessError> {
    let started = Instant::now();
    let scratch = tempfile::tempdir().map_err(HarnessError::Spawn)?;
    let results = scratch.path().join("results.jsonl");
    let env = [
        ("RESULTS_PATH", results.as_path()),
        ("DESCRIPTOR_DIR", harness.descriptor_dir.as_path()),
    ];
    let report = |tests, exit_status, timed_out| TestReport {
        tests,
        exit_status,
        timed_out,
        wall_time: started.elapsed(),
    };
    if let Some(setup) = &harness.setup {
        match run_shell(setup, workspace, &env, harness.timeout)? {
            Exit::Finished(Some(0)) => {}
            Exit::Finished(code) => {
                return Ok(report(uniform(expected, TestStatus::Error, "setup failed"), code, false))
            }
            Exit::TimedOut => {
                return Ok(report(uniform(expected, TestStatus::Timeout, "setup timed out"), None, true))
            }
        }
    }
    let code = match run_shell(&harness.command, workspace, &env, harness.timeout)? {
        Exit::Finished(code) => code,
        Exit::TimedOut => {
            return Ok(report(uniform(expected, TestStatus::Timeout, "test run timed out"), None, true))
        }
    };
    let Ok(text) = std::fs::read_to_string(&results) else {
        warn!("harness wrote no results file");
        return Ok(report(uniform(expected, TestStatus::Error, "no results file"), code, false));
    };
    let mut tests = parse_results(&text)?;
    let seen: BTreeSet<String> = tests.iter().map(|t| t.test.clone()).collect();
    for t in expected {
        if !seen.contains(t) {
            tests.extend(uniform(std::slice::from_ref(t), TestStatus::Error, "not reported"));
        }
    }
    Ok(report(tests, code, false))
}

/// Parses a results file; duplicate test ids are a protocol violation.
pub fn parse_results(text: &str) -> Result<Vec<TestResult>, HarnessError> {
    let mut out: Vec<TestResult> = Vec::new();
    let mut seen = BTreeSet::new();
    for (k, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let protocol = |message: String| HarnessError::Protocol { line: k + 1, message };
        let raw: RawResult = serde_json::from_str(line).map_err(|e| protocol(e.to_string()))?;
        let status = match raw.status.as_str() {
            "pass" => TestStatus::Pass,
            "fail" => TestStatus::Fail,
            "error" => TestStatus::Error,
            other => return Err(protocol(format!("unknown status {other:?}"))),
        };
        if !seen.insert(raw.test.clone()) {
            return Err(protocol(format!("duplicate test id {:?}", raw.test)));
        }
        out.push(TestResult {
            test: raw.test,
            status,
            message: raw.message,
            frames: raw.frames,
        });
    }
    Ok(out)
}
