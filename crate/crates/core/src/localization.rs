//! Spectrum-based fault localization over per-test line coverage.
//!
//! Coverage files are plain text, one record per line:
//!
//! ```text
//! # comments and blank lines are ignored
//! test <test-id> pass|fail
//! cov <test-id> <file> <line> [<line> ...]
//! ```
//!
//! Test ids and file paths may not contain whitespace. A `cov` record may
//! appear before the `test` record that declares its id.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use tracing::warn;

use crate::subject::Location;

#[derive(Debug, thiserror::Error)]
pub enum CoverageError {
    #[error("cannot read coverage file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("coverage line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("coverage line {line}: test {test:?} is not declared")]
    UndeclaredTest { line: usize, test: String },
    #[error("no failing tests in coverage: nothing to repair")]
    NoFailingTests,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Pass,
    Fail,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageMatrix {
    pub tests: Vec<(String, Outcome)>,
    pub covered: BTreeMap<String, BTreeSet<Location>>,
}

impl CoverageMatrix {
    pub fn failing_tests(&self) -> impl Iterator<Item = &str> {
        self.tests
            .iter()
            .filter(|(_, o)| *o == Outcome::Fail)
            .map(|(t, _)| t.as_str())
    }

    pub fn failing_count(&self) -> usize {
        self.failing_tests().count()
    }

    /// Every location covered by at least one test, sorted by `(file, line)`.
    pub fn locations(&self) -> BTreeSet<Location> {
        self.covered.values().flatten().cloned().collect()
    }
}

pub fn load_coverage(path: &Path) -> Result<CoverageMatrix, CoverageError> {
    let text = std::fs::read_to_string(path).map_err(|source| CoverageError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_coverage(&text)
}

pub fn parse_coverage(text: &str) -> Result<CoverageMatrix, CoverageError> {
    let mut tests: Vec<(String, Outcome)> = Vec::new();
    let mut declared: HashMap<String, usize> = HashMap::new();
    let mut pending: Vec<(usize, String, Location)> = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let lineno = k + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let malformed = |message: &str| CoverageError::Malformed {
            line: lineno,
            message: message.to_string(),
        };
        match fields.as_slice() {
            ["test", id, outcome] => {
                let outcome = match *outcome {
                    "pass" => Outcome::Pass,
                    "fail" => Outcome::Fail,
                    other => return Err(malformed(&format!("unknown outcome {other:?}"))),
                };
                match declared.get(*id) {
                    Some(&ix) if tests[ix].1 != outcome => {
                        return Err(malformed(&format!("test {id:?} declared with two outcomes")))
                    }
                    Some(_) => {}
                    None => {
                        declared.insert(id.to_string(), tests.len());
                        tests.push((id.to_string(), outcome));
                    }
                }
            }
            ["test", ..] => return Err(malformed("expected `test <id> pass|fail`")),
            ["cov", id, file, lines @ ..] if !lines.is_empty() => {
                for l in lines {
                    let n: u32 = l
                        .parse()
                        .ok()
                        .filter(|n| *n > 0)
                        .ok_or_else(|| malformed(&format!("bad line number {l:?}")))?;
                    pending.push((lineno, id.to_string(), Location::new(*file, n)));
                }
            }
            ["cov", ..] => return Err(malformed("expected `cov <id> <file> <line>...`")),
            [kind, ..] => return Err(malformed(&format!("unknown record kind {kind:?}"))),
            [] => unreachable!(),
        }
    }
    let mut covered: BTreeMap<String, BTreeSet<Location>> = BTreeMap::new();
    for (lineno, id, loc) in pending {
        if !declared.contains_key(&id) {
            return Err(CoverageError::UndeclaredTest {
                line: lineno,
                test: id,
            });
        }
        covered.entry(id).or_default().insert(loc);
    }
    let matrix = CoverageMatrix { tests, covered };
    if matrix.failing_count() == 0 {
        return Err(CoverageError::NoFailingTests);
    }
    Ok(matrix)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuspiciousLocation {
    pub file: String,
    pub line: u32,
    pub score: f64,
    pub rank: usize,
}

impl SuspiciousLocation {
    pub fn location(&self) -> Location {
        Location::new(self.file.clone(), self.line)
    }
}

/// Pass/fail coverage counts of one program element.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Spectrum {
    /// failing tests covering the element
    pub ef: usize,
    /// passing tests covering the element
    pub ep: usize,
    /// failing tests not covering the element
    pub nf: usize,
    /// passing tests not covering the element
    pub np: usize,
}

/// Suspiciousness formula hook.
pub trait Suspiciousness {
    fn score(&self, s: Spectrum) -> f64;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Ochiai;

impl Suspiciousness for Ochiai {
    fn score(&self, s: Spectrum) -> f64 {
        if s.ef == 0 {
            return 0.0;
        }
        let total_failed = (s.ef + s.nf) as f64;
        s.ef as f64 / (total_failed * (s.ef + s.ep) as f64).sqrt()
    }
}

pub fn ochiai_rank(matrix: &CoverageMatrix) -> Vec<SuspiciousLocation> {
    rank_with(matrix, &Ochiai)
}

/// Scores every covered location and ranks by score, then `(file, line)`.
pub fn rank_with(matrix: &CoverageMatrix, formula: &dyn Suspiciousness) -> Vec<SuspiciousLocation> {
    let outcome: HashMap<&str, Outcome> =
        matrix.tests.iter().map(|(t, o)| (t.as_str(), *o)).collect();
    let total_failed = matrix.failing_count();
    let total_passed = matrix.tests.len() - total_failed;
    let mut counts: BTreeMap<&Location, (usize, usize)> = BTreeMap::new();
    for (test, locs) in &matrix.covered {
        let failed = outcome.get(test.as_str()) == Some(&Outcome::Fail);
        for loc in locs {
            let c = counts.entry(loc).or_default();
            if failed {
                c.0 += 1;
            } else {
                c.1 += 1;
            }
        }
    }
    let mut ranked: Vec<SuspiciousLocation> = counts
        .into_iter()
        .map(|(loc, (ef, ep))| SuspiciousLocation {
            file: loc.file.clone(),
            line: loc.line,
            score: formula.score(Spectrum {
                ef,
                ep,
                nf: total_failed - ef,
                np: total_passed - ep,
            }),
            rank: 0,
        })
        .collect();
    // BTreeMap order already gives (file, line) ascending; the sort is stable
    ranked.sort_by(|a, b| b.score.total_cmp(&a.score));
    for (k, r) in ranked.iter_mut().enumerate() {
        r.rank = k + 1;
    }
    ranked
}

/// Moves (or inserts) a known faulty location to rank 1, keeping the
/// relative order of everything else.
///
/// The promoted entry takes the highest score in the list so that scores stay
/// non-increasing with rank.
pub fn apply_spfl(ranked: &[SuspiciousLocation], known: &Location) -> Vec<SuspiciousLocation> {
    let top_score = ranked.iter().map(|r| r.score).fold(f64::NAN, f64::max);
    let mut rest: Vec<SuspiciousLocation> = Vec::with_capacity(ranked.len() + 1);
    let mut promoted = None;
    for r in ranked {
        if r.file == known.file && r.line == known.line && promoted.is_none() {
            promoted = Some(r.clone());
        } else {
            rest.push(r.clone());
        }
    }
    let mut head = promoted.unwrap_or_else(|| {
        warn!("known location {known} is not in the suspicious list; inserting it");
        SuspiciousLocation {
            file: known.file.clone(),
            line: known.line,
            score: 1.0,
            rank: 1,
        }
    });
    if top_score.is_finite() {
        head.score = head.score.max(top_score);
    }
    let mut out = Vec::with_capacity(rest.len() + 1);
    out.push(head);
    out.extend(rest);
    for (k, r) in out.iter_mut().enumerate() {
        r.rank = k + 1;
    }
    out
}

/// Builds a list verbatim from known locations (perfect localization).
pub fn given_locations(known: &[Location]) -> Vec<SuspiciousLocation> {
    known
        .iter()
        .enumerate()
        .map(|(k, l)| SuspiciousLocation {
            file: l.file.clone(),
            line: l.line,
            score: 1.0,
            rank: k + 1,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_BY_THREE: &str = "\
# two tests
test t1 fail
test t2 pass
cov t1 A.java 3 4
cov t2 A.java 4 5
cov t1 A.java 3
";

    #[test]
    fn parses_and_deduplicates() {
        let m = parse_coverage(TWO_BY_THREE).unwrap();
        assert_eq!(m.tests.len(), 2);
        assert_eq!(m.covered["t1"].len(), 2);
        assert_eq!(m.covered["t2"].len(), 2);
        assert_eq!(m.locations().len(), 3);
    }

    #[test]
    fn undeclared_test_is_fatal() {
        let err = parse_coverage("test a fail\ncov b X.java 1\n").unwrap_err();
        assert!(matches!(err, CoverageError::UndeclaredTest { line: 2, .. }));
    }

    #[test]
    fn malformed_record_reports_line() {
        let err = parse_coverage("test a fail\ncov a X.java zero\n").unwrap_err();
        assert!(matches!(err, CoverageError::Malformed { line: 2, .. }));
        let err = parse_coverage("\n\nbogus\n").unwrap_err();
        assert!(matches!(err, CoverageError::Malformed { line: 3, .. }));
    }

    #[test]
    fn zero_failing_tests_is_fatal() {
        assert!(matches!(
            parse_coverage("test a pass\ncov a X.java 1\n"),
            Err(CoverageError::NoFailingTests)
        ));
    }

    #[test]
    fn ochiai_values() {
        let o = Ochiai;
        assert_eq!(o.score(Spectrum { ef: 3, ep: 0, nf: 0, np: 4 }), 1.0);
        let v = o.score(Spectrum { ef: 2, ep: 2, nf: 0, np: 0 });
        assert!((v - 2.0 / 8f64.sqrt()).abs() < 1e-15);
        assert!((v - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert_eq!(o.score(Spectrum { ef: 0, ep: 5, nf: 1, np: 0 }), 0.0);
    }

    #[test]
    fn ranking_orders_by_score_then_location() {
        let m = parse_coverage(TWO_BY_THREE).unwrap();
        let r = ochiai_rank(&m);
        let got: Vec<_> = r.iter().map(|s| (s.line, s.rank)).collect();
        // line 3: ef=1 ep=0 -> 1.0; line 4: ef=1 ep=1 -> 0.707; line 5: ef=0 -> 0
        assert_eq!(got, vec![(3, 1), (4, 2), (5, 3)]);
        assert_eq!(r[2].score, 0.0);
    }

    fn list(n: u32) -> Vec<SuspiciousLocation> {
        (1..=n)
            .map(|k| SuspiciousLocation {
                file: "F".into(),
                line: k,
                score: 1.0 / k as f64,
                rank: k as usize,
            })
            .collect()
    }

    #[test]
    fn spfl_idempotent_at_top() {
        let l = list(5);
        assert_eq!(apply_spfl(&l, &Location::new("F", 1)), l);
    }

    #[test]
    fn spfl_moves_last_to_first() {
        let out = apply_spfl(&list(5), &Location::new("F", 5));
        let lines: Vec<_> = out.iter().map(|s| s.line).collect();
        assert_eq!(lines, vec![5, 1, 2, 3, 4]);
        assert_eq!(out.iter().map(|s| s.rank).collect::<Vec<_>>(), vec![1, 2, 3, 4, 5]);
        assert!(out.windows(2).all(|w| w[0].score >= w[1].score));
    }

    #[test]
    fn spfl_inserts_absent_location() {
        let out = apply_spfl(&list(3), &Location::new("G", 9));
        assert_eq!(out.len(), 4);
        assert_eq!((out[0].file.as_str(), out[0].line, out[0].rank), ("G", 9, 1));
    }
}
