//! Source indexing: statements, methods, classes and members of a subject project.
//!
//! The index is built from raw bytes with a lightweight brace-language model and
//! needs no compiler for the subject language. Once built it is immutable.

mod identifiers;
mod mask;
mod segment;

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Range;
use std::path::{Path, PathBuf};

use globset::{Glob, GlobSetBuilder};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tracing::warn;
use walkdir::WalkDir;

pub use identifiers::{
    declared_type, defines_variable, identifiers_in_text, is_keyword, Identifier, IdentifierKind,
};
pub use mask::mask_source;


#[derive(Debug, thiserror::Error)]
pub enum IndexError {
    #[error("project root {0} does not exist")]
    MissingRoot(PathBuf),
    #[error("invalid include pattern {pattern:?}: {source}")]
    Pattern {
        pattern: String,
        #[source]
        source: globset::Error,
    },
    #[error("file {0} is not in the index")]
    UnknownFile(String),
    #[error("stale method reference {file}::{method} (index generation changed)")]
    StaleRef { file: String, method: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Inclusive 1-based line range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LineSpan {
    pub start: u32,
    pub end: u32,
}

impl LineSpan {
    pub fn new(start: u32, end: u32) -> Self {
        debug_assert!(start <= end);
        Self { start, end }
    }

    pub fn contains(&self, line: u32) -> bool {
        self.start <= line && line <= self.end
    }

    pub fn len(&self) -> u32 {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

impl fmt::Display for LineSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.start == self.end {
            write!(f, "{}", self.start)
        } else {
            write!(f, "{}-{}", self.start, self.end)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StatementKind {
    Simple,
    BlockHeader,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MemberKind {
    Method,
    Field,
}

/// A `(file, line)` pair. Files are project-relative with `/` separators.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Location {
    pub file: String,
    pub line: u32,
}

impl Location {
    pub fn new(file: impl Into<String>, line: u32) -> Self {
        Self {
            file: file.into(),
            line,
        }
    }
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.file, self.line)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Statement {
    pub file: String,
    pub span: LineSpan,
    pub text: String,
    pub kind: StatementKind,
    #[serde(skip)]
    pub(crate) bytes: Range<usize>,
    /// Position of this statement within its file, in source order.
    #[serde(skip)]
    pub(crate) ordinal: usize,
    #[serde(skip)]
    pub(crate) method: Option<usize>,
}

impl Statement {
    pub fn location(&self) -> Location {
        Location::new(self.file.clone(), self.span.start)
    }

    pub fn identifiers(&self) -> Vec<Identifier> {
        identifiers_in(self)
    }
}

/// Classifies the identifiers used by a statement.
pub fn identifiers_in(statement: &Statement) -> Vec<Identifier> {
    identifiers_in_text(&statement.text)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MethodRef {
    pub file: String,
    pub name: String,
    pub signature_line: u32,
    /// Lines from the opening to the closing brace of the body.
    pub body_span: LineSpan,
    pub class: Option<String>,
    pub signature: String,
    pub signature_hash: String,
    /// Parameter `(name, type)` pairs.
    pub params: Vec<(String, String)>,
    /// Generation of the index this reference came from.
    pub generation: String,
    #[serde(skip)]
    pub(crate) decl_bytes: Range<usize>,
    #[serde(skip)]
    pub(crate) body_bytes: Range<usize>,
    /// Line where the declaration (including annotations and modifiers) starts.
    pub decl_start_line: u32,
}

impl MethodRef {
    /// Span from the first line of the declaration to the closing brace.
    pub fn decl_span(&self) -> LineSpan {
        LineSpan::new(self.decl_start_line, self.body_span.end)
    }

    pub fn key(&self) -> MethodKey {
        MethodKey {
            file: self.file.clone(),
            name: self.name.clone(),
            signature_hash: self.signature_hash.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MethodKey {
    pub file: String,
    pub name: String,
    pub signature_hash: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemberDecl {
    pub kind: MemberKind,
    pub name: String,
    pub signature: String,
    pub line: u32,
    pub declared_type: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassDecl {
    pub file: String,
    pub name: String,
    pub span: LineSpan,
    pub members: Vec<MemberDecl>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceFile {
    pub path: String,
    pub text: String,
    pub hash: String,
    /// True when brace segmentation failed and each line is a statement.
    pub line_wise: bool,
    pub statements: Vec<Statement>,
    pub methods: Vec<MethodRef>,
    pub classes: Vec<ClassDecl>,
    line_starts: Vec<usize>,
    first_line: BTreeMap<u32, usize>,
}

impl SourceFile {
    fn build(path: String, text: String, warnings: &mut Vec<String>) -> Self {
        let starts = segment::line_starts(&text);
        let hash = content_hash(text.as_bytes());
        let (seg, line_wise) = match segment::segment(&text) {
            Ok(seg) => (seg, false),
            Err(e) => {
                let msg = format!("{path}: {e}; indexing line-wise");
                warn!("{msg}");
                warnings.push(msg);
                (segment::segment_linewise(&text), true)
            }
        };
        let class_names: Vec<String> = seg.classes.iter().map(|c| c.name.clone()).collect();
        let statements: Vec<Statement> = seg
            .statements
            .iter()
            .enumerate()
            .map(|(ordinal, s)| Statement {
                file: path.clone(),
                span: segment::span_of(&starts, &s.bytes),
                text: text[s.bytes.clone()].to_string(),
                kind: s.kind,
                bytes: s.bytes.clone(),
                ordinal,
                method: s.method,
            })
            .collect();
        let methods = seg
            .methods
            .iter()
            .map(|m| MethodRef {
                file: path.clone(),
                name: m.name.clone(),
                signature_line: segment::line_of(&starts, m.name_at),
                body_span: segment::span_of(&starts, &m.body),
                class: m.class.map(|c| class_names[c].clone()),
                signature_hash: content_hash(m.signature.as_bytes())[..12].to_string(),
                signature: m.signature.clone(),
                params: m.params.clone(),
                generation: String::new(),
                decl_bytes: m.decl_start..m.body.end,
                body_bytes: m.body.clone(),
                decl_start_line: segment::line_of(&starts, m.decl_start),
            })
            .collect();
        let mut classes: Vec<ClassDecl> = seg
            .classes
            .iter()
            .map(|c| ClassDecl {
                file: path.clone(),
                name: c.name.clone(),
                span: segment::span_of(&starts, &(c.header_at..c.body.end)),
                members: Vec::new(),
            })
            .collect();
        for m in &seg.members {
            classes[m.class].members.push(MemberDecl {
                kind: m.kind,
                name: m.name.clone(),
                signature: m.signature.clone(),
                line: segment::line_of(&starts, m.at),
                declared_type: m.declared_type.clone(),
            });
        }
        let mut first_line = BTreeMap::new();
        for (k, s) in statements.iter().enumerate() {
            first_line.entry(s.span.start).or_insert(k);
        }
        Self {
            path,
            text,
            hash,
            line_wise,
            statements,
            methods,
            classes,
            line_starts: starts,
            first_line,
        }
    }

    pub fn line_count(&self) -> usize {
        self.line_starts.len()
    }

    /// Text of a 1-based line without its terminator.
    pub fn line_text(&self, line: u32) -> Option<&str> {
        let k = (line as usize).checked_sub(1)?;
        let start = *self.line_starts.get(k)?;
        let end = self
            .line_starts
            .get(k + 1)
            .copied()
            .unwrap_or(self.text.len());
        Some(self.text[start..end].trim_end_matches(['\n', '\r']))
    }

    /// Rebuilds the file from statement texts plus the bytes between them.
    pub fn reassemble(&self) -> String {
        let mut out = String::with_capacity(self.text.len());
        let mut cursor = 0;
        for s in &self.statements {
            out.push_str(&self.text[cursor..s.bytes.start]);
            out.push_str(&s.text);
            cursor = s.bytes.end;
        }
        out.push_str(&self.text[cursor..]);
        out
    }
}

pub(crate) fn content_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceIndex {
    root: PathBuf,
    generation: String,
    files: Vec<SourceFile>,
    by_path: BTreeMap<String, usize>,
    warnings: Vec<String>,
}

/// Indexes every file under `root` whose relative path matches one of `include`.
pub fn index_source(root: &Path, include: &[String]) -> Result<SourceIndex, IndexError> {
    if !root.is_dir() {
        return Err(IndexError::MissingRoot(root.to_path_buf()));
    }
    let mut builder = GlobSetBuilder::new();
    for p in include {
        let glob = Glob::new(p).map_err(|source| IndexError::Pattern {
            pattern: p.clone(),
            source,
        })?;
        builder.add(glob);
    }
    let set = builder.build().map_err(|source| IndexError::Pattern {
        pattern: include.join(","),
        source,
    })?;
    let mut warnings = Vec::new();
    let mut sources = Vec::new();
    for entry in WalkDir::new(root).sort_by_file_name() {
        let entry = match entry {
            Ok(e) => e,
            Err(e) => {
                let msg = format!("walk error: {e}");
                warn!("{msg}");
                warnings.push(msg);
                continue;
            }
        };
        if !entry.file_type().is_file() {
            continue;
        }
        let Ok(rel) = entry.path().strip_prefix(root) else {
            continue;
        };
        let rel = rel
            .components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/");
        if !set.is_match(&rel) {
            continue;
        }
        match std::fs::read(entry.path()) {
            Ok(bytes) => match String::from_utf8(bytes) {
                Ok(text) => sources.push((rel, text)),
                Err(_) => {
                    let msg = format!("{rel}: not valid UTF-8; skipped");
                    warn!("{msg}");
                    warnings.push(msg);
                }
            },
            Err(e) => {
                let msg = format!("{rel}: unreadable ({e}); skipped");
                warn!("{msg}");
                warnings.push(msg);
            }
        }
    }
    let mut index = SourceIndex::from_sources(root, sources);
    warnings.append(&mut index.warnings);
    index.warnings = warnings;
    Ok(index)
}

impl SourceIndex {
    /// Builds an index from in-memory `(relative path, text)` pairs.
    pub fn from_sources(root: &Path, mut sources: Vec<(String, String)>) -> Self {
        sources.sort_by(|a, b| a.0.cmp(&b.0));
        sources.dedup_by(|a, b| a.0 == b.0);
        let mut hasher = Sha256::new();
        for (p, t) in &sources {
            hasher.update(p.as_bytes());
            hasher.update([0]);
            hasher.update(t.as_bytes());
            hasher.update([0]);
        }
        let generation = hex::encode(hasher.finalize())[..16].to_string();
        let mut warnings = Vec::new();
        let mut files: Vec<SourceFile> = sources
            .into_iter()
            .map(|(p, t)| SourceFile::build(p, t, &mut warnings))
            .collect();
        for f in &mut files {
            for m in &mut f.methods {
                m.generation = generation.clone();
            }
        }
        let by_path = files
            .iter()
            .enumerate()
            .map(|(k, f)| (f.path.clone(), k))
            .collect();
        Self {
            root: root.to_path_buf(),
            generation,
            files,
            by_path,
            warnings,
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn generation(&self) -> &str {
        &self.generation
    }

    pub fn files(&self) -> &[SourceFile] {
        &self.files
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn file(&self, path: &str) -> Result<&SourceFile, IndexError> {
        self.by_path
            .get(path)
            .map(|&k| &self.files[k])
            .ok_or_else(|| IndexError::UnknownFile(path.to_string()))
    }

    /// Statement whose first line is `line`.
    pub fn statement_starting_at(&self, file: &str, line: u32) -> Option<&Statement> {
        let f = self.file(file).ok()?;
        f.first_line.get(&line).map(|&k| &f.statements[k])
    }

    /// First statement (in source order) whose line span contains `line`.
    pub fn statement_at(&self, file: &str, line: u32) -> Option<&Statement> {
        let f = self.file(file).ok()?;
        // statements are ordered, so spans are sorted by start line
        let upto = f.statements.partition_point(|s| s.span.start <= line);
        f.statements[..upto].iter().find(|s| s.span.contains(line))
    }

    /// Innermost method whose body span contains `line`.
    pub fn enclosing_method(&self, file: &str, line: u32) -> Result<Option<&MethodRef>, IndexError> {
        let f = self.file(file)?;
        Ok(f.methods
            .iter()
            .filter(|m| m.body_span.contains(line))
            .min_by_key(|m| (m.body_span.len(), std::cmp::Reverse(m.body_span.start))))
    }

    /// Method enclosing a statement, using the segmentation's nesting.
    pub fn method_of(&self, statement: &Statement) -> Option<&MethodRef> {
        let f = self.file(&statement.file).ok()?;
        statement.method.and_then(|k| f.methods.get(k))
    }

    /// Statements enclosed by `method` (including nested ones), in order.
    pub fn statements_in_method<'a>(&'a self, method: &MethodRef) -> Vec<&'a Statement> {
        let Ok(f) = self.file(&method.file) else {
            return Vec::new();
        };
        f.statements
            .iter()
            .filter(|s| s.bytes.start >= method.body_bytes.start && s.bytes.end <= method.body_bytes.end)
            .collect()
    }

    pub fn methods_named<'a>(&'a self, file: &str, name: &str) -> Vec<&'a MethodRef> {
        self.file(file)
            .map(|f| f.methods.iter().filter(|m| m.name == name).collect())
            .unwrap_or_default()
    }

    pub fn method(&self, key: &MethodKey) -> Option<&MethodRef> {
        self.file(&key.file).ok()?.methods.iter().find(|m| {
            m.name == key.name && m.signature_hash == key.signature_hash
        })
    }

    pub fn class(&self, file: &str, name: &str) -> Option<&ClassDecl> {
        self.file(file).ok()?.classes.iter().find(|c| c.name == name)
    }

    /// All classes with the given name, across files.
    pub fn classes_named(&self, name: &str) -> Vec<&ClassDecl> {
        self.classes().filter(|c| c.name == name).collect()
    }

    pub fn classes(&self) -> impl Iterator<Item = &ClassDecl> {
        self.files.iter().flat_map(|f| f.classes.iter())
    }

    /// Verbatim text of the method body, from `{` through `}`.
    pub fn method_body(&self, method: &MethodRef) -> Result<&str, IndexError> {
        self.check_fresh(method)?;
        let f = self.file(&method.file)?;
        Ok(&f.text[method.body_bytes.clone()])
    }

    /// Verbatim text of the whole declaration, from its first modifier through `}`.
    pub fn method_declaration(&self, method: &MethodRef) -> Result<&str, IndexError> {
        self.check_fresh(method)?;
        let f = self.file(&method.file)?;
        Ok(&f.text[method.decl_bytes.clone()])
    }

    fn check_fresh(&self, method: &MethodRef) -> Result<(), IndexError> {
        if method.generation != self.generation {
            return Err(IndexError::StaleRef {
                file: method.file.clone(),
                method: method.name.clone(),
            });
        }
        Ok(())
    }

    /// Checks that the on-disk copy of `file` still matches the indexed bytes.
    pub fn verify_on_disk(&self, file: &str) -> Result<bool, IndexError> {
        let f = self.file(file)?;
        let path = self.root.join(file);
        let bytes = std::fs::read(&path).map_err(|source| IndexError::Io { path, source })?;
        Ok(content_hash(&bytes) == f.hash)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn index(files: &[(&str, &str)]) -> SourceIndex {
        SourceIndex::from_sources(
            Path::new("/nonexistent"),
            files
                .iter()
                .map(|(p, t)| (p.to_string(), t.to_string()))
                .collect(),
        )
    }

    const TWO_METHODS: &str = "class A {\n  int f() {\n    return 1;\n  }\n\n  int g() {\n    int x = 2;\n    return x;\n  }\n}\n";

    #[test]
    fn empty_project() {
        let dir = tempfile::tempdir().unwrap();
        let idx = index_source(dir.path(), &["**/*.java".into()]).unwrap();
        assert!(idx.files().is_empty());
    }

    #[test]
    fn missing_root_is_fatal() {
        assert!(matches!(
            index_source(Path::new("/definitely/not/here"), &[]),
            Err(IndexError::MissingRoot(_))
        ));
    }

    #[test]
    fn indexes_matching_files_only() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir_all(dir.path().join("src/a")).unwrap();
        std::fs::write(dir.path().join("src/a/A.java"), TWO_METHODS).unwrap();
        std::fs::write(dir.path().join("README"), "x").unwrap();
        let idx = index_source(dir.path(), &["src/**/*.java".into()]).unwrap();
        assert_eq!(idx.files().len(), 1);
        assert_eq!(idx.files()[0].path, "src/a/A.java");
        assert!(idx.verify_on_disk("src/a/A.java").unwrap());
    }

    #[test]
    fn one_liner_fixture() {
        let idx = index(&[("f.c", "int f(){ return 1; }")]);
        let f = idx.file("f.c").unwrap();
        assert_eq!(f.methods.len(), 1);
        assert_eq!(f.methods[0].name, "f");
        assert_eq!(f.statements.len(), 1);
        assert_eq!(f.statements[0].text, "return 1;");
        assert_eq!(idx.method_body(&f.methods[0]).unwrap(), "{ return 1; }");
    }

    #[test]
    fn unbalanced_file_falls_back_to_lines() {
        let idx = index(&[("b.java", "void f() {\n  x();\n")]);
        let f = idx.file("b.java").unwrap();
        assert!(f.line_wise);
        assert_eq!(f.statements.len(), 2);
        assert!(f.methods.is_empty());
        assert_eq!(idx.warnings().len(), 1);
    }

    #[test]
    fn enclosing_method_lookup() {
        let idx = index(&[("A.java", TWO_METHODS)]);
        assert_eq!(idx.enclosing_method("A.java", 3).unwrap().unwrap().name, "f");
        assert_eq!(idx.enclosing_method("A.java", 7).unwrap().unwrap().name, "g");
        assert!(idx.enclosing_method("A.java", 5).unwrap().is_none());
        assert!(idx.enclosing_method("B.java", 1).is_err());
    }

    #[test]
    fn innermost_span_wins() {
        let src = "class O {\n  void outer() {\n    class L {\n      int inner() {\n        return 2;\n      }\n    }\n    x();\n  }\n}\n";
        let idx = index(&[("O.java", src)]);
        let f = idx.file("O.java").unwrap();
        for line in 1..=f.line_count() as u32 {
            // brute force: smallest containing span
            let expected = f
                .methods
                .iter()
                .filter(|m| m.body_span.contains(line))
                .min_by_key(|m| m.body_span.len())
                .map(|m| m.name.clone());
            let got = idx
                .enclosing_method("O.java", line)
                .unwrap()
                .map(|m| m.name.clone());
            assert_eq!(got, expected, "line {line}");
        }
        assert_eq!(idx.enclosing_method("O.java", 5).unwrap().unwrap().name, "inner");
        assert_eq!(idx.enclosing_method("O.java", 8).unwrap().unwrap().name, "outer");
    }

    #[test]
    fn stale_reference_is_rejected() {
        let a = index(&[("A.java", TWO_METHODS)]);
        let b = index(&[("A.java", &TWO_METHODS.replace("2", "3"))]);
        let m = a.file("A.java").unwrap().methods[1].clone();
        assert!(a.method_body(&m).is_ok());
        assert!(matches!(b.method_body(&m), Err(IndexError::StaleRef { .. })));
    }

    #[test]
    fn statement_lookup_by_line() {
        let src = "void f() {\n  call(a,\n       b);\n  y();\n}\n";
        let idx = index(&[("m.c", src)]);
        let s = idx.statement_at("m.c", 3).unwrap();
        assert_eq!(s.span, LineSpan::new(2, 3));
        assert!(idx.statement_starting_at("m.c", 3).is_none());
        assert_eq!(idx.statement_at("m.c", 4).unwrap().text, "y();");
        assert!(idx.statement_at("m.c", 5).is_none());
    }

    #[test]
    fn class_members_are_recorded() {
        let src = "class P {\n  private double[] params;\n  double[] getAllParameters() { return params; }\n  abstract int size();\n}\n";
        let idx = index(&[("P.java", src)]);
        let c = idx.class("P.java", "P").unwrap();
        let names: Vec<_> = c.members.iter().map(|m| (m.kind, m.name.as_str())).collect();
        assert_eq!(
            names,
            vec![
                (MemberKind::Field, "params"),
                (MemberKind::Method, "getAllParameters"),
                (MemberKind::Method, "size")
            ]
        );
        assert_eq!(c.members[0].declared_type.as_deref(), Some("double"));
        assert_eq!(c.members[1].signature, "double[] getAllParameters()");
    }
}
