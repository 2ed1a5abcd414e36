//! Patch application into isolated workspace copies.

use std::collections::BTreeMap;
use std::ops::Range;
use std::path::{Path, PathBuf};

use similar::TextDiff;
use tempfile::TempDir;
use walkdir::WalkDir;

use crate::llm::{Edit, Patch};
use crate::subject::{IndexError, MethodRef, SourceIndex};

#[derive(Debug, thiserror::Error)]
pub enum ApplyError {
    #[error("{file}: no method named {method}")]
    UnknownMethod { file: String, method: String },
    #[error("{file}: method {method} is overloaded ({count} candidates); select one with {method}@<line>")]
    Ambiguous {
        file: String,
        method: String,
        count: usize,
    },
    #[error("{file}: edits of {first} and {second} overlap")]
    Overlap {
        file: String,
        first: String,
        second: String,
    },
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error("workspace I/O on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ApplyError + '_ {
    move |source| ApplyError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Method targeted by `edit`.
pub fn resolve_edit<'a>(index: &'a SourceIndex, edit: &Edit) -> Result<&'a MethodRef, ApplyError> {
    let name = edit.method_name();
    let mut found = index.methods_named(&edit.file, name);
    if let Some(line) = edit.method_line() {
        found.retain(|m| m.signature_line == line || m.decl_start_line == line);
    }
    match found.len() {
        0 => Err(ApplyError::UnknownMethod {
            file: edit.file.clone(),
            method: edit.method.clone(),
        }),
        1 => Ok(found[0]),
        count => Err(ApplyError::Ambiguous {
            file: edit.file.clone(),
            method: edit.method.clone(),
            count,
        }),
    }
}

/// Byte range an edit replaces: the body when the replacement is a bare
/// block, the whole declaration otherwise.
fn replaced_range(method: &MethodRef, replacement: &str) -> Range<usize> {
    if replacement.trim_start().starts_with('{') {
        method.body_bytes.clone()
    } else {
        method.decl_bytes.clone()
    }
}

/// New contents of every file the patch touches.
pub fn patched_sources(index: &SourceIndex, patch: &Patch) -> Result<BTreeMap<String, String>, ApplyError> {
    let mut per_file: BTreeMap<&str, Vec<(Range<usize>, &Edit)>> = BTreeMap::new();
    for edit in &patch.edits {
        let method = resolve_edit(index, edit)?;
        index.method_body(method)?;
        per_file
            .entry(edit.file.as_str())
            .or_default()
            .push((replaced_range(method, &edit.replacement), edit));
    }
    let mut out = BTreeMap::new();
    for (file, mut edits) in per_file {
        edits.sort_by_key(|(r, _)| r.start);
        for pair in edits.windows(2) {
            if pair[0].0.end > pair[1].0.start {
                return Err(ApplyError::Overlap {
                    file: file.to_string(),
                    first: pair[0].1.method.clone(),
                    second: pair[1].1.method.clone(),
                });
            }
        }
        let original = &index.file(file)?.text;
        let mut text = String::with_capacity(original.len());
        let mut cursor = 0;
        for (range, edit) in &edits {
            text.push_str(&original[cursor..range.start]);
            // the replaced range starts at a non-blank character, so the
            // original indentation is kept and the replacement's is dropped
            text.push_str(edit.replacement.trim_start().trim_end_matches('\n'));
            cursor = range.end;
        }
        text.push_str(&original[cursor..]);
        out.insert(file.to_string(), text);
    }
    Ok(out)
}

/// Unified diff of the patch against the indexed sources, `a/` and `b/` prefixed.
pub fn unified_diff(index: &SourceIndex, patch: &Patch) -> Result<String, ApplyError> {
    let mut out = String::new();
    for (file, new) in patched_sources(index, patch)? {
        let old = &index.file(&file)?.text;
        let diff = TextDiff::from_lines(old.as_str(), new.as_str());
        out.push_str(
            &diff
                .unified_diff()
                .context_radius(3)
                .header(&format!("a/{file}"), &format!("b/{file}"))
                .to_string(),
        );
    }
    Ok(out)
}

/// A patched copy of the project; removed on drop unless kept.
#[derive(Debug)]
pub struct Workspace {
    path: PathBuf,
    _temp: Option<TempDir>,
}

impl Workspace {
    pub fn path(&self) -> &Path {
        &self.path
    }
}

/// Copies the project into a fresh workspace and applies `patch`.
///
/// With `keep_at` the workspace is created at that path and left in place;
/// otherwise a temporary directory is used. Paths in `exclude` (for example a
/// run directory inside the project) are not copied.
pub fn apply_patch(
    index: &SourceIndex,
    patch: &Patch,
    keep_at: Option<&Path>,
    exclude: &[PathBuf],
) -> Result<Workspace, ApplyError> {
    let sources = patched_sources(index, patch)?;
    let (path, temp) = match keep_at {
        Some(p) => {
            std::fs::create_dir_all(p).map_err(io_err(p))?;
            (p.to_path_buf(), None)
        }
        None => {
            let t = tempfile::Builder::new()
                .prefix("repair-ws-")
                .tempdir()
                .map_err(io_err(Path::new("<tempdir>")))?;
            (t.path().to_path_buf(), Some(t))
        }
    };
    copy_tree(index.root(), &path, exclude)?;
    for (file, text) in sources {
        let dest = path.join(&file);
        std::fs::write(&dest, text).map_err(io_err(&dest))?;
    }
    Ok(Workspace { path, _temp: temp })
}

fn copy_tree(from: &Path, to: &Path, exclude: &[PathBuf]) -> Result<(), ApplyError> {
    let exclude: Vec<PathBuf> = exclude
        .iter()
        .filter_map(|p| p.canonicalize().ok())
        .chain(to.canonicalize().ok())
        .collect();
    let walker = WalkDir::new(from).min_depth(1).into_iter().filter_entry(|e| {
        let canon = e.path().canonicalize().unwrap_or_else(|_| e.path().to_path_buf());
        !exclude.iter().any(|x| canon.starts_with(x))
    });
    for entry in walker {
        let entry = entry.map_err(|e| ApplyError::Io {
            path: from.to_path_buf(),
            source: e.into(),
        })?;
        let rel = entry.path().strip_prefix(from).expect("walk stays under root");
        let dest = to.join(rel);
        let ft = entry.file_type();
        if ft.is_dir() {
            std::fs::create_dir_all(&dest).map_err(io_err(&dest))?;
        } else if ft.is_symlink() {
            let target = std::fs::read_link(entry.path()).map_err(io_err(entry.path()))?;
            std::os::unix::fs::symlink(target, &dest).map_err(io_err(&dest))?;
        } else {
            std::fs::copy(entry.path(), &dest).map_err(io_err(&dest))?;
        }
    }
    Ok(())
}
