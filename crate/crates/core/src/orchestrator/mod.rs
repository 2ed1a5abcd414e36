//! One complete repair run driven by a project descriptor.
//!
//! A run writes `<out>/run-<timestamp>/` containing `prompts/`, `responses/`
//! (named like scripted responses so a run can be replayed), `patches/` with
//! one diff per plausible patch, and `report.json`.

pub mod cache;
pub mod descriptor;
pub mod report;

use std::path::{Path, PathBuf};

use tracing::{info, warn};

use crate::engine::{repair_bug, EngineError, Recorder, RepairConfig, Session, Termination};
use crate::llm::{response_file_name, Backend, MissingResponse, RemoteChat, ScriptedBackend};
use crate::localization::{apply_spfl, given_locations, load_coverage, ochiai_rank, SuspiciousLocation};
use crate::siblings::{EmbeddingCache, EmbeddingProvider, LocalHashEmbedder, MemoryCache, RemoteEmbedder};
use crate::subject::index_source;

pub use cache::DiskCache;
pub use descriptor::{BackendSpec, DescriptorError, EmbeddingSpec, Mode, ProjectDescriptor};
pub use report::{RunReport, SCHEMA_VERSION};

pub const EXIT_PLAUSIBLE: i32 = 0;
pub const EXIT_NO_PATCH: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_FATAL: i32 = 3;

/// Command-line adjustments applied on top of the descriptor.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub mode: Option<Mode>,
    pub theta: Option<f64>,
    pub alpha: Option<f64>,
    pub attempts: Option<u32>,
    pub ingredients: Option<usize>,
    pub budget: Option<std::time::Duration>,
    pub stop_on_first_plausible: bool,
    pub keep_workspaces: bool,
    pub out: Option<PathBuf>,
    /// Earlier run directory whose recorded responses replace the backend.
    pub replay: Option<PathBuf>,
}

impl Overrides {
    fn apply(&self, d: &mut ProjectDescriptor) {
        let c: &mut RepairConfig = &mut d.repair;
        if let Some(m) = self.mode {
            d.mode = m;
        }
        if let Some(v) = self.theta {
            c.theta = v;
        }
        if let Some(v) = self.alpha {
            c.alpha = v;
        }
        if let Some(v) = self.attempts {
            c.attempts = v;
        }
        if let Some(v) = self.ingredients {
            c.ingredients = v;
        }
        if let Some(v) = self.budget {
            c.budget = v;
        }
        if self.stop_on_first_plausible {
            c.stop_on_first_plausible = true;
        }
        if let Some(run) = &self.replay {
            d.backend = BackendSpec::Scripted {
                dir: run.join("responses"),
                on_missing: MissingResponse::Error,
            };
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Descriptor(#[from] DescriptorError),
    #[error("{0}")]
    Setup(String),
    #[error("cannot write run directory: {0}")]
    Output(#[from] std::io::Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Output(_) => EXIT_FATAL,
            _ => EXIT_INVALID,
        }
    }
}

#[derive(Debug)]
pub struct RunOutcome {
    pub exit_code: i32,
    pub run_dir: PathBuf,
    /// Absent when the baseline already passes and nothing was attempted.
    pub report: Option<RunReport>,
}

/// Writes prompts and responses as they happen.
struct RunRecorder {
    dir: PathBuf,
    keep_workspaces: bool,
}

impl Recorder for RunRecorder {
    fn exchange(&mut self, location: &str, request: u32, prompt: &str, response: &str) {
        let name = response_file_name(location, request);
        for (sub, text) in [("prompts", prompt), ("responses", response)] {
            let path = self.dir.join(sub).join(&name);
            if let Err(e) = std::fs::write(&path, text) {
                warn!("cannot record {}: {e}", path.display());
            }
        }
    }

    fn workspace_for(&mut self, location: &str, request: u32) -> Option<PathBuf> {
        self.keep_workspaces
            .then(|| self.dir.join("workspaces").join(format!("{location}_attempt{request}")))
    }
}

fn api_key(var: &str) -> Option<String> {
    let key = std::env::var(var).ok().filter(|k| !k.is_empty());
    if key.is_none() {
        warn!("{var} is not set; sending requests without credentials");
    }
    key
}

fn make_backend(spec: &BackendSpec) -> Box<dyn Backend> {
    match spec {
        BackendSpec::Scripted { dir, on_missing } => Box::new(ScriptedBackend::new(dir.clone(), *on_missing)),
        BackendSpec::Remote {
            url,
            model,
            api_key_env,
            timeout_secs,
            retry,
        } => Box::new(RemoteChat {
            url: url.clone(),
            model: model.clone(),
            api_key: api_key(api_key_env),
            timeout: ProjectDescriptor::request_timeout(*timeout_secs),
            retry: *retry,
        }),
    }
}

fn make_provider(spec: &EmbeddingSpec) -> Box<dyn EmbeddingProvider> {
    match spec {
        EmbeddingSpec::LocalHash => Box::new(LocalHashEmbedder::default()),
        EmbeddingSpec::Remote {
            url,
            model,
            api_key_env,
            batch_size,
            timeout_secs,
            retry,
        } => Box::new(RemoteEmbedder {
            url: url.clone(),
            model: model.clone(),
            api_key: api_key(api_key_env),
            batch_size: *batch_size,
            timeout: ProjectDescriptor::request_timeout(*timeout_secs),
            retry: *retry,
        }),
    }
}

fn fresh_run_dir(out: &Path) -> std::io::Result<PathBuf> {
    std::fs::create_dir_all(out)?;
    let stamp = chrono::Local::now().format("%Y%m%d-%H%M%S").to_string();
    let mut dir = out.join(format!("run-{stamp}"));
    let mut n = 1;
    while dir.exists() {
        n += 1;
        dir = out.join(format!("run-{stamp}-{n}"));
    }
    for sub in ["prompts", "responses", "patches"] {
        std::fs::create_dir_all(dir.join(sub))?;
    }
    Ok(dir)
}

/// Ranked suspicious list for the descriptor's mode.
pub fn suspicious_list(
    descriptor: &ProjectDescriptor,
    coverage: &crate::localization::CoverageMatrix,
) -> Vec<SuspiciousLocation> {
    match descriptor.mode {
        Mode::Sbfl => ochiai_rank(coverage),
        Mode::Spfl => apply_spfl(&ochiai_rank(coverage), &descriptor.known_locations[0]),
        Mode::Pfl => given_locations(&descriptor.known_locations),
    }
}

/// Loads the descriptor, applies `overrides` and runs.
pub fn run(descriptor_path: &Path, overrides: &Overrides) -> Result<RunOutcome, RunError> {
    run_with_backend(descriptor_path, overrides, None)
}

/// Like [`run`], with `backend` taking the place of the descriptor's backend.
pub fn run_with_backend(
    descriptor_path: &Path,
    overrides: &Overrides,
    backend: Option<Box<dyn Backend>>,
) -> Result<RunOutcome, RunError> {
    let mut d = ProjectDescriptor::load(descriptor_path)?;
    overrides.apply(&mut d);
    d.validate()?;

    let index = index_source(&d.project_root, &d.include).map_err(|e| RunError::Setup(e.to_string()))?;
    for w in index.warnings() {
        warn!("{w}");
    }
    let coverage = load_coverage(&d.coverage).map_err(|e| RunError::Setup(e.to_string()))?;
    let suspicious: Vec<SuspiciousLocation> = suspicious_list(&d, &coverage)
        .into_iter()
        .take(d.repair.suspicious_cap)
        .collect();
    info!("{} suspicious locations ({:?})", suspicious.len(), d.mode);

    let out = overrides
        .out
        .clone()
        .unwrap_or_else(|| d.base_dir.join("repair-runs"));
    let run_dir = fresh_run_dir(&out)?;
    let run_dir = run_dir.canonicalize().unwrap_or(run_dir);
    let mut exclude = vec![out.canonicalize().unwrap_or(out)];
    exclude.extend(d.cache_dir.clone());

    let mut backend = backend.unwrap_or_else(|| make_backend(&d.backend));
    let provider = make_provider(&d.embedding);
    let cache: Box<dyn EmbeddingCache> = match &d.cache_dir {
        Some(dir) => Box::new(DiskCache::open(dir)?),
        None => Box::new(MemoryCache::default()),
    };
    let mut recorder = RunRecorder {
        dir: run_dir.clone(),
        keep_workspaces: overrides.keep_workspaces,
    };
    let header = report::ReportHeader {
        descriptor: descriptor_path.display().to_string(),
        mode: d.mode,
        config: d.repair.clone(),
        backend: backend.id(),
        embedding_provider: provider.id(),
        suspicious: suspicious.clone(),
    };
    let mut session = Session {
        config: &d.repair,
        index: &index,
        coverage: &coverage,
        harness: &d.harness,
        backend: backend.as_mut(),
        provider: provider.as_ref(),
        cache: cache.as_ref(),
        recorder: &mut recorder,
        exclude,
    };
    let result = match repair_bug(&mut session, &suspicious) {
        Ok(r) => r,
        Err(EngineError::NothingToRepair) => {
            warn!("{}", EngineError::NothingToRepair);
            return Ok(RunOutcome {
                exit_code: EXIT_NO_PATCH,
                run_dir,
                report: None,
            });
        }
        Err(e) => return Err(RunError::Setup(e.to_string())),
    };
    let exit_code = match result.termination {
        Termination::Aborted => EXIT_FATAL,
        _ if !result.state.plausible.is_empty() => EXIT_PLAUSIBLE,
        _ => EXIT_NO_PATCH,
    };
    if let Some(reason) = &result.abort_reason {
        warn!("run aborted: {reason}");
    }
    let report = RunReport::new(header, result, exit_code);
    for (k, p) in report.plausible.iter().enumerate() {
        std::fs::write(
            run_dir.join("patches").join(format!("plausible-{}-{}.diff", k + 1, p.patch_id)),
            &p.diff,
        )?;
    }
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    std::fs::write(run_dir.join("report.json"), json + "\n")?;
    info!("report written to {}", run_dir.join("report.json").display());
    Ok(RunOutcome {
        exit_code,
        run_dir,
        report: Some(report),
    })
}
