//! Model-generated annotation sets.
//!
//! Prompts are built from a [`PromptTemplate`], sent to a [`TaggingEndpoint`]
//! and parsed back with [`parse_verdict`]. [`MockEndpoint`] runs the bundled
//! rule table offline.

mod endpoint;
mod prompt;
mod rules;
mod verdict;

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

pub use endpoint::{EndpointConfig, EndpointError, LiveEndpoint, MockEndpoint, TagRequest, TaggingEndpoint};
pub use prompt::{build_prompt, GlossaryStyle, PromptTemplate};
pub use rules::{mock_tag, Rule, RuleTable};
pub use verdict::{parse_verdict, render_verdict, TaggerVerdict, Verdict, VerdictError};

use crate::annotation::{context_window, save_set, Annotation, AnnotationError, AnnotationSet, Provenance};
use crate::corpus::{Corpus, UnitId};
use crate::fsio::write_atomic;
use crate::schema::TagRegistry;

#[derive(Debug, thiserror::Error)]
pub enum AutotagError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("endpoint unreachable: {detail}")]
    EndpointUnreachable { detail: String, partial: Box<AutotagRun> },
    #[error(transparent)]
    Annotation(#[from] AnnotationError),
    #[error("i/o failure on {path}: {source}")]
    IoFailure {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Retries after the first attempt for transient failures.
    pub max_retries: u32,
    #[serde(with = "secs")]
    pub timeout: Duration,
    pub max_concurrent: usize,
    /// First backoff delay; doubles on every retry.
    #[serde(with = "secs")]
    pub backoff_base: Duration,
}

mod secs {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let v = f64::deserialize(d)?;
        Duration::try_from_secs_f64(v).map_err(serde::de::Error::custom)
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            max_retries: 3,
            timeout: Duration::from_secs(60),
            max_concurrent: 4,
            backoff_base: Duration::from_millis(500),
        }
    }
}

/// Identity of the set a run produces.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunSpec {
    pub set_id: String,
    pub annotator_id: String,
    pub radius: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub unit_id: UnitId,
    pub error_kind: String,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Complete,
    /// Finished, but some units are in the failure report.
    CompleteWithFailures,
    Aborted,
}

/// Written beside every model annotation set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub set_id: String,
    pub debate_id: String,
    pub annotator_id: String,
    pub template_id: String,
    pub template_version: String,
    pub registry_version: String,
    pub radius: usize,
    pub model: String,
    pub run_config: RunConfig,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
    pub units_total: usize,
    pub units_annotated: usize,
    pub units_failed: usize,
    pub status: RunStatus,
}

#[derive(Debug, Clone)]
pub struct AutotagRun {
    pub set: AnnotationSet,
    pub failures: Vec<FailureRecord>,
    pub manifest: RunManifest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Progress {
    pub done: usize,
    pub total: usize,
}

enum Outcome {
    Tagged(Verdict),
    Failed(FailureRecord),
    Unreachable(String),
}

fn call_with_retries(
    client: &dyn TaggingEndpoint,
    req: &TagRequest,
    cfg: &RunConfig,
    abort: &AtomicBool,
) -> Result<String, EndpointError> {
    let mut attempt = 0u32;
    loop {
        match client.complete(req) {
            Err(EndpointError::Transient(detail)) => {
                if attempt >= cfg.max_retries || abort.load(Ordering::SeqCst) {
                    return Err(EndpointError::Transient(detail));
                }
                let delay = cfg.backoff_base.saturating_mul(1u32 << attempt.min(16));
                tracing::debug!(unit = %req.unit_id, attempt, ?delay, "retrying after transient failure");
                std::thread::sleep(delay);
                attempt += 1;
            }
            other => return other,
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn tag_one(
    client: &dyn TaggingEndpoint,
    template: &PromptTemplate,
    registry: &TagRegistry,
    corpus: &Corpus,
    unit_id: &UnitId,
    radius: usize,
    cfg: &RunConfig,
    abort: &AtomicBool,
) -> Outcome {
    let window = match context_window(corpus, unit_id, radius) {
        Ok(w) => w,
        Err(e) => return Outcome::Failed(failure(unit_id, "invalid_window", e.to_string())),
    };
    let prompt = build_prompt(template, registry, &window);
    let req = TagRequest { unit_id: unit_id.clone(), prompt, window, timeout: cfg.timeout };
    match call_with_retries(client, &req, cfg, abort) {
        Ok(text) => match parse_verdict(&text, registry) {
            Ok(v) => Outcome::Tagged(v),
            Err(e) => Outcome::Failed(failure(unit_id, "invalid_response", format!("{}: {e}", e.kind()))),
        },
        Err(EndpointError::Rejected(d)) => Outcome::Failed(failure(unit_id, "rejected", d)),
        Err(EndpointError::Transient(d)) => Outcome::Unreachable(d),
    }
}

fn failure(unit_id: &UnitId, kind: &str, detail: String) -> FailureRecord {
    FailureRecord { unit_id: unit_id.clone(), error_kind: kind.into(), detail }
}

fn now() -> DateTime<Utc> {
    let t = Utc::now();
    DateTime::from_timestamp(t.timestamp(), 0).unwrap_or(t)
}

pub fn autotag_corpus(
    client: &dyn TaggingEndpoint,
    template: &PromptTemplate,
    registry: &TagRegistry,
    corpus: &Corpus,
    spec: &RunSpec,
    config: &RunConfig,
) -> Result<AutotagRun, AutotagError> {
    autotag_corpus_with_progress(client, template, registry, corpus, spec, config, &|_| {})
}

/// Tags every unit of `corpus`. Units whose response cannot be used go to the
/// failure report. If a unit still fails transiently after all retries the
/// run stops and the partial run comes back inside
/// [`AutotagError::EndpointUnreachable`]; units never attempted are listed as
/// `not_attempted`.
pub fn autotag_corpus_with_progress(
    client: &dyn TaggingEndpoint,
    template: &PromptTemplate,
    registry: &TagRegistry,
    corpus: &Corpus,
    spec: &RunSpec,
    config: &RunConfig,
    progress: &(dyn Fn(Progress) + Sync),
) -> Result<AutotagRun, AutotagError> {
    if config.max_concurrent == 0 {
        return Err(AutotagError::Config("max_concurrent must be at least 1".into()));
    }
    let mut set = AnnotationSet::new(&spec.set_id, corpus.debate_id(), &spec.annotator_id, Provenance::Model)?;
    let started_at = now();
    let units: Vec<UnitId> = corpus.units().map(|u| u.unit.unit_id.clone()).collect();
    let total = units.len();

    let next = AtomicUsize::new(0);
    let done = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let results: Mutex<Vec<(usize, Outcome)>> = Mutex::new(Vec::with_capacity(total));
    let workers = config.max_concurrent.min(total.max(1));

    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                if abort.load(Ordering::SeqCst) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(unit_id) = units.get(i) else { break };
                let outcome = tag_one(client, template, registry, corpus, unit_id, spec.radius, config, &abort);
                if matches!(outcome, Outcome::Unreachable(_)) {
                    abort.store(true, Ordering::SeqCst);
                }
                results.lock().expect("results lock").push((i, outcome));
                progress(Progress { done: done.fetch_add(1, Ordering::SeqCst) + 1, total });
            });
        }
    });

    let mut results = results.into_inner().expect("results lock");
    results.sort_by_key(|(i, _)| *i);
    let mut attempted = vec![false; total];
    let mut failures = Vec::new();
    let mut unreachable: Option<String> = None;
    for (i, outcome) in results {
        attempted[i] = true;
        match outcome {
            Outcome::Tagged(v) => {
                let mut a = Annotation::new(units[i].clone(), v.primary_tag, &spec.annotator_id, Provenance::Model)
                    .with_secondary(v.secondary_tags);
                if let Some(r) = v.rationale {
                    a = a.with_rationale(r);
                }
                set.upsert(a, registry, corpus)?;
            }
            Outcome::Failed(f) => failures.push(f),
            Outcome::Unreachable(d) => {
                failures.push(failure(&units[i], "endpoint_unreachable", d.clone()));
                unreachable.get_or_insert(d);
            }
        }
    }
    if unreachable.is_some() {
        for (i, _) in attempted.iter().enumerate().filter(|(_, a)| !**a) {
            failures.push(failure(&units[i], "not_attempted", "run aborted before this unit was sent".into()));
        }
        failures.sort_by(|a, b| a.unit_id.cmp(&b.unit_id));
    }

    let status = match (&unreachable, failures.is_empty()) {
        (Some(_), _) => RunStatus::Aborted,
        (None, true) => RunStatus::Complete,
        (None, false) => RunStatus::CompleteWithFailures,
    };
    let manifest = RunManifest {
        run_id: format!("{}-{}", spec.set_id, started_at.format("%Y%m%dT%H%M%SZ")),
        set_id: spec.set_id.clone(),
        debate_id: corpus.debate_id().to_string(),
        annotator_id: spec.annotator_id.clone(),
        template_id: template.id.clone(),
        template_version: template.version.clone(),
        registry_version: registry.version().to_string(),
        radius: spec.radius,
        model: client.name(),
        run_config: config.clone(),
        started_at,
        finished_at: now(),
        units_total: total,
        units_annotated: set.len(),
        units_failed: failures.len(),
        status,
    };
    let run = AutotagRun { set, failures, manifest };
    match unreachable {
        Some(detail) => Err(AutotagError::EndpointUnreachable { detail, partial: Box::new(run) }),
        None => Ok(run),
    }
}

/// `sets/x.jsonl` → `sets/x.manifest.json`.
pub fn manifest_path(set_path: &Path) -> PathBuf {
    sibling(set_path, "manifest.json")
}

/// `sets/x.jsonl` → `sets/x.failures.jsonl`.
pub fn failures_path(set_path: &Path) -> PathBuf {
    sibling(set_path, "failures.jsonl")
}

fn sibling(set_path: &Path, suffix: &str) -> PathBuf {
    let stem = set_path.file_stem().and_then(|s| s.to_str()).unwrap_or("set");
    set_path.with_file_name(format!("{stem}.{suffix}"))
}

pub fn failures_to_jsonl(failures: &[FailureRecord]) -> String {
    failures.iter().map(|f| serde_json::to_string(f).expect("failure serialises") + "\n").collect()
}

/// Writes the set, its manifest and its failure report (possibly empty).
pub fn save_run(run: &AutotagRun, set_path: &Path) -> Result<(), AutotagError> {
    save_set(&run.set, set_path)?;
    let io = |path: PathBuf| move |source| AutotagError::IoFailure { path, source };
    let mpath = manifest_path(set_path);
    let mut manifest = serde_json::to_string_pretty(&run.manifest).expect("manifest serialises");
    manifest.push('\n');
    write_atomic(&mpath, manifest.as_bytes()).map_err(io(mpath.clone()))?;
    let fpath = failures_path(set_path);
    write_atomic(&fpath, failures_to_jsonl(&run.failures).as_bytes()).map_err(io(fpath.clone()))?;
    Ok(())
}

pub fn load_manifest(path: &Path) -> Result<RunManifest, AutotagError> {
    let text =
        std::fs::read_to_string(path).map_err(|source| AutotagError::IoFailure { path: path.to_path_buf(), source })?;
    serde_json::from_str(&text).map_err(|e| AutotagError::Config(format!("bad manifest {}: {e}", path.display())))
}

pub fn load_failures(path: &Path) -> Result<Vec<FailureRecord>, AutotagError> {
    let text =
        std::fs::read_to_string(path).map_err(|source| AutotagError::IoFailure { path: path.to_path_buf(), source })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| AutotagError::Config(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tests::mini_corpus;
    use crate::schema::load_registry;
    use std::sync::atomic::AtomicU32;

    fn fast() -> RunConfig {
        RunConfig { backoff_base: Duration::from_millis(1), ..RunConfig::default() }
    }

    fn spec(radius: usize) -> RunSpec {
        RunSpec { set_id: "auto".into(), annotator_id: "mock".into(), radius }
    }

    struct Scripted<F: Fn(&TagRequest) -> Result<String, EndpointError> + Send + Sync>(F);

    impl<F: Fn(&TagRequest) -> Result<String, EndpointError> + Send + Sync> TaggingEndpoint for Scripted<F> {
        fn name(&self) -> String {
            "scripted".into()
        }
        fn complete(&self, r: &TagRequest) -> Result<String, EndpointError> {
            (self.0)(r)
        }
    }

    #[test]
    fn mock_covers_every_unit() {
        let reg = load_registry(None).unwrap();
        let corpus = mini_corpus();
        let client = MockEndpoint::new(RuleTable::bundled(&reg).unwrap());
        let run = autotag_corpus(&client, &PromptTemplate::bundled(), &reg, &corpus, &spec(1), &fast()).unwrap();
        assert_eq!(run.set.len(), corpus.len());
        assert_eq!(run.set.provenance(), Provenance::Model);
        assert!(run.failures.is_empty());
        assert_eq!(run.manifest.status, RunStatus::Complete);
        assert_eq!(run.manifest.model, "mock-rules");
        assert_eq!(run.manifest.radius, 1);
    }

    #[test]
    fn invalid_responses_go_to_failure_report() {
        let reg = load_registry(None).unwrap();
        let corpus = mini_corpus();
        let bad: Vec<UnitId> = corpus.units().take(2).map(|u| u.unit.unit_id.clone()).collect();
        let client = Scripted(
            |r: &TagRequest| {
                if bad.contains(&r.unit_id) {
                    Ok("no idea".into())
                } else {
                    Ok("TAG: S".into())
                }
            },
        );
        let run = autotag_corpus(&client, &PromptTemplate::bundled(), &reg, &corpus, &spec(0), &fast()).unwrap();
        assert_eq!(run.set.len(), corpus.len() - 2);
        let failed: Vec<_> = run.failures.iter().map(|f| f.unit_id.clone()).collect();
        assert_eq!(failed, bad);
        assert!(run.failures.iter().all(|f| f.error_kind == "invalid_response"));
        assert_eq!(run.manifest.status, RunStatus::CompleteWithFailures);
    }

    #[test]
    fn transient_failures_are_retried() {
        let reg = load_registry(None).unwrap();
        let corpus = mini_corpus();
        let calls = AtomicU32::new(0);
        let client = Scripted(|r: &TagRequest| {
            if r.unit_id.seq() == 0 && calls.fetch_add(1, Ordering::SeqCst) < 2 {
                Err(EndpointError::Transient("flaky".into()))
            } else {
                Ok("TAG: S".into())
            }
        });
        let run = autotag_corpus(&client, &PromptTemplate::bundled(), &reg, &corpus, &spec(0), &fast()).unwrap();
        assert_eq!(run.set.len(), corpus.len());
        assert_eq!(calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn exhausted_retries_abort_with_partial_run() {
        let reg = load_registry(None).unwrap();
        let corpus = mini_corpus();
        let calls = AtomicU32::new(0);
        let client = Scripted(|r: &TagRequest| {
            if r.unit_id.seq() == 1 {
                calls.fetch_add(1, Ordering::SeqCst);
                Err(EndpointError::Transient("down".into()))
            } else {
                Ok("TAG: S".into())
            }
        });
        let cfg = RunConfig { max_concurrent: 1, ..fast() };
        let err = autotag_corpus(&client, &PromptTemplate::bundled(), &reg, &corpus, &spec(0), &cfg).unwrap_err();
        let AutotagError::EndpointUnreachable { partial, .. } = err else { panic!("wrong error") };
        assert_eq!(calls.load(Ordering::SeqCst), 1 + cfg.max_retries);
        assert_eq!(partial.manifest.status, RunStatus::Aborted);
        assert_eq!(partial.set.len(), 1);
        assert_eq!(partial.set.len() + partial.failures.len(), corpus.len());
        assert_eq!(partial.failures[0].error_kind, "endpoint_unreachable");
        assert!(partial.failures[1..].iter().all(|f| f.error_kind == "not_attempted"));
    }

    #[test]
    fn rejected_requests_are_not_retried() {
        let reg = load_registry(None).unwrap();
        let corpus = mini_corpus();
        let calls = AtomicU32::new(0);
        let client = Scripted(|_: &TagRequest| {
            calls.fetch_add(1, Ordering::SeqCst);
            Err(EndpointError::Rejected("400".into()))
        });
        let run = autotag_corpus(&client, &PromptTemplate::bundled(), &reg, &corpus, &spec(0), &fast()).unwrap();
        assert!(run.set.is_empty());
        assert_eq!(calls.load(Ordering::SeqCst) as usize, corpus.len());
        assert!(run.failures.iter().all(|f| f.error_kind == "rejected"));
    }

    #[test]
    fn concurrency_gives_same_set() {
        let reg = load_registry(None).unwrap();
        let corpus = mini_corpus();
        let client = MockEndpoint::new(RuleTable::bundled(&reg).unwrap());
        let t = PromptTemplate::bundled();
        let one =
            autotag_corpus(&client, &t, &reg, &corpus, &spec(1), &RunConfig { max_concurrent: 1, ..fast() }).unwrap();
        let many =
            autotag_corpus(&client, &t, &reg, &corpus, &spec(1), &RunConfig { max_concurrent: 8, ..fast() }).unwrap();
        assert_eq!(one.set, many.set);
    }

    #[test]
    fn save_run_writes_siblings() {
        let reg = load_registry(None).unwrap();
        let corpus = mini_corpus();
        let client = MockEndpoint::new(RuleTable::bundled(&reg).unwrap());
        let run = autotag_corpus(&client, &PromptTemplate::bundled(), &reg, &corpus, &spec(1), &fast()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sets/auto.jsonl");
        save_run(&run, &path).unwrap();
        assert_eq!(manifest_path(&path), dir.path().join("sets/auto.manifest.json"));
        assert_eq!(load_manifest(&manifest_path(&path)).unwrap(), run.manifest);
        assert!(load_failures(&failures_path(&path)).unwrap().is_empty());
        let back = crate::annotation::load_set(&path, &reg, &corpus).unwrap();
        assert_eq!(back, run.set);
    }
}
