use std::str::FromStr;

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use beads_core::agreement::{compare, ComparisonReport};
use beads_core::analytics::{tag_frequencies, CountMode, FrequencyOptions, FrequencyTable};
use beads_core::annotation::{context_window, coverage, Annotation, ContextWindow, Coverage, SetHeader};
use beads_core::autotag::{
    autotag_corpus_with_progress, save_run, AutotagError, AutotagRun, EndpointConfig, LiveEndpoint, MockEndpoint,
    Progress, PromptTemplate, RuleTable, RunSpec, RunStatus, TaggingEndpoint,
};
use beads_core::corpus::UnitId;
use beads_core::schema::{TagCode, TagRegistry};
use serde::{Deserialize, Serialize};

use crate::error::ApiError;
use crate::state::{AppState, RunRecord, RunState};

pub const DEFAULT_PAGE: usize = 100;
pub const MAX_PAGE: usize = 1000;
pub const MAX_RADIUS: usize = 10;

type ApiResult<T> = Result<Json<T>, ApiError>;

pub fn api_router() -> Router<AppState> {
    Router::new()
        .route("/corpora", get(list_corpora))
        .route("/corpora/{debate_id}/units", get(list_units))
        .route("/units/{unit_id}/context", get(unit_context))
        .route("/sets", get(list_sets).post(create_set))
        .route("/sets/{set_id}", get(get_set))
        .route("/sets/{set_id}/annotations", post(upsert_annotation))
        .route("/sets/{set_id}/coverage", get(set_coverage))
        .route("/autotag", post(start_autotag))
        .route("/runs/{run_id}", get(get_run))
        .route("/agreement", get(agreement))
        .route("/metrics", get(metrics))
        .route("/registry", get(registry))
        .fallback(|| async { ApiError::not_found("NotFound", "no such endpoint") })
}

#[derive(Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct CorpusSummary {
    pub debate_id: String,
    pub unit_count: usize,
    pub speakers: Vec<String>,
    pub moderators: Vec<String>,
}

async fn list_corpora(State(s): State<AppState>) -> ApiResult<Vec<CorpusSummary>> {
    let store = s.store();
    let mut out = Vec::new();
    for id in store.list_corpora()? {
        let c = store.load_corpus(&id)?;
        out.push(CorpusSummary {
            debate_id: id,
            unit_count: c.len(),
            speakers: c.speakers().to_vec(),
            moderators: c.moderators().to_vec(),
        });
    }
    Ok(Json(out))
}

#[derive(Debug, Deserialize)]
struct Page {
    offset: Option<usize>,
    limit: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct UnitRow {
    pub unit_id: UnitId,
    pub seq: usize,
    pub turn_id: usize,
    pub speaker: String,
    pub text: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct UnitPage {
    pub debate_id: String,
    pub offset: usize,
    pub limit: usize,
    pub total: usize,
    pub units: Vec<UnitRow>,
}

async fn list_units(
    State(s): State<AppState>,
    Path(debate_id): Path<String>,
    Query(p): Query<Page>,
) -> ApiResult<UnitPage> {
    let offset = p.offset.unwrap_or(0);
    let limit = p.limit.unwrap_or(DEFAULT_PAGE);
    if limit == 0 || limit > MAX_PAGE {
        return Err(ApiError::bad_request(format!("limit must be between 1 and {MAX_PAGE}")));
    }
    let c = s.store().load_corpus(&debate_id)?;
    let units = c
        .units()
        .skip(offset)
        .take(limit)
        .map(|u| UnitRow {
            unit_id: u.unit.unit_id.clone(),
            seq: u.unit.seq,
            turn_id: u.unit.turn_id,
            speaker: u.speaker.to_string(),
            text: u.unit.text.clone(),
        })
        .collect();
    Ok(Json(UnitPage { debate_id, offset, limit, total: c.len(), units }))
}

#[derive(Debug, Deserialize)]
struct RadiusQuery {
    radius: Option<usize>,
}

async fn unit_context(
    State(s): State<AppState>,
    Path(unit_id): Path<String>,
    Query(q): Query<RadiusQuery>,
) -> ApiResult<ContextWindow> {
    let radius = q.radius.unwrap_or(1);
    if radius > MAX_RADIUS {
        return Err(ApiError::bad_request(format!("radius must be at most {MAX_RADIUS}")));
    }
    let id = UnitId::from_str(&unit_id)?;
    let c = s.store().load_corpus(id.debate_id())?;
    Ok(Json(context_window(&c, &id, radius)?))
}

async fn list_sets(State(s): State<AppState>) -> ApiResult<Vec<SetHeader>> {
    Ok(Json(s.store().list_sets()?))
}

async fn create_set(
    State(s): State<AppState>,
    Json(header): Json<SetHeader>,
) -> Result<(StatusCode, Json<SetHeader>), ApiError> {
    let _guard = s.lock_set(&header.set_id).await?;
    let mut header = header;
    header.created_at.get_or_insert_with(|| {
        let t = chrono::Utc::now();
        chrono::DateTime::from_timestamp(t.timestamp(), 0).unwrap_or(t)
    });
    let set = s.store().create_set(header)?;
    Ok((StatusCode::CREATED, Json(set.header().clone())))
}

#[derive(Debug, Serialize)]
pub struct SetBody {
    pub header: SetHeader,
    pub annotations: Vec<Annotation>,
}

async fn get_set(State(s): State<AppState>, Path(set_id): Path<String>) -> ApiResult<SetBody> {
    let (set, _) = s.store().load_set(&set_id)?;
    Ok(Json(SetBody { header: set.header().clone(), annotations: set.iter().cloned().collect() }))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UpsertBody {
    pub unit_id: String,
    pub primary_tag: String,
    #[serde(default)]
    pub secondary_tags: Vec<String>,
    #[serde(default)]
    pub rationale: Option<String>,
    /// Defaults to the set's annotator.
    #[serde(default)]
    pub annotator_id: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct UpsertResult {
    pub annotation: Annotation,
    pub replaced: bool,
}

fn tag(raw: &str, registry: &TagRegistry) -> Result<TagCode, ApiError> {
    let code = TagCode::parse(raw)
        .map_err(|_| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "UnknownTag", format!("unknown tag {raw:?}")))?;
    registry.get(&code).map(|d| d.code.clone()).ok_or_else(|| {
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "UnknownTag", format!("unknown tag {:?}", code.as_str()))
    })
}

async fn upsert_annotation(
    State(s): State<AppState>,
    Path(set_id): Path<String>,
    Json(body): Json<UpsertBody>,
) -> ApiResult<UpsertResult> {
    let _guard = s.lock_set(&set_id).await?;
    let store = s.store();
    let (mut set, corpus) = store.load_set(&set_id)?;
    let unit_id = UnitId::from_str(&body.unit_id)?;
    let primary = tag(&body.primary_tag, store.registry())?;
    let secondary = body.secondary_tags.iter().map(|t| tag(t, store.registry())).collect::<Result<Vec<_>, _>>()?;
    let annotator = body.annotator_id.unwrap_or_else(|| set.annotator_id().to_string());
    let mut a = Annotation::new(unit_id, primary, annotator, set.provenance()).with_secondary(secondary);
    a.rationale = body.rationale.filter(|r| !r.trim().is_empty());
    let replaced = set.upsert(a.clone(), store.registry(), &corpus)?.is_some();
    store.save_set(&set)?;
    Ok(Json(UpsertResult { annotation: a, replaced }))
}

async fn set_coverage(State(s): State<AppState>, Path(set_id): Path<String>) -> ApiResult<Coverage> {
    let (set, corpus) = s.store().load_set(&set_id)?;
    Ok(Json(coverage(&set, &corpus)))
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClientKind {
    Mock,
    Live,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AutotagBody {
    pub debate_id: String,
    #[serde(default)]
    pub template_id: Option<String>,
    #[serde(default = "one")]
    pub radius: usize,
    pub client: ClientKind,
    #[serde(default)]
    pub set_id: Option<String>,
    #[serde(default)]
    pub annotator_id: Option<String>,
}

fn one() -> usize {
    1
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AutotagStarted {
    pub run_id: String,
    pub set_id: String,
}

fn build_client(s: &AppState, kind: &ClientKind) -> Result<(Box<dyn TaggingEndpoint>, &'static str), ApiError> {
    match kind {
        ClientKind::Mock => Ok((Box::new(MockEndpoint::new(RuleTable::bundled(s.store().registry())?)), "mock")),
        ClientKind::Live => {
            let cfg = match &s.0.endpoint_config {
                Some(p) => EndpointConfig::load(p)?,
                None => EndpointConfig::from_env()?,
            };
            Ok((Box::new(LiveEndpoint::new(cfg)?), "live"))
        }
    }
}

async fn start_autotag(
    State(s): State<AppState>,
    Json(body): Json<AutotagBody>,
) -> Result<(StatusCode, Json<AutotagStarted>), ApiError> {
    if body.radius > MAX_RADIUS {
        return Err(ApiError::bad_request(format!("radius must be at most {MAX_RADIUS}")));
    }
    let template = PromptTemplate::bundled();
    if let Some(t) = &body.template_id {
        if *t != template.id {
            return Err(ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "UnknownTemplate",
                format!("unknown template {t:?}; available: {:?}", template.id),
            ));
        }
    }
    let corpus = s.store().load_corpus(&body.debate_id)?;
    let (client, client_name) = build_client(&s, &body.client)?;
    let run_id = s.next_run_id();
    let set_id = body.set_id.unwrap_or_else(|| format!("{}.{run_id}", body.debate_id));
    let guard = s.try_lock_set(&set_id)?;
    if s.store().has_set(&set_id) {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            "SetExists",
            format!("annotation set {set_id:?} already exists"),
        ));
    }
    let spec = RunSpec {
        set_id: set_id.clone(),
        annotator_id: body.annotator_id.unwrap_or_else(|| client.name()),
        radius: body.radius,
    };
    // Surface bad ids now rather than from the background task.
    beads_core::annotation::AnnotationSet::new(
        &spec.set_id,
        corpus.debate_id(),
        &spec.annotator_id,
        beads_core::annotation::Provenance::Model,
    )?;

    s.put_run(RunRecord {
        run_id: run_id.clone(),
        set_id: set_id.clone(),
        debate_id: body.debate_id.clone(),
        client: client_name.into(),
        state: RunState::Running,
        done: 0,
        total: corpus.len(),
        failures: 0,
        manifest: None,
        error: None,
    });

    let bg = s.clone();
    let rid = run_id.clone();
    let handle = tokio::spawn(async move {
        let worker = bg.clone();
        let wrid = rid.clone();
        let outcome = tokio::task::spawn_blocking(move || {
            let store = worker.store();
            let progress = |p: Progress| worker.set_progress(&wrid, p.done, p.total);
            let result = autotag_corpus_with_progress(
                client.as_ref(),
                &template,
                store.registry(),
                &corpus,
                &spec,
                &worker.0.run_config,
                &progress,
            );
            let path = store.set_path(&spec.set_id);
            match result {
                Ok(run) => save_run(&run, &path).map(|_| run),
                Err(AutotagError::EndpointUnreachable { detail, partial }) => {
                    save_run(&partial, &path)?;
                    Err(AutotagError::EndpointUnreachable { detail, partial })
                }
                Err(e) => Err(e),
            }
        })
        .await;
        drop(guard);
        let mut record = bg.run(&rid).expect("run registered before spawn");
        match outcome {
            Ok(Ok(run)) => finish(&mut record, &run, None),
            Ok(Err(AutotagError::EndpointUnreachable { detail, partial })) => {
                finish(&mut record, &partial, Some(detail))
            }
            Ok(Err(e)) => {
                record.state = RunState::Failed;
                record.error = Some(e.to_string());
            }
            Err(e) => {
                record.state = RunState::Failed;
                record.error = Some(format!("run task failed: {e}"));
            }
        }
        bg.put_run(record);
    });
    s.track(handle);
    Ok((StatusCode::ACCEPTED, Json(AutotagStarted { run_id, set_id })))
}

fn finish(record: &mut RunRecord, run: &AutotagRun, error: Option<String>) {
    record.state = match run.manifest.status {
        RunStatus::Complete => RunState::Complete,
        RunStatus::CompleteWithFailures => RunState::CompleteWithFailures,
        RunStatus::Aborted => RunState::Aborted,
    };
    record.done = run.manifest.units_annotated + run.manifest.units_failed;
    record.total = run.manifest.units_total;
    record.failures = run.failures.len();
    record.manifest = Some(run.manifest.clone());
    record.error = error;
}

async fn get_run(State(s): State<AppState>, Path(run_id): Path<String>) -> ApiResult<RunRecord> {
    s.run(&run_id).map(Json).ok_or_else(|| ApiError::not_found("RunNotFound", format!("no run {run_id:?}")))
}

#[derive(Debug, Deserialize)]
struct AgreementQuery {
    gold: String,
    other: String,
}

async fn agreement(State(s): State<AppState>, Query(q): Query<AgreementQuery>) -> ApiResult<ComparisonReport> {
    let (gold, corpus) = s.store().load_set(&q.gold)?;
    let (other, _) = s.store().load_set(&q.other)?;
    Ok(Json(compare(&gold, &other, &corpus)?))
}

#[derive(Debug, Deserialize)]
struct MetricsQuery {
    set: String,
    mode: Option<String>,
    #[serde(default)]
    include_moderators: bool,
}

async fn metrics(State(s): State<AppState>, Query(q): Query<MetricsQuery>) -> ApiResult<FrequencyTable> {
    let mode = match &q.mode {
        Some(m) => CountMode::from_str(m)?,
        None => CountMode::default(),
    };
    let (set, corpus) = s.store().load_set(&q.set)?;
    Ok(Json(tag_frequencies(&set, &corpus, FrequencyOptions { mode, include_moderators: q.include_moderators })?))
}

async fn registry(State(s): State<AppState>) -> Json<TagRegistry> {
    Json(s.store().registry().clone())
}
