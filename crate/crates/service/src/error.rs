use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use beads_core::agreement::AgreementError;
use beads_core::analytics::AnalyticsError;
use beads_core::annotation::AnnotationError;
use beads_core::autotag::AutotagError;
use beads_core::corpus::CorpusError;
use beads_core::schema::SchemaError;
use beads_core::store::StoreError;
use serde::Serialize;

/// Every error body is `{error_kind, detail}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ErrorBody {
    pub error_kind: String,
    pub detail: String,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub kind: &'static str,
    pub detail: String,
}

impl ApiError {
    pub fn new(status: StatusCode, kind: &'static str, detail: impl Into<String>) -> Self {
        ApiError { status, kind, detail: detail.into() }
    }

    pub fn bad_request(detail: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "BadRequest", detail)
    }

    pub fn not_found(kind: &'static str, detail: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, kind, detail)
    }

    pub fn internal(detail: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", detail)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.status.is_server_error() {
            tracing::error!(kind = self.kind, detail = %self.detail, "request failed");
        }
        (self.status, Json(ErrorBody { error_kind: self.kind.into(), detail: self.detail })).into_response()
    }
}

const UNPROCESSABLE: StatusCode = StatusCode::UNPROCESSABLE_ENTITY;

impl From<AnnotationError> for ApiError {
    fn from(e: AnnotationError) -> Self {
        let detail = e.to_string();
        match e {
            AnnotationError::UnknownTag(_) => Self::new(UNPROCESSABLE, "UnknownTag", detail),
            AnnotationError::UnknownUnit(_) => Self::new(StatusCode::NOT_FOUND, "UnknownUnit", detail),
            AnnotationError::ProvenanceMismatch { .. } => Self::new(UNPROCESSABLE, "ProvenanceMismatch", detail),
            AnnotationError::AnnotatorMismatch { .. } => Self::new(UNPROCESSABLE, "AnnotatorMismatch", detail),
            AnnotationError::DebateMismatch { .. } => Self::new(UNPROCESSABLE, "DebateMismatch", detail),
            AnnotationError::InvalidSecondary(_) => Self::new(UNPROCESSABLE, "InvalidSecondary", detail),
            AnnotationError::InvalidSetId(_) => Self::new(UNPROCESSABLE, "InvalidSetId", detail),
            AnnotationError::InvalidDebateId(_) => Self::new(UNPROCESSABLE, "InvalidDebateId", detail),
            AnnotationError::MalformedRecord { .. } => Self::internal(detail).with_kind("MalformedRecord"),
            AnnotationError::IoFailure { .. } => Self::internal(detail).with_kind("IoFailure"),
        }
    }
}

impl ApiError {
    fn with_kind(mut self, kind: &'static str) -> Self {
        self.kind = kind;
        self
    }
}

impl From<CorpusError> for ApiError {
    fn from(e: CorpusError) -> Self {
        let detail = e.to_string();
        match e {
            CorpusError::InvalidUnitId(_) => Self::new(StatusCode::BAD_REQUEST, "InvalidUnitId", detail),
            CorpusError::InvalidDebateId(_) => Self::new(StatusCode::BAD_REQUEST, "InvalidDebateId", detail),
            CorpusError::MalformedCorpusFile { .. } => Self::internal(detail).with_kind("MalformedCorpusFile"),
            CorpusError::IoFailure { .. } => Self::internal(detail).with_kind("IoFailure"),
            CorpusError::OrphanLine { .. } => Self::new(UNPROCESSABLE, "OrphanLine", detail),
            CorpusError::Invalid(_) => Self::new(UNPROCESSABLE, "InvalidCorpus", detail),
            CorpusError::MalformedRules(_) => Self::new(UNPROCESSABLE, "MalformedRules", detail),
        }
    }
}

impl From<SchemaError> for ApiError {
    fn from(e: SchemaError) -> Self {
        let detail = e.to_string();
        match e {
            SchemaError::UnknownTag(_) => Self::new(UNPROCESSABLE, "UnknownTag", detail),
            _ => Self::new(UNPROCESSABLE, "SchemaError", detail),
        }
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let detail = e.to_string();
        match e {
            StoreError::CorpusNotFound(_) => Self::not_found("CorpusNotFound", detail),
            StoreError::SetNotFound(_) => Self::not_found("SetNotFound", detail),
            StoreError::SetExists(_) => Self::new(StatusCode::CONFLICT, "SetExists", detail),
            StoreError::InvalidId(_) => Self::new(StatusCode::BAD_REQUEST, "InvalidId", detail),
            StoreError::Corpus(e) => e.into(),
            StoreError::Annotation(e) => e.into(),
            StoreError::Schema(e) => e.into(),
            StoreError::Unreadable { .. } => Self::internal(detail).with_kind("StoreUnreadable"),
            StoreError::IoFailure { .. } => Self::internal(detail).with_kind("IoFailure"),
        }
    }
}

impl From<AgreementError> for ApiError {
    fn from(e: AgreementError) -> Self {
        let detail = e.to_string();
        match e {
            AgreementError::DebateMismatch { .. } => Self::new(UNPROCESSABLE, "DebateMismatch", detail),
            AgreementError::EmptyIntersection => Self::new(UNPROCESSABLE, "EmptyIntersection", detail),
            AgreementError::EmptyMatrix => Self::new(UNPROCESSABLE, "EmptyMatrix", detail),
            AgreementError::UnknownFormat(_) => Self::new(StatusCode::BAD_REQUEST, "UnknownFormat", detail),
            AgreementError::Annotation(e) => e.into(),
        }
    }
}

impl From<AnalyticsError> for ApiError {
    fn from(e: AnalyticsError) -> Self {
        let detail = e.to_string();
        match e {
            AnalyticsError::UnknownMode(_) => Self::new(StatusCode::BAD_REQUEST, "UnknownMode", detail),
            AnalyticsError::UnknownFormat(_) => Self::new(StatusCode::BAD_REQUEST, "UnknownFormat", detail),
            AnalyticsError::InvalidArgument(_) => Self::new(StatusCode::BAD_REQUEST, "InvalidArgument", detail),
            AnalyticsError::SameDebate(_) => Self::new(UNPROCESSABLE, "SameDebate", detail),
            AnalyticsError::UnknownSpeaker(_) => Self::new(UNPROCESSABLE, "UnknownSpeaker", detail),
            AnalyticsError::UnknownTag(_) => Self::new(UNPROCESSABLE, "UnknownTag", detail),
            AnalyticsError::Annotation(e) => e.into(),
        }
    }
}

impl From<AutotagError> for ApiError {
    fn from(e: AutotagError) -> Self {
        let detail = e.to_string();
        match e {
            AutotagError::Config(_) => Self::new(UNPROCESSABLE, "AutotagConfig", detail),
            AutotagError::Annotation(e) => e.into(),
            AutotagError::EndpointUnreachable { .. } => {
                Self::new(StatusCode::BAD_GATEWAY, "EndpointUnreachable", detail)
            }
            AutotagError::IoFailure { .. } => Self::internal(detail).with_kind("IoFailure"),
        }
    }
}
