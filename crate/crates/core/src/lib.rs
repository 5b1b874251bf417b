//! Dialogue-act annotation of debate transcripts with the BEADS tag set.
//!
//! Pipeline: [`corpus`] ingests raw transcripts into speech units,
//! [`annotation`] holds human or model tag assignments, [`autotag`] produces
//! model sets, [`agreement`] compares two sets and [`analytics`] counts tags
//! per speaker. [`store`] is the directory layout shared by the CLI and the
//! HTTP service.

pub mod agreement;
pub mod analytics;
pub mod annotation;
pub mod autotag;
pub mod corpus;
pub mod fsio;
pub mod schema;
pub mod store;

pub use agreement::{
    cohen_kappa, compare, render_comparison, ComparisonReport, ConfusionMatrix, Discrepancy, ReportFormat,
};
pub use analytics::{
    compare_debates, render_metrics, tag_frequencies, top_k_categories, CountMode, DebateComparison, FrequencyOptions,
    FrequencyTable, MetricsFormat,
};
pub use annotation::{context_window, Annotation, AnnotationSet, ContextWindow, Provenance, SetHeader, WindowUnit};
pub use corpus::{ingest, Corpus, CorpusStats, NoiseRules, RawTranscript, Segmenter, SpeechUnit, Turn, UnitId};
pub use schema::{load_registry, Category, Layer, TagCode, TagDef, TagRegistry};
pub use store::{Store, StoreError};
