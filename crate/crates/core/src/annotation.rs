//! Tag assignments, context windows and annotation-set persistence.
//!
//! An [`AnnotationSet`] belongs to one annotator and one debate and holds at
//! most one [`Annotation`] per speech unit. Sets are stored as JSON lines: a
//! header record followed by one record per annotated unit.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{validate_debate_id, Corpus, UnitId};
use crate::fsio::write_atomic;
use crate::schema::{TagCode, TagRegistry};

#[derive(Debug, Error)]
pub enum AnnotationError {
    #[error("unknown tag {0:?}")]
    UnknownTag(String),
    #[error("unknown unit {0}")]
    UnknownUnit(String),
    #[error("annotation provenance {annotation} does not match set provenance {set}")]
    ProvenanceMismatch { set: Provenance, annotation: Provenance },
    #[error("annotation by {annotation:?} cannot go into the set of {set:?}")]
    AnnotatorMismatch { set: String, annotation: String },
    #[error("set is bound to debate {set:?} but corpus is {corpus:?}")]
    DebateMismatch { set: String, corpus: String },
    #[error("invalid secondary tags: {0}")]
    InvalidSecondary(String),
    #[error("invalid set id {0:?}: use letters, digits, '.', '_' or '-'")]
    InvalidSetId(String),
    #[error("invalid debate id {0:?}")]
    InvalidDebateId(String),
    #[error("line {line}: {detail}")]
    MalformedRecord { line: usize, detail: String },
    #[error("i/o failure on {path}: {source}")]
    IoFailure {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Human,
    Model,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Human => "human",
            Provenance::Model => "model",
        })
    }
}

impl FromStr for Provenance {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "human" => Ok(Provenance::Human),
            "model" => Ok(Provenance::Model),
            other => Err(format!("unknown provenance {other:?}")),
        }
    }
}

/// One tag assignment. Equality ignores `created_at`.
#[derive(Debug, Clone, Serialize)]
pub struct Annotation {
    pub unit_id: UnitId,
    pub primary_tag: TagCode,
    pub secondary_tags: Vec<TagCode>,
    pub annotator_id: String,
    pub provenance: Provenance,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rationale: Option<String>,
    pub created_at: DateTime<Utc>,
}

impl PartialEq for Annotation {
    fn eq(&self, other: &Self) -> bool {
        self.unit_id == other.unit_id
            && self.primary_tag == other.primary_tag
            && self.secondary_tags == other.secondary_tags
            && self.annotator_id == other.annotator_id
            && self.provenance == other.provenance
            && self.rationale == other.rationale
    }
}

impl Eq for Annotation {}

impl Annotation {
    pub fn new(unit_id: UnitId, primary_tag: TagCode, annotator_id: impl Into<String>, provenance: Provenance) -> Self {
        Annotation {
            unit_id,
            primary_tag,
            secondary_tags: Vec::new(),
            annotator_id: annotator_id.into(),
            provenance,
            rationale: None,
            created_at: now(),
        }
    }

    pub fn with_secondary(mut self, tags: impl IntoIterator<Item = TagCode>) -> Self {
        self.secondary_tags = tags.into_iter().collect();
        self
    }

    pub fn with_rationale(mut self, rationale: impl Into<String>) -> Self {
        self.rationale = Some(rationale.into());
        self
    }

    /// Primary tag followed by secondary tags.
    pub fn all_tags(&self) -> impl Iterator<Item = &TagCode> {
        std::iter::once(&self.primary_tag).chain(self.secondary_tags.iter())
    }
}

fn now() -> DateTime<Utc> {
    // Second precision keeps files stable under text round trips.
    let t = Utc::now();
    DateTime::from_timestamp(t.timestamp(), 0).unwrap_or(t)
}

/// Header record of an annotation-set file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetHeader {
    pub set_id: String,
    pub debate_id: String,
    pub annotator_id: String,
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created_at: Option<DateTime<Utc>>,
}

impl PartialEq for SetHeader {
    fn eq(&self, other: &Self) -> bool {
        self.set_id == other.set_id
            && self.debate_id == other.debate_id
            && self.annotator_id == other.annotator_id
            && self.provenance == other.provenance
    }
}

impl Eq for SetHeader {}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotationSet {
    header: SetHeader,
    annotations: BTreeMap<UnitId, Annotation>,
}

impl AnnotationSet {
    pub fn new(
        set_id: impl Into<String>,
        debate_id: impl Into<String>,
        annotator_id: impl Into<String>,
        provenance: Provenance,
    ) -> Result<Self, AnnotationError> {
        Self::from_header(SetHeader {
            set_id: set_id.into(),
            debate_id: debate_id.into(),
            annotator_id: annotator_id.into(),
            provenance,
            created_at: Some(now()),
        })
    }

    pub fn from_header(header: SetHeader) -> Result<Self, AnnotationError> {
        validate_debate_id(&header.set_id).map_err(|_| AnnotationError::InvalidSetId(header.set_id.clone()))?;
        validate_debate_id(&header.debate_id)
            .map_err(|_| AnnotationError::InvalidDebateId(header.debate_id.clone()))?;
        Ok(AnnotationSet { header, annotations: BTreeMap::new() })
    }

    pub fn header(&self) -> &SetHeader {
        &self.header
    }

    pub fn set_id(&self) -> &str {
        &self.header.set_id
    }

    pub fn debate_id(&self) -> &str {
        &self.header.debate_id
    }

    pub fn annotator_id(&self) -> &str {
        &self.header.annotator_id
    }

    pub fn provenance(&self) -> Provenance {
        self.header.provenance
    }

    pub fn len(&self) -> usize {
        self.annotations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.annotations.is_empty()
    }

    pub fn get(&self, unit: &UnitId) -> Option<&Annotation> {
        self.annotations.get(unit)
    }

    /// Annotations in unit order.
    pub fn iter(&self) -> impl Iterator<Item = &Annotation> {
        self.annotations.values()
    }

    /// Inserts or replaces the annotation for its unit after validating it
    /// against the registry and corpus. Returns the replaced annotation.
    pub fn upsert(
        &mut self,
        annotation: Annotation,
        registry: &TagRegistry,
        corpus: &Corpus,
    ) -> Result<Option<Annotation>, AnnotationError> {
        self.validate(&annotation, registry, corpus)?;
        Ok(self.annotations.insert(annotation.unit_id.clone(), annotation))
    }

    fn validate(&self, a: &Annotation, registry: &TagRegistry, corpus: &Corpus) -> Result<(), AnnotationError> {
        if corpus.debate_id() != self.debate_id() {
            return Err(AnnotationError::DebateMismatch {
                set: self.debate_id().to_string(),
                corpus: corpus.debate_id().to_string(),
            });
        }
        if !corpus.contains(&a.unit_id) {
            return Err(AnnotationError::UnknownUnit(a.unit_id.to_string()));
        }
        if a.provenance != self.provenance() {
            return Err(AnnotationError::ProvenanceMismatch { set: self.provenance(), annotation: a.provenance });
        }
        if a.annotator_id != self.annotator_id() {
            return Err(AnnotationError::AnnotatorMismatch {
                set: self.annotator_id().to_string(),
                annotation: a.annotator_id.clone(),
            });
        }
        for tag in a.all_tags() {
            if !registry.contains(tag) {
                return Err(AnnotationError::UnknownTag(tag.to_string()));
            }
        }
        let mut seen = HashSet::new();
        for tag in &a.secondary_tags {
            if *tag == a.primary_tag {
                return Err(AnnotationError::InvalidSecondary(format!("{tag} repeats the primary tag")));
            }
            if !seen.insert(tag) {
                return Err(AnnotationError::InvalidSecondary(format!("{tag} listed twice")));
            }
        }
        Ok(())
    }
}

/// A unit with its speaker, as shown inside a context window.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowUnit {
    pub unit_id: UnitId,
    pub seq: usize,
    pub speaker: String,
    pub text: String,
}

/// A target unit plus up to `radius` neighbours on each side, in corpus order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextWindow {
    pub target: WindowUnit,
    pub before: Vec<WindowUnit>,
    pub after: Vec<WindowUnit>,
    pub radius: usize,
}

impl ContextWindow {
    /// The unit immediately preceding the target, if any.
    pub fn previous(&self) -> Option<&WindowUnit> {
        self.before.last()
    }

    pub fn next(&self) -> Option<&WindowUnit> {
        self.after.first()
    }
}

pub fn context_window(corpus: &Corpus, unit_id: &UnitId, radius: usize) -> Result<ContextWindow, AnnotationError> {
    let target = corpus.unit(unit_id).ok_or_else(|| AnnotationError::UnknownUnit(unit_id.to_string()))?;
    let seq = target.unit.seq;
    let at = |s: usize| {
        corpus.by_seq(s).map(|u| WindowUnit {
            unit_id: u.unit.unit_id.clone(),
            seq: u.unit.seq,
            speaker: u.speaker.to_string(),
            text: u.unit.text.clone(),
        })
    };
    let before = (seq.saturating_sub(radius)..seq).filter_map(at).collect();
    let after = (seq + 1..=seq.saturating_add(radius)).map_while(at).collect();
    Ok(ContextWindow { target: at(seq).expect("target exists"), before, after, radius })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Coverage {
    pub annotated: usize,
    pub total: usize,
    /// Unannotated units in sequence order.
    pub missing: Vec<UnitId>,
}

pub fn coverage(set: &AnnotationSet, corpus: &Corpus) -> Coverage {
    let mut annotated = 0;
    let mut missing = Vec::new();
    for u in corpus.units() {
        if set.get(&u.unit.unit_id).is_some() {
            annotated += 1;
        } else {
            missing.push(u.unit.unit_id.clone());
        }
    }
    Coverage { annotated, total: corpus.len(), missing }
}

#[derive(Serialize)]
struct RecordOut<'a> {
    unit_id: &'a UnitId,
    primary_tag: &'a TagCode,
    secondary_tags: &'a [TagCode],
    #[serde(skip_serializing_if = "Option::is_none")]
    rationale: Option<&'a str>,
    created_at: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordIn {
    unit_id: String,
    primary_tag: String,
    #[serde(default)]
    secondary_tags: Vec<String>,
    #[serde(default)]
    rationale: Option<String>,
    created_at: Option<DateTime<Utc>>,
}

/// Renders a set in its JSON-lines form.
pub fn to_jsonl(set: &AnnotationSet) -> String {
    let mut out = serde_json::to_string(&set.header).expect("header serialises");
    out.push('\n');
    for a in set.iter() {
        let rec = RecordOut {
            unit_id: &a.unit_id,
            primary_tag: &a.primary_tag,
            secondary_tags: &a.secondary_tags,
            rationale: a.rationale.as_deref(),
            created_at: a.created_at.to_rfc3339_opts(SecondsFormat::Secs, true),
        };
        out.push_str(&serde_json::to_string(&rec).expect("record serialises"));
        out.push('\n');
    }
    out
}

pub fn save_set(set: &AnnotationSet, path: &Path) -> Result<(), AnnotationError> {
    write_atomic(path, to_jsonl(set).as_bytes())
        .map_err(|source| AnnotationError::IoFailure { path: path.to_path_buf(), source })
}

/// Reads only the header line of a set file.
pub fn read_set_header(path: &Path) -> Result<SetHeader, AnnotationError> {
    let io_err = |source| AnnotationError::IoFailure { path: path.to_path_buf(), source };
    let file = std::fs::File::open(path).map_err(io_err)?;
    let mut first = String::new();
    BufReader::new(file).read_line(&mut first).map_err(io_err)?;
    parse_header(&first)
}

fn parse_header(line: &str) -> Result<SetHeader, AnnotationError> {
    if line.trim().is_empty() {
        return Err(AnnotationError::MalformedRecord { line: 1, detail: "missing header record".into() });
    }
    serde_json::from_str(line)
        .map_err(|e| AnnotationError::MalformedRecord { line: 1, detail: format!("bad header: {e}") })
}

/// Loads a set file, validating every record against the registry and corpus.
pub fn load_set(path: &Path, registry: &TagRegistry, corpus: &Corpus) -> Result<AnnotationSet, AnnotationError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| AnnotationError::IoFailure { path: path.to_path_buf(), source })?;
    parse_jsonl(&text, registry, corpus)
}

pub fn parse_jsonl(text: &str, registry: &TagRegistry, corpus: &Corpus) -> Result<AnnotationSet, AnnotationError> {
    let mut lines = text.lines().enumerate();
    let header = parse_header(lines.next().map(|(_, l)| l).unwrap_or(""))?;
    let malformed = |line: usize, detail: String| AnnotationError::MalformedRecord { line, detail };
    if header.debate_id != corpus.debate_id() {
        return Err(malformed(
            1,
            format!("set is bound to debate {:?}, corpus is {:?}", header.debate_id, corpus.debate_id()),
        ));
    }
    let mut set = AnnotationSet::from_header(header).map_err(|e| malformed(1, e.to_string()))?;
    for (i, line) in lines {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: RecordIn = serde_json::from_str(line).map_err(|e| malformed(line_no, e.to_string()))?;
        let unit_id: UnitId =
            rec.unit_id.parse().map_err(|_| malformed(line_no, format!("bad unit_id {:?}", rec.unit_id)))?;
        let resolve = |raw: &str| {
            registry
                .resolve(raw)
                .map(|t| t.code.clone())
                .map_err(|_| malformed(line_no, format!("unknown tag {raw:?}")))
        };
        let primary = resolve(&rec.primary_tag)?;
        let secondary = rec.secondary_tags.iter().map(|t| resolve(t)).collect::<Result<Vec<_>, _>>()?;
        if set.get(&unit_id).is_some() {
            return Err(malformed(line_no, format!("duplicate unit_id {unit_id}")));
        }
        let mut a = Annotation::new(unit_id, primary, set.annotator_id(), set.provenance()).with_secondary(secondary);
        a.rationale = rec.rationale;
        if let Some(t) = rec.created_at {
            a.created_at = t;
        }
        set.upsert(a, registry, corpus).map_err(|e| malformed(line_no, e.to_string()))?;
    }
    Ok(set)
}
