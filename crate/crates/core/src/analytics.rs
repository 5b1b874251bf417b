//! Per-speaker tag counts, two-debate comparison tables and top-k rankings.

use std::collections::BTreeMap;
use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::annotation::{AnnotationError, AnnotationSet};
use crate::corpus::Corpus;
use crate::schema::{Category, Layer, TagCode, TagRegistry};

#[derive(Debug, thiserror::Error)]
pub enum AnalyticsError {
    #[error("both tables come from debate {0:?}")]
    SameDebate(String),
    #[error("speaker {0:?} has no units in this set")]
    UnknownSpeaker(String),
    #[error("unknown tag {0:?}")]
    UnknownTag(String),
    #[error("unknown format {0:?}")]
    UnknownFormat(String),
    #[error("unknown counting mode {0:?} (expected primary_only or include_secondary)")]
    UnknownMode(String),
    #[error("{0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Annotation(#[from] AnnotationError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountMode {
    #[default]
    PrimaryOnly,
    IncludeSecondary,
}

impl fmt::Display for CountMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CountMode::PrimaryOnly => "primary_only",
            CountMode::IncludeSecondary => "include_secondary",
        })
    }
}

impl FromStr for CountMode {
    type Err = AnalyticsError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "primary_only" | "primary" => Ok(CountMode::PrimaryOnly),
            "include_secondary" | "all" => Ok(CountMode::IncludeSecondary),
            _ => Err(AnalyticsError::UnknownMode(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FrequencyOptions {
    pub mode: CountMode,
    pub include_moderators: bool,
}

/// Tag counts per speaker for one annotation set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FrequencyTable {
    pub debate_id: String,
    pub set_id: String,
    pub mode: CountMode,
    /// Counted speakers in order of first appearance.
    pub speakers: Vec<String>,
    /// tag → speaker → count; zero cells are omitted.
    pub counts: BTreeMap<TagCode, BTreeMap<String, u64>>,
    pub total_units_by_speaker: BTreeMap<String, u64>,
    pub annotated_units_by_speaker: BTreeMap<String, u64>,
}

impl FrequencyTable {
    pub fn count(&self, tag: &TagCode, speaker: &str) -> u64 {
        self.counts.get(tag).and_then(|m| m.get(speaker)).copied().unwrap_or(0)
    }

    pub fn has_speaker(&self, speaker: &str) -> bool {
        self.speakers.iter().any(|s| s == speaker)
    }
}

pub fn tag_frequencies(
    set: &AnnotationSet,
    corpus: &Corpus,
    opts: FrequencyOptions,
) -> Result<FrequencyTable, AnalyticsError> {
    if set.debate_id() != corpus.debate_id() {
        return Err(
            AnnotationError::DebateMismatch { set: set.debate_id().into(), corpus: corpus.debate_id().into() }.into()
        );
    }
    let counted = |speaker: &str| opts.include_moderators || !corpus.is_moderator(speaker);
    let speakers: Vec<String> = corpus.speakers().iter().filter(|s| counted(s)).cloned().collect();
    let mut total = BTreeMap::new();
    for s in &speakers {
        total.insert(s.clone(), 0u64);
    }
    for u in corpus.units() {
        if let Some(n) = total.get_mut(u.speaker) {
            *n += 1;
        }
    }
    let mut annotated: BTreeMap<String, u64> = speakers.iter().map(|s| (s.clone(), 0)).collect();
    let mut counts: BTreeMap<TagCode, BTreeMap<String, u64>> = BTreeMap::new();
    for a in set.iter() {
        let Some(u) = corpus.unit(&a.unit_id) else {
            return Err(AnnotationError::UnknownUnit(a.unit_id.to_string()).into());
        };
        if !counted(u.speaker) {
            continue;
        }
        *annotated.get_mut(u.speaker).expect("speaker listed") += 1;
        let tags: Vec<&TagCode> = match opts.mode {
            CountMode::PrimaryOnly => vec![&a.primary_tag],
            CountMode::IncludeSecondary => a.all_tags().collect(),
        };
        for t in tags {
            *counts.entry(t.clone()).or_default().entry(u.speaker.to_string()).or_default() += 1;
        }
    }
    Ok(FrequencyTable {
        debate_id: set.debate_id().into(),
        set_id: set.set_id().into(),
        mode: opts.mode,
        speakers,
        counts,
        total_units_by_speaker: total,
        annotated_units_by_speaker: annotated,
    })
}

/// Tags shown by default in the two-debate metrics report.
pub const DEFAULT_REPORT_TAGS: [&str; 7] = ["SE", "CH", "PB", "AEX", "AF", "PER", "PD"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DebateColumn {
    pub debate_id: String,
    pub set_id: String,
    pub speakers: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ComparisonRow {
    pub tag: TagCode,
    pub name: String,
    /// `counts[d][s]` follows `debates[d].speakers[s]`.
    pub counts: [Vec<u64>; 2],
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DebateComparison {
    pub mode: CountMode,
    pub debates: [DebateColumn; 2],
    pub rows: Vec<ComparisonRow>,
}

/// Speakers shared by both debates come first, then the rest, each group in
/// order of first appearance.
fn column_order(table: &FrequencyTable, other: &FrequencyTable) -> Vec<String> {
    let (mut shared, rest): (Vec<_>, Vec<_>) = table.speakers.iter().cloned().partition(|s| other.has_speaker(s));
    shared.extend(rest);
    shared
}

/// One row per requested tag. `notes` maps tags to free-text commentary.
pub fn compare_debates(
    registry: &TagRegistry,
    t1: &FrequencyTable,
    t2: &FrequencyTable,
    tags: &[TagCode],
    notes: &BTreeMap<TagCode, String>,
) -> Result<DebateComparison, AnalyticsError> {
    if t1.debate_id == t2.debate_id {
        return Err(AnalyticsError::SameDebate(t1.debate_id.clone()));
    }
    if t1.mode != t2.mode {
        return Err(AnalyticsError::InvalidArgument(format!(
            "tables use different modes ({} vs {})",
            t1.mode, t2.mode
        )));
    }
    let debates = [
        DebateColumn { debate_id: t1.debate_id.clone(), set_id: t1.set_id.clone(), speakers: column_order(t1, t2) },
        DebateColumn { debate_id: t2.debate_id.clone(), set_id: t2.set_id.clone(), speakers: column_order(t2, t1) },
    ];
    let mut rows = Vec::with_capacity(tags.len());
    for tag in tags {
        let def = registry.get(tag).ok_or_else(|| AnalyticsError::UnknownTag(tag.to_string()))?;
        let col = |t: &FrequencyTable, d: &DebateColumn| d.speakers.iter().map(|s| t.count(tag, s)).collect();
        rows.push(ComparisonRow {
            tag: tag.clone(),
            name: def.name.clone(),
            counts: [col(t1, &debates[0]), col(t2, &debates[1])],
            note: notes.get(tag).cloned().unwrap_or_default(),
        });
    }
    Ok(DebateComparison { mode: t1.mode, debates, rows })
}

/// Tags eligible for top-k ranking by default: Beads and Analysis layers,
/// excluding structural tags.
pub fn default_eligible(registry: &TagRegistry) -> Vec<TagCode> {
    registry
        .tags()
        .iter()
        .filter(|t| matches!(t.layer, Layer::Beads | Layer::Analysis) && t.category != Category::Structural)
        .map(|t| t.code.clone())
        .collect()
}

/// The `k` most frequent eligible tags for `speaker`, descending, ties by code.
/// Tags never observed for the speaker are left out.
pub fn top_k_categories(
    table: &FrequencyTable,
    speaker: &str,
    k: usize,
    eligible: &[TagCode],
) -> Result<Vec<(TagCode, u64)>, AnalyticsError> {
    if k == 0 {
        return Err(AnalyticsError::InvalidArgument("k must be at least 1".into()));
    }
    if eligible.is_empty() {
        return Err(AnalyticsError::InvalidArgument("no eligible tags".into()));
    }
    if !table.has_speaker(speaker) {
        return Err(AnalyticsError::UnknownSpeaker(speaker.to_string()));
    }
    let mut ranked: Vec<(TagCode, u64)> = eligible
        .iter()
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .map(|t| (t.clone(), table.count(t, speaker)))
        .filter(|(_, n)| *n > 0)
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(k);
    Ok(ranked)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricsFormat {
    Md,
    Csv,
}

impl FromStr for MetricsFormat {
    type Err = AnalyticsError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "md" | "markdown" => Ok(MetricsFormat::Md),
            "csv" => Ok(MetricsFormat::Csv),
            _ => Err(AnalyticsError::UnknownFormat(s.to_string())),
        }
    }
}

pub fn render_metrics(cmp: &DebateComparison, format: MetricsFormat) -> String {
    match format {
        MetricsFormat::Csv => metrics_csv(cmp),
        MetricsFormat::Md => metrics_md(cmp),
    }
}

fn metrics_csv(cmp: &DebateComparison) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["tag".to_string()];
    for d in &cmp.debates {
        header.extend(d.speakers.iter().map(|s| format!("{}_{}", d.debate_id, s)));
    }
    header.push("note".into());
    w.write_record(&header).expect("write to vec");
    for row in &cmp.rows {
        let mut rec = vec![row.tag.to_string()];
        rec.extend(row.counts.iter().flatten().map(|c| c.to_string()));
        rec.push(row.note.clone());
        w.write_record(&rec).expect("write to vec");
    }
    String::from_utf8(w.into_inner().expect("flush to vec")).expect("utf8")
}

fn md_cell(s: &str) -> String {
    s.replace('|', "\\|").replace('\n', " ")
}

fn metrics_md(cmp: &DebateComparison) -> String {
    let mut out = String::new();
    let title = |d: &DebateColumn| format!("{} ({})", d.speakers.join(" vs. "), d.debate_id);
    let _ = writeln!(out, "| Category | {} | {} | Key Difference |", title(&cmp.debates[0]), title(&cmp.debates[1]));
    out.push_str("|---|---|---|---|\n");
    for row in &cmp.rows {
        let cell = |d: usize| {
            cmp.debates[d]
                .speakers
                .iter()
                .zip(&row.counts[d])
                .map(|(s, n)| format!("{n} ({s})"))
                .collect::<Vec<_>>()
                .join(", ")
        };
        let _ = writeln!(
            out,
            "| {} ({}) | {} | {} | {} |",
            md_cell(&row.name),
            row.tag,
            cell(0),
            cell(1),
            md_cell(&row.note)
        );
    }
    let _ = writeln!(out, "\ncounting mode: {}", cmp.mode);
    out
}

/// Reads `TAG<TAB or comma>note` lines; blank lines and `#` comments are skipped.
pub fn parse_notes(text: &str, registry: &TagRegistry) -> Result<BTreeMap<TagCode, String>, AnalyticsError> {
    let mut notes = BTreeMap::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (tag, note) = line.split_once(['\t', ',']).unwrap_or((line, ""));
        let def = registry.resolve(tag).map_err(|_| AnalyticsError::UnknownTag(tag.trim().to_string()))?;
        notes.insert(def.code.clone(), note.trim().to_string());
    }
    Ok(notes)
}
