//! Pairwise agreement between two annotation sets over one corpus.
//!
//! Everything is computed on the units both sets annotate. A match means equal
//! primary tags; `overlap_rate` also counts units whose full tag sets share a
//! code.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::Serialize;

use crate::annotation::{context_window, AnnotationError, AnnotationSet, ContextWindow};
use crate::corpus::{Corpus, UnitId};
use crate::schema::TagCode;

#[derive(Debug, thiserror::Error)]
pub enum AgreementError {
    #[error("sets belong to different debates ({gold:?} vs {other:?})")]
    DebateMismatch { gold: String, other: String },
    #[error("the sets share no annotated units")]
    EmptyIntersection,
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error("unknown format {0:?} (expected md, csv or json)")]
    UnknownFormat(String),
    #[error(transparent)]
    Annotation(#[from] AnnotationError),
}

/// Rows are gold primary tags, columns the other set's primary tags.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    labels: Vec<TagCode>,
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    /// Builds a matrix from (gold, other) pairs. Labels are the sorted union of
    /// observed codes.
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a TagCode, &'a TagCode)> + Clone) -> Self {
        let labels: Vec<TagCode> = pairs
            .clone()
            .into_iter()
            .flat_map(|(g, o)| [g.clone(), o.clone()])
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let mut counts = vec![vec![0u64; labels.len()]; labels.len()];
        let idx = |t: &TagCode| labels.binary_search(t).expect("label present");
        for (g, o) in pairs {
            counts[idx(g)][idx(o)] += 1;
        }
        ConfusionMatrix { labels, counts }
    }

    /// Square count grid over `labels`.
    pub fn from_counts(labels: Vec<TagCode>, counts: Vec<Vec<u64>>) -> Option<Self> {
        let square = counts.len() == labels.len() && counts.iter().all(|r| r.len() == labels.len());
        square.then_some(ConfusionMatrix { labels, counts })
    }

    pub fn labels(&self) -> &[TagCode] {
        &self.labels
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn get(&self, gold: &TagCode, other: &TagCode) -> u64 {
        match (self.labels.binary_search(gold), self.labels.binary_search(other)) {
            (Ok(g), Ok(o)) => self.counts[g][o],
            _ => 0,
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn diagonal(&self) -> u64 {
        (0..self.labels.len()).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_totals(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn col_totals(&self) -> Vec<u64> {
        (0..self.labels.len()).map(|j| self.counts.iter().map(|r| r[j]).sum()).collect()
    }

    /// Off-diagonal cells, largest first, ties by (gold, other) code.
    pub fn top_confusions(&self, n: usize) -> Vec<(&TagCode, &TagCode, u64)> {
        let mut cells: Vec<_> = (0..self.labels.len())
            .flat_map(|i| (0..self.labels.len()).map(move |j| (i, j)))
            .filter(|&(i, j)| i != j && self.counts[i][j] > 0)
            .map(|(i, j)| (&self.labels[i], &self.labels[j], self.counts[i][j]))
            .collect();
        cells.sort_by(|a, b| b.2.cmp(&a.2).then_with(|| a.0.cmp(b.0)).then_with(|| a.1.cmp(b.1)));
        cells.truncate(n);
        cells
    }
}

/// Cohen's kappa. Returns 1.0 when expected agreement is already total.
pub fn cohen_kappa(matrix: &ConfusionMatrix) -> Result<f64, AgreementError> {
    let n = matrix.total() as u128;
    if n == 0 {
        return Err(AgreementError::EmptyMatrix);
    }
    let diag = matrix.diagonal() as u128;
    let chance: u128 = matrix.row_totals().iter().zip(matrix.col_totals()).map(|(&r, c)| r as u128 * c as u128).sum();
    let denom = n * n - chance;
    if denom == 0 {
        return Ok(1.0);
    }
    // (p_o - p_e) / (1 - p_e), scaled by n^2
    let num = (n * diag) as f64 - chance as f64;
    Ok(num / denom as f64)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Discrepancy {
    pub unit_id: UnitId,
    pub gold_primary: TagCode,
    pub other_primary: TagCode,
    pub window: ContextWindow,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub gold_set_id: String,
    pub other_set_id: String,
    pub debate_id: String,
    pub compared_units: usize,
    pub exact_matches: usize,
    pub exact_match_rate: f64,
    pub overlap_rate: f64,
    pub kappa: f64,
    pub confusion: ConfusionMatrix,
    pub discrepancies: Vec<Discrepancy>,
}

pub fn compare(
    gold: &AnnotationSet,
    other: &AnnotationSet,
    corpus: &Corpus,
) -> Result<ComparisonReport, AgreementError> {
    if gold.debate_id() != other.debate_id() {
        return Err(AgreementError::DebateMismatch { gold: gold.debate_id().into(), other: other.debate_id().into() });
    }
    if gold.debate_id() != corpus.debate_id() {
        return Err(AnnotationError::DebateMismatch {
            set: gold.debate_id().into(),
            corpus: corpus.debate_id().into(),
        }
        .into());
    }
    let common: Vec<_> = gold.iter().filter_map(|g| other.get(&g.unit_id).map(|o| (g, o))).collect();
    if common.is_empty() {
        return Err(AgreementError::EmptyIntersection);
    }
    let confusion = ConfusionMatrix::from_pairs(common.iter().map(|(g, o)| (&g.primary_tag, &o.primary_tag)));
    let mut overlaps = 0;
    let mut discrepancies = Vec::new();
    for (g, o) in &common {
        if g.all_tags().any(|t| o.all_tags().any(|u| u == t)) {
            overlaps += 1;
        }
        if g.primary_tag != o.primary_tag {
            discrepancies.push(Discrepancy {
                unit_id: g.unit_id.clone(),
                gold_primary: g.primary_tag.clone(),
                other_primary: o.primary_tag.clone(),
                window: context_window(corpus, &g.unit_id, 1)?,
                note: String::new(),
            });
        }
    }
    let n = common.len();
    let exact_matches = confusion.diagonal() as usize;
    Ok(ComparisonReport {
        gold_set_id: gold.set_id().into(),
        other_set_id: other.set_id().into(),
        debate_id: gold.debate_id().into(),
        compared_units: n,
        exact_matches,
        exact_match_rate: exact_matches as f64 / n as f64,
        overlap_rate: overlaps as f64 / n as f64,
        kappa: cohen_kappa(&confusion)?,
        confusion,
        discrepancies,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Md,
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = AgreementError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "md" | "markdown" => Ok(ReportFormat::Md),
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            _ => Err(AgreementError::UnknownFormat(s.to_string())),
        }
    }
}

/// Discrepancies shown in markdown reports unless asked otherwise.
pub const DEFAULT_SHOWN_DISCREPANCIES: usize = 20;

fn pct(x: f64) -> String {
    format!("{:.1}%", x * 100.0)
}

pub fn render_comparison(report: &ComparisonReport, format: ReportFormat, max_discrepancies: usize) -> String {
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("report serialises");
            s.push('\n');
            s
        }
        ReportFormat::Csv => render_csv(&report.confusion),
        ReportFormat::Md => render_md(report, max_discrepancies),
    }
}

fn render_csv(m: &ConfusionMatrix) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["gold\\other".to_string()];
    header.extend(m.labels().iter().map(|l| l.to_string()));
    w.write_record(&header).expect("write to vec");
    for (label, row) in m.labels().iter().zip(m.counts()) {
        let mut rec = vec![label.to_string()];
        rec.extend(row.iter().map(|c| c.to_string()));
        w.write_record(&rec).expect("write to vec");
    }
    String::from_utf8(w.into_inner().expect("flush to vec")).expect("utf8")
}

fn render_md(r: &ComparisonReport, max_discrepancies: usize) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# Agreement: {} vs {}\n", r.gold_set_id, r.other_set_id);
    let _ = writeln!(out, "- debate: {}", r.debate_id);
    let _ = writeln!(out, "- compared units: {}", r.compared_units);
    let _ = writeln!(out, "- exact match: {} ({} of {})", pct(r.exact_match_rate), r.exact_matches, r.compared_units);
    let _ = writeln!(out, "- tag overlap: {}", pct(r.overlap_rate));
    let _ = writeln!(out, "- kappa: {:.4}", r.kappa);

    let top = r.confusion.top_confusions(10);
    if !top.is_empty() {
        out.push_str("\n## Top confusions\n\n| gold | other | count |\n|---|---|---|\n");
        for (g, o, c) in top {
            let _ = writeln!(out, "| {g} | {o} | {c} |");
        }
    }

    if !r.discrepancies.is_empty() {
        let shown = r.discrepancies.len().min(max_discrepancies);
        let _ = writeln!(out, "\n## Discrepancies ({shown} of {})", r.discrepancies.len());
        for d in &r.discrepancies[..shown] {
            let _ = writeln!(out, "\n### {}: {} vs {}\n", d.unit_id, d.gold_primary, d.other_primary);
            for u in &d.window.before {
                let _ = writeln!(out, "> Previous ({}): {}", u.speaker, u.text);
            }
            let _ = writeln!(out, "> **Target ({}): {}**", d.window.target.speaker, d.window.target.text);
            for u in &d.window.after {
                let _ = writeln!(out, "> Next ({}): {}", u.speaker, u.text);
            }
            if !d.note.is_empty() {
                let _ = writeln!(out, "\nnote: {}", d.note);
            }
        }
    }
    out
}
