//! Debate transcripts: cleaning, speaker turns, speech-unit segmentation and
//! corpus statistics.
//!
//! The pipeline is `RawTranscript -> clean -> parse_turns -> segment -> Corpus`.
//! Every stage is a pure function of its input.

mod clean;
mod io;
mod segment;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub use clean::{clean, Cleaned, NoiseRule, NoiseRules, Removal};
pub use io::{load_corpus, save_corpus, CorpusFile};
pub use segment::{parse_turns, segment, ParsedTurn, Segmenter};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line_no}: content before any speaker prefix: {text:?}")]
    OrphanLine { line_no: usize, text: String },
    #[error("invalid debate id {0:?}: use letters, digits, '.', '_' or '-'")]
    InvalidDebateId(String),
    #[error("invalid unit id {0:?}")]
    InvalidUnitId(String),
    #[error("invalid corpus: {0}")]
    Invalid(String),
    #[error("malformed corpus file {path}: {detail}")]
    MalformedCorpusFile { path: PathBuf, detail: String },
    #[error("malformed noise rules: {0}")]
    MalformedRules(String),
    #[error("i/o failure on {path}: {source}")]
    IoFailure {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub fn validate_debate_id(id: &str) -> Result<(), CorpusError> {
    let ok = !id.is_empty()
        && id.bytes().all(|b| b.is_ascii_alphanumeric() || matches!(b, b'.' | b'_' | b'-'))
        && !id.starts_with('.');
    if ok {
        Ok(())
    } else {
        Err(CorpusError::InvalidDebateId(id.to_string()))
    }
}

/// Globally unique speech-unit id, rendered `<debate_id>#<seq>` with the
/// sequence number zero-padded to four digits (`tb2024#0012`).
///
/// Ordering is by debate id, then numeric sequence.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct UnitId {
    debate_id: String,
    seq: usize,
}

impl UnitId {
    pub fn new(debate_id: impl Into<String>, seq: usize) -> Self {
        UnitId { debate_id: debate_id.into(), seq }
    }

    pub fn debate_id(&self) -> &str {
        &self.debate_id
    }

    pub fn seq(&self) -> usize {
        self.seq
    }
}

impl fmt::Display for UnitId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{:04}", self.debate_id, self.seq)
    }
}

impl FromStr for UnitId {
    type Err = CorpusError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || CorpusError::InvalidUnitId(s.to_string());
        let (debate, seq) = s.rsplit_once('#').ok_or_else(bad)?;
        if debate.is_empty() || seq.is_empty() || !seq.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        Ok(UnitId::new(debate, seq.parse().map_err(|_| bad())?))
    }
}

impl Serialize for UnitId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for UnitId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// A transcript as supplied by the user, before any cleaning.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawTranscript {
    pub debate_id: String,
    pub source_label: String,
    /// Input lines without their terminators, otherwise untouched.
    pub lines: Vec<String>,
}

impl RawTranscript {
    pub fn from_text(debate_id: &str, source_label: &str, text: &str) -> Result<Self, CorpusError> {
        validate_debate_id(debate_id)?;
        Ok(RawTranscript {
            debate_id: debate_id.to_string(),
            source_label: source_label.to_string(),
            lines: text.lines().map(str::to_string).collect(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SpeechUnit {
    pub unit_id: UnitId,
    pub seq: usize,
    #[serde(skip)]
    pub turn_id: usize,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Turn {
    pub turn_id: usize,
    pub speaker: String,
    pub units: Vec<SpeechUnit>,
}

impl Turn {
    /// Unit texts joined with single spaces.
    pub fn text(&self) -> String {
        self.units.iter().map(|u| u.text.as_str()).collect::<Vec<_>>().join(" ")
    }
}

/// A unit together with the speaker of its turn.
#[derive(Debug, Clone, Copy)]
pub struct UnitRef<'a> {
    pub unit: &'a SpeechUnit,
    pub speaker: &'a str,
}

/// A segmented, speaker-attributed debate transcript.
#[derive(Debug, Clone)]
pub struct Corpus {
    debate_id: String,
    source_label: String,
    speakers: Vec<String>,
    moderators: Vec<String>,
    turns: Vec<Turn>,
    // seq -> (turn index, unit index)
    index: Vec<(usize, usize)>,
}

impl PartialEq for Corpus {
    fn eq(&self, other: &Self) -> bool {
        self.debate_id == other.debate_id
            && self.source_label == other.source_label
            && self.speakers == other.speakers
            && self.moderators == other.moderators
            && self.turns == other.turns
    }
}

impl Eq for Corpus {}

impl Corpus {
    /// Builds a corpus whose speaker list is the order of first appearance.
    pub fn new(
        debate_id: impl Into<String>,
        source_label: impl Into<String>,
        turns: Vec<Turn>,
        moderators: Vec<String>,
    ) -> Result<Self, CorpusError> {
        let mut speakers: Vec<String> = Vec::new();
        for t in &turns {
            if !speakers.contains(&t.speaker) {
                speakers.push(t.speaker.clone());
            }
        }
        Self::from_parts(debate_id.into(), source_label.into(), speakers, moderators, turns)
    }

    /// Builds a corpus from explicit parts, checking every structural invariant.
    pub fn from_parts(
        debate_id: String,
        source_label: String,
        speakers: Vec<String>,
        moderators: Vec<String>,
        turns: Vec<Turn>,
    ) -> Result<Self, CorpusError> {
        validate_debate_id(&debate_id)?;
        let invalid = |msg: String| Err(CorpusError::Invalid(msg));
        let speaker_set: HashSet<&str> = speakers.iter().map(String::as_str).collect();
        if speaker_set.len() != speakers.len() {
            return invalid("speaker list contains duplicates".into());
        }
        let mut index = Vec::new();
        let mut seen_ids = HashSet::new();
        for (ti, turn) in turns.iter().enumerate() {
            if turn.turn_id != ti {
                return invalid(format!("turn {} has turn_id {}", ti, turn.turn_id));
            }
            if !speaker_set.contains(turn.speaker.as_str()) {
                return invalid(format!("turn {} speaker {:?} not in speaker list", ti, turn.speaker));
            }
            if turn.units.is_empty() {
                return invalid(format!("turn {} has no units", ti));
            }
            for (ui, unit) in turn.units.iter().enumerate() {
                let expected_seq = index.len();
                if !seen_ids.insert(unit.unit_id.clone()) {
                    return invalid(format!("duplicate unit_id {}", unit.unit_id));
                }
                if unit.seq != expected_seq {
                    return invalid(format!("unit {} has seq {}, expected {}", unit.unit_id, unit.seq, expected_seq));
                }
                if unit.unit_id != UnitId::new(debate_id.as_str(), unit.seq) {
                    return invalid(format!("unit_id {} does not match {}#{:04}", unit.unit_id, debate_id, unit.seq));
                }
                if unit.turn_id != ti {
                    return invalid(format!(
                        "unit {} claims turn {}, nested in turn {}",
                        unit.unit_id, unit.turn_id, ti
                    ));
                }
                if unit.text.trim().is_empty() {
                    return invalid(format!("unit {} has empty text", unit.unit_id));
                }
                index.push((ti, ui));
            }
        }
        for m in &moderators {
            if !speaker_set.contains(m.as_str()) {
                return invalid(format!("moderator {m:?} is not a speaker"));
            }
        }
        Ok(Corpus { debate_id, source_label, speakers, moderators, turns, index })
    }

    pub fn debate_id(&self) -> &str {
        &self.debate_id
    }

    pub fn source_label(&self) -> &str {
        &self.source_label
    }

    pub fn speakers(&self) -> &[String] {
        &self.speakers
    }

    pub fn moderators(&self) -> &[String] {
        &self.moderators
    }

    pub fn is_moderator(&self, speaker: &str) -> bool {
        self.moderators.iter().any(|m| m == speaker)
    }

    pub fn turns(&self) -> &[Turn] {
        &self.turns
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn by_seq(&self, seq: usize) -> Option<UnitRef<'_>> {
        let &(ti, ui) = self.index.get(seq)?;
        let turn = &self.turns[ti];
        Some(UnitRef { unit: &turn.units[ui], speaker: &turn.speaker })
    }

    pub fn unit(&self, id: &UnitId) -> Option<UnitRef<'_>> {
        if id.debate_id() != self.debate_id {
            return None;
        }
        self.by_seq(id.seq())
    }

    pub fn contains(&self, id: &UnitId) -> bool {
        self.unit(id).is_some()
    }

    /// All units in sequence order.
    pub fn units(&self) -> impl Iterator<Item = UnitRef<'_>> + '_ {
        self.turns.iter().flat_map(|t| t.units.iter().map(move |u| UnitRef { unit: u, speaker: &t.speaker }))
    }

    pub fn stats(&self) -> CorpusStats {
        stats(self)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpeakerStats {
    pub word_count: usize,
    pub unit_count: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub word_count: usize,
    pub sentence_count: usize,
    pub unit_count: usize,
    pub per_speaker: BTreeMap<String, SpeakerStats>,
}

/// Word count is whitespace tokenisation over unit texts; one unit counts as
/// one sentence.
pub fn stats(corpus: &Corpus) -> CorpusStats {
    let mut per_speaker: BTreeMap<String, SpeakerStats> =
        corpus.speakers().iter().map(|s| (s.clone(), SpeakerStats::default())).collect();
    let mut out = CorpusStats::default();
    for u in corpus.units() {
        let words = u.unit.text.split_whitespace().count();
        let entry = per_speaker.entry(u.speaker.to_string()).or_default();
        entry.word_count += words;
        entry.unit_count += 1;
        out.word_count += words;
        out.unit_count += 1;
    }
    out.sentence_count = out.unit_count;
    out.per_speaker = per_speaker;
    out
}

/// Runs the full ingestion pipeline over a raw transcript.
pub fn ingest(
    raw: &RawTranscript,
    rules: &NoiseRules,
    segmenter: &Segmenter,
    moderators: &[String],
) -> Result<(Corpus, Vec<Removal>), CorpusError> {
    let cleaned = clean(raw, rules);
    let turns = parse_turns(&cleaned.lines)?;
    let mut corpus = segment(&raw.debate_id, &raw.source_label, &turns, segmenter)?;
    if !moderators.is_empty() {
        let mods: Vec<String> = moderators.iter().map(|m| canonical_speaker(m)).collect();
        corpus = Corpus::from_parts(corpus.debate_id, corpus.source_label, corpus.speakers, mods, corpus.turns)?;
    }
    Ok((corpus, cleaned.removed))
}

pub(crate) fn canonical_speaker(name: &str) -> String {
    name.split_whitespace().map(str::to_uppercase).collect::<Vec<_>>().join(" ")
}

/// Lookup of the speaker for each unit, used by modules that only need ids.
pub fn speaker_map(corpus: &Corpus) -> HashMap<UnitId, String> {
    corpus.units().map(|u| (u.unit.unit_id.clone(), u.speaker.to_string())).collect()
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn mini_corpus() -> Corpus {
        let raw = RawTranscript::from_text(
            "t1",
            "test",
            "TRUMP: That's a lie. You know it's a lie.\nBIDEN: We are\nthe most admired country in the world.\n",
        )
        .unwrap();
        ingest(&raw, &NoiseRules::bundled(), &Segmenter::default(), &[]).unwrap().0
    }

    #[test]
    fn unit_id_format_and_parse() {
        let id = UnitId::new("tb2024", 12);
        assert_eq!(id.to_string(), "tb2024#0012");
        assert_eq!("tb2024#0012".parse::<UnitId>().unwrap(), id);
        assert_eq!("tb2024#12".parse::<UnitId>().unwrap(), id);
        assert_eq!("a#b#3".parse::<UnitId>().unwrap(), UnitId::new("a#b", 3));
        for bad in ["tb2024", "#1", "x#", "x#-1", "x#1a"] {
            assert!(bad.parse::<UnitId>().is_err(), "{bad}");
        }
    }

    #[test]
    fn unit_ids_order_numerically() {
        assert!(UnitId::new("a", 9999) < UnitId::new("a", 10000));
    }

    #[test]
    fn debate_id_validation() {
        assert!(validate_debate_id("tb2024").is_ok());
        for bad in ["", "a/b", "a#b", "..", ".hidden", "a b"] {
            assert!(validate_debate_id(bad).is_err(), "{bad:?}");
        }
    }

    #[test]
    fn empty_corpus_stats_are_zero() {
        let c = Corpus::new("empty", "", vec![], vec![]).unwrap();
        assert_eq!(stats(&c), CorpusStats::default());
    }

    #[test]
    fn pipeline_builds_units_and_stats() {
        let c = mini_corpus();
        assert_eq!(c.speakers(), ["TRUMP", "BIDEN"]);
        assert_eq!(c.len(), 3);
        assert_eq!(c.by_seq(1).unwrap().unit.text, "You know it's a lie.");
        assert_eq!(c.by_seq(2).unwrap().speaker, "BIDEN");
        let s = stats(&c);
        assert_eq!(s.word_count, 3 + 5 + 9);
        assert_eq!(s.sentence_count, 3);
        assert_eq!(s.per_speaker["TRUMP"], SpeakerStats { word_count: 8, unit_count: 2 });
        assert_eq!(s.per_speaker["BIDEN"], SpeakerStats { word_count: 9, unit_count: 1 });
    }

    #[test]
    fn moderators_must_be_speakers() {
        let raw = RawTranscript::from_text("t", "", "TAPPER: Welcome.\nTRUMP: Thanks.").unwrap();
        let (c, _) = ingest(&raw, &NoiseRules::bundled(), &Segmenter::default(), &["tapper".into()]).unwrap();
        assert!(c.is_moderator("TAPPER"));
        let err = ingest(&raw, &NoiseRules::bundled(), &Segmenter::default(), &["BASH".into()]);
        assert!(matches!(err, Err(CorpusError::Invalid(_))));
    }

    #[test]
    fn from_parts_rejects_broken_invariants() {
        let c = mini_corpus();
        let mut turns = c.turns().to_vec();
        turns[0].units[1].seq = 5;
        assert!(Corpus::new("t1", "", turns, vec![]).is_err());

        let mut turns = c.turns().to_vec();
        turns[1].units[0].unit_id = UnitId::new("t1", 0);
        assert!(Corpus::new("t1", "", turns, vec![]).is_err());

        let mut turns = c.turns().to_vec();
        turns[1].units.clear();
        assert!(Corpus::new("t1", "", turns, vec![]).is_err());
    }

    #[test]
    fn unit_lookup_rejects_other_debates() {
        let c = mini_corpus();
        assert!(c.contains(&UnitId::new("t1", 2)));
        assert!(!c.contains(&UnitId::new("t1", 3)));
        assert!(!c.contains(&UnitId::new("other", 0)));
    }
}
