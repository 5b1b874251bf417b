use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{stats, Corpus, CorpusError, CorpusStats, SpeechUnit, Turn, UnitId};
use crate::fsio::write_atomic;

/// On-disk corpus document.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusFile {
    pub debate_id: String,
    #[serde(default)]
    pub source_label: String,
    pub speakers: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub moderators: Vec<String>,
    pub turns: Vec<TurnRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stats: Option<CorpusStats>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TurnRecord {
    pub turn_id: usize,
    pub speaker: String,
    pub units: Vec<UnitRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnitRecord {
    pub unit_id: UnitId,
    pub seq: usize,
    pub text: String,
}

impl From<&Corpus> for CorpusFile {
    fn from(c: &Corpus) -> Self {
        CorpusFile {
            debate_id: c.debate_id().to_string(),
            source_label: c.source_label().to_string(),
            speakers: c.speakers().to_vec(),
            moderators: c.moderators().to_vec(),
            turns: c
                .turns()
                .iter()
                .map(|t| TurnRecord {
                    turn_id: t.turn_id,
                    speaker: t.speaker.clone(),
                    units: t
                        .units
                        .iter()
                        .map(|u| UnitRecord { unit_id: u.unit_id.clone(), seq: u.seq, text: u.text.clone() })
                        .collect(),
                })
                .collect(),
            stats: Some(stats(c)),
        }
    }
}

impl CorpusFile {
    pub fn into_corpus(self) -> Result<Corpus, CorpusError> {
        let turns = self
            .turns
            .into_iter()
            .map(|t| Turn {
                turn_id: t.turn_id,
                speaker: t.speaker,
                units: t
                    .units
                    .into_iter()
                    .map(|u| SpeechUnit { unit_id: u.unit_id, seq: u.seq, turn_id: t.turn_id, text: u.text })
                    .collect(),
            })
            .collect();
        let corpus = Corpus::from_parts(self.debate_id, self.source_label, self.speakers, self.moderators, turns)?;
        if let Some(recorded) = self.stats {
            if recorded != stats(&corpus) {
                return Err(CorpusError::Invalid("recorded stats do not match corpus content".into()));
            }
        }
        Ok(corpus)
    }
}

pub fn save_corpus(corpus: &Corpus, path: &Path) -> Result<(), CorpusError> {
    let mut json = serde_json::to_string_pretty(&CorpusFile::from(corpus)).expect("corpus serialises");
    json.push('\n');
    write_atomic(path, json.as_bytes()).map_err(|source| CorpusError::IoFailure { path: path.to_path_buf(), source })
}

pub fn load_corpus(path: &Path) -> Result<Corpus, CorpusError> {
    let text =
        std::fs::read_to_string(path).map_err(|source| CorpusError::IoFailure { path: path.to_path_buf(), source })?;
    let malformed = |detail: String| CorpusError::MalformedCorpusFile { path: path.to_path_buf(), detail };
    let file: CorpusFile = serde_json::from_str(&text).map_err(|e| malformed(e.to_string()))?;
    file.into_corpus().map_err(|e| match e {
        CorpusError::Invalid(detail) | CorpusError::InvalidUnitId(detail) => malformed(detail),
        CorpusError::InvalidDebateId(id) => malformed(format!("invalid debate id {id:?}")),
        other => other,
    })
}
