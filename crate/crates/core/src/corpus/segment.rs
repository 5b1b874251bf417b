use std::collections::HashSet;
use std::sync::OnceLock;

use regex::Regex;

use super::{canonical_speaker, Corpus, CorpusError, SpeechUnit, Turn, UnitId};

/// A speaker turn before sentence segmentation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedTurn {
    pub turn_id: usize,
    pub speaker: String,
    /// Whitespace-normalised text of all lines in the turn.
    pub text: String,
}

fn speaker_prefix() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*([A-Z][A-Z0-9.'’\-]*(?:[ \t]+[A-Z][A-Z0-9.'’\-]*){0,3})[ \t]*:(.*)$").unwrap())
}

fn normalize_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Groups cleaned lines into speaker turns.
///
/// A line starting with an uppercase name of at most four words and a colon
/// opens a new turn; other non-blank lines continue the current turn. Turns
/// left without any text are dropped. `OrphanLine` reports the 1-based
/// position in `lines`.
pub fn parse_turns<S: AsRef<str>>(lines: &[S]) -> Result<Vec<ParsedTurn>, CorpusError> {
    let mut turns: Vec<(String, Vec<String>)> = Vec::new();
    for (i, line) in lines.iter().enumerate() {
        let line = line.as_ref();
        if line.trim().is_empty() {
            continue;
        }
        if let Some(caps) = speaker_prefix().captures(line) {
            let rest = caps[2].trim();
            let mut parts = Vec::new();
            if !rest.is_empty() {
                parts.push(rest.to_string());
            }
            turns.push((canonical_speaker(&caps[1]), parts));
        } else {
            match turns.last_mut() {
                Some((_, parts)) => parts.push(line.trim().to_string()),
                None => return Err(CorpusError::OrphanLine { line_no: i + 1, text: line.to_string() }),
            }
        }
    }
    Ok(turns
        .into_iter()
        .filter(|(_, parts)| !parts.is_empty())
        .enumerate()
        .map(|(turn_id, (speaker, parts))| ParsedTurn { turn_id, speaker, text: normalize_ws(&parts.join(" ")) })
        .collect())
}

/// Sentence-level splitter with an abbreviation stop-list.
///
/// A boundary is a run of `.`, `!` or `?` (plus any closing quotes or
/// brackets) followed by whitespace and an uppercase letter, digit or
/// opening quote. A lone `.` ending a stop-listed token or a single-letter
/// initial does not split.
#[derive(Debug, Clone)]
pub struct Segmenter {
    abbreviations: HashSet<String>,
}

pub const DEFAULT_ABBREVIATIONS: &[&str] = &[
    "U.S.", "U.K.", "U.N.", "D.C.", "Mr.", "Mrs.", "Ms.", "Dr.", "Jr.", "Sr.", "St.", "Gov.", "Sen.", "Rep.", "Gen.",
    "Lt.", "Col.", "Sgt.", "Prof.", "Rev.", "Hon.", "vs.", "etc.", "No.", "Jan.", "Feb.", "Aug.", "Sept.", "Oct.",
    "Nov.", "Dec.", "a.m.", "p.m.",
];

impl Default for Segmenter {
    fn default() -> Self {
        Segmenter { abbreviations: DEFAULT_ABBREVIATIONS.iter().map(|s| s.to_string()).collect() }
    }
}

const TERMINAL: [char; 3] = ['.', '!', '?'];
const CLOSERS: [char; 6] = ['"', '\'', '”', '’', ')', ']'];
const OPENERS: [char; 4] = ['"', '\'', '“', '‘'];

impl Segmenter {
    pub fn with_abbreviations<I, S>(mut self, extra: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.abbreviations.extend(extra.into_iter().map(Into::into));
        self
    }

    fn is_abbreviation(&self, token: &str) -> bool {
        let token = token.trim_start_matches(|c| OPENERS.contains(&c) || c == '(');
        if self.abbreviations.contains(token) {
            return true;
        }
        let mut chars = token.chars();
        matches!((chars.next(), chars.next(), chars.next()), (Some(c), Some('.'), None) if c.is_uppercase())
    }

    /// Splits whitespace-normalised text into sentences.
    pub fn split<'t>(&self, text: &'t str) -> Vec<&'t str> {
        let chars: Vec<(usize, char)> = text.char_indices().collect();
        let mut out = Vec::new();
        let mut start = 0usize;
        let mut i = 0usize;
        while i < chars.len() {
            let (pos, c) = chars[i];
            if !TERMINAL.contains(&c) {
                i += 1;
                continue;
            }
            let run_start = i;
            let mut j = i;
            while j < chars.len() && TERMINAL.contains(&chars[j].1) {
                j += 1;
            }
            let single_period = j - run_start == 1 && c == '.';
            while j < chars.len() && CLOSERS.contains(&chars[j].1) {
                j += 1;
            }
            let mut k = j;
            while k < chars.len() && chars[k].1.is_whitespace() {
                k += 1;
            }
            let boundary = k > j
                && k < chars.len()
                && (chars[k].1.is_uppercase() || chars[k].1.is_ascii_digit() || OPENERS.contains(&chars[k].1));
            if boundary {
                let token_start = text[..pos].rfind(char::is_whitespace).map_or(0, |p| p + 1);
                let token = &text[token_start..pos + c.len_utf8()];
                if !(single_period && self.is_abbreviation(token)) {
                    let end = chars[j].0;
                    let sentence = text[start..end].trim();
                    if !sentence.is_empty() {
                        out.push(sentence);
                    }
                    start = chars[k].0;
                }
            }
            i = j.max(i + 1);
        }
        let tail = text[start..].trim();
        if !tail.is_empty() {
            out.push(tail);
        }
        out
    }
}

/// Splits each turn into sentence-level speech units with global sequence numbers.
pub fn segment(
    debate_id: &str,
    source_label: &str,
    turns: &[ParsedTurn],
    segmenter: &Segmenter,
) -> Result<Corpus, CorpusError> {
    let mut seq = 0usize;
    let mut out = Vec::with_capacity(turns.len());
    for turn in turns {
        let turn_id = out.len();
        let units: Vec<SpeechUnit> = segmenter
            .split(&turn.text)
            .into_iter()
            .map(|text| {
                let unit = SpeechUnit { unit_id: UnitId::new(debate_id, seq), seq, turn_id, text: text.to_string() };
                seq += 1;
                unit
            })
            .collect();
        if units.is_empty() {
            continue;
        }
        out.push(Turn { turn_id, speaker: turn.speaker.clone(), units });
    }
    Corpus::new(debate_id, source_label, out, Vec::new())
}
