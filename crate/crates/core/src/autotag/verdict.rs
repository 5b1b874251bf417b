use serde::Serialize;

use crate::corpus::UnitId;
use crate::schema::{TagCode, TagRegistry};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum VerdictError {
    #[error("response has no TAG line")]
    NoTagLine,
    #[error("response names unknown tag {0:?}")]
    UnknownTag(String),
}

impl VerdictError {
    pub fn kind(&self) -> &'static str {
        match self {
            VerdictError::NoTagLine => "no_tag_line",
            VerdictError::UnknownTag(_) => "unknown_tag",
        }
    }
}

/// Tags extracted from one model response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Verdict {
    pub primary_tag: TagCode,
    pub secondary_tags: Vec<TagCode>,
    pub rationale: Option<String>,
    pub raw_response: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TaggerVerdict {
    pub unit_id: UnitId,
    #[serde(flatten)]
    pub verdict: Verdict,
}

fn strip_markup(line: &str) -> &str {
    line.trim().trim_matches(|c: char| c == '*' || c == '`' || c == '_' || c == '#').trim()
}

fn field<'a>(line: &'a str, names: &[&str]) -> Option<&'a str> {
    let line = strip_markup(line);
    let (key, value) = line.split_once(':')?;
    let key = strip_markup(key);
    names.iter().any(|n| key.eq_ignore_ascii_case(n)).then(|| value.trim().trim_start_matches(['*', '`']).trim())
}

/// Renders tags in the response grammar.
pub fn render_verdict(primary: &TagCode, secondary: &[TagCode], rationale: Option<&str>) -> String {
    let mut out = String::from("TAG: ");
    out.push_str(primary.as_str());
    for t in secondary {
        out.push_str(", ");
        out.push_str(t.as_str());
    }
    if let Some(r) = rationale {
        out.push_str("\nREASON: ");
        out.push_str(&r.replace('\n', " "));
    }
    out
}

/// Extracts the final `TAG: <code>[, <code>...]` line and optional
/// `REASON: <text>` line. The first code is primary.
///
/// Without a TAG line, falls back to the last registered code written in
/// uppercase on the last non-empty line.
pub fn parse_verdict(raw_response: &str, registry: &TagRegistry) -> Result<Verdict, VerdictError> {
    let tag_line = raw_response.lines().rev().find_map(|l| field(l, &["TAG", "TAGS"]));
    let rationale = raw_response
        .lines()
        .rev()
        .find_map(|l| field(l, &["REASON", "REASONING", "RATIONALE"]))
        .filter(|r| !r.is_empty())
        .map(str::to_string);

    let codes: Vec<TagCode> = match tag_line {
        Some(list) => {
            let mut codes = Vec::new();
            for token in list.split(',') {
                let token = token.trim().trim_matches(|c: char| matches!(c, '*' | '`' | '.' | '"' | '\'' | '[' | ']'));
                if token.is_empty() {
                    continue;
                }
                let def = registry.resolve(token).map_err(|_| VerdictError::UnknownTag(token.to_string()))?;
                codes.push(def.code.clone());
            }
            codes
        }
        None => fallback_code(raw_response, registry).into_iter().collect(),
    };

    let mut iter = codes.into_iter();
    let primary_tag = iter.next().ok_or(VerdictError::NoTagLine)?;
    let mut secondary_tags: Vec<TagCode> = Vec::new();
    for code in iter {
        if code != primary_tag && !secondary_tags.contains(&code) {
            secondary_tags.push(code);
        }
    }
    Ok(Verdict { primary_tag, secondary_tags, rationale, raw_response: raw_response.to_string() })
}

fn fallback_code(raw: &str, registry: &TagRegistry) -> Option<TagCode> {
    let last = raw.lines().rev().find(|l| !l.trim().is_empty())?;
    last.split(|c: char| !(c.is_ascii_alphanumeric() || c == '_')).rev().filter(|tok| !tok.is_empty()).find_map(|tok| {
        let code = TagCode::parse(tok).ok()?;
        (code.as_str() == tok && registry.contains(&code)).then_some(code)
    })
}
