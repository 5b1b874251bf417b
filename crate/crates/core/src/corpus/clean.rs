use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{CorpusError, RawTranscript};

const BUNDLED_RULES: &str = include_str!("../../../../schemas/noise_rules.toml");

#[derive(Debug, Clone)]
pub struct NoiseRule {
    pub name: String,
    pub pattern: Regex,
}

/// Ordered, named line patterns; the first match removes a line.
#[derive(Debug, Clone)]
pub struct NoiseRules {
    rules: Vec<NoiseRule>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RulesDoc {
    #[serde(default)]
    rule: Vec<RuleRecord>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleRecord {
    name: String,
    pattern: String,
}

impl NoiseRules {
    /// Stage directions, standalone timestamps and all-caps headers.
    pub fn bundled() -> Self {
        Self::from_toml(BUNDLED_RULES).expect("bundled noise rules are valid")
    }

    pub fn from_toml(src: &str) -> Result<Self, CorpusError> {
        let doc: RulesDoc = toml::from_str(src).map_err(|e| CorpusError::MalformedRules(e.to_string()))?;
        let rules = doc
            .rule
            .into_iter()
            .map(|r| {
                let pattern =
                    Regex::new(&r.pattern).map_err(|e| CorpusError::MalformedRules(format!("rule {}: {e}", r.name)))?;
                Ok(NoiseRule { name: r.name, pattern })
            })
            .collect::<Result<_, CorpusError>>()?;
        Ok(NoiseRules { rules })
    }

    pub fn rules(&self) -> &[NoiseRule] {
        &self.rules
    }

    fn matching(&self, line: &str) -> Option<&NoiseRule> {
        self.rules.iter().find(|r| r.pattern.is_match(line))
    }
}

/// One removed line. `line_no` is 1-based in the input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Removal {
    pub line_no: usize,
    pub rule: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cleaned {
    pub lines: Vec<String>,
    pub removed: Vec<Removal>,
}

/// Drops noise lines. Kept lines are returned unmodified.
pub fn clean(raw: &RawTranscript, rules: &NoiseRules) -> Cleaned {
    clean_lines(&raw.lines, rules)
}

pub(crate) fn clean_lines(lines: &[String], rules: &NoiseRules) -> Cleaned {
    let mut kept = Vec::with_capacity(lines.len());
    let mut removed = Vec::new();
    for (i, line) in lines.iter().enumerate() {
        match rules.matching(line) {
            Some(rule) => removed.push(Removal { line_no: i + 1, rule: rule.name.clone(), text: line.clone() }),
            None => kept.push(line.clone()),
        }
    }
    Cleaned { lines: kept, removed }
}
