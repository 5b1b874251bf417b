use regex::{Regex, RegexBuilder};
use serde::Deserialize;

use super::verdict::Verdict;
use super::AutotagError;
use crate::annotation::ContextWindow;
use crate::schema::{TagCode, TagRegistry};

const BUNDLED_RULES: &str = include_str!("../../../../schemas/mock_rules.toml");

#[derive(Debug, Clone)]
pub struct Rule {
    pub name: String,
    pub target: Option<Regex>,
    pub previous: Option<Regex>,
    pub tag: TagCode,
}

impl Rule {
    fn matches(&self, window: &ContextWindow) -> bool {
        let target_ok = self.target.as_ref().map_or(true, |re| re.is_match(&window.target.text));
        let previous_ok = match &self.previous {
            None => true,
            Some(re) => window.previous().is_some_and(|p| re.is_match(&p.text)),
        };
        target_ok && previous_ok
    }
}

/// Ordered pattern rules for the offline tagger; the first match wins.
#[derive(Debug, Clone)]
pub struct RuleTable {
    rules: Vec<Rule>,
    default_tag: TagCode,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RulesDoc {
    default_tag: String,
    #[serde(default)]
    rule: Vec<RuleRecord>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleRecord {
    name: String,
    target: Option<String>,
    previous: Option<String>,
    tag: String,
}

fn compile(rule: &str, pattern: &str) -> Result<Regex, AutotagError> {
    RegexBuilder::new(pattern)
        .case_insensitive(true)
        .build()
        .map_err(|e| AutotagError::Config(format!("rule {rule}: {e}")))
}

impl RuleTable {
    pub fn bundled(registry: &TagRegistry) -> Result<Self, AutotagError> {
        Self::from_toml(BUNDLED_RULES, registry)
    }

    pub fn from_toml(src: &str, registry: &TagRegistry) -> Result<Self, AutotagError> {
        let doc: RulesDoc = toml::from_str(src).map_err(|e| AutotagError::Config(e.to_string()))?;
        let resolve = |raw: &str| {
            registry
                .resolve(raw)
                .map(|d| d.code.clone())
                .map_err(|_| AutotagError::Config(format!("rule table names unknown tag {raw:?}")))
        };
        let default_tag = resolve(&doc.default_tag)?;
        let mut rules = Vec::with_capacity(doc.rule.len());
        for r in doc.rule {
            if r.target.is_none() && r.previous.is_none() {
                return Err(AutotagError::Config(format!("rule {} has no pattern", r.name)));
            }
            rules.push(Rule {
                target: r.target.as_deref().map(|p| compile(&r.name, p)).transpose()?,
                previous: r.previous.as_deref().map(|p| compile(&r.name, p)).transpose()?,
                tag: resolve(&r.tag)?,
                name: r.name,
            });
        }
        Ok(RuleTable { rules, default_tag })
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn default_tag(&self) -> &TagCode {
        &self.default_tag
    }
}

/// Deterministic offline verdict for one window.
pub fn mock_tag(rules: &RuleTable, window: &ContextWindow) -> Verdict {
    let (tag, rationale) = match rules.rules.iter().find(|r| r.matches(window)) {
        Some(r) => (r.tag.clone(), format!("matched rule {}", r.name)),
        None => (rules.default_tag.clone(), "no rule matched; default tag".to_string()),
    };
    let raw_response = super::verdict::render_verdict(&tag, &[], Some(&rationale));
    Verdict { primary_tag: tag, secondary_tags: Vec::new(), rationale: Some(rationale), raw_response }
}
