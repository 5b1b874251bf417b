use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::AutotagError;
use crate::annotation::{ContextWindow, WindowUnit};
use crate::schema::{Layer, TagRegistry};

const BUNDLED_TEMPLATE: &str = include_str!("../../../../schemas/prompt_default.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GlossaryStyle {
    /// Code, name and description for every tag.
    Full,
    /// Codes only.
    CodesOnly,
}

/// Versioned chain-of-thought prompt template.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptTemplate {
    pub id: String,
    pub version: String,
    pub glossary_style: GlossaryStyle,
    pub system_preamble: String,
    pub reasoning_instruction: String,
    pub output_grammar: String,
}

impl PromptTemplate {
    pub fn bundled() -> Self {
        Self::from_toml(BUNDLED_TEMPLATE).expect("bundled template is valid")
    }

    pub fn from_toml(src: &str) -> Result<Self, AutotagError> {
        let t: PromptTemplate = toml::from_str(src).map_err(|e| AutotagError::Config(e.to_string()))?;
        if !t.output_grammar.contains("TAG:") {
            return Err(AutotagError::Config("output_grammar must describe the `TAG:` line".into()));
        }
        Ok(t)
    }

    pub fn with_style(mut self, style: GlossaryStyle) -> Self {
        self.glossary_style = style;
        self
    }
}

fn dialogue_line(out: &mut String, label: &str, unit: &WindowUnit) {
    let _ = writeln!(out, "{label} ({}): {}", unit.speaker, unit.text);
}

/// Renders the prompt for one context window. Unit texts are embedded verbatim.
pub fn build_prompt(template: &PromptTemplate, registry: &TagRegistry, window: &ContextWindow) -> String {
    let mut out = String::new();
    out.push_str(template.system_preamble.trim());
    out.push_str("\n\nTag set:\n");
    for layer in Layer::ALL {
        let tags = registry.tags_in_layer(layer);
        if tags.is_empty() {
            continue;
        }
        match template.glossary_style {
            GlossaryStyle::Full => {
                let _ = writeln!(out, "[{layer}]");
                for t in tags {
                    let _ = writeln!(out, "- {} ({}): {}", t.code, t.name, t.description);
                }
            }
            GlossaryStyle::CodesOnly => {
                let codes: Vec<_> = tags.iter().map(|t| t.code.as_str()).collect();
                let _ = writeln!(out, "[{layer}] {}", codes.join(", "));
            }
        }
    }
    out.push_str("\nDialogue:\n");
    for u in &window.before {
        dialogue_line(&mut out, "Previous", u);
    }
    dialogue_line(&mut out, "Target", &window.target);
    for u in &window.after {
        dialogue_line(&mut out, "Next", u);
    }
    out.push('\n');
    out.push_str(template.reasoning_instruction.trim());
    out.push_str("\n\n");
    out.push_str(template.output_grammar.trim());
    out.push('\n');
    out
}
