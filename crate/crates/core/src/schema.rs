//! Layered tag vocabulary.
//!
//! A [`TagRegistry`] holds every tag an annotation may use, organised in four
//! layers: the Switchboard-style DAMSL core, common political-discourse
//! extensions, the 15 bias-enriched BEADS tags, and analysis tags used when
//! reporting. The defaults are bundled from `schemas/*.toml` and can be
//! overridden by a registry document of the same shape.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

const BUNDLED_DAMSL: &str = include_str!("../../../schemas/damsl_core.toml");
const BUNDLED_BEADS: &str = include_str!("../../../schemas/beads.toml");

/// Version string of the bundled registry.
pub const DEFAULT_REGISTRY_VERSION: &str = "beads-1";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SchemaError {
    #[error("malformed registry config: {0}")]
    MalformedConfig(String),
    #[error("duplicate tag code {0}")]
    DuplicateCode(String),
    #[error("unknown tag {0:?}")]
    UnknownTag(String),
    #[error("unknown layer {0:?}")]
    UnknownLayer(String),
    #[error("unknown category {0:?}")]
    UnknownCategory(String),
    #[error("invalid tag code {0:?}: expected uppercase alphanumerics with at most one internal separator")]
    InvalidCode(String),
}

/// Canonical tag code, e.g. `AEX` or `T_REQ`.
///
/// Canonicalisation trims, uppercases and turns internal whitespace runs into
/// a single underscore, so `" t req "` becomes `T_REQ`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TagCode(String);

impl TagCode {
    pub fn canonicalize(raw: &str) -> String {
        raw.split_whitespace().map(str::to_uppercase).collect::<Vec<_>>().join("_")
    }

    /// Canonicalises `raw` and checks the code shape. Does not consult a registry.
    pub fn parse(raw: &str) -> Result<Self, SchemaError> {
        let canonical = Self::canonicalize(raw);
        if is_valid_code(&canonical) {
            Ok(TagCode(canonical))
        } else {
            Err(SchemaError::InvalidCode(raw.to_string()))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

fn is_valid_code(code: &str) -> bool {
    let mut parts = code.split('_');
    let ok_part = |p: &str| !p.is_empty() && p.bytes().all(|b| b.is_ascii_uppercase() || b.is_ascii_digit());
    match (parts.next(), parts.next(), parts.next()) {
        (Some(a), None, _) => ok_part(a),
        (Some(a), Some(b), None) => ok_part(a) && ok_part(b),
        _ => false,
    }
}

impl fmt::Display for TagCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl AsRef<str> for TagCode {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

impl FromStr for TagCode {
    type Err = SchemaError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}

impl Serialize for TagCode {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for TagCode {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(d)?;
        TagCode::parse(&raw).map_err(serde::de::Error::custom)
    }
}

fn squash(s: &str) -> String {
    s.chars().filter(|c| c.is_ascii_alphanumeric()).map(|c| c.to_ascii_lowercase()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Layer {
    DamslCore,
    PoliticalExtension,
    Beads,
    Analysis,
}

impl Layer {
    pub const ALL: [Layer; 4] = [Layer::DamslCore, Layer::PoliticalExtension, Layer::Beads, Layer::Analysis];

    pub fn as_str(self) -> &'static str {
        match self {
            Layer::DamslCore => "damsl_core",
            Layer::PoliticalExtension => "political_extension",
            Layer::Beads => "beads",
            Layer::Analysis => "analysis",
        }
    }
}

impl FromStr for Layer {
    type Err = SchemaError;
    /// Accepts `beads`, `Beads`, `damsl_core`, `DamslCore` and similar spellings.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match squash(s).as_str() {
            "damslcore" | "damsl" => Ok(Layer::DamslCore),
            "politicalextension" | "political" => Ok(Layer::PoliticalExtension),
            "beads" => Ok(Layer::Beads),
            "analysis" => Ok(Layer::Analysis),
            _ => Err(SchemaError::UnknownLayer(s.to_string())),
        }
    }
}

impl<'de> Deserialize<'de> for Layer {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

impl fmt::Display for Layer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    IdeologicalFraming,
    EmotionalPersuasion,
    IdentityFraming,
    InteractiveDynamics,
    ClarificationTurnTaking,
    Structural,
}

impl Category {
    pub fn as_str(self) -> &'static str {
        match self {
            Category::IdeologicalFraming => "ideological_framing",
            Category::EmotionalPersuasion => "emotional_persuasion",
            Category::IdentityFraming => "identity_framing",
            Category::InteractiveDynamics => "interactive_dynamics",
            Category::ClarificationTurnTaking => "clarification_turn_taking",
            Category::Structural => "structural",
        }
    }
}

impl FromStr for Category {
    type Err = SchemaError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match squash(s).as_str() {
            "ideologicalframing" => Ok(Category::IdeologicalFraming),
            "emotionalpersuasion" => Ok(Category::EmotionalPersuasion),
            "identityframing" => Ok(Category::IdentityFraming),
            "interactivedynamics" => Ok(Category::InteractiveDynamics),
            "clarificationturntaking" => Ok(Category::ClarificationTurnTaking),
            "structural" => Ok(Category::Structural),
            _ => Err(SchemaError::UnknownCategory(s.to_string())),
        }
    }
}

impl<'de> Deserialize<'de> for Category {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One tag definition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TagDef {
    pub code: TagCode,
    /// Human-facing spelling of the code (`T REQ` for `T_REQ`).
    pub display_code: String,
    pub name: String,
    pub layer: Layer,
    pub category: Category,
    pub description: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generic_example: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RegistryDoc {
    version: Option<String>,
    #[serde(default)]
    tag: Vec<TagRecord>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TagRecord {
    code: String,
    name: String,
    layer: Layer,
    category: Category,
    description: String,
    generic_example: Option<String>,
}

impl TagRecord {
    fn into_def(self) -> Result<TagDef, SchemaError> {
        let code = TagCode::parse(&self.code)?;
        Ok(TagDef {
            code,
            display_code: self.code.trim().to_string(),
            name: self.name,
            layer: self.layer,
            category: self.category,
            description: self.description,
            generic_example: self.generic_example,
        })
    }
}

fn parse_doc(src: &str) -> Result<(Option<String>, Vec<TagDef>), SchemaError> {
    let doc: RegistryDoc = toml::from_str(src).map_err(|e| SchemaError::MalformedConfig(e.to_string()))?;
    let mut seen = HashMap::new();
    let mut defs = Vec::with_capacity(doc.tag.len());
    for record in doc.tag {
        let def = record.into_def()?;
        if seen.insert(def.code.clone(), ()).is_some() {
            return Err(SchemaError::DuplicateCode(def.code.to_string()));
        }
        defs.push(def);
    }
    Ok((doc.version, defs))
}

/// Immutable, ordered tag vocabulary with lookup by canonical code.
#[derive(Debug, Clone)]
pub struct TagRegistry {
    version: String,
    tags: Vec<TagDef>,
    index: HashMap<TagCode, usize>,
}

impl PartialEq for TagRegistry {
    fn eq(&self, other: &Self) -> bool {
        self.version == other.version && self.tags == other.tags
    }
}

impl Eq for TagRegistry {}

impl TagRegistry {
    fn from_defs(version: String, tags: Vec<TagDef>) -> Result<Self, SchemaError> {
        let mut index = HashMap::with_capacity(tags.len());
        for (i, tag) in tags.iter().enumerate() {
            if index.insert(tag.code.clone(), i).is_some() {
                return Err(SchemaError::DuplicateCode(tag.code.to_string()));
            }
        }
        Ok(TagRegistry { version, tags, index })
    }

    /// The bundled registry: DAMSL core, political extensions, BEADS and analysis layers.
    pub fn bundled() -> Self {
        let (_, mut tags) = parse_doc(BUNDLED_DAMSL).expect("bundled DAMSL schema is valid");
        let (_, beads) = parse_doc(BUNDLED_BEADS).expect("bundled BEADS schema is valid");
        tags.extend(beads);
        Self::from_defs(DEFAULT_REGISTRY_VERSION.to_string(), tags).expect("bundled schemas have unique codes")
    }

    /// Merges an override document into `self`. Records whose code already
    /// exists replace the existing definition in place; new codes are appended.
    pub fn merged_with(&self, config_source: &str) -> Result<Self, SchemaError> {
        let (version, overrides) = parse_doc(config_source)?;
        let mut tags = self.tags.clone();
        for def in overrides {
            match self.index.get(&def.code) {
                Some(&i) => tags[i] = def,
                None => tags.push(def),
            }
        }
        Self::from_defs(version.unwrap_or_else(|| self.version.clone()), tags)
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn tags(&self) -> &[TagDef] {
        &self.tags
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn get(&self, code: &TagCode) -> Option<&TagDef> {
        self.index.get(code).map(|&i| &self.tags[i])
    }

    pub fn contains(&self, code: &TagCode) -> bool {
        self.index.contains_key(code)
    }

    /// Canonicalises `raw` and looks it up.
    pub fn resolve(&self, raw: &str) -> Result<&TagDef, SchemaError> {
        let canonical = TagCode::canonicalize(raw);
        self.index
            .get(canonical.as_str())
            .map(|&i| &self.tags[i])
            .ok_or_else(|| SchemaError::UnknownTag(raw.to_string()))
    }

    pub fn tags_in_layer(&self, layer: Layer) -> Vec<&TagDef> {
        self.tags.iter().filter(|t| t.layer == layer).collect()
    }

    /// Like [`tags_in_layer`](Self::tags_in_layer) but takes a layer name.
    pub fn tags_in_layer_named(&self, layer: &str) -> Result<Vec<&TagDef>, SchemaError> {
        Ok(self.tags_in_layer(layer.parse()?))
    }
}

impl std::borrow::Borrow<str> for TagCode {
    fn borrow(&self) -> &str {
        &self.0
    }
}

impl Serialize for TagRegistry {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct View<'a> {
            version: &'a str,
            tags: &'a [TagDef],
        }
        View { version: &self.version, tags: &self.tags }.serialize(s)
    }
}

/// Loads the bundled registry, merged with `config_source` when given.
pub fn load_registry(config_source: Option<&str>) -> Result<TagRegistry, SchemaError> {
    let base = TagRegistry::bundled();
    match config_source {
        Some(src) => base.merged_with(src),
        None => Ok(base),
    }
}
