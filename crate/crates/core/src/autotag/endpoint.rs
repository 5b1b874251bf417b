use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::rules::{mock_tag, RuleTable};
use super::verdict::render_verdict;
use super::AutotagError;
use crate::annotation::ContextWindow;
use crate::corpus::UnitId;

#[derive(Debug, Clone)]
pub struct TagRequest {
    pub unit_id: UnitId,
    pub prompt: String,
    pub window: ContextWindow,
    pub timeout: Duration,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EndpointError {
    /// Worth retrying: network failure, timeout, 429 or 5xx.
    #[error("transient endpoint failure: {0}")]
    Transient(String),
    /// The endpoint refused or mangled this request; retrying will not help.
    #[error("endpoint rejected request: {0}")]
    Rejected(String),
}

/// Send text, receive text.
pub trait TaggingEndpoint: Send + Sync {
    /// Model or client name recorded in run manifests.
    fn name(&self) -> String;
    fn complete(&self, request: &TagRequest) -> Result<String, EndpointError>;
}

/// Offline endpoint backed by a [`RuleTable`]; ignores the prompt.
#[derive(Debug, Clone)]
pub struct MockEndpoint {
    rules: RuleTable,
}

impl MockEndpoint {
    pub fn new(rules: RuleTable) -> Self {
        MockEndpoint { rules }
    }
}

impl TaggingEndpoint for MockEndpoint {
    fn name(&self) -> String {
        "mock-rules".into()
    }

    fn complete(&self, request: &TagRequest) -> Result<String, EndpointError> {
        let v = mock_tag(&self.rules, &request.window);
        Ok(render_verdict(&v.primary_tag, &v.secondary_tags, v.rationale.as_deref()))
    }
}

fn default_timeout() -> u64 {
    60
}

/// Connection settings for an OpenAI-compatible chat completions endpoint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointConfig {
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token.
    #[serde(default)]
    pub auth_token_env: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

impl EndpointConfig {
    pub fn from_toml(src: &str) -> Result<Self, AutotagError> {
        toml::from_str(src).map_err(|e| AutotagError::Config(format!("endpoint config: {e}")))
    }

    pub fn from_json(src: &str) -> Result<Self, AutotagError> {
        serde_json::from_str(src).map_err(|e| AutotagError::Config(format!("endpoint config: {e}")))
    }

    /// Reads `.json` files as JSON and anything else as TOML.
    pub fn load(path: &Path) -> Result<Self, AutotagError> {
        let src = std::fs::read_to_string(path)
            .map_err(|e| AutotagError::Config(format!("cannot read {}: {e}", path.display())))?;
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
            Self::from_json(&src)
        } else {
            Self::from_toml(&src)
        }
    }

    /// Builds a config from `BEADS_ENDPOINT_URL`, `BEADS_MODEL`,
    /// `BEADS_AUTH_TOKEN_ENV` and `BEADS_TIMEOUT_SECS`.
    pub fn from_env() -> Result<Self, AutotagError> {
        let var = |k: &str| std::env::var(k).ok().filter(|v| !v.trim().is_empty());
        let base_url =
            var("BEADS_ENDPOINT_URL").ok_or_else(|| AutotagError::Config("BEADS_ENDPOINT_URL is not set".into()))?;
        let model = var("BEADS_MODEL").ok_or_else(|| AutotagError::Config("BEADS_MODEL is not set".into()))?;
        let timeout_secs = match var("BEADS_TIMEOUT_SECS") {
            Some(s) => s.parse().map_err(|_| AutotagError::Config(format!("bad BEADS_TIMEOUT_SECS {s:?}")))?,
            None => default_timeout(),
        };
        Ok(EndpointConfig { base_url, model, auth_token_env: var("BEADS_AUTH_TOKEN_ENV"), timeout_secs })
    }
}

/// Blocking client for `POST {base_url}/chat/completions`.
pub struct LiveEndpoint {
    config: EndpointConfig,
    token: Option<String>,
    agent: ureq::Agent,
}

impl LiveEndpoint {
    pub fn new(config: EndpointConfig) -> Result<Self, AutotagError> {
        let token = match &config.auth_token_env {
            Some(name) => Some(
                std::env::var(name)
                    .map_err(|_| AutotagError::Config(format!("auth token variable {name} is not set")))?,
            ),
            None => None,
        };
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(config.timeout_secs.max(1))))
            .build()
            .into();
        Ok(LiveEndpoint { config, token, agent })
    }

    fn url(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }
}

fn classify_status(status: u16, body: &str) -> EndpointError {
    let snippet: String = body.chars().take(200).collect();
    let detail = format!("HTTP {status}: {snippet}");
    if status == 408 || status == 429 || status >= 500 {
        EndpointError::Transient(detail)
    } else {
        EndpointError::Rejected(detail)
    }
}

fn extract_content(body: &Value) -> Option<String> {
    let choice = body.get("choices")?.get(0)?;
    choice.pointer("/message/content").or_else(|| choice.get("text")).and_then(Value::as_str).map(str::to_string)
}

impl TaggingEndpoint for LiveEndpoint {
    fn name(&self) -> String {
        self.config.model.clone()
    }

    fn complete(&self, request: &TagRequest) -> Result<String, EndpointError> {
        let body = json!({
            "model": self.config.model,
            "temperature": 0,
            "messages": [{"role": "user", "content": request.prompt}],
        });
        let timeout = request.timeout.min(Duration::from_secs(self.config.timeout_secs.max(1)));
        let mut req = self.agent.post(self.url()).config().timeout_global(Some(timeout)).build();
        if let Some(t) = &self.token {
            req = req.header("Authorization", format!("Bearer {t}"));
        }
        let mut resp = req.send_json(&body).map_err(|e| EndpointError::Transient(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(|e| EndpointError::Transient(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(classify_status(status, &text));
        }
        let json: Value =
            serde_json::from_str(&text).map_err(|e| EndpointError::Rejected(format!("response is not JSON: {e}")))?;
        extract_content(&json)
            .ok_or_else(|| EndpointError::Rejected("response has no choices[0].message.content".into()))
    }
}
