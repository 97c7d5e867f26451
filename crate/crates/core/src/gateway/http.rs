use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{BackendError, ModelBackend, TaskRequest};

/// OpenAI-style chat-completion endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HttpConfig {
    /// Full URL of the chat-completions route.
    pub endpoint: String,
    pub model: String,
    /// Environment variable holding the bearer token.
    #[serde(default = "default_key_env")]
    pub api_key_env: String,
    /// Sent only when set; otherwise the server default applies.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

fn default_key_env() -> String {
    "TRANSREPAIR_API_KEY".into()
}

fn default_timeout_secs() -> u64 {
    120
}

pub struct HttpBackend {
    config: HttpConfig,
    token: Option<String>,
    agent: ureq::Agent,
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Self {
        let token = std::env::var(&config.api_key_env).ok().filter(|t| !t.is_empty());
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        HttpBackend {
            config,
            token,
            agent,
        }
    }

    fn body(&self, request: &TaskRequest, prompt: &str) -> Value {
        let mut body = json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt}],
            "n": request.sample_count.max(1),
            "seed": request.seed,
        });
        if let Some(t) = request.temperature.or(self.config.temperature) {
            body["temperature"] = json!(t);
        }
        body
    }
}

/// Pull `choices[].message.content` out of a completion response.
pub(crate) fn parse_choices(body: &Value) -> Result<Vec<String>, BackendError> {
    let choices = body
        .get("choices")
        .and_then(Value::as_array)
        .ok_or_else(|| BackendError::Content("response has no choices array".into()))?;
    choices
        .iter()
        .map(|c| {
            c.pointer("/message/content")
                .and_then(Value::as_str)
                .map(str::to_string)
                .ok_or_else(|| BackendError::Content("choice without message content".into()))
        })
        .collect()
}

impl ModelBackend for HttpBackend {
    fn complete(&self, request: &TaskRequest, prompt: &str) -> Result<Vec<String>, BackendError> {
        let mut req = self.agent.post(&self.config.endpoint);
        if let Some(t) = &self.token {
            req = req.header("Authorization", &format!("Bearer {t}"));
        }
        let mut resp = req
            .send_json(self.body(request, prompt))
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        match status {
            200..=299 => {}
            429 | 500..=599 => return Err(BackendError::Transport(format!("http {status}"))),
            _ => return Err(BackendError::Content(format!("http {status}: {text}"))),
        }
        let body: Value = serde_json::from_str(&text).map_err(|e| BackendError::Content(e.to_string()))?;
        parse_choices(&body)
    }
}
