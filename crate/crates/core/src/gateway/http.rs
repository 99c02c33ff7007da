//! OpenAI-compatible chat-completions backend with exponential backoff.
//! Transient failures are HTTP 429, 5xx and transport errors; other 4xx
//! responses fail immediately.

use super::{
    BackendConfig, CallLedger, CompletionRequest, CompletionResponse, GatewayError, Usage,
};
use serde::Deserialize;
use std::time::Duration;

pub(super) struct HttpBackend {
    agent: ureq::Agent,
    endpoint: String,
    api_key: String,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
    #[serde(default)]
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
}

#[derive(Deserialize)]
struct WireMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize, Default)]
struct WireUsage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

impl HttpBackend {
    pub(super) fn new(config: &BackendConfig) -> Result<Self, GatewayError> {
        let base_url = config.base_url.as_ref().expect("validated");
        let key_var = config.api_key_env_var.as_ref().expect("validated");
        let api_key = std::env::var(key_var)
            .map_err(|_| GatewayError::Auth(format!("environment variable {key_var} not set")))?;
        let timeout = Duration::from_millis(config.timeout_ms);
        let agent = ureq::AgentBuilder::new()
            .timeout_connect(timeout)
            .timeout(timeout)
            .build();
        Ok(Self {
            agent,
            endpoint: format!("{}/chat/completions", base_url.trim_end_matches('/')),
            api_key,
        })
    }

    pub(super) fn complete(
        &self,
        request: &CompletionRequest,
        config: &BackendConfig,
        ledger: &CallLedger,
    ) -> Result<CompletionResponse, GatewayError> {
        let body = serde_json::json!({
            "model": request.model_id,
            "messages": request.messages.iter().map(|m| serde_json::json!({
                "role": m.role.wire_name(),
                "content": m.text,
            })).collect::<Vec<_>>(),
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        })
        .to_string();

        let max_attempts = config.retry.max_attempts;
        let mut last_error = String::new();
        for attempt in 1..=max_attempts {
            ledger.record_attempt(request.purpose);
            let result = self
                .agent
                .post(&self.endpoint)
                .set("Authorization", &format!("Bearer {}", self.api_key))
                .set("Content-Type", "application/json")
                .send_string(&body);
            match result {
                Ok(response) => return parse_response(response),
                Err(ureq::Error::Status(status, response)) => {
                    let body = response.into_string().unwrap_or_default();
                    if status == 401 || status == 403 {
                        return Err(GatewayError::Auth(format!("status {status}: {body}")));
                    }
                    let transient = status == 429 || status >= 500;
                    if !transient {
                        return Err(GatewayError::HttpStatus { status, body });
                    }
                    last_error = format!("status {status}");
                }
                Err(ureq::Error::Transport(transport)) => {
                    last_error = transport.to_string();
                }
            }
            if attempt < max_attempts {
                let backoff = config.retry.base_backoff_ms.saturating_mul(1 << (attempt - 1));
                std::thread::sleep(Duration::from_millis(backoff));
            }
        }
        Err(GatewayError::BackendUnavailable {
            attempts: max_attempts,
            last_error,
        })
    }
}

fn parse_response(response: ureq::Response) -> Result<CompletionResponse, GatewayError> {
    let body = response.into_string().map_err(|e| GatewayError::HttpStatus {
        status: 0,
        body: e.to_string(),
    })?;
    let wire: WireResponse = serde_json::from_str(&body).map_err(|e| GatewayError::HttpStatus {
        status: 0,
        body: format!("unparseable response: {e}"),
    })?;
    let text = wire
        .choices
        .first()
        .and_then(|c| c.message.content.clone())
        .unwrap_or_default();
    let usage = wire.usage.unwrap_or_default();
    Ok(CompletionResponse {
        text,
        usage: Usage {
            prompt_tokens: usage.prompt_tokens,
            completion_tokens: usage.completion_tokens,
        },
        backend: "http".into(),
        cached: false,
    })
}
