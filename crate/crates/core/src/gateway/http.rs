//! Chat-completions HTTP provider (OpenAI-compatible request/response shape).

use std::time::Duration;

use serde::Deserialize;

use super::{ChatRequest, Provider, ProviderFailure};

pub struct HttpProvider {
    base_url: String,
    api_key_env: String,
    timeout: Duration,
}

impl HttpProvider {
    pub fn new(base_url: String, api_key_env: String, timeout_s: u64) -> Self {
        HttpProvider { base_url, api_key_env, timeout: Duration::from_secs(timeout_s) }
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    content: String,
}

impl Provider for HttpProvider {
    fn id(&self) -> &str {
        &self.base_url
    }

    fn call(&self, request: &ChatRequest) -> Result<String, ProviderFailure> {
        let api_key = std::env::var(&self.api_key_env)
            .map_err(|_| ProviderFailure::Auth(self.api_key_env.clone()))?;
        let client = reqwest::blocking::Client::builder()
            .timeout(self.timeout)
            .build()
            .map_err(|e| ProviderFailure::Connect(e.to_string()))?;
        let response = client
            .post(&self.base_url)
            .bearer_auth(api_key)
            .json(request)
            .send()
            .map_err(|e| {
                if e.is_timeout() {
                    ProviderFailure::Timeout
                } else {
                    ProviderFailure::Connect(e.to_string())
                }
            })?;
        let status = response.status();
        let body = response
            .text()
            .map_err(|e| ProviderFailure::Connect(e.to_string()))?;
        if !status.is_success() {
            return Err(ProviderFailure::Status { code: status.as_u16(), body });
        }
        let parsed: ChatResponse =
            serde_json::from_str(&body).map_err(|e| ProviderFailure::Malformed(e.to_string()))?;
        let first = parsed
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| ProviderFailure::Malformed("response had no choices".into()))?;
        Ok(first.message.content)
    }
}
