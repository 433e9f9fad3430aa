//! OpenAI-compatible chat-completions client.

use std::thread;
use std::time::Duration;

use autoguide_core::lm::BackendKind;
use autoguide_core::{ChatRequest, ChatResponse, LanguageModel, LmError};
use serde::Deserialize;

pub const API_KEY_VAR: &str = "AUTOGUIDE_API_KEY";
pub const BASE_URL_VAR: &str = "AUTOGUIDE_BASE_URL";
pub const DEFAULT_BASE_URL: &str = "https://api.openai.com";

/// Retries after HTTP 429 and 5xx responses, doubling the delay each time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    /// Three retries after 1 s, 2 s and 4 s.
    fn default() -> Self {
        Self { max_retries: 3, base_delay: Duration::from_secs(1) }
    }
}

impl RetryPolicy {
    pub fn delay(&self, retry: u32) -> Duration {
        self.base_delay * 2u32.saturating_pow(retry)
    }
}

pub struct HttpBackend {
    client: reqwest::blocking::Client,
    endpoint: String,
    api_key: String,
    retry: RetryPolicy,
}

impl HttpBackend {
    pub fn new(base_url: &str, api_key: impl Into<String>) -> Result<Self, LmError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| LmError::Transport(e.to_string()))?;
        Ok(Self {
            client,
            endpoint: format!("{}/v1/chat/completions", base_url.trim_end_matches('/')),
            api_key: api_key.into(),
            retry: RetryPolicy::default(),
        })
    }

    /// Reads the key from `AUTOGUIDE_API_KEY` and the base URL from
    /// `AUTOGUIDE_BASE_URL` (default `https://api.openai.com`).
    pub fn from_env() -> Result<Self, LmError> {
        let key = std::env::var(API_KEY_VAR)
            .map_err(|_| LmError::Transport(format!("{API_KEY_VAR} is not set")))?;
        let base = std::env::var(BASE_URL_VAR).unwrap_or_else(|_| DEFAULT_BASE_URL.into());
        Self::new(&base, key)
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }
}

#[derive(Deserialize)]
struct Completion {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct Usage {
    prompt_tokens: u32,
    completion_tokens: u32,
}

fn retryable(status: u16) -> bool {
    status == 429 || (500..600).contains(&status)
}

impl LanguageModel for HttpBackend {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LmError> {
        request.validate()?;
        let mut retry = 0;
        loop {
            let response = self
                .client
                .post(&self.endpoint)
                .bearer_auth(&self.api_key)
                .json(request)
                .send()
                .map_err(|e| LmError::Transport(e.to_string()))?;
            let status = response.status().as_u16();
            let body = response.text().map_err(|e| LmError::Transport(e.to_string()))?;
            if (200..300).contains(&status) {
                let completion: Completion =
                    serde_json::from_str(&body).map_err(|e| LmError::MalformedResponse(e.to_string()))?;
                let text = completion
                    .choices
                    .into_iter()
                    .next()
                    .and_then(|c| c.message.content)
                    .ok_or_else(|| LmError::MalformedResponse("no choices".into()))?;
                let (prompt_tokens, completion_tokens) =
                    completion.usage.map_or((0, 0), |u| (u.prompt_tokens, u.completion_tokens));
                return Ok(ChatResponse { text, prompt_tokens, completion_tokens, backend: BackendKind::Http });
            }
            if retryable(status) && retry < self.retry.max_retries {
                let delay = self.retry.delay(retry);
                log::warn!("HTTP {status} from {}; retrying in {delay:?}", self.endpoint);
                thread::sleep(delay);
                retry += 1;
                continue;
            }
            return Err(LmError::Http { status, body });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backoff_doubles() {
        let p = RetryPolicy::default();
        let delays: Vec<u64> = (0..3).map(|r| p.delay(r).as_secs()).collect();
        assert_eq!(delays, [1, 2, 4]);
    }

    #[test]
    fn retry_classes() {
        assert!(retryable(429) && retryable(500) && retryable(503));
        assert!(!retryable(400) && !retryable(401) && !retryable(404));
    }

    #[test]
    fn endpoint_joins_base_url() {
        let b = HttpBackend::new("http://localhost:8080/", "k").unwrap();
        assert_eq!(b.endpoint(), "http://localhost:8080/v1/chat/completions");
    }
}
