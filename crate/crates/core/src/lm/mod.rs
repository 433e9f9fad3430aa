//! Language-model invocation surface.
//!
//! Every pipeline stage talks to a model through [`LanguageModel`]. Requests use
//! the OpenAI-compatible chat shape. Each pipeline role (agent, context
//! identification, guideline selection, guideline extraction, context matching)
//! is bound to its own model name through [`RoleModels`], and [`LmStack`] turns
//! a rendered prompt into a request for a role.

mod counting;
mod scripted;

use alloc::boxed::Box;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use counting::CountingModel;
pub use scripted::{ScriptTable, ScriptedBackend, ScriptedRule};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LmError {
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("no recorded response for request {fingerprint}")]
    ReplayMiss { fingerprint: String },
    #[error("recorded request for {fingerprint} differs from the incoming request")]
    FingerprintCollision { fingerprint: String },
    #[error("no scripted rule matched and no default is configured")]
    ScriptedNoMatch,
    #[error("invalid request: {0}")]
    InvalidRequest(&'static str),
    #[error("cassette line {line}: stored request does not hash to fingerprint {fingerprint}")]
    CassetteTampered { line: usize, fingerprint: String },
    #[error("cassette io: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MessageRole {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: MessageRole,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: MessageRole::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self { role: MessageRole::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self { role: MessageRole::Assistant, content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop: Option<Vec<String>>,
}

impl ChatRequest {
    /// Single-turn request carrying `prompt` as the only user message.
    pub fn user(model: impl Into<String>, prompt: impl Into<String>, sampling: Sampling) -> Self {
        Self {
            model: model.into(),
            messages: vec![ChatMessage::user(prompt)],
            temperature: sampling.temperature,
            max_tokens: sampling.max_tokens,
            stop: None,
        }
    }

    pub fn validate(&self) -> Result<(), LmError> {
        let first = self.messages.first().ok_or(LmError::InvalidRequest("no messages"))?;
        if first.role == MessageRole::Assistant {
            return Err(LmError::InvalidRequest("first message must be system or user"));
        }
        if self
            .messages
            .iter()
            .any(|m| m.role != MessageRole::Assistant && m.content.trim().is_empty())
        {
            return Err(LmError::InvalidRequest("system and user messages must be nonempty"));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(LmError::InvalidRequest("temperature must be >= 0"));
        }
        if self.max_tokens == 0 {
            return Err(LmError::InvalidRequest("max_tokens must be positive"));
        }
        Ok(())
    }

    /// Content of the last user message.
    pub fn final_user_message(&self) -> Option<&str> {
        self.messages.iter().rev().find(|m| m.role == MessageRole::User).map(|m| m.content.as_str())
    }

    /// Stable SHA-256 fingerprint over the request fields, hex encoded.
    ///
    /// Fields are serialized in a fixed order before hashing, so the field
    /// order of any JSON the request was parsed from does not matter.
    pub fn fingerprint(&self) -> String {
        #[derive(Serialize)]
        struct CanonicalMessage<'a> {
            content: &'a str,
            role: MessageRole,
        }
        #[derive(Serialize)]
        struct Canonical<'a> {
            max_tokens: u32,
            messages: Vec<CanonicalMessage<'a>>,
            model: &'a str,
            stop: Option<&'a [String]>,
            temperature: f64,
        }
        let canonical = Canonical {
            max_tokens: self.max_tokens,
            messages: self
                .messages
                .iter()
                .map(|m| CanonicalMessage { content: &m.content, role: m.role })
                .collect(),
            model: &self.model,
            stop: self.stop.as_deref(),
            temperature: self.temperature,
        };
        let bytes = serde_json::to_vec(&canonical).expect("request serializes");
        let digest = Sha256::digest(&bytes);
        let mut hex = String::with_capacity(64);
        for byte in digest.iter() {
            let _ = write!(hex, "{byte:02x}");
        }
        hex
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Http,
    Scripted,
    Replay,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub prompt_tokens: u32,
    pub completion_tokens: u32,
    pub backend: BackendKind,
}

/// A chat-completion backend. Implementations must tolerate concurrent callers.
pub trait LanguageModel: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LmError>;
}

impl<M: LanguageModel + ?Sized> LanguageModel for &M {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LmError> {
        (**self).complete(request)
    }
}

impl<M: LanguageModel + ?Sized> LanguageModel for Box<M> {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LmError> {
        (**self).complete(request)
    }
}

impl<M: LanguageModel + ?Sized> LanguageModel for Arc<M> {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LmError> {
        (**self).complete(request)
    }
}

/// Decoding parameters shared by every role.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sampling {
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for Sampling {
    fn default() -> Self {
        Self { temperature: 0.0, max_tokens: 256 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LmRole {
    Agent,
    Context,
    Selection,
    Extraction,
    Matching,
}

impl LmRole {
    pub const ALL: [LmRole; 5] =
        [LmRole::Agent, LmRole::Context, LmRole::Selection, LmRole::Extraction, LmRole::Matching];

    pub fn name(self) -> &'static str {
        match self {
            LmRole::Agent => "agent",
            LmRole::Context => "context",
            LmRole::Selection => "selection",
            LmRole::Extraction => "extraction",
            LmRole::Matching => "matching",
        }
    }
}

/// Model name per pipeline role.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoleModels {
    pub agent: String,
    pub context: String,
    pub selection: String,
    pub extraction: String,
    pub matching: String,
}

impl Default for RoleModels {
    /// Agent-class model for acting, context identification, selection and
    /// matching; the strongest model for guideline extraction.
    fn default() -> Self {
        Self {
            agent: "gpt-3.5-turbo-0613".into(),
            context: "gpt-3.5-turbo-0613".into(),
            selection: "gpt-3.5-turbo-0613".into(),
            extraction: "gpt-4-1106-preview".into(),
            matching: "gpt-3.5-turbo-0613".into(),
        }
    }
}

impl RoleModels {
    /// Distinct per-role names used with the scripted backend, so rule tables
    /// can address each role separately.
    pub fn scripted() -> Self {
        Self {
            agent: "scripted-agent".into(),
            context: "scripted-context".into(),
            selection: "scripted-selection".into(),
            extraction: "scripted-extraction".into(),
            matching: "scripted-matching".into(),
        }
    }

    pub fn get(&self, role: LmRole) -> &str {
        match role {
            LmRole::Agent => &self.agent,
            LmRole::Context => &self.context,
            LmRole::Selection => &self.selection,
            LmRole::Extraction => &self.extraction,
            LmRole::Matching => &self.matching,
        }
    }
}

/// A backend together with the per-role model names and decoding parameters.
#[derive(Clone, Copy)]
pub struct LmStack<'a> {
    pub backend: &'a dyn LanguageModel,
    pub models: &'a RoleModels,
    pub sampling: Sampling,
}

impl<'a> LmStack<'a> {
    pub fn new(backend: &'a dyn LanguageModel, models: &'a RoleModels) -> Self {
        Self { backend, models, sampling: Sampling::default() }
    }

    pub fn request(&self, role: LmRole, prompt: impl Into<String>) -> ChatRequest {
        ChatRequest::user(self.models.get(role), prompt, self.sampling)
    }

    pub fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LmError> {
        request.validate()?;
        self.backend.complete(request)
    }

    /// Renders a single-turn request for `role` and returns the response text.
    pub fn ask(&self, role: LmRole, prompt: impl Into<String>) -> Result<String, LmError> {
        let request = self.request(role, prompt);
        Ok(self.complete(&request)?.text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(model: &str, messages: &[&str]) -> ChatRequest {
        ChatRequest {
            model: model.into(),
            messages: messages.iter().map(|m| ChatMessage::user(*m)).collect(),
            temperature: 0.0,
            max_tokens: 64,
            stop: None,
        }
    }

    #[test]
    fn fingerprint_is_structural() {
        let a = req("m", &["hello", "world"]);
        let b = req("m", &["hello", "world"]);
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_eq!(a.fingerprint().len(), 64);
        assert_ne!(a.fingerprint(), req("m", &["hello", "world!"]).fingerprint());
        assert_ne!(a.fingerprint(), req("n", &["hello", "world"]).fingerprint());
        let mut hot = a.clone();
        hot.temperature = 0.5;
        assert_ne!(a.fingerprint(), hot.fingerprint());
        let mut longer = a.clone();
        longer.max_tokens = 65;
        assert_ne!(a.fingerprint(), longer.fingerprint());
    }

    #[test]
    fn fingerprint_ignores_json_field_order() {
        let a = req("m", &["hi"]);
        let permuted = r#"{"messages":[{"content":"hi","role":"user"}],"max_tokens":64,"temperature":0.0,"model":"m"}"#;
        let b: ChatRequest = serde_json::from_str(permuted).unwrap();
        assert_eq!(a.fingerprint(), b.fingerprint());
    }

    #[test]
    fn validation() {
        assert!(req("m", &["x"]).validate().is_ok());
        assert!(req("m", &[]).validate().is_err());
        assert!(req("m", &["  "]).validate().is_err());
        let mut r = req("m", &["x"]);
        r.messages.insert(0, ChatMessage::assistant("a"));
        assert!(r.validate().is_err());
        let mut r = req("m", &["x"]);
        r.temperature = -1.0;
        assert!(r.validate().is_err());
    }
}
