use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{BackendKind, ChatRequest, ChatResponse, LanguageModel, LmError};
use crate::text::word_count;

/// One row of a scripted rule table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedRule {
    /// Only requests for this model match; `None` matches every model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    /// Substring the final user message must contain. Empty matches anything.
    pub contains: String,
    pub response: String,
}

impl ScriptedRule {
    pub fn new(contains: impl Into<String>, response: impl Into<String>) -> Self {
        Self { model: None, contains: contains.into(), response: response.into() }
    }

    pub fn for_model(model: impl Into<String>, contains: impl Into<String>, response: impl Into<String>) -> Self {
        Self { model: Some(model.into()), contains: contains.into(), response: response.into() }
    }

    fn matches(&self, request: &ChatRequest, message: &str) -> bool {
        self.model.as_deref().is_none_or(|m| m == request.model) && message.contains(self.contains.as_str())
    }
}

/// Serialized form of a scripted backend.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptTable {
    pub rules: Vec<ScriptedRule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<String>,
}

/// Deterministic rule-table backend: the first rule matching the final user
/// message wins, else the table default.
#[derive(Debug, Clone, Default)]
pub struct ScriptedBackend {
    table: ScriptTable,
}

impl ScriptedBackend {
    pub fn new(table: ScriptTable) -> Self {
        Self { table }
    }

    pub fn from_rules(rules: impl IntoIterator<Item = ScriptedRule>) -> Self {
        Self::new(ScriptTable { rules: rules.into_iter().collect(), default: None })
    }

    pub fn with_default(mut self, default: impl Into<String>) -> Self {
        self.table.default = Some(default.into());
        self
    }

    pub fn table(&self) -> &ScriptTable {
        &self.table
    }
}

impl LanguageModel for ScriptedBackend {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LmError> {
        let message = request.final_user_message().unwrap_or_default();
        let text = self
            .table
            .rules
            .iter()
            .find(|rule| rule.matches(request, message))
            .map(|rule| rule.response.clone())
            .or_else(|| self.table.default.clone())
            .ok_or(LmError::ScriptedNoMatch)?;
        let prompt_tokens = request.messages.iter().map(|m| word_count(&m.content)).sum();
        Ok(ChatResponse {
            completion_tokens: word_count(&text),
            text,
            prompt_tokens,
            backend: BackendKind::Scripted,
        })
    }
}
