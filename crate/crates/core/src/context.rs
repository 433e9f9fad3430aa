//! Context identification and context matching.
//!
//! A [`Context`] is a one-line natural-language description of the agent's
//! situation produced by the context model from a partial trajectory. Its
//! canonical key (lowercase, punctuation stripped, whitespace collapsed) is what
//! the guideline store is keyed by.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lm::{LmError, LmRole, LmStack};
use crate::template::{self, Template, TemplateError};
use crate::text::{collapse_whitespace, first_nonempty_line};
use crate::trajectory::PartialTrajectory;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ContextError {
    #[error("context model returned an empty context")]
    EmptyContext,
    #[error(transparent)]
    Lm(#[from] LmError),
    #[error(transparent)]
    Template(#[from] TemplateError),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Context {
    raw: String,
    canonical: String,
}

impl Context {
    /// Builds a context from model output, collapsing it to a single paragraph.
    pub fn new(raw: &str) -> Result<Self, ContextError> {
        let raw = collapse_whitespace(raw);
        let canonical = canonicalize(&raw);
        if raw.is_empty() || canonical.is_empty() {
            return Err(ContextError::EmptyContext);
        }
        Ok(Self { raw, canonical })
    }

    pub fn raw(&self) -> &str {
        &self.raw
    }

    pub fn canonical(&self) -> &str {
        &self.canonical
    }
}

/// Lowercases, drops every character that is neither alphanumeric nor
/// whitespace, and collapses whitespace runs. Idempotent.
pub fn canonicalize(s: &str) -> String {
    let mut current = canonicalize_once(s);
    // Lowercasing can emit characters whose own lowercase differs; iterate to
    // the fixed point so the function is idempotent for all inputs.
    loop {
        let next = canonicalize_once(&current);
        if next == current {
            return current;
        }
        current = next;
    }
}

fn canonicalize_once(s: &str) -> String {
    let mut spaced = String::with_capacity(s.len());
    for c in s.chars() {
        if c.is_whitespace() {
            spaced.push(' ');
        } else {
            spaced.extend(c.to_lowercase().filter(|l| l.is_alphanumeric()));
        }
    }
    collapse_whitespace(&spaced)
}

/// Templates used for identification and matching.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextTemplateSet {
    pub identification: Template,
    pub matching: Template,
    /// Block substituted into the identification template's few-shot slot.
    pub few_shot_examples: String,
}

impl ContextTemplateSet {
    pub fn builtin() -> Self {
        Self::from_sources(template::builtin_source).expect("built-in templates are valid")
    }

    /// Builds the set from a source lookup keyed by template file stem.
    pub fn from_sources<'s>(source: impl Fn(&str) -> Option<&'s str>) -> Result<Self, TemplateError> {
        let get = |name: &str| source(name).or_else(|| template::builtin_source(name)).unwrap_or_default();
        Ok(Self {
            identification: Template::new(
                template::CONTEXT_IDENTIFICATION,
                get(template::CONTEXT_IDENTIFICATION),
                template::IDENTIFICATION_SLOTS,
            )?,
            matching: Template::new(template::CONTEXT_MATCHING, get(template::CONTEXT_MATCHING), template::MATCHING_SLOTS)?,
            few_shot_examples: get(template::CONTEXT_EXAMPLES).trim().into(),
        })
    }

    pub fn render_identification(&self, partial: &PartialTrajectory<'_>) -> Result<String, TemplateError> {
        let history = partial.render();
        self.identification
            .render(&[("few_shot_examples", &self.few_shot_examples), ("partial_trajectory", &history)])
    }

    pub fn render_matching(&self, candidate: &Context, existing: &[&Context]) -> Result<String, TemplateError> {
        let listing = numbered(existing.iter().map(|c| c.raw()));
        self.matching.render(&[("candidate_context", candidate.raw()), ("existing_contexts", &listing)])
    }
}

impl Default for ContextTemplateSet {
    fn default() -> Self {
        Self::builtin()
    }
}

/// Asks the context model to describe the situation at the end of `partial`.
///
/// The first nonempty line of the answer (minus an echoed `Context:` label) is
/// the raw context.
pub fn identify_context(
    partial: &PartialTrajectory<'_>,
    templates: &ContextTemplateSet,
    lm: &LmStack<'_>,
) -> Result<Context, ContextError> {
    let prompt = templates.render_identification(partial)?;
    let answer = lm.ask(LmRole::Context, prompt)?;
    let line = first_nonempty_line(&answer).ok_or(ContextError::EmptyContext)?;
    let line = strip_label(line, "context:");
    Context::new(line)
}

fn strip_label<'a>(line: &'a str, label: &str) -> &'a str {
    match line.get(..label.len()) {
        Some(head) if head.eq_ignore_ascii_case(label) => line[label.len()..].trim(),
        _ => line,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMode {
    /// Canonical-key equality first, then the matching model.
    #[default]
    Lm,
    /// Canonical-key equality only; never calls a model.
    ExactOnly,
}

/// Finds the existing context describing the same situation as `candidate`.
///
/// Returns the index into `existing`. Canonical-key equality matches without
/// a model call; otherwise, in [`MatchMode::Lm`], the matching model picks a
/// 1-based index or answers `NONE`. Unparsable or out-of-range answers mean no
/// match.
pub fn match_context(
    candidate: &Context,
    existing: &[&Context],
    templates: &ContextTemplateSet,
    lm: &LmStack<'_>,
    mode: MatchMode,
) -> Result<Option<usize>, ContextError> {
    if let Some(i) = existing.iter().position(|c| c.canonical() == candidate.canonical()) {
        return Ok(Some(i));
    }
    if existing.is_empty() || mode == MatchMode::ExactOnly {
        return Ok(None);
    }
    let prompt = templates.render_matching(candidate, existing)?;
    let answer = lm.ask(LmRole::Matching, prompt)?;
    Ok(parse_match_answer(&answer, existing.len()))
}

/// Parses a matching answer: `NONE` (any case) or the first integer token,
/// 1-based. Returns a 0-based index when it is in range.
pub fn parse_match_answer(answer: &str, existing: usize) -> Option<usize> {
    let trimmed = answer.trim();
    if trimmed.get(..4).is_some_and(|h| h.eq_ignore_ascii_case("none")) {
        return None;
    }
    let index = integer_tokens(trimmed).next()?;
    (1..=existing).contains(&index).then(|| index - 1)
}

/// Maximal runs of ASCII digits, in order of appearance.
pub(crate) fn integer_tokens(s: &str) -> impl Iterator<Item = usize> + '_ {
    s.split(|c: char| !c.is_ascii_digit()).filter(|t| !t.is_empty()).filter_map(|t| t.parse().ok())
}

/// Numbered listing `1. a\n2. b` used by the matching and selection prompts.
pub(crate) fn numbered<'a>(items: impl IntoIterator<Item = &'a str>) -> String {
    let lines: Vec<String> = items.into_iter().enumerate().map(|(i, s)| format!("{}. {}", i + 1, s)).collect();
    lines.join("\n")
}
