//! `{{slot}}` prompt templates.
//!
//! A template declares its slots up front and every declared slot must occur
//! exactly once in the text; undeclared slots are rejected. Rendering is a
//! single pass, so values that happen to contain `{{...}}` are never expanded.

use alloc::borrow::ToOwned;
use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

use crate::context::ContextTemplateSet;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TemplateError {
    #[error("template `{template}`: slot `{slot}` occurs {count} times, expected exactly once")]
    SlotCount { template: String, slot: String, count: usize },
    #[error("template `{template}`: undeclared slot `{slot}`")]
    UndeclaredSlot { template: String, slot: String },
    #[error("template `{template}`: unterminated slot")]
    Unterminated { template: String },
    #[error("template `{template}`: no value for slot `{slot}`")]
    MissingValue { template: String, slot: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Piece {
    Text(String),
    Slot(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    name: String,
    slots: Vec<String>,
    pieces: Vec<Piece>,
}

impl Template {
    /// Parses `text` (trailing whitespace is dropped) and checks it against `slots`.
    pub fn new(name: &str, text: &str, slots: &[&str]) -> Result<Self, TemplateError> {
        let pieces = parse(name, text.trim_end())?;
        for piece in &pieces {
            if let Piece::Slot(s) = piece {
                if !slots.contains(&s.as_str()) {
                    return Err(TemplateError::UndeclaredSlot { template: name.into(), slot: s.clone() });
                }
            }
        }
        for slot in slots {
            let count = pieces.iter().filter(|p| matches!(p, Piece::Slot(s) if s == slot)).count();
            if count != 1 {
                return Err(TemplateError::SlotCount { template: name.into(), slot: (*slot).into(), count });
            }
        }
        Ok(Self { name: name.into(), slots: slots.iter().map(|s| (*s).to_owned()).collect(), pieces })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn slots(&self) -> &[String] {
        &self.slots
    }

    pub fn render(&self, values: &[(&str, &str)]) -> Result<String, TemplateError> {
        let mut out = String::new();
        for piece in &self.pieces {
            match piece {
                Piece::Text(t) => out.push_str(t),
                Piece::Slot(slot) => {
                    let value = values.iter().find(|(k, _)| k == slot).map(|(_, v)| *v).ok_or_else(|| {
                        TemplateError::MissingValue { template: self.name.clone(), slot: slot.clone() }
                    })?;
                    out.push_str(value);
                }
            }
        }
        Ok(out)
    }
}

fn parse(name: &str, mut text: &str) -> Result<Vec<Piece>, TemplateError> {
    let mut pieces = Vec::new();
    while let Some(open) = text.find("{{") {
        if open > 0 {
            pieces.push(Piece::Text(text[..open].into()));
        }
        let rest = &text[open + 2..];
        let close = rest.find("}}").ok_or_else(|| TemplateError::Unterminated { template: name.into() })?;
        pieces.push(Piece::Slot(rest[..close].trim().into()));
        text = &rest[close + 2..];
    }
    if !text.is_empty() {
        pieces.push(Piece::Text(text.into()));
    }
    Ok(pieces)
}

pub const CONTEXT_IDENTIFICATION: &str = "context_identification";
pub const CONTEXT_MATCHING: &str = "context_matching";
pub const GUIDELINE_EXTRACTION: &str = "guideline_extraction";
pub const GUIDELINE_SELECTION: &str = "guideline_selection";
/// Few-shot examples shown by the context identification prompt (plain text, no slots).
pub const CONTEXT_EXAMPLES: &str = "context_examples";

pub const IDENTIFICATION_SLOTS: &[&str] = &["few_shot_examples", "partial_trajectory"];
pub const MATCHING_SLOTS: &[&str] = &["candidate_context", "existing_contexts"];
pub const EXTRACTION_SLOTS: &[&str] = &["positive_trajectory", "negative_trajectory", "context"];
pub const SELECTION_SLOTS: &[&str] = &["context", "trajectory", "guidelines", "k"];

/// Built-in template text by file stem.
pub fn builtin_source(name: &str) -> Option<&'static str> {
    Some(match name {
        CONTEXT_IDENTIFICATION => include_str!("../templates/context_identification.txt"),
        CONTEXT_MATCHING => include_str!("../templates/context_matching.txt"),
        GUIDELINE_EXTRACTION => include_str!("../templates/guideline_extraction.txt"),
        GUIDELINE_SELECTION => include_str!("../templates/guideline_selection.txt"),
        CONTEXT_EXAMPLES => include_str!("../templates/context_examples.txt"),
        _ => return None,
    })
}

/// Every template the pipeline renders.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplates {
    pub context: ContextTemplateSet,
    pub extraction: Template,
    pub selection: Template,
}

impl PromptTemplates {
    pub fn builtin() -> Self {
        Self::from_sources(builtin_source).expect("built-in templates are valid")
    }

    /// Builds every template from a lookup keyed by file stem; missing entries
    /// fall back to the built-in text.
    pub fn from_sources<'s>(source: impl Fn(&str) -> Option<&'s str>) -> Result<Self, TemplateError> {
        let get = |name: &str| source(name).or_else(|| builtin_source(name)).unwrap_or_default();
        Ok(Self {
            context: ContextTemplateSet::from_sources(&source)?,
            extraction: Template::new(GUIDELINE_EXTRACTION, get(GUIDELINE_EXTRACTION), EXTRACTION_SLOTS)?,
            selection: Template::new(GUIDELINE_SELECTION, get(GUIDELINE_SELECTION), SELECTION_SLOTS)?,
        })
    }
}

impl Default for PromptTemplates {
    fn default() -> Self {
        Self::builtin()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_substitutes_once() {
        let t = Template::new("t", "a {{x}} b {{ y }}\n\n", &["x", "y"]).unwrap();
        assert_eq!(t.render(&[("x", "{{y}}"), ("y", "2")]).unwrap(), "a {{y}} b 2");
    }

    #[test]
    fn slot_rules() {
        assert!(matches!(
            Template::new("t", "{{x}} {{x}}", &["x"]),
            Err(TemplateError::SlotCount { count: 2, .. })
        ));
        assert!(matches!(Template::new("t", "none", &["x"]), Err(TemplateError::SlotCount { count: 0, .. })));
        assert!(matches!(Template::new("t", "{{x}} {{z}}", &["x"]), Err(TemplateError::UndeclaredSlot { .. })));
        assert!(matches!(Template::new("t", "{{x", &["x"]), Err(TemplateError::Unterminated { .. })));
        let t = Template::new("t", "{{x}}", &["x"]).unwrap();
        assert!(matches!(t.render(&[]), Err(TemplateError::MissingValue { .. })));
    }

    #[test]
    fn builtins_are_well_formed() {
        for (name, slots) in [
            (CONTEXT_IDENTIFICATION, IDENTIFICATION_SLOTS),
            (CONTEXT_MATCHING, MATCHING_SLOTS),
            (GUIDELINE_EXTRACTION, EXTRACTION_SLOTS),
            (GUIDELINE_SELECTION, SELECTION_SLOTS),
            (CONTEXT_EXAMPLES, &[][..]),
        ] {
            Template::new(name, builtin_source(name).unwrap(), slots).unwrap();
        }
    }
}
