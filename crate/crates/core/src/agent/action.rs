use crate::text::collapse_whitespace;
use crate::trajectory::{Action, ActionKind};

use super::AgentError;

/// Verbs that start an environment action written as a phrase (`go north`,
/// `take apple from table 1`, `click [link 'Forums']`).
const VERBS: &[&str] = &[
    "go", "take", "put", "open", "close", "toggle", "clean", "heat", "cool", "use", "examine", "inventory", "look",
    "slice", "click", "type", "hover", "press", "scroll", "goto", "go_back", "go_forward", "stop", "buy", "select",
];

/// Bracketed actions (`search[...]`, `click[...]`).
const BRACKETED: &[&str] = &["search[", "click["];

/// Extracts the first recognizable action line from a model response.
pub fn parse_action(text: &str) -> Result<Action, AgentError> {
    text.lines().find_map(parse_line).ok_or(AgentError::UnparsableAction)
}

fn parse_line(line: &str) -> Option<Action> {
    let mut line = line.trim();
    for label in ["action:", ">"] {
        if line.get(..label.len()).is_some_and(|h| h.eq_ignore_ascii_case(label)) {
            line = line[label.len()..].trim_start();
        }
    }
    let line = line.trim_end_matches(['.']).trim();
    if line.is_empty() {
        return None;
    }

    let lower = line.to_ascii_lowercase();
    if lower.starts_with("think[") && line.ends_with(']') {
        let inner = &line["think[".len()..line.len() - 1];
        return Action::new(ActionKind::Think, collapse_whitespace(inner)).ok();
    }
    if let Some(rest) = lower.strip_prefix("think:") {
        let inner = &line[line.len() - rest.len()..];
        return Action::new(ActionKind::Think, collapse_whitespace(inner)).ok();
    }

    if BRACKETED.iter().any(|p| lower.starts_with(p)) && line.ends_with(']') {
        return Some(Action::env(line));
    }
    let first_word = lower.split_whitespace().next()?;
    let verb = first_word.split('[').next().unwrap_or(first_word);
    VERBS.contains(&verb).then(|| Action::env(collapse_whitespace(line)))
}
