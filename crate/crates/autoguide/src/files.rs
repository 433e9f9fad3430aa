//! On-disk formats: JSON-lines trajectories, store documents, task suites,
//! prompt-template directories and pretty JSON outputs.

use std::fs;
use std::path::Path;

use autoguide_core::sim::Task;
use autoguide_core::template::PromptTemplates;
use autoguide_core::{GuidelineStore, Trajectory};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

/// Writes `contents`, creating parent directories.
pub fn write_text(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::data(path, e))?;
    text.push('\n');
    write_text(path, &text)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    serde_json::from_str(&read_text(path)?).map_err(|e| CliError::data(path, e))
}

/// One JSON document per line; blank lines are skipped.
pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, CliError> {
    let text = read_text(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(line).map_err(|e| CliError::data(path, format!("line {}: {e}", i + 1)))?;
        out.push(value);
    }
    Ok(out)
}

pub fn to_jsonl<T: Serialize>(values: &[T]) -> String {
    let mut out = String::new();
    for v in values {
        out.push_str(&serde_json::to_string(v).expect("value serializes"));
        out.push('\n');
    }
    out
}

/// Reads trajectories and rejects invalid ones, reporting the line number.
pub fn read_trajectories(path: &Path) -> Result<Vec<Trajectory>, CliError> {
    let trajectories: Vec<Trajectory> = read_jsonl(path)?;
    for (i, t) in trajectories.iter().enumerate() {
        for warning in t.validate().map_err(|e| CliError::data(path, format!("trajectory {}: {e}", i + 1)))? {
            log::warn!("{}: trajectory {}: {warning:?}", path.display(), i + 1);
        }
    }
    Ok(trajectories)
}

pub fn load_store(path: &Path) -> Result<GuidelineStore, CliError> {
    GuidelineStore::from_json(&read_text(path)?).map_err(|e| CliError::data(path, e))
}

pub fn save_store(path: &Path, store: &GuidelineStore) -> Result<(), CliError> {
    write_text(path, &store.to_json())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Suite {
    pub tasks: Vec<Task>,
}

pub fn read_suite(path: &Path) -> Result<Vec<Task>, CliError> {
    let suite: Suite = read_json(path)?;
    for task in &suite.tasks {
        task.validate().map_err(|e| CliError::data(path, e))?;
    }
    Ok(suite.tasks)
}

pub fn write_suite(path: &Path, tasks: &[Task]) -> Result<(), CliError> {
    write_json(path, &Suite { tasks: tasks.to_vec() })
}

/// Loads `<stem>.txt` files from `dir`; missing files use the built-in text.
pub fn load_templates(dir: Option<&Path>) -> Result<PromptTemplates, CliError> {
    let Some(dir) = dir else {
        return Ok(PromptTemplates::builtin());
    };
    if !dir.is_dir() {
        return Err(CliError::io(dir, std::io::Error::new(std::io::ErrorKind::NotFound, "template directory not found")));
    }
    let mut sources = Vec::new();
    for name in [
        autoguide_core::template::CONTEXT_IDENTIFICATION,
        autoguide_core::template::CONTEXT_MATCHING,
        autoguide_core::template::GUIDELINE_EXTRACTION,
        autoguide_core::template::GUIDELINE_SELECTION,
        autoguide_core::template::CONTEXT_EXAMPLES,
    ] {
        let path = dir.join(format!("{name}.txt"));
        if path.is_file() {
            sources.push((name, read_text(&path)?));
        }
    }
    let templates = PromptTemplates::from_sources(|name| {
        sources.iter().find(|(n, _)| *n == name).map(|(_, text)| text.as_str())
    })?;
    Ok(templates)
}
