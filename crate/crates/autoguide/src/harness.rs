//! Evaluation harness: runs episodes over a task suite and summarizes them.

use std::fmt::Write;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use autoguide_core::agent::{run_episode, TranscriptEntry};
use autoguide_core::sim::{EnvFamily, Task};
use autoguide_core::template::PromptTemplates;
use autoguide_core::{AgentConfig, EpisodeResult, GuidelineMode, GuidelineStore, LmStack, RoleModels};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub mode: GuidelineMode,
    pub k: usize,
    pub tasks: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub mean_reward: f64,
    pub mean_steps: f64,
}

impl ReportRow {
    pub fn summarize(mode: GuidelineMode, k: usize, results: &[EpisodeResult]) -> Self {
        let tasks = results.len();
        let successes = results.iter().filter(|r| r.success).count();
        let mean = |f: &dyn Fn(&EpisodeResult) -> f64| {
            if tasks == 0 {
                0.0
            } else {
                results.iter().map(f).sum::<f64>() / tasks as f64
            }
        };
        Self {
            mode,
            k,
            tasks,
            successes,
            success_rate: if tasks == 0 { 0.0 } else { successes as f64 / tasks as f64 },
            mean_reward: mean(&|r| r.reward),
            mean_steps: mean(&|r| r.steps_taken as f64),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub seed: u64,
    pub k: usize,
    pub models: RoleModels,
    pub store_path: Option<String>,
    pub timestamp: Option<String>,
    pub backend: String,
    pub family: EnvFamily,
    pub distractor: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub rows: Vec<ReportRow>,
    pub metadata: ReportMetadata,
}

const HEADERS: [&str; 7] = ["mode", "k", "tasks", "successes", "success_rate", "mean_reward", "mean_steps"];

impl RunReport {
    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("report serializes");
        out.push('\n');
        out
    }

    /// Aligned plain-text table with the same numbers as the JSON rendering.
    pub fn to_table(&self) -> String {
        let cells: Vec<[String; 7]> = self
            .rows
            .iter()
            .map(|r| {
                [
                    r.mode.to_string(),
                    r.k.to_string(),
                    r.tasks.to_string(),
                    r.successes.to_string(),
                    r.success_rate.to_string(),
                    r.mean_reward.to_string(),
                    r.mean_steps.to_string(),
                ]
            })
            .collect();
        let mut widths = HEADERS.map(str::len);
        for row in &cells {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.len());
            }
        }
        let mut out = String::new();
        let mut line = |row: &[&str]| {
            let mut s = String::new();
            for (i, (c, w)) in row.iter().zip(widths).enumerate() {
                if i == 0 {
                    let _ = write!(s, "{c:<w$}");
                } else {
                    let _ = write!(s, "  {c:>w$}");
                }
            }
            out.push_str(s.trim_end());
            out.push('\n');
        };
        line(&HEADERS);
        for row in &cells {
            line(&row.iter().map(String::as_str).collect::<Vec<_>>());
        }
        out
    }
}

/// One line of a transcript file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub task_id: String,
    pub success: bool,
    pub reward: f64,
    pub steps_taken: usize,
    pub aborted: Option<String>,
    pub steps: Vec<TranscriptEntry>,
}

impl From<&EpisodeResult> for TranscriptRecord {
    fn from(r: &EpisodeResult) -> Self {
        Self {
            task_id: r.trajectory.task_id.clone(),
            success: r.success,
            reward: r.reward,
            steps_taken: r.steps_taken,
            aborted: r.aborted.clone(),
            steps: r.transcript.clone(),
        }
    }
}

/// Runs one episode per task on up to `jobs` threads. Results are ordered by
/// task id (ties keep suite order) whatever the completion order.
pub fn evaluate(
    tasks: &[Task],
    store: &GuidelineStore,
    config: &AgentConfig,
    templates: &PromptTemplates,
    lm: &LmStack<'_>,
    jobs: usize,
) -> Result<Vec<EpisodeResult>, CliError> {
    config.validate()?;
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<EpisodeResult, CliError>>>> =
        Mutex::new((0..tasks.len()).map(|_| None).collect());
    let worker = || loop {
        let i = next.fetch_add(1, Ordering::Relaxed);
        let Some(task) = tasks.get(i) else { break };
        let result = run_episode(&mut *task.environment(), store, config, templates, lm).map_err(CliError::from);
        slots.lock().unwrap_or_else(|p| p.into_inner())[i] = Some(result);
    };
    thread::scope(|s| {
        for _ in 1..jobs.clamp(1, tasks.len().max(1)) {
            s.spawn(worker);
        }
        worker();
    });
    let mut results = Vec::with_capacity(tasks.len());
    for slot in slots.into_inner().unwrap_or_else(|p| p.into_inner()) {
        results.push(slot.expect("every task ran")?);
    }
    results.sort_by(|a, b| a.trajectory.task_id.cmp(&b.trajectory.task_id));
    Ok(results)
}

/// Evaluated row together with its episodes.
pub struct ModeRun {
    pub row: ReportRow,
    pub results: Vec<EpisodeResult>,
}

/// Evaluates each mode over the same suite, rows ordered
/// none, all_guidelines, context_aware.
pub fn evaluate_modes(
    tasks: &[Task],
    store: &GuidelineStore,
    modes: &[GuidelineMode],
    base: &AgentConfig,
    templates: &PromptTemplates,
    lm: &LmStack<'_>,
    jobs: usize,
) -> Result<Vec<ModeRun>, CliError> {
    let mut modes = modes.to_vec();
    modes.sort();
    modes.dedup();
    modes
        .into_iter()
        .map(|mode| {
            let config = AgentConfig { guideline_mode: mode, ..base.clone() };
            let results = evaluate(tasks, store, &config, templates, lm, jobs)?;
            Ok(ModeRun { row: ReportRow::summarize(mode, config.k, &results), results })
        })
        .collect()
}

/// Context-aware evaluation per k; `k = 0` runs without guidelines.
pub fn ablate_k(
    tasks: &[Task],
    store: &GuidelineStore,
    k_list: &[usize],
    base: &AgentConfig,
    templates: &PromptTemplates,
    lm: &LmStack<'_>,
    jobs: usize,
) -> Result<Vec<ModeRun>, CliError> {
    k_list
        .iter()
        .map(|&k| {
            let config = if k == 0 {
                AgentConfig { guideline_mode: GuidelineMode::None, ..base.clone() }
            } else {
                AgentConfig { guideline_mode: GuidelineMode::ContextAware, k, ..base.clone() }
            };
            let results = evaluate(tasks, store, &config, templates, lm, jobs)?;
            Ok(ModeRun { row: ReportRow::summarize(config.guideline_mode, k, &results), results })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(mode: GuidelineMode, successes: usize, tasks: usize) -> ReportRow {
        ReportRow {
            mode,
            k: 2,
            tasks,
            successes,
            success_rate: successes as f64 / tasks as f64,
            mean_reward: 0.125,
            mean_steps: 7.5,
        }
    }

    fn report() -> RunReport {
        RunReport {
            rows: vec![row(GuidelineMode::None, 0, 20), row(GuidelineMode::ContextAware, 20, 20)],
            metadata: ReportMetadata {
                seed: 1,
                k: 2,
                models: RoleModels::scripted(),
                store_path: None,
                timestamp: None,
                backend: "scripted".into(),
                family: EnvFamily::BranchWorld,
                distractor: false,
            },
        }
    }

    #[test]
    fn table_and_json_carry_the_same_numbers() {
        let r = report();
        let table = r.to_table();
        let json: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines[0].split_whitespace().collect::<Vec<_>>(), HEADERS);
        for (line, row) in lines[1..].iter().zip(json["rows"].as_array().unwrap()) {
            let cells: Vec<&str> = line.split_whitespace().collect();
            assert_eq!(cells[0], row["mode"].as_str().unwrap());
            for (cell, key) in cells[1..].iter().zip(&HEADERS[1..]) {
                assert_eq!(cell.parse::<f64>().unwrap(), row[*key].as_f64().unwrap(), "{key}");
            }
        }
    }

    #[test]
    fn table_columns_align() {
        let table = report().to_table();
        let ends: Vec<usize> = table.lines().map(str::len).collect();
        assert!(ends.windows(2).all(|w| w[0] == w[1]), "{table}");
    }

    #[test]
    fn empty_suite_summarizes_to_zero() {
        let r = ReportRow::summarize(GuidelineMode::None, 1, &[]);
        assert_eq!((r.tasks, r.success_rate, r.mean_reward), (0, 0.0, 0.0));
    }
}
