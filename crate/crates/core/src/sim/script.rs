//! Scripted model stack built from task ground truth.
//!
//! * Context model: reports each state's ground-truth context, keyed on the
//!   current observation.
//! * Extraction model: turns a decision context into the guideline
//!   `When <context>, you should <oracle action>.`
//! * Agent model: follows the first known guideline present in its prompt;
//!   otherwise takes the state's default action (a decoy at decisions).
//! * Matching model answers `NONE`; selection model answers `1`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::context::Context;
use crate::lm::{RoleModels, ScriptTable, ScriptedRule};
use crate::store::{Guideline, GuidelineStore};

use super::{ScriptedState, Task};

/// Agent reply when no rule matches (an action no environment accepts).
pub const AGENT_FALLBACK: &str = "look around";
pub const CONTEXT_FALLBACK: &str = "In an unfamiliar situation";

/// Guideline text the scripted extraction model writes for `context`.
pub fn guideline_text(context: &str, action: &str) -> String {
    let mut chars = context.chars();
    let lowered: String = match chars.next() {
        Some(first) => first.to_lowercase().chain(chars).collect(),
        None => String::new(),
    };
    format!("When {lowered}, you should {action}.")
}

/// A misleading guideline filed under a context no task visits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Distractor {
    pub context: String,
    pub guideline: String,
    /// What the scripted agent does when it obeys the distractor.
    pub action: String,
}

impl Default for Distractor {
    fn default() -> Self {
        let context = String::from("At the observatory dome");
        let action = String::from("go up");
        Self { guideline: guideline_text(&context, &action), context, action }
    }
}

/// Returns a copy of `store` with the distractor filed under a new first key.
pub fn inject_distractor(store: &GuidelineStore, distractor: &Distractor) -> GuidelineStore {
    let mut out = GuidelineStore::new();
    let context = Context::new(&distractor.context).expect("distractor context is nonempty");
    let entry = out.insert_context(context);
    out.add_guideline(
        entry,
        Guideline { text: distractor.guideline.clone(), source_pair: "distractor".into(), deviation: 0, created_at: 0 },
    );
    for e in store.entries() {
        let entry = out.insert_context(e.context.clone());
        for g in &e.guidelines {
            out.add_guideline(entry, g.clone());
        }
    }
    out
}

/// Rule table for every role. Rules are filtered by the model names in
/// `models`, so the roles must use distinct names.
pub fn scripted_table(tasks: &[Task], models: &RoleModels, distractor: Option<&Distractor>) -> ScriptTable {
    let states: Vec<ScriptedState> = tasks.iter().flat_map(Task::scripted_states).collect();
    let mut rules: Vec<ScriptedRule> = Vec::new();
    let mut push = |rule: ScriptedRule| {
        if !rules.iter().any(|r| r.model == rule.model && r.contains == rule.contains) {
            rules.push(rule);
        }
    };

    if let Some(d) = distractor {
        push(ScriptedRule::for_model(&models.agent, &d.guideline, &d.action));
    }
    for s in states.iter().filter(|s| s.is_decision()) {
        push(ScriptedRule::for_model(&models.agent, guideline_text(&s.context, &s.oracle_action), &s.oracle_action));
    }
    for s in &states {
        push(ScriptedRule::for_model(&models.agent, current(&s.observation), &s.default_action));
    }
    push(ScriptedRule::for_model(&models.agent, "", AGENT_FALLBACK));

    for s in &states {
        push(ScriptedRule::for_model(&models.context, current(&s.observation), &s.context));
    }
    push(ScriptedRule::for_model(&models.context, "", CONTEXT_FALLBACK));

    for s in states.iter().filter(|s| s.is_decision()) {
        push(ScriptedRule::for_model(
            &models.extraction,
            format!("Context of interest: {}\n", s.context),
            guideline_text(&s.context, &s.oracle_action),
        ));
    }
    push(ScriptedRule::for_model(&models.matching, "", "NONE"));
    push(ScriptedRule::for_model(&models.selection, "", "1"));
    ScriptTable { rules, default: None }
}

fn current(observation: &str) -> String {
    format!("Current observation: {observation}")
}
