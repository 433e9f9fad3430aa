use alloc::string::String;

use crate::context::Context;
use crate::lm::{ChatRequest, LmRole, LmStack};
use crate::store::Guideline;
use crate::trajectory::PartialTrajectory;

use super::AgentConfig;

pub const ACTION_ELICITATION: &str = "Respond with your next action on a single line.\nAction:";

/// Renders the agent prompt.
///
/// Blocks, in order: few-shot examples, the task and history, the current
/// context, the guidelines, feedback from past attempts and the action
/// elicitation. Empty blocks are left out entirely.
pub fn render_action_prompt(
    partial: &PartialTrajectory<'_>,
    context: Option<&Context>,
    guidelines: &[Guideline],
    config: &AgentConfig,
) -> String {
    let mut out = String::new();
    if !config.few_shot.is_empty() {
        out.push_str("Here are examples of how to act:\n\n");
        for example in &config.few_shot {
            out.push_str(example.trim());
            out.push_str("\n\n");
        }
        out.push_str("Now it is your turn.\n\n");
    }
    out.push_str(&partial.render());
    if let Some(context) = context {
        out.push_str("\n\nCurrent context: ");
        out.push_str(context.raw());
    }
    bullets(&mut out, "Guidelines:", guidelines.iter().map(|g| g.text.as_str()));
    bullets(&mut out, "Feedback from past attempts:", config.feedback.iter().map(String::as_str));
    out.push_str("\n\n");
    out.push_str(ACTION_ELICITATION);
    out
}

fn bullets<'a>(out: &mut String, heading: &str, items: impl Iterator<Item = &'a str>) {
    let mut items = items.map(str::trim).filter(|s| !s.is_empty()).peekable();
    if items.peek().is_none() {
        return;
    }
    out.push_str("\n\n");
    out.push_str(heading);
    for item in items {
        out.push_str("\n- ");
        out.push_str(item);
    }
}

/// The agent-role request for [`render_action_prompt`].
pub fn assemble_action_prompt(
    partial: &PartialTrajectory<'_>,
    context: Option<&Context>,
    guidelines: &[Guideline],
    config: &AgentConfig,
    lm: &LmStack<'_>,
) -> ChatRequest {
    lm.request(LmRole::Agent, render_action_prompt(partial, context, guidelines, config))
}
