//! Test-time agent: per-step context identification, guideline selection,
//! prompt assembly and the episode loop.

mod action;
mod prompt;
mod select;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::context::{identify_context, Context, ContextError, MatchMode};
use crate::lm::{ChatMessage, ChatRequest, LmError, LmStack};
use crate::sim::{EnvError, Environment};
use crate::store::{Guideline, GuidelineStore};
use crate::template::{PromptTemplates, TemplateError};
use crate::trajectory::{Action, Step, Trajectory, TrajectoryError};

pub use action::parse_action;
pub use prompt::{assemble_action_prompt, render_action_prompt, ACTION_ELICITATION};
pub use select::select_guidelines;

/// Follow-up user message sent when the agent's reply holds no action.
pub const REPROMPT: &str = "Respond with exactly one action.";
/// Reprompts allowed per step before the episode is aborted.
pub const MAX_REPROMPTS: usize = 2;
/// Observation recorded after a think action; the environment is not stepped.
pub const THINK_OBSERVATION: &str = "OK.";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AgentError {
    #[error("invalid agent config: {0}")]
    InvalidConfig(String),
    #[error("model reply contains no recognizable action")]
    UnparsableAction,
    #[error(transparent)]
    Lm(#[from] LmError),
    #[error(transparent)]
    Context(#[from] ContextError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuidelineMode {
    /// No guidelines.
    None,
    /// Every stored guideline, unfiltered.
    AllGuidelines,
    /// Guidelines filed under the current context, top-k selected.
    #[default]
    ContextAware,
}

impl GuidelineMode {
    pub const ALL: [GuidelineMode; 3] = [GuidelineMode::None, GuidelineMode::AllGuidelines, GuidelineMode::ContextAware];

    pub fn name(self) -> &'static str {
        match self {
            GuidelineMode::None => "none",
            GuidelineMode::AllGuidelines => "all_guidelines",
            GuidelineMode::ContextAware => "context_aware",
        }
    }
}

impl fmt::Display for GuidelineMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GuidelineMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        GuidelineMode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown guideline mode `{s}` (expected none, all_guidelines or context_aware)"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    /// Guidelines kept by top-k selection.
    pub k: usize,
    pub max_steps: usize,
    /// Example episodes shown at the top of every agent prompt.
    pub few_shot: Vec<String>,
    /// Reflections from earlier attempts, shown after the guidelines.
    pub feedback: Vec<String>,
    pub guideline_mode: GuidelineMode,
    pub match_mode: MatchMode,
    /// Show the contexts identified at earlier steps in later prompts.
    pub include_prior_contexts: bool,
    /// Reuse the previous step's context when the observation is unchanged.
    pub cache_context: bool,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            k: 2,
            max_steps: 20,
            few_shot: Vec::new(),
            feedback: Vec::new(),
            guideline_mode: GuidelineMode::ContextAware,
            match_mode: MatchMode::Lm,
            include_prior_contexts: true,
            cache_context: false,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        if self.k == 0 {
            return Err(AgentError::InvalidConfig("k must be at least 1".into()));
        }
        if self.max_steps == 0 {
            return Err(AgentError::InvalidConfig("max_steps must be at least 1".into()));
        }
        Ok(())
    }
}

/// One agent step as written to transcripts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub step: usize,
    pub context: Option<String>,
    pub prompt_fingerprint: String,
    pub action: Action,
    pub observation: String,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub trajectory: Trajectory,
    pub success: bool,
    /// Always the return of `trajectory`.
    pub reward: f64,
    pub steps_taken: usize,
    /// Context identified at each step; `None` when none was identified.
    pub per_step_contexts: Vec<Option<Context>>,
    pub per_step_guidelines: Vec<Vec<Guideline>>,
    /// Full text of every agent prompt, in step order.
    #[serde(skip)]
    pub prompts: Vec<String>,
    pub transcript: Vec<TranscriptEntry>,
    /// Why the episode stopped early, if it did.
    pub aborted: Option<String>,
}

/// Runs one episode on an environment that has already been reset.
///
/// Each step identifies the context (context-aware mode only), gathers the
/// guidelines for the mode, prompts the agent model, parses its action and
/// applies it. The loop ends when the environment reports a terminal state or
/// after `max_steps` steps. A reply without an action is reprompted up to
/// [`MAX_REPROMPTS`] times; if the agent still gives none, the episode ends as
/// a failure with `aborted` set.
pub fn run_episode(
    env: &mut dyn Environment,
    store: &GuidelineStore,
    config: &AgentConfig,
    templates: &PromptTemplates,
    lm: &LmStack<'_>,
) -> Result<EpisodeResult, AgentError> {
    config.validate()?;
    let start = env.handle();
    let mut trajectory = Trajectory::new(env.task_id(), env.instruction());
    trajectory.final_observation = Some(start.observation);

    let mut contexts: Vec<String> = Vec::new();
    let mut per_step_contexts = Vec::new();
    let mut per_step_guidelines = Vec::new();
    let mut prompts = Vec::new();
    let mut transcript = Vec::new();
    let mut aborted = None;
    let mut done = start.done;
    let mut previous: Option<(String, Option<Context>)> = None;

    while !done && trajectory.len() < config.max_steps {
        let t = trajectory.len();
        let observation = trajectory.final_observation.clone().unwrap_or_default();
        let history: &[String] = if config.include_prior_contexts { &contexts } else { &[] };
        let partial = trajectory.prefix(t)?.with_contexts(history);

        let context = match config.guideline_mode {
            GuidelineMode::ContextAware => match &previous {
                Some((obs, ctx)) if config.cache_context && *obs == observation => ctx.clone(),
                _ => match identify_context(&partial, &templates.context, lm) {
                    Ok(ctx) => Some(ctx),
                    Err(ContextError::EmptyContext) => {
                        log::debug!("{}: empty context at step {t}", trajectory.task_id);
                        None
                    }
                    Err(err) => return Err(err.into()),
                },
            },
            _ => None,
        };
        let guidelines = match (config.guideline_mode, &context) {
            (GuidelineMode::None, _) | (GuidelineMode::ContextAware, None) => Vec::new(),
            (GuidelineMode::AllGuidelines, _) => store.all_guidelines().cloned().collect(),
            (GuidelineMode::ContextAware, Some(ctx)) => {
                select_guidelines(ctx, &partial, store, config.k, templates, lm, config.match_mode)?
            }
        };

        let request = assemble_action_prompt(&partial, context.as_ref(), &guidelines, config, lm);
        let prompt_fingerprint = request.fingerprint();
        prompts.push(request.final_user_message().unwrap_or_default().into());
        let Some(action) = act(lm, request)? else {
            aborted = Some(format!("no parsable action after {MAX_REPROMPTS} reprompts at step {t}"));
            break;
        };

        let (next, reward, step_done) = if action.is_think() {
            (THINK_OBSERVATION.into(), 0.0, false)
        } else {
            let outcome = env.step(&action)?;
            (outcome.observation, outcome.reward, outcome.done)
        };
        done = step_done;

        transcript.push(TranscriptEntry {
            step: t,
            context: context.as_ref().map(|c| c.raw().into()),
            prompt_fingerprint,
            action: action.clone(),
            observation: next.clone(),
            reward,
        });
        trajectory.steps.push(Step::new(observation.clone(), action, reward));
        trajectory.final_observation = Some(next);
        contexts.push(context.as_ref().map(|c| c.raw().into()).unwrap_or_default());
        per_step_contexts.push(context.clone());
        per_step_guidelines.push(guidelines);
        previous = Some((observation, context));
    }

    trajectory.terminated = done;
    Ok(EpisodeResult {
        success: aborted.is_none() && env.success(),
        reward: trajectory.total_return(),
        steps_taken: trajectory.len(),
        trajectory,
        per_step_contexts,
        per_step_guidelines,
        prompts,
        transcript,
        aborted,
    })
}

/// Asks the agent model for an action, reprompting on unparsable replies.
fn act(lm: &LmStack<'_>, mut request: ChatRequest) -> Result<Option<Action>, AgentError> {
    for attempt in 0..=MAX_REPROMPTS {
        let reply = lm.complete(&request)?.text;
        match parse_action(&reply) {
            Ok(action) => return Ok(Some(action)),
            Err(_) if attempt < MAX_REPROMPTS => {
                log::debug!("unparsable agent reply {reply:?}; reprompting");
                request.messages.push(ChatMessage::assistant(reply));
                request.messages.push(ChatMessage::user(REPROMPT));
            }
            Err(_) => log::warn!("unparsable agent reply {reply:?}; giving up"),
        }
    }
    Ok(None)
}
