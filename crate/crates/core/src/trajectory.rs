//! Trajectories, returns and contrastive pairs.
//!
//! A trajectory is the sequence `(x0, a0, r0, x1, a1, r1, ...)` of one attempt at
//! a task. Each [`Step`] holds the observation the agent saw, the action it took
//! in response and the reward that action earned. The observation reached after
//! the last action, when known, is kept in [`Trajectory::final_observation`].

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::collapse_whitespace;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrajectoryError {
    #[error("action text is empty")]
    EmptyAction,
    #[error("reward at timestep {timestep} is not finite")]
    NonFiniteReward { timestep: usize },
    #[error("cut {cut} is out of range for a trajectory of length {len}")]
    OutOfRange { cut: usize, len: usize },
    #[error("trajectory is empty")]
    EmptyTrajectory,
    #[error("trajectories never deviate")]
    NoDeviation,
    #[error("task ids differ: {positive} vs {negative}")]
    TaskMismatch { positive: String, negative: String },
    #[error("positive return {positive} is not strictly greater than negative return {negative}")]
    NotContrastive { positive: f64, negative: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    Environment,
    Think,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Action {
    pub kind: ActionKind,
    pub text: String,
}

impl Action {
    pub fn new(kind: ActionKind, text: impl Into<String>) -> Result<Self, TrajectoryError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(TrajectoryError::EmptyAction);
        }
        Ok(Self { kind, text })
    }

    /// Environment action. Panics on blank text; use [`Action::new`] for untrusted input.
    pub fn env(text: impl Into<String>) -> Self {
        Self::new(ActionKind::Environment, text).expect("environment action text must be nonempty")
    }

    /// Think action. Panics on blank text; use [`Action::new`] for untrusted input.
    pub fn think(text: impl Into<String>) -> Self {
        Self::new(ActionKind::Think, text).expect("think action text must be nonempty")
    }

    pub fn is_think(&self) -> bool {
        self.kind == ActionKind::Think
    }

    /// Whitespace-normalized action text used for equality during deviation search.
    pub fn normalized(&self) -> String {
        collapse_whitespace(&self.text)
    }

    /// Two actions are the same when their kinds agree and their normalized texts
    /// are byte-equal.
    pub fn same_as(&self, other: &Action) -> bool {
        self.kind == other.kind && self.normalized() == other.normalized()
    }

    /// Prompt rendering; think actions are shown as `think: ...`.
    pub fn render(&self) -> String {
        match self.kind {
            ActionKind::Environment => collapse_whitespace(&self.text),
            ActionKind::Think => format!("think: {}", collapse_whitespace(&self.text)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    #[serde(rename = "obs")]
    pub observation: String,
    pub action: Action,
    pub reward: f64,
}

impl Step {
    pub fn new(observation: impl Into<String>, action: Action, reward: f64) -> Self {
        Self { observation: observation.into(), action, reward }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub task_id: String,
    pub instruction: String,
    pub steps: Vec<Step>,
    pub terminated: bool,
    /// Observation reached after the last step's action, if recorded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_observation: Option<String>,
}

/// Non-fatal findings from [`Trajectory::validate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TrajectoryWarning {
    /// A successful trajectory ends with a think action.
    TrailingThink { task_id: String },
}

impl Trajectory {
    pub fn new(task_id: impl Into<String>, instruction: impl Into<String>) -> Self {
        Self {
            task_id: task_id.into(),
            instruction: instruction.into(),
            steps: Vec::new(),
            terminated: false,
            final_observation: None,
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Sum of all step rewards.
    pub fn total_return(&self) -> f64 {
        trajectory_return(self)
    }

    /// Checks the data invariants that deserialization cannot enforce.
    pub fn validate(&self) -> Result<Vec<TrajectoryWarning>, TrajectoryError> {
        for (t, step) in self.steps.iter().enumerate() {
            if step.action.text.trim().is_empty() {
                return Err(TrajectoryError::EmptyAction);
            }
            if !step.reward.is_finite() {
                return Err(TrajectoryError::NonFiniteReward { timestep: t });
            }
        }
        let mut warnings = Vec::new();
        let successful = self.terminated && self.total_return() > 0.0;
        if successful && self.steps.last().is_some_and(|s| s.action.is_think()) {
            warnings.push(TrajectoryWarning::TrailingThink { task_id: self.task_id.clone() });
        }
        Ok(warnings)
    }

    /// The partial trajectory `(x0, a0, ..., x_cut)`.
    ///
    /// `cut == len` is only addressable when the final observation is recorded.
    pub fn prefix(&self, cut: usize) -> Result<PartialTrajectory<'_>, TrajectoryError> {
        prefix(self, cut)
    }

    /// Full prompt rendering used when a whole trajectory is shown to a model.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "Task: {}", self.instruction.trim());
        for step in &self.steps {
            let _ = writeln!(out, "Observation: {}", step.observation.trim());
            let _ = writeln!(out, "Action: {}", step.action.render());
        }
        if let Some(obs) = &self.final_observation {
            let _ = writeln!(out, "Observation: {}", obs.trim());
        }
        let _ = write!(out, "Return: {}", self.total_return());
        out
    }
}

/// `R(τ) = Σ_t r_t`; zero for an empty trajectory.
pub fn trajectory_return(trajectory: &Trajectory) -> f64 {
    trajectory.steps.iter().map(|s| s.reward).sum()
}

/// One element of a partial trajectory's contents.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Element<'a> {
    Observation(&'a str),
    Context(&'a str),
    Action(&'a Action),
}

/// View of `τ[:cut] = (x0, a0, ..., x_cut)` over a borrowed trajectory.
#[derive(Debug, Clone, Copy)]
pub struct PartialTrajectory<'a> {
    base: &'a Trajectory,
    cut: usize,
    contexts: &'a [String],
}

pub fn prefix(trajectory: &Trajectory, cut: usize) -> Result<PartialTrajectory<'_>, TrajectoryError> {
    let len = trajectory.len();
    let addressable = cut < len || (cut == len && trajectory.final_observation.is_some());
    if !addressable {
        return Err(TrajectoryError::OutOfRange { cut, len });
    }
    Ok(PartialTrajectory { base: trajectory, cut, contexts: &[] })
}

impl<'a> PartialTrajectory<'a> {
    pub fn base(&self) -> &'a Trajectory {
        self.base
    }

    pub fn cut(&self) -> usize {
        self.cut
    }

    /// Attaches per-step context annotations; entry `i` is rendered between
    /// observation `i` and action `i`. Empty entries and entries past the cut
    /// are ignored.
    pub fn with_contexts(mut self, contexts: &'a [String]) -> Self {
        self.contexts = contexts;
        self
    }

    /// The observation the partial trajectory ends at.
    pub fn current_observation(&self) -> &'a str {
        match self.base.steps.get(self.cut) {
            Some(step) => &step.observation,
            None => self.base.final_observation.as_deref().unwrap_or_default(),
        }
    }

    pub fn contents(&self) -> Vec<Element<'a>> {
        let mut out = Vec::with_capacity(self.cut * 3 + 1);
        for (t, step) in self.base.steps[..self.cut].iter().enumerate() {
            out.push(Element::Observation(&step.observation));
            if let Some(ctx) = self.contexts.get(t).filter(|c| !c.is_empty()) {
                out.push(Element::Context(ctx));
            }
            out.push(Element::Action(&step.action));
        }
        out.push(Element::Observation(self.current_observation()));
        out
    }

    /// Owned trajectory holding steps `0..cut` with `x_cut` as its final observation.
    pub fn to_trajectory(&self) -> Trajectory {
        Trajectory {
            task_id: self.base.task_id.clone(),
            instruction: self.base.instruction.clone(),
            steps: self.base.steps[..self.cut].to_vec(),
            terminated: false,
            final_observation: Some(self.current_observation().into()),
        }
    }

    /// Prompt rendering. The last observation is labelled `Current observation`.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "Task: {}", self.base.instruction.trim());
        let contents = self.contents();
        let last = contents.len() - 1;
        for (i, element) in contents.iter().enumerate() {
            match element {
                Element::Observation(obs) if i == last => {
                    let _ = write!(out, "Current observation: {}", obs.trim());
                }
                Element::Observation(obs) => {
                    let _ = writeln!(out, "Observation: {}", obs.trim());
                }
                Element::Context(ctx) => {
                    let _ = writeln!(out, "Context: {}", ctx.trim());
                }
                Element::Action(action) => {
                    let _ = writeln!(out, "Action: {}", action.render());
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviationMode {
    /// Think actions take part in the comparison.
    #[default]
    AllActions,
    /// Think actions are skipped; the returned timestep indexes the positive trajectory.
    EnvActionsOnly,
}

impl DeviationMode {
    fn compares(self, action: &Action) -> bool {
        match self {
            DeviationMode::AllActions => true,
            DeviationMode::EnvActionsOnly => !action.is_think(),
        }
    }
}

/// Smallest timestep of `positive` whose compared action differs from the
/// corresponding compared action of `negative`.
pub fn find_deviation(
    positive: &Trajectory,
    negative: &Trajectory,
    mode: DeviationMode,
) -> Result<usize, TrajectoryError> {
    if positive.is_empty() || negative.is_empty() {
        return Err(TrajectoryError::EmptyTrajectory);
    }
    fn compared(t: &Trajectory, mode: DeviationMode) -> impl Iterator<Item = (usize, &Action)> {
        t.steps.iter().enumerate().filter(move |(_, s)| mode.compares(&s.action)).map(|(i, s)| (i, &s.action))
    }
    compared(positive, mode)
        .zip(compared(negative, mode))
        .find(|((_, a), (_, b))| !a.same_as(b))
        .map(|((t, _), _)| t)
        .ok_or(TrajectoryError::NoDeviation)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastivePair {
    pub id: String,
    pub task_id: String,
    pub positive: Trajectory,
    pub negative: Trajectory,
    pub deviation: usize,
}

impl ContrastivePair {
    /// Checks the pair invariants and computes the deviation timestep.
    pub fn new(
        id: impl Into<String>,
        positive: Trajectory,
        negative: Trajectory,
        mode: DeviationMode,
    ) -> Result<Self, TrajectoryError> {
        if positive.task_id != negative.task_id {
            return Err(TrajectoryError::TaskMismatch {
                positive: positive.task_id,
                negative: negative.task_id,
            });
        }
        let (rp, rn) = (positive.total_return(), negative.total_return());
        // NaN-safe: anything but a strict improvement is rejected.
        if rp.partial_cmp(&rn) != Some(Ordering::Greater) {
            return Err(TrajectoryError::NotContrastive { positive: rp, negative: rn });
        }
        let deviation = find_deviation(&positive, &negative, mode)?;
        Ok(Self { id: id.into(), task_id: positive.task_id.clone(), positive, negative, deviation })
    }

    /// The shared prefix `τ+[:deviation]` the context is identified from.
    pub fn shared_prefix(&self) -> PartialTrajectory<'_> {
        PartialTrajectory { base: &self.positive, cut: self.deviation, contexts: &[] }
    }
}

/// Pairs every trajectory with the best trajectory of its task.
///
/// Trajectories are grouped by task id. Within a group the highest-return
/// trajectory (earliest on ties) becomes the positive, and every trajectory with
/// a strictly lower return becomes a negative. Pairs that never deviate are
/// dropped. Output is ordered by task id, then by the negative's ingest order;
/// pair ids are `"{task_id}#{ingest index of the negative}"`.
pub fn pair_dataset(trajectories: &[Trajectory], mode: DeviationMode) -> Vec<ContrastivePair> {
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, t) in trajectories.iter().enumerate() {
        groups.entry(t.task_id.as_str()).or_default().push(i);
    }

    let mut pairs = Vec::new();
    for (task_id, members) in groups {
        let best = members.iter().copied().fold(members[0], |best, i| {
            if trajectories[i].total_return() > trajectories[best].total_return() {
                i
            } else {
                best
            }
        });
        let best_return = trajectories[best].total_return();
        for &i in &members {
            if trajectories[i].total_return().partial_cmp(&best_return) != Some(Ordering::Less) {
                continue;
            }
            let id = format!("{task_id}#{i}");
            match ContrastivePair::new(id, trajectories[best].clone(), trajectories[i].clone(), mode) {
                Ok(pair) => pairs.push(pair),
                Err(err) => log::debug!("dropping pair for task {task_id} (negative {i}): {err}"),
            }
        }
    }
    pairs
}
