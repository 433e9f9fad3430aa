//! Deterministic text environments with known optimal behaviour, plus an
//! offline-data generator and a scripted model stack derived from the same
//! ground truth.
//!
//! * BranchWorld: a route of corridors and branch rooms. Each branch has one
//!   correct direction; the others end the episode in a dead end.
//! * MiniShop: search, inspect and buy from a small catalog; the purchase is
//!   scored against the instruction's target product.

mod branch_world;
mod mini_shop;
mod script;

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trajectory::{Action, Step, Trajectory};

pub use branch_world::{
    BranchKind, BranchPoint, BranchWorldEnv, BranchWorldTask, CORRIDOR_CONTEXT, DEAD_END_OBSERVATION, FORWARD,
    GOAL_OBSERVATION, GOAL_STATE,
};
pub use mini_shop::{reward_fraction, reward_webshop, MiniShopEnv, MiniShopTask, Product, Target, BACK, BUY};
pub use script::{guideline_text, inject_distractor, scripted_table, Distractor, AGENT_FALLBACK, CONTEXT_FALLBACK};

pub const INVALID_ACTION: &str = "Invalid action.";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EnvError {
    #[error("the episode is over")]
    StepAfterDone,
    #[error("task {task_id} is invalid: {reason}")]
    InvalidTask { task_id: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Env(#[from] EnvError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub observation: String,
    pub reward: f64,
    pub done: bool,
}

/// Externally visible environment state.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvHandle {
    pub observation: String,
    pub done: bool,
    pub accumulated_reward: f64,
}

impl EnvHandle {
    fn start(observation: String) -> Self {
        Self { observation, done: false, accumulated_reward: 0.0 }
    }

    fn record(&mut self, observation: String, reward: f64, done: bool) -> StepOutcome {
        self.observation.clone_from(&observation);
        self.done = done;
        self.accumulated_reward += reward;
        StepOutcome { observation, reward, done }
    }
}

/// Text environment with a reset/step interface.
pub trait Environment {
    fn task_id(&self) -> &str;
    fn instruction(&self) -> &str;
    /// Restarts the task and returns the first observation.
    fn reset(&mut self, seed: u64) -> String;
    /// Applies an action. Unknown actions return [`INVALID_ACTION`] and leave
    /// the state unchanged; stepping a finished episode is an error.
    fn step(&mut self, action: &Action) -> Result<StepOutcome, EnvError>;
    fn handle(&self) -> EnvHandle;
    /// Whether the episode reached its goal.
    fn success(&self) -> bool;
}

/// One state on a task's oracle route, with the situation the scripted
/// context model reports there, the oracle action and the action the scripted
/// agent takes when no guideline tells it otherwise.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScriptedState {
    pub observation: String,
    pub context: String,
    pub oracle_action: String,
    pub default_action: String,
}

impl ScriptedState {
    /// Whether the scripted agent goes wrong here without a guideline.
    pub fn is_decision(&self) -> bool {
        self.oracle_action != self.default_action
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvFamily {
    BranchWorld,
    MiniShop,
}

impl EnvFamily {
    pub fn name(self) -> &'static str {
        match self {
            EnvFamily::BranchWorld => "branch_world",
            EnvFamily::MiniShop => "mini_shop",
        }
    }
}

impl fmt::Display for EnvFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EnvFamily {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [EnvFamily::BranchWorld, EnvFamily::MiniShop]
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| format!("unknown environment family `{s}` (expected branch_world or mini_shop)"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Task {
    BranchWorld(BranchWorldTask),
    MiniShop(MiniShopTask),
}

impl Task {
    pub fn family(&self) -> EnvFamily {
        match self {
            Task::BranchWorld(_) => EnvFamily::BranchWorld,
            Task::MiniShop(_) => EnvFamily::MiniShop,
        }
    }

    pub fn task_id(&self) -> &str {
        match self {
            Task::BranchWorld(t) => &t.task_id,
            Task::MiniShop(t) => &t.task_id,
        }
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        match self {
            Task::BranchWorld(t) => t.validate(),
            Task::MiniShop(t) => t.validate(),
        }
    }

    /// A fresh, reset environment for the task.
    pub fn environment(&self) -> Box<dyn Environment + Send> {
        let mut env: Box<dyn Environment + Send> = match self {
            Task::BranchWorld(t) => Box::new(BranchWorldEnv::new(t.clone())),
            Task::MiniShop(t) => Box::new(MiniShopEnv::new(t.clone())),
        };
        env.reset(0);
        env
    }

    pub fn oracle_actions(&self) -> Vec<Action> {
        match self {
            Task::BranchWorld(t) => t.oracle_actions(),
            Task::MiniShop(t) => t.oracle_actions(),
        }
    }

    pub fn scripted_states(&self) -> Vec<ScriptedState> {
        match self {
            Task::BranchWorld(t) => t.scripted_states(),
            Task::MiniShop(t) => t.scripted_states(),
        }
    }
}

/// Plays `actions` from a reset and records the trajectory. Stops early when
/// the episode ends.
pub fn rollout(task: &Task, actions: &[Action]) -> Result<Trajectory, EnvError> {
    let mut env = task.environment();
    let mut trajectory = Trajectory::new(task.task_id(), env.instruction());
    let mut observation = env.handle().observation;
    let mut done = false;
    for action in actions {
        if done {
            break;
        }
        let outcome = env.step(action)?;
        trajectory.steps.push(Step::new(core::mem::take(&mut observation), action.clone(), outcome.reward));
        observation = outcome.observation;
        done = outcome.done;
    }
    trajectory.terminated = done;
    trajectory.final_observation = Some(observation);
    Ok(trajectory)
}

/// Ground truth for one generated worse trajectory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Perturbation {
    pub task_id: String,
    /// Timestep at which the decoy replaced the oracle action.
    pub timestep: usize,
    pub decoy_action: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfflineData {
    pub tasks: Vec<Task>,
    /// Per task, the oracle trajectory followed by the perturbed one.
    pub trajectories: Vec<Trajectory>,
    pub perturbations: Vec<Perturbation>,
}

struct Planned {
    task: Task,
    /// Index of the perturbed decision in the oracle action sequence.
    timestep: usize,
    decoy: String,
}

/// Generates `n_tasks` tasks. Equal seeds give equal suites.
pub fn generate_tasks(family: EnvFamily, n_tasks: usize, seed: u64) -> Result<Vec<Task>, SimError> {
    Ok(plan(family, n_tasks, seed)?.into_iter().map(|p| p.task).collect())
}

/// Generates tasks (identical to [`generate_tasks`] for the same arguments)
/// with one oracle trajectory and one perturbed trajectory each.
///
/// The perturbed trajectory replaces exactly one uniformly chosen decision of
/// the oracle route with a decoy and then continues as the environment
/// allows. `perturb_rate` must lie in `(0, 1]`; exactly one decision is
/// perturbed regardless of its value so the deviation timestep is unambiguous.
pub fn generate_offline_data(
    family: EnvFamily,
    n_tasks: usize,
    perturb_rate: f64,
    seed: u64,
) -> Result<OfflineData, SimError> {
    if !(perturb_rate > 0.0 && perturb_rate <= 1.0) {
        return Err(SimError::InvalidArgument(format!("perturb_rate must be in (0, 1], got {perturb_rate}")));
    }
    let planned = plan(family, n_tasks, seed)?;
    let mut data = OfflineData { tasks: Vec::new(), trajectories: Vec::new(), perturbations: Vec::new() };
    for p in planned {
        let oracle = p.task.oracle_actions();
        let mut perturbed = oracle.clone();
        perturbed[p.timestep] = Action::env(p.decoy.clone());
        data.trajectories.push(rollout(&p.task, &oracle)?);
        data.trajectories.push(rollout(&p.task, &perturbed)?);
        data.perturbations.push(Perturbation {
            task_id: p.task.task_id().into(),
            timestep: p.timestep,
            decoy_action: p.decoy,
        });
        data.tasks.push(p.task);
    }
    Ok(data)
}

fn plan(family: EnvFamily, n_tasks: usize, seed: u64) -> Result<Vec<Planned>, SimError> {
    if n_tasks == 0 {
        return Err(SimError::InvalidArgument("n_tasks must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let planned = match family {
        EnvFamily::BranchWorld => (0..n_tasks).map(|i| plan_branch_world(i, &mut rng)).collect(),
        EnvFamily::MiniShop => plan_mini_shop(n_tasks, &mut rng)?,
    };
    for p in &planned {
        p.task.validate()?;
    }
    Ok(planned)
}

/// Task `i` has one to three branches. The perturbed branch is chosen
/// uniformly and is always of kind `i mod 4`, so any four consecutive tasks
/// cover every branch kind; the remaining branches get other kinds at random.
fn plan_branch_world(i: usize, rng: &mut ChaCha8Rng) -> Planned {
    let n_branches = rng.random_range(1..=3usize);
    let perturbed = rng.random_range(0..n_branches);
    let kind = BranchKind::ALL[i % 4];
    let mut others: Vec<BranchKind> = BranchKind::ALL.into_iter().filter(|k| *k != kind).collect();
    others.shuffle(rng);
    let mut others = others.into_iter();
    let layout: Vec<(bool, BranchKind)> = (0..n_branches)
        .map(|b| {
            let kind = if b == perturbed { kind } else { others.next().expect("at most three other kinds") };
            (rng.random_bool(0.5), kind)
        })
        .collect();
    let corridor_after = rng.random_bool(0.5);
    let decoys = kind.decoy_actions();
    let decoy = decoys[rng.random_range(0..decoys.len())].clone();

    let task = BranchWorldTask::build(&format!("branch-{i:03}"), &layout, corridor_after);
    let timestep = task.branch_timesteps()[perturbed];
    Planned { task: Task::BranchWorld(task), timestep, decoy }
}

const PRODUCT_TYPES: [&str; 6] = ["green tea", "coffee beans", "shampoo", "wool socks", "headphones", "notebook"];
const ATTRIBUTES: [&str; 8] =
    ["organic", "vegan", "fragrance free", "recycled", "wireless", "gluten free", "handmade", "travel size"];
const OPTIONS: [&str; 6] = ["small", "large", "pack of 2", "pack of 6", "blue", "black"];

/// Every task targets a distinct (type, attribute pair) so search queries are
/// unique within a suite. Catalogs hold the exact target plus degraded copies
/// (wrong type, a missing attribute, a missing option or over the price cap),
/// so the target is the unique optimum.
fn plan_mini_shop(n_tasks: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Planned>, SimError> {
    let mut combos = Vec::new();
    for ty in PRODUCT_TYPES {
        for (i, a) in ATTRIBUTES.iter().enumerate() {
            for b in &ATTRIBUTES[i + 1..] {
                combos.push((ty, *a, *b));
            }
        }
    }
    if n_tasks > combos.len() {
        return Err(SimError::InvalidArgument(format!("mini_shop supports at most {} tasks", combos.len())));
    }
    combos.shuffle(rng);

    let set = |items: &[&str]| items.iter().map(|s| String::from(*s)).collect();
    let mut planned = Vec::with_capacity(n_tasks);
    for (i, &(ty, a, b)) in combos[..n_tasks].iter().enumerate() {
        let option = OPTIONS[rng.random_range(0..OPTIONS.len())];
        let cap_dollars = rng.random_range(15..=40u32);
        let target = Target {
            product_type: ty.into(),
            price_cap: f64::from(cap_dollars),
            attributes: set(&[a, b]),
            options: set(&[option]),
        };
        let cents = |c: u32| f64::from(c) / 100.0;
        let good_price = cap_dollars * 100 - rng.random_range(100..=500u32);

        let size = rng.random_range(4..=8usize);
        let mut catalog = Vec::with_capacity(size);
        catalog.push(Product {
            id: String::new(),
            product_type: ty.into(),
            price: cents(good_price),
            attributes: target.attributes.clone(),
            options: target.options.clone(),
        });
        for d in 1..size {
            let mut p = catalog[0].clone();
            p.price = cents(rng.random_range(100..=cap_dollars * 100));
            match d % 4 {
                1 => {
                    let others: Vec<&str> = PRODUCT_TYPES.iter().copied().filter(|t| *t != ty).collect();
                    p.product_type = others[rng.random_range(0..others.len())].into();
                }
                2 => {
                    let others: Vec<&str> = ATTRIBUTES.iter().copied().filter(|x| *x != a && *x != b).collect();
                    let keep = if rng.random_bool(0.5) { a } else { b };
                    p.attributes = set(&[keep, others[rng.random_range(0..others.len())]]);
                }
                3 => {
                    let others: Vec<&str> = OPTIONS.iter().copied().filter(|o| *o != option).collect();
                    p.options = set(&[others[rng.random_range(0..others.len())]]);
                }
                _ => p.price = cents(cap_dollars * 100 + rng.random_range(100..=1500u32)),
            }
            catalog.push(p);
        }
        catalog.shuffle(rng);
        for (n, p) in catalog.iter_mut().enumerate() {
            p.id = format!("B{:02}", n + 1);
        }

        let query = format!("{a} {b} {ty}");
        let instruction =
            format!("Find {ty} that is {a} and {b}, option {option}, priced at most ${cap_dollars}.00.");
        let task = MiniShopTask { task_id: format!("shop-{i:03}"), instruction, query, target, catalog };
        let best = task.optimum_index();
        let decoys: Vec<usize> = (0..task.catalog.len()).filter(|&j| j != best).collect();
        let decoy = decoys[rng.random_range(0..decoys.len())];
        let decoy = format!("click[{}]", task.catalog[decoy].id);
        // The product choice is the only decision on the route.
        planned.push(Planned { task: Task::MiniShop(task), timestep: 1, decoy });
    }
    Ok(planned)
}
