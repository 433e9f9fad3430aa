use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{EnvError, EnvHandle, Environment, ScriptedState, StepOutcome, INVALID_ACTION};
use crate::text::collapse_whitespace;
use crate::trajectory::Action;

pub const GOAL_STATE: &str = "Exit hall";
pub const GOAL_OBSERVATION: &str = "Exit hall. You found the way out. Task complete.";
pub const DEAD_END_OBSERVATION: &str = "Dead end. The passage collapses behind you.";
pub const CORRIDOR_CONTEXT: &str = "In a corridor";
pub const FORWARD: &str = "go forward";
const INSTRUCTION: &str = "Find your way to the exit hall.";

/// The four branch situations. Each has one correct direction; the other
/// three lead to dead ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchKind {
    HallwayFork,
    GardenGate,
    LibraryStairs,
    CellarDoor,
}

const DIRECTIONS: [&str; 4] = ["go north", "go east", "go west", "go south"];

impl BranchKind {
    pub const ALL: [BranchKind; 4] =
        [BranchKind::HallwayFork, BranchKind::GardenGate, BranchKind::LibraryStairs, BranchKind::CellarDoor];

    fn index(self) -> usize {
        self as usize
    }

    /// State name; doubles as the ground-truth context.
    pub fn state_name(self) -> &'static str {
        ["At the hallway fork", "At the garden gate", "At the library stairs", "At the cellar door"][self.index()]
    }

    pub fn correct_action(self) -> &'static str {
        DIRECTIONS[self.index()]
    }

    pub fn decoy_actions(self) -> Vec<String> {
        DIRECTIONS.iter().filter(|d| **d != self.correct_action()).map(|d| (*d).into()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchPoint {
    pub state_name: String,
    pub correct_action: String,
    pub decoy_actions: Vec<String>,
}

/// A linear route of rooms. Corridors are passed with `go forward`; at a branch
/// only the correct action moves on. The room after the last one is the goal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchWorldTask {
    pub task_id: String,
    pub instruction: String,
    pub rooms: Vec<String>,
    pub branch_points: Vec<BranchPoint>,
    pub goal_state: String,
}

impl BranchWorldTask {
    /// Builds a task from `(corridor before?, branch)` pairs, optionally
    /// followed by one more corridor before the goal.
    pub fn build(task_id: &str, layout: &[(bool, BranchKind)], corridor_after: bool) -> Self {
        let mut rooms = Vec::new();
        let mut branch_points = Vec::new();
        let mut corridors = 0;
        let mut corridor = |rooms: &mut Vec<String>| {
            corridors += 1;
            rooms.push(format!("Corridor {corridors}"));
        };
        for &(before, kind) in layout {
            if before {
                corridor(&mut rooms);
            }
            rooms.push(kind.state_name().into());
            branch_points.push(BranchPoint {
                state_name: kind.state_name().into(),
                correct_action: kind.correct_action().into(),
                decoy_actions: kind.decoy_actions(),
            });
        }
        if corridor_after {
            corridor(&mut rooms);
        }
        Self { task_id: task_id.into(), instruction: INSTRUCTION.into(), rooms, branch_points, goal_state: GOAL_STATE.into() }
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        let invalid = |why: String| Err(EnvError::InvalidTask { task_id: self.task_id.clone(), reason: why });
        if self.rooms.is_empty() {
            return invalid("no rooms".into());
        }
        for (i, room) in self.rooms.iter().enumerate() {
            if self.rooms[..i].contains(room) || *room == self.goal_state {
                return invalid(format!("room name `{room}` is not unique"));
            }
        }
        for (i, bp) in self.branch_points.iter().enumerate() {
            if !self.rooms.contains(&bp.state_name) || self.branch_points[..i].iter().any(|b| b.state_name == bp.state_name) {
                return invalid(format!("branch `{}` is not a unique room", bp.state_name));
            }
            if bp.decoy_actions.is_empty() || bp.decoy_actions.iter().any(|d| same(d, &bp.correct_action)) {
                return invalid(format!("branch `{}` needs decoys distinct from its correct action", bp.state_name));
            }
            if same(&bp.correct_action, FORWARD) || bp.decoy_actions.iter().any(|d| same(d, FORWARD)) {
                return invalid(format!("branch `{}` uses the corridor action", bp.state_name));
            }
        }
        Ok(())
    }

    fn branch(&self, room: &str) -> Option<&BranchPoint> {
        self.branch_points.iter().find(|b| b.state_name == room)
    }

    pub fn room_observation(&self, room: usize) -> String {
        let name = &self.rooms[room];
        match self.branch(name) {
            Some(bp) => {
                let mut actions: Vec<&str> = bp.decoy_actions.iter().map(String::as_str).collect();
                actions.push(&bp.correct_action);
                actions.sort_unstable();
                format!("{name}. Available actions: {}.", actions.join(", "))
            }
            None => format!("{name}. The passage continues forward. Available actions: {FORWARD}."),
        }
    }

    /// The unique action sequence that reaches the goal.
    pub fn oracle_actions(&self) -> Vec<Action> {
        self.rooms
            .iter()
            .map(|room| Action::env(self.branch(room).map_or(FORWARD, |b| b.correct_action.as_str())))
            .collect()
    }

    /// Timestep (room index) of every branch decision on the oracle route.
    pub fn branch_timesteps(&self) -> Vec<usize> {
        (0..self.rooms.len()).filter(|&i| self.branch(&self.rooms[i]).is_some()).collect()
    }

    pub fn scripted_states(&self) -> Vec<ScriptedState> {
        (0..self.rooms.len())
            .map(|i| {
                let observation = self.room_observation(i);
                match self.branch(&self.rooms[i]) {
                    Some(bp) => ScriptedState {
                        observation,
                        context: bp.state_name.clone(),
                        oracle_action: bp.correct_action.clone(),
                        default_action: bp.decoy_actions[0].clone(),
                    },
                    None => ScriptedState {
                        observation,
                        context: CORRIDOR_CONTEXT.into(),
                        oracle_action: FORWARD.into(),
                        default_action: FORWARD.into(),
                    },
                }
            })
            .collect()
    }
}

fn same(a: &str, b: &str) -> bool {
    collapse_whitespace(a).eq_ignore_ascii_case(&collapse_whitespace(b))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Position {
    Room(usize),
    DeadEnd,
    Goal,
}

#[derive(Debug, Clone)]
pub struct BranchWorldEnv {
    task: BranchWorldTask,
    position: Position,
    handle: EnvHandle,
}

impl BranchWorldEnv {
    pub fn new(task: BranchWorldTask) -> Self {
        let observation = task.room_observation(0);
        Self { task, position: Position::Room(0), handle: EnvHandle::start(observation) }
    }

    pub fn task(&self) -> &BranchWorldTask {
        &self.task
    }

    fn advance(&self, room: usize) -> (Position, String, f64) {
        if room + 1 < self.task.rooms.len() {
            (Position::Room(room + 1), self.task.room_observation(room + 1), 0.0)
        } else {
            (Position::Goal, GOAL_OBSERVATION.into(), 1.0)
        }
    }
}

impl Environment for BranchWorldEnv {
    fn task_id(&self) -> &str {
        &self.task.task_id
    }

    fn instruction(&self) -> &str {
        &self.task.instruction
    }

    /// The world is deterministic; the seed is ignored.
    fn reset(&mut self, _seed: u64) -> String {
        *self = Self::new(self.task.clone());
        self.handle.observation.clone()
    }

    fn step(&mut self, action: &Action) -> Result<StepOutcome, EnvError> {
        let Position::Room(room) = self.position else {
            return Err(EnvError::StepAfterDone);
        };
        let (position, observation, reward) = if action.is_think() {
            (self.position, INVALID_ACTION.into(), 0.0)
        } else {
            let text = &action.text;
            match self.task.branch(&self.task.rooms[room]) {
                Some(bp) if same(text, &bp.correct_action) => self.advance(room),
                Some(bp) if bp.decoy_actions.iter().any(|d| same(text, d)) => {
                    (Position::DeadEnd, DEAD_END_OBSERVATION.into(), 0.0)
                }
                None if same(text, FORWARD) => self.advance(room),
                _ => (self.position, INVALID_ACTION.into(), 0.0),
            }
        };
        self.position = position;
        let done = !matches!(position, Position::Room(_));
        Ok(self.handle.record(observation, reward, done))
    }

    fn handle(&self) -> EnvHandle {
        self.handle.clone()
    }

    fn success(&self) -> bool {
        self.position == Position::Goal
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn task() -> BranchWorldTask {
        BranchWorldTask::build("t", &[(true, BranchKind::GardenGate), (false, BranchKind::CellarDoor)], true)
    }

    #[test]
    fn layout() {
        let t = task();
        assert_eq!(t.rooms, ["Corridor 1", "At the garden gate", "At the cellar door", "Corridor 2"]);
        assert_eq!(t.branch_timesteps(), [1, 2]);
        t.validate().unwrap();
        assert_eq!(
            t.room_observation(1),
            "At the garden gate. Available actions: go east, go north, go south, go west."
        );
    }

    #[test]
    fn correct_action_names_next_room() {
        let mut env = BranchWorldEnv::new(task());
        env.reset(0);
        env.step(&Action::env("go forward")).unwrap();
        let out = env.step(&Action::env("Go  East")).unwrap();
        assert!(out.observation.starts_with("At the cellar door."));
        assert!(!out.done);
    }

    #[test]
    fn decoy_is_a_terminal_dead_end() {
        let mut env = BranchWorldEnv::new(task());
        env.reset(0);
        env.step(&Action::env("go forward")).unwrap();
        let out = env.step(&Action::env("go north")).unwrap();
        assert_eq!(out.observation, DEAD_END_OBSERVATION);
        assert!(out.done);
        assert!(!env.success());
        assert_eq!(env.step(&Action::env("go east")), Err(EnvError::StepAfterDone));
    }

    #[test]
    fn unknown_action_leaves_state_unchanged() {
        let mut env = BranchWorldEnv::new(task());
        env.reset(0);
        let out = env.step(&Action::env("dance")).unwrap();
        assert_eq!(out.observation, INVALID_ACTION);
        assert_eq!(out.reward, 0.0);
        let out = env.step(&Action::env("go forward")).unwrap();
        assert!(out.observation.starts_with("At the garden gate."));
    }

    #[test]
    fn oracle_reaches_goal_with_unit_reward() {
        let t = task();
        let mut env = BranchWorldEnv::new(t.clone());
        env.reset(0);
        let mut last = None;
        for a in t.oracle_actions() {
            last = Some(env.step(&a).unwrap());
        }
        let last = last.unwrap();
        assert!(last.done && env.success());
        assert_eq!(last.observation, GOAL_OBSERVATION);
        assert_eq!(env.handle().accumulated_reward, 1.0);
    }

    #[test]
    fn validation_rejects_duplicate_branch_names() {
        let mut t = task();
        t.rooms[2] = t.rooms[1].clone();
        assert!(t.validate().is_err());
    }
}
