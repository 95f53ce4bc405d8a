use std::collections::BTreeMap;

use rand::Rng as _;

use super::{Action, ActionSpace, EnvSpec, Environment, StepResult};
use crate::error::{Error, Result};
use crate::rng::Rng;

pub const MIN_POSITION: f64 = -1.2;
pub const MAX_POSITION: f64 = 0.6;
pub const MAX_SPEED: f64 = 0.07;
pub const GOAL_POSITION: f64 = 0.45;
pub const POWER: f64 = 0.0015;
pub const GRAVITY: f64 = 0.0025;
pub const HORIZON: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MountainCarState {
    pub position: f64,
    pub velocity: f64,
}

impl MountainCarState {
    /// One step of the continuous-action dynamics. Returns the next state and
    /// whether the goal was reached.
    pub fn step(self, force: f64) -> (MountainCarState, bool) {
        let force = force.clamp(-1.0, 1.0);
        let velocity = (self.velocity + POWER * force - GRAVITY * (3.0 * self.position).cos())
            .clamp(-MAX_SPEED, MAX_SPEED);
        let position = (self.position + velocity).clamp(MIN_POSITION, MAX_POSITION);
        let next = MountainCarState { position, velocity };
        (next, position >= GOAL_POSITION)
    }
}

/// Mountain car that pays 1 only on reaching the hilltop, which also ends
/// the episode.
#[derive(Debug, Clone)]
pub struct SparseMountainCar {
    spec: EnvSpec,
    state: MountainCarState,
    elapsed: usize,
}

impl Default for SparseMountainCar {
    fn default() -> Self {
        Self::new()
    }
}

impl SparseMountainCar {
    pub fn new() -> Self {
        SparseMountainCar {
            spec: EnvSpec {
                name: "sparse-mountaincar".into(),
                observation_dim: 2,
                action_space: ActionSpace::Box {
                    low: vec![-1.0],
                    high: vec![1.0],
                },
                horizon: HORIZON,
                observation_low: vec![MIN_POSITION, -MAX_SPEED],
                observation_high: vec![MAX_POSITION, MAX_SPEED],
            },
            state: MountainCarState {
                position: -0.5,
                velocity: 0.0,
            },
            elapsed: 0,
        }
    }

    pub fn state(&self) -> MountainCarState {
        self.state
    }

    pub fn set_state(&mut self, state: MountainCarState) {
        self.state = state;
    }
}

impl Environment for SparseMountainCar {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, rng: &mut Rng) -> Vec<f64> {
        self.state = MountainCarState {
            position: rng.random_range(-0.6..=-0.4),
            velocity: 0.0,
        };
        self.elapsed = 0;
        vec![self.state.position, self.state.velocity]
    }

    fn step(&mut self, action: &Action) -> Result<StepResult> {
        if self.elapsed >= HORIZON {
            return Err(Error::InvalidArgument("step after episode end".into()));
        }
        let force = action.continuous(1)?[0];
        let (next, reached) = self.state.step(force);
        self.state = next;
        self.elapsed += 1;
        let mut info = BTreeMap::new();
        info.insert("position", next.position);
        info.insert("velocity", next.velocity);
        Ok(StepResult {
            observation: vec![next.position, next.velocity],
            reward: if reached { 1.0 } else { 0.0 },
            done: reached || self.elapsed >= HORIZON,
            info,
        })
    }

    fn elapsed(&self) -> usize {
        self.elapsed
    }
}
