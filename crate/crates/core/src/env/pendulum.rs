//! Torque-limited pendulum with a dense quadratic cost. Angle 0 is upright.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::Rng as _;

use super::cartpole::wrap_angle;
use super::{Action, ActionSpace, EnvSpec, Environment, StepResult};
use crate::error::{Error, Result};
use crate::rng::Rng;

pub const MAX_SPEED: f64 = 8.0;
pub const MAX_TORQUE: f64 = 2.0;
pub const DT: f64 = 0.05;
pub const GRAVITY: f64 = 10.0;
pub const MASS: f64 = 1.0;
pub const LENGTH: f64 = 1.0;
pub const HORIZON: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PendulumState {
    pub theta: f64,
    pub theta_dot: f64,
}

impl PendulumState {
    /// Cost-derived reward of applying `torque` in this state; always `<= 0`.
    pub fn reward(&self, torque: f64) -> f64 {
        let u = torque.clamp(-MAX_TORQUE, MAX_TORQUE);
        let th = wrap_angle(self.theta);
        -(th * th + 0.1 * self.theta_dot * self.theta_dot + 0.001 * u * u)
    }

    pub fn step(self, torque: f64) -> PendulumState {
        let u = torque.clamp(-MAX_TORQUE, MAX_TORQUE);
        let acc = 3.0 * GRAVITY / (2.0 * LENGTH) * self.theta.sin() + 3.0 / (MASS * LENGTH * LENGTH) * u;
        let theta_dot = (self.theta_dot + acc * DT).clamp(-MAX_SPEED, MAX_SPEED);
        PendulumState {
            theta: wrap_angle(self.theta + theta_dot * DT),
            theta_dot,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Pendulum {
    spec: EnvSpec,
    state: PendulumState,
    elapsed: usize,
}

impl Default for Pendulum {
    fn default() -> Self {
        Self::new()
    }
}

impl Pendulum {
    pub fn new() -> Self {
        Pendulum {
            spec: EnvSpec {
                name: "dense-pendulum".into(),
                observation_dim: 2,
                action_space: ActionSpace::Box {
                    low: vec![-MAX_TORQUE],
                    high: vec![MAX_TORQUE],
                },
                horizon: HORIZON,
                observation_low: vec![-PI, -MAX_SPEED],
                observation_high: vec![PI, MAX_SPEED],
            },
            state: PendulumState {
                theta: PI,
                theta_dot: 0.0,
            },
            elapsed: 0,
        }
    }

    pub fn state(&self) -> PendulumState {
        self.state
    }

    pub fn set_state(&mut self, state: PendulumState) {
        self.state = state;
    }
}

impl Environment for Pendulum {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, rng: &mut Rng) -> Vec<f64> {
        self.state = PendulumState {
            theta: rng.random_range(-PI..=PI),
            theta_dot: rng.random_range(-1.0..=1.0),
        };
        self.elapsed = 0;
        vec![self.state.theta, self.state.theta_dot]
    }

    fn step(&mut self, action: &Action) -> Result<StepResult> {
        if self.elapsed >= HORIZON {
            return Err(Error::InvalidArgument("step after episode end".into()));
        }
        let u = action.continuous(1)?[0];
        let reward = self.state.reward(u);
        self.state = self.state.step(u);
        self.elapsed += 1;
        let mut info = BTreeMap::new();
        info.insert("theta", self.state.theta);
        Ok(StepResult {
            observation: vec![self.state.theta, self.state.theta_dot],
            reward,
            done: self.elapsed >= HORIZON,
            info,
        })
    }

    fn elapsed(&self) -> usize {
        self.elapsed
    }
}
