//! Cart-pole swing-up with a sparse reward.
//!
//! The pole angle is measured from upright and may rotate fully. The pole
//! starts hanging down; reward 1 is paid on every step the pole tip is high
//! enough (`cos θ > 0.8`). The episode ends only when the cart leaves the
//! track or the horizon is reached.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::Rng as _;

use super::{Action, ActionSpace, EnvSpec, Environment, StepResult};
use crate::error::{check_finite, Error, Result};
use crate::rng::Rng;

pub const GRAVITY: f64 = 9.8;
pub const CART_MASS: f64 = 1.0;
pub const POLE_MASS: f64 = 0.1;
/// Half the pole length.
pub const POLE_HALF_LENGTH: f64 = 0.5;
pub const FORCE_SCALE: f64 = 10.0;
/// Control interval; each one is integrated in `SUBSTEPS` equal sub-steps.
pub const DT: f64 = 0.02;
pub const SUBSTEPS: usize = 10;
pub const TRACK_LIMIT: f64 = 2.4;
pub const MAX_CART_SPEED: f64 = 10.0;
pub const MAX_POLE_SPEED: f64 = 20.0;
pub const REWARD_COS_THRESHOLD: f64 = 0.8;
pub const HORIZON: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CartpoleState {
    pub x: f64,
    pub x_dot: f64,
    pub theta: f64,
    pub theta_dot: f64,
}

/// Wraps an angle into `(-π, π]`.
pub(crate) fn wrap_angle(theta: f64) -> f64 {
    let mut t = theta % (2.0 * PI);
    if t > PI {
        t -= 2.0 * PI;
    } else if t <= -PI {
        t += 2.0 * PI;
    }
    t
}

impl CartpoleState {
    pub fn hanging() -> Self {
        CartpoleState {
            x: 0.0,
            x_dot: 0.0,
            theta: PI,
            theta_dot: 0.0,
        }
    }

    fn trig(&self) -> (f64, f64) {
        // Measure from the hanging position so θ = π gives sin θ = 0 exactly.
        let phi = self.theta - PI;
        (-phi.sin(), -phi.cos())
    }

    /// Advances one control interval under horizontal force `force`
    /// (newtons) with semi-implicit Euler sub-steps.
    pub fn step(self, force: f64) -> Result<CartpoleState> {
        check_finite("cartpole state", &[self.x, self.x_dot, self.theta, self.theta_dot, force])?;
        let h = DT / SUBSTEPS as f64;
        let mut s = self;
        for _ in 0..SUBSTEPS {
            s = s.substep(force, h);
        }
        s.theta = wrap_angle(s.theta);
        Ok(s)
    }

    fn substep(self, force: f64, h: f64) -> CartpoleState {
        let total = CART_MASS + POLE_MASS;
        let pml = POLE_MASS * POLE_HALF_LENGTH;
        let (sin, cos) = self.trig();
        let temp = (force + pml * self.theta_dot * self.theta_dot * sin) / total;
        let theta_acc = (GRAVITY * sin - cos * temp)
            / (POLE_HALF_LENGTH * (4.0 / 3.0 - POLE_MASS * cos * cos / total));
        let x_acc = temp - pml * theta_acc * cos / total;

        let x_dot = (self.x_dot + h * x_acc).clamp(-MAX_CART_SPEED, MAX_CART_SPEED);
        let theta_dot = (self.theta_dot + h * theta_acc).clamp(-MAX_POLE_SPEED, MAX_POLE_SPEED);
        CartpoleState {
            x: self.x + h * x_dot,
            x_dot,
            theta: self.theta + h * theta_dot,
            theta_dot,
        }
    }

    /// Mechanical energy with the potential zeroed at the hanging position.
    pub fn energy(&self) -> f64 {
        let (_, cos) = self.trig();
        let m = POLE_MASS;
        let l = POLE_HALF_LENGTH;
        0.5 * (CART_MASS + m) * self.x_dot * self.x_dot
            + m * l * self.x_dot * self.theta_dot * cos
            + 0.5 * (4.0 / 3.0) * m * l * l * self.theta_dot * self.theta_dot
            + m * GRAVITY * l * (1.0 + cos)
    }

    pub fn reward(&self) -> f64 {
        if self.trig().1 > REWARD_COS_THRESHOLD {
            1.0
        } else {
            0.0
        }
    }

    pub fn observation(&self) -> Vec<f64> {
        vec![self.x, self.x_dot, self.theta, self.theta_dot]
    }
}

#[derive(Debug, Clone)]
pub struct CartpoleSwingup {
    spec: EnvSpec,
    state: CartpoleState,
    elapsed: usize,
}

impl Default for CartpoleSwingup {
    fn default() -> Self {
        Self::new()
    }
}

impl CartpoleSwingup {
    pub fn new() -> Self {
        let x_bound = TRACK_LIMIT + DT * MAX_CART_SPEED;
        CartpoleSwingup {
            spec: EnvSpec {
                name: "sparse-cartpole-swingup".into(),
                observation_dim: 4,
                action_space: ActionSpace::Box {
                    low: vec![-1.0],
                    high: vec![1.0],
                },
                horizon: HORIZON,
                observation_low: vec![-x_bound, -MAX_CART_SPEED, -PI, -MAX_POLE_SPEED],
                observation_high: vec![x_bound, MAX_CART_SPEED, PI, MAX_POLE_SPEED],
            },
            state: CartpoleState::hanging(),
            elapsed: 0,
        }
    }

    pub fn state(&self) -> CartpoleState {
        self.state
    }

    pub fn set_state(&mut self, state: CartpoleState) {
        self.state = state;
    }
}

impl Environment for CartpoleSwingup {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, rng: &mut Rng) -> Vec<f64> {
        self.state = CartpoleState {
            x: rng.random_range(-0.05..=0.05),
            x_dot: rng.random_range(-0.05..=0.05),
            ..CartpoleState::hanging()
        };
        self.elapsed = 0;
        self.state.observation()
    }

    fn step(&mut self, action: &Action) -> Result<StepResult> {
        if self.elapsed >= HORIZON {
            return Err(Error::InvalidArgument("step after episode end".into()));
        }
        let a = action.continuous(1)?[0].clamp(-1.0, 1.0);
        self.state = self.state.step(FORCE_SCALE * a)?;
        self.elapsed += 1;
        let s = self.state;
        let mut info = BTreeMap::new();
        info.insert("x", s.x);
        info.insert("theta", s.theta);
        info.insert("energy", s.energy());
        Ok(StepResult {
            observation: s.observation(),
            reward: s.reward(),
            done: s.x.abs() > TRACK_LIMIT || self.elapsed >= HORIZON,
            info,
        })
    }

    fn elapsed(&self) -> usize {
        self.elapsed
    }
}
