//! Episodic environments behind a single stepping interface.

mod cartpole;
mod chain;
mod mountain_car;
mod pendulum;

use std::collections::BTreeMap;
use std::fmt;

pub use cartpole::{CartpoleState, CartpoleSwingup};
pub use chain::{chain_observation, chain_optimal_return, chain_step, Chain, ChainMove};
pub use mountain_car::{MountainCarState, SparseMountainCar};
pub use pendulum::{Pendulum, PendulumState};

use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq)]
pub enum ActionSpace {
    Discrete(usize),
    Box { low: Vec<f64>, high: Vec<f64> },
}

impl ActionSpace {
    pub fn dim(&self) -> usize {
        match self {
            ActionSpace::Discrete(_) => 1,
            ActionSpace::Box { low, .. } => low.len(),
        }
    }

    pub fn num_actions(&self) -> Option<usize> {
        match self {
            ActionSpace::Discrete(n) => Some(*n),
            ActionSpace::Box { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvSpec {
    pub name: String,
    pub observation_dim: usize,
    pub action_space: ActionSpace,
    pub horizon: usize,
    /// Inclusive per-dimension bounds every observation stays within.
    pub observation_low: Vec<f64>,
    pub observation_high: Vec<f64>,
}

impl EnvSpec {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::InvalidConfig(format!("{}: horizon must be >= 1", self.name)));
        }
        if let ActionSpace::Box { low, high } = &self.action_space {
            if low.len() != high.len() || low.iter().zip(high).any(|(l, h)| !(l < h)) {
                return Err(Error::InvalidConfig(format!("{}: bad action bounds", self.name)));
            }
        }
        if self.observation_low.len() != self.observation_dim
            || self.observation_high.len() != self.observation_dim
        {
            return Err(Error::InvalidConfig(format!("{}: bad observation bounds", self.name)));
        }
        Ok(())
    }

    pub fn contains_observation(&self, obs: &[f64]) -> bool {
        obs.len() == self.observation_dim
            && obs
                .iter()
                .zip(self.observation_low.iter().zip(&self.observation_high))
                .all(|(v, (lo, hi))| *lo <= *v && *v <= *hi)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    Discrete(usize),
    Continuous(Vec<f64>),
}

impl Action {
    fn discrete(&self, n: usize) -> Result<usize> {
        match self {
            Action::Discrete(a) if *a < n => Ok(*a),
            Action::Discrete(a) => Err(Error::InvalidArgument(format!("action {a} out of range 0..{n}"))),
            Action::Continuous(_) => Err(Error::InvalidArgument("expected a discrete action".into())),
        }
    }

    fn continuous(&self, dim: usize) -> Result<&[f64]> {
        match self {
            Action::Continuous(a) if a.len() == dim => {
                if a.iter().all(|v| v.is_finite()) {
                    Ok(a)
                } else {
                    Err(Error::NonFinite("action"))
                }
            }
            Action::Continuous(a) => Err(Error::DimensionMismatch {
                what: "action",
                expected: dim,
                got: a.len(),
            }),
            Action::Discrete(_) => Err(Error::InvalidArgument("expected a continuous action".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    /// Underlying state and bookkeeping, keyed by name.
    pub info: BTreeMap<&'static str, f64>,
}

pub trait Environment: Send {
    fn spec(&self) -> &EnvSpec;

    /// Starts a new episode and returns the first observation.
    fn reset(&mut self, rng: &mut Rng) -> Vec<f64>;

    fn step(&mut self, action: &Action) -> Result<StepResult>;

    /// Steps taken in the current episode.
    fn elapsed(&self) -> usize;
}

/// Names accepted by [`make_env`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvKind {
    Chain(usize),
    SparseMountainCar,
    SparseCartpoleSwingup,
    DensePendulum,
}

impl EnvKind {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "sparse-mountaincar" => Ok(EnvKind::SparseMountainCar),
            "sparse-cartpole-swingup" => Ok(EnvKind::SparseCartpoleSwingup),
            "dense-pendulum" => Ok(EnvKind::DensePendulum),
            _ => {
                let n = name
                    .strip_prefix("chain-N")
                    .and_then(|k| k.parse::<usize>().ok())
                    .ok_or_else(|| Error::InvalidConfig(format!("unknown environment {name:?}")))?;
                if n < 2 {
                    return Err(Error::InvalidConfig(format!("chain needs at least 2 states, got {n}")));
                }
                Ok(EnvKind::Chain(n))
            }
        }
    }

    pub fn is_chain(self) -> bool {
        matches!(self, EnvKind::Chain(_))
    }

    pub fn build(self) -> Box<dyn Environment> {
        match self {
            EnvKind::Chain(n) => Box::new(Chain::new(n)),
            EnvKind::SparseMountainCar => Box::new(SparseMountainCar::new()),
            EnvKind::SparseCartpoleSwingup => Box::new(CartpoleSwingup::new()),
            EnvKind::DensePendulum => Box::new(Pendulum::new()),
        }
    }
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EnvKind::Chain(n) => write!(f, "chain-N{n}"),
            EnvKind::SparseMountainCar => f.write_str("sparse-mountaincar"),
            EnvKind::SparseCartpoleSwingup => f.write_str("sparse-cartpole-swingup"),
            EnvKind::DensePendulum => f.write_str("dense-pendulum"),
        }
    }
}

pub fn make_env(name: &str) -> Result<Box<dyn Environment>> {
    Ok(EnvKind::parse(name)?.build())
}

