//! The chain exploration benchmark.
//!
//! States `1..=N`, start in state 2. Moving left into (or staying at) state 1
//! pays 0.001, moving right into (or staying at) state N pays 1. An episode
//! lasts `N + 9` steps.

use std::collections::BTreeMap;

use super::{Action, ActionSpace, EnvSpec, Environment, StepResult};
use crate::error::{Error, Result};
use crate::rng::Rng;

pub const SMALL_REWARD: f64 = 0.001;
pub const LARGE_REWARD: f64 = 1.0;
pub const START_STATE: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChainMove {
    Left,
    Right,
}

impl ChainMove {
    pub fn from_index(a: usize) -> Self {
        if a == 0 {
            ChainMove::Left
        } else {
            ChainMove::Right
        }
    }
}

/// Transition function. States are 1-based.
pub fn chain_step(n: usize, state: usize, mv: ChainMove) -> (usize, f64) {
    let next = match mv {
        ChainMove::Right => (state + 1).min(n),
        ChainMove::Left => state.saturating_sub(1).max(1),
    };
    let reward = if next == n {
        LARGE_REWARD
    } else if next == 1 {
        SMALL_REWARD
    } else {
        0.0
    };
    (next, reward)
}

/// Thermometer encoding: `s` leading ones followed by zeros.
pub fn chain_observation(n: usize, state: usize) -> Vec<f64> {
    (1..=n).map(|x| if x <= state { 1.0 } else { 0.0 }).collect()
}

/// Best undiscounted return from the start state within `horizon` steps, by
/// backward induction over the chain.
pub fn chain_optimal_return(n: usize, horizon: usize) -> f64 {
    // value[s] = best return-to-go with `k` steps remaining, s in 1..=n.
    let mut value = vec![0.0; n + 1];
    for _ in 0..horizon {
        let next: Vec<f64> = (0..=n)
            .map(|s| {
                if s == 0 {
                    return 0.0;
                }
                [ChainMove::Left, ChainMove::Right]
                    .iter()
                    .map(|&m| {
                        let (s2, r) = chain_step(n, s, m);
                        r + value[s2]
                    })
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
        value = next;
    }
    value[START_STATE.min(n)]
}

#[derive(Debug, Clone)]
pub struct Chain {
    spec: EnvSpec,
    n: usize,
    state: usize,
    elapsed: usize,
}

impl Chain {
    pub fn new(n: usize) -> Self {
        assert!(n >= 2, "chain needs at least 2 states");
        Chain {
            spec: EnvSpec {
                name: format!("chain-N{n}"),
                observation_dim: n,
                action_space: ActionSpace::Discrete(2),
                horizon: n + 9,
                observation_low: vec![0.0; n],
                observation_high: vec![1.0; n],
            },
            n,
            state: START_STATE,
            elapsed: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn state(&self) -> usize {
        self.state
    }

    pub fn optimal_return(&self) -> f64 {
        chain_optimal_return(self.n, self.spec.horizon)
    }
}

impl Environment for Chain {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, _rng: &mut Rng) -> Vec<f64> {
        self.state = START_STATE;
        self.elapsed = 0;
        chain_observation(self.n, self.state)
    }

    fn step(&mut self, action: &Action) -> Result<StepResult> {
        if self.elapsed >= self.spec.horizon {
            return Err(Error::InvalidArgument("step after episode end".into()));
        }
        let a = action.discrete(2)?;
        let (next, reward) = chain_step(self.n, self.state, ChainMove::from_index(a));
        self.state = next;
        self.elapsed += 1;
        let mut info = BTreeMap::new();
        info.insert("state", next as f64);
        Ok(StepResult {
            observation: chain_observation(self.n, next),
            reward,
            done: self.elapsed >= self.spec.horizon,
            info,
        })
    }

    fn elapsed(&self) -> usize {
        self.elapsed
    }
}
