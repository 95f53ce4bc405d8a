//! Parameter-space noise exploration for deep reinforcement learning.
//!
//! Policies are perturbed in weight space once per episode with spherical
//! Gaussian noise whose scale adapts to a target distance in action space.
//! The crate bundles everything needed to compare this against action-space
//! noise on small benchmarks:
//!
//! - [`nn`]: dense networks with layer normalization, exact gradients and Adam
//! - [`noise`]: parameter perturbation, adaptive scaling, ε-greedy, Gaussian and OU noise
//! - [`distance`]: action-space distances between a policy and its perturbation
//! - [`env`]: the chain benchmark and sparse/dense continuous-control tasks
//! - [`agents`]: DQN variants, bootstrapped DQN, DDPG and perturbed-parameter REINFORCE

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agents;
pub mod distance;
pub mod env;
mod error;
pub mod nn;
pub mod noise;
pub mod rng;

pub use error::{Error, Result};
