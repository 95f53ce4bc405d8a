//! Learning agents and the exploration strategies they plug into.
//!
//! Every agent owns its own random streams (initialization, perturbation,
//! action noise, replay sampling), all derived from the run seed, so a run is
//! reproducible from `(config, seed)` alone.

mod bootstrapped;
mod ddpg;
mod dqn;
mod multihead;
mod normalizer;
mod reinforce;
mod replay;

pub use bootstrapped::BootstrappedDqn;
pub use ddpg::{actor_gradient, scale_action, unscale_action, Ddpg, DdpgLosses};
pub use dqn::{policy_head_loss, Dqn};
pub use multihead::MultiHeadNet;
pub use normalizer::OnlineNormalizer;
pub use reinforce::{discounted_returns, reinforce_psn_gradient, PerturbedEpisode, Reinforce};
pub use replay::ReplayBuffer;

use std::fmt;
use std::str::FromStr;

use crate::env::{Action, ActionSpace, EnvSpec};
use crate::error::{Error, Result};
use crate::nn::Network;

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Action,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
    /// Which bootstrap heads train on this transition.
    pub head_mask: Option<Vec<bool>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActMode {
    /// Behavior policy, with whatever exploration noise the agent uses.
    Explore,
    /// Noise-free policy used for evaluation.
    Greedy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AgentKind {
    Dqn,
    /// DQN with an extra softmax policy head that is perturbed instead of Q.
    DqnPolicyHead,
    BootstrappedDqn,
    Ddpg,
    Reinforce,
}

impl AgentKind {
    pub fn name(self) -> &'static str {
        match self {
            AgentKind::Dqn => "dqn",
            AgentKind::DqnPolicyHead => "dqn-policyhead",
            AgentKind::BootstrappedDqn => "bootstrapped-dqn",
            AgentKind::Ddpg => "ddpg",
            AgentKind::Reinforce => "reinforce",
        }
    }

    pub fn is_discrete(self) -> bool {
        !matches!(self, AgentKind::Ddpg)
    }
}

impl FromStr for AgentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dqn" => Ok(AgentKind::Dqn),
            "dqn-policyhead" => Ok(AgentKind::DqnPolicyHead),
            "bootstrapped-dqn" => Ok(AgentKind::BootstrappedDqn),
            "ddpg" => Ok(AgentKind::Ddpg),
            "reinforce" => Ok(AgentKind::Reinforce),
            other => Err(Error::InvalidConfig(format!("unknown agent kind {other:?}"))),
        }
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseSpec {
    None,
    /// ε decays linearly from `start` to `end` over `anneal_episodes`, then stays.
    EpsilonGreedy {
        start: f64,
        end: f64,
        anneal_episodes: u64,
    },
    /// Adaptive weight-space noise; `residual_epsilon` adds ε-greedy on top.
    Parameter {
        initial_sigma: f64,
        alpha: f64,
        delta: f64,
        adapt_interval: usize,
        residual_epsilon: f64,
    },
    Gaussian {
        sigma: f64,
    },
    OrnsteinUhlenbeck {
        sigma: f64,
    },
}

impl NoiseSpec {
    pub fn name(&self) -> &'static str {
        match self {
            NoiseSpec::None => "none",
            NoiseSpec::EpsilonGreedy { .. } => "egreedy",
            NoiseSpec::Parameter { .. } => "paramnoise",
            NoiseSpec::Gaussian { .. } => "gaussian",
            NoiseSpec::OrnsteinUhlenbeck { .. } => "ou",
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        match *self {
            NoiseSpec::None => Ok(()),
            NoiseSpec::EpsilonGreedy { start, end, .. } => {
                if (0.0..=1.0).contains(&start) && (0.0..=1.0).contains(&end) {
                    Ok(())
                } else {
                    bad(format!("epsilon schedule {start} -> {end} outside [0, 1]"))
                }
            }
            NoiseSpec::Parameter {
                initial_sigma,
                alpha,
                delta,
                adapt_interval,
                residual_epsilon,
            } => {
                crate::noise::AdaptiveNoiseState::new(initial_sigma, alpha, delta, adapt_interval)?;
                if (0.0..=1.0).contains(&residual_epsilon) {
                    Ok(())
                } else {
                    bad(format!("residual epsilon {residual_epsilon} outside [0, 1]"))
                }
            }
            NoiseSpec::Gaussian { sigma } | NoiseSpec::OrnsteinUhlenbeck { sigma } => {
                if sigma >= 0.0 && sigma.is_finite() {
                    Ok(())
                } else {
                    bad(format!("action noise sigma must be >= 0, got {sigma}"))
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TargetUpdate {
    /// Copy the online network every `n` training steps.
    Hard(usize),
    /// Polyak averaging with rate `tau` after every training step.
    Soft(f64),
}

/// Hyperparameters shared by all agents; fields irrelevant to an agent kind
/// are ignored by it.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentConfig {
    pub kind: AgentKind,
    pub noise: NoiseSpec,
    pub gamma: f64,
    /// Q-network / critic / policy learning rate.
    pub learning_rate: f64,
    pub actor_learning_rate: f64,
    pub batch_size: usize,
    pub target_update: TargetUpdate,
    pub buffer_capacity: usize,
    /// Episodes collected before any training.
    pub warmup_episodes: u64,
    /// Environment steps between training steps.
    pub train_interval: usize,
    pub hidden: Vec<usize>,
    pub layer_norm: bool,
    /// Bootstrap heads and their Bernoulli mask probability.
    pub heads: usize,
    pub mask_probability: f64,
    /// L2 penalty on the critic's hidden weights.
    pub critic_weight_decay: f64,
    /// States used for each distance measurement.
    pub distance_batch: usize,
    /// Episodes per REINFORCE update.
    pub episodes_per_update: usize,
}

impl AgentConfig {
    /// Reference hyperparameters for `kind`.
    pub fn defaults(kind: AgentKind) -> Self {
        match kind {
            AgentKind::Dqn | AgentKind::DqnPolicyHead | AgentKind::BootstrappedDqn => AgentConfig {
                kind,
                noise: if kind == AgentKind::BootstrappedDqn {
                    NoiseSpec::None
                } else {
                    NoiseSpec::EpsilonGreedy {
                        start: 1.0,
                        end: 0.1,
                        anneal_episodes: 100,
                    }
                },
                gamma: 0.999,
                learning_rate: 1e-3,
                actor_learning_rate: 1e-3,
                batch_size: 32,
                target_update: TargetUpdate::Hard(100),
                buffer_capacity: 100_000,
                warmup_episodes: 5,
                train_interval: 1,
                hidden: vec![16, 16],
                layer_norm: true,
                heads: 20,
                mask_probability: 0.5,
                critic_weight_decay: 0.0,
                distance_batch: 32,
                episodes_per_update: 1,
            },
            AgentKind::Ddpg => AgentConfig {
                kind,
                noise: NoiseSpec::Parameter {
                    initial_sigma: 0.2,
                    alpha: 1.01,
                    delta: 0.2,
                    adapt_interval: 50,
                    residual_epsilon: 0.0,
                },
                gamma: 0.99,
                learning_rate: 1e-3,
                actor_learning_rate: 1e-4,
                batch_size: 128,
                target_update: TargetUpdate::Soft(0.001),
                buffer_capacity: 100_000,
                warmup_episodes: 0,
                train_interval: 2,
                hidden: vec![64, 64],
                layer_norm: true,
                heads: 1,
                mask_probability: 1.0,
                critic_weight_decay: 1e-2,
                distance_batch: 128,
                episodes_per_update: 1,
            },
            AgentKind::Reinforce => AgentConfig {
                kind,
                noise: NoiseSpec::Parameter {
                    initial_sigma: 0.1,
                    alpha: 1.01,
                    delta: 0.05,
                    adapt_interval: 1,
                    residual_epsilon: 0.0,
                },
                gamma: 0.99,
                learning_rate: 1e-2,
                actor_learning_rate: 1e-2,
                batch_size: 1,
                target_update: TargetUpdate::Hard(1),
                buffer_capacity: 1,
                warmup_episodes: 0,
                train_interval: 1,
                hidden: vec![16],
                layer_norm: false,
                heads: 1,
                mask_probability: 1.0,
                critic_weight_decay: 0.0,
                distance_batch: 32,
                episodes_per_update: 10,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if !(0.0..1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1)");
        }
        if !(self.learning_rate > 0.0 && self.actor_learning_rate > 0.0) {
            return bad("learning rates must be > 0");
        }
        if self.batch_size == 0 || self.buffer_capacity == 0 || self.train_interval == 0 {
            return bad("batch size, buffer capacity and train interval must be >= 1");
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden layers must be non-empty with widths >= 1");
        }
        match self.target_update {
            TargetUpdate::Hard(0) => return bad("hard target interval must be >= 1"),
            TargetUpdate::Soft(tau) if !(0.0..=1.0).contains(&tau) => return bad("tau must lie in [0, 1]"),
            _ => {}
        }
        if self.kind == AgentKind::BootstrappedDqn {
            if self.heads == 0 {
                return bad("bootstrapped DQN needs at least one head");
            }
            if !(self.mask_probability > 0.0 && self.mask_probability <= 1.0) {
                return bad("mask probability must lie in (0, 1]");
            }
        }
        if self.critic_weight_decay < 0.0 {
            return bad("weight decay must be >= 0");
        }
        if self.distance_batch == 0 || self.episodes_per_update == 0 {
            return bad("distance batch and episodes per update must be >= 1");
        }
        self.noise.validate()?;
        let ok = matches!(
            (self.kind, self.noise),
            (_, NoiseSpec::None | NoiseSpec::Parameter { .. })
                | (AgentKind::Dqn | AgentKind::DqnPolicyHead, NoiseSpec::EpsilonGreedy { .. })
                | (AgentKind::Ddpg, NoiseSpec::Gaussian { .. } | NoiseSpec::OrnsteinUhlenbeck { .. })
        );
        if !ok {
            return Err(Error::InvalidConfig(format!(
                "{} noise is not available for {}",
                self.noise.name(),
                self.kind
            )));
        }
        if self.kind == AgentKind::BootstrappedDqn && self.noise != NoiseSpec::None {
            return bad("bootstrapped DQN explores through its heads and takes no extra noise");
        }
        Ok(())
    }
}

/// Noise-free policy extracted from an agent, enough to act greedily.
#[derive(Debug, Clone)]
pub enum GreedyPolicy {
    /// Argmax over the output of head `head`.
    Argmax { net: MultiHeadNet, head: usize },
    /// Majority vote over the argmax of every head.
    Vote { net: MultiHeadNet },
    /// Argmax over the outputs of a single network.
    Logits { net: Network },
    /// Deterministic actor on normalized observations, rescaled to the action box.
    Actor {
        actor: Network,
        normalizer: OnlineNormalizer,
        low: Vec<f64>,
        high: Vec<f64>,
    },
}

impl GreedyPolicy {
    pub fn act(&self, observation: &[f64]) -> Result<Action> {
        match self {
            GreedyPolicy::Argmax { net, head } => {
                Ok(Action::Discrete(crate::noise::argmax(&net.forward_head(observation, *head)?)?))
            }
            GreedyPolicy::Vote { net } => Ok(Action::Discrete(majority_vote(net, observation)?)),
            GreedyPolicy::Logits { net } => Ok(Action::Discrete(crate::noise::argmax(&net.forward(observation)?)?)),
            GreedyPolicy::Actor {
                actor,
                normalizer,
                low,
                high,
            } => {
                let raw = actor.forward(&normalizer.normalize(observation)?)?;
                Ok(Action::Continuous(ddpg::scale_action(&raw, low, high)))
            }
        }
    }
}

/// Action picked by the most heads; ties go to the lowest action index.
pub fn majority_vote(net: &MultiHeadNet, observation: &[f64]) -> Result<usize> {
    let outputs = net.forward_all(observation)?;
    let n = outputs.first().map_or(0, Vec::len);
    let mut votes = vec![0.0; n];
    for q in &outputs {
        votes[crate::noise::argmax(q)?] += 1.0;
    }
    crate::noise::argmax(&votes)
}

pub trait Agent: Send {
    /// Episode boundary: resample the weight perturbation or the active head.
    fn begin_episode(&mut self) -> Result<()>;

    fn act(&mut self, observation: &[f64], mode: ActMode) -> Result<Action>;

    /// Records a transition and trains when the schedule says so.
    fn observe(&mut self, transition: Transition) -> Result<()>;

    fn end_episode(&mut self) -> Result<()>;

    /// Current exploration scale: σ for weight or Gaussian noise, ε for ε-greedy.
    fn noise_scale(&self) -> f64;

    /// Most recent perturbation distance measurement, if any.
    fn last_distance(&self) -> Option<f64>;

    /// Training steps taken so far.
    fn train_steps(&self) -> u64;

    fn greedy_policy(&self) -> GreedyPolicy;
}

/// Builds the agent described by `config` for an environment with `spec`.
pub fn build_agent(config: &AgentConfig, spec: &EnvSpec, seed: u64) -> Result<Box<dyn Agent>> {
    config.validate()?;
    match (config.kind, &spec.action_space) {
        (AgentKind::Dqn | AgentKind::DqnPolicyHead, ActionSpace::Discrete(n)) => {
            Ok(Box::new(Dqn::new(config.clone(), spec.observation_dim, *n, seed)?))
        }
        (AgentKind::BootstrappedDqn, ActionSpace::Discrete(n)) => Ok(Box::new(BootstrappedDqn::new(
            config.clone(),
            spec.observation_dim,
            *n,
            seed,
        )?)),
        (AgentKind::Reinforce, ActionSpace::Discrete(n)) => {
            Ok(Box::new(Reinforce::new(config.clone(), spec.observation_dim, *n, seed)?))
        }
        (AgentKind::Ddpg, ActionSpace::Box { low, high }) => Ok(Box::new(Ddpg::new(
            config.clone(),
            spec.observation_dim,
            low.clone(),
            high.clone(),
            seed,
        )?)),
        (kind, _) => Err(Error::InvalidConfig(format!(
            "agent {kind} does not support the action space of {}",
            spec.name
        ))),
    }
}

