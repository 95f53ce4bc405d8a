//! DDPG with parameter-space or action-space exploration.
//!
//! The actor emits `tanh` actions in `[-1, 1]` which are rescaled to the
//! environment's action box; the critic and all noise operate in the
//! `[-1, 1]` space. The critic sees the action at its second layer.
//! Observations are normalized with running statistics and clipped.

use super::multihead::perturbed_network;
use super::normalizer::OnlineNormalizer;
use super::replay::ReplayBuffer;
use super::{ActMode, Agent, AgentConfig, GreedyPolicy, NoiseSpec, TargetUpdate, Transition};
use crate::distance::network_policy_distance;
use crate::env::Action;
use crate::error::{check_len, Error, Result};
use crate::nn::{Activation, Adam, Architecture, Network, TensorKind};
use crate::noise::{gaussian_action_noise, AdaptiveNoiseState, OuState};
use crate::rng::{stream, Rng, Stream};

pub const OBSERVATION_CLIP: f64 = 5.0;

/// Maps `[-1, 1]` actions onto `[low, high]`.
pub fn scale_action(raw: &[f64], low: &[f64], high: &[f64]) -> Vec<f64> {
    raw.iter()
        .zip(low.iter().zip(high))
        .map(|(&a, (&lo, &hi))| lo + (a.clamp(-1.0, 1.0) + 1.0) * 0.5 * (hi - lo))
        .collect()
}

/// Inverse of [`scale_action`].
pub fn unscale_action(action: &[f64], low: &[f64], high: &[f64]) -> Vec<f64> {
    action
        .iter()
        .zip(low.iter().zip(high))
        .map(|(&a, (&lo, &hi))| (2.0 * (a - lo) / (hi - lo) - 1.0).clamp(-1.0, 1.0))
        .collect()
}

/// Gradient of `−mean_b Q(s_b, π(s_b))` with respect to the actor
/// parameters. `action_grad` maps the batch of actor actions to `∂Q/∂a`
/// per row.
pub fn actor_gradient(
    actor: &Network,
    states: &[f64],
    batch: usize,
    action_grad: impl FnOnce(&[f64]) -> Result<Vec<f64>>,
) -> Result<Vec<f64>> {
    let tape = actor.forward_batch(states, None, batch)?;
    let mut g = action_grad(tape.output())?;
    check_len("action gradient", tape.output().len(), g.len())?;
    g.iter_mut().for_each(|v| *v *= -1.0 / batch as f64);
    let mut grads = vec![0.0; actor.num_params()];
    actor.backward(&tape, &g, Some(&mut grads))?;
    Ok(grads)
}

/// Losses from one training step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DdpgLosses {
    pub critic: f64,
    /// Mean critic value of the actor's actions on the batch.
    pub actor_objective: f64,
}

#[derive(Debug, Clone)]
pub struct Ddpg {
    config: AgentConfig,
    low: Vec<f64>,
    high: Vec<f64>,
    actor: Network,
    critic: Network,
    target_actor: Network,
    target_critic: Network,
    actor_optimizer: Adam,
    critic_optimizer: Adam,
    perturbed_actor: Option<Network>,
    adaptive: Option<AdaptiveNoiseState>,
    ou: Option<OuState>,
    normalizer: OnlineNormalizer,
    buffer: ReplayBuffer,
    perturb_rng: Rng,
    action_rng: Rng,
    replay_rng: Rng,
    steps: u64,
    train_steps: u64,
    last_distance: Option<f64>,
    last_losses: Option<DdpgLosses>,
}

impl Ddpg {
    pub fn new(config: AgentConfig, obs_dim: usize, low: Vec<f64>, high: Vec<f64>, seed: u64) -> Result<Self> {
        config.validate()?;
        check_len("action bounds", low.len(), high.len())?;
        if low.is_empty() || low.iter().zip(&high).any(|(l, h)| !(l < h)) {
            return Err(Error::InvalidConfig("DDPG needs a non-empty action box with low < high".into()));
        }
        let act_dim = low.len();
        let hidden = &config.hidden;
        let mut init = stream(seed, Stream::Init);
        let actor = Network::new(
            Architecture::mlp(obs_dim, hidden, act_dim, Activation::Relu, Activation::Tanh, config.layer_norm),
            &mut init,
        )?;
        let side_layer = 1.min(hidden.len());
        let critic = Network::new(
            Architecture::mlp(obs_dim, hidden, 1, Activation::Relu, Activation::Linear, config.layer_norm)
                .with_side_input(side_layer, act_dim),
            &mut init,
        )?;
        let (adaptive, ou) = match config.noise {
            NoiseSpec::Parameter {
                initial_sigma,
                alpha,
                delta,
                adapt_interval,
                ..
            } => (Some(AdaptiveNoiseState::new(initial_sigma, alpha, delta, adapt_interval)?), None),
            NoiseSpec::OrnsteinUhlenbeck { sigma } => (None, Some(OuState::new(act_dim, sigma))),
            _ => (None, None),
        };
        Ok(Self {
            target_actor: actor.clone(),
            target_critic: critic.clone(),
            actor_optimizer: Adam::new(actor.num_params(), config.actor_learning_rate),
            critic_optimizer: Adam::new(critic.num_params(), config.learning_rate),
            actor,
            critic,
            perturbed_actor: None,
            adaptive,
            ou,
            normalizer: OnlineNormalizer::new(obs_dim, OBSERVATION_CLIP),
            buffer: ReplayBuffer::new(config.buffer_capacity)?,
            perturb_rng: stream(seed, Stream::Perturbation),
            action_rng: stream(seed, Stream::ActionNoise),
            replay_rng: stream(seed, Stream::Replay),
            steps: 0,
            train_steps: 0,
            last_distance: None,
            last_losses: None,
            low,
            high,
            config,
        })
    }

    pub fn actor(&self) -> &Network {
        &self.actor
    }

    pub fn critic(&self) -> &Network {
        &self.critic
    }

    pub fn target_actor(&self) -> &Network {
        &self.target_actor
    }

    pub fn target_critic(&self) -> &Network {
        &self.target_critic
    }

    pub fn perturbed_actor(&self) -> Option<&Network> {
        self.perturbed_actor.as_ref()
    }

    pub fn normalizer(&self) -> &OnlineNormalizer {
        &self.normalizer
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn last_losses(&self) -> Option<DdpgLosses> {
        self.last_losses
    }

    pub fn sigma(&self) -> Option<f64> {
        self.adaptive.map(|s| s.sigma)
    }

    pub fn store(&mut self, transition: Transition) -> Result<()> {
        let dim = self.normalizer.dim();
        check_len("transition state", dim, transition.state.len())?;
        check_len("transition next state", dim, transition.next_state.len())?;
        match &transition.action {
            Action::Continuous(a) if a.len() == self.low.len() => {}
            _ => return Err(Error::InvalidArgument("DDPG transition needs a continuous action".into())),
        }
        self.normalizer.update(&transition.state)?;
        self.buffer.push(transition);
        Ok(())
    }

    fn normalized_batch(&self, idx: &[usize], next: bool) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(idx.len() * self.normalizer.dim());
        for &i in idx {
            let t = self.buffer.get(i).expect("sampled index is in range");
            out.extend(self.normalizer.normalize(if next { &t.next_state } else { &t.state })?);
        }
        Ok(out)
    }

    /// One critic and one actor update on a replay batch, followed by the
    /// soft target update. Both gradients are computed before either network
    /// changes.
    pub fn train_step(&mut self) -> Result<Option<DdpgLosses>> {
        let b = self.config.batch_size;
        if self.buffer.len() < b {
            return Ok(None);
        }
        let m = self.low.len();
        let idx = self.buffer.sample_indices(b, &mut self.replay_rng)?;
        let states = self.normalized_batch(&idx, false)?;
        let next_states = self.normalized_batch(&idx, true)?;
        let mut actions = Vec::with_capacity(b * m);
        for &i in &idx {
            let t = self.buffer.get(i).expect("sampled index is in range");
            if let Action::Continuous(a) = &t.action {
                actions.extend(unscale_action(a, &self.low, &self.high));
            }
        }

        let next_actions = self.target_actor.forward_batch(&next_states, None, b)?.into_output();
        let next_q = self
            .target_critic
            .forward_batch(&next_states, Some(&next_actions), b)?
            .into_output();

        let tape = self.critic.forward_batch(&states, Some(&actions), b)?;
        let mut critic_grad_out = vec![0.0; b];
        let mut critic_loss = 0.0;
        for (row, &i) in idx.iter().enumerate() {
            let t = self.buffer.get(i).expect("sampled index is in range");
            let y = t.reward + if t.done { 0.0 } else { self.config.gamma * next_q[row] };
            let err = tape.output()[row] - y;
            critic_loss += err * err / b as f64;
            critic_grad_out[row] = 2.0 * err / b as f64;
        }
        let mut critic_grads = vec![0.0; self.critic.num_params()];
        self.critic.backward(&tape, &critic_grad_out, Some(&mut critic_grads))?;
        critic_loss += self.apply_weight_decay(&mut critic_grads);

        let critic = &self.critic;
        let mut objective = 0.0;
        let actor_grads = actor_gradient(&self.actor, &states, b, |actions| {
            let q_tape = critic.forward_batch(&states, Some(actions), b)?;
            objective = q_tape.output().iter().sum::<f64>() / b as f64;
            critic
                .backward(&q_tape, &vec![1.0; b], None)?
                .side
                .ok_or(Error::InvalidConfig("critic has no action input".into()))
        })?;

        if !critic_loss.is_finite() || !objective.is_finite() {
            return Err(Error::NonFinite("DDPG loss"));
        }
        self.critic_optimizer.step(self.critic.param_values_mut(), &critic_grads)?;
        self.actor_optimizer.step(self.actor.param_values_mut(), &actor_grads)?;
        match self.config.target_update {
            TargetUpdate::Soft(tau) => {
                self.target_critic.soft_update_from(&self.critic, tau)?;
                self.target_actor.soft_update_from(&self.actor, tau)?;
            }
            TargetUpdate::Hard(every) => {
                if (self.train_steps + 1).is_multiple_of(every as u64) {
                    self.target_critic.copy_params_from(&self.critic)?;
                    self.target_actor.copy_params_from(&self.actor)?;
                }
            }
        }
        self.train_steps += 1;
        if let Some(state) = self.adaptive {
            if self.train_steps.is_multiple_of(state.adapt_interval as u64) {
                self.adapt_noise()?;
            }
        }
        let losses = DdpgLosses {
            critic: critic_loss,
            actor_objective: objective,
        };
        self.last_losses = Some(losses);
        Ok(Some(losses))
    }

    /// Adds the gradient of `λ/2·Σw²` over the critic's hidden-layer weights
    /// and returns the penalty value.
    fn apply_weight_decay(&self, grads: &mut [f64]) -> f64 {
        let lambda = self.config.critic_weight_decay;
        if lambda == 0.0 {
            return 0.0;
        }
        let last = self.critic.architecture().layers.len() - 1;
        let params = self.critic.param_values();
        let mut penalty = 0.0;
        for slot in self.critic.layout() {
            if slot.kind == TensorKind::Weight && slot.layer < last {
                for i in slot.range.clone() {
                    grads[i] += lambda * params[i];
                    penalty += 0.5 * lambda * params[i] * params[i];
                }
            }
        }
        penalty
    }

    /// Distance between the actor and a fresh perturbation of it at the
    /// current scale, measured on a replay batch; then adapts the scale.
    pub fn adapt_noise(&mut self) -> Result<f64> {
        let Some(mut state) = self.adaptive else {
            return Err(Error::InvalidArgument("agent does not use parameter noise".into()));
        };
        let idx = self.buffer.sample_indices(self.config.distance_batch, &mut self.replay_rng)?;
        let states = self.normalized_batch(&idx, false)?;
        let probe = perturbed_network(&self.actor, state.sigma, &mut self.perturb_rng)?;
        let d = network_policy_distance(&self.actor, &probe, &states)?;
        state.adapt(d)?;
        self.adaptive = Some(state);
        self.last_distance = Some(d);
        Ok(d)
    }

    /// Actor output in `[-1, 1]` before any exploration noise.
    pub fn raw_action(&self, observation: &[f64]) -> Result<Vec<f64>> {
        self.actor.forward(&self.normalizer.normalize(observation)?)
    }
}

impl Agent for Ddpg {
    fn begin_episode(&mut self) -> Result<()> {
        if let Some(state) = self.adaptive {
            self.perturbed_actor = Some(perturbed_network(&self.actor, state.sigma, &mut self.perturb_rng)?);
        }
        if let Some(ou) = &mut self.ou {
            ou.reset();
        }
        Ok(())
    }

    fn act(&mut self, observation: &[f64], mode: ActMode) -> Result<Action> {
        let obs = self.normalizer.normalize(observation)?;
        let unit_low = vec![-1.0; self.low.len()];
        let unit_high = vec![1.0; self.low.len()];
        let raw = match (mode, self.config.noise) {
            (ActMode::Greedy, _) | (ActMode::Explore, NoiseSpec::None) => self.actor.forward(&obs)?,
            (ActMode::Explore, NoiseSpec::Parameter { .. }) => {
                self.perturbed_actor.as_ref().unwrap_or(&self.actor).forward(&obs)?
            }
            (ActMode::Explore, NoiseSpec::Gaussian { sigma }) => gaussian_action_noise(
                &self.actor.forward(&obs)?,
                sigma,
                &unit_low,
                &unit_high,
                &mut self.action_rng,
            )?,
            (ActMode::Explore, NoiseSpec::OrnsteinUhlenbeck { .. }) => {
                let a = self.actor.forward(&obs)?;
                let ou = self.ou.as_mut().expect("OU state exists for OU noise");
                let n = ou.step(&mut self.action_rng);
                a.iter().zip(n).map(|(x, e)| (x + e).clamp(-1.0, 1.0)).collect()
            }
            (ActMode::Explore, NoiseSpec::EpsilonGreedy { .. }) => {
                return Err(Error::InvalidConfig("ε-greedy is not defined for DDPG".into()));
            }
        };
        Ok(Action::Continuous(scale_action(&raw, &self.low, &self.high)))
    }

    fn observe(&mut self, transition: Transition) -> Result<()> {
        self.store(transition)?;
        self.steps += 1;
        if self.steps.is_multiple_of(self.config.train_interval as u64) {
            self.train_step()?;
        }
        Ok(())
    }

    fn end_episode(&mut self) -> Result<()> {
        Ok(())
    }

    fn noise_scale(&self) -> f64 {
        match self.config.noise {
            NoiseSpec::Parameter { .. } => self.sigma().unwrap_or(0.0),
            NoiseSpec::Gaussian { sigma } | NoiseSpec::OrnsteinUhlenbeck { sigma } => sigma,
            _ => 0.0,
        }
    }

    fn last_distance(&self) -> Option<f64> {
        self.last_distance
    }

    fn train_steps(&self) -> u64 {
        self.train_steps
    }

    fn greedy_policy(&self) -> GreedyPolicy {
        GreedyPolicy::Actor {
            actor: self.actor.clone(),
            normalizer: self.normalizer.clone(),
            low: self.low.clone(),
            high: self.high.clone(),
        }
    }
}
