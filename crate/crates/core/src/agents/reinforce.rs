//! REINFORCE on a perturbed policy.
//!
//! Each episode runs under parameters `θ = φ + σε` with `ε ~ N(0, I)` drawn
//! once at the episode start. The gradient of the smoothed objective
//! `E_ε[η(φ + σε)]` with respect to the mean `φ` is estimated by
//! `1/N Σ_i Σ_t ∇_θ log π(a_t|s_t; θ_i)(R_t − b_t)`; σ itself is not learned
//! but adapted to a target KL divergence.

use rand::Rng as _;

use super::{ActMode, Agent, AgentConfig, GreedyPolicy, NoiseSpec, Transition};
use crate::distance::mean_softmax_kl;
use crate::env::Action;
use crate::error::{check_len, Error, Result};
use crate::nn::{softmax_in_place, Activation, Adam, Network};
use crate::noise::{argmax, AdaptiveNoiseState};
use crate::rng::{standard_normal, stream, Rng, Stream};

/// One rollout together with the perturbation it was generated under.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbedEpisode {
    /// Standard-normal draw; the rollout used `φ + σ·noise`.
    pub noise: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    /// Baseline subtracted from the return at each step.
    pub baselines: Vec<f64>,
}

/// `R_t = Σ_{t'≥t} γ^{t'−t} r_{t'}`.
pub fn discounted_returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for (o, r) in out.iter_mut().zip(rewards).rev() {
        acc = r + gamma * acc;
        *o = acc;
    }
    out
}

/// Monte-Carlo gradient of the perturbed objective with respect to the mean
/// parameters of `policy`, a network whose linear outputs are action logits.
pub fn reinforce_psn_gradient(
    policy: &Network,
    sigma: f64,
    episodes: &[PerturbedEpisode],
    gamma: f64,
) -> Result<Vec<f64>> {
    if episodes.is_empty() {
        return Err(Error::Empty("episode set"));
    }
    let out_layer = policy.architecture().layers.last().map(|l| l.activation);
    if out_layer != Some(Activation::Linear) {
        return Err(Error::InvalidConfig("policy network must output linear logits".into()));
    }
    if !(sigma >= 0.0) {
        return Err(Error::InvalidArgument(format!("sigma must be >= 0, got {sigma}")));
    }
    let n_actions = policy.output_dim();
    let dim = policy.input_dim();
    let mut total = vec![0.0; policy.num_params()];
    let mut theta = policy.clone();
    for ep in episodes {
        check_len("episode noise", policy.num_params(), ep.noise.len())?;
        let steps = ep.actions.len();
        check_len("episode states", steps, ep.states.len())?;
        check_len("episode rewards", steps, ep.rewards.len())?;
        check_len("episode baselines", steps, ep.baselines.len())?;
        if steps == 0 {
            continue;
        }
        for ((t, &p), &e) in theta.param_values_mut().iter_mut().zip(policy.param_values()).zip(&ep.noise) {
            *t = p + sigma * e;
        }
        let returns = discounted_returns(&ep.rewards, gamma);
        let mut states = Vec::with_capacity(steps * dim);
        for s in &ep.states {
            check_len("episode state", dim, s.len())?;
            states.extend_from_slice(s);
        }
        let tape = theta.forward_batch(&states, None, steps)?;
        // ∇ log softmax(z)_a = onehot(a) − softmax(z).
        let mut out_grad = tape.output().to_vec();
        for (t, row) in out_grad.chunks_exact_mut(n_actions).enumerate() {
            let a = ep.actions[t];
            if a >= n_actions {
                return Err(Error::InvalidArgument(format!("action {a} out of range")));
            }
            softmax_in_place(row);
            let adv = returns[t] - ep.baselines[t];
            for (j, v) in row.iter_mut().enumerate() {
                let onehot = if j == a { 1.0 } else { 0.0 };
                *v = (onehot - *v) * adv;
            }
        }
        theta.backward(&tape, &out_grad, Some(&mut total))?;
    }
    let n = episodes.len() as f64;
    total.iter_mut().for_each(|g| *g /= n);
    Ok(total)
}

/// Policy-gradient agent with per-episode weight perturbations and
/// time-indexed mean-return baselines.
#[derive(Debug, Clone)]
pub struct Reinforce {
    config: AgentConfig,
    n_actions: usize,
    policy: Network,
    optimizer: Adam,
    adaptive: Option<AdaptiveNoiseState>,
    current_noise: Vec<f64>,
    behavior: Network,
    pending: Vec<PerturbedEpisode>,
    episode: PerturbedEpisode,
    perturb_rng: Rng,
    action_rng: Rng,
    updates: u64,
    last_distance: Option<f64>,
}

impl Reinforce {
    pub fn new(config: AgentConfig, obs_dim: usize, n_actions: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        if n_actions == 0 {
            return Err(Error::InvalidConfig("policy needs at least one action".into()));
        }
        let mut init = stream(seed, Stream::Init);
        let policy = Network::new(
            crate::nn::Architecture::mlp(
                obs_dim,
                &config.hidden,
                n_actions,
                Activation::Relu,
                Activation::Linear,
                config.layer_norm,
            ),
            &mut init,
        )?;
        let adaptive = match config.noise {
            NoiseSpec::Parameter {
                initial_sigma,
                alpha,
                delta,
                adapt_interval,
                ..
            } => Some(AdaptiveNoiseState::new(initial_sigma, alpha, delta, adapt_interval)?),
            _ => None,
        };
        Ok(Self {
            n_actions,
            optimizer: Adam::new(policy.num_params(), config.learning_rate),
            adaptive,
            current_noise: vec![0.0; policy.num_params()],
            behavior: policy.clone(),
            policy,
            pending: Vec::new(),
            episode: empty_episode(),
            perturb_rng: stream(seed, Stream::Perturbation),
            action_rng: stream(seed, Stream::ActionNoise),
            updates: 0,
            last_distance: None,
            config,
        })
    }

    pub fn policy(&self) -> &Network {
        &self.policy
    }

    fn sigma(&self) -> f64 {
        self.adaptive.map_or(0.0, |s| s.sigma)
    }

    fn update(&mut self) -> Result<()> {
        let mut episodes = std::mem::take(&mut self.pending);
        let gamma = self.config.gamma;
        // Baseline at step t: mean return-to-go at t across the batch.
        let returns: Vec<Vec<f64>> = episodes.iter().map(|e| discounted_returns(&e.rewards, gamma)).collect();
        let longest = returns.iter().map(Vec::len).max().unwrap_or(0);
        let mut baseline = vec![0.0; longest];
        let mut counts = vec![0usize; longest];
        for r in &returns {
            for (t, v) in r.iter().enumerate() {
                baseline[t] += v;
                counts[t] += 1;
            }
        }
        for (b, c) in baseline.iter_mut().zip(&counts) {
            *b /= (*c).max(1) as f64;
        }
        for e in &mut episodes {
            e.baselines = baseline[..e.actions.len()].to_vec();
        }
        let sigma = self.sigma();
        let grad = reinforce_psn_gradient(&self.policy, sigma, &episodes, gamma)?;
        let ascent: Vec<f64> = grad.iter().map(|g| -g).collect();
        self.optimizer.step(self.policy.param_values_mut(), &ascent)?;
        self.updates += 1;

        if let Some(mut state) = self.adaptive {
            if self.updates.is_multiple_of(state.adapt_interval as u64) {
                let all: Vec<&Vec<f64>> = episodes.iter().flat_map(|e| &e.states).collect();
                if !all.is_empty() {
                    let states: Vec<f64> = (0..self.config.distance_batch)
                        .flat_map(|_| all[self.perturb_rng.random_range(0..all.len())].iter().copied())
                        .collect();
                    let b = self.config.distance_batch;
                    let probe = super::multihead::perturbed_network(&self.policy, state.sigma, &mut self.perturb_rng)?;
                    let clean = self.policy.forward_batch(&states, None, b)?.into_output();
                    let noisy = probe.forward_batch(&states, None, b)?.into_output();
                    let d = mean_softmax_kl(&clean, &noisy, self.n_actions)?;
                    state.adapt(d)?;
                    self.adaptive = Some(state);
                    self.last_distance = Some(d);
                }
            }
        }
        Ok(())
    }
}

fn empty_episode() -> PerturbedEpisode {
    PerturbedEpisode {
        noise: Vec::new(),
        states: Vec::new(),
        actions: Vec::new(),
        rewards: Vec::new(),
        baselines: Vec::new(),
    }
}

impl Agent for Reinforce {
    fn begin_episode(&mut self) -> Result<()> {
        let sigma = self.sigma();
        for e in &mut self.current_noise {
            *e = if sigma > 0.0 { standard_normal(&mut self.perturb_rng) } else { 0.0 };
        }
        for ((b, &p), &e) in self
            .behavior
            .param_values_mut()
            .iter_mut()
            .zip(self.policy.param_values())
            .zip(&self.current_noise)
        {
            *b = p + sigma * e;
        }
        self.episode = PerturbedEpisode {
            noise: self.current_noise.clone(),
            ..empty_episode()
        };
        Ok(())
    }

    fn act(&mut self, observation: &[f64], mode: ActMode) -> Result<Action> {
        match mode {
            ActMode::Greedy => Ok(Action::Discrete(argmax(&self.policy.forward(observation)?)?)),
            ActMode::Explore => {
                let mut p = self.behavior.forward(observation)?;
                softmax_in_place(&mut p);
                let u: f64 = self.action_rng.random();
                let mut acc = 0.0;
                let mut choice = p.len() - 1;
                for (i, v) in p.iter().enumerate() {
                    acc += v;
                    if u < acc {
                        choice = i;
                        break;
                    }
                }
                Ok(Action::Discrete(choice))
            }
        }
    }

    fn observe(&mut self, transition: Transition) -> Result<()> {
        let Action::Discrete(a) = transition.action else {
            return Err(Error::InvalidArgument("REINFORCE needs discrete actions".into()));
        };
        self.episode.states.push(transition.state);
        self.episode.actions.push(a);
        self.episode.rewards.push(transition.reward);
        Ok(())
    }

    fn end_episode(&mut self) -> Result<()> {
        let ep = std::mem::replace(&mut self.episode, empty_episode());
        if !ep.actions.is_empty() {
            self.pending.push(ep);
        }
        if self.pending.len() >= self.config.episodes_per_update {
            self.update()?;
        }
        Ok(())
    }

    fn noise_scale(&self) -> f64 {
        self.sigma()
    }

    fn last_distance(&self) -> Option<f64> {
        self.last_distance
    }

    fn train_steps(&self) -> u64 {
        self.updates
    }

    fn greedy_policy(&self) -> GreedyPolicy {
        GreedyPolicy::Logits {
            net: self.policy.clone(),
        }
    }
}
