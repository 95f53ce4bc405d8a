//! DQN with ε-greedy or adaptive parameter-space exploration.
//!
//! The plain variant perturbs the Q-network itself and measures the
//! perturbation as the KL divergence between the softmax of the clean and
//! perturbed Q-values. The policy-head variant adds a softmax head trained to
//! imitate the greedy Q-policy; that head is what gets perturbed and measured.

use super::multihead::{MultiAdam, MultiHeadNet};
use super::replay::ReplayBuffer;
use super::{ActMode, Agent, AgentConfig, AgentKind, GreedyPolicy, NoiseSpec, TargetUpdate, Transition};
use crate::distance::{mean_softmax_kl, DiscretePolicyDist};
use crate::env::Action;
use crate::error::{check_len, Error, Result};
use crate::nn::softmax_in_place;
use crate::noise::{argmax, epsilon_greedy_select, linear_anneal, AdaptiveNoiseState};
use crate::rng::{stream, Rng, Stream};

const Q_HEAD: usize = 0;
const POLICY_HEAD: usize = 1;

/// Cross-entropy between the greedy action of `q_values` and `policy`.
pub fn policy_head_loss(q_values: &[f64], policy: &DiscretePolicyDist) -> Result<f64> {
    check_len("policy head", q_values.len(), policy.len())?;
    let p = policy.probs()[argmax(q_values)?];
    Ok(if p == 0.0 { f64::INFINITY } else { -p.ln() })
}

#[derive(Debug, Clone)]
pub struct Dqn {
    config: AgentConfig,
    n_actions: usize,
    online: MultiHeadNet,
    target: MultiHeadNet,
    optimizer: MultiAdam,
    perturbed: Option<MultiHeadNet>,
    adaptive: Option<AdaptiveNoiseState>,
    buffer: ReplayBuffer,
    perturb_rng: Rng,
    action_rng: Rng,
    replay_rng: Rng,
    episodes: u64,
    steps: u64,
    train_steps: u64,
    last_distance: Option<f64>,
    last_loss: Option<f64>,
}

impl Dqn {
    pub fn new(config: AgentConfig, obs_dim: usize, n_actions: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        if n_actions == 0 {
            return Err(Error::InvalidConfig("DQN needs at least one action".into()));
        }
        let outputs: &[usize] = if config.kind == AgentKind::DqnPolicyHead {
            &[n_actions, n_actions]
        } else {
            &[n_actions]
        };
        let mut init = stream(seed, Stream::Init);
        let online = MultiHeadNet::new(obs_dim, &config.hidden, &[], outputs, config.layer_norm, &mut init)?;
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
            target: online.clone(),
            optimizer: MultiAdam::new(&online, config.learning_rate),
            online,
            perturbed: None,
            adaptive,
            buffer: ReplayBuffer::new(config.buffer_capacity)?,
            perturb_rng: stream(seed, Stream::Perturbation),
            action_rng: stream(seed, Stream::ActionNoise),
            replay_rng: stream(seed, Stream::Replay),
            episodes: 0,
            steps: 0,
            train_steps: 0,
            last_distance: None,
            last_loss: None,
            config,
        })
    }

    pub fn online(&self) -> &MultiHeadNet {
        &self.online
    }

    pub fn perturbed(&self) -> Option<&MultiHeadNet> {
        self.perturbed.as_ref()
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn last_loss(&self) -> Option<f64> {
        self.last_loss
    }

    pub fn q_values(&self, observation: &[f64]) -> Result<Vec<f64>> {
        self.online.forward_head(observation, Q_HEAD)
    }

    fn uses_policy_head(&self) -> bool {
        self.config.kind == AgentKind::DqnPolicyHead
    }

    fn behavior_head(&self) -> usize {
        if self.uses_policy_head() {
            POLICY_HEAD
        } else {
            Q_HEAD
        }
    }

    /// Current ε of the annealed schedule, if this agent uses one.
    pub fn epsilon(&self) -> Option<f64> {
        match self.config.noise {
            NoiseSpec::EpsilonGreedy {
                start,
                end,
                anneal_episodes,
            } => Some(linear_anneal(start, end, self.episodes, anneal_episodes)),
            _ => None,
        }
    }

    /// Adds a transition to replay without training.
    pub fn store(&mut self, transition: Transition) -> Result<()> {
        check_len("transition state", self.online.input_dim(), transition.state.len())?;
        check_len("transition next state", self.online.input_dim(), transition.next_state.len())?;
        match transition.action {
            Action::Discrete(a) if a < self.n_actions => {}
            _ => return Err(Error::InvalidArgument("DQN transition needs a valid discrete action".into())),
        }
        self.buffer.push(transition);
        Ok(())
    }

    fn ready_to_train(&self) -> bool {
        self.episodes >= self.config.warmup_episodes && self.buffer.len() >= self.config.batch_size
    }

    /// One gradient step on a replay batch. Returns the TD loss, or `None`
    /// when the buffer holds fewer items than a batch.
    pub fn train_step(&mut self) -> Result<Option<f64>> {
        let b = self.config.batch_size;
        if self.buffer.len() < b {
            return Ok(None);
        }
        let n = self.n_actions;
        let dim = self.online.input_dim();
        let idx = self.buffer.sample_indices(b, &mut self.replay_rng)?;
        let mut states = Vec::with_capacity(b * dim);
        let mut next_states = Vec::with_capacity(b * dim);
        for &i in &idx {
            let t = self.buffer.get(i).expect("sampled index is in range");
            states.extend_from_slice(&t.state);
            next_states.extend_from_slice(&t.next_state);
        }
        let next_q = self.target.predict_batch(&next_states, b, Q_HEAD)?;

        let heads: &[usize] = if self.uses_policy_head() { &[Q_HEAD, POLICY_HEAD] } else { &[Q_HEAD] };
        let tape = self.online.forward_batch(&states, b, heads)?;
        let q = tape.head_output(Q_HEAD);
        let mut q_grad = vec![0.0; b * n];
        let mut loss = 0.0;
        for (row, &i) in idx.iter().enumerate() {
            let t = self.buffer.get(i).expect("sampled index is in range");
            let Action::Discrete(a) = t.action else { unreachable!("checked on store") };
            let mut y = t.reward;
            if !t.done {
                let best = next_q[row * n..(row + 1) * n].iter().copied().fold(f64::NEG_INFINITY, f64::max);
                y += self.config.gamma * best;
            }
            let err = q[row * n + a] - y;
            loss += err * err;
            q_grad[row * n + a] = 2.0 * err / b as f64;
        }
        loss /= b as f64;

        let mut grads = self.online.zero_grads();
        if self.uses_policy_head() {
            let logits = tape.head_output(POLICY_HEAD);
            let mut pi_grad = logits.to_vec();
            for (row, p) in pi_grad.chunks_exact_mut(n).enumerate() {
                softmax_in_place(p);
                let greedy = argmax(&q[row * n..(row + 1) * n])?;
                p[greedy] -= 1.0;
                p.iter_mut().for_each(|v| *v /= b as f64);
            }
            self.online.backward(
                &tape,
                &[(Q_HEAD, &q_grad), (POLICY_HEAD, &pi_grad)],
                1.0,
                &[POLICY_HEAD],
                &mut grads,
            )?;
        } else {
            self.online.backward(&tape, &[(Q_HEAD, &q_grad)], 1.0, &[], &mut grads)?;
        }
        if !loss.is_finite() {
            return Err(Error::NonFinite("TD loss"));
        }
        self.optimizer.step(&mut self.online, &grads)?;
        self.train_steps += 1;
        match self.config.target_update {
            TargetUpdate::Hard(every) => {
                if self.train_steps.is_multiple_of(every as u64) {
                    self.target.copy_from(&self.online)?;
                }
            }
            TargetUpdate::Soft(tau) => self.target.soft_update_from(&self.online, tau)?,
        }
        if let Some(state) = self.adaptive {
            if self.train_steps.is_multiple_of(state.adapt_interval as u64) {
                self.adapt_noise()?;
            }
        }
        self.last_loss = Some(loss);
        Ok(Some(loss))
    }

    /// Measures the behavioral effect of a fresh perturbation at the current
    /// scale on replay states and adapts the scale.
    pub fn adapt_noise(&mut self) -> Result<f64> {
        let Some(mut state) = self.adaptive else {
            return Err(Error::InvalidArgument("agent does not use parameter noise".into()));
        };
        let d = self.measure_distance(state.sigma)?;
        state.adapt(d)?;
        self.adaptive = Some(state);
        self.last_distance = Some(d);
        Ok(d)
    }

    /// Mean KL between the clean and a freshly perturbed behavior head.
    pub fn measure_distance(&mut self, sigma: f64) -> Result<f64> {
        let b = self.config.distance_batch;
        let idx = self.buffer.sample_indices(b, &mut self.replay_rng)?;
        let states: Vec<f64> = idx
            .iter()
            .flat_map(|&i| self.buffer.get(i).expect("sampled index is in range").state.iter().copied())
            .collect();
        let probe = self.online.perturbed(sigma, &mut self.perturb_rng)?;
        let head = self.behavior_head();
        let clean = self.online.predict_batch(&states, b, head)?;
        let noisy = probe.predict_batch(&states, b, head)?;
        mean_softmax_kl(&clean, &noisy, self.n_actions)
    }

    pub fn sigma(&self) -> Option<f64> {
        self.adaptive.map(|s| s.sigma)
    }
}

impl Agent for Dqn {
    fn begin_episode(&mut self) -> Result<()> {
        if let Some(state) = self.adaptive {
            self.perturbed = Some(self.online.perturbed(state.sigma, &mut self.perturb_rng)?);
        }
        Ok(())
    }

    fn act(&mut self, observation: &[f64], mode: ActMode) -> Result<Action> {
        let a = match (mode, self.config.noise) {
            (ActMode::Greedy, _) | (ActMode::Explore, NoiseSpec::None) => argmax(&self.q_values(observation)?)?,
            (ActMode::Explore, NoiseSpec::EpsilonGreedy { .. }) => {
                let eps = self.epsilon().unwrap_or(0.0);
                epsilon_greedy_select(&self.q_values(observation)?, eps, &mut self.action_rng)?
            }
            (ActMode::Explore, NoiseSpec::Parameter { residual_epsilon, .. }) => {
                let net = self.perturbed.as_ref().unwrap_or(&self.online);
                let values = net.forward_head(observation, self.behavior_head())?;
                if residual_epsilon > 0.0 {
                    epsilon_greedy_select(&values, residual_epsilon, &mut self.action_rng)?
                } else {
                    argmax(&values)?
                }
            }
            (ActMode::Explore, _) => {
                return Err(Error::InvalidConfig("unsupported noise for DQN".into()));
            }
        };
        Ok(Action::Discrete(a))
    }

    fn observe(&mut self, transition: Transition) -> Result<()> {
        self.store(transition)?;
        self.steps += 1;
        if self.ready_to_train() && self.steps.is_multiple_of(self.config.train_interval as u64) {
            self.train_step()?;
        }
        Ok(())
    }

    fn end_episode(&mut self) -> Result<()> {
        self.episodes += 1;
        Ok(())
    }

    fn noise_scale(&self) -> f64 {
        self.sigma().or_else(|| self.epsilon()).unwrap_or(0.0)
    }

    fn last_distance(&self) -> Option<f64> {
        self.last_distance
    }

    fn train_steps(&self) -> u64 {
        self.train_steps
    }

    fn greedy_policy(&self) -> GreedyPolicy {
        GreedyPolicy::Argmax {
            net: self.online.clone(),
            head: Q_HEAD,
        }
    }
}
