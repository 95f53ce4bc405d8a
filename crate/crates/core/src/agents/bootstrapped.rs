//! Bootstrapped DQN: `K` Q-heads on a shared trunk, each trained on its own
//! Bernoulli-masked share of the replay data. One head drives each episode;
//! evaluation takes a majority vote.

use rand::Rng as _;

use super::multihead::{MultiAdam, MultiHeadNet};
use super::replay::ReplayBuffer;
use super::{majority_vote, ActMode, Agent, AgentConfig, GreedyPolicy, TargetUpdate, Transition};
use crate::env::Action;
use crate::error::{check_len, Error, Result};
use crate::noise::argmax;
use crate::rng::{stream, Rng, Stream};

#[derive(Debug, Clone)]
pub struct BootstrappedDqn {
    config: AgentConfig,
    n_actions: usize,
    online: MultiHeadNet,
    target: MultiHeadNet,
    optimizer: MultiAdam,
    buffer: ReplayBuffer,
    active_head: usize,
    head_rng: Rng,
    mask_rng: Rng,
    replay_rng: Rng,
    episodes: u64,
    steps: u64,
    train_steps: u64,
    last_loss: Option<f64>,
}

impl BootstrappedDqn {
    /// The first hidden layer is shared; each head owns the remaining hidden
    /// layers and its output layer.
    pub fn new(config: AgentConfig, obs_dim: usize, n_actions: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        if n_actions == 0 {
            return Err(Error::InvalidConfig("DQN needs at least one action".into()));
        }
        let mut init = stream(seed, Stream::Init);
        let online = MultiHeadNet::new(
            obs_dim,
            &config.hidden[..1],
            &config.hidden[1..],
            &vec![n_actions; config.heads],
            config.layer_norm,
            &mut init,
        )?;
        let mut mask_rng = stream(seed, Stream::ActionNoise);
        let head_rng = crate::rng::split(&mut mask_rng);
        Ok(Self {
            n_actions,
            target: online.clone(),
            optimizer: MultiAdam::new(&online, config.learning_rate),
            online,
            buffer: ReplayBuffer::new(config.buffer_capacity)?,
            active_head: 0,
            head_rng,
            mask_rng,
            replay_rng: stream(seed, Stream::Replay),
            episodes: 0,
            steps: 0,
            train_steps: 0,
            last_loss: None,
            config,
        })
    }

    pub fn online(&self) -> &MultiHeadNet {
        &self.online
    }

    pub fn active_head(&self) -> usize {
        self.active_head
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    /// Draws an i.i.d. Bernoulli mask over the heads.
    pub fn sample_mask(&mut self) -> Vec<bool> {
        let p = self.config.mask_probability;
        (0..self.config.heads).map(|_| self.mask_rng.random_bool(p)).collect()
    }

    pub fn store(&mut self, mut transition: Transition) -> Result<()> {
        check_len("transition state", self.online.input_dim(), transition.state.len())?;
        check_len("transition next state", self.online.input_dim(), transition.next_state.len())?;
        match transition.action {
            Action::Discrete(a) if a < self.n_actions => {}
            _ => return Err(Error::InvalidArgument("DQN transition needs a valid discrete action".into())),
        }
        match &transition.head_mask {
            Some(m) => check_len("head mask", self.config.heads, m.len())?,
            None => transition.head_mask = Some(self.sample_mask()),
        }
        self.buffer.push(transition);
        Ok(())
    }

    /// One masked gradient step for all heads. The trunk receives the sum of
    /// head gradients scaled by `1/K`.
    pub fn train_step(&mut self) -> Result<Option<f64>> {
        let b = self.config.batch_size;
        if self.buffer.len() < b {
            return Ok(None);
        }
        let k = self.config.heads;
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
        let all: Vec<usize> = (0..k).collect();
        let next_tape = self.target.forward_batch(&next_states, b, &all)?;
        let tape = self.online.forward_batch(&states, b, &all)?;

        let mut head_grads = vec![vec![0.0; b * n]; k];
        let mut loss = 0.0;
        for (head, grad) in head_grads.iter_mut().enumerate() {
            let q = tape.head_output(head);
            let next_q = next_tape.head_output(head);
            for (row, &i) in idx.iter().enumerate() {
                let t = self.buffer.get(i).expect("sampled index is in range");
                if !t.head_mask.as_ref().is_some_and(|m| m[head]) {
                    continue;
                }
                let Action::Discrete(a) = t.action else { unreachable!("checked on store") };
                let mut y = t.reward;
                if !t.done {
                    let best = next_q[row * n..(row + 1) * n].iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    y += self.config.gamma * best;
                }
                let err = q[row * n + a] - y;
                loss += err * err / b as f64;
                grad[row * n + a] = 2.0 * err / b as f64;
            }
        }
        if !loss.is_finite() {
            return Err(Error::NonFinite("TD loss"));
        }
        let pairs: Vec<(usize, &[f64])> = head_grads.iter().enumerate().map(|(h, g)| (h, g.as_slice())).collect();
        let mut grads = self.online.zero_grads();
        self.online.backward(&tape, &pairs, 1.0 / k as f64, &[], &mut grads)?;
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
        self.last_loss = Some(loss);
        Ok(Some(loss))
    }
}

impl Agent for BootstrappedDqn {
    fn begin_episode(&mut self) -> Result<()> {
        self.active_head = self.head_rng.random_range(0..self.config.heads);
        Ok(())
    }

    fn act(&mut self, observation: &[f64], mode: ActMode) -> Result<Action> {
        let a = match mode {
            ActMode::Explore => argmax(&self.online.forward_head(observation, self.active_head)?)?,
            ActMode::Greedy => majority_vote(&self.online, observation)?,
        };
        Ok(Action::Discrete(a))
    }

    fn observe(&mut self, transition: Transition) -> Result<()> {
        self.store(transition)?;
        self.steps += 1;
        if self.episodes >= self.config.warmup_episodes
            && self.buffer.len() >= self.config.batch_size
            && self.steps.is_multiple_of(self.config.train_interval as u64)
        {
            self.train_step()?;
        }
        Ok(())
    }

    fn end_episode(&mut self) -> Result<()> {
        self.episodes += 1;
        Ok(())
    }

    fn noise_scale(&self) -> f64 {
        0.0
    }

    fn last_distance(&self) -> Option<f64> {
        None
    }

    fn train_steps(&self) -> u64 {
        self.train_steps
    }

    fn greedy_policy(&self) -> GreedyPolicy {
        GreedyPolicy::Vote { net: self.online.clone() }
    }
}
