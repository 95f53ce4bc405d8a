//! Seeded training runs and the evaluation protocols.

use paramnoise::agents::{build_agent, ActMode, Agent, GreedyPolicy, Transition};
use paramnoise::env::{chain_optimal_return, EnvKind, Environment};
use paramnoise::rng::{stream, Rng, Stream};

use crate::config::ExperimentConfig;

/// Consecutive optimal evaluations needed to call a chain solved.
pub const SOLVED_STREAK: u64 = 100;

/// Tolerance on the optimal chain return; returns are exact sums of 0.001 and 1.
pub const SOLVED_TOLERANCE: f64 = 1e-9;

/// Episodes-to-solve recorded for runs that never solve.
pub const UNSOLVED_EPISODES: u64 = 2000;

/// One CSV row, written after every training episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub episode: u64,
    pub steps: u64,
    pub train_return: f64,
    /// Latest evaluation return; NaN before the first evaluation.
    pub eval_return: f64,
    pub sigma: f64,
    /// Latest perturbation distance; NaN if none was measured.
    pub distance: f64,
    pub solved_streak: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunStatus {
    Solved { episode: u64 },
    Unsolved,
    /// The agent produced a non-finite value or another internal error.
    Failed(String),
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub seed: u64,
    pub rows: Vec<Row>,
    pub status: RunStatus,
    pub train_steps: u64,
    /// Noise-free policy at the end of the run.
    pub policy: Option<GreedyPolicy>,
}

impl RunResult {
    pub fn solved_at(&self) -> Option<u64> {
        match self.status {
            RunStatus::Solved { episode } => Some(episode),
            _ => None,
        }
    }

    pub fn episodes_to_solve(&self) -> u64 {
        self.solved_at().unwrap_or(UNSOLVED_EPISODES)
    }

    pub fn failed(&self) -> bool {
        matches!(self.status, RunStatus::Failed(_))
    }
}

/// Streak of trailing evaluations at least `optimal - tol`, and whether it
/// reaches [`SOLVED_STREAK`].
pub fn solved_check(history: &[f64], optimal: f64, tol: f64) -> (bool, u64) {
    let streak = history.iter().rev().take_while(|&&r| r >= optimal - tol).count() as u64;
    (streak >= SOLVED_STREAK, streak)
}

/// Mean undiscounted return of `n` noise-free rollouts.
pub fn evaluate_policy(
    policy: &GreedyPolicy,
    env: &mut dyn Environment,
    n: usize,
    rng: &mut Rng,
) -> paramnoise::Result<f64> {
    if n == 0 {
        return Err(paramnoise::Error::InvalidArgument("evaluation needs at least one episode".into()));
    }
    let mut total = 0.0;
    for _ in 0..n {
        let mut obs = env.reset(rng);
        loop {
            let step = env.step(&policy.act(&obs)?)?;
            total += step.reward;
            obs = step.observation;
            if step.done {
                break;
            }
        }
    }
    Ok(total / n as f64)
}

/// Trains one seed to completion.
///
/// Chains are evaluated with one greedy rollout after every episode and stop
/// once solved. Other tasks are evaluated at the first episode boundary after
/// each `eval_every_steps` block; rows in between repeat the last value.
pub fn run_seed(config: &ExperimentConfig, seed: u64) -> RunResult {
    let mut result = RunResult {
        seed,
        rows: Vec::new(),
        status: RunStatus::Unsolved,
        train_steps: 0,
        policy: None,
    };
    let mut env = config.env.build();
    let mut agent = match build_agent(&config.agent, env.spec(), seed) {
        Ok(agent) => agent,
        Err(e) => {
            result.status = RunStatus::Failed(e.to_string());
            return result;
        }
    };
    if let Err(e) = train(config, seed, env.as_mut(), agent.as_mut(), &mut result) {
        result.status = RunStatus::Failed(e.to_string());
    }
    result.train_steps = agent.train_steps();
    result.policy = Some(agent.greedy_policy());
    result
}

fn train(
    config: &ExperimentConfig,
    seed: u64,
    env: &mut dyn Environment,
    agent: &mut dyn Agent,
    result: &mut RunResult,
) -> paramnoise::Result<()> {
    let mut eval_env = config.env.build();
    let mut env_rng = stream(seed, Stream::Environment);
    let mut eval_rng = stream(seed, Stream::Evaluation);
    let optimal = match config.env {
        EnvKind::Chain(n) => Some(chain_optimal_return(n, env.spec().horizon)),
        _ => None,
    };
    let mut steps = 0u64;
    let mut next_eval = config.eval_every_steps;
    let mut eval_return = f64::NAN;
    let mut streak = 0u64;

    for episode in 1..=config.max_episodes {
        if config.max_steps > 0 && steps >= config.max_steps {
            break;
        }
        agent.begin_episode()?;
        let mut obs = env.reset(&mut env_rng);
        let mut train_return = 0.0;
        loop {
            let action = agent.act(&obs, ActMode::Explore)?;
            let step = env.step(&action)?;
            steps += 1;
            train_return += step.reward;
            agent.observe(Transition {
                state: obs,
                action,
                reward: step.reward,
                next_state: step.observation.clone(),
                done: step.done,
                head_mask: None,
            })?;
            obs = step.observation;
            if step.done {
                break;
            }
        }
        agent.end_episode()?;
        if !train_return.is_finite() {
            return Err(paramnoise::Error::NonFinite("training return"));
        }

        if let Some(optimal) = optimal {
            let policy = agent.greedy_policy();
            eval_return = evaluate_policy(&policy, eval_env.as_mut(), config.eval_episodes, &mut eval_rng)?;
            streak = if eval_return >= optimal - SOLVED_TOLERANCE { streak + 1 } else { 0 };
        } else if steps >= next_eval {
            let policy = agent.greedy_policy();
            eval_return = evaluate_policy(&policy, eval_env.as_mut(), config.eval_episodes, &mut eval_rng)?;
            while next_eval <= steps {
                next_eval += config.eval_every_steps;
            }
        }
        if eval_return.is_infinite() {
            return Err(paramnoise::Error::NonFinite("evaluation return"));
        }
        result.rows.push(Row {
            episode,
            steps,
            train_return,
            eval_return,
            sigma: agent.noise_scale(),
            distance: agent.last_distance().unwrap_or(f64::NAN),
            solved_streak: streak,
        });
        if streak >= SOLVED_STREAK {
            result.status = RunStatus::Solved { episode };
            break;
        }
    }
    Ok(())
}

/// Runs every seed of `config`, using up to `jobs` worker threads.
///
/// Runs share no state, so the results do not depend on `jobs`.
pub fn run_experiment(config: &ExperimentConfig, jobs: usize) -> Vec<RunResult> {
    let jobs = jobs.max(1).min(config.seeds.len().max(1));
    if jobs == 1 {
        return config.seeds.iter().map(|&seed| run_seed(config, seed)).collect();
    }
    let mut slots: Vec<Option<RunResult>> = vec![None; config.seeds.len()];
    let next = std::sync::atomic::AtomicUsize::new(0);
    let done = std::sync::Mutex::new(&mut slots);
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                let Some(&seed) = config.seeds.get(i) else { break };
                let result = run_seed(config, seed);
                done.lock().expect("result slots poisoned")[i] = Some(result);
            });
        }
    });
    slots.into_iter().map(|r| r.expect("every seed ran")).collect()
}
