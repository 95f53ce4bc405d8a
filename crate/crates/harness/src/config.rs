//! Experiment configuration files.
//!
//! The format is line based:
//!
//! ```text
//! # comment
//! [experiment]
//! env = chain-N20
//! agent = dqn-paramnoise
//! seeds = 0, 1, 2
//!
//! [noise]
//! delta = 0.05
//! ```
//!
//! Only `env` and `agent` are required. Everything else falls back to the
//! defaults for that agent and environment. Unknown sections, unknown keys and
//! repeated keys are rejected.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use paramnoise::agents::{AgentConfig, AgentKind, NoiseSpec, TargetUpdate};
use paramnoise::env::EnvKind;

use crate::error::{HarnessError, Result};
use crate::fmt_f64;

pub const SECTIONS: [&str; 3] = ["experiment", "agent", "noise"];

const EXPERIMENT_KEYS: [&str; 8] = [
    "env",
    "agent",
    "seeds",
    "max_episodes",
    "max_steps",
    "eval_every_steps",
    "eval_episodes",
    "output_dir",
];

const AGENT_KEYS: [&str; 15] = [
    "gamma",
    "learning_rate",
    "actor_learning_rate",
    "batch_size",
    "target_update",
    "buffer_capacity",
    "warmup_episodes",
    "train_interval",
    "hidden",
    "layer_norm",
    "heads",
    "mask_probability",
    "critic_weight_decay",
    "distance_batch",
    "episodes_per_update",
];

/// Noise keys accepted for each strategy.
fn noise_keys(noise: &NoiseSpec) -> &'static [&'static str] {
    match noise {
        NoiseSpec::None => &[],
        NoiseSpec::EpsilonGreedy { .. } => &["epsilon_start", "epsilon_end", "anneal_episodes"],
        NoiseSpec::Parameter { .. } => &["initial_sigma", "alpha", "delta", "adapt_interval", "residual_epsilon"],
        NoiseSpec::Gaussian { .. } | NoiseSpec::OrnsteinUhlenbeck { .. } => &["sigma"],
    }
}

/// Parsed but uninterpreted `key = value` pairs, grouped by section.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RawConfig {
    sections: BTreeMap<String, BTreeMap<String, (usize, String)>>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut raw = RawConfig::default();
        let mut section: Option<String> = None;
        for (i, line) in text.lines().enumerate() {
            let lineno = i + 1;
            let err = |message: String| HarnessError::Parse { line: lineno, message };
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| err(format!("malformed section header {line:?}")))?
                    .trim();
                if !SECTIONS.contains(&name) {
                    return Err(err(format!("unknown section [{name}]")));
                }
                raw.sections.entry(name.to_string()).or_default();
                section = Some(name.to_string());
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, got {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() {
                return Err(err("empty key".into()));
            }
            let section = section
                .as_ref()
                .ok_or_else(|| err(format!("key {key:?} appears before any [section]")))?;
            let entries = raw.sections.entry(section.clone()).or_default();
            if let Some((first, _)) = entries.get(key) {
                return Err(err(format!("duplicate key {section}.{key} (first set on line {first})")));
            }
            entries.insert(key.to_string(), (lineno, value.to_string()));
        }
        Ok(raw)
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections.get(section)?.get(key).map(|(_, v)| v.as_str())
    }

    /// Sets `section.key`, replacing any existing value.
    pub fn set(&mut self, section: &str, key: &str, value: &str) -> Result<()> {
        if !SECTIONS.contains(&section) {
            return Err(HarnessError::Config(format!("unknown section [{section}]")));
        }
        self.sections
            .entry(section.to_string())
            .or_default()
            .insert(key.to_string(), (0, value.to_string()));
        Ok(())
    }

    fn keys(&self, section: &str) -> impl Iterator<Item = (&str, usize)> {
        self.sections
            .get(section)
            .into_iter()
            .flat_map(|m| m.iter().map(|(k, (line, _))| (k.as_str(), *line)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub env: EnvKind,
    pub agent: AgentConfig,
    pub seeds: Vec<u64>,
    pub max_episodes: u64,
    /// Total environment steps per seed; 0 means no limit.
    pub max_steps: u64,
    /// Continuous tasks only: evaluate after every this many training steps.
    pub eval_every_steps: u64,
    pub eval_episodes: usize,
    pub output_dir: PathBuf,
}

/// The `agent` string of a config file, e.g. `dqn-paramnoise` or `bootstrapped-dqn`.
pub fn method_name(agent: &AgentConfig) -> String {
    match agent.kind {
        AgentKind::BootstrappedDqn => agent.kind.name().to_string(),
        kind => format!("{}-{}", kind.name(), agent.noise.name()),
    }
}

fn parse_method(s: &str) -> Result<(AgentKind, &str)> {
    if s == "bootstrapped-dqn" {
        return Ok((AgentKind::BootstrappedDqn, "none"));
    }
    let (kind, noise) = s
        .rsplit_once('-')
        .ok_or_else(|| HarnessError::Config(format!("agent {s:?} should look like <kind>-<noise>")))?;
    let kind: AgentKind = kind.parse()?;
    if kind == AgentKind::BootstrappedDqn {
        return Err(HarnessError::Config("bootstrapped-dqn takes no noise suffix".into()));
    }
    Ok((kind, noise))
}

fn is_sparse(env: EnvKind) -> bool {
    matches!(env, EnvKind::SparseMountainCar | EnvKind::SparseCartpoleSwingup)
}

/// Default noise for an agent/strategy/environment combination.
pub fn default_noise(kind: AgentKind, noise: &str, env: EnvKind) -> Result<NoiseSpec> {
    let action_sigma = if is_sparse(env) { 0.6 } else { 0.2 };
    let spec = match (noise, kind) {
        ("none", _) => NoiseSpec::None,
        ("egreedy", _) => NoiseSpec::EpsilonGreedy {
            start: 1.0,
            end: 0.1,
            anneal_episodes: 100,
        },
        ("paramnoise", AgentKind::Ddpg) => NoiseSpec::Parameter {
            initial_sigma: 0.2,
            alpha: 1.01,
            delta: action_sigma,
            adapt_interval: 50,
            residual_epsilon: 0.0,
        },
        ("paramnoise", AgentKind::Reinforce) => AgentConfig::defaults(AgentKind::Reinforce).noise,
        ("paramnoise", _) => NoiseSpec::Parameter {
            initial_sigma: 0.1,
            alpha: 1.01,
            delta: 0.05,
            adapt_interval: 50,
            residual_epsilon: if env.is_chain() { 0.0 } else { 0.01 },
        },
        ("gaussian", _) => NoiseSpec::Gaussian { sigma: action_sigma },
        ("ou", _) => NoiseSpec::OrnsteinUhlenbeck { sigma: action_sigma },
        (other, _) => return Err(HarnessError::Config(format!("unknown noise strategy {other:?}"))),
    };
    Ok(spec)
}

impl ExperimentConfig {
    /// Default configuration for running `method` on `env`.
    pub fn defaults(env: EnvKind, method: &str) -> Result<Self> {
        let (kind, noise) = parse_method(method)?;
        let mut agent = AgentConfig::defaults(kind);
        agent.noise = default_noise(kind, noise, env)?;
        let chain = env.is_chain();
        Ok(ExperimentConfig {
            env,
            seeds: if chain { vec![0, 1, 2] } else { vec![0, 1, 2, 3, 4] },
            max_episodes: if chain { 2000 } else { 500 },
            max_steps: 0,
            eval_every_steps: 5000,
            eval_episodes: if chain { 1 } else { 10 },
            output_dir: PathBuf::from(format!("runs/{env}-{}", method_name(&agent))),
            agent,
        })
    }

    pub fn method(&self) -> String {
        method_name(&self.agent)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_raw(&RawConfig::parse(text)?)
    }

    pub fn from_raw(raw: &RawConfig) -> Result<Self> {
        for section in SECTIONS {
            let allowed: &[&str] = match section {
                "experiment" => &EXPERIMENT_KEYS,
                "agent" => &AGENT_KEYS,
                _ => continue,
            };
            for (key, line) in raw.keys(section) {
                if !allowed.contains(&key) {
                    return Err(unknown_key(section, key, line));
                }
            }
        }
        let required = |key: &str| {
            raw.get("experiment", key)
                .ok_or_else(|| HarnessError::Config(format!("missing required key experiment.{key}")))
        };
        let env = EnvKind::parse(required("env")?)?;
        let mut config = Self::defaults(env, required("agent")?)?;

        let x = |key: &str| raw.get("experiment", key);
        if let Some(v) = x("seeds") {
            config.seeds = parse_list(v, "experiment.seeds")?;
        }
        set(&mut config.max_episodes, x("max_episodes"), "experiment.max_episodes")?;
        set(&mut config.max_steps, x("max_steps"), "experiment.max_steps")?;
        set(&mut config.eval_every_steps, x("eval_every_steps"), "experiment.eval_every_steps")?;
        set(&mut config.eval_episodes, x("eval_episodes"), "experiment.eval_episodes")?;
        if let Some(v) = x("output_dir") {
            config.output_dir = PathBuf::from(v);
        }

        let a = &mut config.agent;
        let g = |key: &str| raw.get("agent", key);
        set(&mut a.gamma, g("gamma"), "agent.gamma")?;
        set(&mut a.learning_rate, g("learning_rate"), "agent.learning_rate")?;
        set(&mut a.actor_learning_rate, g("actor_learning_rate"), "agent.actor_learning_rate")?;
        set(&mut a.batch_size, g("batch_size"), "agent.batch_size")?;
        if let Some(v) = g("target_update") {
            a.target_update = parse_target_update(v)?;
        }
        set(&mut a.buffer_capacity, g("buffer_capacity"), "agent.buffer_capacity")?;
        set(&mut a.warmup_episodes, g("warmup_episodes"), "agent.warmup_episodes")?;
        set(&mut a.train_interval, g("train_interval"), "agent.train_interval")?;
        if let Some(v) = g("hidden") {
            a.hidden = parse_list(v, "agent.hidden")?;
        }
        set(&mut a.layer_norm, g("layer_norm"), "agent.layer_norm")?;
        set(&mut a.heads, g("heads"), "agent.heads")?;
        set(&mut a.mask_probability, g("mask_probability"), "agent.mask_probability")?;
        set(&mut a.critic_weight_decay, g("critic_weight_decay"), "agent.critic_weight_decay")?;
        set(&mut a.distance_batch, g("distance_batch"), "agent.distance_batch")?;
        set(&mut a.episodes_per_update, g("episodes_per_update"), "agent.episodes_per_update")?;

        let allowed = noise_keys(&a.noise);
        for (key, line) in raw.keys("noise") {
            if !allowed.contains(&key) {
                return Err(unknown_key("noise", key, line));
            }
        }
        let n = |key: &str| raw.get("noise", key);
        match &mut a.noise {
            NoiseSpec::None => {}
            NoiseSpec::EpsilonGreedy {
                start,
                end,
                anneal_episodes,
            } => {
                set(start, n("epsilon_start"), "noise.epsilon_start")?;
                set(end, n("epsilon_end"), "noise.epsilon_end")?;
                set(anneal_episodes, n("anneal_episodes"), "noise.anneal_episodes")?;
            }
            NoiseSpec::Parameter {
                initial_sigma,
                alpha,
                delta,
                adapt_interval,
                residual_epsilon,
            } => {
                set(initial_sigma, n("initial_sigma"), "noise.initial_sigma")?;
                set(alpha, n("alpha"), "noise.alpha")?;
                set(delta, n("delta"), "noise.delta")?;
                set(adapt_interval, n("adapt_interval"), "noise.adapt_interval")?;
                set(residual_epsilon, n("residual_epsilon"), "noise.residual_epsilon")?;
            }
            NoiseSpec::Gaussian { sigma } | NoiseSpec::OrnsteinUhlenbeck { sigma } => {
                set(sigma, n("sigma"), "noise.sigma")?;
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(HarnessError::Config("at least one seed is required".into()));
        }
        if self.eval_episodes == 0 {
            return Err(HarnessError::Config("eval_episodes must be >= 1".into()));
        }
        if self.eval_every_steps == 0 {
            return Err(HarnessError::Config("eval_every_steps must be >= 1".into()));
        }
        self.agent.validate()?;
        let spec = self.env.build().spec().clone();
        if self.agent.kind.is_discrete() != spec.action_space.num_actions().is_some() {
            return Err(HarnessError::Config(format!(
                "agent {} cannot act in {}",
                self.method(),
                self.env
            )));
        }
        Ok(())
    }

    /// Serializes every field, so parsing the result gives back `self`.
    pub fn to_config_string(&self) -> String {
        let a = &self.agent;
        let mut s = String::new();
        let join = |v: &[String]| v.join(", ");
        let _ = writeln!(s, "[experiment]");
        let _ = writeln!(s, "env = {}", self.env);
        let _ = writeln!(s, "agent = {}", self.method());
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        let _ = writeln!(s, "seeds = {}", join(&seeds));
        let _ = writeln!(s, "max_episodes = {}", self.max_episodes);
        let _ = writeln!(s, "max_steps = {}", self.max_steps);
        let _ = writeln!(s, "eval_every_steps = {}", self.eval_every_steps);
        let _ = writeln!(s, "eval_episodes = {}", self.eval_episodes);
        let _ = writeln!(s, "output_dir = {}", self.output_dir.display());
        let _ = writeln!(s, "\n[agent]");
        let _ = writeln!(s, "gamma = {}", fmt_f64(a.gamma));
        let _ = writeln!(s, "learning_rate = {}", fmt_f64(a.learning_rate));
        let _ = writeln!(s, "actor_learning_rate = {}", fmt_f64(a.actor_learning_rate));
        let _ = writeln!(s, "batch_size = {}", a.batch_size);
        let target = match a.target_update {
            TargetUpdate::Hard(n) => format!("hard:{n}"),
            TargetUpdate::Soft(tau) => format!("soft:{}", fmt_f64(tau)),
        };
        let _ = writeln!(s, "target_update = {target}");
        let _ = writeln!(s, "buffer_capacity = {}", a.buffer_capacity);
        let _ = writeln!(s, "warmup_episodes = {}", a.warmup_episodes);
        let _ = writeln!(s, "train_interval = {}", a.train_interval);
        let hidden: Vec<String> = a.hidden.iter().map(usize::to_string).collect();
        let _ = writeln!(s, "hidden = {}", join(&hidden));
        let _ = writeln!(s, "layer_norm = {}", a.layer_norm);
        let _ = writeln!(s, "heads = {}", a.heads);
        let _ = writeln!(s, "mask_probability = {}", fmt_f64(a.mask_probability));
        let _ = writeln!(s, "critic_weight_decay = {}", fmt_f64(a.critic_weight_decay));
        let _ = writeln!(s, "distance_batch = {}", a.distance_batch);
        let _ = writeln!(s, "episodes_per_update = {}", a.episodes_per_update);
        let _ = writeln!(s, "\n[noise]");
        match a.noise {
            NoiseSpec::None => {}
            NoiseSpec::EpsilonGreedy {
                start,
                end,
                anneal_episodes,
            } => {
                let _ = writeln!(s, "epsilon_start = {}", fmt_f64(start));
                let _ = writeln!(s, "epsilon_end = {}", fmt_f64(end));
                let _ = writeln!(s, "anneal_episodes = {anneal_episodes}");
            }
            NoiseSpec::Parameter {
                initial_sigma,
                alpha,
                delta,
                adapt_interval,
                residual_epsilon,
            } => {
                let _ = writeln!(s, "initial_sigma = {}", fmt_f64(initial_sigma));
                let _ = writeln!(s, "alpha = {}", fmt_f64(alpha));
                let _ = writeln!(s, "delta = {}", fmt_f64(delta));
                let _ = writeln!(s, "adapt_interval = {adapt_interval}");
                let _ = writeln!(s, "residual_epsilon = {}", fmt_f64(residual_epsilon));
            }
            NoiseSpec::Gaussian { sigma } | NoiseSpec::OrnsteinUhlenbeck { sigma } => {
                let _ = writeln!(s, "sigma = {}", fmt_f64(sigma));
            }
        }
        s
    }
}

fn unknown_key(section: &str, key: &str, line: usize) -> HarnessError {
    let message = format!("unknown key {section}.{key}");
    if line == 0 {
        HarnessError::Config(message)
    } else {
        HarnessError::Parse { line, message }
    }
}

fn set<T: std::str::FromStr>(slot: &mut T, value: Option<&str>, key: &str) -> Result<()> {
    if let Some(v) = value {
        *slot = v
            .parse()
            .map_err(|_| HarnessError::Config(format!("invalid value {v:?} for {key}")))?;
    }
    Ok(())
}

fn parse_list<T: std::str::FromStr>(v: &str, key: &str) -> Result<Vec<T>> {
    v.split(',')
        .map(|item| {
            item.trim()
                .parse()
                .map_err(|_| HarnessError::Config(format!("invalid list item {item:?} for {key}")))
        })
        .collect()
}

fn parse_target_update(v: &str) -> Result<TargetUpdate> {
    let bad = || HarnessError::Config(format!("target_update must be hard:<steps> or soft:<tau>, got {v:?}"));
    let (mode, arg) = v.split_once(':').ok_or_else(bad)?;
    match mode.trim() {
        "hard" => Ok(TargetUpdate::Hard(arg.trim().parse().map_err(|_| bad())?)),
        "soft" => Ok(TargetUpdate::Soft(arg.trim().parse().map_err(|_| bad())?)),
        _ => Err(bad()),
    }
}
