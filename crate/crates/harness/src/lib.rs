//! Experiment harness for parameter-space noise comparisons.
//!
//! A run is fully described by an [`ExperimentConfig`] and a seed. The harness
//! trains one agent per seed, evaluates it with the chain or continuous
//! protocol, logs one CSV row per episode and aggregates the seeds into
//! median and interquartile curves.

pub mod aggregate;
pub mod checkpoint;
pub mod config;
mod error;
pub mod output;
pub mod runner;

use std::path::{Path, PathBuf};

pub use aggregate::{aggregate_runs, percentile, Aggregate, AggregateRow};
pub use checkpoint::Checkpoint;
pub use config::{ExperimentConfig, RawConfig};
pub use error::{HarnessError, Result};
pub use runner::{evaluate_policy, run_experiment, run_seed, solved_check, Row, RunResult, RunStatus};

/// Formats a float so that parsing it back gives the same value.
///
/// Uses at most 17 significant digits, switching to exponent notation for
/// very large or very small magnitudes.
pub fn fmt_f64(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || !v.is_finite() || (1e-5..1e16).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

/// Shifts every seed by `offset`.
pub fn apply_seed_offset(config: &mut ExperimentConfig, offset: u64) {
    for seed in &mut config.seeds {
        *seed = seed.wrapping_add(offset);
    }
}

/// Everything written by [`execute`].
#[derive(Debug)]
pub struct Report {
    pub results: Vec<RunResult>,
    pub aggregate: Aggregate,
    pub aggregate_csv: PathBuf,
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))
}

/// Runs `config` and writes its artifacts into `config.output_dir`:
/// the resolved config, per-seed CSVs and checkpoints, `aggregate.csv`,
/// `curve.svg` and `summary.txt`.
pub fn execute(config: &ExperimentConfig, jobs: usize) -> Result<Report> {
    let dir = &config.output_dir;
    create_dir(dir)?;
    let config_text = config.to_config_string();
    let config_path = dir.join("config.ini");
    std::fs::write(&config_path, &config_text).map_err(|e| HarnessError::io(&config_path, e))?;
    let hash = checkpoint::config_hash(&config_text);

    let results = run_experiment(config, jobs);
    for r in &results {
        output::write_run_csv(&r.rows, &dir.join(format!("seed-{}.csv", r.seed)))?;
        if let Some(policy) = &r.policy {
            let ckpt = Checkpoint {
                config_hash: hash.clone(),
                steps: r.rows.last().map_or(0, |row| row.steps),
                policy: policy.clone(),
            };
            ckpt.save(&dir.join(format!("seed-{}.ckpt", r.seed)))?;
        }
    }
    let aggregate = aggregate_runs(&results)?;
    let method = config.method();
    let aggregate_csv = dir.join("aggregate.csv");
    output::write_aggregate_csv(&[(method.clone(), &aggregate)], &aggregate_csv)?;
    let series = [output::Series {
        name: method,
        rows: aggregate.rows.clone(),
    }];
    output::write_svg(&series, &dir.join("curve.svg"))?;
    let summary_path = dir.join("summary.txt");
    std::fs::write(&summary_path, summary(config, &results, &aggregate))
        .map_err(|e| HarnessError::io(&summary_path, e))?;
    Ok(Report {
        results,
        aggregate,
        aggregate_csv,
    })
}

/// Human-readable per-seed outcome table.
pub fn summary(config: &ExperimentConfig, results: &[RunResult], aggregate: &Aggregate) -> String {
    let mut s = format!("{} on {}\n", config.method(), config.env);
    for r in results {
        let status = match &r.status {
            RunStatus::Solved { episode } => format!("solved at episode {episode}"),
            RunStatus::Unsolved => "unsolved".to_string(),
            RunStatus::Failed(msg) => format!("failed: {msg}"),
        };
        let last = r.rows.last();
        s += &format!(
            "seed {}: {status}; episodes {}, steps {}, final eval {}\n",
            r.seed,
            r.rows.len(),
            last.map_or(0, |row| row.steps),
            last.map_or(f64::NAN, |row| row.eval_return),
        );
    }
    if config.env.is_chain() {
        s += &format!(
            "median episodes to solve: {} ({} of {} solved)\n",
            aggregate.median_episodes_to_solve, aggregate.solved, aggregate.seeds
        );
    }
    if let Some(last) = aggregate.rows.last() {
        s += &format!(
            "final median eval return: {} (IQR {} to {})\n",
            last.median, last.p25, last.p75
        );
    }
    s
}
