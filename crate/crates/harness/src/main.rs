use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use paramnoise::env::EnvKind;
use paramnoise::rng::{stream, Stream};
use paramnoise_harness::output::{self, Series};
use paramnoise_harness::{
    apply_seed_offset, evaluate_policy, execute, Checkpoint, ExperimentConfig, HarnessError, RawConfig, Result,
};

#[derive(Parser)]
#[command(name = "paramnoise", version, about = "Parameter-space noise experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every seed of a config and write CSVs, checkpoints and a plot.
    Run {
        config: PathBuf,
        /// Seeds to train concurrently.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Roll out a saved policy without noise.
    Eval {
        checkpoint: PathBuf,
        env: String,
        #[arg(long, default_value_t = 10)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run a config once per value of one key, e.g. `--vary noise.delta=0.01,0.05`.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        vary: String,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Draw median and interquartile curves from aggregate CSV files.
    Plot {
        #[arg(required = true)]
        aggregates: Vec<PathBuf>,
        #[arg(short = 'o', long = "output")]
        output: PathBuf,
    },
}

fn seed_offset() -> Result<u64> {
    match std::env::var("SEED_OFFSET") {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| HarnessError::Usage(format!("SEED_OFFSET must be a non-negative integer, got {v:?}"))),
        Err(_) => Ok(0),
    }
}

fn load_raw(path: &Path) -> Result<RawConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    RawConfig::parse(&text)
}

fn check_failures(results: &[paramnoise_harness::RunResult]) -> Result<()> {
    let failed: Vec<String> = results
        .iter()
        .filter_map(|r| match &r.status {
            paramnoise_harness::RunStatus::Failed(msg) => Some(format!("seed {}: {msg}", r.seed)),
            _ => None,
        })
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(HarnessError::Run(failed.join("; ")))
    }
}

fn run(config: &Path, jobs: usize) -> Result<()> {
    let mut config = ExperimentConfig::load(config)?;
    apply_seed_offset(&mut config, seed_offset()?);
    let report = execute(&config, jobs)?;
    print!(
        "{}",
        paramnoise_harness::summary(&config, &report.results, &report.aggregate)
    );
    println!("wrote {}", config.output_dir.display());
    check_failures(&report.results)
}

fn eval(checkpoint: &Path, env: &str, episodes: usize, seed: u64) -> Result<()> {
    let ckpt = Checkpoint::load(checkpoint)?;
    let mut env = EnvKind::parse(env)?.build();
    let mut rng = stream(seed, Stream::Evaluation);
    let mean = evaluate_policy(&ckpt.policy, env.as_mut(), episodes, &mut rng)?;
    println!("mean return over {episodes} episodes: {mean}");
    Ok(())
}

fn sweep(config: &Path, vary: &str, jobs: usize) -> Result<()> {
    let usage = || HarnessError::Usage(format!("--vary expects section.key=v1,v2,..., got {vary:?}"));
    let (key, values) = vary.split_once('=').ok_or_else(usage)?;
    let (section, name) = key.split_once('.').ok_or_else(usage)?;
    let raw = load_raw(config)?;
    let offset = seed_offset()?;
    let base = ExperimentConfig::from_raw(&raw)?.output_dir;
    let mut aggregates = Vec::new();
    let mut results = Vec::new();
    for value in values.split(',').map(str::trim) {
        let mut variant = raw.clone();
        variant.set(section, name, value)?;
        let mut cfg = ExperimentConfig::from_raw(&variant)?;
        cfg.output_dir = base.join(format!("{key}={value}"));
        apply_seed_offset(&mut cfg, offset);
        let report = execute(&cfg, jobs)?;
        print!(
            "{}",
            paramnoise_harness::summary(&cfg, &report.results, &report.aggregate)
        );
        aggregates.push((format!("{key}={value}"), report.aggregate));
        results.extend(report.results);
    }
    let named: Vec<(String, &paramnoise_harness::Aggregate)> =
        aggregates.iter().map(|(n, a)| (n.clone(), a)).collect();
    output::write_aggregate_csv(&named, &base.join("sweep.csv"))?;
    let series: Vec<Series> = aggregates
        .iter()
        .map(|(name, a)| Series {
            name: name.clone(),
            rows: a.rows.clone(),
        })
        .collect();
    output::write_svg(&series, &base.join("sweep.svg"))?;
    println!("wrote {}", base.display());
    check_failures(&results)
}

fn plot(aggregates: &[PathBuf], out: &Path) -> Result<()> {
    let mut series = Vec::new();
    for path in aggregates {
        series.extend(output::read_aggregate_csv(path)?);
    }
    output::write_svg(&series, out)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let outcome = match cli.command {
        Command::Run { config, jobs } => run(&config, jobs),
        Command::Eval {
            checkpoint,
            env,
            episodes,
            seed,
        } => eval(&checkpoint, &env, episodes, seed),
        Command::Sweep { config, vary, jobs } => sweep(&config, &vary, jobs),
        Command::Plot { aggregates, output } => plot(&aggregates, &output),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
