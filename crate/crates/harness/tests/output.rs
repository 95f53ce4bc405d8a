use paramnoise::agents::build_agent;
use paramnoise::env::make_env;
use paramnoise::rng::{stream, Stream};
use paramnoise_harness::aggregate::quartiles;
use paramnoise_harness::checkpoint::{config_hash, Checkpoint};
use paramnoise_harness::output::{read_aggregate_csv, read_run_csv, render_svg, write_aggregate_csv, write_run_csv, Series, RUN_HEADER};
use paramnoise_harness::{aggregate_runs, evaluate_policy, execute, fmt_f64, ExperimentConfig, HarnessError, Row, RunResult, RunStatus};
use proptest::prelude::*;

#[test]
fn empty_run_writes_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.csv");
    write_run_csv(&[], &path).unwrap();
    assert_eq!(std::fs::read_to_string(&path).unwrap(), format!("{}\n", RUN_HEADER.join(",")));
    assert!(read_run_csv(&path).unwrap().is_empty());
}

#[test]
fn unwritable_path_reports_io_error_with_path() {
    let err = write_run_csv(&[], std::path::Path::new("/nonexistent-dir/x.csv")).unwrap_err();
    assert!(matches!(err, HarnessError::Io { .. }), "{err:?}");
    assert!(err.to_string().contains("/nonexistent-dir/x.csv"));
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn float_format_round_trips_edge_values() {
    for v in [0.0, -0.0, 1.0, 0.1, 1e-300, -2.5e300, f64::MIN_POSITIVE, 5e-324, 1e16, 123456.789, f64::MAX] {
        let s = fmt_f64(v);
        assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits(), "{s}");
        let digits = s.split(['e', 'E']).next().unwrap().chars().filter(char::is_ascii_digit).count();
        assert!(digits <= 17 || v.abs() >= 1e15, "{s}");
    }
    assert!(fmt_f64(f64::NAN).parse::<f64>().unwrap().is_nan());
    assert_eq!(fmt_f64(f64::INFINITY).parse::<f64>().unwrap(), f64::INFINITY);
}

fn arb_row() -> impl Strategy<Value = Row> {
    let real = prop_oneof![any::<f64>().prop_filter("finite", |v| v.is_finite()), Just(f64::NAN), -1e3f64..1e3];
    (0u64..10_000, 0u64..10_000_000, real.clone(), real.clone(), real.clone(), real, 0u64..200).prop_map(
        |(episode, steps, train_return, eval_return, sigma, distance, solved_streak)| Row {
            episode,
            steps,
            train_return,
            eval_return,
            sigma,
            distance,
            solved_streak,
        },
    )
}

fn same(a: f64, b: f64) -> bool {
    (a.is_nan() && b.is_nan()) || a == b || (a - b).abs() <= 1e-12 * a.abs().max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn run_csv_round_trips(rows in prop::collection::vec(arb_row(), 0..30)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.csv");
        write_run_csv(&rows, &path).unwrap();
        let back = read_run_csv(&path).unwrap();
        prop_assert_eq!(back.len(), rows.len());
        for (a, b) in rows.iter().zip(&back) {
            prop_assert_eq!((a.episode, a.steps, a.solved_streak), (b.episode, b.steps, b.solved_streak));
            prop_assert!(same(a.train_return, b.train_return));
            prop_assert!(same(a.eval_return, b.eval_return));
            prop_assert!(same(a.sigma, b.sigma));
            prop_assert!(same(a.distance, b.distance));
        }
    }
}

fn constant_run(seed: u64, value: f64, len: usize) -> RunResult {
    RunResult {
        seed,
        rows: (0..len)
            .map(|i| Row {
                episode: i as u64 + 1,
                steps: i as u64 * 7,
                train_return: value,
                eval_return: value,
                sigma: 0.0,
                distance: f64::NAN,
                solved_streak: 0,
            })
            .collect(),
        status: RunStatus::Unsolved,
        train_steps: 0,
        policy: None,
    }
}

#[test]
fn constant_returns_plot_a_degenerate_band() {
    let runs: Vec<RunResult> = (0..3).map(|s| constant_run(s, 5.0, 10)).collect();
    let agg = aggregate_runs(&runs).unwrap();
    assert!(agg.rows.iter().all(|r| r.p25 == 5.0 && r.median == 5.0 && r.p75 == 5.0));
    let svg = render_svg(&[Series { name: "flat".into(), rows: agg.rows.clone() }]);
    assert!(svg.starts_with("<svg"));
    assert!(svg.contains(">episode<") && svg.contains(">evaluation return<") && svg.contains(">flat<"));
    let attr = |tag: &str| -> Vec<String> {
        let start = svg.find(tag).unwrap() + tag.len();
        let rest = &svg[start..];
        let body = &rest[rest.find("points=\"").unwrap() + 8..];
        body[..body.find('"').unwrap()].split(' ').map(str::to_string).collect()
    };
    let line = attr("<polyline");
    let band = attr("<polygon");
    let ys = |pts: &[String]| -> Vec<String> { pts.iter().map(|p| p.split(',').nth(1).unwrap().to_string()).collect() };
    let line_y = ys(&line);
    assert!(ys(&band).iter().all(|y| y == &line_y[0]));
    assert!(line_y.iter().all(|y| y == &line_y[0]));
}

#[test]
fn aggregate_csv_round_trips_series() {
    let dir = tempfile::tempdir().unwrap();
    let a = aggregate_runs(&[constant_run(0, 1.0, 4), constant_run(1, 3.0, 6)]).unwrap();
    let b = aggregate_runs(&[constant_run(0, -2.5, 3)]).unwrap();
    let path = dir.path().join("agg.csv");
    write_aggregate_csv(&[("param".into(), &a), ("egreedy".into(), &b)], &path).unwrap();
    let back = read_aggregate_csv(&path).unwrap();
    assert_eq!(back.len(), 2);
    assert_eq!(back[0].name, "param");
    assert_eq!(back[0].rows, a.rows);
    assert_eq!(back[1].rows, b.rows);
    assert_eq!(quartiles(&[1.0, 3.0]), (2.0, 1.5, 2.5));
}

#[test]
fn checkpoints_round_trip_every_policy_kind() {
    let cases = [
        ("chain-N6", "dqn-paramnoise"),
        ("chain-N6", "dqn-policyhead-paramnoise"),
        ("chain-N6", "bootstrapped-dqn"),
        ("chain-N6", "reinforce-paramnoise"),
        ("sparse-mountaincar", "ddpg-paramnoise"),
    ];
    let dir = tempfile::tempdir().unwrap();
    for (env_name, agent) in cases {
        let config = ExperimentConfig::parse(&format!("[experiment]\nenv = {env_name}\nagent = {agent}\n")).unwrap();
        let mut env = make_env(env_name).unwrap();
        let mut built = build_agent(&config.agent, env.spec(), 11).unwrap();
        // Give the normalizer and episode state something non-trivial.
        built.begin_episode().unwrap();
        let obs = env.reset(&mut stream(1, Stream::Environment));
        for _ in 0..3 {
            let a = built.act(&obs, paramnoise::agents::ActMode::Explore).unwrap();
            let s = env.step(&a).unwrap();
            built
                .observe(paramnoise::agents::Transition {
                    state: obs.clone(),
                    action: a,
                    reward: s.reward,
                    next_state: s.observation,
                    done: s.done,
                    head_mask: None,
                })
                .unwrap();
        }
        let ckpt = Checkpoint {
            config_hash: config_hash(&config.to_config_string()),
            steps: 3,
            policy: built.greedy_policy(),
        };
        let path = dir.path().join(format!("{agent}.ckpt"));
        ckpt.save(&path).unwrap();
        let loaded = Checkpoint::load(&path).unwrap();
        assert_eq!(loaded.config_hash, ckpt.config_hash);
        assert_eq!(loaded.config_hash.len(), 64);
        assert_eq!(loaded.steps, 3);
        assert_eq!(loaded.to_text(), ckpt.to_text(), "{agent}");
        let mut rng_a = stream(5, Stream::Evaluation);
        let mut rng_b = stream(5, Stream::Evaluation);
        let ra = evaluate_policy(&ckpt.policy, env.as_mut(), 2, &mut rng_a).unwrap();
        let rb = evaluate_policy(&loaded.policy, env.as_mut(), 2, &mut rng_b).unwrap();
        assert_eq!(ra, rb, "{agent}");
    }
}

#[test]
fn corrupt_checkpoint_is_a_format_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.ckpt");
    std::fs::write(&path, "paramnoise-checkpoint 1\nconfig_hash = x\nsteps = 1\npolicy = logits\nnetworks = 1\narch.0 = in=2;2:linear\nparams\n1\n2\n").unwrap();
    let err = Checkpoint::load(&path).unwrap_err();
    assert!(matches!(err, HarnessError::Format { .. }), "{err:?}");
    std::fs::write(&path, "hello\n").unwrap();
    assert!(Checkpoint::load(&path).is_err());
}

#[test]
fn execute_writes_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = ExperimentConfig::parse("[experiment]\nenv = chain-N4\nagent = dqn-egreedy\nseeds = 1, 2\nmax_episodes = 12\n").unwrap();
    config.output_dir = dir.path().join("out");
    let report = execute(&config, 1).unwrap();
    for name in ["config.ini", "seed-1.csv", "seed-2.csv", "seed-1.ckpt", "seed-2.ckpt", "aggregate.csv", "curve.svg", "summary.txt"] {
        assert!(config.output_dir.join(name).is_file(), "missing {name}");
    }
    assert_eq!(format!("{:?}", read_run_csv(&config.output_dir.join("seed-2.csv")).unwrap()), format!("{:?}", report.results[1].rows));
    let reloaded = ExperimentConfig::load(&config.output_dir.join("config.ini")).unwrap();
    assert_eq!(reloaded, config);
    let series = read_aggregate_csv(&report.aggregate_csv).unwrap();
    assert_eq!(series[0].name, "dqn-egreedy");
}
