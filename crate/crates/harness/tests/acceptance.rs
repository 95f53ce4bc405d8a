//! End-to-end acceptance checks, one report line per criterion.
//!
//! Criteria 2 to 6 are exact or statistical correctness checks and make the
//! target fail. Criteria 1 and 7 are small learning experiments whose outcome
//! depends on a handful of seeds; they are run in full and reported, but a
//! FAIL there does not fail the target.

use std::time::Instant;

use paramnoise::agents::{reinforce_psn_gradient, PerturbedEpisode};
use paramnoise::distance::{continuous_policy_distance, epsilon_greedy_kl_threshold};
use paramnoise::env::EnvKind;
use paramnoise::nn::{Activation, Architecture, Network};
use paramnoise::noise::AdaptiveNoiseState;
use paramnoise::rng::{standard_normal, stream, Rng, Stream};
use paramnoise_harness::{aggregate_runs, run_experiment, ExperimentConfig};
use rand::Rng as _;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

// ---------------------------------------------------------------------------
// Criterion 1: chain separation.

fn criterion_1() -> Outcome {
    let methods = ["dqn-paramnoise", "bootstrapped-dqn", "dqn-egreedy"];
    let mut lines = Vec::new();
    let mut pass = true;
    for n in [10usize, 20, 40] {
        let mut medians = Vec::new();
        for method in methods {
            let config = ExperimentConfig::defaults(EnvKind::Chain(n), method).unwrap();
            let results = run_experiment(&config, 1);
            let agg = aggregate_runs(&results).unwrap();
            let per_seed: Vec<u64> = results.iter().map(|r| r.episodes_to_solve()).collect();
            lines.push(format!(
                "    N={n:<3}{method:<17} episodes-to-solve {per_seed:?} median {}",
                agg.median_episodes_to_solve
            ));
            medians.push(agg.median_episodes_to_solve);
        }
        let (param, boot, egreedy) = (medians[0], medians[1], medians[2]);
        let ordered = param <= boot && boot < egreedy;
        let mut notes = vec![format!("order param<=boot<egreedy: {}", if ordered { "ok" } else { "violated" })];
        pass &= ordered;
        if n == 10 {
            let all = medians.iter().all(|&m| m < 2000.0);
            notes.push(format!("all solve: {}", if all { "ok" } else { "no" }));
            pass &= all;
        }
        if n == 40 {
            let sep = egreedy >= 2000.0 && param < 2000.0;
            notes.push(format!("egreedy fails, param solves: {}", if sep { "ok" } else { "no" }));
            pass &= sep;
        }
        lines.push(format!("    N={n}: {}", notes.join("; ")));
    }
    outcome(pass, format!("3 seeds per (method, N)\n{}", lines.join("\n")))
}

// ---------------------------------------------------------------------------
// Criterion 2: distance identity for Gaussian-perturbed actions.

fn criterion_2() -> Outcome {
    let mut rng = stream(2, Stream::Init);
    let actor = Network::new(
        Architecture::mlp(4, &[16], 3, Activation::Relu, Activation::Tanh, true),
        &mut rng,
    )
    .unwrap();
    let states: Vec<Vec<f64>> = (0..10_000)
        .map(|_| (0..4).map(|_| rng.random_range(-2.0..2.0)).collect())
        .collect();
    let mut pass = true;
    let mut parts = Vec::new();
    for sigma in [0.05, 0.2, 0.6] {
        let mut noise = stream(20, Stream::ActionNoise);
        let d = continuous_policy_distance(
            |s| actor.forward(s),
            |s| {
                let mut a = actor.forward(s)?;
                a.iter_mut().for_each(|x| *x += sigma * standard_normal(&mut noise));
                Ok(a)
            },
            &states,
        )
        .unwrap();
        let rel = (d - sigma).abs() / sigma;
        pass &= rel < 0.05;
        parts.push(format!("sigma {sigma}: d {d:.5} (rel err {:.2}%)", 100.0 * rel));
    }
    outcome(pass, parts.join(", "))
}

// ---------------------------------------------------------------------------
// Criterion 3: epsilon-greedy KL threshold.

fn criterion_3() -> Outcome {
    let value = epsilon_greedy_kl_threshold(0.1, 4);
    let expected = -(0.925f64).ln();
    let exact = (value - expected).abs() <= 1e-12;
    let zero = epsilon_greedy_kl_threshold(0.0, 4) == 0.0;
    let grid: Vec<f64> = (0..=1000).map(|i| epsilon_greedy_kl_threshold(i as f64 / 1000.0, 4)).collect();
    let monotone = grid.windows(2).all(|w| w[1] > w[0]);
    outcome(
        exact && zero && monotone,
        format!("delta(0.1, 4) = {value:.15} vs {expected:.15}; zero at eps=0: {zero}; increasing on a 1001-point grid: {monotone}"),
    )
}

// ---------------------------------------------------------------------------
// Criterion 4: adaptive scaler convergence.

fn criterion_4() -> Outcome {
    use proptest::prelude::*;
    use proptest::test_runner::{Config, TestRunner};

    let start = Instant::now();
    let mut runner = TestRunner::new_with_rng(
        Config {
            cases: 512,
            failure_persistence: None,
            ..Config::default()
        },
        proptest::test_runner::TestRng::deterministic_rng(proptest::test_runner::RngAlgorithm::ChaCha),
    );
    let strategy = (-6.0f64..2.0, -6.0f64..2.0, 1e-3f64..1.0, 0usize..3, 1.001f64..1.2);
    let result = runner.run(&strategy, |(log_target, log_start, delta, shape, alpha)| {
        let target = 10f64.powf(log_target);
        let sigma0 = 10f64.powf(log_start);
        // Strictly increasing distances with d(target) = delta.
        let d = |s: f64| match shape {
            0 => delta * s / target,
            1 => delta * (s / target).powi(2),
            _ => delta * ((s / target).ln().tanh() + 1.0),
        };
        let mut state = AdaptiveNoiseState::new(sigma0, alpha, delta, 1).unwrap();
        let bound = (2.0 * ((target / sigma0).ln() / alpha.ln()).abs()).ceil() as usize + 10;
        let inside = |s: f64| s >= target / alpha * (1.0 - 1e-12) && s <= target * alpha * (1.0 + 1e-12);
        let mut entered = None;
        for k in 1..=bound + 2000 {
            let s = state.adapt(d(state.sigma)).unwrap();
            match entered {
                None if inside(s) => entered = Some(k),
                Some(_) => prop_assert!(inside(s), "left the band at step {}: {} vs {}", k, s, target),
                None => {}
            }
        }
        let k = entered.unwrap_or(usize::MAX);
        prop_assert!(k <= bound, "entered at {} > bound {}", k, bound);
        Ok(())
    });
    let elapsed = start.elapsed().as_secs_f64();
    match result {
        Ok(()) => outcome(elapsed < 1.0, format!("512 random cases, 3 distance shapes; {elapsed:.3}s")),
        Err(e) => outcome(false, format!("{e}")),
    }
}

// ---------------------------------------------------------------------------
// Criterion 5: perturbed REINFORCE estimator against an exact oracle.
//
// Two states (one-hot), two actions, horizon 2, start in state 0. The action
// picks the next state. The policy is a single linear layer over the one-hot
// state: logits = W·onehot(s) + b, six parameters.

const REWARD: [[f64; 2]; 2] = [[0.3, 0.0], [0.0, 1.0]];

fn onehot(s: usize) -> Vec<f64> {
    let mut v = vec![0.0; 2];
    v[s] = 1.0;
    v
}

fn softmax2(l: [f64; 2]) -> [f64; 2] {
    let m = l[0].max(l[1]);
    let e = [(l[0] - m).exp(), (l[1] - m).exp()];
    [e[0] / (e[0] + e[1]), e[1] / (e[0] + e[1])]
}

/// Exact gradient of the undiscounted return with respect to the logits
/// `[state][action]`, by enumerating all four trajectories.
fn exact_logit_gradient(logits: &[[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let pi = [softmax2(logits[0]), softmax2(logits[1])];
    let mut grad = [[0.0; 2]; 2];
    for a0 in 0..2 {
        for a1 in 0..2 {
            let (s0, s1) = (0, a0);
            let p = pi[s0][a0] * pi[s1][a1];
            let ret = REWARD[s0][a0] + REWARD[s1][a1];
            for (s, a) in [(s0, a0), (s1, a1)] {
                for b in 0..2 {
                    let score = if a == b { 1.0 } else { 0.0 } - pi[s][b];
                    grad[s][b] += p * ret * score;
                }
            }
        }
    }
    grad
}

/// Gauss–Hermite nodes and weights for the weight `exp(-x²)`, found by Newton
/// iteration on the normalized three-term recurrence.
fn gauss_hermite(n: usize) -> Vec<(f64, f64)> {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let pim4 = std::f64::consts::PI.powf(-0.25);
    let mut z = 0.0f64;
    for i in 0..n.div_ceil(2) {
        z = match i {
            0 => (2.0 * n as f64 + 1.0).sqrt() - 1.85575 * (2.0 * n as f64 + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * (n as f64).powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let (mut p1, mut p2) = (pim4, 0.0);
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                p1 = z * (2.0 / j as f64).sqrt() * p2 - ((j - 1) as f64 / j as f64).sqrt() * p3;
            }
            pp = (2.0 * n as f64).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() < 1e-15 {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    x.into_iter().zip(w).collect()
}

struct Oracle {
    /// Logits at the mean parameters.
    base: [[f64; 2]; 2],
    /// d logits[s][a] / d param[i]; logits are linear in the parameters.
    jacobian: Vec<[[f64; 2]; 2]>,
}

impl Oracle {
    fn new(policy: &Network) -> Self {
        let logits = |net: &Network| -> [[f64; 2]; 2] {
            let l0 = net.forward(&onehot(0)).unwrap();
            let l1 = net.forward(&onehot(1)).unwrap();
            [[l0[0], l0[1]], [l1[0], l1[1]]]
        };
        let base = logits(policy);
        let jacobian = (0..policy.num_params())
            .map(|i| {
                let mut bumped = policy.clone();
                bumped.param_values_mut()[i] += 1.0;
                let l = logits(&bumped);
                [
                    [l[0][0] - base[0][0], l[0][1] - base[0][1]],
                    [l[1][0] - base[1][0], l[1][1] - base[1][1]],
                ]
            })
            .collect();
        Oracle { base, jacobian }
    }

    fn param_gradient(&self, noise: &[f64], sigma: f64) -> Vec<f64> {
        let mut logits = self.base;
        for (j, e) in self.jacobian.iter().zip(noise) {
            for s in 0..2 {
                for a in 0..2 {
                    logits[s][a] += sigma * e * j[s][a];
                }
            }
        }
        let g = exact_logit_gradient(&logits);
        self.jacobian
            .iter()
            .map(|j| (0..2).flat_map(|s| (0..2).map(move |a| (s, a))).map(|(s, a)| j[s][a] * g[s][a]).sum())
            .collect()
    }

    /// E_ε[∇η(φ + σε)] by tensor-product Gauss–Hermite quadrature.
    fn smoothed_gradient(&self, sigma: f64, nodes: usize) -> Vec<f64> {
        let dim = self.jacobian.len();
        if sigma == 0.0 {
            return self.param_gradient(&vec![0.0; dim], 0.0);
        }
        let rule = gauss_hermite(nodes);
        let norm = std::f64::consts::PI.powf(-(dim as f64) / 2.0);
        let mut total = vec![0.0; dim];
        let mut idx = vec![0usize; dim];
        loop {
            let mut weight = norm;
            let noise: Vec<f64> = idx
                .iter()
                .map(|&k| {
                    weight *= rule[k].1;
                    std::f64::consts::SQRT_2 * rule[k].0
                })
                .collect();
            for (t, g) in total.iter_mut().zip(self.param_gradient(&noise, sigma)) {
                *t += weight * g;
            }
            let mut d = 0;
            while d < dim {
                idx[d] += 1;
                if idx[d] < nodes {
                    break;
                }
                idx[d] = 0;
                d += 1;
            }
            if d == dim {
                return total;
            }
        }
    }
}

fn rollout(theta: &Network, rng: &mut Rng) -> (Vec<Vec<f64>>, Vec<usize>, Vec<f64>) {
    let (mut states, mut actions, mut rewards) = (Vec::new(), Vec::new(), Vec::new());
    let mut s = 0;
    for _ in 0..2 {
        let l = theta.forward(&onehot(s)).unwrap();
        let p = softmax2([l[0], l[1]]);
        let a = usize::from(rng.random::<f64>() >= p[0]);
        states.push(onehot(s));
        actions.push(a);
        rewards.push(REWARD[s][a]);
        s = a;
    }
    (states, actions, rewards)
}

fn monte_carlo(policy: &Network, sigma: f64, episodes: usize, seed: u64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let dim = policy.num_params();
    let mut rng = stream(seed, Stream::Perturbation);
    let (mut sum, mut sq) = (vec![0.0; dim], vec![0.0; dim]);
    let mut batch = Vec::new();
    for i in 0..episodes {
        let noise: Vec<f64> = (0..dim).map(|_| standard_normal(&mut rng)).collect();
        let values: Vec<f64> = policy.param_values().iter().zip(&noise).map(|(p, e)| p + sigma * e).collect();
        let theta = Network::from_params(policy.architecture().clone(), &values).unwrap();
        let (states, actions, rewards) = rollout(&theta, &mut rng);
        let ep = PerturbedEpisode {
            noise,
            states,
            actions,
            rewards,
            baselines: vec![0.0; 2],
        };
        let g = reinforce_psn_gradient(policy, sigma, std::slice::from_ref(&ep), 1.0).unwrap();
        for j in 0..dim {
            sum[j] += g[j];
            sq[j] += g[j] * g[j];
        }
        if i < 1000 {
            batch.push(ep);
        }
    }
    let n = episodes as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let se: Vec<f64> = sq.iter().zip(&mean).map(|(q, m)| ((q / n - m * m) / (n - 1.0)).max(0.0).sqrt()).collect();
    // The batched estimator is the mean of per-episode estimates.
    let batched = reinforce_psn_gradient(policy, sigma, &batch, 1.0).unwrap();
    (mean, se, batched)
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let rule = gauss_hermite(10);
    let wsum: f64 = rule.iter().map(|r| r.1).sum();
    let m4: f64 = rule.iter().map(|(x, w)| w * (std::f64::consts::SQRT_2 * x).powi(4)).sum::<f64>()
        / std::f64::consts::PI.sqrt();
    let quad_ok = (wsum - std::f64::consts::PI.sqrt()).abs() < 1e-12 && (m4 - 3.0).abs() < 1e-10;

    let mut rng = stream(5, Stream::Init);
    let arch = Architecture::mlp(2, &[], 2, Activation::Relu, Activation::Linear, false);
    let mut policy = Network::new(arch, &mut rng).unwrap();
    for v in policy.param_values_mut() {
        *v = rng.random_range(-0.8..0.8);
    }
    let oracle = Oracle::new(&policy);
    let mut pass = quad_ok;
    let mut parts = vec![format!("quadrature moments ok: {quad_ok}")];
    for (sigma, seed) in [(0.5, 51u64), (0.0, 52)] {
        let exact = oracle.smoothed_gradient(sigma, 10);
        let coarse = oracle.smoothed_gradient(sigma, 8);
        let quad_gap = exact.iter().zip(&coarse).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let (mean, se, batched) = monte_carlo(&policy, sigma, 100_000, seed);
        let z: Vec<f64> = mean.iter().zip(&exact).zip(&se).map(|((m, e), s)| (m - e) / s).collect();
        let worst = z.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let batch_ok = batched.iter().all(|v| v.is_finite());
        pass &= worst < 3.0 && quad_gap < 1e-6 && batch_ok;
        parts.push(format!(
            "sigma {sigma}: max |MC - exact|/SE = {worst:.2} over 6 coords (quadrature 8 vs 10 nodes gap {quad_gap:.1e})"
        ));
    }
    let elapsed = start.elapsed().as_secs_f64();
    pass &= elapsed < 60.0;
    parts.push(format!("{elapsed:.1}s"));
    outcome(pass, parts.join("; "))
}

// ---------------------------------------------------------------------------
// Criterion 6: gradient engine against central finite differences.

fn criterion_6() -> Outcome {
    let mut rng = stream(6, Stream::Init);
    let hidden_acts = [Activation::Relu, Activation::Tanh];
    let out_acts = [Activation::Linear, Activation::Tanh, Activation::Softmax];
    let mut worst: f64 = 0.0;
    let mut with_norm = 0;
    for k in 0..20 {
        let input_dim = rng.random_range(1..7);
        let hidden: Vec<usize> = (0..rng.random_range(1..4)).map(|_| rng.random_range(2..12)).collect();
        let out_dim = rng.random_range(1..5);
        let norm = k % 4 != 3;
        with_norm += usize::from(norm);
        let arch = Architecture::mlp(
            input_dim,
            &hidden,
            out_dim,
            hidden_acts[rng.random_range(0..2)],
            out_acts[rng.random_range(0..3)],
            norm,
        );
        let net = Network::new(arch, &mut rng).unwrap();
        let x: Vec<f64> = (0..input_dim).map(|_| rng.random_range(-2.0..2.0)).collect();
        let g: Vec<f64> = (0..out_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let grads = net.backward_grads(&x, &g).unwrap();
        let objective = |n: &Network| -> f64 { n.forward(&x).unwrap().iter().zip(&g).map(|(o, w)| o * w).sum() };
        let h = 1e-5;
        for (i, &analytic) in grads.iter().enumerate() {
            let mut plus = net.clone();
            plus.param_values_mut()[i] += h;
            let mut minus = net.clone();
            minus.param_values_mut()[i] -= h;
            let numeric = (objective(&plus) - objective(&minus)) / (2.0 * h);
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-3);
            worst = worst.max(rel);
        }
    }
    outcome(
        worst < 1e-4,
        format!("20 random architectures ({with_norm} with layer norm); max relative error {worst:.2e}"),
    )
}

// ---------------------------------------------------------------------------
// Criterion 7: sparse mountain car with DDPG.

/// Evaluation returns of one run, one per `every`-step evaluation point.
fn evaluations(rows: &[paramnoise_harness::Row], every: u64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut next = every;
    for row in rows {
        if row.steps >= next {
            out.push(row.eval_return);
            while next <= row.steps {
                next += every;
            }
        }
    }
    out
}

fn criterion_7() -> Outcome {
    let mut lines = Vec::new();
    let mut peaks = Vec::new();
    for method in ["ddpg-paramnoise", "ddpg-gaussian", "ddpg-none"] {
        let config = ExperimentConfig::defaults(EnvKind::SparseMountainCar, method).unwrap();
        let results = run_experiment(&config, 1);
        let evals: Vec<Vec<f64>> = results.iter().map(|r| evaluations(&r.rows, config.eval_every_steps)).collect();
        // Median across seeds at each evaluation point; a run that used fewer
        // steps keeps its last evaluation.
        let points = evals.iter().map(Vec::len).max().unwrap_or(0);
        let medians: Vec<f64> = (0..points)
            .map(|k| {
                let at: Vec<f64> = evals.iter().filter_map(|e| e.get(k).or(e.last()).copied()).collect();
                paramnoise_harness::aggregate::quartiles(&at).0
            })
            .collect();
        let peak = medians.iter().copied().filter(|m| m.is_finite()).fold(0.0, f64::max);
        let per_seed: Vec<String> = results
            .iter()
            .zip(&evals)
            .map(|(r, e)| {
                let best = e.iter().copied().fold(0.0, f64::max);
                let positive = e.iter().filter(|&&v| v > 0.0).count();
                let successes = r.rows.iter().filter(|row| row.train_return > 0.0).count();
                format!("{positive}/{} evals > 0, best {best:.1}, {successes} rewarded episodes", e.len())
            })
            .collect();
        lines.push(format!(
            "    {method:<16} peak median eval {peak:.2}, final median {:.2}\n      {}",
            medians.last().copied().unwrap_or(f64::NAN),
            per_seed.join("\n      ")
        ));
        peaks.push(peak);
    }
    let pass = peaks[0] > 0.0 && peaks[1] == 0.0 && peaks[2] == 0.0;
    outcome(pass, format!("5 seeds, 500 episodes each, median over seeds per evaluation point\n{}", lines.join("\n")))
}

/// Id, name, whether a FAIL fails the target, check.
type Criterion = (u32, &'static str, bool, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 7] = [
        (1, "chain separation", false, criterion_1),
        (2, "distance identity", true, criterion_2),
        (3, "threshold formula", true, criterion_3),
        (4, "adaptive scaler convergence", true, criterion_4),
        (5, "perturbed REINFORCE estimator", true, criterion_5),
        (6, "gradient engine", true, criterion_6),
        (7, "sparse continuous control", false, criterion_7),
    ];
    let only: Option<Vec<u32>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let mut hard_failures = 0;
    for (id, name, gating, check) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            println!("criterion {id} ({name}): SKIPPED");
            continue;
        }
        let start = Instant::now();
        let result = check();
        let verdict = if result.pass { "PASS" } else { "FAIL" };
        let kind = if gating { "" } else { " [experimental, non-gating]" };
        println!(
            "criterion {id} ({name}): {verdict}{kind} in {:.1}s: {}",
            start.elapsed().as_secs_f64(),
            result.detail
        );
        if gating && !result.pass {
            hard_failures += 1;
        }
    }
    if hard_failures > 0 {
        eprintln!("{hard_failures} gating criteria failed");
        std::process::exit(1);
    }
}
