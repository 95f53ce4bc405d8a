use paramnoise::distance::*;
use paramnoise::nn::{build_mlp, Activation};
use paramnoise::rng::{standard_normal, stream, Stream};
use proptest::prelude::*;

fn dist(p: &[f64]) -> DiscretePolicyDist {
    DiscretePolicyDist::new(p.to_vec()).unwrap()
}

#[test]
fn softmax_examples() {
    assert_eq!(softmax_policy(&[0.0, 0.0]).unwrap().probs(), &[0.5, 0.5]);
    let e2 = 2f64.exp();
    let p = softmax_policy(&[2.0, 0.0]).unwrap();
    assert!((p.probs()[0] - e2 / (e2 + 1.0)).abs() < 1e-15);
    assert!((p.probs()[0] - 0.8808).abs() < 1e-4);
    let big = softmax_policy(&[1000.0, 999.0]).unwrap();
    let small = softmax_policy(&[1.0, 0.0]).unwrap();
    assert!(big.probs().iter().all(|v| v.is_finite()));
    assert!((big.probs()[0] - small.probs()[0]).abs() < 1e-15);
    assert!((big.probs()[0] - 0.7311).abs() < 1e-4);
    assert!(softmax_policy(&[]).is_err());
}

#[test]
fn kl_examples() {
    let p = dist(&[0.2, 0.3, 0.5]);
    assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0);
    let v = kl_divergence(&dist(&[1.0, 0.0]), &dist(&[0.5, 0.5])).unwrap();
    assert!((v - 2f64.ln()).abs() < 1e-15);
    assert_eq!(kl_divergence(&dist(&[0.5, 0.5]), &dist(&[1.0, 0.0])).unwrap(), f64::INFINITY);
    assert!(kl_divergence(&dist(&[0.5, 0.5]), &dist(&[1.0])).is_err());
}

#[test]
fn threshold_examples() {
    assert_eq!(epsilon_greedy_kl_threshold(0.0, 4), 0.0);
    assert!((epsilon_greedy_kl_threshold(0.1, 4) + 0.925f64.ln()).abs() < 1e-12);
    assert!((epsilon_greedy_kl_threshold(0.1, 4) - 0.077962).abs() < 1e-6);
    for n in 1..10 {
        assert!((epsilon_greedy_kl_threshold(1.0, n) - (n as f64).ln()).abs() < 1e-12);
    }
}

#[test]
fn threshold_equals_kl_of_greedy_against_epsilon_greedy() {
    for &(eps, n) in &[(0.1, 4usize), (0.01, 18), (0.5, 2)] {
        let greedy: Vec<f64> = (0..n).map(|i| if i == 0 { 1.0 } else { 0.0 }).collect();
        let eg: Vec<f64> = (0..n)
            .map(|i| if i == 0 { 1.0 - eps + eps / n as f64 } else { eps / n as f64 })
            .collect();
        let kl = kl_divergence(&dist(&greedy), &dist(&eg)).unwrap();
        assert!((kl - epsilon_greedy_kl_threshold(eps, n)).abs() < 1e-12);
    }
}

#[test]
fn rms_distance_examples() {
    let net = build_mlp(3, &[8], 2, Activation::Relu, Activation::Tanh, true, 1).unwrap();
    let states: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 * 0.1, -0.5, 1.0]).collect();
    let d = continuous_policy_distance(|s| net.forward(s), |s| net.forward(s), &states).unwrap();
    assert_eq!(d, 0.0);
    let c = -0.37;
    let d = continuous_policy_distance(
        |s| net.forward(s),
        |s| Ok(net.forward(s)?.into_iter().map(|a| a + c).collect()),
        &states,
    )
    .unwrap();
    assert!((d - c.abs()).abs() < 1e-12);
    assert!(continuous_policy_distance(|s| net.forward(s), |s| net.forward(s), &[]).is_err());

    let flat: Vec<f64> = states.concat();
    assert_eq!(network_policy_distance(&net, &net, &flat).unwrap(), 0.0);
}

#[test]
fn rms_distance_of_gaussian_noise_is_sigma() {
    let net = build_mlp(2, &[16], 3, Activation::Relu, Activation::Tanh, true, 4).unwrap();
    let mut rng = stream(11, Stream::ActionNoise);
    let mut srng = stream(11, Stream::Environment);
    let states: Vec<Vec<f64>> = (0..10_000)
        .map(|_| vec![standard_normal(&mut srng), standard_normal(&mut srng)])
        .collect();
    let sigma = 0.2;
    let d = continuous_policy_distance(
        |s| net.forward(s),
        |s| Ok(net.forward(s)?.into_iter().map(|a| a + sigma * standard_normal(&mut rng)).collect()),
        &states,
    )
    .unwrap();
    assert!((d / sigma - 1.0).abs() < 0.05, "{d}");
}

proptest! {
    #[test]
    fn kl_is_nonnegative_and_zero_only_on_equality(
        a in prop::collection::vec(-5.0f64..5.0, 2..6),
        b in prop::collection::vec(-5.0f64..5.0, 2..6),
    ) {
        let n = a.len().min(b.len());
        let p = softmax_policy(&a[..n]).unwrap();
        let q = softmax_policy(&b[..n]).unwrap();
        let kl = kl_divergence(&p, &q).unwrap();
        prop_assert!(kl >= 0.0);
        let same = p.probs().iter().zip(q.probs()).all(|(x, y)| (x - y).abs() < 1e-9);
        if !same {
            prop_assert!(kl > 0.0);
        }
        prop_assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn softmax_is_shift_invariant(
        raw in prop::collection::vec(-4096i32..4096, 2..8),
        shift in -1000i32..1000,
    ) {
        // Dyadic values keep every shifted entry exactly representable.
        let q: Vec<f64> = raw.iter().map(|&v| v as f64 / 256.0).collect();
        let shifted: Vec<f64> = q.iter().map(|v| v + shift as f64).collect();
        prop_assert_eq!(softmax_policy(&q).unwrap(), softmax_policy(&shifted).unwrap());
    }

    #[test]
    fn softmax_is_shift_invariant_to_rounding(
        q in prop::collection::vec(-10.0f64..10.0, 2..8),
        c in -100.0f64..100.0,
    ) {
        let shifted: Vec<f64> = q.iter().map(|v| v + c).collect();
        let p = softmax_policy(&q).unwrap();
        let s = softmax_policy(&shifted).unwrap();
        for (x, y) in p.probs().iter().zip(s.probs()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn threshold_increases_with_epsilon(e1 in 0.0f64..1.0, e2 in 0.0f64..1.0, n in 2usize..20) {
        prop_assume!((e1 - e2).abs() > 1e-9);
        let (lo, hi) = if e1 < e2 { (e1, e2) } else { (e2, e1) };
        prop_assert!(epsilon_greedy_kl_threshold(lo, n) < epsilon_greedy_kl_threshold(hi, n));
    }

    #[test]
    fn action_distance_is_symmetric(
        a in prop::collection::vec(-1.0f64..1.0, 12),
        b in prop::collection::vec(-1.0f64..1.0, 12),
    ) {
        prop_assert_eq!(rms_action_distance(&a, &b, 3).unwrap(), rms_action_distance(&b, &a, 3).unwrap());
    }
}
