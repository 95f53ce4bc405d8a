use paramnoise::nn::*;
use paramnoise::Error;
use rand::Rng as _;
use paramnoise::rng::Rng;
use paramnoise::rng::{stream, Stream};
use proptest::prelude::*;

/// Central finite difference of `output(input) · out_grad` w.r.t. parameter `i`.
fn fd_param(net: &Network, input: &[f64], side: Option<&[f64]>, out_grad: &[f64], i: usize, h: f64) -> f64 {
    let objective = |n: &Network| -> f64 {
        let out = n.forward_batch(input, side, 1).unwrap().into_output();
        out.iter().zip(out_grad).map(|(o, g)| o * g).sum()
    };
    let mut plus = net.clone();
    plus.param_values_mut()[i] += h;
    let mut minus = net.clone();
    minus.param_values_mut()[i] -= h;
    (objective(&plus) - objective(&minus)) / (2.0 * h)
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

fn random_arch(rng: &mut Rng) -> Architecture {
    let acts = [Activation::Relu, Activation::Tanh];
    let outs = [Activation::Linear, Activation::Tanh, Activation::Softmax];
    let input_dim = rng.random_range(1..6);
    let n_hidden = rng.random_range(1..3);
    let hidden: Vec<usize> = (0..n_hidden).map(|_| rng.random_range(2..9)).collect();
    let out_dim = rng.random_range(1..4);
    Architecture::mlp(
        input_dim,
        &hidden,
        out_dim,
        acts[rng.random_range(0..2)],
        outs[rng.random_range(0..3)],
        true,
    )
}

#[test]
fn build_mlp_shapes_and_determinism() {
    let q = build_mlp(20, &[16, 16], 2, Activation::Relu, Activation::Linear, true, 3).unwrap();
    assert_eq!(q.input_dim(), 20);
    assert_eq!(q.output_dim(), 2);
    assert_eq!(q.num_params(), (20 * 16 + 16 + 32) + (16 * 16 + 16 + 32) + (16 * 2 + 2));
    let actor = build_mlp(4, &[64, 64], 1, Activation::Relu, Activation::Tanh, true, 3).unwrap();
    assert_eq!(actor.output_dim(), 1);
    let again = build_mlp(4, &[64, 64], 1, Activation::Relu, Activation::Tanh, true, 3).unwrap();
    assert_eq!(actor.param_values(), again.param_values());
    let other = build_mlp(4, &[64, 64], 1, Activation::Relu, Activation::Tanh, true, 4).unwrap();
    assert_ne!(actor.param_values(), other.param_values());
}

#[test]
fn init_respects_fan_in_bound() {
    let net = build_mlp(9, &[4], 1, Activation::Relu, Activation::Linear, false, 0).unwrap();
    let w = &net.param_values()[..9 * 4 + 4];
    assert!(w.iter().all(|v| v.abs() <= 1.0 / 3.0));
}

#[test]
fn non_positive_dimension_is_rejected() {
    assert!(build_mlp(0, &[3], 1, Activation::Relu, Activation::Linear, false, 0).is_err());
    assert!(build_mlp(2, &[0], 1, Activation::Relu, Activation::Linear, false, 0).is_err());
    assert!(build_mlp(2, &[3], 0, Activation::Relu, Activation::Linear, false, 0).is_err());
}

#[test]
fn parameter_count_without_norm() {
    let net = build_mlp(2, &[3], 1, Activation::Relu, Activation::Linear, false, 0).unwrap();
    assert_eq!(net.params().len(), 2 * 3 + 3 + 3 + 1);
}

#[test]
fn zero_network_outputs_zero() {
    let net = Network::zeroed(Architecture::mlp(3, &[4], 2, Activation::Relu, Activation::Linear, false)).unwrap();
    assert_eq!(net.forward(&[1.0, -2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
}

#[test]
fn softmax_head_on_equal_logits_is_uniform() {
    let arch = Architecture {
        input_dim: 1,
        side_input: None,
        layers: vec![LayerConfig { units: 2, activation: Activation::Softmax, layer_norm: false }],
    };
    let net = Network::zeroed(arch).unwrap();
    assert_eq!(net.forward(&[5.0]).unwrap(), vec![0.5, 0.5]);
}

#[test]
fn single_linear_layer_hand_computed() {
    let arch = Architecture::mlp(1, &[], 1, Activation::Relu, Activation::Linear, false);
    let net = Network::from_params(arch, &[2.0, 1.0]).unwrap();
    assert_eq!(net.forward(&[3.0]).unwrap(), vec![7.0]);
}

#[test]
fn forward_rejects_bad_input() {
    let net = build_mlp(2, &[3], 1, Activation::Relu, Activation::Linear, true, 0).unwrap();
    assert!(matches!(net.forward(&[1.0]), Err(Error::DimensionMismatch { .. })));
    assert!(matches!(net.forward(&[1.0, f64::NAN]), Err(Error::NonFinite(_))));
}

#[test]
fn linear_layer_weight_gradient_is_outer_product() {
    let arch = Architecture::mlp(3, &[], 2, Activation::Relu, Activation::Linear, false);
    let mut rng = stream(1, Stream::Init);
    let net = Network::new(arch, &mut rng).unwrap();
    let x = [0.5, -1.5, 2.0];
    let g = [3.0, -0.25];
    let grads = net.backward_grads(&x, &g).unwrap();
    for o in 0..2 {
        for i in 0..3 {
            assert_eq!(grads[o * 3 + i], g[o] * x[i]);
        }
        assert_eq!(grads[6 + o], g[o]);
    }
}

#[test]
fn zero_output_grad_gives_zero_gradient() {
    let net = build_mlp(3, &[5, 4], 2, Activation::Tanh, Activation::Softmax, true, 9).unwrap();
    let grads = net.backward_grads(&[0.1, 0.2, 0.3], &[0.0, 0.0]).unwrap();
    assert!(grads.iter().all(|&g| g == 0.0));
}

#[test]
fn gradients_match_finite_differences_on_random_nets() {
    let mut rng = stream(2024, Stream::Init);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let arch = random_arch(&mut rng);
        let net = Network::new(arch, &mut rng).unwrap();
        let input: Vec<f64> = (0..net.input_dim()).map(|_| rng.random_range(-2.0..2.0)).collect();
        let og: Vec<f64> = (0..net.output_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let grads = net.backward_grads(&input, &og).unwrap();
        for (i, &g) in grads.iter().enumerate() {
            worst = worst.max(rel_err(g, fd_param(&net, &input, None, &og, i, 1e-5)));
        }
    }
    assert!(worst < 1e-4, "max relative error {worst}");
}

#[test]
fn side_input_gradients_match_finite_differences() {
    let arch = Architecture::mlp(3, &[6, 5], 1, Activation::Relu, Activation::Linear, true).with_side_input(1, 2);
    let mut rng = stream(5, Stream::Init);
    let net = Network::new(arch, &mut rng).unwrap();
    let s = [0.3, -0.7, 1.1];
    let a = [0.25, -0.5];
    let tape = net.forward_batch(&s, Some(&a), 1).unwrap();
    let mut grads = vec![0.0; net.num_params()];
    let ig = net.backward(&tape, &[1.0], Some(&mut grads)).unwrap();
    for (i, &g) in grads.iter().enumerate() {
        let fd = fd_param(&net, &s, Some(&a), &[1.0], i, 1e-5);
        assert!(rel_err(g, fd) < 1e-4, "param {i}: {g} vs {fd}");
    }
    let side = ig.side.unwrap();
    for j in 0..2 {
        let mut ap = a;
        ap[j] += 1e-5;
        let mut am = a;
        am[j] -= 1e-5;
        let fd = (net.forward_with_side(&s, &ap).unwrap()[0] - net.forward_with_side(&s, &am).unwrap()[0]) / 2e-5;
        assert!(rel_err(side[j], fd) < 1e-4);
    }
    for j in 0..3 {
        let mut sp = s;
        sp[j] += 1e-5;
        let mut sm = s;
        sm[j] -= 1e-5;
        let fd = (net.forward_with_side(&sp, &a).unwrap()[0] - net.forward_with_side(&sm, &a).unwrap()[0]) / 2e-5;
        assert!(rel_err(ig.input[j], fd) < 1e-4);
    }
}

#[test]
fn batched_backward_sums_per_sample_gradients() {
    let net = build_mlp(2, &[4], 3, Activation::Tanh, Activation::Linear, true, 1).unwrap();
    let xs = [0.1, 0.2, -0.3, 0.9, 1.5, -1.0];
    let gs = [1.0, 0.0, -1.0, 0.5, 0.5, 0.5, 2.0, -2.0, 0.0];
    let tape = net.forward_batch(&xs, None, 3).unwrap();
    let mut batched = vec![0.0; net.num_params()];
    net.backward(&tape, &gs, Some(&mut batched)).unwrap();
    let mut summed = vec![0.0; net.num_params()];
    for b in 0..3 {
        let g = net.backward_grads(&xs[b * 2..b * 2 + 2], &gs[b * 3..b * 3 + 3]).unwrap();
        summed.iter_mut().zip(g).for_each(|(s, v)| *s += v);
    }
    for (a, b) in batched.iter().zip(&summed) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn param_round_trip_is_bit_identical() {
    let mut net = build_mlp(4, &[8, 8], 2, Activation::Relu, Activation::Linear, true, 11).unwrap();
    let x = [0.3, -0.1, 2.0, 0.0];
    let before = net.forward(&x).unwrap();
    let p = net.params();
    net.set_params(&p).unwrap();
    assert_eq!(net.forward(&x).unwrap(), before);
    assert_eq!(net.params(), p);
}

#[test]
fn setting_one_entry_changes_one_tensor_entry() {
    let mut net = build_mlp(2, &[3], 2, Activation::Relu, Activation::Linear, true, 0).unwrap();
    let base = net.params();
    for i in 0..base.len() {
        let mut v = base.values().to_vec();
        v[i] += 0.125;
        net.set_params(&base.with_values(v).unwrap()).unwrap();
        let changed: Vec<usize> = net
            .param_values()
            .iter()
            .zip(base.values())
            .enumerate()
            .filter(|(_, (a, b))| a != b)
            .map(|(j, _)| j)
            .collect();
        assert_eq!(changed, vec![i]);
        let owners = base.layout().iter().filter(|s| s.range.contains(&i)).count();
        assert_eq!(owners, 1);
    }
}

#[test]
fn set_params_rejects_wrong_length() {
    let mut net = build_mlp(2, &[3], 1, Activation::Relu, Activation::Linear, false, 0).unwrap();
    let other = build_mlp(2, &[4], 1, Activation::Relu, Activation::Linear, false, 0).unwrap();
    assert!(net.set_params(&other.params()).is_err());
}

#[test]
fn soft_update_extremes() {
    let mut target = build_mlp(2, &[3], 1, Activation::Relu, Activation::Linear, true, 0).unwrap();
    let online = build_mlp(2, &[3], 1, Activation::Relu, Activation::Linear, true, 1).unwrap();
    let frozen = target.param_values().to_vec();
    target.soft_update_from(&online, 0.0).unwrap();
    assert_eq!(target.param_values(), frozen.as_slice());
    target.soft_update_from(&online, 1.0).unwrap();
    assert_eq!(target.param_values(), online.param_values());
}

#[test]
fn architecture_string_round_trips() {
    let arch = Architecture::mlp(3, &[64, 64], 1, Activation::Relu, Activation::Linear, true).with_side_input(1, 2);
    let s = arch.to_string();
    assert_eq!(s, "in=3;side=2@1;64:relu:ln,64:relu:ln,1:linear");
    assert_eq!(s.parse::<Architecture>().unwrap(), arch);
    assert!("in=3;".parse::<Architecture>().is_err());
    assert!("in=3;4:sigmoid".parse::<Architecture>().is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_output_is_a_distribution(seed in 0u64..10_000, x in prop::collection::vec(-50.0f64..50.0, 3)) {
        let net = build_mlp(3, &[5], 4, Activation::Relu, Activation::Softmax, true, seed).unwrap();
        let p = net.forward(&x).unwrap();
        prop_assert!(p.iter().all(|&v| v >= 0.0));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn gradient_matches_finite_differences(seed in 0u64..1_000_000) {
        let mut rng = stream(seed, Stream::Init);
        let arch = random_arch(&mut rng);
        let net = Network::new(arch, &mut rng).unwrap();
        prop_assume!(net.num_params() <= 500);
        let input: Vec<f64> = (0..net.input_dim()).map(|_| rng.random_range(-2.0..2.0)).collect();
        let og: Vec<f64> = (0..net.output_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let grads = net.backward_grads(&input, &og).unwrap();
        for (i, &g) in grads.iter().enumerate() {
            let fd = fd_param(&net, &input, None, &og, i, 1e-5);
            prop_assert!(rel_err(g, fd) < 1e-4, "param {}: {} vs {}", i, g, fd);
        }
    }
}
