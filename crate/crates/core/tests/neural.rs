mod common;

use common::{grad_rel_err, net_gradient_error, random_tensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use specshape::neural::{
    chamfer, read_checkpoint, squared_error, write_checkpoint, Adam, LayerSpec, Mode, Net, NetSpec, NeuralError,
    Tensor,
};

fn dense(input: usize, output: usize) -> LayerSpec {
    LayerSpec::Dense { input, output }
}

fn pointnet_spec() -> NetSpec {
    NetSpec {
        layers: vec![
            LayerSpec::SharedDense { input: 3, output: 8 },
            LayerSpec::Batchnorm { channels: 8 },
            LayerSpec::Selu,
            LayerSpec::SharedDense { input: 8, output: 6 },
            LayerSpec::MaxpoolPoints,
            dense(6, 4),
            LayerSpec::Tanh,
        ],
    }
}

#[test]
fn identity_dense_layer() {
    let mut net = Net::<f32>::new(NetSpec { layers: vec![dense(3, 3)] }, 1).unwrap();
    {
        let mut p = net.params_mut();
        p[0].copy_from_slice(&[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        p[1].iter_mut().for_each(|b| *b = 0.0);
    }
    let x = Tensor::matrix(2, 3, vec![1.0, -2.0, 3.5, 0.25, 0.0, -7.0]).unwrap();
    assert_eq!(net.infer(&x).unwrap(), x);
}

#[test]
fn activations_vanish_at_zero() {
    for act in [LayerSpec::Tanh, LayerSpec::Selu] {
        let mut net = Net::<f32>::new(NetSpec { layers: vec![dense(2, 2), act] }, 3).unwrap();
        net.params_mut().iter_mut().for_each(|p| p.iter_mut().for_each(|v| *v = 0.0));
        let y = net.infer(&Tensor::matrix(1, 2, vec![0.3, -0.4]).unwrap()).unwrap();
        assert_eq!(y.data(), &[0.0, 0.0]);
    }
}

#[test]
fn shape_errors_name_both_shapes() {
    let net = Net::<f32>::new(NetSpec::mlp(&[4, 3], LayerSpec::Tanh, false), 0).unwrap();
    let err = net.infer(&Tensor::zeros(vec![2, 5])).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("(batch, 4)") && msg.contains("[2, 5]"), "{msg}");
    assert!(NetSpec { layers: vec![dense(3, 4), dense(5, 2)] }.validate().is_err());
    assert!(NetSpec { layers: vec![dense(3, 4), LayerSpec::MaxpoolPoints] }.validate().is_err());
}

#[test]
fn mlp_gradients_match_finite_differences() {
    for seed in 0..3 {
        let net = Net::<f32>::new(NetSpec::mlp(&[7, 12, 9, 5], LayerSpec::Tanh, false), seed).unwrap().cast::<f64>();
        let x = random_tensor(vec![4, 7], 100 + seed);
        let err = net_gradient_error(&net, &x, Mode::Train, 100, seed, false);
        assert!(err < 1e-5, "seed {seed}: {err}");
    }
}

#[test]
fn every_op_passes_gradient_check() {
    let specs = [
        ("selu", NetSpec { layers: vec![dense(5, 6), LayerSpec::Selu, dense(6, 3)] }),
        ("tanh", NetSpec { layers: vec![dense(5, 6), LayerSpec::Tanh, dense(6, 3)] }),
        ("batchnorm", NetSpec::mlp(&[5, 8, 8, 3], LayerSpec::Selu, true)),
    ];
    for (name, spec) in specs {
        let net = Net::<f32>::new(spec, 9).unwrap().cast::<f64>();
        let x = random_tensor(vec![6, 5], 4);
        let err = net_gradient_error(&net, &x, Mode::Train, 100, 11, name == "batchnorm");
        assert!(err < 1e-5, "{name}: {err}");
    }
    // Eval-mode batch norm is an affine map with fixed statistics.
    let mut net = Net::<f32>::new(NetSpec::mlp(&[5, 8, 3], LayerSpec::Selu, true), 2).unwrap().cast::<f64>();
    let (_, tape) = net.forward(&random_tensor(vec![6, 5], 8), Mode::Train).unwrap();
    net.update_running_stats(&tape);
    let err = net_gradient_error(&net, &random_tensor(vec![3, 5], 5), Mode::Eval, 100, 12, false);
    assert!(err < 1e-5, "eval batchnorm: {err}");

    let net = Net::<f32>::new(pointnet_spec(), 4).unwrap().cast::<f64>();
    let err = net_gradient_error(&net, &random_tensor(vec![3, 10, 3], 6), Mode::Train, 100, 13, true);
    assert!(err < 1e-5, "shared dense + maxpool: {err}");
}

#[test]
fn squared_error_gradient() {
    let p = random_tensor(vec![3, 4], 1);
    let t = random_tensor(vec![3, 4], 2);
    let (v, g) = squared_error(&p, &t).unwrap();
    let want: f64 = p.data().iter().zip(t.data()).map(|(a, b)| (a - b).powi(2)).sum();
    assert!((v - want).abs() < 1e-12);
    for i in 0..12 {
        let h = 1e-3;
        let mut up = p.clone();
        up.data_mut()[i] += h;
        let mut down = p.clone();
        down.data_mut()[i] -= h;
        let fd = (squared_error(&up, &t).unwrap().0 - squared_error(&down, &t).unwrap().0) / (2.0 * h);
        assert!(grad_rel_err(g.data()[i], fd, 1e-6) < 1e-8);
    }
    assert!(squared_error(&p, &random_tensor(vec![2, 4], 3)).is_err());
}

#[test]
fn chamfer_hand_cases() {
    let x = [0.1f64, 0.2, 0.3, -1.0, 0.5, 2.0];
    assert_eq!(chamfer(&x, &x, 3).unwrap().0, 0.0);
    let (v, ga, gb) = chamfer(&[0.0f64, 0.0, 0.0], &[1.0, 0.0, 0.0], 3).unwrap();
    assert_eq!(v, 2.0);
    assert_eq!(ga, vec![-4.0, 0.0, 0.0]);
    assert_eq!(gb, vec![4.0, 0.0, 0.0]);
    assert_eq!(chamfer::<f64>(&[], &[1.0, 2.0, 3.0], 3).unwrap_err(), NeuralError::EmptySet);
    assert!(chamfer(&[1.0f64, 2.0], &[1.0, 2.0, 3.0], 3).is_err());
}

#[test]
fn chamfer_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let a: Vec<f64> = (0..3 * 20).map(|_| rng.random_range(-1.0..1.0)).collect();
    let b: Vec<f64> = (0..3 * 15).map(|_| rng.random_range(-1.0..1.0)).collect();
    let (_, ga, gb) = chamfer(&a, &b, 3).unwrap();
    let h = 1e-3;
    let mut checked = 0;
    for probe in 0..200 {
        let on_a = probe % 2 == 0;
        let i = rng.random_range(0..if on_a { a.len() } else { b.len() });
        let eval = |d: f64| {
            let (mut a2, mut b2) = (a.clone(), b.clone());
            if on_a {
                a2[i] += d;
            } else {
                b2[i] += d;
            }
            chamfer(&a2, &b2, 3).unwrap().0
        };
        let fd = (eval(h) - eval(-h)) / (2.0 * h);
        // A nearest-neighbour switch inside the stencil makes the difference
        // quotient meaningless; detect it by asymmetric one-sided slopes.
        let fwd = (eval(h) - eval(0.0)) / h;
        let bwd = (eval(0.0) - eval(-h)) / h;
        if (fwd - bwd).abs() > 1e-2 {
            continue;
        }
        let g = if on_a { ga[i] } else { gb[i] };
        assert!(grad_rel_err(g, fd, 1e-6) < 1e-4, "probe {probe}: {g} vs {fd}");
        checked += 1;
        if checked == 100 {
            break;
        }
    }
    assert_eq!(checked, 100);
}

#[test]
fn adam_zero_gradient_is_a_no_op() {
    let mut w = vec![vec![0.5f32, -1.25, 3.0]];
    let before = w.clone();
    let mut opt = Adam::new(1e-2);
    for _ in 0..5 {
        opt.step(w.iter_mut().collect(), &[vec![0.0; 3]]).unwrap();
    }
    assert_eq!(w, before);
}

#[test]
fn adam_first_step_moves_by_lr_against_sign() {
    let mut w = vec![vec![0.0f64; 4]];
    let g = vec![vec![3.0, -0.02, 1e-3, -50.0]];
    let mut opt = Adam::new(1e-3);
    opt.step(w.iter_mut().collect(), &g).unwrap();
    for (wi, gi) in w[0].iter().zip(&g[0]) {
        let want = -1e-3 * gi.signum();
        assert!((wi - want).abs() < 1e-3 * 1e-4, "{wi} vs {want}");
    }
}

#[test]
fn adam_converges_on_quadratic() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let target: Vec<f64> = (0..10).map(|_| rng.random_range(-2.0..2.0)).collect();
    let mut w = vec![(0..10).map(|_| rng.random_range(-2.0f32..2.0)).collect::<Vec<f32>>()];
    let mut opt = Adam::new(1e-2);
    for _ in 0..2000 {
        let g: Vec<f32> = w[0].iter().zip(&target).map(|(a, b)| 2.0 * (*a as f64 - b) as f32).collect();
        opt.step(w.iter_mut().collect(), &[g]).unwrap();
    }
    let dist: f64 = w[0].iter().zip(&target).map(|(a, b)| (*a as f64 - b).powi(2)).sum::<f64>().sqrt();
    assert!(dist < 1e-3, "{dist}");
    assert_eq!(opt.steps(), 2000);
    assert!(opt.step(w.iter_mut().collect(), &[vec![0.0; 3]]).is_err());
}

fn bn_only(c: usize) -> Net<f64> {
    Net::new(NetSpec { layers: vec![LayerSpec::Batchnorm { channels: c }] }, 0).unwrap()
}

#[test]
fn batchnorm_eval_with_default_stats_is_identity() {
    let net = bn_only(4);
    let x = random_tensor(vec![1, 4], 9);
    let y = net.infer(&x).unwrap();
    let scale = 1.0 / (1.0 + specshape::neural::BN_EPS).sqrt();
    for (a, b) in y.data().iter().zip(x.data()) {
        assert!((a - b * scale).abs() < 1e-15);
        assert!((a - b).abs() < 1e-5 * b.abs().max(1.0));
    }
}

#[test]
fn batchnorm_train_normalises() {
    let net = bn_only(5);
    let mut x = random_tensor(vec![32, 5], 10);
    x.data_mut().iter_mut().enumerate().for_each(|(i, v)| *v = *v * (1 + i % 5) as f64 + 3.0);
    let y = net.forward(&x, Mode::Train).unwrap().0;
    for c in 0..5 {
        let col: Vec<f64> = y.data().iter().skip(c).step_by(5).copied().collect();
        let mean = col.iter().sum::<f64>() / 32.0;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 32.0;
        assert!(mean.abs() < 1e-6);
        assert!((var - 1.0).abs() < 1e-4, "{var}");
    }
    let err = net.forward(&random_tensor(vec![1, 5], 1), Mode::Train).unwrap_err();
    assert_eq!(err, NeuralError::BatchTooSmall(1));
    assert!(err.to_string().contains("eval mode"));
}

#[test]
fn running_stats_follow_the_geometric_series() {
    let mut net = bn_only(3);
    let x = random_tensor(vec![8, 3], 12);
    let mean: Vec<f64> = (0..3).map(|c| x.data().iter().skip(c).step_by(3).sum::<f64>() / 8.0).collect();
    let var: Vec<f64> = (0..3)
        .map(|c| x.data().iter().skip(c).step_by(3).map(|v| (v - mean[c]).powi(2)).sum::<f64>() / 8.0)
        .collect();
    let steps = 200;
    for _ in 0..steps {
        let (_, tape) = net.forward(&x, Mode::Train).unwrap();
        net.update_running_stats(&tape);
    }
    // After t steps from (0, 1): run = batch + 0.9^t (init − batch).
    let decay = 0.9f64.powi(steps);
    let arrays = net.named_arrays();
    for c in 0..3 {
        let want_mean = mean[c] * (1.0 - decay);
        let want_var = var[c] + decay * (1.0 - var[c]);
        assert!((arrays[2].2[c] - want_mean).abs() < 1e-9);
        assert!((arrays[3].2[c] - want_var).abs() < 1e-9);
        assert!((arrays[2].2[c] - mean[c]).abs() < 1e-4);
    }
}

#[test]
fn eval_is_batch_size_independent() {
    let mut net = Net::<f32>::new(NetSpec::mlp(&[6, 10, 10, 4], LayerSpec::Selu, true), 5).unwrap();
    let train = random_tensor(vec![16, 6], 1).cast::<f32>();
    let (_, tape) = net.forward(&train, Mode::Train).unwrap();
    net.update_running_stats(&tape);
    let x = random_tensor(vec![7, 6], 2).cast::<f32>();
    let all = net.infer(&x).unwrap();
    for i in 0..7 {
        let one = net.infer(&Tensor::matrix(1, 6, x.row(i).to_vec()).unwrap()).unwrap();
        assert_eq!(one.data(), all.row(i));
    }
    assert_eq!(net.infer(&x).unwrap(), all);
}

#[test]
fn maxpool_is_permutation_invariant() {
    let net = Net::<f32>::new(pointnet_spec(), 8).unwrap();
    let x = random_tensor(vec![2, 12, 3], 3).cast::<f32>();
    let base = net.infer(&x).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut order: Vec<usize> = (0..12).collect();
    for _ in 0..5 {
        for i in (1..12).rev() {
            order.swap(i, rng.random_range(0..=i));
        }
        let mut shuffled = x.clone();
        for b in 0..2 {
            for (dst, &src) in order.iter().enumerate() {
                for c in 0..3 {
                    shuffled.data_mut()[(b * 12 + dst) * 3 + c] = x.data()[(b * 12 + src) * 3 + c];
                }
            }
        }
        assert_eq!(net.infer(&shuffled).unwrap(), base);
    }
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let mut a = Net::<f32>::new(NetSpec::mlp(&[5, 9, 9, 2], LayerSpec::Selu, true), 1).unwrap();
    let (_, tape) = a.forward(&random_tensor(vec![4, 5], 2).cast(), Mode::Train).unwrap();
    a.update_running_stats(&tape);
    let b = Net::<f32>::new(pointnet_spec(), 2).unwrap();
    let mut buf = Vec::new();
    let meta = serde_json::json!({"seed": 1, "note": "unit"});
    write_checkpoint(&mut buf, &[("a", &a), ("b", &b)], meta.clone()).unwrap();
    let (nets, back) = read_checkpoint(buf.as_slice()).unwrap();
    assert_eq!(back, meta);
    assert_eq!(nets.len(), 2);
    assert_eq!(nets[0].name, "a");
    assert_eq!(nets[0].net, a);
    assert_eq!(nets[1].net, b);
    let x = random_tensor(vec![3, 5], 3).cast::<f32>();
    let (ya, yb) = (a.infer(&x).unwrap(), nets[0].net.infer(&x).unwrap());
    assert_eq!(
        ya.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
        yb.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    );
    // Corruption is detected.
    assert!(read_checkpoint(&buf[..buf.len() - 1]).is_err());
    let mut bad = buf.clone();
    bad[0] = b'X';
    assert!(read_checkpoint(bad.as_slice()).is_err());
    let mut long = buf.clone();
    long.push(0);
    assert!(read_checkpoint(long.as_slice()).is_err());
}

#[test]
fn parameter_counts_follow_layer_dims() {
    let n = 1000;
    let e = Net::<f32>::new(NetSpec::mlp(&[3 * n, 300, 200, 30], LayerSpec::Tanh, false), 0).unwrap();
    assert_eq!(e.num_params(), 966_530);
}

#[test]
fn initialisation_is_seeded() {
    let spec = NetSpec::mlp(&[4, 6, 2], LayerSpec::Tanh, false);
    let a = Net::<f32>::new(spec.clone(), 9).unwrap();
    assert_eq!(a, Net::<f32>::new(spec.clone(), 9).unwrap());
    assert_ne!(a, Net::<f32>::new(spec, 10).unwrap());
    let bound = 1.0 / 2.0f32;
    assert!(a.params()[0].iter().all(|w| w.abs() <= bound));
}

#[test]
fn tanh_stack_with_large_third_derivative() {
    // Central differences at h = 1e-3 miss this one by 3e-5.
    let net = Net::<f32>::new(NetSpec::mlp(&[8, 5, 4, 1], LayerSpec::Tanh, false), 181).unwrap().cast::<f64>();
    let err = net_gradient_error(&net, &random_tensor(vec![3, 8], 182), Mode::Train, 30, 181, true);
    assert!(err < 1e-5, "{err}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn random_mlps_pass_gradient_checks(
        dims in proptest::collection::vec(1usize..9, 3..5),
        batch in 2usize..6,
        seed in 0u64..1000,
        bn in any::<bool>(),
    ) {
        let net = Net::<f32>::new(NetSpec::mlp(&dims, LayerSpec::Tanh, bn), seed).unwrap().cast::<f64>();
        // Two-sample batch norm is nearly a sign function; keep batches larger.
        let batch = if bn { batch + 2 } else { batch };
        let x = random_tensor(vec![batch, dims[0]], seed + 1);
        // Central differences at h = 1e-3 leave ~3e-5 truncation error on
        // some deep tanh stacks; the five-point stencil removes it.
        let err = net_gradient_error(&net, &x, Mode::Train, 30, seed, true);
        prop_assert!(err < 1e-5, "{} dims {:?} batch {} seed {}", err, dims, batch, seed);
    }

    #[test]
    fn chamfer_is_symmetric_and_nonnegative(
        a in proptest::collection::vec(-2.0f64..2.0, 3..30),
        b in proptest::collection::vec(-2.0f64..2.0, 3..30),
    ) {
        let a = &a[..a.len() / 3 * 3];
        let b = &b[..b.len() / 3 * 3];
        let ab = chamfer(a, b, 3).unwrap().0;
        let ba = chamfer(b, a, 3).unwrap().0;
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - ba).abs() <= 1e-12 * ab.max(1.0));
    }
}

