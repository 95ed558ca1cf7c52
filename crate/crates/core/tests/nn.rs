mod common;

use common::{check_param_gradient, relative_error, FD_STEP, FD_TOLERANCE};
use hmiway::nn::{log_softmax, Activation, Adam, Checkpoint, ContextEncoder, LayerSpec, Lstm, Mlp, Parameterized};
use hmiway::Error;
use ndarray::{array, Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_matrix<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
}

fn random_sequences<R: Rng>(t: usize, b: usize, w: usize, rng: &mut R) -> Array3<f64> {
    Array3::from_shape_fn((t, b, w), |_| rng.random_range(-1.0..1.0))
}

#[test]
fn zero_linear_layer_outputs_zero() {
    let layers = vec![LayerSpec { input: 3, output: 2, activation: Activation::Linear }];
    let net = Mlp::from_layers(layers, vec![0.0; 8]).unwrap();
    assert_eq!(net.predict(array![[1.0, -2.0, 3.0]].view()).unwrap(), array![[0.0, 0.0]]);
}

#[test]
fn identity_layer_passes_input() {
    let layers = vec![LayerSpec { input: 3, output: 3, activation: Activation::Linear }];
    let mut params = vec![0.0; 12];
    for i in 0..3 {
        params[i * 3 + i] = 1.0;
    }
    let net = Mlp::from_layers(layers, params).unwrap();
    let x = array![[0.5, -1.5, 2.0], [3.0, 0.0, -4.0]];
    assert_eq!(net.predict(x.view()).unwrap(), x);
}

#[test]
fn two_layer_net_matches_hand_arithmetic() {
    // W1 = [[1, -1], [2, 0.5]], b1 = [0.1, -0.2], tanh; W2 = [[3], [-2]], b2 = [0.5]
    let layers = vec![
        LayerSpec { input: 2, output: 2, activation: Activation::Tanh },
        LayerSpec { input: 2, output: 1, activation: Activation::Linear },
    ];
    let params = vec![1.0, -1.0, 2.0, 0.5, 0.1, -0.2, 3.0, -2.0, 0.5];
    let net = Mlp::from_layers(layers, params).unwrap();
    let (x0, x1) = (0.3, -0.7);
    let h0 = (x0 * 1.0 + x1 * 2.0 + 0.1f64).tanh();
    let h1 = (x0 * -1.0 + x1 * 0.5 - 0.2f64).tanh();
    let expected = 3.0 * h0 - 2.0 * h1 + 0.5;
    let out = net.predict_one(&[x0, x1]).unwrap();
    assert!((out[0] - expected).abs() < 1e-15);
}

#[test]
fn linear_weight_gradient_is_outer_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let net = Mlp::new(&[3, 2], Activation::Linear, Activation::Linear, &mut rng);
    let x = array![[0.5, -1.0, 2.0]];
    let g = array![[0.25, -3.0]];
    let (_, cache) = net.forward(x.view()).unwrap();
    let (grads, _) = net.backward(&cache, g.view()).unwrap();
    for i in 0..3 {
        for j in 0..2 {
            assert_eq!(grads[i * 2 + j], x[[0, i]] * g[[0, j]]);
        }
    }
    assert_eq!(&grads[6..], &[0.25, -3.0]);
}

#[test]
fn zero_output_gradient_gives_zero_param_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let net = Mlp::new(&[4, 8, 3], Activation::Tanh, Activation::Linear, &mut rng);
    let x = random_matrix(5, 4, &mut rng);
    let (_, cache) = net.forward(x.view()).unwrap();
    let (grads, _) = net.backward(&cache, Array2::zeros((5, 3)).view()).unwrap();
    assert!(grads.iter().all(|g| *g == 0.0));
}

#[test]
fn stale_cache_is_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut net = Mlp::new(&[2, 2], Activation::Tanh, Activation::Linear, &mut rng);
    let (_, cache) = net.forward(array![[1.0, 2.0]].view()).unwrap();
    let p = net.params().to_vec();
    net.set_params(&p).unwrap();
    assert!(matches!(net.backward(&cache, array![[1.0, 1.0]].view()), Err(Error::StaleCache)));
    assert!(matches!(net.forward(array![[1.0]].view()), Err(Error::WidthMismatch { .. })));
}

#[test]
fn mlp_squared_output_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for sizes in [vec![6, 32, 32, 1], vec![5, 32, 1], vec![7, 32, 32, 5]] {
        for _ in 0..5 {
            let mut net = Mlp::new(&sizes, Activation::Tanh, Activation::Linear, &mut rng);
            let x = random_matrix(4, sizes[0], &mut rng);
            let (out, cache) = net.forward(x.view()).unwrap();
            let (grads, _) = net.backward(&cache, out.view()).unwrap();
            let loss = |n: &Mlp| 0.5 * n.predict(x.view()).unwrap().iter().map(|v| v * v).sum::<f64>();
            let err = check_param_gradient(&mut net, &grads, loss, 400, &mut rng);
            assert!(err < FD_TOLERANCE, "{sizes:?}: {err}");
        }
    }
}

#[test]
fn mlp_input_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let net = Mlp::new(&[3, 16, 2], Activation::Tanh, Activation::Linear, &mut rng);
    let x = random_matrix(1, 3, &mut rng);
    let w = array![[0.7, -1.3]];
    let (_, cache) = net.forward(x.view()).unwrap();
    let (_, dx) = net.backward(&cache, w.view()).unwrap();
    let f = |x: &Array2<f64>| (net.predict(x.view()).unwrap() * &w).sum();
    for i in 0..3 {
        let mut up = x.clone();
        up[[0, i]] += FD_STEP;
        let mut down = x.clone();
        down[[0, i]] -= FD_STEP;
        let numeric = (f(&up) - f(&down)) / (2.0 * FD_STEP);
        assert!(relative_error(dx[[0, i]], numeric) < FD_TOLERANCE);
    }
}

#[test]
fn log_softmax_policy_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut net = Mlp::new(&[6, 32, 32, 5], Activation::Tanh, Activation::Linear, &mut rng);
    let x = random_matrix(3, 6, &mut rng);
    let actions = [0usize, 3, 4];
    let loss = |n: &Mlp| {
        let logits = n.predict(x.view()).unwrap();
        actions.iter().enumerate().map(|(r, a)| log_softmax(logits.row(r).as_slice().unwrap())[*a]).sum::<f64>()
    };
    let (logits, cache) = net.forward(x.view()).unwrap();
    let mut g = Array2::zeros(logits.dim());
    for (r, a) in actions.iter().enumerate() {
        let lp = log_softmax(logits.row(r).as_slice().unwrap());
        for k in 0..5 {
            g[[r, k]] = f64::from(u8::from(k == *a)) - lp[k].exp();
        }
    }
    let (grads, _) = net.backward(&cache, g.view()).unwrap();
    let err = check_param_gradient(&mut net, &grads, loss, 500, &mut rng);
    assert!(err < FD_TOLERANCE, "{err}");
}

#[test]
fn single_step_sequence_is_one_cell_application() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let lstm = Lstm::new(2, 1, &mut rng);
    let p = lstm.params().to_vec();
    // layout: W_x (2×4), W_h (1×4), b (4); gates i, f, g, o
    let x = [0.4, -0.9];
    let z: Vec<f64> = (0..4).map(|k| x[0] * p[k] + x[1] * p[4 + k] + p[12 + k]).collect();
    let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
    let c = sig(z[0]) * z[2].tanh();
    let h = sig(z[3]) * c.tanh();
    let seq = Array3::from_shape_vec((1, 1, 2), x.to_vec()).unwrap();
    let (out, _) = lstm.forward(seq.view()).unwrap();
    assert!((out[[0, 0]] - h).abs() < 1e-15);
}

#[test]
fn empty_sequence_is_an_error() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let lstm = Lstm::new(2, 3, &mut rng);
    assert!(matches!(lstm.forward(Array3::zeros((0, 1, 2)).view()), Err(Error::EmptySequence)));
}

#[test]
fn lstm_bptt_matches_finite_differences_on_five_steps() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..5 {
        let mut lstm = Lstm::new(3, 4, &mut rng);
        let seq = random_sequences(5, 2, 3, &mut rng);
        let w = random_matrix(2, 4, &mut rng);
        let (_, cache) = lstm.forward(seq.view()).unwrap();
        let (grads, dx) = lstm.backward(&cache, w.view()).unwrap();
        let loss = |l: &Lstm| (l.forward(seq.view()).unwrap().0 * &w).sum();
        let err = check_param_gradient(&mut lstm, &grads, loss, usize::MAX, &mut rng);
        assert!(err < FD_TOLERANCE, "{err}");
        for idx in [(0, 0, 0), (2, 1, 2), (4, 0, 1)] {
            let mut up = seq.clone();
            up[idx] += FD_STEP;
            let mut down = seq.clone();
            down[idx] -= FD_STEP;
            let f = |s: &Array3<f64>| (lstm.forward(s.view()).unwrap().0 * &w).sum();
            let numeric = (f(&up) - f(&down)) / (2.0 * FD_STEP);
            assert!(relative_error(dx[idx], numeric) < FD_TOLERANCE);
        }
    }
}

#[test]
fn identical_sequences_give_identical_states() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let enc = ContextEncoder::new(3, 8, 2, &mut rng);
    let one = random_sequences(6, 1, 3, &mut rng);
    let a = enc.encode_sequence(one.index_axis(ndarray::Axis(1), 0)).unwrap();
    let b = enc.encode_sequence(one.index_axis(ndarray::Axis(1), 0)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn pooling_identical_members_equals_single_encoding() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let enc = ContextEncoder::new(3, 8, 2, &mut rng);
    let one = random_sequences(6, 1, 3, &mut rng);
    let mut four = Array3::zeros((6, 4, 3));
    for b in 0..4 {
        four.index_axis_mut(ndarray::Axis(1), b).assign(&one.index_axis(ndarray::Axis(1), 0));
    }
    let (single, _) = enc.forward(one.view(), 1).unwrap();
    let (pooled, _) = enc.forward(four.view(), 4).unwrap();
    for (a, b) in single.pooled.iter().zip(pooled.pooled.iter()) {
        assert!((a - b).abs() < 1e-15);
    }
    let h = enc.encode_sequence(one.index_axis(ndarray::Axis(1), 0)).unwrap();
    assert_eq!(single.pooled.as_slice().unwrap(), h.as_slice());
}

#[test]
fn zero_heads_embed_at_origin() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut enc = ContextEncoder::new(3, 8, 2, &mut rng);
    enc.zero_heads();
    let (out, _) = enc.forward(random_sequences(4, 6, 3, &mut rng).view(), 3).unwrap();
    assert!(out.mean.iter().all(|v| *v == 0.0));
    assert!(out.log_std.iter().all(|v| *v == 0.0));
}

#[test]
fn pooled_encoder_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..3 {
        let mut enc = ContextEncoder::new(3, 5, 2, &mut rng);
        let seq = random_sequences(4, 4, 3, &mut rng);
        let (wm, ws) = (random_matrix(2, 2, &mut rng), random_matrix(2, 2, &mut rng));
        let (_, cache) = enc.forward(seq.view(), 2).unwrap();
        let (grads, _) = enc.backward(&cache, wm.view(), ws.view()).unwrap();
        let loss = |e: &ContextEncoder| {
            let (o, _) = e.forward(seq.view(), 2).unwrap();
            (o.mean * &wm).sum() + (o.log_std * &ws).sum()
        };
        let err = check_param_gradient(&mut enc, &grads, loss, usize::MAX, &mut rng);
        assert!(err < FD_TOLERANCE, "{err}");
    }
}

#[test]
fn parameter_counts_match_layouts() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let g = Mlp::new(&[47, 32, 32, 1], Activation::Tanh, Activation::Linear, &mut rng);
    assert_eq!(g.param_count(), 47 * 32 + 32 + 32 * 32 + 32 + 32 + 1);
    let enc = ContextEncoder::new(45, 128, 2, &mut rng);
    assert_eq!(enc.param_count(), (45 + 128 + 1) * 512 + 2 * (128 * 2 + 2));
    for m in [&g as &dyn Parameterized, &enc] {
        assert_eq!(m.layout().iter().map(|b| b.len()).sum::<usize>(), m.param_count());
    }
}

#[test]
fn adam_runs_are_deterministic() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let mut net = Mlp::new(&[2, 4, 1], Activation::Tanh, Activation::Linear, &mut rng);
        let mut adam = Adam::new(net.param_count(), 1e-2);
        let x = array![[0.5, -0.5], [1.0, 2.0]];
        for _ in 0..20 {
            let (out, cache) = net.forward(x.view()).unwrap();
            let (g, _) = net.backward(&cache, out.view()).unwrap();
            adam.update(&mut net, &g).unwrap();
        }
        net.params().to_vec()
    };
    assert_eq!(run(), run());
}

#[test]
fn checkpoint_roundtrip_is_bit_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let net = Mlp::new(&[3, 5, 2], Activation::Tanh, Activation::Linear, &mut rng);
    let enc = ContextEncoder::new(3, 4, 2, &mut rng);
    let adam = Adam::new(net.param_count(), 1e-3);
    let mut ck = Checkpoint::new();
    ck.insert("policy", &net);
    ck.insert("encoder", &enc);
    ck.insert_extra("adam", &adam).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ck.json");
    ck.save(&path).unwrap();
    let back = Checkpoint::load(&path).unwrap();
    let mut net2 = Mlp::new(&[3, 5, 2], Activation::Tanh, Activation::Linear, &mut rng);
    back.restore("policy", &mut net2).unwrap();
    let bits = |p: &[f64]| p.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(net2.params()), bits(net.params()));
    assert_eq!(back.extra::<Adam>("adam").unwrap(), adam);
    let mut wrong = Mlp::new(&[3, 6, 2], Activation::Tanh, Activation::Linear, &mut rng);
    assert!(back.restore("policy", &mut wrong).is_err());
}

#[test]
fn batched_and_single_row_outputs_are_bit_identical() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let net = Mlp::new(&[47, 32, 32, 5], Activation::Tanh, Activation::Linear, &mut rng);
    let x = random_matrix(257, 47, &mut rng);
    let full = net.predict(x.view()).unwrap();
    for r in 0..x.nrows() {
        let one = net.predict_one(x.row(r).as_slice().unwrap()).unwrap();
        assert_eq!(one, full.row(r).to_vec());
    }
}
