use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::numerics::{grad_check, sigmoid, Matrix, ParamSet, SgdConfig};

fn random_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_vec(rows, cols, random_vec(rng, rows * cols, 1.0)).unwrap()
}

/// Straight-line scalar recomputation of one LSTM step, reading weights
/// entry by entry.
fn scalar_step(ps: &ParamSet, layer: &LstmLayer, x: &[f64], h: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = layer.hidden_size;
    let (wx, wh, b) = (&ps.values()[layer.w_x], &ps.values()[layer.w_h], &ps.values()[layer.b]);
    let pre = |gate: usize, k: usize| {
        let row = gate * n + k;
        let mut z = b.get(row, 0);
        for (j, xj) in x.iter().enumerate() {
            z += wx.get(row, j) * xj;
        }
        for (j, hj) in h.iter().enumerate() {
            z += wh.get(row, j) * hj;
        }
        z
    };
    let mut h_new = vec![0.0; n];
    let mut c_new = vec![0.0; n];
    for k in 0..n {
        let f = 1.0 / (1.0 + (-pre(0, k)).exp());
        let i = 1.0 / (1.0 + (-pre(1, k)).exp());
        let g = pre(2, k).tanh();
        let o = 1.0 / (1.0 + (-pre(3, k)).exp());
        c_new[k] = f * c[k] + i * g;
        h_new[k] = o * c_new[k].tanh();
    }
    (h_new, c_new)
}

fn randomize(ps: &mut ParamSet, rng: &mut ChaCha8Rng, scale: f64) {
    for m in ps.values_mut().iter_mut() {
        for v in m.data_mut() {
            *v = rng.random_range(-scale..scale);
        }
    }
}

#[test]
fn zero_parameters_give_zero_state() {
    let mut ps = ParamSet::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let layer = LstmLayer::new(&mut ps, "l", 3, 4, &mut rng);
    ps.values_mut().iter_mut().for_each(|m| m.fill(0.0));
    let s = layer
        .step(ps.values(), &[0.3, -2.0, 9.0], &[0.0; 4], &[0.0; 4])
        .unwrap();
    assert_eq!(s.h, vec![0.0; 4]);
    assert_eq!(s.c, vec![0.0; 4]);
    assert!(s.forget.iter().all(|&f| f == 0.5));
}

#[test]
fn saturated_gates_preserve_memory() {
    let mut ps = ParamSet::new();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let layer = LstmLayer::new(&mut ps, "l", 2, 3, &mut rng);
    ps.values_mut()[layer.w_x].fill(0.0);
    ps.values_mut()[layer.w_h].fill(0.0);
    let b = ps.values_mut()[layer.b].data_mut();
    b[..3].fill(1e3); // forget -> 1
    b[3..6].fill(-1e3); // input -> 0
    let c0 = vec![0.7, -1.3, 2.5];
    let mut h = vec![0.0; 3];
    let mut c = c0.clone();
    for t in 0..500 {
        let x = [t as f64, -(t as f64)];
        let s = layer.step(ps.values(), &x, &h, &c).unwrap();
        h = s.h;
        c = s.c;
    }
    assert_eq!(c, c0);
}

#[test]
fn step_matches_scalar_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut ps = ParamSet::new();
    let layer = LstmLayer::new(&mut ps, "l", 5, 4, &mut rng);
    randomize(&mut ps, &mut rng, 1.0);
    let x = random_vec(&mut rng, 5, 2.0);
    let h = random_vec(&mut rng, 4, 1.0);
    let c = random_vec(&mut rng, 4, 1.0);
    let s = layer.step(ps.values(), &x, &h, &c).unwrap();
    let (h_ref, c_ref) = scalar_step(&ps, &layer, &x, &h, &c);
    for (a, b) in s.h.iter().zip(&h_ref).chain(s.c.iter().zip(&c_ref)) {
        assert!((a - b).abs() < 1e-14, "{a} vs {b}");
    }
    assert!(s.h.iter().all(|v| v.abs() < 1.0));
    assert!(layer.step(ps.values(), &x[..4], &h, &c).is_err());
}

#[test]
fn stack_matches_layer_by_layer_recomputation() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut ps = ParamSet::new();
    let stack = LstmStack::new(&mut ps, "s", 3, &[4, 3], &mut rng);
    randomize(&mut ps, &mut rng, 0.8);
    let xs = random_matrix(&mut rng, 5, 3);
    let out = stack.sequence(ps.values(), &xs).unwrap();

    let (mut h0, mut c0) = (vec![0.0; 4], vec![0.0; 4]);
    let (mut h1, mut c1) = (vec![0.0; 3], vec![0.0; 3]);
    for t in 0..5 {
        (h0, c0) = scalar_step(&ps, &stack.layers[0], xs.row(t), &h0, &c0);
        (h1, c1) = scalar_step(&ps, &stack.layers[1], &h0, &h1, &c1);
        for (a, b) in out.hidden.row(t).iter().zip(&h1) {
            assert!((a - b).abs() < 1e-14);
        }
    }
    assert_eq!(out.final_state.h[0].len(), 4);
    for (a, b) in out.final_state.c[0].iter().zip(&c0) {
        assert!((a - b).abs() < 1e-14);
    }
    for (a, b) in out.final_state.c[1].iter().zip(&c1) {
        assert!((a - b).abs() < 1e-14);
    }
}

#[test]
fn single_step_sequence_is_chained_steps() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut ps = ParamSet::new();
    let stack = LstmStack::new(&mut ps, "s", 2, &[3, 2], &mut rng);
    let xs = random_matrix(&mut rng, 1, 2);
    let out = stack.sequence(ps.values(), &xs).unwrap();
    let a = stack.layers[0]
        .step(ps.values(), xs.row(0), &[0.0; 3], &[0.0; 3])
        .unwrap();
    let b = stack.layers[1].step(ps.values(), &a.h, &[0.0; 2], &[0.0; 2]).unwrap();
    assert_eq!(out.hidden.row(0), b.h.as_slice());
}

#[test]
fn zero_weights_repeated_input_stays_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut ps = ParamSet::new();
    let stack = LstmStack::new(&mut ps, "s", 2, &[3, 2], &mut rng);
    ps.values_mut().iter_mut().for_each(|m| m.fill(0.0));
    let xs = Matrix::filled(6, 2, 0.9);
    let out = stack.sequence(ps.values(), &xs).unwrap();
    assert!(out.hidden.data().iter().all(|&v| v == 0.0));
}

#[test]
fn empty_window_and_bad_width_are_errors() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut ps = ParamSet::new();
    let stack = LstmStack::new(&mut ps, "s", 2, &[3], &mut rng);
    assert!(stack.sequence(ps.values(), &Matrix::zeros(0, 2)).is_err());
    assert!(stack.sequence(ps.values(), &Matrix::zeros(4, 3)).is_err());
}

/// Random linear functional of the top hidden sequence and final cell states.
fn stack_probe_loss(stack: &LstmStack, ps: &mut ParamSet, xs: &Matrix, w_top: &Matrix, w_final_c: &[Vec<f64>]) -> f64 {
    let (p, g) = ps.split_mut();
    let cache = stack.forward(p, xs, None).unwrap();
    let top = cache.top_sequence();
    let fin = cache.final_state();
    let mut loss: f64 = top.data().iter().zip(w_top.data()).map(|(a, b)| a * b).sum();
    for (c, w) in fin.c.iter().zip(w_final_c) {
        loss += c.iter().zip(w).map(|(a, b)| a * b).sum::<f64>();
    }
    let d_final = LstmState {
        h: stack.hidden_sizes().iter().map(|&n| vec![0.0; n]).collect(),
        c: w_final_c.to_vec(),
    };
    stack.backward(p, g, &cache, w_top, Some(&d_final));
    loss
}

#[test]
fn lstm_cell_gradient_check() {
    for seed in [42, 43, 44] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ps = ParamSet::new();
        let stack = LstmStack::new(&mut ps, "cell", 4, &[5], &mut rng);
        randomize(&mut ps, &mut rng, 0.5);
        let xs = random_matrix(&mut rng, 1, 4);
        let w_top = random_matrix(&mut rng, 1, 5);
        let w_c = vec![random_vec(&mut rng, 5, 1.0)];
        let report = grad_check(&mut ps, 1e-5, None, seed, |ps| {
            Ok(stack_probe_loss(&stack, ps, &xs, &w_top, &w_c))
        })
        .unwrap();
        assert!(report.max_relative_error < 1e-4, "seed {seed}: {report:?}");
    }
}

#[test]
fn stacked_lstm_gradient_check() {
    for seed in [1, 2, 3] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ps = ParamSet::new();
        let stack = LstmStack::new(&mut ps, "s", 3, &[4, 3], &mut rng);
        randomize(&mut ps, &mut rng, 0.6);
        let xs = random_matrix(&mut rng, 6, 3);
        let w_top = random_matrix(&mut rng, 6, 3);
        let w_c = vec![random_vec(&mut rng, 4, 1.0), random_vec(&mut rng, 3, 1.0)];
        let report = grad_check(&mut ps, 1e-5, None, seed, |ps| {
            Ok(stack_probe_loss(&stack, ps, &xs, &w_top, &w_c))
        })
        .unwrap();
        assert!(report.max_relative_error < 1e-4, "seed {seed}: {report:?}");
    }
}

#[test]
fn initial_state_gradient_matches_finite_difference() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut ps = ParamSet::new();
    let stack = LstmStack::new(&mut ps, "s", 2, &[3, 2], &mut rng);
    let xs = random_matrix(&mut rng, 4, 2);
    let w_top = random_matrix(&mut rng, 4, 2);
    let init = LstmState {
        h: vec![random_vec(&mut rng, 3, 0.5), random_vec(&mut rng, 2, 0.5)],
        c: vec![random_vec(&mut rng, 3, 0.5), random_vec(&mut rng, 2, 0.5)],
    };
    let loss = |s: &LstmState| {
        let cache = stack.forward(ps.values(), &xs, Some(s)).unwrap();
        cache
            .top_sequence()
            .data()
            .iter()
            .zip(w_top.data())
            .map(|(a, b)| a * b)
            .sum::<f64>()
    };
    let cache = stack.forward(ps.values(), &xs, Some(&init)).unwrap();
    let mut grads = ps.grads().clone();
    let (_, d_init) = stack.backward(ps.values(), &mut grads, &cache, &w_top, None);
    let eps = 1e-6;
    for l in 0..2 {
        for k in 0..init.c[l].len() {
            let mut plus = init.clone();
            plus.c[l][k] += eps;
            let mut minus = init.clone();
            minus.c[l][k] -= eps;
            let numeric = (loss(&plus) - loss(&minus)) / (2.0 * eps);
            assert!((numeric - d_init.c[l][k]).abs() < 1e-7);

            let mut plus = init.clone();
            plus.h[l][k] += eps;
            let mut minus = init.clone();
            minus.h[l][k] -= eps;
            let numeric = (loss(&plus) - loss(&minus)) / (2.0 * eps);
            assert!((numeric - d_init.h[l][k]).abs() < 1e-7);
        }
    }
}

#[test]
fn hidden_outputs_stay_bounded() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut ps = ParamSet::new();
    let stack = LstmStack::new(&mut ps, "s", 3, &[6], &mut rng);
    randomize(&mut ps, &mut rng, 5.0);
    let xs = Matrix::from_vec(40, 3, random_vec(&mut rng, 120, 50.0)).unwrap();
    let out = stack.sequence(ps.values(), &xs).unwrap();
    assert!(out.hidden.data().iter().all(|v| v.abs() <= 1.0));
    assert!(out.final_state.c[0].iter().all(|v| v.is_finite()));
}

#[test]
fn mlp_identity_and_zero_weight_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut ps = ParamSet::new();
    let mlp = Mlp::new(&mut ps, "m", 3, &[], 3, Activation::Relu, &mut rng);
    ps.values_mut()[mlp.layers[0].w]
        .data_mut()
        .copy_from_slice(Matrix::identity(3).data());
    ps.values_mut()[mlp.layers[0].b].fill(0.0);
    let out = mlp.forward(ps.values(), &[1.5, -2.0, 0.25]).unwrap();
    assert_eq!(out.output(), &[1.5, -2.0, 0.25]);

    let mut ps = ParamSet::new();
    let mlp = Mlp::new(&mut ps, "m", 4, &[8, 8], 1, Activation::Relu, &mut rng);
    for d in &mlp.layers {
        ps.values_mut()[d.w].fill(0.0);
    }
    let out_bias = mlp.layers[2].b;
    ps.values_mut()[out_bias].data_mut()[0] = 0.37;
    assert_eq!(mlp.predict(ps.values(), &[9.0, 8.0, 7.0, 6.0]).unwrap(), 0.37);
    assert!(mlp.predict(ps.values(), &[1.0]).is_err());
}

#[test]
fn dense_and_mlp_gradient_check() {
    for seed in [21, 22, 23] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ps = ParamSet::new();
        let mlp = Mlp::new(&mut ps, "m", 5, &[7, 6], 2, Activation::Tanh, &mut rng);
        let x = random_vec(&mut rng, 5, 1.0);
        let w = random_vec(&mut rng, 2, 1.0);
        let report = grad_check(&mut ps, 1e-5, None, seed, |ps| {
            let (p, g) = ps.split_mut();
            let cache = mlp.forward(p, &x)?;
            let loss = cache.output().iter().zip(&w).map(|(a, b)| a * b).sum();
            mlp.backward(p, g, &cache, &w);
            Ok(loss)
        })
        .unwrap();
        assert!(report.max_relative_error < 1e-4, "seed {seed}: {report:?}");
    }
}

#[test]
fn lstm_regressor_gradient_check() {
    for seed in [4, 5, 6] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        let mut model = LstmRegressor::new(3, &[4, 3], seed);
        let xs = random_matrix(&mut rng, 5, 3);
        let report = grad_check(&mut model.params.clone(), 1e-5, None, seed, |ps| {
            model.params = ps.clone();
            let loss = model.accumulate(&xs, 0.3, 1.0)?;
            ps.grads_mut()
                .iter_mut()
                .zip(model.params.grads().iter())
                .for_each(|(dst, src)| dst.data_mut().copy_from_slice(src.data()));
            model.params.zero_grads();
            Ok(loss)
        })
        .unwrap();
        assert!(report.max_relative_error < 1e-4, "seed {seed}: {report:?}");
    }
}

#[test]
fn mlp_learns_a_linear_map() {
    let xs: Vec<Matrix> = (0..100).map(|i| Matrix::filled(1, 1, i as f64 / 100.0)).collect();
    let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x.data()[0]).collect();
    let (train_x, test_x) = xs.split_at(80);
    let (train_y, test_y) = ys.split_at(80);
    let mut model = MlpRegressor::new(1, 1, &[64, 64], 9);
    let cfg = SgdConfig {
        learning_rate: 0.05,
        batch_size: 8,
        epochs: 200,
        seed: 9,
        clip_norm: Some(5.0),
    };
    fit_regressor(&mut model, train_x, train_y, &[], &[], &cfg).unwrap();
    let mse = rmse(&model, test_x, test_y).unwrap().powi(2);
    assert!(mse < 1e-3, "test mse {mse}");
}

#[test]
fn training_is_bit_reproducible() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let xs: Vec<Matrix> = (0..40).map(|_| random_matrix(&mut rng, 4, 2)).collect();
    let ys: Vec<f64> = xs.iter().map(|x| x.data().iter().sum::<f64>() * 0.1).collect();
    let cfg = SgdConfig {
        learning_rate: 0.05,
        batch_size: 8,
        epochs: 3,
        seed: 5,
        clip_norm: Some(5.0),
    };
    let run = || {
        let mut m = LstmRegressor::new(2, &[3], 1);
        let out = fit_regressor(&mut m, &xs[..30], &ys[..30], &xs[30..], &ys[30..], &cfg).unwrap();
        (m.params, out)
    };
    let (a, oa) = run();
    let (b, ob) = run();
    assert_eq!(a, b);
    assert_eq!(oa, ob);
    assert_eq!(oa.train_loss.len(), 3);
    assert!(sigmoid(0.0) == 0.5);
}
