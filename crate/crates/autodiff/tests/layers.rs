use spectrans_autodiff::gradcheck::{check_gradients, seeded_tensor, seeded_tensor_away_from_zero, weighted_sum};
use spectrans_autodiff::{Graph, ParamSet, Tensor};

const EPS: f64 = 1e-4;
const TOL: f64 = 1e-3;

fn assert_ok(name: &str, inputs: &[Tensor], f: impl Fn(&mut Graph, &[spectrans_autodiff::Var]) -> spectrans_autodiff::Result<spectrans_autodiff::Var>) {
    let r = check_gradients(inputs, EPS, f).unwrap();
    assert!(r.max_rel_error < TOL, "{name}: max rel error {} (abs {})", r.max_rel_error, r.max_abs_error);
}

#[test]
fn conv2d_gradients() {
    for (i, &(n, cin, h, cout, k, s, p)) in [(1, 1, 5, 2, 3, 1, 1), (2, 2, 6, 3, 4, 2, 1), (1, 3, 8, 2, 2, 2, 0)].iter().enumerate() {
        let x = seeded_tensor(&[n, cin, h, h], 10 + i as u64, -1.0, 1.0);
        let w = seeded_tensor(&[cout, cin, k, k], 20 + i as u64, -0.5, 0.5);
        let b = seeded_tensor(&[cout], 30 + i as u64, -0.5, 0.5);
        assert_ok("conv2d", &[x, w, b], |g, v| {
            let y = g.conv2d(v[0], v[1], Some(v[2]), s, p)?;
            weighted_sum(g, y, 99)
        });
    }
}

#[test]
fn conv_transpose2d_gradients() {
    for (i, &(n, cin, h, cout, k, s, p)) in [(1, 1, 3, 2, 4, 2, 1), (2, 2, 4, 1, 3, 1, 1), (1, 3, 2, 2, 8, 2, 3)].iter().enumerate() {
        let x = seeded_tensor(&[n, cin, h, h], 40 + i as u64, -1.0, 1.0);
        let w = seeded_tensor(&[cin, cout, k, k], 50 + i as u64, -0.5, 0.5);
        let b = seeded_tensor(&[cout], 60 + i as u64, -0.5, 0.5);
        assert_ok("conv_transpose2d", &[x, w, b], |g, v| {
            let y = g.conv_transpose2d(v[0], v[1], Some(v[2]), s, p)?;
            weighted_sum(g, y, 98)
        });
    }
}

#[test]
fn causal_conv1d_gradients() {
    for (i, &(n, cin, t, cout, k, d)) in [(1, 1, 9, 2, 2, 1), (2, 3, 12, 2, 2, 4), (1, 2, 10, 3, 3, 2), (1, 4, 7, 3, 1, 1)].iter().enumerate() {
        let x = seeded_tensor(&[n, cin, t], 70 + i as u64, -1.0, 1.0);
        let w = seeded_tensor(&[cout, cin, k], 80 + i as u64, -0.5, 0.5);
        let b = seeded_tensor(&[cout], 90 + i as u64, -0.5, 0.5);
        assert_ok("causal_conv1d", &[x, w, b], |g, v| {
            let y = g.causal_conv1d(v[0], v[1], Some(v[2]), d)?;
            weighted_sum(g, y, 97)
        });
    }
}

#[test]
fn instance_norm_gradients() {
    for (i, shape) in [[1, 1, 3, 3], [2, 3, 4, 4], [1, 2, 2, 5]].iter().enumerate() {
        let x = seeded_tensor(shape, 100 + i as u64, -2.0, 2.0);
        assert_ok("instance_norm", &[x], |g, v| {
            let y = g.instance_norm(v[0], 1e-5)?;
            weighted_sum(g, y, 96)
        });
    }
}

#[test]
fn pointwise_activation_gradients() {
    for (i, shape) in [vec![7], vec![2, 3, 4], vec![1, 2, 3, 3]].iter().enumerate() {
        let x = seeded_tensor_away_from_zero(shape, 110 + i as u64, 2.0, 1e-2);
        assert_ok("leaky_relu", &[x.clone()], |g, v| {
            let y = g.leaky_relu(v[0], 0.2);
            weighted_sum(g, y, 1)
        });
        assert_ok("relu", &[x.clone()], |g, v| {
            let y = g.relu(v[0]);
            weighted_sum(g, y, 2)
        });
        assert_ok("tanh", &[x.clone()], |g, v| {
            let y = g.tanh(v[0]);
            weighted_sum(g, y, 3)
        });
        assert_ok("sigmoid", &[x.clone()], |g, v| {
            let y = g.sigmoid(v[0]);
            weighted_sum(g, y, 4)
        });
        assert_ok("scale", &[x], |g, v| {
            let y = g.scale(v[0], -1.7);
            weighted_sum(g, y, 5)
        });
    }
}

#[test]
fn gated_activation_gradients() {
    for (i, shape) in [[1, 2, 5], [2, 4, 3], [1, 6, 2]].iter().enumerate() {
        let x = seeded_tensor(shape, 120 + i as u64, -2.0, 2.0);
        assert_ok("gated_activation", &[x], |g, v| {
            let y = g.gated_activation(v[0])?;
            weighted_sum(g, y, 6)
        });
    }
}

#[test]
fn concat_gradients() {
    for (i, &axis) in [0usize, 1, 2].iter().enumerate() {
        let mut sa = vec![2, 3, 4];
        let mut sb = vec![2, 3, 4];
        sa[axis] = 1;
        sb[axis] = 2;
        let a = seeded_tensor(&sa, 130 + i as u64, -1.0, 1.0);
        let b = seeded_tensor(&sb, 140 + i as u64, -1.0, 1.0);
        assert_ok("concat", &[a, b], |g, v| {
            let y = g.concat(&[v[0], v[1]], axis)?;
            weighted_sum(g, y, 7)
        });
    }
}

#[test]
fn dropout_gradients() {
    use rand::SeedableRng;
    for (i, shape) in [vec![10], vec![2, 3, 4], vec![1, 1, 5, 5]].iter().enumerate() {
        let x = seeded_tensor(shape, 150 + i as u64, -1.0, 1.0);
        assert_ok("dropout", &[x], |g, v| {
            // Fresh identically-seeded stream per evaluation keeps the mask fixed.
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
            let y = g.dropout(v[0], 0.3, &mut rng)?;
            weighted_sum(g, y, 8)
        });
    }
}

#[test]
fn loss_gradients() {
    for (i, shape) in [vec![6], vec![2, 3, 4], vec![1, 2, 3, 3]].iter().enumerate() {
        let a = seeded_tensor(shape, 160 + i as u64, -1.0, 1.0);
        // keep a - b away from the L1 kink
        let d = seeded_tensor_away_from_zero(shape, 170 + i as u64, 0.5, 0.05);
        let b = Tensor::new(shape, a.values().iter().zip(d.values()).map(|(x, y)| x + y).collect()).unwrap();
        assert_ok("l1_loss", &[a.clone(), b.clone()], |g, v| g.l1_loss(v[0], v[1]));
        assert_ok("mse_loss", &[a, b], |g, v| g.mse_loss(v[0], v[1]));
    }
    for (i, &(n, k, t)) in [(1, 5, 1), (2, 4, 3), (1, 256, 2)].iter().enumerate() {
        let logits = seeded_tensor(&[n, k, t], 180 + i as u64, -3.0, 3.0);
        let targets: Vec<usize> = (0..n * t).map(|j| (j * 7 + i) % k).collect();
        assert_ok("softmax_cross_entropy", &[logits], |g, v| g.softmax_cross_entropy(v[0], &targets));
    }
}

#[test]
fn identity_kernel_conv_is_identity() {
    let x = seeded_tensor(&[1, 1, 6, 7], 1, -1.0, 1.0);
    let mut w = Tensor::zeros(&[1, 1, 3, 3]);
    w.values_mut()[4] = 1.0;
    let mut g = Graph::new();
    let xv = g.constant(x.clone());
    let wv = g.constant(w);
    let y = g.conv2d(xv, wv, None, 1, 1).unwrap();
    assert_eq!(g.value(y).values(), x.values());
}

#[test]
fn transposed_conv_doubles_resolution() {
    for k in [4, 8] {
        let mut g = Graph::new();
        let x = g.constant(Tensor::zeros(&[1, 3, 5, 5]));
        let w = g.constant(Tensor::zeros(&[3, 2, k, k]));
        let y = g.conv_transpose2d(x, w, None, 2, k / 2 - 1).unwrap();
        assert_eq!(g.shape(y), &[1, 2, 10, 10]);
        let w2 = g_w(&mut g, 2, k);
        let z = g.conv2d(y, w2, None, 2, k / 2 - 1).unwrap();
        assert_eq!(g.shape(z), &[1, 4, 5, 5]);
    }
}

fn g_w(g: &mut Graph, cin: usize, k: usize) -> spectrans_autodiff::Var {
    g.constant(Tensor::zeros(&[4, cin, k, k]))
}

#[test]
fn shape_errors_name_the_shapes() {
    let mut g = Graph::new();
    let x = g.constant(Tensor::zeros(&[1, 2, 4, 4]));
    let w = g.constant(Tensor::zeros(&[3, 5, 3, 3]));
    let err = g.conv2d(x, w, None, 1, 1).unwrap_err().to_string();
    assert!(err.contains("[1, 2, 4, 4]") && err.contains("[3, 5, 3, 3]"), "{err}");
    let logits = g.constant(Tensor::zeros(&[1, 4, 2]));
    assert!(g.softmax_cross_entropy(logits, &[0, 4]).is_err());
}

#[test]
fn backward_basics() {
    // y = 2x
    let mut g = Graph::new();
    let x = g.input(Tensor::scalar(1.5).with_requires_grad(true));
    let y = g.scale(x, 2.0);
    let grads = g.backward(y, &mut []).unwrap();
    assert_eq!(grads.get(x).unwrap(), &[2.0]);

    // z = x + x accumulates
    let mut g = Graph::new();
    let x = g.input(Tensor::scalar(0.3).with_requires_grad(true));
    let z = g.add(x, x).unwrap();
    let grads = g.backward(z, &mut []).unwrap();
    assert_eq!(grads.get(x).unwrap(), &[2.0]);

    // non-scalar loss
    let mut g = Graph::new();
    let x = g.input(Tensor::zeros(&[2]).with_requires_grad(true));
    assert!(g.backward(x, &mut []).is_err());
}

#[test]
fn uniform_logits_give_log_of_class_count() {
    let mut g = Graph::new();
    let l = g.constant(Tensor::zeros(&[1, 256, 3]));
    let loss = g.softmax_cross_entropy(l, &[0, 17, 255]).unwrap();
    assert!((g.value(loss).item() - 256f64.ln()).abs() < 1e-12);
}

#[test]
fn equal_inputs_give_zero_losses() {
    let x = seeded_tensor(&[2, 3], 3, -1.0, 1.0);
    let mut g = Graph::new();
    let a = g.input(x.clone().with_requires_grad(true));
    let b = g.constant(x);
    let l1 = g.l1_loss(a, b).unwrap();
    let l2 = g.mse_loss(a, b).unwrap();
    assert_eq!(g.value(l1).item(), 0.0);
    assert_eq!(g.value(l2).item(), 0.0);
    let grads = g.backward(l1, &mut []).unwrap();
    assert!(grads.get(a).unwrap().iter().all(|&v| v == 0.0));
}

#[test]
fn random_chain_matches_finite_differences() {
    let x = seeded_tensor(&[1, 2, 6], 200, -1.0, 1.0);
    let w = seeded_tensor(&[4, 2, 2], 201, -0.7, 0.7);
    let w2 = seeded_tensor(&[2, 2, 1], 202, -0.7, 0.7);
    assert_ok("chain", &[x, w, w2], |g, v| {
        let a = g.causal_conv1d(v[0], v[1], None, 2)?;
        let b = g.gated_activation(a)?;
        let c = g.causal_conv1d(b, v[2], None, 1)?;
        let d = g.tanh(c);
        let e = g.mul(d, d)?;
        weighted_sum(g, e, 9)
    });
}

#[test]
fn parameter_gradients_accumulate_into_their_set() {
    let mut p = ParamSet::new();
    p.add_uniform("w", &[2, 1, 2], 2, 3);
    let mut other = ParamSet::new();
    other.add_uniform("v", &[1], 1, 4);
    let x = seeded_tensor(&[1, 1, 5], 5, -1.0, 1.0);
    for _ in 0..2 {
        let mut g = Graph::new();
        let xv = g.constant(x.clone());
        let w = g.param(&p, 0);
        let _unused = g.param(&other, 0);
        let y = g.causal_conv1d(xv, w, None, 1).unwrap();
        let s = g.sum(y);
        g.backward(s, &mut [&mut p]).unwrap();
    }
    // d(sum)/dw[c, 0, k] = sum over t of the shifted input, counted twice.
    let xs = x.values();
    let expected_k1: f64 = xs.iter().sum::<f64>() * 2.0;
    let expected_k0: f64 = xs[..4].iter().sum::<f64>() * 2.0;
    let grad = p.tensor(0).grad().unwrap();
    assert!((grad[1] - expected_k1).abs() < 1e-12 && (grad[0] - expected_k0).abs() < 1e-12);
    assert!(other.tensor(0).grad().is_none());
}

#[test]
fn forward_backward_is_deterministic() {
    let run = || {
        let mut p = ParamSet::new();
        p.add_uniform("w", &[3, 2, 4, 4], 32, 11);
        let x = seeded_tensor(&[1, 2, 8, 8], 12, -1.0, 1.0);
        let mut g = Graph::new();
        let xv = g.constant(x);
        let w = g.param(&p, 0);
        let y = g.conv2d(xv, w, None, 2, 1).unwrap();
        let y = g.instance_norm(y, 1e-5).unwrap();
        let l = weighted_sum(&mut g, y, 13).unwrap();
        let v = g.value(l).item();
        g.backward(l, &mut [&mut p]).unwrap();
        (v.to_bits(), p.tensor(0).grad().unwrap().iter().map(|v| v.to_bits()).collect::<Vec<_>>())
    };
    assert_eq!(run(), run());
}
