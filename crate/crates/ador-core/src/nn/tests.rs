use super::*;
use crate::data::Dataset;
use crate::dist::DistSpec;

fn random_input(rows: usize, cols: usize, rng: &mut RngState) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| 2.0 * rng.next_f64() - 1.0)
}

/// Scalar test loss: L = sum(output .* probe) for a fixed random probe,
/// so dL/d(output) = probe.
fn probe_loss(params: &MlpParams, input: &Matrix, probe: &Matrix) -> f64 {
    let out = params.predict(input).unwrap();
    out.data()
        .iter()
        .zip(probe.data())
        .map(|(o, p)| o * p)
        .sum()
}

/// Relative error with a floor at the finite-difference noise scale:
/// below the floor the comparison is effectively absolute at 1e-9.
fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

fn check_gradients(params: &MlpParams, input: &Matrix, rng: &mut RngState) -> f64 {
    let probe = random_input(input.rows(), params.out_width(), rng);
    let (out, cache) = params.forward(input).unwrap();
    assert_eq!(out.cols(), params.out_width());
    let (grads, input_grad) = params.backward(&cache, &probe).unwrap();

    let h = 1e-5;
    let mut worst = 0.0f64;

    // parameter gradients vs central differences
    for l in 0..params.layers.len() {
        let (rows, cols) = (
            params.layers[l].weight.rows(),
            params.layers[l].weight.cols(),
        );
        for r in 0..rows {
            for c in 0..cols {
                let mut plus = params.clone();
                let mut minus = params.clone();
                plus.layers[l].weight.set(r, c, plus.layers[l].weight.get(r, c) + h);
                minus.layers[l].weight.set(r, c, minus.layers[l].weight.get(r, c) - h);
                let fd = (probe_loss(&plus, input, &probe) - probe_loss(&minus, input, &probe))
                    / (2.0 * h);
                worst = worst.max(rel_err(grads.layers[l].0.get(r, c), fd));
            }
        }
        if let Some(bias) = &params.layers[l].bias {
            for i in 0..bias.len() {
                let mut plus = params.clone();
                let mut minus = params.clone();
                plus.layers[l].bias.as_mut().unwrap()[i] += h;
                minus.layers[l].bias.as_mut().unwrap()[i] -= h;
                let fd = (probe_loss(&plus, input, &probe) - probe_loss(&minus, input, &probe))
                    / (2.0 * h);
                worst = worst.max(rel_err(grads.layers[l].1.as_ref().unwrap()[i], fd));
            }
        }
    }

    // input gradients vs central differences
    for r in 0..input.rows() {
        for c in 0..input.cols() {
            let mut plus = input.clone();
            let mut minus = input.clone();
            plus.set(r, c, plus.get(r, c) + h);
            minus.set(r, c, minus.get(r, c) - h);
            let fd =
                (probe_loss(params, &plus, &probe) - probe_loss(params, &minus, &probe)) / (2.0 * h);
            worst = worst.max(rel_err(input_grad.get(r, c), fd));
        }
    }
    worst
}

fn random_specs(rng: &mut RngState) -> Vec<LayerSpec> {
    let depth = 1 + rng.next_index(4);
    let activations = [
        ActivationKind::Tanh,
        ActivationKind::Sigmoid,
        ActivationKind::LeakyRelu { slope: 0.2 },
        ActivationKind::Identity,
    ];
    let mut widths = vec![1 + rng.next_index(5)];
    for _ in 0..depth {
        widths.push(1 + rng.next_index(5));
    }
    (0..depth)
        .map(|i| {
            let mut spec = LayerSpec::new(
                widths[i],
                widths[i + 1],
                activations[rng.next_index(activations.len())],
            );
            if rng.next_f64() < 0.3 {
                spec = spec.without_bias();
            }
            spec
        })
        .collect()
}

#[test]
fn backprop_matches_finite_differences() {
    let mut rng = RngState::from_seed(101);
    for _ in 0..12 {
        let specs = random_specs(&mut rng);
        let params = xavier_init(&specs, &mut rng).unwrap();
        let input = random_input(3, specs[0].in_width, &mut rng);
        let worst = check_gradients(&params, &input, &mut rng);
        assert!(worst < 1e-6, "max relative error {worst} for {specs:?}");
    }
}

#[test]
fn identity_layer_is_identity_map() {
    let params = MlpParams {
        layers: vec![Layer {
            weight: Matrix::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap(),
            bias: None,
            activation: ActivationKind::Identity,
        }],
    };
    let input = Matrix::from_vec(3, 2, vec![1.0, 2.0, -0.5, 0.25, 9.0, -3.0]).unwrap();
    let (out, _) = params.forward(&input).unwrap();
    assert_eq!(out, input);
}

#[test]
fn tanh_of_zero_weights_is_zero() {
    let params = MlpParams {
        layers: vec![Layer {
            weight: Matrix::zeros(4, 3),
            bias: Some(vec![0.0; 4]),
            activation: ActivationKind::Tanh,
        }],
    };
    let input = Matrix::from_fn(5, 3, |r, c| (r + c) as f64);
    let (out, _) = params.forward(&input).unwrap();
    assert!(out.data().iter().all(|&v| v == 0.0));
}

#[test]
fn two_layer_net_matches_hand_composition() {
    let mut rng = RngState::from_seed(7);
    let specs = vec![
        LayerSpec::new(2, 3, ActivationKind::Tanh),
        LayerSpec::new(3, 1, ActivationKind::Sigmoid),
    ];
    let params = xavier_init(&specs, &mut rng).unwrap();
    let input = random_input(3, 2, &mut rng);
    let (out, _) = params.forward(&input).unwrap();

    for r in 0..3 {
        // hand-composed affine + activation chain
        let x = input.row(r);
        let mut hidden = [0.0f64; 3];
        for (i, h) in hidden.iter_mut().enumerate() {
            let mut acc = params.layers[0].bias.as_ref().unwrap()[i];
            for (j, xj) in x.iter().enumerate() {
                acc += params.layers[0].weight.get(i, j) * xj;
            }
            *h = acc.tanh();
        }
        let mut acc = params.layers[1].bias.as_ref().unwrap()[0];
        for (j, h) in hidden.iter().enumerate() {
            acc += params.layers[1].weight.get(0, j) * h;
        }
        let expected = 1.0 / (1.0 + (-acc).exp());
        assert!((out.get(r, 0) - expected).abs() < 1e-12);
    }
}

#[test]
fn zero_output_grad_gives_zero_gradients() {
    let mut rng = RngState::from_seed(8);
    let specs = regressor_specs(2, 4, 0.2, false);
    let params = xavier_init(&specs, &mut rng).unwrap();
    let input = random_input(4, 2, &mut rng);
    let (_, cache) = params.forward(&input).unwrap();
    let (grads, input_grad) = params
        .backward(&cache, &Matrix::zeros(4, 1))
        .unwrap();
    assert!(grads.layers.iter().all(|(w, b)| {
        w.data().iter().all(|&v| v == 0.0)
            && b.as_ref().map_or(true, |b| b.iter().all(|&v| v == 0.0))
    }));
    assert!(input_grad.data().iter().all(|&v| v == 0.0));
}

#[test]
fn input_grad_of_identity_layer_is_grad_times_weight() {
    let weight = Matrix::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
    let params = MlpParams {
        layers: vec![Layer {
            weight: weight.clone(),
            bias: None,
            activation: ActivationKind::Identity,
        }],
    };
    let input = Matrix::from_fn(2, 3, |r, c| (r * 3 + c) as f64);
    let (_, cache) = params.forward(&input).unwrap();
    let output_grad = Matrix::from_vec(2, 2, vec![1.0, 0.5, -1.0, 2.0]).unwrap();
    let (_, input_grad) = params.backward(&cache, &output_grad).unwrap();
    let expected = output_grad.matmul(&weight);
    assert_eq!(input_grad, expected);
}

#[test]
fn xavier_respects_glorot_bound() {
    let mut rng = RngState::from_seed(5);
    let specs = vec![LayerSpec::new(100, 100, ActivationKind::Tanh)];
    let params = xavier_init(&specs, &mut rng).unwrap();
    let bound = (6.0f64 / 200.0).sqrt();
    assert!(params.layers[0]
        .weight
        .data()
        .iter()
        .all(|w| w.abs() <= bound));
    assert!(params.layers[0].bias.as_ref().unwrap().iter().all(|&b| b == 0.0));

    let again = xavier_init(&specs, &mut RngState::from_seed(5)).unwrap();
    assert_eq!(params, again);
}

#[test]
fn leaky_relu_is_zero_at_zero_for_any_slope() {
    for slope in [0.01, 0.2, 0.5, 0.99] {
        assert_eq!(ActivationKind::LeakyRelu { slope }.apply(0.0), 0.0);
        // tie-break at 0 takes the slope branch
        assert_eq!(ActivationKind::LeakyRelu { slope }.derivative(0.0), slope);
    }
}

#[test]
fn forward_is_deterministic() {
    let mut rng = RngState::from_seed(21);
    let params = xavier_init(&regressor_specs(2, 8, 0.2, true), &mut rng).unwrap();
    let input = random_input(6, 2, &mut rng);
    let (a, _) = params.forward(&input).unwrap();
    let (b, _) = params.forward(&input).unwrap();
    assert_eq!(a, b);
}

#[test]
fn adam_zero_gradient_leaves_parameters_unchanged() {
    let mut rng = RngState::from_seed(30);
    let mut params = xavier_init(&regressor_specs(1, 4, 0.2, true), &mut rng).unwrap();
    let before = params.clone();
    let grads = MlpGrads::zeros_like(&params);
    let mut state = AdamState::new(&params, AdamConfig::default());
    adam_step(&mut params, &grads, &mut state, Direction::Descend).unwrap();
    assert_eq!(params, before);
}

#[test]
fn adam_constant_gradient_step_approaches_lr() {
    // With a constant gradient the bias-corrected ratio m/sqrt(v) tends to 1,
    // so the per-step move tends to lr.
    let specs = vec![LayerSpec::new(1, 1, ActivationKind::Identity).without_bias()];
    let mut params = xavier_init(&specs, &mut RngState::from_seed(1)).unwrap();
    let mut state = AdamState::new(&params, AdamConfig::default());
    let grads = MlpGrads {
        layers: vec![(Matrix::from_vec(1, 1, vec![0.37]).unwrap(), None)],
    };
    let mut last = params.layers[0].weight.get(0, 0);
    let mut step = 0.0;
    for _ in 0..500 {
        adam_step(&mut params, &grads, &mut state, Direction::Descend).unwrap();
        let now = params.layers[0].weight.get(0, 0);
        step = (now - last).abs();
        last = now;
    }
    let lr = AdamConfig::default().lr;
    assert!((step - lr).abs() < 1e-6, "step {step} vs lr {lr}");
}

#[test]
fn adam_ascend_descend_are_mirror_images() {
    let mut rng = RngState::from_seed(31);
    let params = xavier_init(&regressor_specs(2, 4, 0.2, true), &mut rng).unwrap();
    let grads = {
        let input = random_input(3, 2, &mut rng);
        let (_, cache) = params.forward(&input).unwrap();
        let probe = random_input(3, 1, &mut rng);
        params.backward(&cache, &probe).unwrap().0
    };

    let mut up = params.clone();
    let mut down = params.clone();
    let mut s_up = AdamState::new(&up, AdamConfig::default());
    let mut s_down = AdamState::new(&down, AdamConfig::default());
    adam_step(&mut up, &grads, &mut s_up, Direction::Ascend).unwrap();
    adam_step(&mut down, &grads, &mut s_down, Direction::Descend).unwrap();

    for l in 0..params.layers.len() {
        let base = &params.layers[l].weight;
        let wu = &up.layers[l].weight;
        let wd = &down.layers[l].weight;
        for i in 0..base.data().len() {
            let du = wu.data()[i] - base.data()[i];
            let dd = wd.data()[i] - base.data()[i];
            assert!((du + dd).abs() < 1e-15, "deltas not negated: {du} vs {dd}");
        }
    }
}

#[test]
fn adam_rejects_non_finite_gradients() {
    let specs = vec![LayerSpec::new(1, 1, ActivationKind::Identity)];
    let mut params = xavier_init(&specs, &mut RngState::from_seed(2)).unwrap();
    let mut state = AdamState::new(&params, AdamConfig::default());
    let grads = MlpGrads {
        layers: vec![(
            Matrix::from_vec(1, 1, vec![f64::NAN]).unwrap(),
            Some(vec![0.0]),
        )],
    };
    assert!(adam_step(&mut params, &grads, &mut state, Direction::Descend).is_err());
}

#[test]
fn params_json_round_trip() {
    let mut rng = RngState::from_seed(77);
    let params = xavier_init(&regressor_specs(3, 8, 0.2, false), &mut rng).unwrap();
    let json = params.to_json().unwrap();
    let back = MlpParams::from_json(&json).unwrap();
    assert_eq!(params, back);
}

#[test]
fn spec_validation_catches_broken_chains() {
    let specs = vec![
        LayerSpec::new(2, 3, ActivationKind::Tanh),
        LayerSpec::new(4, 1, ActivationKind::Identity),
    ];
    assert!(validate_specs(&specs).is_err());
    assert!(validate_specs(&[]).is_err());
    let bad_slope = vec![LayerSpec::new(
        2,
        2,
        ActivationKind::LeakyRelu { slope: 1.5 },
    )];
    assert!(validate_specs(&bad_slope).is_err());
}

#[test]
fn forward_rejects_wrong_input_width() {
    let mut rng = RngState::from_seed(3);
    let params = xavier_init(&regressor_specs(3, 4, 0.2, true), &mut rng).unwrap();
    assert!(params.forward(&Matrix::zeros(2, 2)).is_err());
}

#[test]
fn baseline_interpolates_noiseless_linear_data() {
    let x: Vec<f64> = (0..200).map(|i| -1.0 + 2.0 * i as f64 / 199.0).collect();
    let z: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
    let data = Dataset::from_xy(&x, &z, "linear").unwrap();
    let cfg = BaselineConfig {
        iterations: 3000,
        ..BaselineConfig::default()
    };
    let model = fit_mse_baseline(&data, &cfg, &mut RngState::from_seed(11)).unwrap();
    let pred = model.predict(&data.u).unwrap();
    let mse: f64 = pred
        .iter()
        .zip(&z)
        .map(|(p, z)| (p - z).powi(2))
        .sum::<f64>()
        / z.len() as f64;
    assert!(mse < 1e-3, "mse {mse}");
}

#[test]
fn baseline_fits_constant_response() {
    let x: Vec<f64> = (0..100).map(|i| i as f64 / 50.0 - 1.0).collect();
    let z = vec![4.25; 100];
    let data = Dataset::from_xy(&x, &z, "const").unwrap();
    let cfg = BaselineConfig {
        iterations: 500,
        ..BaselineConfig::default()
    };
    let model = fit_mse_baseline(&data, &cfg, &mut RngState::from_seed(12)).unwrap();
    let pred = model.predict(&data.u).unwrap();
    for p in pred {
        assert!((p - 4.25).abs() < 0.05, "{p}");
    }
}

#[test]
fn baseline_tracks_noise_variance_on_square_toy() {
    // Y = X^2 + Exp(1): an MSE fit cannot do better than the noise variance 1.
    let spec = crate::data::ToySpec {
        f: crate::data::ToyFn::Square,
        noise: DistSpec::Exponential { rate: 1.0 },
        n: 300,
    };
    let (data, _) = crate::data::generate_toy(&spec, &mut RngState::from_seed(40)).unwrap();
    let model =
        fit_mse_baseline(&data, &BaselineConfig::default(), &mut RngState::from_seed(41)).unwrap();
    let pred = model.predict(&data.u).unwrap();
    let mse: f64 = pred
        .iter()
        .zip(&data.z)
        .map(|(p, z)| (p - z).powi(2))
        .sum::<f64>()
        / data.len() as f64;
    assert!(mse > 0.3 && mse < 1.6, "mse {mse} out of the noise-variance ballpark");
}
