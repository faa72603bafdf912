mod common;

use neuroevo::data::{make_synthetic, SyntheticKind};
use neuroevo::genome::{Chromosome, Shape3};
use neuroevo::network::{
    backward_and_step, conv_forward, forward, gaussian_init, init_weights, ops, pool_forward, train_epochs,
    classification_error, xavier_bound, xavier_init, ConvType, Init, LayerParams, LayerSpec, NetworkSpec, PoolType,
    Tensor, TrainConfig, WeightSet,
};
use neuroevo::rng::stream;
use neuroevo::Error;

#[test]
fn gradients_match_finite_differences() {
    for seed in 0..4 {
        let (err, params) = common::gradient_check(seed);
        assert!(err < 1e-3, "seed {seed}: {params} params, relative error {err:e}");
    }
}

#[test]
fn identity_kernel_preserves_input() {
    let x = Tensor::from_fn(vec![5, 5, 2], |i| i as f64 * 0.5 - 3.0);
    // 1x1 filter mapping channel c to feature map c
    let filters = Tensor::new(vec![1, 1, 2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
    let y = conv_forward(&x, &filters, &[0.0, 0.0], 1, ConvType::Same).unwrap();
    assert_eq!(y.shape(), &[5, 5, 2]);
    assert_eq!(y.data(), x.data());
}

#[test]
fn same_convolution_keeps_size_and_valid_shrinks_it() {
    let x = Tensor::from_fn(vec![7, 7, 1], |i| (i % 5) as f64);
    let filters = Tensor::from_fn(vec![3, 3, 1, 4], |i| i as f64 * 0.01);
    let bias = [0.0; 4];
    let same = conv_forward(&x, &filters, &bias, 1, ConvType::Same).unwrap();
    assert_eq!(same.shape(), &[7, 7, 4]);
    let same2 = conv_forward(&x, &filters, &bias, 2, ConvType::Same).unwrap();
    assert_eq!(same2.shape(), &[4, 4, 4]);
    let valid = conv_forward(&x, &filters, &bias, 2, ConvType::Valid).unwrap();
    assert_eq!(valid.shape(), &[3, 3, 4]);
    let wrong = Tensor::from_fn(vec![3, 3, 2, 4], |_| 0.0);
    assert!(matches!(conv_forward(&x, &wrong, &bias, 1, ConvType::Same), Err(Error::Shape(_))));
}

#[test]
fn average_pooling_of_a_ramp() {
    let x = Tensor::from_fn(vec![4, 4, 1], |i| i as f64);
    let y = pool_forward(&x, 2, 2, PoolType::Avg).unwrap();
    assert_eq!(y.data(), &[2.5, 4.5, 10.5, 12.5]);
}

fn dense_only(inputs: usize, classes: usize) -> NetworkSpec {
    NetworkSpec {
        input: Shape3::new(1, 1, inputs),
        num_classes: classes,
        layers: vec![
            LayerSpec::Flatten {
                input: Shape3::new(1, 1, inputs),
            },
            LayerSpec::Dense {
                inputs,
                outputs: classes,
                relu: false,
                init: Init::Xavier,
            },
        ],
    }
}

#[test]
fn one_hot_input_selects_a_weight_row() {
    let spec = dense_only(3, 2);
    let weights = WeightSet {
        layers: vec![
            None,
            Some(LayerParams {
                weights: vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
                bias: vec![0.5, -0.5],
            }),
        ],
    };
    let x = Tensor::new(vec![1, 1, 1, 3], vec![0.0, 1.0, 0.0]).unwrap();
    let (logits, _) = forward(&spec, &x, &weights).unwrap();
    assert_eq!(logits.data(), &[3.5, 3.5]);
}

#[test]
fn zero_network_gives_uniform_softmax() {
    let c: Chromosome = "conv 3 3 2 1 1 SAME 0.1 0\npool 2 2 2 2 MAX\nfc 4 0.1 0\n".parse().unwrap();
    let spec = c.decode(Shape3::new(8, 8, 1), 5).unwrap();
    let weights = WeightSet::<f64>::zeros(&spec);
    let x = Tensor::from_fn(vec![2, 8, 8, 1], |i| i as f64);
    let (logits, _) = forward(&spec, &x, &weights).unwrap();
    assert!(logits.data().iter().all(|&v| v == 0.0));
    let p = ops::softmax(logits.data(), 5);
    assert!(p.iter().all(|&v| (v - 0.2).abs() < 1e-15));
}

#[test]
fn xavier_draws_stay_inside_the_bound() {
    assert!((xavier_bound(10, 20) - 0.2f64.sqrt()).abs() < 1e-15);
    let c: Chromosome = "conv 3 3 4 1 1 SAME 0.3 0.2\nfc 8 0.3 0.2\n".parse().unwrap();
    let spec = c.decode(Shape3::new(6, 6, 1), 2).unwrap();
    let w: WeightSet<f64> = xavier_init(&spec, &mut stream(1, &[]));
    for (layer, params) in spec.layers.iter().zip(&w.layers) {
        let (Some((fan_in, fan_out)), Some(p)) = (layer.fans(), params) else {
            continue;
        };
        let bound = xavier_bound(fan_in, fan_out);
        assert!(p.weights.iter().all(|v| v.abs() <= bound));
        assert!(p.bias.iter().all(|&b| b == 0.0));
    }
}

#[test]
fn gaussian_draws_follow_the_gene_statistics() {
    let c: Chromosome = "conv 5 5 64 1 1 SAME 0.05 0.3\nfc 10 0.05 0.3\n".parse().unwrap();
    let spec = c.decode(Shape3::new(8, 8, 1), 2).unwrap();
    let w: WeightSet<f64> = gaussian_init(&spec, &mut stream(2, &[])).unwrap();
    let conv = w.layers[0].as_ref().unwrap();
    let n = conv.weights.len() as f64;
    let mean = conv.weights.iter().sum::<f64>() / n;
    let std = (conv.weights.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    assert!((mean - 0.3).abs() < 0.01, "mean {mean}");
    assert!((std - 0.05).abs() < 0.005, "std {std}");
    assert!(conv.bias.iter().all(|&b| b == 0.3));
}

#[test]
fn non_finite_loss_is_reported() {
    let spec = dense_only(2, 2);
    let mut w: WeightSet<f64> = init_weights(&spec, &mut stream(0, &[]));
    let x = Tensor::new(vec![1, 1, 1, 2], vec![f64::NAN, 1.0]).unwrap();
    assert!(matches!(
        backward_and_step(&spec, &x, &[0], &mut w, 0.1),
        Err(Error::NonFiniteLoss(_))
    ));
}

#[test]
fn single_fc_network_separates_blobs() {
    let d = make_synthetic(SyntheticKind::SeparableBlobs, 200, 8, 4).unwrap();
    let spec = NetworkSpec {
        input: d.sample_shape(),
        num_classes: 2,
        layers: vec![
            LayerSpec::Flatten { input: d.sample_shape() },
            LayerSpec::Dense {
                inputs: d.sample_shape().len(),
                outputs: 2,
                relu: false,
                init: Init::Xavier,
            },
        ],
    };
    let mut w = init_weights::<f32, _>(&spec, &mut stream(5, &[]));
    let cfg = TrainConfig {
        learning_rate: 0.5,
        batch_size: 20,
        epochs: 20,
        seed: 0,
    };
    // 20 epochs of 10 batches: 200 SGD steps
    train_epochs(&spec, &mut w, &d, &cfg, 9, 0..cfg.epochs).unwrap();
    assert_eq!(classification_error(&spec, &w, &d).unwrap(), 0.0);
}
