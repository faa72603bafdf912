#![allow(dead_code)]

use neuroevo::genome::{random_chromosome, Chromosome, GeneBounds, Interval, Shape3};
use neuroevo::network::{init_weights, loss_and_gradients, NetworkSpec, Tensor, WeightSet};
use neuroevo::rng::stream;
use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Small search space for networks of a few hundred weights.
pub fn tiny_bounds() -> GeneBounds {
    GeneBounds {
        filter_size: Interval(1, 3),
        kernel_size: Interval(1, 2),
        feature_maps: Interval(1, 3),
        neurons: Interval(1, 6),
        mean_range: Interval(-0.1, 0.1),
        std_range: Interval(0.2, 0.6),
        max_conv_pool_layers: 3,
        max_fc_layers: 2,
    }
}

/// A random decodable network with at most `max_params` parameters.
pub fn random_small_network(seed: u64, input: Shape3, classes: usize, max_params: u64) -> (Chromosome, NetworkSpec) {
    let mut rng = stream(seed, &[101]);
    loop {
        let c = random_chromosome(&tiny_bounds(), &mut rng);
        if let Ok(spec) = c.decode(input, classes) {
            if spec.param_count() <= max_params {
                return (c, spec);
            }
        }
    }
}

/// Largest relative difference between analytic gradients and central
/// differences of the loss, over every parameter.
pub fn gradient_check(seed: u64) -> (f64, u64) {
    let input = Shape3::new(6, 6, 2);
    let classes = 3;
    let (_, spec) = random_small_network(seed, input, classes, 500);
    let mut rng = stream(seed, &[202]);
    let weights: WeightSet<f64> = init_weights(&spec, &mut rng);
    let batch = 3;
    let normal = Normal::new(0.0, 1.0).unwrap();
    let x = Tensor::from_fn(vec![batch, 6, 6, 2], |_| normal.sample(&mut rng));
    let labels: Vec<usize> = (0..batch).map(|_| rng.random_range(0..classes)).collect();

    let (_, grads) = loss_and_gradients(&spec, &x, &labels, &weights).unwrap();
    let analytic = grads.flat();
    let eps = 1e-5;
    let mut worst: f64 = 0.0;
    for (i, &a) in analytic.iter().enumerate() {
        let loss_at = |delta: f64| {
            let mut w = weights.clone();
            *w.flat_mut()[i] += delta;
            loss_and_gradients(&spec, &x, &labels, &w).unwrap().0
        };
        let numeric = (loss_at(eps) - loss_at(-eps)) / (2.0 * eps);
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    (worst, spec.param_count())
}
