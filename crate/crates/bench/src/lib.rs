//! Shared fixtures for the benchmarks in `benches/`.

use odlae_core::{build_model, Model, ModelDims, ModelSettings, Rng, Variant};

/// MNIST-shaped problem: 784 inputs, 10 classes.
pub fn mnist_dims(hidden_layers: usize, hidden_units: usize) -> ModelDims {
    ModelDims::new(784, hidden_units, 10, hidden_layers, 30).expect("valid dims")
}

pub fn model(variant: Variant, dims: ModelDims) -> Model {
    build_model(variant, dims, &ModelSettings::default(), 1).expect("model builds")
}

/// `n` random examples with features in [0, 1].
pub fn examples(dims: &ModelDims, n: usize) -> Vec<(Vec<f64>, usize)> {
    let mut rng = Rng::with_stream(99, 0);
    (0..n)
        .map(|_| {
            let x = (0..dims.input_dim).map(|_| rng.uniform()).collect();
            (x, rng.below(dims.output_dim))
        })
        .collect()
}
