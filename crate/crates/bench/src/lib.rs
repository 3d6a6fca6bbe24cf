//! Shared fixtures for the benchmarks.

use choicenet::data::{split, synthesize, GroundTruth, DEFAULT_RATIOS};
use choicenet::network::{init_glorot, Architecture, ModelParameters};
use choicenet::{Dataset, SplitIndices};
use ndarray::Array2;

/// A survey-shaped dataset (25 inputs, 5 alternatives) with its 6:2:2 split.
pub fn survey(n: usize) -> (Dataset, SplitIndices) {
    let data = synthesize(&GroundTruth::survey(), n, 1).expect("preset is valid");
    let splits = split(n, DEFAULT_RATIOS, 1).expect("n is large enough");
    (data, splits)
}

/// Glorot-initialized parameters for a 25-input, 5-alternative network.
pub fn network(depth: usize, width: usize) -> ModelParameters {
    let arch = Architecture::new(25, 5, depth, width).expect("valid architecture");
    init_glorot(arch, 7)
}

/// The first `rows` feature rows of `data`.
pub fn batch(data: &Dataset, rows: usize) -> Array2<f64> {
    data.features().slice(ndarray::s![..rows, ..]).to_owned()
}
