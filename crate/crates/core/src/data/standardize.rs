use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::Dataset;

/// Per-feature affine map `(x - mean) / std` fitted on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl Standardizer {
    /// The identity transform, used when standardization is disabled.
    pub fn identity(n_features: usize) -> Self {
        Self {
            means: vec![0.0; n_features],
            stds: vec![1.0; n_features],
        }
    }

    pub fn n_features(&self) -> usize {
        self.means.len()
    }

    pub fn transform_row(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.means.iter().zip(&self.stds))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn inverse_row(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.means.iter().zip(&self.stds))
            .map(|(v, (m, s))| v * s + m)
            .collect()
    }

    pub fn transform(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut out = x.to_owned();
        for mut row in out.rows_mut() {
            for ((v, m), s) in row.iter_mut().zip(&self.means).zip(&self.stds) {
                *v = (*v - m) / s;
            }
        }
        out
    }
}

/// Fits means and population standard deviations over `train_idx`.
///
/// Columns whose spread is zero (relative to their magnitude) get std 1.
pub fn fit_standardizer(data: &Dataset, train_idx: &[usize]) -> Standardizer {
    assert!(!train_idx.is_empty(), "standardizer needs training rows");
    let means = data.feature_means(train_idx);
    let n = train_idx.len() as f64;
    let mut sq = vec![0.0; data.n_features()];
    for &i in train_idx {
        for ((acc, v), m) in sq.iter_mut().zip(data.row(i)).zip(&means) {
            *acc += (v - m) * (v - m);
        }
    }
    let stds = sq
        .iter()
        .zip(&means)
        .map(|(s, m)| {
            let sd = (s / n).sqrt();
            if sd <= 1e-12 * m.abs().max(1.0) {
                1.0
            } else {
                sd
            }
        })
        .collect();
    Standardizer { means, stds }
}
