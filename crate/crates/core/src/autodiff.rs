//! Reverse-mode differentiation of the utility network.
//!
//! Two kinds of derivatives are needed: parameter gradients of the penalized
//! cross-entropy (for training) and input Jacobians of the choice
//! probabilities (for derivatives, elasticities and values of time). Both are
//! computed by backpropagating through the stored forward trace.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Standardizer;
use crate::network::{forward, softmax_rows, Dense, DropoutMasks, ModelParameters, NetworkError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BatchError {
    #[error("empty batch")]
    Empty,
    #[error("{rows} feature rows but {choices} choices")]
    LengthMismatch { rows: usize, choices: usize },
    #[error("choice {choice} out of range for {n_alts} alternatives")]
    ChoiceOutOfRange { choice: usize, n_alts: usize },
    #[error(transparent)]
    Network(#[from] NetworkError),
}

/// Standardized features paired with observed choices.
#[derive(Debug, Clone, Copy)]
pub struct Batch<'a> {
    features: ArrayView2<'a, f64>,
    choices: &'a [usize],
}

impl<'a> Batch<'a> {
    pub fn new(features: ArrayView2<'a, f64>, choices: &'a [usize], n_alts: usize) -> Result<Self, BatchError> {
        if choices.is_empty() {
            return Err(BatchError::Empty);
        }
        if features.nrows() != choices.len() {
            return Err(BatchError::LengthMismatch {
                rows: features.nrows(),
                choices: choices.len(),
            });
        }
        if let Some(&choice) = choices.iter().find(|&&c| c >= n_alts) {
            return Err(BatchError::ChoiceOutOfRange { choice, n_alts });
        }
        Ok(Self { features, choices })
    }

    pub fn len(&self) -> usize {
        self.choices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.choices.is_empty()
    }

    pub fn features(&self) -> ArrayView2<'a, f64> {
        self.features
    }

    pub fn choices(&self) -> &'a [usize] {
        self.choices
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossValue {
    pub total: f64,
    /// Mean cross-entropy.
    pub data_term: f64,
    pub penalty_term: f64,
}

/// Gradient carrier with the same layer shapes as [`ModelParameters`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGradients {
    pub layers: Vec<Dense>,
}

impl ParamGradients {
    pub fn zeros_like(params: &ModelParameters) -> Self {
        Self {
            layers: params
                .layers
                .iter()
                .map(|l| Dense {
                    weights: Array2::zeros(l.weights.dim()),
                    bias: Array1::zeros(l.bias.len()),
                })
                .collect(),
        }
    }

    /// Flattened in the same order as [`ModelParameters::to_flat`].
    pub fn to_flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
            .collect()
    }

    pub fn norm(&self) -> f64 {
        self.to_flat().iter().map(|g| g * g).sum::<f64>().sqrt()
    }
}

/// `K x d` matrix of `ds_k / dx_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputJacobian {
    pub matrix: Array2<f64>,
}

impl InputJacobian {
    pub fn get(&self, alt: usize, feature: usize) -> f64 {
        self.matrix[[alt, feature]]
    }

    pub fn column_sums(&self) -> Array1<f64> {
        self.matrix.sum_axis(Axis(0))
    }
}

/// `l1 * sum |w| + l2 * sum w^2` over weights; biases are not penalized.
pub fn penalty(params: &ModelParameters, l1: f64, l2: f64) -> f64 {
    let (mut abs, mut sq) = (0.0, 0.0);
    for w in params.layers.iter().flat_map(|l| l.weights.iter()) {
        abs += w.abs();
        sq += w * w;
    }
    l1 * abs + l2 * sq
}

fn data_term(utilities: &Array2<f64>, choices: &[usize]) -> f64 {
    let mut total = 0.0;
    for (row, &y) in utilities.axis_iter(Axis(0)).zip(choices) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        total += lse - row[y];
    }
    total / choices.len() as f64
}

/// Penalized mean cross-entropy, evaluated in log space.
pub fn loss(params: &ModelParameters, batch: Batch<'_>, l1: f64, l2: f64) -> Result<LossValue, BatchError> {
    let trace = forward(params, batch.features, None)?;
    let data = data_term(trace.utilities(), batch.choices);
    let pen = penalty(params, l1, l2);
    Ok(LossValue {
        total: data + pen,
        data_term: data,
        penalty_term: pen,
    })
}

/// Exact gradient of [`loss`]. The L1 subgradient at `w = 0` is 0.
pub fn param_gradients(
    params: &ModelParameters,
    batch: Batch<'_>,
    l1: f64,
    l2: f64,
) -> Result<(LossValue, ParamGradients), BatchError> {
    param_gradients_masked(params, batch, l1, l2, None)
}

/// [`param_gradients`] with optional training-mode dropout on hidden units.
pub fn param_gradients_masked(
    params: &ModelParameters,
    batch: Batch<'_>,
    l1: f64,
    l2: f64,
    dropout: Option<&DropoutMasks>,
) -> Result<(LossValue, ParamGradients), BatchError> {
    let trace = forward(params, batch.features, dropout)?;
    let utilities = trace.utilities();
    let data = data_term(utilities, batch.choices);
    let pen = penalty(params, l1, l2);

    let n = batch.len() as f64;
    let mut delta = softmax_rows(utilities);
    for (mut row, &y) in delta.axis_iter_mut(Axis(0)).zip(batch.choices) {
        row[y] -= 1.0;
    }
    delta /= n;

    let mut grads = ParamGradients::zeros_like(params);
    for l in (0..params.layers.len()).rev() {
        let input = if l == 0 {
            batch.features
        } else {
            trace.hidden[l - 1].view()
        };
        grads.layers[l].weights = delta.t().dot(&input);
        grads.layers[l].bias = delta.sum_axis(Axis(0));
        if l > 0 {
            let mut upstream = delta.dot(&params.layers[l].weights);
            upstream.zip_mut_with(&trace.pre[l - 1], |g, &z| {
                if z <= 0.0 {
                    *g = 0.0;
                }
            });
            if let Some(masks) = dropout {
                upstream *= &masks.masks[l - 1];
            }
            delta = upstream;
        }
    }
    if l1 != 0.0 || l2 != 0.0 {
        for (g, p) in grads.layers.iter_mut().zip(&params.layers) {
            g.weights.zip_mut_with(&p.weights, |gw, &w| {
                let sign = if w > 0.0 {
                    1.0
                } else if w < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                *gw += l1 * sign + 2.0 * l2 * w;
            });
        }
    }
    Ok((
        LossValue {
            total: data + pen,
            data_term: data,
            penalty_term: pen,
        },
        grads,
    ))
}

/// Backpropagates row vectors `seeds` (`r x K`, gradients w.r.t. utilities)
/// to the standardized input for a single observation.
fn backprop_to_input(
    params: &ModelParameters,
    x_std: &[f64],
    seeds: impl Fn(&[f64], &[f64]) -> Array2<f64>,
) -> Result<Array2<f64>, NetworkError> {
    let view = ArrayView2::from_shape((1, x_std.len()), x_std).expect("row view");
    let trace = forward(params, view, None)?;
    let v = trace.utilities().row(0).to_vec();
    let s = crate::network::probabilities(&v);
    let mut g = seeds(&v, &s);
    for l in (0..params.layers.len()).rev() {
        g = g.dot(&params.layers[l].weights);
        if l > 0 {
            let pre = trace.pre[l - 1].row(0);
            for mut row in g.axis_iter_mut(Axis(0)) {
                row.zip_mut_with(&pre, |gi, &z| {
                    if z <= 0.0 {
                        *gi = 0.0;
                    }
                });
            }
        }
    }
    Ok(g)
}

fn to_original_units(mut g: Array2<f64>, standardizer: &Standardizer) -> Array2<f64> {
    for mut row in g.axis_iter_mut(Axis(0)) {
        for (v, s) in row.iter_mut().zip(&standardizer.stds) {
            *v /= s;
        }
    }
    g
}

/// `ds_k / dx_j` at an input in original units from one backward pass with
/// a seed row per alternative, with the standardizer's `1 / std` chain-rule
/// factor applied.
pub fn input_jacobian(
    params: &ModelParameters,
    standardizer: &Standardizer,
    x_original: &[f64],
) -> Result<InputJacobian, NetworkError> {
    let x_std = standardizer.transform_row(x_original);
    let k = params.arch.n_alts;
    // Row `alt` seeds ds_alt / dV_m = s_alt (1[alt = m] - s_m).
    let rows = backprop_to_input(params, &x_std, |_, s| {
        Array2::from_shape_fn((k, k), |(alt, m)| {
            let ind = if m == alt { 1.0 } else { 0.0 };
            s[alt] * (ind - s[m])
        })
    })?;
    Ok(InputJacobian {
        matrix: to_original_units(rows, standardizer),
    })
}

/// `dV_alt / dx_j` at an input in original units.
pub fn utility_gradient(
    params: &ModelParameters,
    standardizer: &Standardizer,
    x_original: &[f64],
    alt: usize,
) -> Result<Vec<f64>, NetworkError> {
    let x_std = standardizer.transform_row(x_original);
    let k = params.arch.n_alts;
    let g = backprop_to_input(params, &x_std, |_, _| {
        Array2::from_shape_fn((1, k), |(_, m)| if m == alt { 1.0 } else { 0.0 })
    })?;
    Ok(to_original_units(g, standardizer).row(0).to_vec())
}

/// Closed-form Jacobian of a softmax over linear utilities `V = W x + b`:
/// `ds_k / dx_j = s_k (w_kj - sum_m s_m w_mj)`.
pub fn analytic_linear_jacobian(weights: ArrayView2<'_, f64>, bias: &[f64], x: &[f64]) -> InputJacobian {
    let (k, d) = weights.dim();
    let v: Vec<f64> = (0..k)
        .map(|a| bias[a] + (0..d).map(|j| weights[[a, j]] * x[j]).sum::<f64>())
        .collect();
    let s = crate::network::probabilities(&v);
    let avg: Vec<f64> = (0..d).map(|j| (0..k).map(|m| s[m] * weights[[m, j]]).sum()).collect();
    InputJacobian {
        matrix: Array2::from_shape_fn((k, d), |(a, j)| s[a] * (weights[[a, j]] - avg[j])),
    }
}
