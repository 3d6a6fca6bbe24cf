//! The utility network.
//!
//! Hidden layers are `ReLU(W x + b)`; the output layer is affine and its
//! outputs are read as alternative utilities. A softmax over utilities gives
//! choice probabilities. Depth 0 is the linear-utility multinomial logit.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("layer {layer} has shape {actual:?}, expected {expected:?}")]
    LayerShape {
        layer: usize,
        expected: (usize, usize),
        actual: (usize, usize),
    },
    #[error("non-finite parameter in layer {0}")]
    NonFinite(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dim: usize,
    pub n_alts: usize,
    /// Number of hidden layers.
    pub depth: usize,
    /// Units per hidden layer; ignored when `depth == 0`.
    pub width: usize,
}

impl Architecture {
    pub fn new(input_dim: usize, n_alts: usize, depth: usize, width: usize) -> Result<Self, NetworkError> {
        let arch = Self {
            input_dim,
            n_alts,
            depth,
            width: if depth == 0 { 0 } else { width },
        };
        arch.validate()?;
        Ok(arch)
    }

    /// Linear-utility architecture (multinomial logit).
    pub fn linear(input_dim: usize, n_alts: usize) -> Result<Self, NetworkError> {
        Self::new(input_dim, n_alts, 0, 0)
    }

    pub fn validate(&self) -> Result<(), NetworkError> {
        if self.input_dim == 0 {
            return Err(NetworkError::InvalidArchitecture(
                "input dimension must be at least 1".into(),
            ));
        }
        if self.n_alts < 2 {
            return Err(NetworkError::InvalidArchitecture(
                "at least two alternatives are required".into(),
            ));
        }
        if self.depth > 0 && self.width == 0 {
            return Err(NetworkError::InvalidArchitecture(
                "hidden width must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` for every layer, input to output.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.depth + 1);
        let mut fan_in = self.input_dim;
        for _ in 0..self.depth {
            dims.push((fan_in, self.width));
            fan_in = self.width;
        }
        dims.push((fan_in, self.n_alts));
        dims
    }

    /// Number of layers with trainable weights (hidden layers plus output).
    pub fn n_layers(&self) -> usize {
        self.depth + 1
    }

    /// Number of weight entries, biases excluded.
    pub fn n_weights(&self) -> usize {
        self.layer_dims().iter().map(|(i, o)| i * o).sum()
    }

    pub fn n_params(&self) -> usize {
        self.layer_dims().iter().map(|(i, o)| i * o + o).sum()
    }
}

/// One affine layer. `weights` is `fan_out x fan_in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weights: Array2::zeros((fan_out, fan_in)),
            bias: Array1::zeros(fan_out),
        }
    }

    fn is_finite(&self) -> bool {
        self.weights.iter().chain(self.bias.iter()).all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParameters {
    pub arch: Architecture,
    pub layers: Vec<Dense>,
}

impl ModelParameters {
    pub fn zeros(arch: Architecture) -> Self {
        let layers = arch.layer_dims().into_iter().map(|(i, o)| Dense::zeros(i, o)).collect();
        Self { arch, layers }
    }

    /// Checks layer shapes against the architecture and that every entry is finite.
    pub fn from_layers(arch: Architecture, layers: Vec<Dense>) -> Result<Self, NetworkError> {
        arch.validate()?;
        let dims = arch.layer_dims();
        if dims.len() != layers.len() {
            return Err(NetworkError::InvalidArchitecture(format!(
                "expected {} layers, got {}",
                dims.len(),
                layers.len()
            )));
        }
        for (l, ((fan_in, fan_out), layer)) in dims.iter().zip(&layers).enumerate() {
            let actual = layer.weights.dim();
            if actual != (*fan_out, *fan_in) || layer.bias.len() != *fan_out {
                return Err(NetworkError::LayerShape {
                    layer: l,
                    expected: (*fan_out, *fan_in),
                    actual,
                });
            }
            if !layer.is_finite() {
                return Err(NetworkError::NonFinite(l));
            }
        }
        Ok(Self { arch, layers })
    }

    /// Depth-0 model from a `K x d` weight matrix and `K` alternative constants.
    pub fn linear(weights: Array2<f64>, bias: Array1<f64>) -> Result<Self, NetworkError> {
        let (k, d) = weights.dim();
        let arch = Architecture::linear(d, k)?;
        Self::from_layers(arch, vec![Dense { weights, bias }])
    }

    pub fn n_params(&self) -> usize {
        self.arch.n_params()
    }

    pub fn output_layer(&self) -> &Dense {
        self.layers.last().expect("at least one layer")
    }

    /// All parameters flattened layer by layer: weights row-major, then bias.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for layer in &self.layers {
            out.extend(layer.weights.iter().copied());
            out.extend(layer.bias.iter().copied());
        }
        out
    }

    /// Inverse of [`ModelParameters::to_flat`].
    pub fn set_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.n_params(), "flat parameter length");
        let mut pos = 0;
        for layer in &mut self.layers {
            for w in layer.weights.iter_mut() {
                *w = flat[pos];
                pos += 1;
            }
            for b in layer.bias.iter_mut() {
                *b = flat[pos];
                pos += 1;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(Dense::is_finite)
    }

    /// Largest absolute weight (biases excluded).
    pub fn max_abs_weight(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter())
            .fold(0.0_f64, |m, w| m.max(w.abs()))
    }
}

/// Glorot-uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero biases.
pub fn init_glorot(arch: Architecture, seed: u64) -> ModelParameters {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = arch
        .layer_dims()
        .into_iter()
        .map(|(fan_in, fan_out)| {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let weights = Array2::from_shape_fn((fan_out, fan_in), |_| rng.gen_range(-limit..limit));
            Dense {
                weights,
                bias: Array1::zeros(fan_out),
            }
        })
        .collect();
    ModelParameters { arch, layers }
}

/// Inverted-dropout masks for the hidden layers of one minibatch.
///
/// Entries are `0` for dropped units and `1 / (1 - rate)` for kept ones.
#[derive(Debug, Clone)]
pub struct DropoutMasks {
    pub masks: Vec<Array2<f64>>,
}

impl DropoutMasks {
    pub fn sample<R: Rng>(arch: &Architecture, n_rows: usize, rate: f64, rng: &mut R) -> Self {
        let keep = 1.0 - rate;
        let scale = 1.0 / keep;
        let masks = (0..arch.depth)
            .map(|_| {
                Array2::from_shape_fn(
                    (n_rows, arch.width),
                    |_| {
                        if rng.gen::<f64>() < keep {
                            scale
                        } else {
                            0.0
                        }
                    },
                )
            })
            .collect();
        Self { masks }
    }
}

/// Intermediate values of a batched forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// Pre-activations per layer; the last entry holds the utilities (`n x K`).
    pub pre: Vec<Array2<f64>>,
    /// Hidden-layer outputs after ReLU and dropout.
    pub hidden: Vec<Array2<f64>>,
}

impl ForwardTrace {
    pub fn utilities(&self) -> &Array2<f64> {
        self.pre.last().expect("at least one layer")
    }
}

/// Batched forward pass over rows of `x` (`n x d`, already standardized).
pub fn forward(
    params: &ModelParameters,
    x: ArrayView2<'_, f64>,
    dropout: Option<&DropoutMasks>,
) -> Result<ForwardTrace, NetworkError> {
    if x.ncols() != params.arch.input_dim {
        return Err(NetworkError::DimensionMismatch {
            expected: params.arch.input_dim,
            actual: x.ncols(),
        });
    }
    let n_layers = params.layers.len();
    let mut pre = Vec::with_capacity(n_layers);
    let mut hidden: Vec<Array2<f64>> = Vec::with_capacity(n_layers - 1);
    for (l, layer) in params.layers.iter().enumerate() {
        let input = if l == 0 { x } else { hidden[l - 1].view() };
        let z = input.dot(&layer.weights.t()) + &layer.bias;
        if l + 1 < n_layers {
            let mut a = z.mapv(|v| v.max(0.0));
            if let Some(masks) = dropout {
                a *= &masks.masks[l];
            }
            hidden.push(a);
        }
        pre.push(z);
    }
    Ok(ForwardTrace { pre, hidden })
}

/// Utilities `V(x)` for a single standardized input; inference mode.
pub fn utilities(params: &ModelParameters, x: &[f64]) -> Result<Vec<f64>, NetworkError> {
    let view = ArrayView2::from_shape((1, x.len()), x).expect("row view");
    let trace = forward(params, view, None)?;
    Ok(trace.utilities().row(0).to_vec())
}

/// Max-shifted softmax.
pub fn probabilities(v: &[f64]) -> Vec<f64> {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = v.iter().map(|x| (x - max).exp()).collect();
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= total);
    out
}

/// `log sum_j exp(v_j)` via the max shift.
pub fn logsumexp(v: &[f64]) -> f64 {
    if v.len() == 1 {
        return v[0];
    }
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Row-wise softmax of an `n x K` utility matrix.
pub fn softmax_rows(v: &Array2<f64>) -> Array2<f64> {
    let mut out = v.clone();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|x| (x - max).exp());
        let total = row.sum();
        row /= total;
    }
    out
}

/// Row-wise log-sum-exp of an `n x K` utility matrix.
pub fn logsumexp_rows(v: &Array2<f64>) -> Array1<f64> {
    v.axis_iter(Axis(0))
        .map(|row| {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
        })
        .collect()
}
