//! Independent reference computations: a plain-loop forward pass, finite
//! differences over it, and the closed-form softmax-of-linear Jacobian.

#![allow(dead_code, clippy::needless_range_loop)]

use choicenet::network::{Architecture, Dense, ModelParameters};
use choicenet::Standardizer;
use ndarray::{Array1, Array2};
use rand::Rng;

/// Per-layer, per-unit dropout multipliers for one row.
pub type RowMask = Vec<Vec<f64>>;

/// Pre-activations of every layer for one standardized input.
pub fn naive_pre(params: &ModelParameters, z: &[f64], mask: Option<&RowMask>) -> Vec<Vec<f64>> {
    let mut input = z.to_vec();
    let mut out = Vec::new();
    let n = params.layers.len();
    for (l, layer) in params.layers.iter().enumerate() {
        let (fan_out, fan_in) = layer.weights.dim();
        let mut pre = vec![0.0; fan_out];
        for (o, p) in pre.iter_mut().enumerate() {
            let mut acc = layer.bias[o];
            for i in 0..fan_in {
                acc += layer.weights[[o, i]] * input[i];
            }
            *p = acc;
        }
        if l + 1 < n {
            input = pre
                .iter()
                .enumerate()
                .map(|(u, &v)| {
                    let a = if v > 0.0 { v } else { 0.0 };
                    a * mask.map_or(1.0, |m| m[l][u])
                })
                .collect();
        }
        out.push(pre);
    }
    out
}

pub fn naive_utilities(params: &ModelParameters, z: &[f64], mask: Option<&RowMask>) -> Vec<f64> {
    naive_pre(params, z, mask).pop().expect("output layer")
}

pub fn naive_softmax(v: &[f64]) -> Vec<f64> {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|x| (x - max).exp()).collect();
    let t: f64 = e.iter().sum();
    e.iter().map(|x| x / t).collect()
}

pub fn naive_logsumexp(v: &[f64]) -> f64 {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Penalized mean cross-entropy over rows of `z` (standardized).
pub fn naive_loss(
    params: &ModelParameters,
    z: &Array2<f64>,
    y: &[usize],
    l1: f64,
    l2: f64,
    masks: Option<&[RowMask]>,
) -> f64 {
    let mut total = 0.0;
    for (r, &c) in y.iter().enumerate() {
        let row: Vec<f64> = z.row(r).to_vec();
        let v = naive_utilities(params, &row, masks.map(|m| &m[r]));
        total += naive_logsumexp(&v) - v[c];
    }
    let mut pen = 0.0;
    for layer in &params.layers {
        for w in layer.weights.iter() {
            pen += l1 * w.abs() + l2 * w * w;
        }
    }
    total / y.len() as f64 + pen
}

/// Central differences of `f` over the flat parameter vector.
pub fn fd_param_gradient(params: &ModelParameters, h: f64, f: impl Fn(&ModelParameters) -> f64) -> Vec<f64> {
    let flat = params.to_flat();
    let mut p = params.clone();
    (0..flat.len())
        .map(|i| {
            let mut up = flat.clone();
            up[i] += h;
            p.set_flat(&up);
            let fu = f(&p);
            let mut dn = flat.clone();
            dn[i] -= h;
            p.set_flat(&dn);
            let fd = f(&p);
            (fu - fd) / (2.0 * h)
        })
        .collect()
}

/// Central differences of the choice probabilities in original units; `K x d`.
pub fn fd_input_jacobian(params: &ModelParameters, std: &Standardizer, x: &[f64], h: f64) -> Array2<f64> {
    let (k, d) = (params.arch.n_alts, x.len());
    let probs = |x: &[f64]| {
        let z: Vec<f64> = (0..d).map(|j| (x[j] - std.means[j]) / std.stds[j]).collect();
        naive_softmax(&naive_utilities(params, &z, None))
    };
    let mut jac = Array2::zeros((k, d));
    for j in 0..d {
        let mut up = x.to_vec();
        up[j] += h;
        let mut dn = x.to_vec();
        dn[j] -= h;
        let (pu, pd) = (probs(&up), probs(&dn));
        for a in 0..k {
            jac[[a, j]] = (pu[a] - pd[a]) / (2.0 * h);
        }
    }
    jac
}

/// `ds_k/dx_j = s_k (w_kj - sum_m s_m w_mj)` for `V = W x + b`.
pub fn mnl_jacobian(w: &Array2<f64>, b: &[f64], x: &[f64]) -> Array2<f64> {
    let (k, d) = w.dim();
    let v: Vec<f64> = (0..k)
        .map(|a| b[a] + (0..d).map(|j| w[[a, j]] * x[j]).sum::<f64>())
        .collect();
    let s = naive_softmax(&v);
    Array2::from_shape_fn((k, d), |(a, j)| {
        let avg: f64 = (0..k).map(|m| s[m] * w[[m, j]]).sum();
        s[a] * (w[[a, j]] - avg)
    })
}

pub fn random_arch<R: Rng>(
    rng: &mut R,
    max_depth: usize,
    max_width: usize,
    max_d: usize,
    max_k: usize,
) -> Architecture {
    let depth = rng.gen_range(0..=max_depth);
    let width = if depth == 0 { 0 } else { rng.gen_range(1..=max_width) };
    let d = rng.gen_range(1..=max_d);
    let k = rng.gen_range(2..=max_k);
    Architecture::new(d, k, depth, width).expect("valid random architecture")
}

pub fn random_params<R: Rng>(rng: &mut R, arch: Architecture, scale: f64) -> ModelParameters {
    let layers = arch
        .layer_dims()
        .into_iter()
        .map(|(fan_in, fan_out)| Dense {
            weights: Array2::from_shape_fn((fan_out, fan_in), |_| rng.gen_range(-scale..scale)),
            bias: Array1::from_shape_fn(fan_out, |_| rng.gen_range(-scale..scale)),
        })
        .collect();
    ModelParameters::from_layers(arch, layers).expect("finite parameters")
}

pub fn random_standardizer<R: Rng>(rng: &mut R, d: usize) -> Standardizer {
    Standardizer {
        means: (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect(),
        stds: (0..d).map(|_| rng.gen_range(0.5..3.0)).collect(),
    }
}

/// Smallest |pre-activation| over hidden units for the given inputs.
pub fn min_hidden_margin(params: &ModelParameters, rows: &[Vec<f64>]) -> f64 {
    let mut m = f64::INFINITY;
    for z in rows {
        let pre = naive_pre(params, z, None);
        for layer in &pre[..pre.len() - 1] {
            for v in layer {
                m = m.min(v.abs());
            }
        }
    }
    m
}

/// True when `a` and `b` agree within `rel` relative to the larger
/// magnitude. Values both below `floor` in magnitude must agree within
/// `rel * floor`.
pub fn close_rel(a: f64, b: f64, rel: f64, floor: f64) -> bool {
    let scale = a.abs().max(b.abs()).max(floor);
    (a - b).abs() <= rel * scale
}
