//! Economic information from trained choice models.
//!
//! Function-based quantities (probabilities, predictions, market shares,
//! substitution ratios, welfare) use the fitted probability and utility
//! functions directly. Gradient-based quantities (probability derivatives,
//! elasticities, marginal rates of substitution, values of time) use input
//! Jacobians in original feature units. Aggregation over trainings and over
//! individuals lives in [`aggregate`]; the on-disk bundle in [`bundle`].

pub mod aggregate;
pub mod bundle;

pub use aggregate::{
    alphas, derivative_table, elasticity_table, mean_std, median, predictions, slice_curve, slice_derivative_curve,
    vot_stats, welfare_change, EditOp, ElasticityTable, FeatureEdit, MeanStd, Scenario, SliceCurve, VotMode, VotStats,
    WelfareResult,
};
pub use bundle::{
    analyze_group, BundleSummary, CapacitySummary, EconBundle, EconOptions, GroupReport, GroupSummary, SliceSpec,
    VotSpec, VotSummary, WelfareSpec, WelfareSummary,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{AttributeMap, Dataset};
use crate::training::{argmax, mean_probabilities, TrainedModel};

/// Probabilities below this make an elasticity undefined.
pub const MIN_PROBABILITY: f64 = 1e-12;
/// Cost derivatives below this (in absolute value) make a value of time undefined.
pub const MIN_DERIVATIVE: f64 = 1e-12;
/// Denominator floor for substitution ratios.
pub const MIN_RATIO_DENOMINATOR: f64 = 1e-300;
/// Tolerance on `sum_k s_k = 1` checked on entry.
pub const PROBABILITY_SUM_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EconError {
    #[error("alternatives must differ, got {0} twice")]
    SameAlternative(usize),
    #[error("alternative {0} out of range")]
    AlternativeOutOfRange(usize),
    #[error("feature {0} out of range")]
    FeatureOutOfRange(usize),
    #[error("undefined ratio: probability of alternative {alt} is {prob:e}")]
    UndefinedRatio { alt: usize, prob: f64 },
    #[error("undefined elasticity: probability of alternative {alt} is {prob:e}")]
    UndefinedElasticity { alt: usize, prob: f64 },
    #[error("undefined value of time: cost derivative {0:e}")]
    UndefinedVot(f64),
    #[error("dataset has no attribute map; cost/time roles are required")]
    MissingAttributeMap,
    #[error("alternative {0} has no cost attribute")]
    MissingCost(usize),
    #[error("no individual has a positive marginal utility of money")]
    NoPositiveAlpha,
    #[error("{0} alphas for {1} observations")]
    AlphaLength(usize, usize),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("grid must be non-empty and strictly ascending")]
    InvalidGrid,
    #[error("models disagree with the dataset shape")]
    ShapeMismatch,
}

pub(crate) fn check_probabilities(p: &[f64]) {
    let total: f64 = p.iter().sum();
    assert!(
        (total - 1.0).abs() <= PROBABILITY_SUM_TOL,
        "probabilities sum to {total}"
    );
}

pub(crate) fn check_models(models: &[TrainedModel], data: &Dataset) -> Result<(), EconError> {
    if models.is_empty() {
        return Err(EconError::Empty("no models"));
    }
    if models
        .iter()
        .any(|m| m.n_features() != data.n_features() || m.n_alts() != data.n_alts())
    {
        return Err(EconError::ShapeMismatch);
    }
    Ok(())
}

/// Most probable alternative; ties go to the lowest index.
pub fn predict(model: &TrainedModel, x: &[f64]) -> usize {
    let p = model.probabilities(x);
    check_probabilities(&p);
    argmax(&p)
}

/// Prediction from the across-model mean probability.
pub fn predict_ensemble(models: &[TrainedModel], x: &[f64]) -> usize {
    let p = mean_probabilities(models, x);
    check_probabilities(&p);
    argmax(&p)
}

/// Mean predicted probability per alternative over `idx`.
pub fn market_share(model: &TrainedModel, data: &Dataset, idx: &[usize]) -> Result<Vec<f64>, EconError> {
    if idx.is_empty() {
        return Err(EconError::Empty("market share needs observations"));
    }
    let mut shares = vec![0.0; model.n_alts()];
    for &i in idx {
        let p = model.probabilities(&data.row_vec(i));
        check_probabilities(&p);
        for (s, v) in shares.iter_mut().zip(p) {
            *s += v;
        }
    }
    Ok(shares.iter().map(|s| s / idx.len() as f64).collect())
}

/// `s_k1(x) / s_k2(x)`.
pub fn substitution_ratio(model: &TrainedModel, x: &[f64], k1: usize, k2: usize) -> Result<f64, EconError> {
    let k = model.n_alts();
    if k1 == k2 {
        return Err(EconError::SameAlternative(k1));
    }
    for a in [k1, k2] {
        if a >= k {
            return Err(EconError::AlternativeOutOfRange(a));
        }
    }
    let p = model.probabilities(x);
    check_probabilities(&p);
    if p[k2] < MIN_RATIO_DENOMINATOR {
        return Err(EconError::UndefinedRatio { alt: k2, prob: p[k2] });
    }
    Ok(p[k1] / p[k2])
}

/// Marginal utility of money `-dV_alt / d cost_alt` at `x`, in utility per
/// currency unit.
pub fn marginal_utility_alpha(
    model: &TrainedModel,
    x: &[f64],
    alt: usize,
    attributes: &AttributeMap,
) -> Result<f64, EconError> {
    if alt >= model.n_alts() {
        return Err(EconError::AlternativeOutOfRange(alt));
    }
    let cost = attributes.cost_feature(alt).ok_or(EconError::MissingCost(alt))?;
    Ok(-model.utility_gradient(x, alt)[cost])
}

/// Across-model mean of [`marginal_utility_alpha`].
pub fn ensemble_alpha(
    models: &[TrainedModel],
    x: &[f64],
    alt: usize,
    attributes: &AttributeMap,
) -> Result<f64, EconError> {
    if models.is_empty() {
        return Err(EconError::Empty("no models"));
    }
    let mut total = 0.0;
    for m in models {
        total += marginal_utility_alpha(m, x, alt, attributes)?;
    }
    Ok(total / models.len() as f64)
}

/// `ds_k/dx_j * x_j / s_k` in original units.
pub fn elasticity(model: &TrainedModel, x: &[f64], k: usize, j: usize) -> Result<f64, EconError> {
    if k >= model.n_alts() {
        return Err(EconError::AlternativeOutOfRange(k));
    }
    if j >= model.n_features() {
        return Err(EconError::FeatureOutOfRange(j));
    }
    let p = model.probabilities(x);
    check_probabilities(&p);
    if p[k] < MIN_PROBABILITY {
        return Err(EconError::UndefinedElasticity { alt: k, prob: p[k] });
    }
    if x[j] == 0.0 {
        return Ok(0.0);
    }
    Ok(model.input_jacobian(x).get(k, j) * x[j] / p[k])
}

/// Value of time at one input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vot {
    /// `(ds/d time) / (ds/d cost)` for the predicted alternative; currency per
    /// time unit, positive when both derivatives share a sign.
    pub value: f64,
    /// The same ratio with a leading minus sign, as the marginal rate of
    /// substitution is often written.
    pub mrs_signed: f64,
    pub alternative: usize,
}

pub fn vot(model: &TrainedModel, x: &[f64], time: usize, cost: usize) -> Result<Vot, EconError> {
    for j in [time, cost] {
        if j >= model.n_features() {
            return Err(EconError::FeatureOutOfRange(j));
        }
    }
    let alternative = predict(model, x);
    let jac = model.input_jacobian(x);
    let den = jac.get(alternative, cost);
    if den.abs() < MIN_DERIVATIVE {
        return Err(EconError::UndefinedVot(den));
    }
    let value = jac.get(alternative, time) / den;
    Ok(Vot {
        value,
        mrs_signed: -value,
        alternative,
    })
}
