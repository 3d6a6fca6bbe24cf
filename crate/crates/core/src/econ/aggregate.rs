//! Aggregation of economic quantities over individuals and trainings.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{check_models, check_probabilities, predict, EconError, MIN_PROBABILITY};
use crate::data::{AttributeMap, Dataset};
use crate::network::logsumexp;
use crate::training::{argmax, mean_probabilities, TrainedModel};

/// Lower-middle order statistic; `None` when empty.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Some(v[(v.len() - 1) / 2])
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Elementwise across-model mean and population std of equally shaped tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: Array2<f64>,
    pub std: Array2<f64>,
}

impl MeanStd {
    fn from_tables(tables: &[Array2<f64>]) -> Self {
        let shape = tables[0].dim();
        let mut mean = Array2::zeros(shape);
        let mut std = Array2::zeros(shape);
        let mut cell = Vec::with_capacity(tables.len());
        for r in 0..shape.0 {
            for c in 0..shape.1 {
                cell.clear();
                cell.extend(tables.iter().map(|t| t[[r, c]]));
                let (m, s) = mean_std(&cell);
                mean[[r, c]] = m;
                std[[r, c]] = s;
            }
        }
        Self { mean, std }
    }
}

fn check_index(data: &Dataset, idx: &[usize]) -> Result<(), EconError> {
    if idx.is_empty() {
        return Err(EconError::Empty("no observations"));
    }
    if idx.iter().any(|&i| i >= data.n_obs()) {
        return Err(EconError::ShapeMismatch);
    }
    Ok(())
}

/// Probabilities (or their derivatives) along one feature with the others
/// held at the sample mean of `idx`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceCurve {
    pub feature: usize,
    pub grid: Vec<f64>,
    pub base_point: Vec<f64>,
    /// One `grid x alternatives` table per model.
    pub per_model: Vec<Array2<f64>>,
    /// Across-model mean, `grid x alternatives`.
    pub ensemble_mean: Array2<f64>,
}

fn slice_with<F>(
    models: &[TrainedModel],
    data: &Dataset,
    idx: &[usize],
    feature: usize,
    grid: &[f64],
    value: F,
) -> Result<SliceCurve, EconError>
where
    F: Fn(&TrainedModel, &[f64]) -> Vec<f64>,
{
    check_models(models, data)?;
    check_index(data, idx)?;
    if feature >= data.n_features() {
        return Err(EconError::FeatureOutOfRange(feature));
    }
    if grid.is_empty() || grid.iter().any(|g| !g.is_finite()) || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(EconError::InvalidGrid);
    }
    let base_point = data.feature_means(idx);
    let k = data.n_alts();
    let per_model: Vec<Array2<f64>> = models
        .iter()
        .map(|m| {
            let mut table = Array2::zeros((grid.len(), k));
            let mut x = base_point.clone();
            for (g, &v) in grid.iter().enumerate() {
                x[feature] = v;
                for (a, y) in value(m, &x).into_iter().enumerate() {
                    table[[g, a]] = y;
                }
            }
            table
        })
        .collect();
    let ensemble_mean = MeanStd::from_tables(&per_model).mean;
    Ok(SliceCurve {
        feature,
        grid: grid.to_vec(),
        base_point,
        per_model,
        ensemble_mean,
    })
}

/// Choice probabilities along `grid` for `feature`.
pub fn slice_curve(
    models: &[TrainedModel],
    data: &Dataset,
    idx: &[usize],
    feature: usize,
    grid: &[f64],
) -> Result<SliceCurve, EconError> {
    slice_with(models, data, idx, feature, grid, |m, x| {
        let p = m.probabilities(x);
        check_probabilities(&p);
        p
    })
}

/// `ds_k / d feature` along `grid`, in original units.
pub fn slice_derivative_curve(
    models: &[TrainedModel],
    data: &Dataset,
    idx: &[usize],
    feature: usize,
    grid: &[f64],
) -> Result<SliceCurve, EconError> {
    slice_with(models, data, idx, feature, grid, |m, x| {
        let jac = m.input_jacobian(x);
        (0..m.n_alts()).map(|k| jac.get(k, feature)).collect()
    })
}

/// Sample-mean elasticities, `features x alternatives`, aggregated over models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElasticityTable {
    pub mean: Array2<f64>,
    pub std: Array2<f64>,
    /// Per-model sample means; a cell is NaN when no individual was defined.
    pub per_model: Vec<Array2<f64>>,
    /// Count of excluded (model, individual, alternative, feature) cells.
    pub undefined: usize,
    pub total: usize,
}

struct GradientTables {
    derivatives: Vec<Array2<f64>>,
    elasticities: Vec<Array2<f64>>,
    undefined: usize,
    total: usize,
}

fn gradient_tables(models: &[TrainedModel], data: &Dataset, idx: &[usize]) -> Result<GradientTables, EconError> {
    check_models(models, data)?;
    check_index(data, idx)?;
    let (d, k) = (data.n_features(), data.n_alts());
    let mut derivatives = Vec::with_capacity(models.len());
    let mut elasticities = Vec::with_capacity(models.len());
    let mut undefined = 0;
    for m in models {
        let mut deriv = Array2::<f64>::zeros((d, k));
        let mut elast = Array2::<f64>::zeros((d, k));
        let mut counts = Array2::<usize>::zeros((d, k));
        for &i in idx {
            let x = data.row_vec(i);
            let p = m.probabilities(&x);
            check_probabilities(&p);
            let jac = m.input_jacobian(&x);
            for a in 0..k {
                for j in 0..d {
                    let g = jac.get(a, j);
                    deriv[[j, a]] += g;
                    if p[a] < MIN_PROBABILITY {
                        undefined += 1;
                        continue;
                    }
                    elast[[j, a]] += if x[j] == 0.0 { 0.0 } else { g * x[j] / p[a] };
                    counts[[j, a]] += 1;
                }
            }
        }
        deriv /= idx.len() as f64;
        elast.zip_mut_with(&counts, |e, &c| *e = if c == 0 { f64::NAN } else { *e / c as f64 });
        derivatives.push(deriv);
        elasticities.push(elast);
    }
    Ok(GradientTables {
        derivatives,
        elasticities,
        undefined,
        total: models.len() * idx.len() * d * k,
    })
}

/// Sample-mean probability derivatives `ds_k / dx_j`, `features x alternatives`.
pub fn derivative_table(models: &[TrainedModel], data: &Dataset, idx: &[usize]) -> Result<MeanStd, EconError> {
    Ok(MeanStd::from_tables(&gradient_tables(models, data, idx)?.derivatives))
}

/// Sample-mean elasticities with undefined cells excluded and counted.
pub fn elasticity_table(models: &[TrainedModel], data: &Dataset, idx: &[usize]) -> Result<ElasticityTable, EconError> {
    let t = gradient_tables(models, data, idx)?;
    Ok(elasticity_from(t))
}

fn elasticity_from(t: GradientTables) -> ElasticityTable {
    let MeanStd { mean, std } = MeanStd::from_tables(&t.elasticities);
    ElasticityTable {
        mean,
        std,
        per_model: t.elasticities,
        undefined: t.undefined,
        total: t.total,
    }
}

pub(crate) fn derivatives_and_elasticities(
    models: &[TrainedModel],
    data: &Dataset,
    idx: &[usize],
) -> Result<(MeanStd, ElasticityTable), EconError> {
    let t = gradient_tables(models, data, idx)?;
    let deriv = MeanStd::from_tables(&t.derivatives);
    Ok((deriv, elasticity_from(t)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum VotMode {
    /// Distribution across individuals for one trained model.
    PerIndividual { model: usize },
    /// Distribution across trainings of each model's median over individuals.
    PerTraining,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VotStats {
    pub mode: VotMode,
    /// Defined values after scaling, in input order.
    pub values: Vec<f64>,
    pub median: Option<f64>,
    /// Share of defined values below zero.
    pub share_negative: f64,
    /// Share of (model, individual) evaluations that were undefined.
    pub share_undefined: f64,
    pub n_evaluated: usize,
}

fn model_vots(
    model: &TrainedModel,
    data: &Dataset,
    idx: &[usize],
    time: usize,
    cost: usize,
    scale: f64,
) -> Result<(Vec<f64>, usize), EconError> {
    let mut values = Vec::with_capacity(idx.len());
    let mut undefined = 0;
    for &i in idx {
        match super::vot(model, &data.row_vec(i), time, cost) {
            Ok(v) => values.push(v.value * scale),
            Err(EconError::UndefinedVot(_)) => undefined += 1,
            Err(e) => return Err(e),
        }
    }
    Ok((values, undefined))
}

/// Value-of-time distribution. `scale` converts units, for example 60 for
/// currency per minute to currency per hour.
pub fn vot_stats(
    models: &[TrainedModel],
    data: &Dataset,
    idx: &[usize],
    time: usize,
    cost: usize,
    mode: VotMode,
    scale: f64,
) -> Result<VotStats, EconError> {
    check_models(models, data)?;
    check_index(data, idx)?;
    let (values, undefined, evaluated) = match mode {
        VotMode::PerIndividual { model } => {
            let m = models
                .get(model)
                .ok_or(EconError::Empty("VOT model index out of range"))?;
            let (v, u) = model_vots(m, data, idx, time, cost, scale)?;
            (v, u, idx.len())
        }
        VotMode::PerTraining => {
            let mut medians = Vec::with_capacity(models.len());
            let mut undefined = 0;
            for m in models {
                let (v, u) = model_vots(m, data, idx, time, cost, scale)?;
                undefined += u;
                if let Some(med) = median(&v) {
                    medians.push(med);
                }
            }
            (medians, undefined, models.len() * idx.len())
        }
    };
    let negative = values.iter().filter(|v| **v < 0.0).count();
    Ok(VotStats {
        mode,
        median: median(&values),
        share_negative: if values.is_empty() {
            0.0
        } else {
            negative as f64 / values.len() as f64
        },
        share_undefined: undefined as f64 / evaluated as f64,
        n_evaluated: evaluated,
        values,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditOp {
    Set(f64),
    Offset(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureEdit {
    pub feature: usize,
    pub op: EditOp,
}

/// A policy scenario: edits applied to every individual's features.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub edits: Vec<FeatureEdit>,
}

impl Scenario {
    pub fn identity() -> Self {
        Self::default()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = x.to_vec();
        for e in &self.edits {
            match e.op {
                EditOp::Set(v) => out[e.feature] = v,
                EditOp::Offset(d) => out[e.feature] += d,
            }
        }
        out
    }
}

/// Marginal utility of money per individual in `idx`. The alternative is
/// `alt` when given, otherwise the ensemble's predicted alternative. Cells
/// where the alternative has no cost attribute are NaN.
pub fn alphas(
    models: &[TrainedModel],
    data: &Dataset,
    idx: &[usize],
    alt: Option<usize>,
) -> Result<Vec<f64>, EconError> {
    check_models(models, data)?;
    check_index(data, idx)?;
    let attrs: &AttributeMap = data.attribute_map().ok_or(EconError::MissingAttributeMap)?;
    if let Some(a) = alt {
        if a >= data.n_alts() {
            return Err(EconError::AlternativeOutOfRange(a));
        }
        if attrs.cost_feature(a).is_none() {
            return Err(EconError::MissingCost(a));
        }
    }
    idx.iter()
        .map(|&i| {
            let x = data.row_vec(i);
            let a = alt.unwrap_or_else(|| argmax(&mean_probabilities(models, &x)));
            match attrs.cost_feature(a) {
                Some(_) => super::ensemble_alpha(models, &x, a, attrs),
                None => Ok(f64::NAN),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WelfareResult {
    /// Per-individual change in currency units; `None` when excluded.
    pub per_individual: Vec<Option<f64>>,
    pub total: f64,
    pub n_included: usize,
    pub n_excluded: usize,
}

impl WelfareResult {
    pub fn mean_included(&self) -> f64 {
        self.total / self.n_included as f64
    }
}

/// Compensating variation from the logsum: for each individual, the
/// across-model mean of `logsumexp V(x1) - logsumexp V(x0)`, divided by
/// `alphas[i]`. Individuals with a non-positive or non-finite alpha are
/// excluded.
pub fn welfare_change(
    models: &[TrainedModel],
    data: &Dataset,
    idx: &[usize],
    before: &Scenario,
    after: &Scenario,
    alphas: &[f64],
) -> Result<WelfareResult, EconError> {
    check_models(models, data)?;
    check_index(data, idx)?;
    if alphas.len() != idx.len() {
        return Err(EconError::AlphaLength(alphas.len(), idx.len()));
    }
    for e in before.edits.iter().chain(&after.edits) {
        if e.feature >= data.n_features() {
            return Err(EconError::FeatureOutOfRange(e.feature));
        }
    }
    let mut per_individual = Vec::with_capacity(idx.len());
    let (mut total, mut n_included) = (0.0, 0);
    for (&i, &alpha) in idx.iter().zip(alphas) {
        if !(alpha > 0.0 && alpha.is_finite()) {
            per_individual.push(None);
            continue;
        }
        let x = data.row_vec(i);
        let (x0, x1) = (before.apply(&x), after.apply(&x));
        let diff: f64 = models
            .iter()
            .map(|m| logsumexp(&m.utilities(&x1)) - logsumexp(&m.utilities(&x0)))
            .sum::<f64>()
            / models.len() as f64;
        let delta = diff / alpha;
        total += delta;
        n_included += 1;
        per_individual.push(Some(delta));
    }
    if n_included == 0 {
        return Err(EconError::NoPositiveAlpha);
    }
    Ok(WelfareResult {
        n_excluded: idx.len() - n_included,
        per_individual,
        total,
        n_included,
    })
}

/// Predicted alternative per individual from each single model.
pub fn predictions(model: &TrainedModel, data: &Dataset, idx: &[usize]) -> Vec<usize> {
    idx.iter().map(|&i| predict(model, &data.row_vec(i))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{AltAttributes, Standardizer};
    use crate::network::ModelParameters;
    use ndarray::{array, Array1};

    fn linear(w: Array2<f64>, b: Array1<f64>) -> TrainedModel {
        let d = w.ncols();
        TrainedModel::from_parameters(ModelParameters::linear(w, b).unwrap(), Standardizer::identity(d))
    }

    fn two_feature_data() -> Dataset {
        let mut attrs = AttributeMap::default();
        attrs.by_alt.insert(
            0,
            AltAttributes {
                cost: Some(1),
                time: vec![0],
            },
        );
        Dataset::new(
            array![[10.0, 2.0], [20.0, 4.0], [30.0, 6.0], [40.0, 8.0]],
            vec![0, 1, 0, 1],
            vec!["time".into(), "cost".into()],
            vec!["a".into(), "b".into()],
            Some(attrs),
        )
        .unwrap()
    }

    #[test]
    fn medians_and_stds() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), Some(2.0));
        assert_eq!(median(&[]), None);
        assert_eq!(mean_std(&[1.0, 3.0]), (2.0, 1.0));
    }

    #[test]
    fn slice_curve_sums_to_one() {
        let data = two_feature_data();
        let models = vec![
            linear(array![[-0.05, -0.1], [0.0, 0.0]], array![0.0, 0.0]),
            linear(array![[-0.02, -0.3], [0.0, 0.0]], array![0.5, 0.0]),
        ];
        let grid = [0.0, 10.0, 20.0, 30.0];
        let c = slice_curve(&models, &data, &[0, 1, 2, 3], 0, &grid).unwrap();
        assert_eq!(c.base_point, vec![25.0, 5.0]);
        assert_eq!(c.per_model.len(), 2);
        for row in c.ensemble_mean.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
        assert!(slice_curve(&models, &data, &[0], 0, &[1.0, 1.0]).is_err());
        let d = slice_derivative_curve(&models, &data, &[0, 1, 2, 3], 0, &grid).unwrap();
        for row in d.ensemble_mean.rows() {
            assert!(row.sum().abs() < 1e-12);
        }
    }

    #[test]
    fn elasticity_table_shapes_and_sums() {
        let data = two_feature_data();
        let models = vec![linear(array![[-0.05, -0.1], [0.0, 0.0]], array![0.0, 0.0])];
        let t = elasticity_table(&models, &data, &[0, 1, 2, 3]).unwrap();
        assert_eq!(t.mean.dim(), (2, 2));
        assert_eq!(t.undefined, 0);
        assert!(t.std.iter().all(|s| *s == 0.0));
        let d = derivative_table(&models, &data, &[0, 1, 2, 3]).unwrap();
        for row in d.mean.rows() {
            assert!(row.sum().abs() < 1e-15);
        }
    }

    #[test]
    fn vot_modes() {
        let data = two_feature_data();
        let models = vec![
            linear(array![[-0.05, -0.1], [0.0, 0.0]], array![0.0, 0.0]),
            linear(array![[-0.1, -0.1], [0.0, 0.0]], array![0.0, 0.0]),
        ];
        let idx = [0, 1, 2, 3];
        let s = vot_stats(&models, &data, &idx, 0, 1, VotMode::PerIndividual { model: 0 }, 60.0).unwrap();
        assert_eq!(s.values.len(), 4);
        assert!((s.median.unwrap() - 30.0).abs() < 1e-9);
        assert_eq!(s.share_negative, 0.0);
        let t = vot_stats(&models, &data, &idx, 0, 1, VotMode::PerTraining, 1.0).unwrap();
        assert_eq!(t.values.len(), 2);
        assert!((t.median.unwrap() - 0.5).abs() < 1e-9);
        let none = vec![linear(array![[-0.05, 0.0], [0.0, 0.0]], array![0.0, 0.0])];
        let u = vot_stats(&none, &data, &idx, 0, 1, VotMode::PerTraining, 1.0).unwrap();
        assert_eq!(u.share_undefined, 1.0);
        assert_eq!(u.median, None);
    }

    #[test]
    fn welfare_zero_for_identical_scenarios() {
        let data = two_feature_data();
        let models = vec![linear(array![[-0.05, -0.1], [0.0, 0.0]], array![0.0, 0.0])];
        let idx = [0, 1, 2, 3];
        let a = alphas(&models, &data, &idx, Some(0)).unwrap();
        assert!(a.iter().all(|v| (v - 0.1).abs() < 1e-12));
        let s = Scenario {
            edits: vec![FeatureEdit {
                feature: 1,
                op: EditOp::Offset(-1.0),
            }],
        };
        let w = welfare_change(&models, &data, &idx, &s, &s, &a).unwrap();
        assert_eq!(w.total, 0.0);
        let w = welfare_change(&models, &data, &idx, &Scenario::identity(), &s, &a).unwrap();
        assert!(w.total > 0.0);
        assert_eq!(w.n_included, 4);
        let bad = vec![0.0; 4];
        assert_eq!(
            welfare_change(&models, &data, &idx, &Scenario::identity(), &s, &bad),
            Err(EconError::NoPositiveAlpha)
        );
        assert_eq!(alphas(&models, &data, &idx, Some(1)), Err(EconError::MissingCost(1)));
    }

    #[test]
    fn welfare_hand_computed() {
        // V0 = (0, 0), V1 = (ln 2, ln 2), alpha = 1 -> ln 2.
        let data = Dataset::new(
            array![[0.0]],
            vec![0],
            vec!["x".into()],
            vec!["a".into(), "b".into()],
            None,
        )
        .unwrap();
        let m = vec![linear(array![[1.0], [1.0]], array![0.0, 0.0])];
        let after = Scenario {
            edits: vec![FeatureEdit {
                feature: 0,
                op: EditOp::Set(2f64.ln()),
            }],
        };
        let w = welfare_change(&m, &data, &[0], &Scenario::identity(), &after, &[1.0]).unwrap();
        assert!((w.total - 2f64.ln()).abs() < 1e-15);
        // Single alternative: V0 = 0, V1 = 3, alpha = 2 -> 1.5.
        assert_eq!((logsumexp(&[3.0]) - logsumexp(&[0.0])) / 2.0, 1.5);
    }

    #[test]
    fn scenario_edits() {
        let s = Scenario {
            edits: vec![
                FeatureEdit {
                    feature: 0,
                    op: EditOp::Set(5.0),
                },
                FeatureEdit {
                    feature: 1,
                    op: EditOp::Offset(-2.0),
                },
            ],
        };
        assert_eq!(s.apply(&[1.0, 3.0]), vec![5.0, 1.0]);
        assert_eq!(Scenario::identity().apply(&[1.0]), vec![1.0]);
    }
}
