//! Synthetic choice data with a known generating utility.
//!
//! A [`GroundTruth`] holds linear utilities plus optional interaction and
//! threshold terms. Choices are drawn from the softmax of the true utilities,
//! so analytic shares, elasticities and values of time are available as
//! reference values for fitted models.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AttributeMap, AttributeRole, DataError, Dataset, Schema};
use crate::network::probabilities;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureSampler {
    /// Uniform on `[low, high)`; `low == high` gives a constant feature.
    Uniform { low: f64, high: f64 },
}

impl FeatureSampler {
    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            FeatureSampler::Uniform { low, high } => {
                if low == high {
                    low
                } else {
                    rng.gen_range(low..high)
                }
            }
        }
    }

    fn validate(&self) -> Result<(), String> {
        match *self {
            FeatureSampler::Uniform { low, high } if low.is_finite() && high.is_finite() && low <= high => Ok(()),
            FeatureSampler::Uniform { low, high } => Err(format!("bad uniform range [{low}, {high})")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub sampler: FeatureSampler,
}

impl FeatureSpec {
    pub fn uniform(name: &str, low: f64, high: f64) -> Self {
        Self {
            name: name.to_string(),
            sampler: FeatureSampler::Uniform { low, high },
        }
    }
}

/// Adds `coef * x[a] * x[b]` to one alternative's utility.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interaction {
    pub alternative: usize,
    pub features: [usize; 2],
    pub coef: f64,
}

/// Adds `coef` to one alternative's utility when `x[feature] > cutoff`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub alternative: usize,
    pub feature: usize,
    pub cutoff: f64,
    pub coef: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub alternatives: Vec<String>,
    pub features: Vec<FeatureSpec>,
    /// `K x d` linear utility weights, one row per alternative.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
    #[serde(default)]
    pub interactions: Vec<Interaction>,
    #[serde(default)]
    pub thresholds: Vec<Threshold>,
    #[serde(default)]
    pub attributes: Vec<AttributeRole>,
}

impl GroundTruth {
    pub fn linear(
        alternatives: Vec<String>,
        features: Vec<FeatureSpec>,
        weights: Vec<Vec<f64>>,
        biases: Vec<f64>,
    ) -> Result<Self, DataError> {
        let truth = Self {
            alternatives,
            features,
            weights,
            biases,
            interactions: vec![],
            thresholds: vec![],
            attributes: vec![],
        };
        truth.validate()?;
        Ok(truth)
    }

    pub fn n_alts(&self) -> usize {
        self.alternatives.len()
    }

    pub fn n_features(&self) -> usize {
        self.features.len()
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.features.iter().map(|f| f.name.clone()).collect()
    }

    pub fn is_linear(&self) -> bool {
        self.interactions.is_empty() && self.thresholds.is_empty()
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |msg: String| Err(DataError::InvalidDesign(msg));
        let (k, d) = (self.n_alts(), self.n_features());
        if k < 2 || d == 0 {
            return bad(format!("need K >= 2 and d >= 1, got K={k}, d={d}"));
        }
        if self.weights.len() != k || self.weights.iter().any(|r| r.len() != d) {
            return bad(format!("weights must be {k} x {d}"));
        }
        if self.biases.len() != k {
            return bad(format!("expected {k} biases"));
        }
        if self
            .weights
            .iter()
            .flatten()
            .chain(&self.biases)
            .any(|w| !w.is_finite())
        {
            return bad("non-finite utility coefficient".into());
        }
        for f in &self.features {
            f.sampler.validate().map_err(DataError::InvalidDesign)?;
        }
        for t in &self.interactions {
            if t.alternative >= k || t.features.iter().any(|&j| j >= d) || !t.coef.is_finite() {
                return bad("interaction term out of range".into());
            }
        }
        for t in &self.thresholds {
            if t.alternative >= k || t.feature >= d || !t.coef.is_finite() || !t.cutoff.is_finite() {
                return bad("threshold term out of range".into());
            }
        }
        self.attribute_map()?;
        Ok(())
    }

    pub fn weight_matrix(&self) -> Array2<f64> {
        let (k, d) = (self.n_alts(), self.n_features());
        Array2::from_shape_fn((k, d), |(a, j)| self.weights[a][j])
    }

    pub fn bias_vector(&self) -> Array1<f64> {
        Array1::from(self.biases.clone())
    }

    pub fn attribute_map(&self) -> Result<Option<AttributeMap>, DataError> {
        Schema {
            choice_column: "choice".into(),
            feature_columns: None,
            alternatives: self.alternatives.clone(),
            attributes: self.attributes.clone(),
        }
        .attribute_map(&self.feature_names())
    }

    pub fn utilities(&self, x: &[f64]) -> Vec<f64> {
        let mut v: Vec<f64> = self
            .weights
            .iter()
            .zip(&self.biases)
            .map(|(row, b)| b + row.iter().zip(x).map(|(w, xj)| w * xj).sum::<f64>())
            .collect();
        for t in &self.interactions {
            v[t.alternative] += t.coef * x[t.features[0]] * x[t.features[1]];
        }
        for t in &self.thresholds {
            if x[t.feature] > t.cutoff {
                v[t.alternative] += t.coef;
            }
        }
        v
    }

    pub fn probabilities(&self, x: &[f64]) -> Vec<f64> {
        probabilities(&self.utilities(x))
    }

    /// Mean true choice probability per alternative over `idx`.
    pub fn analytic_shares(&self, data: &Dataset, idx: &[usize]) -> Vec<f64> {
        let mut shares = vec![0.0; self.n_alts()];
        for &i in idx {
            for (s, p) in shares.iter_mut().zip(self.probabilities(&data.row_vec(i))) {
                *s += p;
            }
        }
        shares.iter().map(|s| s / idx.len() as f64).collect()
    }

    /// Expected accuracy of predicting the true argmax over `idx`.
    pub fn bayes_accuracy(&self, data: &Dataset, idx: &[usize]) -> f64 {
        idx.iter()
            .map(|&i| self.probabilities(&data.row_vec(i)).into_iter().fold(0.0, f64::max))
            .sum::<f64>()
            / idx.len() as f64
    }

    /// Named presets: `travel`, `survey`, `nonlinear`.
    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "travel" => Some(Self::travel()),
            "survey" => Some(Self::survey()),
            "nonlinear" => Some(Self::nonlinear()),
            _ => None,
        }
    }

    pub const PRESETS: [&'static str; 3] = ["travel", "survey", "nonlinear"];

    /// Three modes, four features, linear utilities. Driving time and cost
    /// carry -0.25/min and -0.5/currency, a value of time of 0.5 per minute.
    /// Effects are strong enough that a 50,000-row sample pins every
    /// elasticity down to a few percent.
    pub fn travel() -> Self {
        Self {
            alternatives: names(&["drive", "transit", "walk"]),
            features: vec![
                FeatureSpec::uniform("drive_time", 10.0, 60.0),
                FeatureSpec::uniform("drive_cost", 1.0, 20.0),
                FeatureSpec::uniform("transit_cost", 1.0, 10.0),
                FeatureSpec::uniform("income", 1.0, 10.0),
            ],
            weights: vec![
                vec![-0.25, -0.5, 0.0, 0.75],
                vec![0.0, 0.0, -1.5, 0.0],
                vec![0.0, 0.0, 0.0, 0.0],
            ],
            biases: vec![10.5, 8.0, 0.0],
            interactions: vec![],
            thresholds: vec![],
            attributes: vec![
                AttributeRole {
                    alternative: "drive".into(),
                    cost: Some("drive_cost".into()),
                    time: vec!["drive_time".into()],
                },
                AttributeRole {
                    alternative: "transit".into(),
                    cost: Some("transit_cost".into()),
                    time: vec![],
                },
            ],
        }
    }

    /// Car/bus/walk with a cost-by-income interaction on car and a distance
    /// threshold on walk. Linear utilities cannot represent either term.
    pub fn nonlinear() -> Self {
        Self {
            alternatives: names(&["car", "bus", "walk"]),
            features: vec![
                FeatureSpec::uniform("car_time", 5.0, 60.0),
                FeatureSpec::uniform("car_cost", 1.0, 20.0),
                FeatureSpec::uniform("income", 1.0, 10.0),
                FeatureSpec::uniform("distance", 0.5, 10.0),
            ],
            weights: vec![
                vec![-0.04, -0.45, 0.0, 0.0],
                vec![0.0, 0.0, 0.0, 0.0],
                vec![0.0, 0.0, 0.0, -0.1],
            ],
            biases: vec![0.0, -0.8, 3.0],
            interactions: vec![Interaction {
                alternative: 0,
                features: [1, 2],
                coef: 0.08,
            }],
            thresholds: vec![Threshold {
                alternative: 2,
                feature: 3,
                cutoff: 3.0,
                coef: -5.0,
            }],
            attributes: vec![AttributeRole {
                alternative: "car".into(),
                cost: Some("car_cost".into()),
                time: vec!["car_time".into()],
            }],
        }
    }

    /// Five modes and 25 inputs, mirroring the shape of a stated-preference
    /// mode-choice survey. Socio-demographic weights are drawn once from a
    /// fixed stream so the preset never changes.
    pub fn survey() -> Self {
        let alternatives = names(&["walk", "transit", "ride_hail", "av", "drive"]);
        // (name, low, high, alternative, role) with role 't' time, 'c' cost
        let modal: [(&str, f64, f64, usize, char); 14] = [
            ("walk_time", 5.0, 60.0, 0, 't'),
            ("transit_cost", 1.0, 8.0, 1, 'c'),
            ("transit_walk_time", 2.0, 20.0, 1, 't'),
            ("transit_wait_time", 2.0, 20.0, 1, 't'),
            ("transit_ivt", 5.0, 60.0, 1, 't'),
            ("rh_cost", 5.0, 40.0, 2, 'c'),
            ("rh_wait_time", 2.0, 15.0, 2, 't'),
            ("rh_ivt", 5.0, 50.0, 2, 't'),
            ("av_cost", 5.0, 40.0, 3, 'c'),
            ("av_wait_time", 2.0, 15.0, 3, 't'),
            ("av_ivt", 5.0, 50.0, 3, 't'),
            ("drive_cost", 2.0, 30.0, 4, 'c'),
            ("drive_walk_time", 0.0, 10.0, 4, 't'),
            ("drive_ivt", 5.0, 50.0, 4, 't'),
        ];
        let socio: [(&str, f64, f64); 11] = [
            ("age", 18.0, 70.0),
            ("income", 1.0, 15.0),
            ("male", 0.0, 1.0),
            ("young", 0.0, 1.0),
            ("old", 0.0, 1.0),
            ("low_edu", 0.0, 1.0),
            ("high_edu", 0.0, 1.0),
            ("low_inc", 0.0, 1.0),
            ("high_inc", 0.0, 1.0),
            ("full_job", 0.0, 1.0),
            ("hh_size", 1.0, 6.0),
        ];
        let k = alternatives.len();
        let d = modal.len() + socio.len();
        let mut weights = vec![vec![0.0; d]; k];
        let mut features = Vec::with_capacity(d);
        let mut attributes: Vec<AttributeRole> = alternatives
            .iter()
            .map(|a| AttributeRole {
                alternative: a.clone(),
                cost: None,
                time: vec![],
            })
            .collect();
        for (j, &(name, low, high, alt, role)) in modal.iter().enumerate() {
            features.push(FeatureSpec::uniform(name, low, high));
            if role == 'c' {
                weights[alt][j] = -0.12;
                attributes[alt].cost = Some(name.to_string());
            } else {
                weights[alt][j] = if alt == 0 { -0.06 } else { -0.04 };
                attributes[alt].time.push(name.to_string());
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0025);
        for (s, &(name, low, high)) in socio.iter().enumerate() {
            let j = modal.len() + s;
            features.push(FeatureSpec::uniform(name, low, high));
            for row in weights.iter_mut().skip(1) {
                row[j] = rng.gen_range(-0.6..0.6) / (high - low);
            }
        }
        Self {
            alternatives,
            features,
            weights,
            biases: vec![1.5, 0.5, 0.0, 0.0, 1.0],
            interactions: vec![],
            thresholds: vec![],
            attributes,
        }
    }
}

fn names(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

/// Draws `n` observations: features i.i.d. from their samplers, then a
/// choice from the softmax of the true utilities. Deterministic in `seed`.
pub fn synthesize(truth: &GroundTruth, n: usize, seed: u64) -> Result<Dataset, DataError> {
    truth.validate()?;
    if n == 0 {
        return Err(DataError::InvalidDesign(
            "number of observations must be positive".into(),
        ));
    }
    let d = truth.n_features();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(n * d);
    let mut choices = Vec::with_capacity(n);
    let mut x = vec![0.0; d];
    for _ in 0..n {
        for (xj, f) in x.iter_mut().zip(&truth.features) {
            *xj = f.sampler.sample(&mut rng);
        }
        let probs = truth.probabilities(&x);
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut choice = probs.len() - 1;
        for (k, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                choice = k;
                break;
            }
        }
        values.extend_from_slice(&x);
        choices.push(choice);
    }
    let features = Array2::from_shape_vec((n, d), values).expect("n x d values");
    Dataset::new(
        features,
        choices,
        truth.feature_names(),
        truth.alternatives.clone(),
        truth.attribute_map()?,
    )
}

/// Multinomial-logit data from a `K x d` weight matrix and `K` biases.
pub fn synthesize_mnl(
    weights: &Array2<f64>,
    biases: &[f64],
    features: Vec<FeatureSpec>,
    n: usize,
    seed: u64,
) -> Result<(Dataset, GroundTruth), DataError> {
    let alternatives = (0..weights.nrows()).map(|k| format!("alt{k}")).collect();
    let rows = weights.rows().into_iter().map(|r| r.to_vec()).collect();
    let truth = GroundTruth::linear(alternatives, features, rows, biases.to_vec())?;
    let data = synthesize(&truth, n, seed)?;
    Ok((data, truth))
}
