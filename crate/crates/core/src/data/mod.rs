//! Choice datasets: loading, validation, splitting, standardization and
//! synthetic generation.

mod load;
mod split;
mod standardize;
pub mod synth;

pub use load::{load_dataset, write_dataset, AttributeRole, Schema};
pub use split::{split, SplitIndices, SplitKind, DEFAULT_RATIOS};
pub use standardize::{fit_standardizer, Standardizer};
pub use synth::{synthesize, synthesize_mnl, FeatureSampler, FeatureSpec, GroundTruth};

use std::collections::BTreeMap;
use std::path::PathBuf;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed delimited file: {0}")]
    Csv(#[from] csv::Error),
    #[error("malformed schema: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unknown column {0:?}")]
    UnknownColumn(String),
    #[error("row {row}, column {column:?}: non-numeric value {value:?}")]
    NonNumeric { row: usize, column: String, value: String },
    #[error("row {row}, column {column:?}: non-finite value")]
    NonFinite { row: usize, column: String },
    #[error("row {row}: choice out of range ({value} not in [0, {n_alts}))")]
    ChoiceOutOfRange { row: usize, value: String, n_alts: usize },
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("invalid dataset: {0}")]
    Invalid(String),
    #[error("cannot split {n} observations into three non-empty parts with ratios {ratios:?}")]
    SplitTooSmall { n: usize, ratios: [f64; 3] },
    #[error("split ratios must be positive and sum to 1, got {0:?}")]
    InvalidRatios([f64; 3]),
    #[error("invalid synthetic design: {0}")]
    InvalidDesign(String),
}

/// Cost and time attributes that belong to one alternative.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AltAttributes {
    pub cost: Option<usize>,
    pub time: Vec<usize>,
}

/// Alternative index -> its cost/time feature indices.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeMap {
    pub by_alt: BTreeMap<usize, AltAttributes>,
}

impl AttributeMap {
    pub fn get(&self, alt: usize) -> Option<&AltAttributes> {
        self.by_alt.get(&alt)
    }

    pub fn cost_feature(&self, alt: usize) -> Option<usize> {
        self.by_alt.get(&alt).and_then(|a| a.cost)
    }

    fn validate(&self, n_features: usize, n_alts: usize) -> Result<(), DataError> {
        for (&alt, attrs) in &self.by_alt {
            if alt >= n_alts {
                return Err(DataError::Invalid(format!(
                    "attribute map names alternative {alt}, but there are {n_alts}"
                )));
            }
            for &j in attrs.cost.iter().chain(&attrs.time) {
                if j >= n_features {
                    return Err(DataError::Invalid(format!(
                        "attribute map feature index {j} out of range"
                    )));
                }
            }
            if let Some(c) = attrs.cost {
                if attrs.time.contains(&c) {
                    return Err(DataError::Invalid(format!(
                        "feature {c} is both cost and time of alternative {alt}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// An immutable choice dataset in original feature units.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Array2<f64>,
    choices: Vec<usize>,
    feature_names: Vec<String>,
    alt_names: Vec<String>,
    attribute_map: Option<AttributeMap>,
}

impl Dataset {
    pub fn new(
        features: Array2<f64>,
        choices: Vec<usize>,
        feature_names: Vec<String>,
        alt_names: Vec<String>,
        attribute_map: Option<AttributeMap>,
    ) -> Result<Self, DataError> {
        let (n, d) = features.dim();
        if n != choices.len() {
            return Err(DataError::Invalid(format!(
                "{n} feature rows but {} choices",
                choices.len()
            )));
        }
        if d == 0 {
            return Err(DataError::Invalid("no feature columns".into()));
        }
        if feature_names.len() != d {
            return Err(DataError::Invalid(format!(
                "{d} features but {} feature names",
                feature_names.len()
            )));
        }
        let k = alt_names.len();
        if k < 2 {
            return Err(DataError::Invalid("at least two alternatives are required".into()));
        }
        if let Some((row, &c)) = choices.iter().enumerate().find(|(_, &c)| c >= k) {
            return Err(DataError::ChoiceOutOfRange {
                row,
                value: c.to_string(),
                n_alts: k,
            });
        }
        if let Some(((row, col), _)) = features.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(DataError::NonFinite {
                row,
                column: feature_names[col].clone(),
            });
        }
        if let Some(map) = &attribute_map {
            map.validate(d, k)?;
        }
        Ok(Self {
            features,
            choices,
            feature_names,
            alt_names,
            attribute_map,
        })
    }

    pub fn n_obs(&self) -> usize {
        self.choices.len()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn n_alts(&self) -> usize {
        self.alt_names.len()
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.features.row(i)
    }

    pub fn row_vec(&self, i: usize) -> Vec<f64> {
        self.features.row(i).to_vec()
    }

    pub fn choices(&self) -> &[usize] {
        &self.choices
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn alt_names(&self) -> &[String] {
        &self.alt_names
    }

    pub fn attribute_map(&self) -> Option<&AttributeMap> {
        self.attribute_map.as_ref()
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }

    pub fn alt_index(&self, name: &str) -> Option<usize> {
        self.alt_names.iter().position(|n| n == name)
    }

    /// Observed choice shares over `idx`.
    pub fn observed_shares(&self, idx: &[usize]) -> Vec<f64> {
        let mut counts = vec![0.0; self.n_alts()];
        for &i in idx {
            counts[self.choices[i]] += 1.0;
        }
        let n = idx.len().max(1) as f64;
        counts.iter().map(|c| c / n).collect()
    }

    /// Per-feature mean over `idx`.
    pub fn feature_means(&self, idx: &[usize]) -> Vec<f64> {
        let mut sums = vec![0.0; self.n_features()];
        for &i in idx {
            for (s, v) in sums.iter_mut().zip(self.features.row(i)) {
                *s += v;
            }
        }
        let n = idx.len().max(1) as f64;
        sums.iter().map(|s| s / n).collect()
    }

    /// SHA-256 over shape, feature bits and choices, hex encoded.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.n_obs() as u64).to_le_bytes());
        h.update((self.n_features() as u64).to_le_bytes());
        h.update((self.n_alts() as u64).to_le_bytes());
        for v in self.features.iter() {
            h.update(v.to_le_bytes());
        }
        for &c in &self.choices {
            h.update((c as u64).to_le_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}
