use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::autodiff::{self, InputJacobian};
use crate::data::Standardizer;
use crate::network::{self, Architecture, ModelParameters};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hyperparameters {
    pub depth: usize,
    pub width: usize,
    pub l1: f64,
    pub l2: f64,
    pub dropout: f64,
    pub learn_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for Hyperparameters {
    /// Linear-utility baseline with the default optimizer settings.
    fn default() -> Self {
        Self {
            depth: 0,
            width: 0,
            l1: 0.0,
            l2: 0.0,
            dropout: 0.0,
            learn_rate: 1e-3,
            batch_size: 128,
            epochs: 100,
            seed: 0,
        }
    }
}

impl Hyperparameters {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |msg: &str| Err(TrainError::InvalidHyperparameters(msg.to_string()));
        if self.depth > 0 && self.width == 0 {
            return bad("width must be at least 1 when depth >= 1");
        }
        if !(self.l1 >= 0.0 && self.l1.is_finite()) || !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return bad("penalty constants must be finite and non-negative");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout rate must be in [0, 1)");
        }
        if !(self.learn_rate > 0.0 && self.learn_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return bad("batch size and epochs must be positive");
        }
        Ok(())
    }

    pub fn architecture(&self, input_dim: usize, n_alts: usize) -> Result<Architecture, TrainError> {
        Ok(Architecture::new(input_dim, n_alts, self.depth, self.width)?)
    }

    /// Same settings with a different seed.
    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainOptions {
    /// Fit a standardizer on the training split; otherwise use the identity.
    pub standardize: bool,
    /// Stop after this many epochs without validation improvement and keep
    /// the best parameters. Off by default.
    pub early_stopping_patience: Option<usize>,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            standardize: true,
            early_stopping_patience: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub data_term: f64,
    pub penalty_term: f64,
    pub val_accuracy: f64,
}

/// Where a model's training rows came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitProvenance {
    pub ratios: [f64; 3],
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub params: ModelParameters,
    pub standardizer: Standardizer,
    pub hyper: Hyperparameters,
    pub options: TrainOptions,
    pub history: Vec<EpochRecord>,
    pub val_accuracy: f64,
    pub data_fingerprint: String,
    pub split: Option<SplitProvenance>,
}

const MODEL_FORMAT: &str = "choicenet-model";
const MODEL_VERSION: u32 = 1;

#[derive(Serialize)]
struct ModelFileRef<'a> {
    format: &'a str,
    version: u32,
    model: &'a TrainedModel,
}

#[derive(Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    model: TrainedModel,
}

impl TrainedModel {
    /// Wraps hand-built parameters for analysis; no training provenance.
    pub fn from_parameters(params: ModelParameters, standardizer: Standardizer) -> Self {
        assert_eq!(standardizer.n_features(), params.arch.input_dim, "standardizer width");
        let hyper = Hyperparameters {
            depth: params.arch.depth,
            width: params.arch.width,
            ..Hyperparameters::default()
        };
        Self {
            params,
            standardizer,
            hyper,
            options: TrainOptions::default(),
            history: vec![],
            val_accuracy: 0.0,
            data_fingerprint: String::new(),
            split: None,
        }
    }

    pub fn arch(&self) -> Architecture {
        self.params.arch
    }

    pub fn n_features(&self) -> usize {
        self.params.arch.input_dim
    }

    pub fn n_alts(&self) -> usize {
        self.params.arch.n_alts
    }

    /// Utilities at an input in original units.
    pub fn utilities(&self, x: &[f64]) -> Vec<f64> {
        network::utilities(&self.params, &self.standardizer.transform_row(x)).expect("input width checked by caller")
    }

    pub fn probabilities(&self, x: &[f64]) -> Vec<f64> {
        network::probabilities(&self.utilities(x))
    }

    pub fn input_jacobian(&self, x: &[f64]) -> InputJacobian {
        autodiff::input_jacobian(&self.params, &self.standardizer, x).expect("input width checked by caller")
    }

    pub fn utility_gradient(&self, x: &[f64], alt: usize) -> Vec<f64> {
        autodiff::utility_gradient(&self.params, &self.standardizer, x, alt).expect("input width checked by caller")
    }

    /// Versioned JSON container; identical models serialize to identical bytes.
    pub fn to_json(&self) -> String {
        let file = ModelFileRef {
            format: MODEL_FORMAT,
            version: MODEL_VERSION,
            model: self,
        };
        let mut s = serde_json::to_string_pretty(&file).expect("model serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, TrainError> {
        let file: ModelFile = serde_json::from_str(text).map_err(|e| TrainError::ModelFile(e.to_string()))?;
        if file.format != MODEL_FORMAT || file.version != MODEL_VERSION {
            return Err(TrainError::ModelFile(format!(
                "unsupported model container {} v{}",
                file.format, file.version
            )));
        }
        let model = file.model;
        ModelParameters::from_layers(model.params.arch, model.params.layers.clone())?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<(), TrainError> {
        std::fs::write(path, self.to_json()).map_err(|e| TrainError::ModelFile(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, TrainError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| TrainError::ModelFile(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

/// Models trained on the same data with the same hyperparameters, differing
/// only in seed.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    models: Vec<TrainedModel>,
}

impl Ensemble {
    pub fn new(models: Vec<TrainedModel>) -> Result<Self, TrainError> {
        let first = models
            .first()
            .ok_or_else(|| TrainError::InvalidEnsemble("no models".into()))?;
        for m in &models[1..] {
            if m.data_fingerprint != first.data_fingerprint {
                return Err(TrainError::InvalidEnsemble(
                    "models were trained on different data".into(),
                ));
            }
            if m.hyper.with_seed(0) != first.hyper.with_seed(0) || m.arch() != first.arch() {
                return Err(TrainError::InvalidEnsemble(
                    "models have different hyperparameters".into(),
                ));
            }
        }
        Ok(Self { models })
    }

    pub fn models(&self) -> &[TrainedModel] {
        &self.models
    }

    pub fn into_models(self) -> Vec<TrainedModel> {
        self.models
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn hyper(&self) -> &Hyperparameters {
        &self.models[0].hyper
    }

    /// Across-model mean of choice probabilities.
    pub fn mean_probabilities(&self, x: &[f64]) -> Vec<f64> {
        mean_probabilities(&self.models, x)
    }
}

pub(crate) fn mean_probabilities(models: &[TrainedModel], x: &[f64]) -> Vec<f64> {
    let mut acc = vec![0.0; models[0].n_alts()];
    for m in models {
        for (a, p) in acc.iter_mut().zip(m.probabilities(x)) {
            *a += p;
        }
    }
    acc.iter().map(|a| a / models.len() as f64).collect()
}
