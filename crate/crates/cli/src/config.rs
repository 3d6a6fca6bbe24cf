//! Run configuration, read from a TOML file. Unknown keys are errors.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use choicenet::data::{load_dataset, synthesize, GroundTruth, Schema, SplitKind, DEFAULT_RATIOS};
use choicenet::hypersearch::SearchSpace;
use choicenet::{Dataset, Hyperparameters, TrainOptions};
use serde::{Deserialize, Serialize};

pub const DEFAULT_CANDIDATES: usize = 20;
pub const DEFAULT_REPEATS: usize = 10;
pub const DEFAULT_SEED: u64 = 0;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Default for every seed not set in its own section.
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub data: Option<DataConfig>,
    pub synth: Option<SynthConfig>,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub search: SearchConfig,
    #[serde(default)]
    pub repeat: RepeatConfig,
    #[serde(default)]
    pub econ: EconConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub path: PathBuf,
    /// Column roles; defaults to `<stem>.schema.json` next to the data file.
    pub schema: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub preset: String,
    pub n: usize,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    pub ratios: Option<[f64; 3]>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub depth: Option<usize>,
    pub width: Option<usize>,
    pub l1: Option<f64>,
    pub l2: Option<f64>,
    pub dropout: Option<f64>,
    pub learn_rate: Option<f64>,
    pub batch_size: Option<usize>,
    pub epochs: Option<usize>,
    pub seed: Option<u64>,
    pub standardize: Option<bool>,
    pub early_stopping_patience: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchConfig {
    pub candidates: Option<usize>,
    pub seed: Option<u64>,
    pub space: Option<SearchSpace>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RepeatConfig {
    pub count: Option<usize>,
    pub seed_base: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

impl GridConfig {
    pub fn values(&self) -> Result<Vec<f64>> {
        if self.points < 2 || !self.start.is_finite() || !self.stop.is_finite() || self.start >= self.stop {
            bail!("slice grid needs start < stop and at least 2 points");
        }
        let step = (self.stop - self.start) / (self.points - 1) as f64;
        Ok((0..self.points)
            .map(|i| {
                if i + 1 == self.points {
                    self.stop
                } else {
                    self.start + step * i as f64
                }
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EditConfig {
    pub feature: String,
    pub set: Option<f64>,
    pub offset: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EconConfig {
    /// Split to analyze: train, val or test (default).
    pub split: Option<SplitKind>,
    pub slice_feature: Option<String>,
    pub slice_grid: Option<GridConfig>,
    pub vot_time: Option<String>,
    pub vot_cost: Option<String>,
    /// Multiplier for reported values of time, e.g. 60 for per-minute data
    /// reported per hour.
    pub vot_scale: Option<f64>,
    /// Model index used for the per-individual value-of-time distribution.
    pub vot_model: Option<usize>,
    /// Edits defining the policy scenario compared with the status quo.
    #[serde(default)]
    pub scenario: Vec<EditConfig>,
    /// Alternative whose cost defines the marginal utility of money;
    /// defaults to each individual's predicted alternative.
    pub alpha_alternative: Option<String>,
    /// Train a depth-0 comparison group when no group has depth 0 (default true).
    pub baseline: Option<bool>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn base_seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }

    pub fn split_ratios(&self) -> [f64; 3] {
        self.split.ratios.unwrap_or(DEFAULT_RATIOS)
    }

    pub fn split_seed(&self) -> u64 {
        self.split.seed.unwrap_or(self.base_seed())
    }

    pub fn hyperparameters(&self) -> Hyperparameters {
        let d = Hyperparameters::default();
        let t = &self.train;
        Hyperparameters {
            depth: t.depth.unwrap_or(d.depth),
            width: t.width.unwrap_or(d.width),
            l1: t.l1.unwrap_or(d.l1),
            l2: t.l2.unwrap_or(d.l2),
            dropout: t.dropout.unwrap_or(d.dropout),
            learn_rate: t.learn_rate.unwrap_or(d.learn_rate),
            batch_size: t.batch_size.unwrap_or(d.batch_size),
            epochs: t.epochs.unwrap_or(d.epochs),
            seed: t.seed.unwrap_or(self.base_seed()),
        }
    }

    pub fn train_options(&self) -> TrainOptions {
        let d = TrainOptions::default();
        TrainOptions {
            standardize: self.train.standardize.unwrap_or(d.standardize),
            early_stopping_patience: self.train.early_stopping_patience.or(d.early_stopping_patience),
        }
    }

    pub fn search_space(&self) -> SearchSpace {
        self.search.space.clone().unwrap_or_default()
    }

    pub fn search_candidates(&self) -> usize {
        self.search.candidates.unwrap_or(DEFAULT_CANDIDATES)
    }

    pub fn search_seed(&self) -> u64 {
        self.search.seed.unwrap_or(self.base_seed())
    }

    pub fn repeat_count(&self) -> usize {
        self.repeat.count.unwrap_or(DEFAULT_REPEATS)
    }

    pub fn repeat_seed_base(&self) -> u64 {
        self.repeat.seed_base.unwrap_or(self.base_seed())
    }

    /// Applies command-line overrides shared by every command.
    pub fn apply_overrides(&mut self, data: Option<&Path>, seed: Option<u64>, workers: Option<usize>) {
        if let Some(path) = data {
            self.data = Some(DataConfig {
                path: path.to_path_buf(),
                schema: None,
            });
            self.synth = None;
        }
        if seed.is_some() {
            self.seed = seed;
        }
        if workers.is_some() {
            self.workers = workers;
        }
    }

    pub fn workers(&self) -> usize {
        self.workers.unwrap_or(1).max(1)
    }
}

/// Sidecar schema path for a data file: `x.csv` -> `x.schema.json`.
pub fn default_schema_path(data: &Path) -> PathBuf {
    let stem = data
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    data.with_file_name(format!("{stem}.schema.json"))
}

pub fn synth_truth(s: &SynthConfig) -> Result<GroundTruth> {
    if s.n == 0 {
        bail!("synth.n must be at least 1");
    }
    GroundTruth::preset(&s.preset).with_context(|| {
        format!(
            "unknown preset {:?}; expected one of {:?}",
            s.preset,
            GroundTruth::PRESETS
        )
    })
}

/// A dataset plus a description of where it came from.
pub struct LoadedData {
    pub data: Dataset,
    pub source: String,
}

/// Resolves the single configured data source.
pub fn load_data(config: &RunConfig) -> Result<LoadedData> {
    match (&config.data, &config.synth) {
        (Some(_), Some(_)) => bail!("config has both [data] and [synth]; exactly one data source is allowed"),
        (None, None) => bail!("no data source: pass --data or set [data] or [synth] in the config"),
        (Some(d), None) => {
            let schema_path = d.schema.clone().unwrap_or_else(|| default_schema_path(&d.path));
            let schema =
                Schema::load(&schema_path).with_context(|| format!("loading schema {}", schema_path.display()))?;
            let data = load_dataset(&d.path, &schema).with_context(|| format!("loading data {}", d.path.display()))?;
            Ok(LoadedData {
                data,
                source: d.path.display().to_string(),
            })
        }
        (None, Some(s)) => {
            let truth = synth_truth(s)?;
            let seed = s.seed.unwrap_or(config.base_seed());
            let data = synthesize(&truth, s.n, seed)?;
            Ok(LoadedData {
                data,
                source: format!("synth:{}:{}:{}", s.preset, s.n, seed),
            })
        }
    }
}
