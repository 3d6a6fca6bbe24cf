//! Random hyperparameter search selected by validation accuracy.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Dataset, SplitIndices};
use crate::network::Architecture;
use crate::parallel::run_indexed;
use crate::seed::derive_seed;
use crate::training::{train, Hyperparameters, TrainOptions, TrainedModel};

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("invalid search space: {0}")]
    InvalidSpace(String),
    #[error("at least one candidate is required")]
    NoCandidates,
    #[error("all {0} candidates failed to train")]
    AllFailed(usize),
}

/// Finite choice lists for each searched hyperparameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSpace {
    pub depth: Vec<usize>,
    pub width: Vec<usize>,
    pub l1: Vec<f64>,
    pub l2: Vec<f64>,
    pub dropout: Vec<f64>,
}

impl Default for SearchSpace {
    fn default() -> Self {
        default_space()
    }
}

impl SearchSpace {
    pub fn validate(&self) -> Result<(), SearchError> {
        let bad = |m: &str| Err(SearchError::InvalidSpace(m.to_string()));
        if self.depth.is_empty()
            || self.width.is_empty()
            || self.l1.is_empty()
            || self.l2.is_empty()
            || self.dropout.is_empty()
        {
            return bad("every axis needs at least one value");
        }
        if self.width.contains(&0) && self.depth.iter().any(|&d| d > 0) {
            return bad("width must be at least 1");
        }
        if self.l1.iter().chain(&self.l2).any(|g| !(*g >= 0.0 && g.is_finite())) {
            return bad("penalty constants must be finite and non-negative");
        }
        if self.dropout.iter().any(|r| !(0.0..1.0).contains(r)) {
            return bad("dropout rates must be in [0, 1)");
        }
        Ok(())
    }

    /// Number of distinct configurations.
    pub fn cardinality(&self) -> usize {
        self.depth.len() * self.width.len() * self.l1.len() * self.l2.len() * self.dropout.len()
    }
}

/// Depth 1-10, widths 25-200, six L1 and six L2 constants, two dropout rates.
pub fn default_space() -> SearchSpace {
    let penalties = vec![0.1, 1e-2, 1e-3, 1e-5, 1e-10, 1e-20];
    SearchSpace {
        depth: (1..=10).collect(),
        width: vec![25, 50, 100, 150, 200],
        l1: penalties.clone(),
        l2: penalties,
        dropout: vec![0.01, 1e-5],
    }
}

/// Training seed of candidate `index` in a search seeded with `search_seed`.
pub fn candidate_seed(search_seed: u64, index: usize) -> u64 {
    derive_seed(search_seed, index as u64)
}

/// `s` configurations, each axis drawn uniformly with replacement. Fixed
/// settings (learning rate, batch size, epochs) come from `base`. Candidate
/// `i` depends only on `(seed, i)`.
pub fn sample_configs(space: &SearchSpace, s: usize, seed: u64, base: &Hyperparameters) -> Vec<Hyperparameters> {
    (0..s)
        .map(|i| {
            let cand_seed = candidate_seed(seed, i);
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cand_seed, 0x5a3));
            Hyperparameters {
                depth: *space.depth.choose(&mut rng).expect("non-empty"),
                width: *space.width.choose(&mut rng).expect("non-empty"),
                l1: *space.l1.choose(&mut rng).expect("non-empty"),
                l2: *space.l2.choose(&mut rng).expect("non-empty"),
                dropout: *space.dropout.choose(&mut rng).expect("non-empty"),
                seed: cand_seed,
                ..base.clone()
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub enum CandidateOutcome {
    Trained(Box<TrainedModel>),
    Failed(String),
}

#[derive(Debug, Clone)]
pub struct Candidate {
    pub index: usize,
    pub hyper: Hyperparameters,
    pub n_params: usize,
    pub outcome: CandidateOutcome,
    pub wall_time_secs: f64,
}

impl Candidate {
    pub fn val_accuracy(&self) -> Option<f64> {
        match &self.outcome {
            CandidateOutcome::Trained(m) => Some(m.val_accuracy),
            CandidateOutcome::Failed(_) => None,
        }
    }

    pub fn model(&self) -> Option<&TrainedModel> {
        match &self.outcome {
            CandidateOutcome::Trained(m) => Some(m),
            CandidateOutcome::Failed(_) => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SearchResult {
    pub candidates: Vec<Candidate>,
    pub best_index: usize,
}

impl SearchResult {
    pub fn best(&self) -> &Candidate {
        &self.candidates[self.best_index]
    }

    pub fn best_model(&self) -> &TrainedModel {
        self.best().model().expect("best candidate trained")
    }

    pub fn n_failed(&self) -> usize {
        self.candidates.iter().filter(|c| c.val_accuracy().is_none()).count()
    }
}

/// Highest validation accuracy; ties go to fewer parameters, then lower index.
/// Failed candidates (`None`) are skipped.
pub fn select_best(scores: &[(Option<f64>, usize)]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &(acc, n_params)) in scores.iter().enumerate() {
        let Some(acc) = acc else { continue };
        best = match best {
            None => Some(i),
            Some(b) => {
                let (b_acc, b_params) = (scores[b].0.expect("scored"), scores[b].1);
                if acc > b_acc || (acc == b_acc && n_params < b_params) {
                    Some(i)
                } else {
                    Some(b)
                }
            }
        };
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchSettings {
    pub candidates: usize,
    pub seed: u64,
    /// Source of the fixed training settings.
    pub base: Hyperparameters,
    pub options: TrainOptions,
    pub workers: usize,
}

/// Samples and trains `settings.candidates` configurations and selects the
/// best by validation accuracy. Failed trainings are kept in the result and
/// excluded from selection.
pub fn random_search(
    data: &Dataset,
    splits: &SplitIndices,
    space: &SearchSpace,
    settings: &SearchSettings,
) -> Result<SearchResult, SearchError> {
    space.validate()?;
    if settings.candidates == 0 {
        return Err(SearchError::NoCandidates);
    }
    let configs = sample_configs(space, settings.candidates, settings.seed, &settings.base);
    let candidates = run_indexed(settings.workers, configs.len(), |i| {
        let hyper = configs[i].clone();
        let n_params = Architecture::new(data.n_features(), data.n_alts(), hyper.depth, hyper.width)
            .map(|a| a.n_params())
            .unwrap_or(0);
        let start = Instant::now();
        let outcome = match train(data, splits, &hyper, &settings.options) {
            Ok(m) => CandidateOutcome::Trained(Box::new(m)),
            Err(e) => CandidateOutcome::Failed(e.to_string()),
        };
        Candidate {
            index: i,
            hyper,
            n_params,
            outcome,
            wall_time_secs: start.elapsed().as_secs_f64(),
        }
    });
    let scores: Vec<(Option<f64>, usize)> = candidates.iter().map(|c| (c.val_accuracy(), c.n_params)).collect();
    let best_index = select_best(&scores).ok_or(SearchError::AllFailed(candidates.len()))?;
    Ok(SearchResult { candidates, best_index })
}

/// Order-of-magnitude capacity figure `W * L * log2(W)` for a network with
/// `W` weights and `L` layers, with constant 1. Diagnostic only.
pub fn vc_bound(n_weights: usize, depth_total: usize) -> f64 {
    assert!(n_weights >= 2 && depth_total >= 1, "vc_bound needs W >= 2 and L >= 1");
    let w = n_weights as f64;
    w * depth_total as f64 * w.log2()
}
