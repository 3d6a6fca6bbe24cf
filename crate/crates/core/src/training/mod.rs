//! Minibatch Adam training of the penalized cross-entropy, plus repeated
//! seeded trainings with fixed hyperparameters.

mod adam;
mod model;

pub use adam::{adam_step, AdamState};
pub(crate) use model::mean_probabilities;
pub use model::{Ensemble, EpochRecord, Hyperparameters, SplitProvenance, TrainOptions, TrainedModel};

use std::collections::HashSet;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::autodiff::{param_gradients_masked, Batch, BatchError};
use crate::data::{fit_standardizer, Dataset, SplitIndices, Standardizer};
use crate::network::{forward, init_glorot, DropoutMasks, ModelParameters, NetworkError};
use crate::parallel::run_indexed;
use crate::seed::derive_seed;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparameters(String),
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error(
        "non-finite loss at epoch {epoch} with learning rate {learn_rate}; \
         try a smaller learning rate or standardized inputs"
    )]
    NonFiniteLoss { epoch: usize, learn_rate: f64 },
    #[error("training with seed {seed} failed: {source}")]
    Seed {
        seed: u64,
        #[source]
        source: Box<TrainError>,
    },
    #[error("invalid ensemble: {0}")]
    InvalidEnsemble(String),
    #[error("model file: {0}")]
    ModelFile(String),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Batch(#[from] BatchError),
}

/// Trains one model on `splits.train` and evaluates it on `splits.val`.
///
/// Pure in `(data, splits, hyper, options)`: Glorot initialization uses
/// `hyper.seed`, and minibatch shuffling and dropout draw from a stream
/// derived from it.
pub fn train(
    data: &Dataset,
    splits: &SplitIndices,
    hyper: &Hyperparameters,
    options: &TrainOptions,
) -> Result<TrainedModel, TrainError> {
    hyper.validate()?;
    validate_indices(&splits.train, data.n_obs(), "training")?;
    validate_indices(&splits.val, data.n_obs(), "validation")?;
    let arch = hyper.architecture(data.n_features(), data.n_alts())?;
    let k = data.n_alts();

    let standardizer = if options.standardize {
        fit_standardizer(data, &splits.train)
    } else {
        Standardizer::identity(data.n_features())
    };
    let x_all = standardizer.transform(data.features().view());
    let x_train = x_all.select(Axis(0), &splits.train);
    let y_train: Vec<usize> = splits.train.iter().map(|&i| data.choices()[i]).collect();
    let x_val = x_all.select(Axis(0), &splits.val);
    let y_val: Vec<usize> = splits.val.iter().map(|&i| data.choices()[i]).collect();

    let mut params = init_glorot(arch, hyper.seed);
    let mut adam = AdamState::new(&params);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(hyper.seed, 1));
    let mut order: Vec<usize> = (0..y_train.len()).collect();
    let use_dropout = hyper.dropout > 0.0 && arch.depth > 0;

    let mut history = Vec::with_capacity(hyper.epochs);
    let mut best: Option<(f64, ModelParameters)> = None;
    let mut stale = 0;
    let mut yb = Vec::with_capacity(hyper.batch_size);
    for epoch in 1..=hyper.epochs {
        order.shuffle(&mut rng);
        let (mut data_sum, mut pen_sum, mut n_batches) = (0.0, 0.0, 0usize);
        for chunk in order.chunks(hyper.batch_size) {
            let xb = x_train.select(Axis(0), chunk);
            yb.clear();
            yb.extend(chunk.iter().map(|&i| y_train[i]));
            let masks = use_dropout.then(|| DropoutMasks::sample(&arch, chunk.len(), hyper.dropout, &mut rng));
            let batch = Batch::new(xb.view(), &yb, k)?;
            let (lv, grads) = param_gradients_masked(&params, batch, hyper.l1, hyper.l2, masks.as_ref())?;
            if !lv.total.is_finite() {
                return Err(TrainError::NonFiniteLoss {
                    epoch,
                    learn_rate: hyper.learn_rate,
                });
            }
            adam.step(&mut params, &grads, hyper.learn_rate);
            data_sum += lv.data_term;
            pen_sum += lv.penalty_term;
            n_batches += 1;
        }
        if !params.is_finite() {
            return Err(TrainError::NonFiniteLoss {
                epoch,
                learn_rate: hyper.learn_rate,
            });
        }
        let val_accuracy = accuracy_standardized(&params, &x_val, &y_val)?;
        history.push(EpochRecord {
            epoch,
            data_term: data_sum / n_batches as f64,
            penalty_term: pen_sum / n_batches as f64,
            val_accuracy,
        });
        if let Some(patience) = options.early_stopping_patience {
            match &best {
                Some((acc, _)) if val_accuracy <= *acc => {
                    stale += 1;
                    if stale > patience {
                        break;
                    }
                }
                _ => {
                    best = Some((val_accuracy, params.clone()));
                    stale = 0;
                }
            }
        }
    }
    let (val_accuracy, params) = match best {
        Some(b) => b,
        None => {
            let acc = history.last().map(|h| h.val_accuracy).unwrap_or(0.0);
            (acc, params)
        }
    };
    Ok(TrainedModel {
        params,
        standardizer,
        hyper: hyper.clone(),
        options: options.clone(),
        history,
        val_accuracy,
        data_fingerprint: data.fingerprint(),
        split: Some(SplitProvenance {
            ratios: splits.ratios,
            seed: splits.seed,
        }),
    })
}

/// Trains with seeds `seed_base .. seed_base + m`, returning every outcome in
/// seed order. Runs on up to `workers` threads.
pub fn repeat_train_each(
    data: &Dataset,
    splits: &SplitIndices,
    hyper: &Hyperparameters,
    options: &TrainOptions,
    m: usize,
    seed_base: u64,
    workers: usize,
) -> Vec<(u64, Result<TrainedModel, TrainError>)> {
    run_indexed(workers, m, |i| {
        let seed = seed_base.wrapping_add(i as u64);
        (seed, train(data, splits, &hyper.with_seed(seed), options))
    })
}

/// Repeated trainings as an [`Ensemble`]; the first failure (by seed order)
/// is returned with its seed.
pub fn repeat_train(
    data: &Dataset,
    splits: &SplitIndices,
    hyper: &Hyperparameters,
    options: &TrainOptions,
    m: usize,
    seed_base: u64,
    workers: usize,
) -> Result<Ensemble, TrainError> {
    if m == 0 {
        return Err(TrainError::InvalidEnsemble("repeat count must be at least 1".into()));
    }
    let models = repeat_train_each(data, splits, hyper, options, m, seed_base, workers)
        .into_iter()
        .map(|(seed, r)| {
            r.map_err(|e| TrainError::Seed {
                seed,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ensemble::new(models)
}

fn validate_indices(idx: &[usize], n: usize, what: &str) -> Result<(), TrainError> {
    if idx.is_empty() {
        return Err(TrainError::InvalidSplit(format!("{what} split is empty")));
    }
    let mut seen = HashSet::with_capacity(idx.len());
    for &i in idx {
        if i >= n {
            return Err(TrainError::InvalidSplit(format!(
                "{what} index {i} out of range for {n} observations"
            )));
        }
        if !seen.insert(i) {
            return Err(TrainError::InvalidSplit(format!("duplicated {what} index {i}")));
        }
    }
    Ok(())
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

fn accuracy_standardized(params: &ModelParameters, x: &Array2<f64>, y: &[usize]) -> Result<f64, TrainError> {
    let trace = forward(params, x.view(), None)?;
    let hits = trace
        .utilities()
        .axis_iter(Axis(0))
        .zip(y)
        .filter(|(row, &c)| argmax(row.as_slice().expect("contiguous row")) == c)
        .count();
    Ok(hits as f64 / y.len() as f64)
}

/// Share of observations in `split` whose most probable alternative was chosen.
pub fn accuracy(model: &TrainedModel, data: &Dataset, split: &[usize]) -> Result<f64, TrainError> {
    validate_indices(split, data.n_obs(), "evaluation")?;
    let rows = data.features().select(Axis(0), split);
    let x = model.standardizer.transform(rows.view());
    let y: Vec<usize> = split.iter().map(|&i| data.choices()[i]).collect();
    accuracy_standardized(&model.params, &x, &y)
}
