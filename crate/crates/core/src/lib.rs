//! Neural-network discrete choice models with economic interpretation.
//!
//! A model maps alternative-invariant features to one utility per
//! alternative with a ReLU network and turns utilities into choice
//! probabilities with a softmax. Training minimizes penalized cross-entropy
//! with Adam; hyperparameters are chosen by random search on a validation
//! split; repeated trainings with different seeds form ensembles whose
//! economic quantities (shares, elasticities, values of time, welfare) are
//! reported with their across-training spread.

pub mod autodiff;
pub mod data;
pub mod econ;
pub mod hypersearch;
pub mod network;
pub(crate) mod parallel;
pub mod seed;
pub mod training;

pub use data::{Dataset, SplitIndices, SplitKind, Standardizer};
pub use econ::EconError;
pub use hypersearch::{random_search, SearchResult, SearchSettings, SearchSpace};
pub use network::{Architecture, ModelParameters};
pub use training::{train, Ensemble, Hyperparameters, TrainError, TrainOptions, TrainedModel};
