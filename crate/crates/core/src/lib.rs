//! Model extraction attacks against small feed-forward classifiers and a
//! stateful per-client detector that flags extraction from the distribution
//! of inter-query distances.
//!
//! Module map:
//! - [`neuralnet`]: dense classifiers, backpropagation, training, persistence
//! - [`crafting`]: FGSM / I-FGSM / MI-FGSM adversarial examples
//! - [`extraction`]: oracles, synthetic query strategies, the extraction loop
//! - [`hyperopt`]: k-fold cross-validation and GP-driven hyperparameter search
//! - [`shapiro`]: the Shapiro-Wilk W statistic
//! - [`detector`]: per-client streaming detection and response policies
//! - [`evasion`]: dummy-query planning against the detector
//! - [`harness`]: datasets, metrics, benign traffic, experiments

pub mod crafting;
pub mod data;
pub mod detector;
pub mod error;
pub mod evasion;
pub mod extraction;
pub mod harness;
pub mod hyperopt;
pub mod neuralnet;
pub mod rng;
pub mod shapiro;

pub use data::{Dataset, Targets};
pub use error::{Error, Result};
pub use neuralnet::{Architecture, Network, TrainingConfig};
