//! Decision-aware long-tailed classification.
//!
//! Particle ensembles of small MLPs are trained on an importance-weighted
//! integrated-gain objective built from a utility matrix, regularized by an
//! L2 term and an annealed repulsive entropy term. Test-time decisions
//! maximize the utility-weighted log gain summed over particles.

pub mod data;
pub mod decision;
pub mod error;
pub mod io;
pub mod metrics;
pub mod model;
pub mod objective;
pub mod trainer;
pub mod utility;

pub use data::{
    class_weights, importance_weight, make_long_tailed, region_split, synth_gaussian_mixture,
    tail_set, ClassCounts, DatasetMeta, GaussianMixture, LabeledDataset, Regions, WeightForm,
};
pub use decision::{decide, decide_batch, decide_dataset, decision_scores};
pub use error::{Error, Result};
pub use metrics::{
    auroc, ece, evaluate, false_head_rate, misprediction_rate, region_accuracy, EvalOptions,
    EvalReport, Rate, UncertaintyScore,
};
pub use model::{MlpArchitecture, ParticleEnsemble, Predictive};
pub use objective::{
    anneal_weight, batch_gradient, batch_loss, kl_regularizer, one_hot_reduction_check,
    per_sample_term, Gradient, ObjectiveConfig,
};
pub use trainer::{train, TrainConfig, TrainHistory};
pub use utility::{log_decision_gain, Penalty, UtilityMatrix};
