//! Transfer strategies that borrow data or models from source subjects.

pub mod covariance;
pub mod instance;
pub mod model;

pub use covariance::{
    cm1_affinities, cm1_combine, cm2_combine, cm2_lambda, cm2_select_subjects, kl_divergence_gaussian,
    select_sources, target_loo_accuracy, Cm1Config, Selection, SourceAffinity, RAND_ACC,
};
pub use instance::{
    covariance_representation, kmm_representation, kmm_weights, median_bandwidth, weighted_fused_training,
    Bandwidth, InstanceWeights, KmmConfig, SourceGeometry,
};
pub use model::{
    ensemble_loss, ensemble_predict, ensemble_predict_covariance, optimize_weights, prediction_matrix,
    train_source_models, EnsembleWeights, SourceModel, SourceModelBank,
};
