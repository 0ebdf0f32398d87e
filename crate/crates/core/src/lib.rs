//! Score refinement for process data.
//!
//! Estimates latent traits from polytomous item responses under the Graded
//! Response Model, extracts numeric features from problem-solving action
//! sequences via stress-minimizing multidimensional scaling, and applies a
//! two-step conditional-expectation procedure that regresses trait estimates
//! through process features to reduce estimation error. Includes the
//! cross-validated evaluation protocol, synthetic data generation, and exact
//! finite-model checks of the variance-reduction identities.

pub mod error;
pub mod eval;
pub mod io;
pub mod irt;
pub mod mds;
pub mod rbscore;
pub mod reg;
pub mod seed;
pub mod seqdiss;
pub mod simgen;

pub use error::{Error, Result};
pub use irt::{
    estimate_theta, fit_grm, grm_category_probs, EmConfig, GrmFit, GrmItemParams, PriorSpec,
    ResponseMatrix, ThetaEstimate, ThetaMethod,
};
pub use eval::{
    kendall_tau, mse, residual_deciles, run_protocol, EstimatorKind, EvalReport, FeatureSource,
    PartitionPlan, ProtocolConfig,
};
pub use mds::{
    build_feature_matrix, embed_item, embed_project, embed_train, EmbeddingModel, FeatureMatrix,
    ItemFeatures, MdsConfig, ProjectConfig,
};
pub use rbscore::{
    combine_estimates, score_new_person, train_scoring_rule, ItemPartition, ScoringRule,
    TrainConfig,
};
pub use reg::{ols_fit, ridge_fit, ridge_predict, LinearModel, RidgeConfig, RidgeModel};
pub use seqdiss::{
    cross_dissimilarities, dissimilarity_matrix, oss, ActionSequence, DissimilarityMatrix,
};
pub use simgen::{simulate_dataset, SimConfig, SimulatedData, ToyModel};
