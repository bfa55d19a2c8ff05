//! Collaborative filtering: sparse rating storage, user/item neighbourhood
//! models, latent-factor matrix factorization, a pluggable side-feature
//! blend, and an offline evaluation harness.

pub mod cooccurrence;
pub mod data;
pub mod enhancer;
pub mod error;
pub mod evaluation;
pub mod factorization;
pub mod io;
pub mod prediction;
pub mod similarity;
pub mod synthetic;

pub use cooccurrence::{build_cooccurrence, CooccurrenceMatrix};
pub use data::{BuildSummary, Catalog, DuplicatePolicy, ItemId, RatingMatrix, RatingVector, Scale, Triple, UserId};
pub use enhancer::{blend_matrix, blended_similarity, stub_features, BlendConfig, FeatureProvider, FeatureSource};
pub use error::{Error, Result};
pub use evaluation::{coverage, mae, precision_recall, split, sweep_k, Algorithm, EvalConfig, EvaluationReport, Split};
pub use factorization::{loss_and_gradient, predict_mf, train, FactorModel, Optimizer, TrainConfig};
pub use prediction::{
    decide, predict_item_based, predict_user_based, recommend_top_n, Basis, Decision, Fallback, NeighborPool,
    Prediction, RecommendationList,
};
pub use similarity::{adjusted_cosine, build_similarity, cosine, pearson, Axis, Kernel, NeighborSet, SimilarityMatrix};
