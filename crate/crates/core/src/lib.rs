//! Multi-label feature selection driven by a random-walk neighborhood graph.
//!
//! The pipeline: build a joint feature/label similarity, sample a sparse
//! neighborhood graph with random walks from every instance, fit a
//! manifold-regularized regression with a mixed ℓ2,1 / Frobenius penalty,
//! rank features by coefficient row norm, and score the selected subset with
//! ML-KNN.

pub mod data;
pub mod error;
pub mod graph;
pub mod linalg;
pub mod metrics;
pub mod mlknn;
pub mod seed;
pub mod solver;

pub use data::{
    add_gaussian_noise, load_arff, load_csv, split, stats, CsvOptions, Dataset, DatasetStats,
    SplitMode, SplitSpec, Standardizer,
};
pub use error::{Error, Result};
pub use graph::{
    build_graph, neighborhood_graph, random_walk_counts, GraphDiagnostics, NeighborhoodGraph,
    SigmaRule, WalkConfig, WalkMode,
};
pub use metrics::{evaluate, MetricReport};
pub use mlknn::{mlknn_fit, mlknn_predict, MlKnnModel, RankingPrediction};
pub use seed::derive_seed;
pub use solver::{fit, rank_features, select_top, SelectionResult, SolverParams, SolverState};
