//! Covariate-balancing experimental designs built on spanning trees.
//!
//! SoftBlock assigns treatment by two-coloring the maximum spanning tree of
//! a Gaussian similarity graph over the units' covariates; GreedyNeighbors
//! does the same on the one-nearest-neighbor forest. Both solve Maxcut
//! exactly on their graph, which keeps similar units in opposite arms. The
//! crate also provides the standard baselines, balance statistics, ATE and
//! ITE estimators, the spanning-tree distribution behind SoftBlock, and a
//! simulation harness.
//!
//! ```
//! use softblock::{softblock, friedman_rafsky, Bandwidth, CovariateMatrix, FlipPolicy, RandomSeed};
//!
//! let x = CovariateMatrix::from_rows(&[vec![0.0], vec![1.0], vec![5.0], vec![6.0]])?;
//! let design = softblock(&x, Bandwidth::Auto, RandomSeed(7), FlipPolicy::Random)?;
//! assert!(design.all_edges_cut());
//! assert_eq!(friedman_rafsky(&x, &design.assignment)?, 1.0);
//! # Ok::<(), softblock::Error>(())
//! ```

pub mod balance;
pub mod dataset;
pub mod designs;
pub mod dpp;
pub mod error;
pub mod estimators;
pub mod graph;
pub mod kdtree;
mod linalg;
pub mod rng;
pub mod simulate;

pub use balance::{
    balance_report, friedman_rafsky, kernel_imbalance, mahalanobis_balance, standardized_mean_diff, BalanceReport,
};
pub use dataset::{
    format_number, load_covariates, load_outcomes, standardize, write_covariates, write_outcomes, Assignment,
    CovariateMatrix, OutcomeVector, Standardized,
};
pub use designs::{
    bernoulli, complete_randomization, greedy_neighbors, make_design, matched_pairs, read_assignment, rerandomize,
    softblock, two_color_forest, two_color_tree, write_assignment, Bandwidth, Design, DesignOptions, FlipPolicy,
    Method, Rerandomized,
};
pub use dpp::{enumerate_spanning_trees, log_partition, tree_distribution, tree_log_probability, tree_log_weight};
pub use error::{Error, Result};
pub use estimators::{
    cut_error_bound, design_ate, design_ite, diff_in_means, estimate, knn_t_learner, lin_adjusted_ate,
    matched_pair_ate, pointwise_error_bound, weight_rows, BoundInputs, Estimate, Estimator, IteVector,
    LinEstimate, WeightRow,
};
pub use graph::{
    auto_bandwidth, cut_weight, gaussian_gram, gaussian_kernel, gaussian_similarity, graph_laplacian,
    maximum_spanning_tree, median_bandwidth, minimum_distance_spanning_tree, nearest_neighbor_forest,
    pairwise_distances, read_edges, write_edges, DistanceMatrix, Edge, KernelMatrix, SimilarityGraph,
    SpanningTree,
};
pub use rng::RandomSeed;
pub use simulate::{
    generate, run_benchmark, run_replication, runtime_scaling, BenchmarkConfig, BenchmarkTable, Dgp,
    ReplicationResult, RunOptions, SimData,
};
