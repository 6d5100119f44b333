//! Explainable k-means post-processing.
//!
//! Given a reference clustering, build an axis-aligned threshold tree with
//! exactly one leaf per cluster whose k-means cost is within a bounded factor of
//! the reference. Two cut engines are provided: one for the plane and one for
//! arbitrary dimension. Exact oracles and a lower-bound instance generator are
//! included for evaluation.

pub mod bench;
pub mod builder;
pub mod cut;
pub mod error;
pub mod geometry;
pub mod interval;
pub mod kmeans;
pub mod lowerbound;
pub mod oracle;
pub mod scalar;
pub mod subproblem;
pub mod tree;

pub use builder::{
    build_tree, post_process, Audit, BuildOptions, BuildResult, CutRecord, EngineChoice,
    PostProcessResult,
};
pub use cut::{single_cut, CutDiagnostics, CutOutcome, ThetaRule};
pub use error::{Error, Result};
pub use geometry::{cost_l2sq, cost_linf_sq, l2_dist_sq, linf_dist, Clustering, Dataset, Point};
pub use interval::{Interval, IntervalSet};
pub use kmeans::{kmeanspp_lloyd, SeedConfig};
pub use lowerbound::{
    grid_points, lb_instance, lb_parameters, merges_groups, GridCertificate, GridSpec, LbInstance,
    LbParams,
};
pub use oracle::{
    optimal_explainable_dp, optimal_explainable_dp_with, optimal_partition,
    optimal_unconstrained_bruteforce, DpLimits, ExplainableOptimum,
};
pub use scalar::Scalar;
pub use subproblem::{Bounds, Mode, PointState, PointType, Subproblem, ValidityReport};
pub use tree::{
    apply_tree, verify_explainable, AxisCut, ExplainabilityReport, Node, ThresholdTree,
};

pub type Point64 = Point<f64>;
pub type Dataset64 = Dataset<f64>;
pub type Clustering64 = Clustering<f64>;
pub type ThresholdTree64 = ThresholdTree<f64>;
pub type IntervalSet64 = IntervalSet<f64>;
pub type Subproblem64 = Subproblem<f64>;
pub type Point32 = Point<f32>;
pub type Dataset32 = Dataset<f32>;
pub type Clustering32 = Clustering<f32>;
pub type ThresholdTree32 = ThresholdTree<f32>;
pub type Subproblem32 = Subproblem<f32>;
