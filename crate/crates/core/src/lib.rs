//! Learns quadratic Mahalanobis distance metrics from proximity-comparison
//! triplets by solving a Frobenius-norm-regularized semidefinite program
//! through its Lagrange dual, and generalizes the same dual machinery to
//! arbitrary Frobenius-regularized SDPs (demonstrated on approximate
//! Maximum Variance Unfolding).
//!
//! The dual of the metric-learning problem has no matrix variables and only
//! box constraints, so each iteration costs one symmetric eigendecomposition
//! plus cheap per-triplet accumulations. The primal metric is recovered in
//! closed form from the dual optimum.

pub mod error;
pub mod eval;
pub mod io;
pub mod linalg;
pub mod metric;
pub mod mvu;
pub mod optim;
pub mod sdp;
pub mod triplets;

pub use error::Error;
pub use eval::{CorankingMatrix, Split};
pub use io::CsvSchema;
pub use linalg::{SpectralDecomp, SymMatrix};
pub use metric::{DualState, MetricModel, SolverOptions};
pub use mvu::Embedding;
pub use optim::Termination;
pub use sdp::{LinearConstraint, Relation, SdpProblem};
pub use triplets::{Dataset, Triplet, TripletFactors};

/// Result alias used across the crate.
pub type Result<T> = std::result::Result<T, Error>;
