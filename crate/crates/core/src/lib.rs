//! Query-based structure learning for sparse additive models with pairwise
//! interactions.
//!
//! Given black-box point-query access to a high-dimensional function that is a
//! sum of a few univariate components and a few truly bivariate components,
//! this crate identifies which coordinates act alone, which pairs interact,
//! and then estimates every component function on `[-1,1]` slices.
//!
//! The pipeline is: derivative-free gradient / Hessian measurements on hashed
//! 2-D grids, compressed-sensing recovery of the sparse derivative vectors
//! (iterative hard thresholding or basis pursuit), threshold tests with step
//! sizes and thresholds derived in closed form from smoothness constants, and
//! finally least-squares cubic spline fits of the identified components.

pub mod components;
pub mod experiments;
pub mod learn;
pub mod linalg;
pub mod model;
pub mod recovery;
pub mod sampling;
pub mod seeds;

pub use learn::{Algorithm, ProblemParams, RecoveryResult, SamplingPlan};
pub use model::{ModelSpec, NoiseModel, QueryLedger, QueryOracle};
