//! Sampling plans and the structure-identification algorithms they drive.

pub mod cubic;

mod algorithms;
mod gradients;
mod plan;

pub use algorithms::{
    classify_active_set, identify_via_hessian_rows, identify_via_hessian_sketch,
    recover_structure, scan_active_set, Diagnostics, RecoveryResult, ThresholdSet,
};
pub use cubic::{cubic_roots_trig, CubicError};
pub use gradients::{estimate_gradient, estimate_gradient_restricted, estimate_partial};
pub use plan::{
    make_plan, stage_b_rule, Algorithm, ConstantsConfig, PlanNoise, PlanOverrides, ProblemParams,
    SamplingPlan, StageBPlan,
};

use crate::model::ModelError;
use crate::recovery::RecoveryError;
use crate::sampling::SamplingError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LearnError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Recovery(#[from] RecoveryError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    Cubic(#[from] CubicError),
    #[error("noise too large for guarantee in {phase}: eps = {eps:.6e} >= bound {bound:.6e}")]
    NoiseTooLarge { eps: f64, bound: f64, phase: String },
    #[error("admissible interval is empty: {0}")]
    EmptyInterval(String),
    #[error("invalid plan parameters: {0}")]
    BadParams(String),
    #[error("binary search found no partition above threshold for variable {variable}")]
    BinarySearchInconsistency { variable: usize },
}
