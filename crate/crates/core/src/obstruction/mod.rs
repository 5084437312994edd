//! Exact interval algebra and the peeling certificate showing that a fast
//! growing sequence admits no valid covering of an interval.

mod intervals;
mod peel;

pub use intervals::{interval_subtract, largest_gap, Interval, IntervalSet};
pub use peel::{
    adversarial_candidate, check_params, choose_obstruction_params, densify, densify_step, peel_certify,
    CandidateFamily, ObstructionParams, PeelCertificate, PeelOutcome, PeelStage, Refutation,
};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObstructionError {
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
    #[error("ratio lambda[{index}+1]/lambda[{index}] = {ratio} is below q")]
    RatioTooSmall { index: usize, ratio: String },
    #[error("malformed candidate: {0}")]
    MalformedCandidate(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
