use thiserror::Error;

use crate::losses::LossKind;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("box coordinates must be finite, got {0:?}")]
    NonFinite([f64; 4]),
    #[error("box has negative extent (need x2 >= x1 and y2 >= y1), got {0:?}")]
    NegativeExtent([f64; 4]),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LossError {
    #[error("GIoU is undefined when both boxes have zero area")]
    DegenerateEnclosure,
    #[error("DecIoU is undefined when the enclosing box has zero width or height")]
    DegenerateEnclosingAxis,
    #[error("second ground truth must differ from the matched ground truth")]
    SecondGtEqualsGt,
    #[error("{0} is not a push loss")]
    NotPushKind(LossKind),
    #[error("push alpha must be finite and non-negative, got {0}")]
    InvalidAlpha(f64),
    #[error("unknown loss kind `{0}`")]
    UnknownKind(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AssignError {
    #[error("matched index {index} out of range for {len} ground truths")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("ground truth box has zero area, dynamic anchor undefined")]
    DegenerateGt,
    #[error("objectness prediction must lie strictly inside (0, 1), got {0}")]
    PredictionOutOfRange(f64),
    #[error("label must lie in [0, 1], got {0}")]
    LabelOutOfRange(f64),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("finite-difference step must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("loss undefined at perturbed coordinate {coordinate}: {source}")]
    Perturbation {
        coordinate: &'static str,
        #[source]
        source: Box<crate::Error>,
    },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("step {step}, prediction {pred}: {source}")]
    Step {
        step: usize,
        pred: usize,
        #[source]
        source: Box<crate::Error>,
    },
    #[error("step {step}, prediction {pred}: IoU loss increased from {before} to {after}")]
    LossIncreased {
        step: usize,
        pred: usize,
        before: f64,
        after: f64,
    },
    #[error("cannot place two boxes at IoU {0}: request must lie in (0, 1)")]
    InfeasibleOverlap(f64),
    #[error("trials must be at least 1")]
    NoTrials,
}

/// Umbrella error for the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Assign(#[from] AssignError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
