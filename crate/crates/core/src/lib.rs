//! Bounding-box regression losses from the IoU family (IoU, GIoU, DIoU,
//! DecIoU and the push variants) with analytic gradients, plus the pieces
//! needed to study them at desk scale: label assignment with dynamic
//! anchors, greedy NMS, a gradient-descent simulator, and independent
//! numeric oracles.

pub mod assignment;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod losses;
pub mod nms;
pub mod oracle;
pub mod simulator;

pub use assignment::{
    bce_objectness, confidence_label, dynamic_anchor, select_second_gt, Assignment, GroundTruthSet,
    SecondGtRule,
};
pub use error::{Error, Result};
pub use geometry::{iou, overlap_geometry, BBox, OverlapGeometry};
pub use losses::{loss_eval, LossEval, LossKind, PushConfig};
pub use nms::{greedy_nms, Detection};
pub use simulator::{run_descent, DescentRun, Scenario, TraceRow};
