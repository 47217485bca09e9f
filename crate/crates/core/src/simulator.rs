//! Fixed-step gradient descent on predicted boxes.

use crate::assignment::{confidence_label, select_second_gt, GroundTruthSet};
use crate::error::{Error, SimError};
use crate::geometry::{iou, BBox};
use crate::losses::{loss_eval, LossKind, PushConfig};
use crate::nms::Detection;

/// Monitoring of the IoU-loss descent applies at or below this learning rate.
pub const MONITOR_MAX_LR: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub gts: GroundTruthSet,
    pub initial_preds: Vec<BBox>,
    /// Matched ground-truth index for each prediction.
    pub matches: Vec<usize>,
    pub loss: LossKind,
    pub push: PushConfig,
    pub dynamic_anchor: bool,
    pub steps: usize,
    pub learning_rate: f64,
    pub nms_threshold: Option<f64>,
    /// Recorded with the run. Descent itself is deterministic.
    pub seed: u64,
}

impl Scenario {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidScenario(m));
        if self.matches.len() != self.initial_preds.len() {
            return bad(format!(
                "matches has {} entries but initial_preds has {}",
                self.matches.len(),
                self.initial_preds.len()
            ));
        }
        if let Some((i, m)) = self
            .matches
            .iter()
            .enumerate()
            .find(|(_, m)| **m >= self.gts.len())
        {
            return bad(format!(
                "matches[{i}] = {m} is out of range for {} ground truths",
                self.gts.len()
            ));
        }
        if self.steps == 0 {
            return bad("steps must be positive".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            ));
        }
        if let Some(t) = self.nms_threshold {
            if !(0.0..=1.0).contains(&t) {
                return bad(format!("nms_threshold must lie in [0, 1], got {t}"));
            }
        }
        Ok(())
    }
}

/// State of one prediction at one step. Step 0 is the initial box and step
/// `steps` the final one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    pub pred_index: usize,
    pub bbox: BBox,
    pub loss_value: f64,
    pub iou_to_gt: f64,
    /// 0 when no second ground truth is selected.
    pub iou_to_second_gt: f64,
    pub shape_error: f64,
    pub confidence_label: f64,
}

/// `|ln(w / w_gt)| + |ln(h / h_gt)|`; infinite for a degenerate box.
pub fn shape_error(pred: &BBox, gt: &BBox) -> f64 {
    (pred.width() / gt.width()).ln().abs() + (pred.height() / gt.height()).ln().abs()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DescentRun {
    /// Grouped by prediction, then by step.
    pub rows: Vec<TraceRow>,
    pub steps: usize,
    pub pred_count: usize,
    /// Updates that crossed corners and were repaired by swapping.
    pub corner_swaps: usize,
}

impl DescentRun {
    pub fn final_rows(&self) -> impl Iterator<Item = &TraceRow> + '_ {
        self.rows.iter().filter(move |r| r.step == self.steps)
    }

    pub fn final_row(&self, pred: usize) -> Option<&TraceRow> {
        self.rows.get(pred * (self.steps + 1) + self.steps)
    }

    /// Final boxes scored by their confidence label.
    pub fn final_detections(&self) -> Vec<Detection> {
        self.final_rows()
            .map(|r| Detection {
                bbox: r.bbox,
                score: r.confidence_label,
                index: r.pred_index,
            })
            .collect()
    }

    pub fn mean_final<F: Fn(&TraceRow) -> f64>(&self, f: F) -> f64 {
        if self.pred_count == 0 {
            return 0.0;
        }
        self.final_rows().map(f).sum::<f64>() / self.pred_count as f64
    }
}

fn step_error(step: usize, pred: usize, e: impl Into<Error>) -> SimError {
    SimError::Step {
        step,
        pred,
        source: Box::new(e.into()),
    }
}

/// Runs `steps` updates of `box <- box - lr * grad` for every prediction.
///
/// The second ground truth is re-selected at every step. An update that
/// inverts an axis is repaired by swapping that axis's corners. Under IoU
/// loss with `lr <= MONITOR_MAX_LR`, an overlapping prediction whose loss
/// rises by more than `lr * |grad|^2` in one step aborts the run; smaller
/// rises come from stepping across the kink at the optimum.
pub fn run_descent(s: &Scenario) -> Result<DescentRun, SimError> {
    s.validate()?;
    let monitored = s.loss == LossKind::IoU && s.learning_rate <= MONITOR_MAX_LR;
    let mut rows = Vec::with_capacity(s.initial_preds.len() * (s.steps + 1));
    let mut corner_swaps = 0;

    for (p, (&init, &m)) in s.initial_preds.iter().zip(&s.matches).enumerate() {
        let gt = s.gts.boxes()[m];
        let mut bbox = init;
        let mut previous: Option<(f64, f64)> = None;

        for step in 0..=s.steps {
            let second_idx =
                select_second_gt(&bbox, &s.gts, m).map_err(|e| step_error(step, p, e))?;
            let second = second_idx.map(|j| s.gts.boxes()[j]);
            let eval = loss_eval(s.loss, &bbox, &gt, second.as_ref(), &s.push)
                .map_err(|e| step_error(step, p, e))?;
            let iou_to_gt = iou(&bbox, &gt);

            if let Some((before, allowance)) = previous {
                if eval.value > before + allowance {
                    return Err(SimError::LossIncreased {
                        step,
                        pred: p,
                        before,
                        after: eval.value,
                    });
                }
            }

            rows.push(TraceRow {
                step,
                pred_index: p,
                bbox,
                loss_value: eval.value,
                iou_to_gt,
                iou_to_second_gt: second.map_or(0.0, |g| iou(&bbox, &g)),
                shape_error: shape_error(&bbox, &gt),
                confidence_label: confidence_label(&bbox, &gt, s.dynamic_anchor)
                    .map_err(|e| step_error(step, p, e))?,
            });

            if step == s.steps {
                break;
            }

            let grad_sq: f64 = eval.grad.iter().map(|g| g * g).sum();
            previous = (monitored && iou_to_gt > 0.0)
                .then_some((eval.value, s.learning_rate * grad_sq + 1e-12));

            let mut c = bbox.coords();
            for (x, g) in c.iter_mut().zip(eval.grad) {
                *x -= s.learning_rate * g;
            }
            let (next, swapped) = BBox::from_unordered(c).map_err(|e| step_error(step, p, e))?;
            corner_swaps += usize::from(swapped);
            bbox = next;
        }
    }

    Ok(DescentRun {
        rows,
        steps: s.steps,
        pred_count: s.initial_preds.len(),
        corner_swaps,
    })
}
