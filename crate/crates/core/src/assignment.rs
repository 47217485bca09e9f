//! Per-prediction assignment context: the second ground truth used by the
//! push term, dynamic-anchor confidence labels, and the objectness BCE.

use crate::error::AssignError;
use crate::geometry::{iou, BBox};

/// Ground-truth boxes indexed densely from 0.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroundTruthSet {
    boxes: Vec<BBox>,
}

impl GroundTruthSet {
    pub fn new(boxes: Vec<BBox>) -> Self {
        Self { boxes }
    }

    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<&BBox> {
        self.boxes.get(index)
    }

    pub fn boxes(&self) -> &[BBox] {
        &self.boxes
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &BBox)> {
        self.boxes.iter().enumerate()
    }
}

impl FromIterator<BBox> for GroundTruthSet {
    fn from_iter<I: IntoIterator<Item = BBox>>(iter: I) -> Self {
        Self::new(iter.into_iter().collect())
    }
}

/// How the competing ground truth for the push term is chosen among the
/// unmatched ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SecondGtRule {
    /// Highest IoU with the prediction: the most conflicting neighbour.
    #[default]
    MaxIou,
    /// Lowest IoU with the prediction.
    MinIou,
}

/// Assignment record for one prediction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Assignment {
    pub pred: BBox,
    pub gt_index: usize,
    pub second_gt_index: Option<usize>,
    pub confidence_label: f64,
}

impl Assignment {
    pub fn build(
        pred: BBox,
        gts: &GroundTruthSet,
        gt_index: usize,
        use_dynamic_anchor: bool,
    ) -> Result<Self, AssignError> {
        let gt = gts.get(gt_index).ok_or(AssignError::IndexOutOfRange {
            index: gt_index,
            len: gts.len(),
        })?;
        Ok(Self {
            pred,
            gt_index,
            second_gt_index: select_second_gt(&pred, gts, gt_index)?,
            confidence_label: confidence_label(&pred, gt, use_dynamic_anchor)?,
        })
    }
}

/// Picks the second ground truth for `pred` with the default [`SecondGtRule::MaxIou`].
pub fn select_second_gt(
    pred: &BBox,
    gts: &GroundTruthSet,
    matched: usize,
) -> Result<Option<usize>, AssignError> {
    select_second_gt_with(pred, gts, matched, SecondGtRule::MaxIou)
}

/// Returns the unmatched ground truth selected by `rule`, or `None` when no
/// unmatched ground truth overlaps `pred`. Ties go to the lowest index.
pub fn select_second_gt_with(
    pred: &BBox,
    gts: &GroundTruthSet,
    matched: usize,
    rule: SecondGtRule,
) -> Result<Option<usize>, AssignError> {
    if matched >= gts.len() {
        return Err(AssignError::IndexOutOfRange {
            index: matched,
            len: gts.len(),
        });
    }
    let candidates = gts
        .iter()
        .filter(|(j, _)| *j != matched)
        .map(|(j, g)| (j, iou(pred, g)))
        .filter(|(_, v)| *v > 0.0);

    let mut best: Option<(usize, f64)> = None;
    for (j, v) in candidates {
        let better = match (best, rule) {
            (None, _) => true,
            (Some((_, b)), SecondGtRule::MaxIou) => v > b,
            (Some((_, b)), SecondGtRule::MinIou) => v < b,
        };
        if better {
            best = Some((j, v));
        }
    }
    Ok(best.map(|(j, _)| j))
}

/// A box centered on `pred` with the width and height of `gt`.
pub fn dynamic_anchor(pred: &BBox, gt: &BBox) -> Result<BBox, AssignError> {
    if gt.area() <= 0.0 {
        return Err(AssignError::DegenerateGt);
    }
    let (cx, cy) = pred.center();
    Ok(BBox::from_center(cx, cy, gt.width(), gt.height())?)
}

/// Objectness target for a positive sample: the IoU of either the prediction
/// or its dynamic anchor with the matched ground truth.
pub fn confidence_label(
    pred: &BBox,
    gt: &BBox,
    use_dynamic_anchor: bool,
) -> Result<f64, AssignError> {
    if use_dynamic_anchor {
        Ok(iou(&dynamic_anchor(pred, gt)?, gt))
    } else {
        Ok(iou(pred, gt))
    }
}

/// Clamp applied by callers that need to feed a saturated probability into
/// [`bce_objectness`].
pub const OBJECTNESS_EPS: f64 = 1e-7;

/// Binary cross-entropy of an objectness prediction against a soft label.
pub fn bce_objectness(prediction: f64, label: f64) -> Result<f64, AssignError> {
    if !(prediction > 0.0 && prediction < 1.0) {
        return Err(AssignError::PredictionOutOfRange(prediction));
    }
    if !(0.0..=1.0).contains(&label) {
        return Err(AssignError::LabelOutOfRange(label));
    }
    Ok(-(label * prediction.ln() + (1.0 - label) * (1.0 - prediction).ln()))
}
