use std::cmp::Ordering;

use crate::geometry::{iou, BBox};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub bbox: BBox,
    pub score: f64,
    pub index: usize,
}

/// Greedy non-maximum suppression.
///
/// Detections are visited by descending score (ties by ascending index);
/// each kept detection suppresses every remaining one whose IoU with it
/// exceeds `iou_threshold`. Kept detections are returned in keep order.
pub fn greedy_nms(dets: &[Detection], iou_threshold: f64) -> Vec<Detection> {
    let mut order: Vec<Detection> = dets.to_vec();
    order.sort_by(|a, b| match b.score.total_cmp(&a.score) {
        Ordering::Equal => a.index.cmp(&b.index),
        other => other,
    });

    let mut suppressed = vec![false; order.len()];
    let mut keep = Vec::new();
    for i in 0..order.len() {
        if suppressed[i] {
            continue;
        }
        keep.push(order[i]);
        for j in (i + 1)..order.len() {
            if !suppressed[j] && iou(&order[i].bbox, &order[j].bbox) > iou_threshold {
                suppressed[j] = true;
            }
        }
    }
    keep
}

/// Fraction of `gts` matched one-to-one by `dets` at IoU >= `match_iou`.
///
/// Detections claim ground truths in the order given (keep order from
/// [`greedy_nms`]), each taking the unclaimed ground truth it overlaps most.
pub fn recall(dets: &[Detection], gts: &[BBox], match_iou: f64) -> f64 {
    if gts.is_empty() {
        return 0.0;
    }
    let mut claimed = vec![false; gts.len()];
    for d in dets {
        let best = gts
            .iter()
            .enumerate()
            .filter(|(j, _)| !claimed[*j])
            .map(|(j, g)| (j, iou(&d.bbox, g)))
            .filter(|(_, v)| *v >= match_iou)
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)));
        if let Some((j, _)) = best {
            claimed[j] = true;
        }
    }
    claimed.iter().filter(|c| **c).count() as f64 / gts.len() as f64
}
