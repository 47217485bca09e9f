//! Seeded synthetic experiments built on the descent simulator.
//!
//! Every trial draws from its own ChaCha stream (stream id = trial index),
//! so results do not depend on how trials are scheduled across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::assignment::{confidence_label, GroundTruthSet};
use crate::error::SimError;
use crate::geometry::BBox;
use crate::losses::{LossKind, PushConfig};
use crate::nms::{greedy_nms, recall};
use crate::simulator::{run_descent, Scenario};

fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

/// Two `side x side` squares on a horizontal line whose IoU equals `overlap`.
///
/// For equal squares offset by `d`, IoU = (side - d) / (side + d), so
/// `d = side (1 - overlap) / (1 + overlap)`.
pub fn two_gt_scene(overlap: f64, side: f64, origin: (f64, f64)) -> Result<[BBox; 2], SimError> {
    if !(overlap > 0.0 && overlap < 1.0) || !(side > 0.0 && side.is_finite()) {
        return Err(SimError::InfeasibleOverlap(overlap));
    }
    let d = side * (1.0 - overlap) / (1.0 + overlap);
    let (x, y) = origin;
    let a =
        BBox::new(x, y, x + side, y + side).map_err(|_| SimError::InfeasibleOverlap(overlap))?;
    let b = BBox::new(x + d, y, x + d + side, y + side)
        .map_err(|_| SimError::InfeasibleOverlap(overlap))?;
    Ok([a, b])
}

/// Perturbs every corner uniformly by up to `fraction * side`.
pub fn jitter_box(rng: &mut ChaCha8Rng, gt: &BBox, fraction: f64) -> BBox {
    let amp_x = fraction * gt.width();
    let amp_y = fraction * gt.height();
    let mut c = gt.coords();
    for (i, x) in c.iter_mut().enumerate() {
        let amp = if i % 2 == 0 { amp_x } else { amp_y };
        *x += rng.random_range(-amp..=amp);
    }
    BBox::from_unordered(c).expect("finite jitter").0
}

/// Knobs of the occlusion experiment beyond the ones in its signature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OcclusionSetup {
    pub gt_side: f64,
    pub jitter: f64,
    pub steps: usize,
    pub learning_rate: f64,
    pub nms_threshold: f64,
    pub match_iou: f64,
    pub dynamic_anchor: bool,
}

impl Default for OcclusionSetup {
    fn default() -> Self {
        Self {
            gt_side: 4.0,
            jitter: 0.25,
            steps: 300,
            learning_rate: 1e-2,
            nms_threshold: 0.5,
            match_iou: 0.5,
            dynamic_anchor: false,
        }
    }
}

/// Per-loss outcome of one occlusion trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OcclusionOutcome {
    pub recall: f64,
    pub mean_iou_to_gt: f64,
    pub mean_iou_to_second_gt: f64,
    pub kept: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecallSummary {
    pub loss_a: LossKind,
    pub loss_b: LossKind,
    pub alpha: f64,
    pub overlap: f64,
    pub trials: usize,
    pub mean_recall_a: f64,
    pub mean_recall_b: f64,
    pub mean_iou_to_second_gt_a: f64,
    pub mean_iou_to_second_gt_b: f64,
    /// `recall_b - recall_a` per trial, in trial order.
    pub differences: Vec<f64>,
    /// Trials where `b` recalled more than `a`.
    pub wins: usize,
    pub losses: usize,
    pub ties: usize,
}

impl RecallSummary {
    pub fn mean_difference(&self) -> f64 {
        self.differences.iter().sum::<f64>() / self.trials as f64
    }
}

fn occlusion_trial(
    loss: LossKind,
    gts: &[BBox; 2],
    preds: &[BBox; 2],
    cfg: &PushConfig,
    setup: &OcclusionSetup,
    seed: u64,
) -> Result<OcclusionOutcome, SimError> {
    let scenario = Scenario {
        name: "occlusion".into(),
        gts: GroundTruthSet::new(gts.to_vec()),
        initial_preds: preds.to_vec(),
        matches: vec![0, 1],
        loss,
        push: *cfg,
        dynamic_anchor: setup.dynamic_anchor,
        steps: setup.steps,
        learning_rate: setup.learning_rate,
        nms_threshold: Some(setup.nms_threshold),
        seed,
    };
    let run = run_descent(&scenario)?;
    let kept = greedy_nms(&run.final_detections(), setup.nms_threshold);
    Ok(OcclusionOutcome {
        recall: recall(&kept, gts, setup.match_iou),
        mean_iou_to_gt: run.mean_final(|r| r.iou_to_gt),
        mean_iou_to_second_gt: run.mean_final(|r| r.iou_to_second_gt),
        kept: kept.len(),
    })
}

/// Paired recall of two losses on two-ground-truth scenes overlapping at
/// `gt_overlap_iou`, using [`OcclusionSetup::default`].
pub fn occlusion_recall_experiment(
    gt_overlap_iou: f64,
    loss_a: LossKind,
    loss_b: LossKind,
    trials: usize,
    cfg: &PushConfig,
    seed: u64,
) -> Result<RecallSummary, SimError> {
    occlusion_recall_experiment_with(
        &OcclusionSetup::default(),
        gt_overlap_iou,
        loss_a,
        loss_b,
        trials,
        cfg,
        seed,
    )
}

pub fn occlusion_recall_experiment_with(
    setup: &OcclusionSetup,
    gt_overlap_iou: f64,
    loss_a: LossKind,
    loss_b: LossKind,
    trials: usize,
    cfg: &PushConfig,
    seed: u64,
) -> Result<RecallSummary, SimError> {
    if trials == 0 {
        return Err(SimError::NoTrials);
    }
    let gts = two_gt_scene(gt_overlap_iou, setup.gt_side, (10.0, 10.0))?;

    let per_trial: Vec<(OcclusionOutcome, OcclusionOutcome)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(seed, t);
            let preds = [
                jitter_box(&mut rng, &gts[0], setup.jitter),
                jitter_box(&mut rng, &gts[1], setup.jitter),
            ];
            let a = occlusion_trial(loss_a, &gts, &preds, cfg, setup, seed)?;
            let b = occlusion_trial(loss_b, &gts, &preds, cfg, setup, seed)?;
            Ok((a, b))
        })
        .collect::<Result<_, SimError>>()?;

    let n = trials as f64;
    let mean = |f: &dyn Fn(&(OcclusionOutcome, OcclusionOutcome)) -> f64| {
        per_trial.iter().map(f).sum::<f64>() / n
    };
    let differences: Vec<f64> = per_trial.iter().map(|(a, b)| b.recall - a.recall).collect();
    Ok(RecallSummary {
        loss_a,
        loss_b,
        alpha: cfg.alpha(),
        overlap: gt_overlap_iou,
        trials,
        mean_recall_a: mean(&|p| p.0.recall),
        mean_recall_b: mean(&|p| p.1.recall),
        mean_iou_to_second_gt_a: mean(&|p| p.0.mean_iou_to_second_gt),
        mean_iou_to_second_gt_b: mean(&|p| p.1.mean_iou_to_second_gt),
        wins: differences.iter().filter(|d| **d > 0.0).count(),
        losses: differences.iter().filter(|d| **d < 0.0).count(),
        ties: differences.iter().filter(|d| **d == 0.0).count(),
        differences,
    })
}

/// Kinds of (prediction, ground truth) pairs drawn by the label experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelPairFamily {
    /// Same center, different width and height.
    CenterAligned,
    /// Same width and height, offset center.
    EqualDims,
    /// Offset center and different dims.
    Mixed,
}

impl LabelPairFamily {
    const CYCLE: [LabelPairFamily; 3] = [
        LabelPairFamily::CenterAligned,
        LabelPairFamily::EqualDims,
        LabelPairFamily::Mixed,
    ];

    pub fn for_index(i: usize) -> Self {
        Self::CYCLE[i % Self::CYCLE.len()]
    }
}

/// Labels closer than this count as equal. The anchor is rebuilt from the
/// prediction's center, which can move the label by a few ulps.
pub const LABEL_TIE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LabelFamilyStats {
    pub count: usize,
    pub mean_plain: f64,
    pub mean_dynamic: f64,
    /// Pairs where the dynamic label is at least the plain one.
    pub dynamic_at_least_plain: usize,
    pub dynamic_exceeds_plain: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelSummary {
    pub trials: usize,
    pub mean_plain: f64,
    pub mean_dynamic: f64,
    pub exceed_fraction: f64,
    pub center_aligned: LabelFamilyStats,
    pub equal_dims: LabelFamilyStats,
    pub mixed: LabelFamilyStats,
}

/// One sampled pair of the label experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabelPair {
    pub family: LabelPairFamily,
    pub pred: BBox,
    pub gt: BBox,
}

fn mismatched_scale(rng: &mut ChaCha8Rng) -> f64 {
    if rng.random_bool(0.5) {
        rng.random_range(0.5..0.9)
    } else {
        rng.random_range(1.1..2.0)
    }
}

/// Pair `trial` of the label experiment. The prediction's center lies within
/// a quarter of the ground truth's diagonal from the ground truth's center.
pub fn label_pair(seed: u64, trial: usize) -> LabelPair {
    let mut rng = trial_rng(seed, trial);
    let family = LabelPairFamily::for_index(trial);
    let gw = rng.random_range(1.0..5.0);
    let gh = rng.random_range(1.0..5.0);
    let gcx = rng.random_range(5.0..15.0);
    let gcy = rng.random_range(5.0..15.0);
    let gt = BBox::from_center(gcx, gcy, gw, gh).expect("positive extent");

    let quarter_diag = 0.25 * gw.hypot(gh);
    let (dx, dy) = match family {
        LabelPairFamily::CenterAligned => (0.0, 0.0),
        _ => {
            let r = quarter_diag * rng.random_range(0.0..1.0);
            let theta = rng.random_range(0.0..std::f64::consts::TAU);
            (r * theta.cos(), r * theta.sin())
        }
    };
    let (pw, ph) = match family {
        LabelPairFamily::EqualDims => (gw, gh),
        _ => (
            gw * mismatched_scale(&mut rng),
            gh * mismatched_scale(&mut rng),
        ),
    };
    let pred = BBox::from_center(gcx + dx, gcy + dy, pw, ph).expect("positive extent");
    LabelPair { family, pred, gt }
}

/// Compares confidence labels with and without the dynamic anchor.
pub fn label_accuracy_experiment(trials: usize, seed: u64) -> Result<LabelSummary, SimError> {
    if trials == 0 {
        return Err(SimError::NoTrials);
    }
    let labels: Vec<(LabelPairFamily, f64, f64)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let p = label_pair(seed, t);
            let plain = confidence_label(&p.pred, &p.gt, false).expect("valid gt");
            let dynamic = confidence_label(&p.pred, &p.gt, true).expect("valid gt");
            (p.family, plain, dynamic)
        })
        .collect();

    let family_stats = |fam: LabelPairFamily| {
        let mut s = LabelFamilyStats::default();
        for &(f, plain, dynamic) in labels.iter().filter(|l| l.0 == fam) {
            debug_assert_eq!(f, fam);
            s.count += 1;
            s.mean_plain += plain;
            s.mean_dynamic += dynamic;
            s.dynamic_at_least_plain += usize::from(dynamic >= plain - LABEL_TIE_EPS);
            s.dynamic_exceeds_plain += usize::from(dynamic > plain + LABEL_TIE_EPS);
        }
        if s.count > 0 {
            s.mean_plain /= s.count as f64;
            s.mean_dynamic /= s.count as f64;
        }
        s
    };

    let n = trials as f64;
    Ok(LabelSummary {
        trials,
        mean_plain: labels.iter().map(|l| l.1).sum::<f64>() / n,
        mean_dynamic: labels.iter().map(|l| l.2).sum::<f64>() / n,
        exceed_fraction: labels.iter().filter(|l| l.2 > l.1 + LABEL_TIE_EPS).count() as f64 / n,
        center_aligned: family_stats(LabelPairFamily::CenterAligned),
        equal_dims: family_stats(LabelPairFamily::EqualDims),
        mixed: family_stats(LabelPairFamily::Mixed),
    })
}

/// Initial prediction and ground truth for one shape trial: a 4 to 8 unit
/// ground truth, and a prediction near its center with the aspect ratio
/// distorted by a factor of 1.5 to 2.5 (stretched on one axis, squeezed on
/// the other).
pub fn shape_pair(seed: u64, trial: usize) -> (BBox, BBox) {
    let mut rng = trial_rng(seed, trial);
    let gw = rng.random_range(4.0..8.0);
    let gh = rng.random_range(4.0..8.0);
    let gt = BBox::from_center(10.0, 10.0, gw, gh).expect("positive extent");
    let r: f64 = rng.random_range(1.5..2.5);
    let (pw, ph) = if rng.random_bool(0.5) {
        (gw * r.sqrt(), gh / r.sqrt())
    } else {
        (gw / r.sqrt(), gh * r.sqrt())
    };
    let dx = rng.random_range(-0.1..0.1) * gw;
    let dy = rng.random_range(-0.1..0.1) * gh;
    let pred = BBox::from_center(10.0 + dx, 10.0 + dy, pw, ph).expect("positive extent");
    (pred, gt)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShapeSummary {
    pub trials: usize,
    pub steps: usize,
    pub learning_rate: f64,
    pub mean_shape_error_iou: f64,
    pub mean_shape_error_deciou: f64,
    pub mean_iou_iou: f64,
    pub mean_iou_deciou: f64,
    /// Trials where DecIoU ended with the smaller shape error.
    pub deciou_shape_wins: usize,
}

/// Paired IoU-loss vs DecIoU-loss descents from aspect-distorted starts.
pub fn shape_consistency_experiment(
    trials: usize,
    seed: u64,
    steps: usize,
    learning_rate: f64,
) -> Result<ShapeSummary, SimError> {
    if trials == 0 {
        return Err(SimError::NoTrials);
    }
    let finals: Vec<[(f64, f64); 2]> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let (pred, gt) = shape_pair(seed, t);
            let run = |loss: LossKind| -> Result<(f64, f64), SimError> {
                let s = Scenario {
                    name: "shape".into(),
                    gts: GroundTruthSet::new(vec![gt]),
                    initial_preds: vec![pred],
                    matches: vec![0],
                    loss,
                    push: PushConfig::default(),
                    dynamic_anchor: false,
                    steps,
                    learning_rate,
                    nms_threshold: None,
                    seed,
                };
                let out = run_descent(&s)?;
                let last = out.final_row(0).expect("one prediction");
                Ok((last.shape_error, last.iou_to_gt))
            };
            Ok([run(LossKind::IoU)?, run(LossKind::DecIoU)?])
        })
        .collect::<Result<_, SimError>>()?;

    let n = trials as f64;
    let mean = |i: usize, shape: bool| {
        finals
            .iter()
            .map(|f| if shape { f[i].0 } else { f[i].1 })
            .sum::<f64>()
            / n
    };
    Ok(ShapeSummary {
        trials,
        steps,
        learning_rate,
        mean_shape_error_iou: mean(0, true),
        mean_shape_error_deciou: mean(1, true),
        mean_iou_iou: mean(0, false),
        mean_iou_deciou: mean(1, false),
        deciou_shape_wins: finals.iter().filter(|f| f[1].0 < f[0].0).count(),
    })
}
