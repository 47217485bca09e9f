//! Independent checks for the loss module: central finite differences for
//! the gradients and a lattice count for IoU.
//!
//! Nothing in here reuses the analytic derivative code.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, OracleError};
use crate::geometry::BBox;
use crate::losses::{loss_eval, LossKind, PushConfig};

/// Default central-difference step.
pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// Samples with any kink within this distance are skipped.
pub const CLAMP_SKIP_RADIUS: f64 = 1e-3;

/// Gradient magnitude below which errors are compared absolutely. At the
/// default tolerance of 1e-4 this gives an absolute bound of 1e-7.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-3;

const COORD_NAMES: [&str; 4] = ["x1", "y1", "x2", "y2"];

/// Central-difference gradient of a loss with respect to the predicted box.
pub fn fd_gradient(
    kind: LossKind,
    pred: &BBox,
    gt: &BBox,
    second_gt: Option<&BBox>,
    cfg: &PushConfig,
    h: f64,
) -> Result<[f64; 4], OracleError> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(OracleError::InvalidStep(h));
    }
    let eval_at = |axis: usize, delta: f64| -> Result<f64, OracleError> {
        let mut c = pred.coords();
        c[axis] += delta;
        let wrap = |e: Error| OracleError::Perturbation {
            coordinate: COORD_NAMES[axis],
            source: Box::new(e),
        };
        let moved = BBox::try_from(c).map_err(|e| wrap(e.into()))?;
        loss_eval(kind, &moved, gt, second_gt, cfg)
            .map(|l| l.value)
            .map_err(|e| wrap(e.into()))
    };

    let mut grad = [0.0; 4];
    for (axis, g) in grad.iter_mut().enumerate() {
        let plus = eval_at(axis, h)?;
        let minus = eval_at(axis, -h)?;
        *g = (plus - minus) / (2.0 * h);
    }
    Ok(grad)
}

/// IoU by counting lattice cells whose centers fall inside each box.
///
/// The lattice has `cells_per_unit` cells per unit length and is anchored at
/// the integer floor of the pair's bounding window, so integer boxes are
/// counted exactly for any `cells_per_unit`. A cell belongs to a box when its
/// center lies in `[x1, x2) x [y1, y2)`. Because membership in a box is a
/// product of per-axis memberships, the counts are accumulated per axis.
pub fn raster_iou(a: &BBox, b: &BBox, cells_per_unit: u32) -> f64 {
    let k = f64::from(cells_per_unit.max(1));
    let axis_counts = |lo_a: f64, hi_a: f64, lo_b: f64, hi_b: f64| -> (u64, u64, u64) {
        let origin = lo_a.min(lo_b).floor();
        let end = hi_a.max(hi_b).ceil();
        let cells = ((end - origin) * k).round() as u64;
        let (mut in_a, mut in_b, mut in_both) = (0u64, 0u64, 0u64);
        for i in 0..cells {
            let c = origin + (i as f64 + 0.5) / k;
            let ia = lo_a <= c && c < hi_a;
            let ib = lo_b <= c && c < hi_b;
            in_a += u64::from(ia);
            in_b += u64::from(ib);
            in_both += u64::from(ia && ib);
        }
        (in_a, in_b, in_both)
    };

    let (ax, bx, ix) = axis_counts(a.x1(), a.x2(), b.x1(), b.x2());
    let (ay, by, iy) = axis_counts(a.y1(), a.y2(), b.y1(), b.y2());
    let inter = ix * iy;
    let union = ax * ay + bx * by - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Where the largest gradient discrepancy occurred.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorstCase {
    pub pred: BBox,
    pub gt: BBox,
    pub second_gt: Option<BBox>,
    pub component: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub kind: LossKind,
    pub samples: usize,
    pub tolerance: f64,
    /// Largest `|analytic - numeric| / max(|analytic|, |numeric|, 1e-3)`.
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub worst_case: Option<WorstCase>,
    pub skipped_near_clamp: usize,
}

impl GradCheckReport {
    pub fn checked(&self) -> usize {
        self.samples - self.skipped_near_clamp
    }

    pub fn passed(&self) -> bool {
        self.checked() > 0 && self.max_rel_error <= self.tolerance
    }
}

/// Normalised gradient error used by [`grad_check_suite`].
pub fn gradient_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR);
    (analytic - numeric).abs() / scale
}

/// Box configuration families sampled round-robin by the gradient check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleFamily {
    Overlapping,
    Touching,
    Contained,
    Disjoint,
}

impl SampleFamily {
    const CYCLE: [SampleFamily; 4] = [
        SampleFamily::Overlapping,
        SampleFamily::Touching,
        SampleFamily::Contained,
        SampleFamily::Disjoint,
    ];

    pub fn for_index(i: usize) -> Self {
        Self::CYCLE[i % Self::CYCLE.len()]
    }
}

/// A sampled (pred, gt, second gt) configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradSample {
    pub family: SampleFamily,
    pub pred: BBox,
    pub gt: BBox,
    pub second_gt: Option<BBox>,
}

fn random_box(rng: &mut ChaCha8Rng) -> BBox {
    let cx = rng.random_range(2.0..8.0);
    let cy = rng.random_range(2.0..8.0);
    let w = rng.random_range(1.0..5.0);
    let h = rng.random_range(1.0..5.0);
    BBox::from_center(cx, cy, w, h).expect("positive extent")
}

/// A box whose center lies within the extent of `anchor`, so the two overlap.
fn overlapping_box(rng: &mut ChaCha8Rng, anchor: &BBox) -> BBox {
    let (acx, acy) = anchor.center();
    let cx = acx + rng.random_range(-0.45..0.45) * anchor.width();
    let cy = acy + rng.random_range(-0.45..0.45) * anchor.height();
    let w = rng.random_range(1.0..5.0);
    let h = rng.random_range(1.0..5.0);
    BBox::from_center(cx, cy, w, h).expect("positive extent")
}

/// Deterministic sample `index` of the stream selected by `seed`.
pub fn grad_sample(seed: u64, index: usize, with_second: bool) -> GradSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let family = SampleFamily::for_index(index);
    let pred = random_box(&mut rng);
    let gt = match family {
        SampleFamily::Overlapping => overlapping_box(&mut rng, &pred),
        SampleFamily::Touching => {
            let w = rng.random_range(1.0..5.0);
            let h = rng.random_range(1.0..5.0);
            let y1 = pred.y1() + rng.random_range(-0.5..0.5) * pred.height();
            BBox::new(pred.x2(), y1, pred.x2() + w, y1 + h).expect("positive extent")
        }
        SampleFamily::Contained => {
            let (outer, shrink) = if rng.random_bool(0.5) {
                (pred, true)
            } else {
                (random_box(&mut rng), false)
            };
            let mx1 = rng.random_range(0.05..0.4) * outer.width();
            let mx2 = rng.random_range(0.05..0.4) * outer.width();
            let my1 = rng.random_range(0.05..0.4) * outer.height();
            let my2 = rng.random_range(0.05..0.4) * outer.height();
            let inner = BBox::new(
                outer.x1() + mx1,
                outer.y1() + my1,
                outer.x2() - mx2,
                outer.y2() - my2,
            )
            .expect("positive extent");
            if shrink {
                inner
            } else {
                // pred sits inside gt instead
                return finish_sample(&mut rng, family, inner, outer, with_second);
            }
        }
        SampleFamily::Disjoint => {
            let w = rng.random_range(1.0..5.0);
            let h = rng.random_range(1.0..5.0);
            let gap_x = rng.random_range(0.1..3.0);
            let gap_y = rng.random_range(0.1..3.0);
            let x1 = if rng.random_bool(0.5) {
                pred.x2() + gap_x
            } else {
                pred.x1() - gap_x - w
            };
            let y1 = if rng.random_bool(0.5) {
                pred.y2() + gap_y
            } else {
                pred.y1() - gap_y - h
            };
            BBox::new(x1, y1, x1 + w, y1 + h).expect("positive extent")
        }
    };
    finish_sample(&mut rng, family, pred, gt, with_second)
}

fn finish_sample(
    rng: &mut ChaCha8Rng,
    family: SampleFamily,
    pred: BBox,
    gt: BBox,
    with_second: bool,
) -> GradSample {
    let second_gt = with_second.then(|| overlapping_box(rng, &pred));
    GradSample {
        family,
        pred,
        gt,
        second_gt,
    }
}

/// True when any max/min switch or overlap clamp of the pair lies within
/// `radius` of `pred`.
pub fn near_clamp(pred: &BBox, other: &BBox, radius: f64) -> bool {
    let p = pred.coords();
    let o = other.coords();
    let coord_tie = p.iter().zip(o.iter()).any(|(a, b)| (a - b).abs() < radius);
    let x_extent = p[2].min(o[2]) - p[0].max(o[0]);
    let y_extent = p[3].min(o[3]) - p[1].max(o[1]);
    coord_tie || x_extent.abs() < radius || y_extent.abs() < radius
}

impl GradSample {
    pub fn near_clamp(&self, radius: f64) -> bool {
        near_clamp(&self.pred, &self.gt, radius)
            || self
                .second_gt
                .is_some_and(|s| near_clamp(&self.pred, &s, radius))
    }
}

enum SampleOutcome {
    Skipped,
    Checked {
        rel: f64,
        abs: f64,
        worst: WorstCase,
    },
}

/// Compares analytic and finite-difference gradients on `samples` seeded
/// configurations. Failures are reported in the returned value.
pub fn grad_check_suite(
    kind: LossKind,
    samples: usize,
    seed: u64,
    tolerance: f64,
) -> GradCheckReport {
    let cfg = PushConfig::default();
    let outcomes: Vec<SampleOutcome> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let s = grad_sample(seed, i, kind.is_push());
            if s.near_clamp(CLAMP_SKIP_RADIUS) {
                return SampleOutcome::Skipped;
            }
            let second = s.second_gt.as_ref();
            let (analytic, numeric) = match (
                loss_eval(kind, &s.pred, &s.gt, second, &cfg),
                fd_gradient(kind, &s.pred, &s.gt, second, &cfg, DEFAULT_FD_STEP),
            ) {
                (Ok(a), Ok(n)) => (a.grad, n),
                _ => return SampleOutcome::Skipped,
            };
            let mut rel = -1.0;
            let mut abs: f64 = 0.0;
            let mut worst = None;
            for c in 0..4 {
                let e = gradient_error(analytic[c], numeric[c]);
                abs = abs.max((analytic[c] - numeric[c]).abs());
                if e > rel {
                    rel = e;
                    worst = Some(WorstCase {
                        pred: s.pred,
                        gt: s.gt,
                        second_gt: s.second_gt,
                        component: c,
                        analytic: analytic[c],
                        numeric: numeric[c],
                    });
                }
            }
            SampleOutcome::Checked {
                rel,
                abs,
                worst: worst.expect("four components"),
            }
        })
        .collect();

    let mut report = GradCheckReport {
        kind,
        samples,
        tolerance,
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        worst_case: None,
        skipped_near_clamp: 0,
    };
    for outcome in outcomes {
        match outcome {
            SampleOutcome::Skipped => report.skipped_near_clamp += 1,
            SampleOutcome::Checked { rel, abs, worst } => {
                report.max_abs_error = report.max_abs_error.max(abs);
                if report.worst_case.is_none() || rel > report.max_rel_error {
                    report.max_rel_error = rel;
                    report.worst_case = Some(worst);
                }
            }
        }
    }
    report
}
