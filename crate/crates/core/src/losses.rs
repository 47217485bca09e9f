//! IoU-family regression losses with analytic gradients.
//!
//! Every loss is returned as `1 - metric` together with the gradient with
//! respect to the predicted box's `(x1, y1, x2, y2)`. Gradients are carried
//! forward through the geometry with [`Dual`], so each loss is written once
//! and its derivative falls out of the same expression.
//!
//! Non-smooth points follow two rules:
//!
//! * `max`/`min` between a predicted and a ground-truth coordinate split the
//!   derivative evenly on an exact tie. This makes `pred == gt` a stationary
//!   point of every non-push loss.
//! * The intersection clamp `max(0, extent)` keeps the overlapping branch on
//!   a tie, so edge-touching boxes get the one-sided derivative from the
//!   overlapping side.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::LossError;
use crate::geometry::BBox;

/// Default push weight.
pub const DEFAULT_PUSH_ALPHA: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum LossKind {
    IoU,
    GIoU,
    DIoU,
    DecIoU,
    PushIoU,
    PushDecIoU,
}

impl LossKind {
    pub const ALL: [LossKind; 6] = [
        LossKind::IoU,
        LossKind::GIoU,
        LossKind::DIoU,
        LossKind::DecIoU,
        LossKind::PushIoU,
        LossKind::PushDecIoU,
    ];

    pub fn is_push(self) -> bool {
        matches!(self, LossKind::PushIoU | LossKind::PushDecIoU)
    }

    /// Lower-case name used on the command line and in scenario files.
    pub fn name(self) -> &'static str {
        match self {
            LossKind::IoU => "iou",
            LossKind::GIoU => "giou",
            LossKind::DIoU => "diou",
            LossKind::DecIoU => "deciou",
            LossKind::PushIoU => "pushiou",
            LossKind::PushDecIoU => "pushdeciou",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = LossError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s
            .chars()
            .filter(|c| !matches!(c, '-' | '_'))
            .flat_map(char::to_lowercase)
            .collect();
        LossKind::ALL
            .into_iter()
            .find(|k| k.name() == norm)
            .ok_or_else(|| LossError::UnknownKind(s.to_string()))
    }
}

impl TryFrom<String> for LossKind {
    type Error = LossError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<LossKind> for String {
    fn from(k: LossKind) -> Self {
        k.name().to_string()
    }
}

/// Weight of the push term against the regression term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PushConfig {
    alpha: f64,
}

impl PushConfig {
    pub fn new(alpha: f64) -> Result<Self, LossError> {
        if !alpha.is_finite() || alpha < 0.0 {
            return Err(LossError::InvalidAlpha(alpha));
        }
        Ok(Self { alpha })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

impl Default for PushConfig {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_PUSH_ALPHA,
        }
    }
}

/// Loss value and its gradient with respect to `(x1, y1, x2, y2)` of the
/// predicted box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossEval {
    pub value: f64,
    pub grad: [f64; 4],
}

/// A value paired with its partial derivatives along the four predicted
/// coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Dual {
    v: f64,
    d: [f64; 4],
}

impl Dual {
    fn constant(v: f64) -> Self {
        Self { v, d: [0.0; 4] }
    }

    fn var(v: f64, axis: usize) -> Self {
        let mut d = [0.0; 4];
        d[axis] = 1.0;
        Self { v, d }
    }

    fn scale(self, k: f64) -> Self {
        Self {
            v: self.v * k,
            d: self.d.map(|x| x * k),
        }
    }

    fn div(self, rhs: Dual) -> Self {
        let v = self.v / rhs.v;
        let mut d = [0.0; 4];
        for (i, di) in d.iter_mut().enumerate() {
            *di = (self.d[i] - v * rhs.d[i]) / rhs.v;
        }
        Self { v, d }
    }

    fn square(self) -> Self {
        self * self
    }

    fn average_with(self, other: Dual) -> [f64; 4] {
        let mut d = [0.0; 4];
        for (i, di) in d.iter_mut().enumerate() {
            *di = 0.5 * (self.d[i] + other.d[i]);
        }
        d
    }

    fn max_tied(self, other: Dual) -> Dual {
        if self.v > other.v {
            self
        } else if self.v < other.v {
            other
        } else {
            Dual {
                v: self.v,
                d: self.average_with(other),
            }
        }
    }

    fn min_tied(self, other: Dual) -> Dual {
        if self.v < other.v {
            self
        } else if self.v > other.v {
            other
        } else {
            Dual {
                v: self.v,
                d: self.average_with(other),
            }
        }
    }

    /// `max(0, self)`, keeping the derivative at exactly zero.
    fn clamp_overlap(self) -> Dual {
        if self.v >= 0.0 {
            self
        } else {
            Dual::constant(0.0)
        }
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, rhs: Dual) -> Dual {
        let mut d = self.d;
        for (a, b) in d.iter_mut().zip(rhs.d) {
            *a += b;
        }
        Dual {
            v: self.v + rhs.v,
            d,
        }
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, rhs: Dual) -> Dual {
        let mut d = self.d;
        for (a, b) in d.iter_mut().zip(rhs.d) {
            *a -= b;
        }
        Dual {
            v: self.v - rhs.v,
            d,
        }
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, rhs: Dual) -> Dual {
        let mut d = [0.0; 4];
        for (i, di) in d.iter_mut().enumerate() {
            *di = self.d[i] * rhs.v + self.v * rhs.d[i];
        }
        Dual {
            v: self.v * rhs.v,
            d,
        }
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        self.scale(-1.0)
    }
}

/// Pairwise terms between a differentiable prediction and a fixed box.
struct PairTerms {
    area_pred: Dual,
    iw: Dual,
    ih: Dual,
    inter: Dual,
    union: Dual,
    cw: Dual,
    ch: Dual,
    pred_cx: Dual,
    pred_cy: Dual,
    gt: BBox,
}

impl PairTerms {
    fn new(pred: &BBox, gt: &BBox) -> Self {
        let [x1, y1, x2, y2] = pred.coords();
        let (x1, y1, x2, y2) = (
            Dual::var(x1, 0),
            Dual::var(y1, 1),
            Dual::var(x2, 2),
            Dual::var(y2, 3),
        );
        let [gx1, gy1, gx2, gy2] = gt.coords().map(Dual::constant);

        let w = x2 - x1;
        let h = y2 - y1;
        let area_pred = w * h;
        let area_gt = Dual::constant(gt.area());

        let iw = (x2.min_tied(gx2) - x1.max_tied(gx1)).clamp_overlap();
        let ih = (y2.min_tied(gy2) - y1.max_tied(gy1)).clamp_overlap();
        let inter = iw * ih;
        let union = area_pred + area_gt - inter;

        let cw = x2.max_tied(gx2) - x1.min_tied(gx1);
        let ch = y2.max_tied(gy2) - y1.min_tied(gy1);

        Self {
            area_pred,
            iw,
            ih,
            inter,
            union,
            cw,
            ch,
            pred_cx: (x1 + x2).scale(0.5),
            pred_cy: (y1 + y2).scale(0.5),
            gt: *gt,
        }
    }

    fn iou(&self) -> Dual {
        if self.union.v > 0.0 {
            self.inter.div(self.union)
        } else {
            Dual::constant(0.0)
        }
    }

    fn enclosing_area(&self) -> Dual {
        self.cw * self.ch
    }
}

fn one_minus(metric: Dual) -> LossEval {
    let loss = Dual::constant(1.0) - metric;
    LossEval {
        value: loss.v,
        grad: loss.d,
    }
}

fn iou_metric(pred: &BBox, gt: &BBox) -> Dual {
    PairTerms::new(pred, gt).iou()
}

fn deciou_metric(pred: &BBox, gt: &BBox) -> Result<Dual, LossError> {
    let t = PairTerms::new(pred, gt);
    if t.cw.v <= 0.0 || t.ch.v <= 0.0 {
        return Err(LossError::DegenerateEnclosingAxis);
    }
    // (C_w - I_w)^2 / C_w^2 written as (1 - I_w / C_w)^2
    let one = Dual::constant(1.0);
    let pen_w = (one - t.iw.div(t.cw)).square();
    let pen_h = (one - t.ih.div(t.ch)).square();
    Ok(t.iou() - pen_w - pen_h)
}

/// `1 - IoU`.
pub fn loss_iou(pred: &BBox, gt: &BBox) -> LossEval {
    one_minus(iou_metric(pred, gt))
}

/// `1 - GIoU`, where GIoU subtracts the share of the enclosing box not
/// covered by the union.
pub fn loss_giou(pred: &BBox, gt: &BBox) -> Result<LossEval, LossError> {
    let t = PairTerms::new(pred, gt);
    let enclosing = t.enclosing_area();
    if (t.area_pred.v == 0.0 && t.gt.area() == 0.0) || enclosing.v <= 0.0 {
        return Err(LossError::DegenerateEnclosure);
    }
    let penalty = (enclosing - t.union).div(enclosing);
    Ok(one_minus(t.iou() - penalty))
}

/// `1 - DIoU`. The center penalty is 0 when the enclosing diagonal is 0.
pub fn loss_diou(pred: &BBox, gt: &BBox) -> LossEval {
    let t = PairTerms::new(pred, gt);
    let (gcx, gcy) = t.gt.center();
    let dist_sq =
        (t.pred_cx - Dual::constant(gcx)).square() + (t.pred_cy - Dual::constant(gcy)).square();
    let diag_sq = t.cw.square() + t.ch.square();
    let penalty = if diag_sq.v > 0.0 {
        dist_sq.div(diag_sq)
    } else {
        Dual::constant(0.0)
    };
    one_minus(t.iou() - penalty)
}

/// `1 - DecIoU`: IoU minus a width and a height penalty that vanish when the
/// overlap spans the enclosing box on that axis.
pub fn loss_deciou(pred: &BBox, gt: &BBox) -> Result<LossEval, LossError> {
    Ok(one_minus(deciou_metric(pred, gt)?))
}

/// Push-IoU or Push-DecIoU: the base loss plus `alpha * IoU(pred, second_gt)`.
///
/// With no second ground truth, or with `alpha == 0`, the base loss is
/// returned unchanged.
pub fn loss_push(
    pred: &BBox,
    gt: &BBox,
    second_gt: Option<&BBox>,
    kind: LossKind,
    cfg: &PushConfig,
) -> Result<LossEval, LossError> {
    let base = match kind {
        LossKind::PushIoU => loss_iou(pred, gt),
        LossKind::PushDecIoU => loss_deciou(pred, gt)?,
        other => return Err(LossError::NotPushKind(other)),
    };
    let Some(second) = second_gt else {
        return Ok(base);
    };
    if second == gt {
        return Err(LossError::SecondGtEqualsGt);
    }
    if cfg.alpha() == 0.0 {
        return Ok(base);
    }
    let push = iou_metric(pred, second).scale(cfg.alpha());
    let mut grad = base.grad;
    for (g, p) in grad.iter_mut().zip(push.d) {
        *g += p;
    }
    Ok(LossEval {
        value: base.value + push.v,
        grad,
    })
}

/// Dispatch on `kind`. Non-push kinds ignore `second_gt` and `cfg`.
pub fn loss_eval(
    kind: LossKind,
    pred: &BBox,
    gt: &BBox,
    second_gt: Option<&BBox>,
    cfg: &PushConfig,
) -> Result<LossEval, LossError> {
    match kind {
        LossKind::IoU => Ok(loss_iou(pred, gt)),
        LossKind::GIoU => loss_giou(pred, gt),
        LossKind::DIoU => Ok(loss_diou(pred, gt)),
        LossKind::DecIoU => loss_deciou(pred, gt),
        LossKind::PushIoU | LossKind::PushDecIoU => loss_push(pred, gt, second_gt, kind, cfg),
    }
}

/// The DecIoU metric itself (not the loss).
pub fn deciou(pred: &BBox, gt: &BBox) -> Result<f64, LossError> {
    deciou_metric(pred, gt).map(|d| d.v)
}
