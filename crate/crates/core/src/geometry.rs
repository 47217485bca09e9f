//! Axis-aligned box arithmetic.
//!
//! Boxes are stored in corner form `(x1, y1, x2, y2)` with `x2 >= x1` and
//! `y2 >= y1`. Zero-width or zero-height boxes are valid and have area 0.

use serde::{Deserialize, Serialize};

use crate::error::GeometryError;

/// An axis-aligned rectangle in corner form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
}

impl BBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self, GeometryError> {
        let coords = [x1, y1, x2, y2];
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(GeometryError::NonFinite(coords));
        }
        if x2 < x1 || y2 < y1 {
            return Err(GeometryError::NegativeExtent(coords));
        }
        Ok(Self { x1, y1, x2, y2 })
    }

    /// Builds a box from possibly crossed corners by swapping each inverted
    /// axis. Returns the box and whether a swap happened.
    pub fn from_unordered(coords: [f64; 4]) -> Result<(Self, bool), GeometryError> {
        let [mut x1, mut y1, mut x2, mut y2] = coords;
        let mut swapped = false;
        if x2 < x1 {
            std::mem::swap(&mut x1, &mut x2);
            swapped = true;
        }
        if y2 < y1 {
            std::mem::swap(&mut y1, &mut y2);
            swapped = true;
        }
        Ok((Self::new(x1, y1, x2, y2)?, swapped))
    }

    /// Center/size constructor. The box is still stored in corner form.
    pub fn from_center(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self, GeometryError> {
        Self::new(cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0)
    }

    #[inline]
    pub fn x1(&self) -> f64 {
        self.x1
    }

    #[inline]
    pub fn y1(&self) -> f64 {
        self.y1
    }

    #[inline]
    pub fn x2(&self) -> f64 {
        self.x2
    }

    #[inline]
    pub fn y2(&self) -> f64 {
        self.y2
    }

    #[inline]
    pub fn coords(&self) -> [f64; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }

    #[inline]
    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    #[inline]
    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    #[inline]
    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)
    }

    /// `(cx, cy, w, h)`.
    pub fn to_center_size(&self) -> [f64; 4] {
        let (cx, cy) = self.center();
        [cx, cy, self.width(), self.height()]
    }

    pub fn is_degenerate(&self) -> bool {
        self.width() == 0.0 || self.height() == 0.0
    }

    /// Smallest box containing both `self` and `other`.
    pub fn enclosing(&self, other: &BBox) -> BBox {
        BBox {
            x1: self.x1.min(other.x1),
            y1: self.y1.min(other.y1),
            x2: self.x2.max(other.x2),
            y2: self.y2.max(other.y2),
        }
    }

    /// Closed containment: every point of `other` lies in `self`.
    pub fn contains(&self, other: &BBox) -> bool {
        self.x1 <= other.x1 && self.y1 <= other.y1 && self.x2 >= other.x2 && self.y2 >= other.y2
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Result<BBox, GeometryError> {
        BBox::new(self.x1 + dx, self.y1 + dy, self.x2 + dx, self.y2 + dy)
    }
}

impl TryFrom<[f64; 4]> for BBox {
    type Error = GeometryError;

    fn try_from(c: [f64; 4]) -> Result<Self, Self::Error> {
        BBox::new(c[0], c[1], c[2], c[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        b.coords()
    }
}

impl std::fmt::Display for BBox {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {}, {}, {})", self.x1, self.y1, self.x2, self.y2)
    }
}

/// Quantities shared by every loss for one (prediction, ground truth) pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverlapGeometry {
    pub area_pred: f64,
    pub area_gt: f64,
    /// Intersection width, clamped at 0.
    pub iw: f64,
    /// Intersection height, clamped at 0.
    pub ih: f64,
    /// Enclosing box width.
    pub cw: f64,
    /// Enclosing box height.
    pub ch: f64,
    pub enclosing_area: f64,
    /// Squared distance between box centers.
    pub center_dist_sq: f64,
    /// Squared diagonal of the enclosing box.
    pub enclosing_diag_sq: f64,
    pub iou: f64,
}

impl OverlapGeometry {
    pub fn intersection(&self) -> f64 {
        self.iw * self.ih
    }

    pub fn union(&self) -> f64 {
        self.area_pred + self.area_gt - self.intersection()
    }
}

pub fn overlap_geometry(pred: &BBox, gt: &BBox) -> OverlapGeometry {
    let area_pred = pred.area();
    let area_gt = gt.area();

    let iw = (pred.x2.min(gt.x2) - pred.x1.max(gt.x1)).max(0.0);
    let ih = (pred.y2.min(gt.y2) - pred.y1.max(gt.y1)).max(0.0);

    let c = pred.enclosing(gt);
    let cw = c.width();
    let ch = c.height();

    let (pcx, pcy) = pred.center();
    let (gcx, gcy) = gt.center();
    let center_dist_sq = (pcx - gcx).powi(2) + (pcy - gcy).powi(2);

    let inter = iw * ih;
    let union = area_pred + area_gt - inter;
    let iou = if union > 0.0 { inter / union } else { 0.0 };

    OverlapGeometry {
        area_pred,
        area_gt,
        iw,
        ih,
        cw,
        ch,
        enclosing_area: cw * ch,
        center_dist_sq,
        enclosing_diag_sq: cw * cw + ch * ch,
        iou,
    }
}

/// Intersection over union. Returns 0 when both boxes are degenerate.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    overlap_geometry(a, b).iou
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(x1: f64, y1: f64, x2: f64, y2: f64) -> BBox {
        BBox::new(x1, y1, x2, y2).unwrap()
    }

    #[test]
    fn rejects_negative_extent_and_nan() {
        assert!(matches!(
            BBox::new(1.0, 0.0, 0.0, 1.0),
            Err(GeometryError::NegativeExtent(_))
        ));
        assert!(matches!(
            BBox::new(0.0, f64::NAN, 1.0, 1.0),
            Err(GeometryError::NonFinite(_))
        ));
        assert!(BBox::new(0.0, 0.0, 0.0, 3.0).is_ok());
    }

    #[test]
    fn identical_boxes() {
        let g = overlap_geometry(&b(0.0, 0.0, 2.0, 2.0), &b(0.0, 0.0, 2.0, 2.0));
        assert_eq!(g.iou, 1.0);
        assert_eq!(g.iw, 2.0);
        assert_eq!(g.cw, 2.0);
    }

    #[test]
    fn disjoint_boxes_clamp() {
        let g = overlap_geometry(&b(0.0, 0.0, 1.0, 1.0), &b(5.0, 5.0, 6.0, 6.0));
        assert_eq!(g.iou, 0.0);
        assert_eq!((g.iw, g.ih), (0.0, 0.0));
        assert_eq!((g.cw, g.ch), (6.0, 6.0));
    }

    #[test]
    fn partial_overlap() {
        // intersection 1, union 4 + 4 - 1 = 7
        let g = overlap_geometry(&b(0.0, 0.0, 2.0, 2.0), &b(1.0, 1.0, 3.0, 3.0));
        assert_eq!((g.iw, g.ih), (1.0, 1.0));
        assert_eq!(g.iou, 1.0 / 7.0);
        assert_eq!((g.cw, g.ch), (3.0, 3.0));
        assert_eq!(g.enclosing_area, 9.0);
        assert_eq!(g.center_dist_sq, 2.0);
        assert_eq!(g.enclosing_diag_sq, 18.0);
    }

    #[test]
    fn iou_examples() {
        assert_eq!(iou(&b(0.0, 0.0, 4.0, 4.0), &b(0.0, 0.0, 4.0, 4.0)), 1.0);
        assert_eq!(iou(&b(0.0, 0.0, 4.0, 4.0), &b(1.0, 1.0, 3.0, 3.0)), 0.25);
        assert_eq!(iou(&b(0.0, 0.0, 2.0, 2.0), &b(2.0, 0.0, 4.0, 2.0)), 0.0);
    }

    #[test]
    fn degenerate_pair_has_zero_iou() {
        let p = b(1.0, 1.0, 1.0, 1.0);
        assert_eq!(iou(&p, &p), 0.0);
        let line = b(0.0, 0.0, 0.0, 2.0);
        assert_eq!(iou(&line, &b(-1.0, 0.0, 1.0, 2.0)), 0.0);
    }

    #[test]
    fn unordered_corners_are_swapped() {
        let (bx, swapped) = BBox::from_unordered([2.0, 0.0, 1.0, 3.0]).unwrap();
        assert!(swapped);
        assert_eq!(bx.coords(), [1.0, 0.0, 2.0, 3.0]);
        let (_, swapped) = BBox::from_unordered([0.0, 0.0, 1.0, 1.0]).unwrap();
        assert!(!swapped);
    }

    #[test]
    fn center_size_round_trip() {
        let bx = BBox::from_center(4.0, 4.0, 4.0, 2.0).unwrap();
        assert_eq!(bx.coords(), [2.0, 3.0, 6.0, 5.0]);
        assert_eq!(bx.to_center_size(), [4.0, 4.0, 4.0, 2.0]);
    }
}
