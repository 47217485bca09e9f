use boxloss::assignment::{confidence_label, dynamic_anchor, select_second_gt, GroundTruthSet};
use boxloss::geometry::{iou, overlap_geometry, BBox};
use boxloss::losses::{deciou, loss_eval, LossKind, PushConfig};
use boxloss::nms::{greedy_nms, Detection};
use boxloss::oracle::{near_clamp, raster_iou};
use proptest::prelude::*;

fn real_box() -> impl Strategy<Value = BBox> {
    (0.0..10.0f64, 0.0..10.0f64, 0.5..5.0f64, 0.5..5.0f64)
        .prop_map(|(x, y, w, h)| BBox::new(x, y, x + w, y + h).unwrap())
}

/// A box near `a`: centre within the box, sides scaled by up to 2x.
fn near(a: BBox) -> impl Strategy<Value = BBox> {
    (-0.45..0.45f64, -0.45..0.45f64, 0.5..2.0f64, 0.5..2.0f64).prop_map(move |(u, v, sw, sh)| {
        let (cx, cy) = a.center();
        BBox::from_center(
            cx + u * a.width(),
            cy + v * a.height(),
            a.width() * sw,
            a.height() * sh,
        )
        .unwrap()
    })
}

fn overlapping_pair() -> impl Strategy<Value = (BBox, BBox)> {
    real_box().prop_flat_map(|a| (Just(a), near(a)))
}

fn overlapping_triple() -> impl Strategy<Value = (BBox, BBox, BBox)> {
    real_box().prop_flat_map(|a| (Just(a), near(a), near(a)))
}

fn int_box() -> impl Strategy<Value = BBox> {
    (0u32..=64, 0u32..=64, 0u32..=64, 0u32..=64).prop_map(|(a, b, c, d)| {
        BBox::new(
            a.min(c) as f64,
            b.min(d) as f64,
            a.max(c) as f64,
            b.max(d) as f64,
        )
        .unwrap()
    })
}

fn step(b: &BBox, grad: [f64; 4], lr: f64) -> BBox {
    let mut c = b.coords();
    for (x, g) in c.iter_mut().zip(grad) {
        *x -= lr * g;
    }
    BBox::from_unordered(c).unwrap().0
}

const NON_PUSH: [LossKind; 4] = [
    LossKind::IoU,
    LossKind::GIoU,
    LossKind::DIoU,
    LossKind::DecIoU,
];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn iou_symmetric_and_bounded(a in real_box(), b in real_box()) {
        let ab = iou(&a, &b);
        prop_assert_eq!(ab, iou(&b, &a));
        prop_assert!((0.0..=1.0).contains(&ab));
    }

    #[test]
    fn iou_matches_lattice_count_on_integer_boxes(a in int_box(), b in int_box()) {
        prop_assert_eq!(iou(&a, &b), raster_iou(&a, &b, 1));
    }

    #[test]
    fn enclosing_box_contains_both(a in real_box(), b in real_box()) {
        let c = a.enclosing(&b);
        prop_assert!(c.contains(&a) && c.contains(&b));
        let g = overlap_geometry(&a, &b);
        prop_assert!(g.iw <= g.cw && g.ih <= g.ch);
        prop_assert!(g.intersection() <= a.area().min(b.area()) + 1e-12);
        prop_assert!(g.center_dist_sq <= g.enclosing_diag_sq);
    }

    #[test]
    fn geometry_is_translation_invariant(
        a in real_box(), b in real_box(), dx in -50.0..50.0f64, dy in -50.0..50.0f64
    ) {
        let g = overlap_geometry(&a, &b);
        let t = overlap_geometry(&a.translate(dx, dy).unwrap(), &b.translate(dx, dy).unwrap());
        let close = |x: f64, y: f64| (x - y).abs() <= 1e-9 * (1.0 + x.abs());
        prop_assert!(close(g.iou, t.iou));
        prop_assert!(close(g.iw, t.iw) && close(g.ih, t.ih));
        prop_assert!(close(g.cw, t.cw) && close(g.ch, t.ch));
        prop_assert!(close(g.center_dist_sq, t.center_dist_sq));
    }

    #[test]
    fn deciou_never_exceeds_iou(a in real_box(), b in real_box()) {
        let g = overlap_geometry(&a, &b);
        let d = deciou(&a, &b).unwrap();
        prop_assert!(d <= g.iou);
        let penalties_vanish = g.cw == g.iw && g.ch == g.ih;
        prop_assert_eq!(d == g.iou, penalties_vanish);
    }

    #[test]
    fn push_with_zero_alpha_reduces_exactly(a in real_box(), b in real_box(), c in real_box()) {
        prop_assume!(b != c);
        let zero = PushConfig::new(0.0).unwrap();
        for (push, base) in [(LossKind::PushIoU, LossKind::IoU), (LossKind::PushDecIoU, LossKind::DecIoU)] {
            let p = loss_eval(push, &a, &b, Some(&c), &zero).unwrap();
            let q = loss_eval(base, &a, &b, None, &zero).unwrap();
            prop_assert_eq!(p.value.to_bits(), q.value.to_bits());
            prop_assert_eq!(p.grad.map(f64::to_bits), q.grad.map(f64::to_bits));
        }
    }

    #[test]
    fn losses_vanish_only_at_identity(a in real_box()) {
        let cfg = PushConfig::default();
        for kind in LossKind::ALL {
            let l = loss_eval(kind, &a, &a, None, &cfg).unwrap();
            prop_assert_eq!(l.value, 0.0);
            prop_assert!(l.grad.iter().all(|g| *g == 0.0));
        }
    }

    #[test]
    fn losses_respect_their_ranges(a in real_box(), b in real_box(), c in real_box()) {
        prop_assume!(b != c);
        let cfg = PushConfig::new(0.7).unwrap();
        let range = |k: LossKind| match k {
            LossKind::IoU => (0.0, 1.0),
            LossKind::GIoU | LossKind::DIoU => (0.0, 2.0),
            LossKind::DecIoU => (0.0, 3.0),
            LossKind::PushIoU => (0.0, 1.7),
            LossKind::PushDecIoU => (0.0, 3.7),
        };
        for kind in LossKind::ALL {
            let l = loss_eval(kind, &a, &b, Some(&c), &cfg).unwrap();
            let (lo, hi) = range(kind);
            prop_assert!(l.value >= lo && l.value <= hi, "{} {}", kind, l.value);
            prop_assert!(l.grad.iter().all(|g| g.is_finite()));
        }
    }

    #[test]
    fn small_step_decreases_loss((a, b) in overlapping_pair()) {
        prop_assume!(a != b);
        prop_assume!(!near_clamp(&a, &b, 1e-2));
        let cfg = PushConfig::default();
        for kind in NON_PUSH {
            let l = loss_eval(kind, &a, &b, None, &cfg).unwrap();
            let next = loss_eval(kind, &step(&a, l.grad, 1e-3), &b, None, &cfg).unwrap();
            prop_assert!(next.value < l.value, "{}: {} -> {}", kind, l.value, next.value);
        }
    }

    #[test]
    fn push_step_reduces_second_overlap((a, b, c) in overlapping_triple()) {
        prop_assume!(b != c);
        prop_assume!(!near_clamp(&a, &b, 1e-2) && !near_clamp(&a, &c, 1e-2));
        let cfg = PushConfig::new(1.0).unwrap();
        let lr = 1e-3;
        let push = loss_eval(LossKind::PushIoU, &a, &b, Some(&c), &cfg).unwrap();
        let plain = loss_eval(LossKind::IoU, &a, &b, None, &cfg).unwrap();
        let after_push = iou(&step(&a, push.grad, lr), &c);
        let after_plain = iou(&step(&a, plain.grad, lr), &c);
        prop_assert!(after_push <= after_plain, "{} > {}", after_push, after_plain);

        // At the optimum of the base term only the push term acts.
        let at_gt = loss_eval(LossKind::PushIoU, &b, &b, Some(&c), &cfg).unwrap();
        if iou(&b, &c) > 0.0 && !near_clamp(&b, &c, 1e-2) {
            prop_assert!(iou(&step(&b, at_gt.grad, lr), &c) <= iou(&b, &c));
        }
    }

    #[test]
    fn anchor_has_gt_shape(p in real_box(), g in real_box()) {
        let a = dynamic_anchor(&p, &g).unwrap();
        prop_assert!((a.width() - g.width()).abs() <= 1e-12);
        prop_assert!((a.height() - g.height()).abs() <= 1e-12);
        let (pc, ac) = (p.center(), a.center());
        prop_assert!((pc.0 - ac.0).abs() <= 1e-12 && (pc.1 - ac.1).abs() <= 1e-12);
        for dynamic in [false, true] {
            let l = confidence_label(&p, &g, dynamic).unwrap();
            prop_assert!((0.0..=1.0).contains(&l));
        }
    }

    #[test]
    fn centered_prediction_gets_full_dynamic_label(
        g in real_box(), sw in 0.3..3.0f64, sh in 0.3..3.0f64
    ) {
        let (cx, cy) = g.center();
        let p = BBox::from_center(cx, cy, g.width() * sw, g.height() * sh).unwrap();
        let dynamic = confidence_label(&p, &g, true).unwrap();
        let plain = confidence_label(&p, &g, false).unwrap();
        prop_assert!(dynamic >= 1.0 - 1e-12);
        prop_assert!(dynamic >= plain);
    }

    #[test]
    fn dynamic_label_grows_as_center_approaches(
        g in real_box(), p in real_box()
    ) {
        let (gx, gy) = g.center();
        let (px, py) = p.center();
        let mut last = -1.0;
        for i in 0..=20 {
            let t = i as f64 / 20.0;
            let moved = BBox::from_center(
                px + t * (gx - px), py + t * (gy - py), p.width(), p.height()
            ).unwrap();
            let l = confidence_label(&moved, &g, true).unwrap();
            prop_assert!(l >= last - 1e-12, "t={}: {} < {}", t, l, last);
            last = l;
        }
    }

    #[test]
    fn second_gt_excludes_match(
        pred in real_box(), gts in prop::collection::vec(real_box(), 1..7), m in 0usize..7
    ) {
        let m = m % gts.len();
        let set = GroundTruthSet::new(gts.clone());
        let sel = select_second_gt(&pred, &set, m).unwrap();
        let any_other = gts.iter().enumerate().any(|(j, g)| j != m && iou(&pred, g) > 0.0);
        prop_assert_eq!(sel.is_some(), any_other);
        if let Some(j) = sel {
            prop_assert_ne!(j, m);
            let best = iou(&pred, &gts[j]);
            for (k, g) in gts.iter().enumerate() {
                if k != m {
                    prop_assert!(iou(&pred, g) <= best);
                }
            }
        }
    }

    #[test]
    fn nms_is_idempotent_and_separates(
        boxes in prop::collection::vec((real_box(), 0.0..1.0f64), 0..12),
        threshold in 0.0..1.0f64,
    ) {
        let dets: Vec<Detection> = boxes
            .iter()
            .enumerate()
            .map(|(index, (bbox, score))| Detection { bbox: *bbox, score: *score, index })
            .collect();
        let kept = greedy_nms(&dets, threshold);
        prop_assert_eq!(&greedy_nms(&kept, threshold), &kept);
        for (i, a) in kept.iter().enumerate() {
            for b in &kept[i + 1..] {
                prop_assert!(iou(&a.bbox, &b.bbox) <= threshold);
            }
        }
        if !dets.is_empty() {
            prop_assert!(!kept.is_empty());
        }
    }
}
