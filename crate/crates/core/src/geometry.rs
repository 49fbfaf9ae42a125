//! Normalized axis-aligned boxes `<x, y, w, h>` and overlap measures.
//!
//! The all-zero box is the canonical "absent" location. It contributes only its
//! corner point to a hull, so `hull(b, ZERO)` stretches `b` to the origin.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Guard for areas and denominators.
pub const EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

/// Which generalized-IoU expression to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GiouConvention {
    /// `IoU - |C \ (A ∪ B)| / |C|`.
    #[default]
    Standard,
    /// `IoU - |C \ (A ∩ B)| / |C|`, kept for audits of the printed loss.
    PaperLiteral,
}

impl BBox {
    pub const ZERO: BBox = BBox { x: 0.0, y: 0.0, w: 0.0, h: 0.0 };
    pub const FULL: BBox = BBox { x: 0.0, y: 0.0, w: 1.0, h: 1.0 };

    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        let b = BBox { x, y, w, h };
        if b.is_valid() {
            Ok(b)
        } else {
            Err(Error::InvalidBox { x, y, w, h })
        }
    }

    /// Clip arbitrary coordinates into a valid box. Used for network outputs.
    pub fn clamped(x: f64, y: f64, w: f64, h: f64) -> Self {
        let x = x.clamp(0.0, 1.0);
        let y = y.clamp(0.0, 1.0);
        BBox { x, y, w: w.clamp(0.0, 1.0 - x), h: h.clamp(0.0, 1.0 - y) }
    }

    pub fn from_corners(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        BBox { x: x0, y: y0, w: (x1 - x0).max(0.0), h: (y1 - y0).max(0.0) }
    }

    pub fn is_valid(&self) -> bool {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        unit(self.x)
            && unit(self.y)
            && unit(self.w)
            && unit(self.h)
            && self.x + self.w <= 1.0 + EPS
            && self.y + self.h <= 1.0 + EPS
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.x, self.y, self.w, self.h]
    }

    pub fn x1(&self) -> f64 {
        self.x + self.w
    }

    pub fn y1(&self) -> f64 {
        self.y + self.h
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn is_zero(&self) -> bool {
        *self == BBox::ZERO
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + 0.5 * self.w, self.y + 0.5 * self.h)
    }

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let w = (self.x1().min(other.x1()) - self.x.max(other.x)).max(0.0);
        let h = (self.y1().min(other.y1()) - self.y.max(other.y)).max(0.0);
        w * h
    }

    pub fn union_area(&self, other: &BBox) -> f64 {
        self.area() + other.area() - self.intersection_area(other)
    }

    pub fn contains(&self, other: &BBox) -> bool {
        other.x >= self.x - EPS
            && other.y >= self.y - EPS
            && other.x1() <= self.x1() + EPS
            && other.y1() <= self.y1() + EPS
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        b.as_array()
    }
}

impl TryFrom<[f64; 4]> for BBox {
    type Error = Error;

    fn try_from(a: [f64; 4]) -> Result<Self> {
        BBox::new(a[0], a[1], a[2], a[3])
    }
}

pub fn area(b: &BBox) -> f64 {
    b.area()
}

/// Intersection over union; 0 when the union is empty.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let union = a.union_area(b);
    if union < EPS {
        0.0
    } else {
        (a.intersection_area(b) / union).min(1.0)
    }
}

/// Smallest axis-aligned box containing both inputs.
pub fn hull(a: &BBox, b: &BBox) -> BBox {
    BBox::from_corners(
        a.x.min(b.x),
        a.y.min(b.y),
        a.x1().max(b.x1()),
        a.y1().max(b.y1()),
    )
}

/// Standard generalized IoU in `[-1, 1]`; 0 when the hull is degenerate.
pub fn giou(a: &BBox, b: &BBox) -> f64 {
    let c = hull(a, b).area();
    if c < EPS {
        return 0.0;
    }
    iou(a, b) - (c - a.union_area(b)) / c
}

/// The printed variant that subtracts the hull minus the *intersection*.
pub fn giou_paper_literal(a: &BBox, b: &BBox) -> f64 {
    let c = hull(a, b).area();
    if c < EPS {
        return 0.0;
    }
    iou(a, b) - (c - a.intersection_area(b)) / c
}

pub fn giou_with(convention: GiouConvention, a: &BBox, b: &BBox) -> f64 {
    match convention {
        GiouConvention::Standard => giou(a, b),
        GiouConvention::PaperLiteral => giou_paper_literal(a, b),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn b(x: f64, y: f64, w: f64, h: f64) -> BBox {
        BBox::new(x, y, w, h).unwrap()
    }

    #[test]
    fn area_examples() {
        assert_eq!(BBox::ZERO.area(), 0.0);
        assert_eq!(BBox::FULL.area(), 1.0);
        // 0.72 * 0.56
        assert!((b(0.14, 0.13, 0.72, 0.56).area() - 0.4032).abs() < 1e-12);
    }

    #[test]
    fn iou_examples() {
        let a = b(0.1, 0.2, 0.3, 0.4);
        assert!((iou(&a, &a) - 1.0).abs() < 1e-12);
        assert_eq!(iou(&b(0.0, 0.0, 0.5, 0.5), &b(0.5, 0.5, 0.5, 0.5)), 0.0);
        // overlap 0.25^2 = 0.0625, union 0.25 + 0.25 - 0.0625 = 0.4375
        let v = iou(&b(0.0, 0.0, 0.5, 0.5), &b(0.25, 0.25, 0.5, 0.5));
        assert!((v - 0.0625 / 0.4375).abs() < 1e-12);
        assert!((v - 0.142857).abs() < 1e-6);
        assert_eq!(iou(&BBox::ZERO, &BBox::ZERO), 0.0);
    }

    #[test]
    fn hull_examples() {
        let a = b(0.3, 0.1, 0.2, 0.5);
        assert_eq!(hull(&a, &a), a);
        let h = hull(&b(0.0, 0.0, 0.2, 0.2), &b(0.8, 0.8, 0.2, 0.2));
        assert!((h.x - 0.0).abs() < 1e-12 && (h.w - 1.0).abs() < 1e-12 && (h.h - 1.0).abs() < 1e-12);
        let h = hull(&b(0.1, 0.1, 0.2, 0.2), &BBox::ZERO);
        assert!((h.x).abs() < 1e-12 && (h.y).abs() < 1e-12);
        assert!((h.w - 0.3).abs() < 1e-12 && (h.h - 0.3).abs() < 1e-12);
    }

    #[test]
    fn giou_examples() {
        let a = b(0.2, 0.2, 0.3, 0.3);
        assert!((giou(&a, &a) - 1.0).abs() < 1e-12);
        assert_eq!(giou(&BBox::ZERO, &BBox::ZERO), 0.0);
        // hull is the full frame (area 1), union 0.5, iou 0
        let v = giou(&b(0.0, 0.0, 0.5, 0.5), &b(0.5, 0.5, 0.5, 0.5));
        assert!((v + 0.5).abs() < 1e-12);
    }

    #[test]
    fn paper_literal_differs_from_standard() {
        let p = b(0.0, 0.0, 0.5, 0.5);
        let g = b(0.25, 0.25, 0.5, 0.5);
        let c = hull(&p, &g).area();
        let inter = p.intersection_area(&g);
        let expected = iou(&p, &g) - (c - inter) / c;
        assert!((giou_paper_literal(&p, &g) - expected).abs() < 1e-12);
        assert!(giou_paper_literal(&p, &g) < giou(&p, &g));
    }

    #[test]
    fn rejects_out_of_frame() {
        assert!(BBox::new(0.6, 0.0, 0.5, 0.1).is_err());
        assert!(BBox::new(-0.1, 0.0, 0.5, 0.1).is_err());
        assert!(serde_json::from_str::<BBox>("[0.5, 0.5, 0.6, 0.1]").is_err());
        let ok: BBox = serde_json::from_str("[0.5, 0.5, 0.5, 0.1]").unwrap();
        assert_eq!(serde_json::to_string(&ok).unwrap(), "[0.5,0.5,0.5,0.1]");
    }

    fn arb_box() -> impl Strategy<Value = BBox> {
        prop_oneof![
            1 => Just(BBox::ZERO),
            8 => (0.0..1.0f64, 0.0..1.0f64, 0.0..1.0f64, 0.0..1.0f64)
                .prop_map(|(x, y, fw, fh)| BBox::clamped(x, y, fw * (1.0 - x), fh * (1.0 - y))),
        ]
    }

    proptest! {
        #[test]
        fn symmetric_and_bounded(a in arb_box(), c in arb_box()) {
            prop_assert!((iou(&a, &c) - iou(&c, &a)).abs() < 1e-12);
            prop_assert!((giou(&a, &c) - giou(&c, &a)).abs() < 1e-12);
            prop_assert_eq!(hull(&a, &c), hull(&c, &a));
            let i = iou(&a, &c);
            let g = giou(&a, &c);
            prop_assert!((0.0..=1.0 + 1e-12).contains(&i));
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&g));
            prop_assert!(g <= i + 1e-12);
        }

        #[test]
        fn hull_is_least_upper_bound(a in arb_box(), c in arb_box(), d in arb_box()) {
            let h = hull(&a, &c);
            prop_assert!(h.contains(&a) && h.contains(&c));
            let e = hull(&hull(&a, &c), &d);
            // any box containing both inputs contains their hull
            prop_assert!(e.contains(&h));
        }
    }
}
