//! Oriented rectangles: overlap by separating axes and Euclidean distance.

use crate::path::{ConflictZone, Vec2};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub center: Vec2,
    pub heading: f64,
    pub half_length: f64,
    pub half_width: f64,
}

impl Rect {
    pub fn new(center: Vec2, heading: f64, length: f64, width: f64) -> Self {
        Rect { center, heading, half_length: 0.5 * length, half_width: 0.5 * width }
    }

    pub fn from_zone(zone: &ConflictZone) -> Self {
        Rect::new(
            Vec2::new(0.5 * (zone.x_min + zone.x_max), 0.5 * (zone.y_min + zone.y_max)),
            0.0,
            zone.x_max - zone.x_min,
            zone.y_max - zone.y_min,
        )
    }

    fn axes(&self) -> (Vec2, Vec2) {
        let (s, c) = self.heading.sin_cos();
        (Vec2::new(c, s), Vec2::new(-s, c))
    }

    /// Corners in counter-clockwise order.
    pub fn corners(&self) -> [Vec2; 4] {
        let (t, n) = self.axes();
        let a = t * self.half_length;
        let b = n * self.half_width;
        let c = self.center;
        [c + a + b, c - a + b, c - a - b, c + a - b]
    }

    /// Lengthened by `margin` at both ends along its heading.
    pub fn lengthened(&self, margin: f64) -> Self {
        Rect { half_length: self.half_length + margin, ..*self }
    }

    /// Closed-set overlap; touching rectangles overlap.
    pub fn overlaps(&self, other: &Rect) -> bool {
        let (t1, n1) = self.axes();
        let (t2, n2) = other.axes();
        let d = other.center - self.center;
        for axis in [t1, n1, t2, n2] {
            let r1 = self.half_length * t1.dot(&axis).abs() + self.half_width * n1.dot(&axis).abs();
            let r2 = other.half_length * t2.dot(&axis).abs() + other.half_width * n2.dot(&axis).abs();
            if d.dot(&axis).abs() > r1 + r2 {
                return false;
            }
        }
        true
    }

    /// Distance between the two sets; zero when they overlap.
    pub fn distance(&self, other: &Rect) -> f64 {
        if self.overlaps(other) {
            return 0.0;
        }
        let (a, b) = (self.corners(), other.corners());
        let mut best = f64::INFINITY;
        for i in 0..4 {
            let (p, q) = (a[i], a[(i + 1) % 4]);
            let (r, s) = (b[i], b[(i + 1) % 4]);
            for v in &b {
                best = best.min(point_segment_distance(v, &p, &q));
            }
            for v in &a {
                best = best.min(point_segment_distance(v, &r, &s));
            }
        }
        best
    }
}

fn point_segment_distance(p: &Vec2, a: &Vec2, b: &Vec2) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let t = if len2 > 0.0 { ((p - a).dot(&ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
    (p - (a + ab * t)).norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_4;

    #[test]
    fn axis_aligned_cases() {
        let a = Rect::new(Vec2::new(0.0, 0.0), 0.0, 4.0, 2.0);
        let b = Rect::new(Vec2::new(5.0, 0.0), 0.0, 4.0, 2.0);
        assert!(!a.overlaps(&b));
        assert!((a.distance(&b) - 1.0).abs() < 1e-12);
        let c = Rect::new(Vec2::new(4.0, 0.0), 0.0, 4.0, 2.0);
        assert!(a.overlaps(&c));
        assert_eq!(a.distance(&c), 0.0);
    }

    #[test]
    fn rotated_corner_gap() {
        // diamond whose left corner sits sqrt(2) to the right of the square
        let a = Rect::new(Vec2::new(0.0, 0.0), 0.0, 2.0, 2.0);
        let b = Rect::new(Vec2::new(1.0 + 2.0 * 2f64.sqrt(), 0.0), FRAC_PI_4, 2.0, 2.0);
        assert!(!a.overlaps(&b));
        assert!((a.distance(&b) - 2f64.sqrt()).abs() < 1e-12);
    }

    fn sampled_distance(a: &Rect, b: &Rect) -> f64 {
        // dense boundary sampling oracle
        let pts = |r: &Rect| {
            let c = r.corners();
            let mut v = Vec::new();
            for i in 0..4 {
                for j in 0..400 {
                    let t = j as f64 / 400.0;
                    v.push(c[i] + (c[(i + 1) % 4] - c[i]) * t);
                }
            }
            v
        };
        let (pa, pb) = (pts(a), pts(b));
        let mut best = f64::INFINITY;
        for p in &pa {
            for q in &pb {
                best = best.min((p - q).norm());
            }
        }
        best
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]
        #[test]
        fn distance_matches_sampling(x in -8.0..8.0f64, y in -8.0..8.0f64, h in -3.2..3.2f64) {
            let a = Rect::new(Vec2::new(0.0, 0.0), 0.3, 5.0, 2.0);
            let b = Rect::new(Vec2::new(x, y), h, 1.0, 1.0);
            let d = a.distance(&b);
            let oracle = sampled_distance(&a, &b);
            if a.overlaps(&b) {
                prop_assert_eq!(d, 0.0);
            } else {
                prop_assert!(d > 0.0);
                prop_assert!((d - oracle).abs() < 0.02);
            }
        }
    }
}
