//! Planar geometry primitives shared by the mesh generators and the cut-cell kernel.

use nalgebra::Vector2;

pub type Vec2 = Vector2<f64>;

#[inline]
pub fn vec2(x: f64, y: f64) -> Vec2 {
    Vec2::new(x, y)
}

/// z-component of the 2D cross product.
#[inline]
pub fn cross(a: &Vec2, b: &Vec2) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Orientation of `c` relative to the directed line `a -> b` (twice the signed triangle area).
#[inline]
pub fn orient(a: &Vec2, b: &Vec2, c: &Vec2) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

/// Shoelace signed area. The polygon is implicitly closed; a repeated closing
/// vertex is harmless.
pub fn signed_area(poly: &[Vec2]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    let mut s = 0.0;
    for i in 0..n {
        let a = &poly[i];
        let b = &poly[(i + 1) % n];
        s += a.x * b.y - b.x * a.y;
    }
    0.5 * s
}

pub fn perimeter(poly: &[Vec2]) -> f64 {
    let n = poly.len();
    (0..n).map(|i| (poly[(i + 1) % n] - poly[i]).norm()).sum()
}

/// Drops a trailing vertex equal to the first one.
pub fn open_polyline(poly: &[Vec2]) -> Vec<Vec2> {
    let mut v = poly.to_vec();
    if v.len() > 1 && v.first() == v.last() {
        v.pop();
    }
    v
}

/// Even-odd point-in-polygon test.
pub fn point_in_polygon(p: &Vec2, poly: &[Vec2]) -> bool {
    let n = poly.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (&poly[i], &poly[j]);
        if (a.y > p.y) != (b.y > p.y) {
            let x = (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x;
            if p.x < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// Distance from `p` to the segment `a`-`b`.
pub fn point_segment_distance(p: &Vec2, a: &Vec2, b: &Vec2) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

/// Proper (transversal) intersection of two segments. Returns the parameters
/// along each segment when both lie strictly inside (0, 1).
pub fn segment_crossing(p0: &Vec2, p1: &Vec2, q0: &Vec2, q1: &Vec2) -> Option<(f64, f64)> {
    let o1 = orient(p0, p1, q0);
    let o2 = orient(p0, p1, q1);
    if o1 * o2 >= 0.0 {
        return None;
    }
    let o3 = orient(q0, q1, p0);
    let o4 = orient(q0, q1, p1);
    if o3 * o4 >= 0.0 {
        return None;
    }
    let t = o3 / (o3 - o4);
    let u = o1 / (o1 - o2);
    Some((t, u))
}

/// True when any two non-adjacent edges of the closed polygon intersect.
pub fn polygon_self_intersects(poly: &[Vec2]) -> bool {
    let n = poly.len();
    for i in 0..n {
        let (a0, a1) = (&poly[i], &poly[(i + 1) % n]);
        for j in (i + 1)..n {
            if j == i || (j + 1) % n == i || (i + 1) % n == j {
                continue;
            }
            let (b0, b1) = (&poly[j], &poly[(j + 1) % n]);
            if segment_crossing(a0, a1, b0, b1).is_some() {
                return true;
            }
        }
    }
    false
}

/// Clips a polygon against the half-plane to the left of the directed line `a -> b`.
pub fn clip_half_plane(poly: &[Vec2], a: &Vec2, b: &Vec2) -> Vec<Vec2> {
    let n = poly.len();
    let mut out = Vec::with_capacity(n + 2);
    for i in 0..n {
        let p = &poly[i];
        let q = &poly[(i + 1) % n];
        let dp = orient(a, b, p);
        let dq = orient(a, b, q);
        if dp >= 0.0 {
            out.push(*p);
        }
        if (dp >= 0.0) != (dq >= 0.0) {
            let t = dp / (dp - dq);
            out.push(p + (q - p) * t);
        }
    }
    out
}

/// Sutherland-Hodgman clip of an arbitrary polygon by a convex CCW polygon.
/// The area of the result equals the area of the intersection even when the
/// intersection has several components.
pub fn clip_by_convex(subject: &[Vec2], convex: &[Vec2]) -> Vec<Vec2> {
    let mut out = subject.to_vec();
    let m = convex.len();
    for i in 0..m {
        if out.is_empty() {
            break;
        }
        out = clip_half_plane(&out, &convex[i], &convex[(i + 1) % m]);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub min: Vec2,
    pub max: Vec2,
}

impl BoundingBox {
    pub fn of(points: &[Vec2]) -> Self {
        let mut min = vec2(f64::INFINITY, f64::INFINITY);
        let mut max = vec2(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in points {
            min.x = min.x.min(p.x);
            min.y = min.y.min(p.y);
            max.x = max.x.max(p.x);
            max.y = max.y.max(p.y);
        }
        BoundingBox { min, max }
    }

    pub fn inflate(mut self, d: f64) -> Self {
        self.min -= vec2(d, d);
        self.max += vec2(d, d);
        self
    }

    pub fn overlaps(&self, other: &BoundingBox) -> bool {
        self.min.x <= other.max.x
            && other.min.x <= self.max.x
            && self.min.y <= other.max.y
            && other.min.y <= self.max.y
    }

    pub fn contains(&self, p: &Vec2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }
}
