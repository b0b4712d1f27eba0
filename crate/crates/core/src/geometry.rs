//! Planar primitives in centimetres: points, segments, axis-aligned
//! rectangles, and the ray/segment queries the world and map rely on.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn offset(self, dx: f64, dy: f64) -> Self {
        Self::new(self.x + dx, self.y + dy)
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

impl From<[f64; 2]> for Point {
    fn from([x, y]: [f64; 2]) -> Self {
        Self { x, y }
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub from: Point,
    pub to: Point,
}

impl Segment {
    pub const fn new(from: Point, to: Point) -> Self {
        Self { from, to }
    }

    pub fn translated(self, dx: f64, dy: f64) -> Self {
        Self::new(self.from.offset(dx, dy), self.to.offset(dx, dy))
    }

    pub fn length(&self) -> f64 {
        self.from.distance(self.to)
    }

    /// Distance along the unit ray `dir` from `origin` to this segment, if hit.
    pub fn ray_hit(&self, origin: Point, dir: (f64, f64)) -> Option<f64> {
        let (dx, dy) = dir;
        let ex = self.to.x - self.from.x;
        let ey = self.to.y - self.from.y;
        let denom = dx * ey - dy * ex;
        if denom.abs() < 1e-12 {
            return None;
        }
        let wx = self.from.x - origin.x;
        let wy = self.from.y - origin.y;
        let t = (wx * ey - wy * ex) / denom;
        let u = (wx * dy - wy * dx) / denom;
        const EPS: f64 = 1e-9;
        if t >= -EPS && (-EPS..=1.0 + EPS).contains(&u) {
            Some(t.max(0.0))
        } else {
            None
        }
    }

    pub fn distance_to(&self, p: Point) -> f64 {
        let ex = self.to.x - self.from.x;
        let ey = self.to.y - self.from.y;
        let len2 = ex * ex + ey * ey;
        if len2 == 0.0 {
            return p.distance(self.from);
        }
        let s = (((p.x - self.from.x) * ex + (p.y - self.from.y) * ey) / len2).clamp(0.0, 1.0);
        p.distance(Point::new(self.from.x + s * ex, self.from.y + s * ey))
    }

    /// Whether the step `a -> b` crosses this segment. A step ending on the
    /// line counts; one starting on it does not, so each pass counts once.
    pub fn crossed_by(&self, a: Point, b: Point) -> bool {
        fn orient(p: Point, q: Point, r: Point) -> f64 {
            (q.x - p.x) * (r.y - p.y) - (q.y - p.y) * (r.x - p.x)
        }
        let d1 = orient(self.from, self.to, a);
        let d2 = orient(self.from, self.to, b);
        let d3 = orient(a, b, self.from);
        let d4 = orient(a, b, self.to);
        // half-open: landing on the line counts, leaving it does not
        d1 != 0.0 && d1 * d2 <= 0.0 && d3 * d4 <= 0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rect {
    pub min: Point,
    pub max: Point,
}

impl Rect {
    pub const fn new(min: Point, max: Point) -> Self {
        Self { min, max }
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn edges(&self) -> [Segment; 4] {
        let (a, b) = (self.min, self.max);
        let c = Point::new(b.x, a.y);
        let d = Point::new(a.x, b.y);
        [
            Segment::new(a, c),
            Segment::new(c, b),
            Segment::new(b, d),
            Segment::new(d, a),
        ]
    }

    pub fn translated(self, dx: f64, dy: f64) -> Self {
        Self::new(self.min.offset(dx, dy), self.max.offset(dx, dy))
    }

    pub fn union(&self, other: &Rect) -> Rect {
        Rect::new(
            Point::new(self.min.x.min(other.min.x), self.min.y.min(other.min.y)),
            Point::new(self.max.x.max(other.max.x), self.max.y.max(other.max.y)),
        )
    }

    pub fn is_valid(&self) -> bool {
        self.min.x.is_finite()
            && self.min.y.is_finite()
            && self.max.x.is_finite()
            && self.max.y.is_finite()
            && self.min.x < self.max.x
            && self.min.y < self.max.y
    }
}

/// Heading wrapped into `[0, 2π)`.
pub fn normalize_heading(h: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    let r = h.rem_euclid(tau);
    if r >= tau {
        0.0
    } else {
        r
    }
}

/// Unit direction for a heading, snapped so axis-aligned headings are exact.
pub fn heading_dir(h: f64) -> (f64, f64) {
    let (s, c) = h.sin_cos();
    let snap = |v: f64| if v.abs() < 1e-12 { 0.0 } else { v };
    (snap(c), snap(s))
}
