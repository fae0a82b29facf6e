//! Planar primitives: vectors, oriented body rectangles, axis-aligned
//! zones and wall segments.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn normalized(self) -> Option<Vec2> {
        let n = self.norm();
        (n > 1e-12).then(|| Vec2::new(self.x / n, self.y / n))
    }

    /// Counter-clockwise perpendicular.
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let r = a.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

/// A rectangle centred at `center`, long axis along `heading`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientedRect {
    pub center: Vec2,
    pub heading: f64,
    pub half_length: f64,
    pub half_width: f64,
}

impl OrientedRect {
    pub fn new(center: Vec2, heading: f64, length: f64, width: f64) -> Self {
        Self {
            center,
            heading,
            half_length: 0.5 * length,
            half_width: 0.5 * width,
        }
    }

    /// Grows the rectangle by `margin` on every side.
    pub fn inflated(self, margin: f64) -> Self {
        Self {
            half_length: self.half_length + margin,
            half_width: self.half_width + margin,
            ..self
        }
    }

    fn axes(&self) -> [Vec2; 2] {
        let u = Vec2::new(self.heading.cos(), self.heading.sin());
        [u, u.perp()]
    }

    pub fn corners(&self) -> [Vec2; 4] {
        let [u, w] = self.axes();
        let (l, h) = (u * self.half_length, w * self.half_width);
        let c = self.center;
        [c + l + h, c - l + h, c - l - h, c + l - h]
    }

    fn circumradius(&self) -> f64 {
        self.half_length.hypot(self.half_width)
    }

    /// Half-extent of the projection onto a unit axis.
    fn projected_radius(&self, axis: Vec2) -> f64 {
        let [u, w] = self.axes();
        self.half_length * u.dot(axis).abs() + self.half_width * w.dot(axis).abs()
    }

    /// Separating-axis test. Touching boundaries do not count as intersecting.
    pub fn intersects(&self, other: &OrientedRect) -> bool {
        let d = other.center - self.center;
        if d.norm() >= self.circumradius() + other.circumradius() {
            return false;
        }
        let [a0, a1] = self.axes();
        let [b0, b1] = other.axes();
        [a0, a1, b0, b1].into_iter().all(|axis| {
            d.dot(axis).abs() < self.projected_radius(axis) + other.projected_radius(axis)
        })
    }

    pub fn intersects_aabb(&self, r: &Aabb) -> bool {
        let as_rect = OrientedRect {
            center: r.center(),
            heading: 0.0,
            half_length: 0.5 * (r.x_max - r.x_min),
            half_width: 0.5 * (r.y_max - r.y_min),
        };
        self.intersects(&as_rect)
    }
}

/// Axis-aligned rectangle, used for no-stop zones.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl Aabb {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Self {
        Self {
            x_min,
            y_min,
            x_max,
            y_max,
        }
    }

    pub fn center(&self) -> Vec2 {
        Vec2::new(0.5 * (self.x_min + self.x_max), 0.5 * (self.y_min + self.y_max))
    }

    pub fn contains(&self, p: Vec2) -> bool {
        (self.x_min..=self.x_max).contains(&p.x) && (self.y_min..=self.y_max).contains(&p.y)
    }
}

/// Closest point to `p` on the segment `a`-`b`.
pub fn closest_on_segment(p: Vec2, a: Vec2, b: Vec2) -> Vec2 {
    let ab = b - a;
    let len2 = ab.dot(ab);
    if len2 <= 0.0 {
        return a;
    }
    let t = ((p - a).dot(ab) / len2).clamp(0.0, 1.0);
    a + ab * t
}
