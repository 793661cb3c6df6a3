//! Spatial primitives: points, straight flight segments and the spherical
//! crown that bounds where a task can be sensed from.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used when checking that a position lies on a segment.
pub const ON_SEGMENT_TOL: f64 = 1e-6;

/// A point in the flat-earth cell frame, in meters. `z` is the altitude.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl From<[f64; 3]> for Point3 {
    fn from(v: [f64; 3]) -> Self {
        Point3::new(v[0], v[1], v[2])
    }
}

impl From<Point3> for [f64; 3] {
    fn from(p: Point3) -> Self {
        [p.x, p.y, p.z]
    }
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Point3 { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn add(self, o: Point3) -> Point3 {
        Point3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }

    pub fn sub(self, o: Point3) -> Point3 {
        Point3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }

    pub fn scale(self, s: f64) -> Point3 {
        Point3::new(self.x * s, self.y * s, self.z * s)
    }

    pub fn dot(self, o: Point3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Horizontal (ground-plane) distance to `o`.
    pub fn horizontal_distance(self, o: Point3) -> f64 {
        (self.x - o.x).hypot(self.y - o.y)
    }
}

/// Euclidean distance between two points.
pub fn distance(a: Point3, b: Point3) -> f64 {
    a.sub(b).norm()
}

/// Elevation angle in degrees of `air` as seen from `ground`.
///
/// Returns a value in (0, 90]; 90 when the two points are horizontally
/// coincident.
pub fn elevation_angle(ground: Point3, air: Point3) -> Result<f64> {
    let dz = air.z - ground.z;
    let h = ground.horizontal_distance(air);
    if dz <= 0.0 {
        return Err(Error::UndefinedAngle { dz, horizontal: h });
    }
    if h == 0.0 {
        return Ok(90.0);
    }
    Ok(dz.atan2(h).to_degrees())
}

/// Straight flight leg. A zero-length segment is a hover.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: Point3,
    pub end: Point3,
}

impl Segment {
    pub fn new(start: Point3, end: Point3) -> Self {
        Segment { start, end }
    }

    pub fn hover(at: Point3) -> Self {
        Segment { start: at, end: at }
    }

    pub fn length(&self) -> f64 {
        distance(self.start, self.end)
    }

    pub fn is_hover(&self) -> bool {
        self.length() == 0.0
    }

    /// Unit direction from start to end, `None` for a hover.
    pub fn direction(&self) -> Option<Point3> {
        let len = self.length();
        (len > 0.0).then(|| self.end.sub(self.start).scale(1.0 / len))
    }

    /// Arc-length parameter of the orthogonal projection of `p`, clamped to
    /// `[0, length]`.
    pub fn project_param(&self, p: Point3) -> f64 {
        match self.direction() {
            Some(d) => p.sub(self.start).dot(d).clamp(0.0, self.length()),
            None => 0.0,
        }
    }

    pub fn point_at(&self, s: f64) -> Point3 {
        match self.direction() {
            Some(d) => {
                if s >= self.length() {
                    self.end
                } else {
                    self.start.add(d.scale(s.max(0.0)))
                }
            }
            None => self.start,
        }
    }

    /// Nearest point of the segment to `p`.
    pub fn project(&self, p: Point3) -> Point3 {
        self.point_at(self.project_param(p))
    }

    pub fn distance_to(&self, p: Point3) -> f64 {
        distance(self.project(p), p)
    }
}

/// Move `position` along `segment` toward its end by `speed * dt`, clamped so
/// that the end is never overshot. The input position is re-projected onto the
/// segment first, which keeps accumulated floating-point drift bounded.
pub fn advance(position: Point3, segment: &Segment, speed: f64, dt: f64) -> Result<Point3> {
    let off = segment.distance_to(position);
    if off > ON_SEGMENT_TOL {
        return Err(Error::OffSegment { offset: off });
    }
    if speed <= 0.0 || dt <= 0.0 {
        return Ok(segment.project(position));
    }
    let s = segment.project_param(position) + speed * dt;
    Ok(segment.point_at(s))
}

/// Ball around a task center cut by the minimum-altitude plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphericalCrown {
    pub center: Point3,
    pub radius: f64,
    pub min_altitude: f64,
}

impl SphericalCrown {
    pub fn new(center: Point3, radius: f64, min_altitude: f64) -> Self {
        SphericalCrown {
            center,
            radius,
            min_altitude,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.center.z + self.radius < self.min_altitude
    }

    pub fn contains(&self, p: Point3) -> bool {
        crown_contains(self, p)
    }

    /// Highest member, on the vertical axis through the center.
    pub fn apex(&self) -> Point3 {
        Point3::new(self.center.x, self.center.y, self.center.z + self.radius)
    }

    /// Radius of the circle where the sphere meets the altitude floor, `None`
    /// when the floor does not cut the sphere.
    fn floor_circle_radius(&self) -> Option<f64> {
        let dz = self.min_altitude - self.center.z;
        (dz.abs() <= self.radius).then(|| (self.radius * self.radius - dz * dz).max(0.0).sqrt())
    }

    /// Euclidean projection onto the crown. The crown must be non-empty.
    pub fn project(&self, p: Point3) -> Point3 {
        if self.contains(p) {
            return p;
        }
        let rel = p.sub(self.center);
        let n = rel.norm();
        // Projection onto the ball alone.
        let on_ball = if n > self.radius {
            self.shrink_into_ball(|f| self.center.add(rel.scale(f * self.radius / n)))
        } else {
            p
        };
        if on_ball.z >= self.min_altitude {
            return on_ball;
        }
        // Projection onto the half-space alone.
        let on_floor = Point3::new(p.x, p.y, self.min_altitude);
        if distance(on_floor, self.center) <= self.radius {
            return on_floor;
        }
        // Both constraints active: nearest point of the intersection circle.
        let rho = self.floor_circle_radius().unwrap_or(0.0);
        let h = (p.x - self.center.x).hypot(p.y - self.center.y);
        let (ux, uy) = if h > 0.0 {
            ((p.x - self.center.x) / h, (p.y - self.center.y) / h)
        } else {
            (1.0, 0.0)
        };
        self.shrink_into_ball(|f| {
            Point3::new(
                self.center.x + f * rho * ux,
                self.center.y + f * rho * uy,
                self.min_altitude,
            )
        })
    }

    /// `at(1.0)`, pulled inward by a few ulps if rounding left it outside
    /// the ball.
    fn shrink_into_ball(&self, at: impl Fn(f64) -> Point3) -> Point3 {
        let mut f = 1.0;
        let mut q = at(f);
        for _ in 0..16 {
            if distance(q, self.center) <= self.radius {
                break;
            }
            f -= 4.0 * f64::EPSILON;
            q = at(f);
        }
        q
    }

    /// Member closest to the task center.
    pub fn closest_to_center(&self) -> Point3 {
        self.project(self.center)
    }

    /// Axis-aligned bounding box of the crown as (min, max) corners.
    pub fn bounding_box(&self) -> (Point3, Point3) {
        let r = self.radius;
        let lo_z = self.min_altitude.max(self.center.z - r);
        let horiz = if self.min_altitude > self.center.z {
            self.floor_circle_radius().unwrap_or(0.0)
        } else {
            r
        };
        (
            Point3::new(self.center.x - horiz, self.center.y - horiz, lo_z),
            Point3::new(self.center.x + horiz, self.center.y + horiz, self.center.z + r),
        )
    }
}

/// Closed membership test: inside the ball and at or above the floor.
pub fn crown_contains(c: &SphericalCrown, p: Point3) -> bool {
    distance(p, c.center) <= c.radius && p.z >= c.min_altitude
}
