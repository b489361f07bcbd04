//! Planar vectors, wrapped angles, poses and convex shapes.
//!
//! Everything here is a plain value type. Shapes are validated once at
//! construction so the queries never have to deal with degenerate input.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("polygon needs at least 3 vertices, got {0}")]
    TooFewVertices(usize),
    #[error("polygon vertices {0} and {1} coincide")]
    RepeatedVertex(usize, usize),
    #[error("polygon is not strictly convex and counter-clockwise at vertex {0}")]
    NotConvexCcw(usize),
    #[error("disk radius must be positive and finite, got {0}")]
    BadRadius(f64),
    #[error("non-finite coordinate in shape")]
    NonFinite,
    #[error("contact offset {alpha} is outside the allowed range (half perimeter {half_perimeter})")]
    OffsetOutOfRange { alpha: f64, half_perimeter: f64 },
    #[error("segment has zero length")]
    DegenerateSegment,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// Unit vector at `angle` radians from the x-axis.
    pub fn from_angle(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self { x: c, y: s }
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the 3D cross product.
    pub fn cross(self, other: Vec2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    /// Unit vector in the same direction, or `None` for the zero vector.
    pub fn try_normalize(self) -> Option<Vec2> {
        let n = self.norm();
        (n > 0.0 && n.is_finite()).then(|| self / n)
    }

    /// Rotated by +90 degrees.
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    pub fn rotate(self, angle: f64) -> Vec2 {
        let (s, c) = angle.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    /// Angle from the x-axis in (-pi, pi].
    pub fn angle(self) -> Angle {
        wrap_angle(self.y.atan2(self.x))
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance(self, other: Vec2) -> f64 {
        (self - other).norm()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, o: Vec2) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl SubAssign for Vec2 {
    fn sub_assign(&mut self, o: Vec2) {
        self.x -= o.x;
        self.y -= o.y;
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl Mul<Vec2> for f64 {
    type Output = Vec2;
    fn mul(self, v: Vec2) -> Vec2 {
        v * self
    }
}

impl Div<f64> for Vec2 {
    type Output = Vec2;
    fn div(self, s: f64) -> Vec2 {
        Vec2::new(self.x / s, self.y / s)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

impl fmt::Display for Vec2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// An angle in radians, always kept in (-pi, pi].
#[derive(Clone, Copy, Debug, Default, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Angle(f64);

impl Angle {
    pub fn new(raw: f64) -> Self {
        wrap_angle(raw)
    }

    pub fn radians(self) -> f64 {
        self.0
    }

    /// Unit vector pointing along this angle.
    pub fn unit(self) -> Vec2 {
        Vec2::from_angle(self.0)
    }

    /// Wrapped difference `self - other`.
    pub fn minus(self, other: Angle) -> Angle {
        wrap_angle(self.0 - other.0)
    }

    pub fn plus(self, delta: f64) -> Angle {
        wrap_angle(self.0 + delta)
    }
}

impl From<Angle> for f64 {
    fn from(a: Angle) -> f64 {
        a.0
    }
}

/// Wraps `raw` into (-pi, pi]; -pi maps to +pi.
///
/// Values already inside the interval are returned untouched, which makes the
/// function exactly idempotent.
pub fn wrap_angle(raw: f64) -> Angle {
    if raw > -PI && raw <= PI {
        return Angle(raw);
    }
    let r = raw.rem_euclid(TAU);
    let wrapped = if r > PI { r - TAU } else { r };
    // rem_euclid can round up to exactly TAU for tiny negative inputs.
    if wrapped <= -PI {
        Angle(wrapped + TAU)
    } else {
        Angle(wrapped)
    }
}

/// Planar rigid pose: position of the body origin and its orientation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Pose2 {
    pub position: Vec2,
    pub orientation: Angle,
}

impl Pose2 {
    pub fn new(position: Vec2, orientation: f64) -> Self {
        Self {
            position,
            orientation: wrap_angle(orientation),
        }
    }

    /// Body frame point to world frame.
    pub fn transform_point(&self, body: Vec2) -> Vec2 {
        self.position + body.rotate(self.orientation.radians())
    }

    pub fn transform_vector(&self, body: Vec2) -> Vec2 {
        body.rotate(self.orientation.radians())
    }

    pub fn inverse_transform_point(&self, world: Vec2) -> Vec2 {
        (world - self.position).rotate(-self.orientation.radians())
    }

    pub fn inverse_transform_vector(&self, world: Vec2) -> Vec2 {
        world.rotate(-self.orientation.radians())
    }

    pub fn is_finite(&self) -> bool {
        self.position.is_finite() && self.orientation.radians().is_finite()
    }
}

/// A straight segment, used for walls.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: Vec2,
    pub end: Vec2,
}

impl Segment {
    pub fn new(start: Vec2, end: Vec2) -> Result<Self, GeometryError> {
        if !start.is_finite() || !end.is_finite() {
            return Err(GeometryError::NonFinite);
        }
        if (end - start).norm() <= 0.0 {
            return Err(GeometryError::DegenerateSegment);
        }
        Ok(Self { start, end })
    }

    pub fn length(&self) -> f64 {
        (self.end - self.start).norm()
    }

    /// Closest point on the segment and its parameter in [0, 1].
    pub fn closest_point(&self, query: Vec2) -> (Vec2, f64) {
        let d = self.end - self.start;
        let t = ((query - self.start).dot(d) / d.norm_squared()).clamp(0.0, 1.0);
        (self.start + d * t, t)
    }

    pub fn distance_to(&self, query: Vec2) -> f64 {
        self.closest_point(query).0.distance(query)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ShapeRepr", into = "ShapeRepr")]
pub enum Shape {
    /// Convex polygon, vertices counter-clockwise in the body frame.
    Polygon(Vec<Vec2>),
    Disk(f64),
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum ShapeRepr {
    Polygon { vertices: Vec<[f64; 2]> },
    Disk { radius: f64 },
}

impl TryFrom<ShapeRepr> for Shape {
    type Error = GeometryError;
    fn try_from(r: ShapeRepr) -> Result<Self, Self::Error> {
        match r {
            ShapeRepr::Polygon { vertices } => {
                Shape::polygon(vertices.into_iter().map(|[x, y]| Vec2::new(x, y)).collect())
            }
            ShapeRepr::Disk { radius } => Shape::disk(radius),
        }
    }
}

impl From<Shape> for ShapeRepr {
    fn from(s: Shape) -> Self {
        match s {
            Shape::Polygon(v) => ShapeRepr::Polygon {
                vertices: v.into_iter().map(|p| [p.x, p.y]).collect(),
            },
            Shape::Disk(radius) => ShapeRepr::Disk { radius },
        }
    }
}

/// Result of a closest-point query against a shape boundary.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClosestPoint {
    pub point: Vec2,
    pub outward_normal: Vec2,
    /// Negative iff the query lies inside the shape.
    pub signed_distance: f64,
}

/// One contact between a shape and a wall segment.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WallContact {
    pub point: Vec2,
    /// Unit normal pointing from the wall toward the shape.
    pub normal: Vec2,
    pub penetration: f64,
}

impl Shape {
    pub fn polygon(vertices: Vec<Vec2>) -> Result<Self, GeometryError> {
        let n = vertices.len();
        if n < 3 {
            return Err(GeometryError::TooFewVertices(n));
        }
        if vertices.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        for i in 0..n {
            for j in i + 1..n {
                if vertices[i] == vertices[j] {
                    return Err(GeometryError::RepeatedVertex(i, j));
                }
            }
        }
        for i in 0..n {
            let a = vertices[i];
            let b = vertices[(i + 1) % n];
            let c = vertices[(i + 2) % n];
            if (b - a).cross(c - b) <= 0.0 {
                return Err(GeometryError::NotConvexCcw((i + 1) % n));
            }
        }
        Ok(Shape::Polygon(vertices))
    }

    pub fn disk(radius: f64) -> Result<Self, GeometryError> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(GeometryError::BadRadius(radius));
        }
        Ok(Shape::Disk(radius))
    }

    /// Axis-aligned square of side `side`, centered on the body origin.
    pub fn square(side: f64) -> Result<Self, GeometryError> {
        Self::rectangle(side, side)
    }

    pub fn rectangle(width: f64, height: f64) -> Result<Self, GeometryError> {
        let (hx, hy) = (0.5 * width, 0.5 * height);
        Shape::polygon(vec![
            Vec2::new(hx, -hy),
            Vec2::new(hx, hy),
            Vec2::new(-hx, hy),
            Vec2::new(-hx, -hy),
        ])
    }

    pub fn perimeter(&self) -> f64 {
        match self {
            Shape::Disk(r) => TAU * r,
            Shape::Polygon(v) => (0..v.len()).map(|i| (v[(i + 1) % v.len()] - v[i]).norm()).sum(),
        }
    }

    /// Whether a body-frame point lies inside or on the boundary.
    pub fn contains_body_point(&self, p: Vec2) -> bool {
        match self {
            Shape::Disk(r) => p.norm() <= *r,
            Shape::Polygon(v) => (0..v.len()).all(|i| {
                let a = v[i];
                let b = v[(i + 1) % v.len()];
                (b - a).cross(p - a) >= 0.0
            }),
        }
    }

    /// Closest boundary point to a body-frame query, in the body frame.
    pub fn closest_point_body(&self, q: Vec2) -> ClosestPoint {
        match self {
            Shape::Disk(r) => {
                let d = q.norm();
                let normal = if d > 0.0 { q / d } else { Vec2::new(1.0, 0.0) };
                ClosestPoint {
                    point: normal * *r,
                    outward_normal: normal,
                    signed_distance: d - r,
                }
            }
            Shape::Polygon(v) => closest_point_polygon(v, q),
        }
    }
}

fn closest_point_polygon(v: &[Vec2], q: Vec2) -> ClosestPoint {
    let n = v.len();
    // Largest edge half-plane distance: positive iff outside.
    let mut max_plane = f64::NEG_INFINITY;
    let mut max_edge = 0;
    for i in 0..n {
        let a = v[i];
        let b = v[(i + 1) % n];
        let normal = -(b - a).perp() / (b - a).norm();
        let d = normal.dot(q - a);
        if d > max_plane {
            max_plane = d;
            max_edge = i;
        }
    }
    if max_plane <= 0.0 {
        let a = v[max_edge];
        let b = v[(max_edge + 1) % n];
        let normal = -(b - a).perp() / (b - a).norm();
        return ClosestPoint {
            point: q - normal * max_plane,
            outward_normal: normal,
            signed_distance: max_plane,
        };
    }
    let mut best = ClosestPoint {
        point: v[0],
        outward_normal: Vec2::new(1.0, 0.0),
        signed_distance: f64::INFINITY,
    };
    for i in 0..n {
        let a = v[i];
        let b = v[(i + 1) % n];
        let d = b - a;
        let t = ((q - a).dot(d) / d.norm_squared()).clamp(0.0, 1.0);
        let p = a + d * t;
        let dist = (q - p).norm();
        if dist < best.signed_distance {
            let normal = if t > 0.0 && t < 1.0 {
                -d.perp() / d.norm()
            } else {
                (q - p) / dist
            };
            best = ClosestPoint {
                point: p,
                outward_normal: normal,
                signed_distance: dist,
            };
        }
    }
    best
}

/// Closest boundary point of a posed shape to a world-frame query.
///
/// At polygon vertices the normal is the query-to-vertex direction, so a
/// sphere rolling around a corner sees a continuously turning normal.
pub fn closest_point_on_shape(shape: &Shape, pose: &Pose2, query: Vec2) -> ClosestPoint {
    let body = shape.closest_point_body(pose.inverse_transform_point(query));
    ClosestPoint {
        point: pose.transform_point(body.point),
        outward_normal: pose.transform_vector(body.outward_normal),
        signed_distance: body.signed_distance,
    }
}

/// Contacts between a posed shape and a wall segment, appended to `out`.
///
/// Polygons report one contact per vertex lying on or behind the wall line
/// (within the wall's extent) plus any wall endpoint poking into the shape.
/// Disks report at most one contact.
pub fn segment_shape_contacts_into(shape: &Shape, pose: &Pose2, wall: &Segment, out: &mut Vec<WallContact>) {
    match shape {
        Shape::Disk(r) => {
            let (p, _) = wall.closest_point(pose.position);
            let offset = pose.position - p;
            let dist = offset.norm();
            if dist <= *r {
                let normal = offset
                    .try_normalize()
                    .unwrap_or_else(|| (wall.end - wall.start).perp() / wall.length());
                out.push(WallContact {
                    point: p,
                    normal,
                    penetration: r - dist,
                });
            }
        }
        Shape::Polygon(verts) => {
            let dir = (wall.end - wall.start) / wall.length();
            let mut normal = dir.perp();
            if normal.dot(pose.position - wall.start) < 0.0 {
                normal = -normal;
            }
            let len = wall.length();
            let center_depth = normal.dot(pose.position - wall.start);
            for &bv in verts.iter().filter(|_| center_depth > 0.0) {
                let w = pose.transform_point(bv);
                let depth = normal.dot(w - wall.start);
                let along = dir.dot(w - wall.start);
                if depth <= 0.0 && (0.0..=len).contains(&along) {
                    out.push(WallContact {
                        point: w,
                        normal,
                        penetration: -depth,
                    });
                }
            }
            for end in [wall.start, wall.end] {
                let cp = closest_point_on_shape(shape, pose, end);
                if cp.signed_distance < 0.0 {
                    // Endpoint inside: push the shape off along the nearest face.
                    out.push(WallContact {
                        point: end,
                        normal: -cp.outward_normal,
                        penetration: -cp.signed_distance,
                    });
                }
            }
        }
    }
}

pub fn segment_shape_contacts(shape: &Shape, pose: &Pose2, wall: &Segment) -> Vec<WallContact> {
    let mut out = Vec::new();
    segment_shape_contacts_into(shape, pose, wall, &mut out);
    out
}

/// Body-frame point and outward normal at arc length `alpha` from the
/// shape's reference point.
///
/// The reference point is the midpoint of the polygon edge facing -x (the
/// trailing edge), or the disk point at body angle pi. On polygons a
/// positive `alpha` walks toward +y from the reference point; on disks it
/// increases the polar angle.
pub fn contact_offset_to_point(shape: &Shape, alpha: f64) -> Result<(Vec2, Vec2), GeometryError> {
    let half_perimeter = 0.5 * shape.perimeter();
    if !alpha.is_finite() || alpha.abs() >= half_perimeter {
        return Err(GeometryError::OffsetOutOfRange { alpha, half_perimeter });
    }
    match shape {
        Shape::Disk(r) => {
            let theta = PI + alpha / r;
            let n = Vec2::from_angle(theta);
            Ok((n * *r, n))
        }
        Shape::Polygon(v) => {
            let n = v.len();
            let outward = |i: usize| {
                let d = v[(i + 1) % n] - v[i];
                -d.perp() / d.norm()
            };
            let trailing = (0..n)
                .min_by(|&a, &b| outward(a).x.total_cmp(&outward(b).x))
                .expect("polygon has edges");
            let mid = (v[trailing] + v[(trailing + 1) % n]) * 0.5;
            if alpha == 0.0 {
                return Ok((mid, outward(trailing)));
            }
            // Positive alpha walks against the vertex order (toward v[trailing]).
            let mut edge = trailing;
            let mut pos = mid;
            let mut remaining = alpha.abs();
            loop {
                let target = if alpha > 0.0 { v[edge] } else { v[(edge + 1) % n] };
                let step = (target - pos).norm();
                if remaining <= step {
                    let dir = (target - pos) / step;
                    return Ok((pos + dir * remaining, outward(edge)));
                }
                remaining -= step;
                pos = target;
                edge = if alpha > 0.0 {
                    (edge + n - 1) % n
                } else {
                    (edge + 1) % n
                };
            }
        }
    }
}
