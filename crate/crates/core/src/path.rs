//! Desired paths built from lines and circular arcs, and the Frenet-frame
//! projection the control laws are written in.

use std::f64::consts::{FRAC_PI_2, TAU};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{wrap_angle, Angle, Vec2};

const CONTINUITY_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PathError {
    #[error("path has no segments")]
    Empty,
    #[error("segment {0} has non-positive or non-finite length")]
    DegenerateSegment(usize),
    #[error("segment {index} starts {gap} m away from the end of the previous one")]
    Discontinuous { index: usize, gap: f64 },
    #[error("non-finite value in segment {0}")]
    NonFinite(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PathSegment {
    Line {
        start: Vec2,
        end: Vec2,
    },
    /// Circular arc; positive `sweep` turns counter-clockwise.
    Arc {
        center: Vec2,
        radius: f64,
        start_angle: f64,
        sweep: f64,
    },
}

impl PathSegment {
    pub fn length(&self) -> f64 {
        match *self {
            PathSegment::Line { start, end } => (end - start).norm(),
            PathSegment::Arc { radius, sweep, .. } => radius * sweep.abs(),
        }
    }

    pub fn start_point(&self) -> Vec2 {
        self.point_at(0.0)
    }

    pub fn end_point(&self) -> Vec2 {
        self.point_at(self.length())
    }

    /// Point at arc length `u` from the segment start, `u` in [0, length].
    fn point_at(&self, u: f64) -> Vec2 {
        match *self {
            PathSegment::Line { start, end } => {
                let len = (end - start).norm();
                start + (end - start) * (u / len)
            }
            PathSegment::Arc {
                center,
                radius,
                start_angle,
                sweep,
            } => center + Vec2::from_angle(start_angle + sweep.signum() * u / radius) * radius,
        }
    }

    fn tangent_at(&self, u: f64) -> Vec2 {
        match *self {
            PathSegment::Line { start, end } => (end - start) / (end - start).norm(),
            PathSegment::Arc {
                radius,
                start_angle,
                sweep,
                ..
            } => Vec2::from_angle(start_angle + sweep.signum() * u / radius).perp() * sweep.signum(),
        }
    }

    /// Closest point as (arc length along the segment, point, distance).
    fn closest(&self, q: Vec2) -> (f64, Vec2, f64) {
        match *self {
            PathSegment::Line { start, end } => {
                let d = end - start;
                let len = d.norm();
                let u = ((q - start).dot(d) / len).clamp(0.0, len);
                let p = start + d * (u / len);
                (u, p, (q - p).norm())
            }
            PathSegment::Arc {
                center,
                radius,
                start_angle,
                sweep,
            } => {
                let rel = q - center;
                let len = self.length();
                let end_candidate = || {
                    let ps = self.point_at(0.0);
                    let pe = self.point_at(len);
                    let (ds, de) = ((q - ps).norm(), (q - pe).norm());
                    if de < ds {
                        (len, pe, de)
                    } else {
                        (0.0, ps, ds)
                    }
                };
                if rel.norm() == 0.0 {
                    // Every arc point is equidistant; prefer the start.
                    return (0.0, self.point_at(0.0), radius);
                }
                let angle = rel.y.atan2(rel.x);
                let along = ((angle - start_angle) * sweep.signum()).rem_euclid(TAU);
                if along <= sweep.abs() {
                    let u = along * radius;
                    let p = self.point_at(u);
                    let cand = (u, p, (q - p).norm());
                    let ends = end_candidate();
                    if ends.2 < cand.2 {
                        ends
                    } else {
                        cand
                    }
                } else {
                    end_candidate()
                }
            }
        }
    }

    fn is_finite(&self) -> bool {
        match *self {
            PathSegment::Line { start, end } => start.is_finite() && end.is_finite(),
            PathSegment::Arc {
                center,
                radius,
                start_angle,
                sweep,
            } => center.is_finite() && radius.is_finite() && start_angle.is_finite() && sweep.is_finite(),
        }
    }
}

/// Closest-point frame on the path.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrenetProjection {
    pub closest_point: Vec2,
    pub arc_length: f64,
    pub heading: Angle,
    /// Signed offset along the path normal (tangent rotated +90 degrees).
    pub lateral_offset: f64,
}

impl FrenetProjection {
    pub fn tangent(&self) -> Vec2 {
        self.heading.unit()
    }

    pub fn normal(&self) -> Vec2 {
        self.heading.unit().perp()
    }
}

/// An ordered, position-continuous chain of lines and arcs.
///
/// Outside `[0, length]` the path continues along its first and last tangent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<PathSegment>", into = "Vec<PathSegment>")]
pub struct PathSpec {
    segments: Vec<PathSegment>,
    /// Arc length at the start of each segment, plus the total at the end.
    cumulative: Vec<f64>,
}

impl TryFrom<Vec<PathSegment>> for PathSpec {
    type Error = PathError;
    fn try_from(segments: Vec<PathSegment>) -> Result<Self, PathError> {
        PathSpec::new(segments)
    }
}

impl From<PathSpec> for Vec<PathSegment> {
    fn from(p: PathSpec) -> Self {
        p.segments
    }
}

impl PathSpec {
    pub fn new(segments: Vec<PathSegment>) -> Result<Self, PathError> {
        if segments.is_empty() {
            return Err(PathError::Empty);
        }
        let mut cumulative = Vec::with_capacity(segments.len() + 1);
        let mut total = 0.0;
        for (i, seg) in segments.iter().enumerate() {
            if !seg.is_finite() {
                return Err(PathError::NonFinite(i));
            }
            let len = seg.length();
            if !(len > 0.0 && len.is_finite()) {
                return Err(PathError::DegenerateSegment(i));
            }
            if i > 0 {
                let gap = (seg.start_point() - segments[i - 1].end_point()).norm();
                if gap > CONTINUITY_TOL {
                    return Err(PathError::Discontinuous { index: i, gap });
                }
            }
            cumulative.push(total);
            total += len;
        }
        cumulative.push(total);
        Ok(Self { segments, cumulative })
    }

    /// Straight line from the origin along +x.
    pub fn straight(length: f64) -> Result<Self, PathError> {
        Self::new(vec![PathSegment::Line {
            start: Vec2::ZERO,
            end: Vec2::new(length, 0.0),
        }])
    }

    /// Lead-in along +x, a quarter turn of `radius` (left for `left`), then an
    /// exit straight.
    pub fn corner(lead_in: f64, radius: f64, exit: f64, left: bool) -> Result<Self, PathError> {
        let side = if left { 1.0 } else { -1.0 };
        let turn_start = Vec2::new(lead_in, 0.0);
        let center = turn_start + Vec2::new(0.0, side * radius);
        let arc = PathSegment::Arc {
            center,
            radius,
            start_angle: -side * FRAC_PI_2,
            sweep: side * FRAC_PI_2,
        };
        let arc_end = arc.end_point();
        Self::new(vec![
            PathSegment::Line {
                start: Vec2::ZERO,
                end: turn_start,
            },
            arc,
            PathSegment::Line {
                start: arc_end,
                end: arc_end + Vec2::new(0.0, side * exit),
            },
        ])
    }

    pub fn segments(&self) -> &[PathSegment] {
        &self.segments
    }

    pub fn length(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    /// Arc length at which segment `index` starts.
    pub fn segment_start(&self, index: usize) -> f64 {
        self.cumulative[index]
    }

    fn locate(&self, s: f64) -> (usize, f64) {
        let idx = match self.cumulative[..self.segments.len()].binary_search_by(|c| c.total_cmp(&s)) {
            Ok(i) => i,
            Err(0) => 0,
            Err(i) => i - 1,
        };
        let idx = idx.min(self.segments.len() - 1);
        (idx, s - self.cumulative[idx])
    }

    /// Point at arc length `s`, extrapolated past either end.
    pub fn point_at(&self, s: f64) -> Vec2 {
        let total = self.length();
        if s < 0.0 {
            let first = &self.segments[0];
            return first.start_point() + first.tangent_at(0.0) * s;
        }
        if s > total {
            let last = self.segments.last().unwrap();
            return last.end_point() + last.tangent_at(last.length()) * (s - total);
        }
        let (i, u) = self.locate(s);
        self.segments[i].point_at(u.min(self.segments[i].length()))
    }

    pub fn tangent_at(&self, s: f64) -> Vec2 {
        if s <= 0.0 {
            return self.segments[0].tangent_at(0.0);
        }
        if s >= self.length() {
            let last = self.segments.last().unwrap();
            return last.tangent_at(last.length());
        }
        let (i, u) = self.locate(s);
        self.segments[i].tangent_at(u.min(self.segments[i].length()))
    }

    /// Point `lookahead` metres further along the path from arc length `s`.
    pub fn point_ahead(&self, s: f64, lookahead: f64) -> Vec2 {
        self.point_at(s + lookahead.max(0.0))
    }

    /// Closest point on the (extrapolated) path and its Frenet frame.
    ///
    /// Equidistant candidates resolve to the smallest arc length.
    pub fn project(&self, query: Vec2) -> FrenetProjection {
        let first = &self.segments[0];
        let last = self.segments.last().unwrap();
        let start = first.start_point();
        let t0 = first.tangent_at(0.0);
        let end = last.end_point();
        let t1 = last.tangent_at(last.length());
        let total = self.length();

        // (arc length, point, distance, tangent)
        let mut best: Option<(f64, Vec2, f64, Vec2)> = None;
        let mut consider = |cand: (f64, Vec2, f64, Vec2)| match best {
            Some(b) if cand.2 >= b.2 => {}
            _ => best = Some(cand),
        };

        let before = (query - start).dot(t0);
        if before < 0.0 {
            let p = start + t0 * before;
            consider((before, p, (query - p).norm(), t0));
        }
        for (i, seg) in self.segments.iter().enumerate() {
            let (u, p, d) = seg.closest(query);
            consider((self.cumulative[i] + u, p, d, seg.tangent_at(u)));
        }
        let beyond = (query - end).dot(t1);
        if beyond > 0.0 {
            let p = end + t1 * beyond;
            consider((total + beyond, p, (query - p).norm(), t1));
        }

        let (s, p, _, t) = best.expect("path has at least one segment");
        FrenetProjection {
            closest_point: p,
            arc_length: s,
            heading: t.angle(),
            lateral_offset: t.perp().dot(query - p),
        }
    }

    /// Index of the segment containing arc length `s` (clamped to the ends).
    pub fn segment_index_at(&self, s: f64) -> usize {
        if s <= 0.0 {
            return 0;
        }
        self.locate(s.min(self.length())).0
    }
}

/// Heading of a tangent vector, wrapped.
pub fn heading_of(t: Vec2) -> Angle {
    wrap_angle(t.y.atan2(t.x))
}
