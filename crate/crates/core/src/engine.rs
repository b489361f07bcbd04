//! Quasistatic slider simulation under a kinematic spherical pusher and
//! static walls.
//!
//! Contacts are penalty springs with damping and regularized Coulomb
//! friction. Support friction follows an ellipsoidal limit surface: the
//! slider stays at rest while the net contact wrench lies inside it, and
//! otherwise moves along the surface normal at that wrench. Each step solves
//! for the twist implicitly, with contact forces evaluated at the end of the
//! step, so the stiff friction regularization stays stable at millisecond
//! steps.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;
use thiserror::Error;

use crate::geometry::{closest_point_on_shape, segment_shape_contacts_into, Pose2, Segment, Shape, Vec2, WallContact};

pub const GRAVITY: f64 = 9.81;
/// Radius of the spherical pusher tip.
pub const PUSHER_RADIUS: f64 = 0.05;

const NEWTON_MAX_ITERS: usize = 50;
const NEWTON_TOL: f64 = 1e-13;
const OUTER_MAX_ITERS: usize = 40;
const LOOSE_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("limit surface needs positive finite force and torque bounds, got ({0}, {1})")]
    BadLimitSurface(f64, f64),
    #[error("mass must be positive, got {0}")]
    BadMass(f64),
    #[error("friction coefficient must be non-negative (support friction positive), got {0}")]
    BadFriction(f64),
    #[error("contact parameters must be positive")]
    BadContactParams,
    #[error("the body origin must lie strictly inside the polygon to integrate its pressure")]
    OriginOutsidePolygon,
    #[error("centre of mass {0} lies outside the slider shape")]
    ComOutsideShape(Vec2),
    #[error("time step must be positive, got {0}")]
    BadTimeStep(f64),
    #[error("non-finite state at t = {time}: {what}")]
    NonFinite { time: f64, what: String },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Twist {
    pub v: Vec2,
    pub omega: f64,
}

impl Twist {
    pub const ZERO: Twist = Twist {
        v: Vec2::ZERO,
        omega: 0.0,
    };

    pub fn as_array(&self) -> [f64; 3] {
        [self.v.x, self.v.y, self.omega]
    }

    pub fn is_zero(&self) -> bool {
        self.v == Vec2::ZERO && self.omega == 0.0
    }

    /// Velocity of the point at `lever` from the reference point.
    pub fn point_velocity(&self, lever: Vec2) -> Vec2 {
        self.v + lever.perp() * self.omega
    }
}

/// Planar wrench about the slider's centre of mass.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Wrench {
    pub force: Vec2,
    pub torque: f64,
}

impl Wrench {
    pub fn as_array(&self) -> [f64; 3] {
        [self.force.x, self.force.y, self.torque]
    }

    pub fn power(&self, twist: &Twist) -> f64 {
        self.force.dot(twist.v) + self.torque * twist.omega
    }
}

/// Ellipsoidal approximation of the support-friction limit surface.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitSurface {
    pub force_max: f64,
    pub torque_max: f64,
}

impl LimitSurface {
    pub fn new(force_max: f64, torque_max: f64) -> Result<Self, EngineError> {
        if !(force_max > 0.0 && torque_max > 0.0 && force_max.is_finite() && torque_max.is_finite()) {
            return Err(EngineError::BadLimitSurface(force_max, torque_max));
        }
        Ok(Self { force_max, torque_max })
    }

    /// `H(w)`: 1 on the surface, < 1 inside.
    pub fn evaluate(&self, w: &Wrench) -> f64 {
        let f2 = self.force_max * self.force_max;
        let t2 = self.torque_max * self.torque_max;
        w.force.norm_squared() / f2 + w.torque * w.torque / t2
    }

    /// Outward normal at `w` (unnormalized), i.e. the direction of motion.
    pub fn flow(&self, w: &Wrench) -> Twist {
        let f2 = self.force_max * self.force_max;
        let t2 = self.torque_max * self.torque_max;
        Twist {
            v: w.force / f2,
            omega: w.torque / t2,
        }
    }
}

/// Support-pressure distribution used to size the limit surface torque.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PressureVariant {
    /// Pressure concentrated toward the centre: half the uniform lever arm.
    Centered,
    Uniform,
    /// All pressure on the disk rim or at the polygon vertices.
    Perimeter,
}

impl PressureVariant {
    pub const ALL: [PressureVariant; 3] = [
        PressureVariant::Centered,
        PressureVariant::Uniform,
        PressureVariant::Perimeter,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            PressureVariant::Centered => "centered",
            PressureVariant::Uniform => "uniform",
            PressureVariant::Perimeter => "perimeter",
        }
    }
}

/// Mean distance of the support pressure from the body origin.
pub fn mean_support_radius(shape: &Shape, variant: PressureVariant) -> Result<f64, EngineError> {
    let uniform = match shape {
        Shape::Disk(r) => 2.0 * r / 3.0,
        Shape::Polygon(v) => uniform_polygon_mean_radius(v)?,
    };
    Ok(match (shape, variant) {
        (_, PressureVariant::Uniform) => uniform,
        (_, PressureVariant::Centered) => 0.5 * uniform,
        (Shape::Disk(r), PressureVariant::Perimeter) => *r,
        (Shape::Polygon(v), PressureVariant::Perimeter) => v.iter().map(|p| p.norm()).sum::<f64>() / v.len() as f64,
    })
}

/// Exact mean of |x| over a convex polygon containing the origin.
///
/// Each edge spans a fan triangle with the origin; in polar coordinates about
/// the foot of the perpendicular the radial integral is `h^3/3 * sec^3`,
/// which integrates in closed form.
fn uniform_polygon_mean_radius(v: &[Vec2]) -> Result<f64, EngineError> {
    let n = v.len();
    let sec3 = |psi: f64| {
        let (s, c) = psi.sin_cos();
        let sec = 1.0 / c;
        0.5 * (sec * s / c + (sec + s / c).ln())
    };
    let mut moment = 0.0;
    let mut area = 0.0;
    for i in 0..n {
        let a = v[i];
        let b = v[(i + 1) % n];
        let edge = b - a;
        let len = edge.norm();
        let dir = edge / len;
        // Distance from the origin to the edge line; positive when inside.
        let h = a.cross(dir);
        if h <= 0.0 {
            return Err(EngineError::OriginOutsidePolygon);
        }
        let foot = a - dir * a.dot(dir);
        let ua = (a - foot).dot(dir);
        let ub = (b - foot).dot(dir);
        moment += h * h * h / 3.0 * (sec3((ub / h).atan()) - sec3((ua / h).atan()));
        area += 0.5 * a.cross(b);
    }
    Ok(moment / area)
}

/// Limit surface for a slider of `mass` on a floor with friction `mu_support`.
pub fn limit_surface_for(
    shape: &Shape,
    mass: f64,
    mu_support: f64,
    variant: PressureVariant,
) -> Result<LimitSurface, EngineError> {
    if !(mass > 0.0 && mass.is_finite()) {
        return Err(EngineError::BadMass(mass));
    }
    if !(mu_support > 0.0 && mu_support.is_finite()) {
        return Err(EngineError::BadFriction(mu_support));
    }
    let force_max = mu_support * mass * GRAVITY;
    let radius = mean_support_radius(shape, variant)?;
    LimitSurface::new(force_max, force_max * radius)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliderModel {
    pub shape: Shape,
    pub mass: f64,
    /// Centre of mass in the body frame.
    pub com_offset: Vec2,
    pub contact_friction: f64,
    pub limit_surface: LimitSurface,
}

impl SliderModel {
    pub fn new(
        shape: Shape,
        mass: f64,
        com_offset: Vec2,
        contact_friction: f64,
        limit_surface: LimitSurface,
    ) -> Result<Self, EngineError> {
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(EngineError::BadMass(mass));
        }
        if !(contact_friction >= 0.0 && contact_friction.is_finite()) {
            return Err(EngineError::BadFriction(contact_friction));
        }
        if !com_offset.is_finite() || !shape.contains_body_point(com_offset) {
            return Err(EngineError::ComOutsideShape(com_offset));
        }
        Ok(Self {
            shape,
            mass,
            com_offset,
            contact_friction,
            limit_surface,
        })
    }

    pub fn com_world(&self, pose: &Pose2) -> Vec2 {
        pose.transform_point(self.com_offset)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContactParams {
    pub stiffness: f64,
    pub damping: f64,
    /// Slip speed at which Coulomb friction saturates.
    pub friction_regularization_velocity: f64,
    /// Coulomb coefficient between slider and walls.
    pub wall_friction: f64,
}

impl Default for ContactParams {
    fn default() -> Self {
        Self {
            stiffness: 1e4,
            damping: 1e2,
            friction_regularization_velocity: 1e-3,
            wall_friction: 0.25,
        }
    }
}

impl ContactParams {
    pub fn validate(&self) -> Result<(), EngineError> {
        let ok = [self.stiffness, self.damping, self.friction_regularization_velocity]
            .iter()
            .all(|v| *v > 0.0 && v.is_finite())
            && self.wall_friction >= 0.0
            && self.wall_friction.is_finite();
        if ok {
            Ok(())
        } else {
            Err(EngineError::BadContactParams)
        }
    }
}

/// Solver warm start carried between steps.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
struct WarmStart {
    twist: [f64; 3],
}

#[derive(Clone, Debug, PartialEq)]
pub struct WorldState {
    pub slider_pose: Pose2,
    /// Centre of the pusher sphere.
    pub pusher_position: Vec2,
    pub walls: Arc<[Segment]>,
    pub time: f64,
    /// Force of the pusher on the slider, world frame.
    pub measured_force: Vec2,
    warm: Option<WarmStart>,
}

impl WorldState {
    pub fn new(slider_pose: Pose2, pusher_position: Vec2, walls: Vec<Segment>) -> Self {
        Self {
            slider_pose,
            pusher_position,
            walls: walls.into(),
            time: 0.0,
            measured_force: Vec2::ZERO,
            warm: None,
        }
    }
}

/// Contact mode at the pusher.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContactMode {
    Stick,
    /// The pusher slides along +t relative to the slider (t is the inward
    /// normal rotated +90 degrees).
    SlipPositive,
    SlipNegative,
    Separate,
}

impl ContactMode {
    pub fn name(&self) -> &'static str {
        match self {
            ContactMode::Stick => "stick",
            ContactMode::SlipPositive => "slip_positive",
            ContactMode::SlipNegative => "slip_negative",
            ContactMode::Separate => "separate",
        }
    }

    pub fn is_slip(&self) -> bool {
        matches!(self, ContactMode::SlipPositive | ContactMode::SlipNegative)
    }
}

/// Diagnostics for one engine step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepReport {
    pub mode: ContactMode,
    /// Net contact wrench on the slider about its centre of mass.
    pub wrench: Wrench,
    /// Slider twist (centre-of-mass velocity and angular rate).
    pub twist: Twist,
    /// Pusher force on the slider.
    pub pusher_force: Vec2,
    pub pusher_normal_force: f64,
    /// Signed tangential component of the pusher force along t.
    pub pusher_tangential_force: f64,
    /// Inward contact normal at the pusher (zero without contact).
    pub pusher_normal: Vec2,
    /// Contact point on the slider boundary (meaningful with contact).
    pub pusher_contact_point: Vec2,
    pub wall_contacts: usize,
    pub solver_iterations: usize,
    /// False when the friction normals could not be made consistent; the
    /// step then uses the best lagged normals found.
    pub converged: bool,
}

#[derive(Clone, Copy, Debug)]
struct Contact {
    lever: Vec2,
    normal: Vec2,
    tangent: Vec2,
    /// Normal force if the slider stays still: k*pen + c*approach speed.
    rest_normal: f64,
    source_tangential_velocity: f64,
    mu: f64,
}

struct ContactForce {
    force: Vec2,
    normal: f64,
    tangential: f64,
    saturated: bool,
}

impl Contact {
    /// Contact force at twist `xi` with friction bounded by
    /// `mu * friction_normal`, or by the normal force itself when `None`.
    fn force_at(&self, xi: &[f64; 3], stiffness_rate: f64, eps: f64, friction_normal: Option<f64>) -> ContactForce {
        let vc = Vec2::new(xi[0] - xi[2] * self.lever.y, xi[1] + xi[2] * self.lever.x);
        let u = self.normal.dot(vc);
        let slip = self.source_tangential_velocity - self.tangent.dot(vc);
        let normal = (self.rest_normal - stiffness_rate * u).max(0.0);
        let x = slip / eps;
        let sigma = x.clamp(-1.0, 1.0);
        let tangential = self.mu * friction_normal.unwrap_or(normal) * sigma;
        ContactForce {
            force: self.normal * normal + self.tangent * tangential,
            normal,
            tangential,
            saturated: x.abs() >= 1.0,
        }
    }

    /// Adds the contact's penalty and friction potentials, with friction
    /// magnitude `mu * friction_normal`, to `value`, `grad` and `hess`.
    fn accumulate_potential(
        &self,
        xi: &[f64; 3],
        friction_normal: f64,
        stiffness_rate: f64,
        eps: f64,
        acc: &mut Accumulator,
    ) {
        let r = self.lever;
        let du = [self.normal.x, self.normal.y, r.cross(self.normal)];
        let ds = [-self.tangent.x, -self.tangent.y, -r.cross(self.tangent)];
        let vc = Vec2::new(xi[0] - xi[2] * r.y, xi[1] + xi[2] * r.x);
        let raw = self.rest_normal - stiffness_rate * self.normal.dot(vc);
        if raw > 0.0 {
            acc.value += raw * raw / (2.0 * stiffness_rate);
            acc.add_rank_one(&du, -raw, stiffness_rate);
        }
        let scale = self.mu * friction_normal;
        if scale > 0.0 {
            let x = (self.source_tangential_velocity - self.tangent.dot(vc)) / eps;
            if x.abs() < 1.0 {
                acc.value += scale * eps * 0.5 * x * x;
                acc.add_rank_one(&ds, scale * x, scale / eps);
            } else {
                acc.value += scale * eps * (x.abs() - 0.5);
                acc.add_rank_one(&ds, scale * x.signum(), 0.0);
            }
        }
    }

    fn normal_at(&self, xi: &[f64; 3], stiffness_rate: f64) -> f64 {
        let vc = Vec2::new(xi[0] - xi[2] * self.lever.y, xi[1] + xi[2] * self.lever.x);
        (self.rest_normal - stiffness_rate * self.normal.dot(vc)).max(0.0)
    }
}

type Contacts = SmallVec<[Contact; 8]>;

#[derive(Default)]
struct Accumulator {
    value: f64,
    grad: [f64; 3],
    hess: [[f64; 3]; 3],
}

impl Accumulator {
    fn add_rank_one(&mut self, d: &[f64; 3], slope: f64, curvature: f64) {
        for i in 0..3 {
            self.grad[i] += slope * d[i];
            for k in 0..3 {
                self.hess[i][k] += curvature * d[i] * d[k];
            }
        }
    }
}

struct Solve {
    xi: [f64; 3],
    iterations: usize,
    converged: bool,
}

fn total_wrench(
    contacts: &[Contact],
    xi: &[f64; 3],
    rate: f64,
    eps: f64,
    friction_normals: Option<&[f64]>,
) -> [f64; 3] {
    let mut w = [0.0; 3];
    for (k, c) in contacts.iter().enumerate() {
        let f = c.force_at(xi, rate, eps, friction_normals.map(|n| n[k]));
        w[0] += f.force.x;
        w[1] += f.force.y;
        w[2] += c.lever.cross(f.force);
    }
    w
}

/// The twist minimizes support dissipation `sqrt(xi' A xi)` plus the contact
/// potentials. For fixed friction normals that objective is convex and its
/// stationarity condition is exactly the flow rule on the limit surface.
struct Objective<'a> {
    contacts: &'a [Contact],
    friction_normals: &'a [f64],
    a: [f64; 3],
    rate: f64,
    eps: f64,
}

impl Objective<'_> {
    fn contact_potentials(&self, xi: &[f64; 3]) -> Accumulator {
        let mut acc = Accumulator::default();
        for (c, n) in self.contacts.iter().zip(self.friction_normals) {
            c.accumulate_potential(xi, *n, self.rate, self.eps, &mut acc);
        }
        acc
    }

    fn eval(&self, xi: &[f64; 3]) -> Accumulator {
        let mut acc = self.contact_potentials(xi);
        let ax = [self.a[0] * xi[0], self.a[1] * xi[1], self.a[2] * xi[2]];
        let d = (ax[0] * xi[0] + ax[1] * xi[1] + ax[2] * xi[2]).sqrt();
        acc.value += d;
        if d > 0.0 {
            for i in 0..3 {
                acc.grad[i] += ax[i] / d;
                acc.hess[i][i] += self.a[i] / d;
                for k in 0..3 {
                    acc.hess[i][k] -= ax[i] * ax[k] / (d * d * d);
                }
            }
        }
        acc
    }

    /// Contact wrench at rest; the minimizer is zero iff it lies inside the
    /// limit surface.
    fn rest_wrench(&self) -> [f64; 3] {
        let mut acc = Accumulator::default();
        for (c, n) in self.contacts.iter().zip(self.friction_normals) {
            c.accumulate_potential(&[0.0; 3], *n, self.rate, self.eps, &mut acc);
        }
        [-acc.grad[0], -acc.grad[1], -acc.grad[2]]
    }

    fn inside_limit_surface(&self, w: &[f64; 3]) -> bool {
        w[0] * w[0] / self.a[0] + w[1] * w[1] / self.a[1] + w[2] * w[2] / self.a[2] <= 1.0
    }

    /// Damped Newton with Armijo backtracking from `start`.
    fn minimize(&self, start: [f64; 3], force_scale: f64) -> Solve {
        if self.inside_limit_surface(&self.rest_wrench()) {
            return Solve {
                xi: [0.0; 3],
                iterations: 0,
                converged: true,
            };
        }
        let tol = NEWTON_TOL * force_scale;
        let mut xi = start;
        let mut cur = self.eval(&xi);
        let gnorm = |g: &[f64; 3]| (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt();
        let mut iterations = 0;
        let mut converged = gnorm(&cur.grad) <= tol;
        let mut damping = 0.0;
        let mut best = gnorm(&cur.grad);
        let mut stalled = 0;
        while !converged && iterations < NEWTON_MAX_ITERS {
            iterations += 1;
            let mut h = Matrix3::from_fn(|i, k| cur.hess[i][k]);
            let trace = h.trace().abs().max(f64::MIN_POSITIVE);
            for i in 0..3 {
                h[(i, i)] += damping * trace;
            }
            let g = Vector3::new(cur.grad[0], cur.grad[1], cur.grad[2]);
            let step = match h.lu().solve(&-g) {
                Some(p) if p.dot(&g) < 0.0 => p,
                _ => {
                    damping = if damping == 0.0 { 1e-10 } else { damping * 100.0 };
                    if damping > 1e6 {
                        break;
                    }
                    continue;
                }
            };
            let slope = step.dot(&g);
            let mut alpha = 1.0;
            let mut accepted = false;
            for _ in 0..60 {
                let trial = [
                    xi[0] + alpha * step[0],
                    xi[1] + alpha * step[1],
                    xi[2] + alpha * step[2],
                ];
                let next = self.eval(&trial);
                let decrease = next.value <= cur.value + 1e-4 * alpha * slope;
                let flat =
                    (next.value - cur.value).abs() <= 1e-14 * cur.value.abs() && gnorm(&next.grad) < gnorm(&cur.grad);
                if decrease || flat {
                    xi = trial;
                    cur = next;
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !accepted {
                damping = if damping == 0.0 { 1e-10 } else { damping * 100.0 };
                if damping > 1e6 {
                    break;
                }
                continue;
            }
            damping = if alpha == 1.0 { 0.0 } else { damping };
            let g = gnorm(&cur.grad);
            converged = g <= tol;
            if g < 0.5 * best || g > 1e-8 * force_scale {
                best = best.min(g);
                stalled = 0;
            } else {
                stalled += 1;
                if stalled >= 4 {
                    break;
                }
            }
        }
        if converged || gnorm(&cur.grad) <= LOOSE_TOL * force_scale {
            return Solve {
                xi,
                iterations,
                converged: true,
            };
        }
        let mut fallback = self.minimize_by_multiplier(force_scale);
        fallback.iterations += iterations;
        fallback
    }

    /// Twist `lambda A^-1 w` minimizing `xi' A xi / 2 + lambda * potentials`,
    /// where `w` is the contact wrench at that twist.
    fn scaled_flow(&self, lambda: f64, start: [f64; 3], force_scale: f64) -> Option<([f64; 3], [f64; 3], usize)> {
        let a = self.a;
        let value = |acc: &Accumulator, xi: &[f64; 3]| {
            0.5 * (a[0] * xi[0] * xi[0] + a[1] * xi[1] * xi[1] + a[2] * xi[2] * xi[2]) + lambda * acc.value
        };
        let grad = |acc: &Accumulator, xi: &[f64; 3]| [0, 1, 2].map(|i| a[i] * xi[i] + lambda * acc.grad[i]);
        let tol = NEWTON_TOL * force_scale * a[0].max(a[2]).sqrt();
        let norm = |g: &[f64; 3]| (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt();
        let mut xi = start;
        let mut cur = self.contact_potentials(&xi);
        for it in 0..NEWTON_MAX_ITERS {
            let g = grad(&cur, &xi);
            if norm(&g) <= tol {
                return Some((xi, cur.grad.map(|v| -v), it));
            }
            let h = Matrix3::from_fn(|i, k| lambda * cur.hess[i][k] + if i == k { a[i] } else { 0.0 });
            let step = h.cholesky()?.solve(&-Vector3::new(g[0], g[1], g[2]));
            let slope = step.dot(&Vector3::new(g[0], g[1], g[2]));
            let v0 = value(&cur, &xi);
            let mut alpha = 1.0;
            let mut moved = false;
            for _ in 0..60 {
                let trial = [0, 1, 2].map(|i| xi[i] + alpha * step[i]);
                let next = self.contact_potentials(&trial);
                let v1 = value(&next, &trial);
                if v1 <= v0 + 1e-4 * alpha * slope
                    || (v1 - v0).abs() <= 1e-14 * v0.abs() && norm(&grad(&next, &trial)) < norm(&g)
                {
                    xi = trial;
                    cur = next;
                    moved = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !moved {
                break;
            }
        }
        let g = grad(&cur, &xi);
        (norm(&g) <= LOOSE_TOL * force_scale * a[0].max(a[2]).sqrt())
            .then(|| (xi, cur.grad.map(|v| -v), NEWTON_MAX_ITERS))
    }

    /// Fallback for near-jammed steps, where the kink of the dissipation term
    /// at zero defeats Newton: finds the multiplier at which the wrench of
    /// the scaled flow lies on the limit surface.
    fn minimize_by_multiplier(&self, force_scale: f64) -> Solve {
        let mut iterations = 0;
        let mut warm = [0.0; 3];
        let mut residual = |lambda: f64, iterations: &mut usize| {
            let (xi, w, it) = self.scaled_flow(lambda, warm, force_scale)?;
            *iterations += it;
            warm = xi;
            Some((
                xi,
                (w[0] * w[0] / self.a[0] + w[1] * w[1] / self.a[1] + w[2] * w[2] / self.a[2]).sqrt() - 1.0,
            ))
        };
        let failed = |iterations| Solve {
            xi: [0.0; 3],
            iterations,
            converged: false,
        };
        let (mut lo, mut hi) = (0.0, 1e-12);
        let mut hi_eval = loop {
            match residual(hi, &mut iterations) {
                Some((xi, r)) if r <= 0.0 => break (xi, r),
                Some(_) if hi < 1e12 => {
                    lo = hi;
                    hi *= 4.0;
                }
                _ => return failed(iterations),
            }
        };
        let mut lo_r = match residual(lo, &mut iterations) {
            Some((_, r)) => r,
            None => return failed(iterations),
        };
        for _ in 0..200 {
            if hi_eval.1.abs() <= 1e-13 || hi - lo <= 1e-15 * hi {
                break;
            }
            let secant = hi - hi_eval.1 * (hi - lo) / (hi_eval.1 - lo_r);
            let mid = if secant > lo && secant < hi {
                secant
            } else {
                0.5 * (lo + hi)
            };
            let mid = if (mid - lo).min(hi - mid) < 1e-3 * (hi - lo) {
                0.5 * (lo + hi)
            } else {
                mid
            };
            let Some((xi, r)) = residual(mid, &mut iterations) else {
                return failed(iterations);
            };
            if r <= 0.0 {
                hi = mid;
                hi_eval = (xi, r);
            } else {
                lo = mid;
                lo_r = r;
            }
        }
        Solve {
            xi: hi_eval.0,
            iterations,
            converged: hi_eval.1.abs() <= 1e-9,
        }
    }
}

impl Contact {
    /// Derivative of the friction gradient term with respect to the friction
    /// normal, and of the normal force with respect to the twist.
    fn sensitivities(&self, xi: &[f64; 3], stiffness_rate: f64, eps: f64) -> ([f64; 3], [f64; 3]) {
        let r = self.lever;
        let vc = Vec2::new(xi[0] - xi[2] * r.y, xi[1] + xi[2] * r.x);
        let x = ((self.source_tangential_velocity - self.tangent.dot(vc)) / eps).clamp(-1.0, 1.0);
        let ds = [-self.tangent.x, -self.tangent.y, -r.cross(self.tangent)];
        let dg = ds.map(|d| self.mu * x * d);
        let raw = self.rest_normal - stiffness_rate * self.normal.dot(vc);
        let dn = if raw > 0.0 {
            [self.normal.x, self.normal.y, r.cross(self.normal)].map(|d| -stiffness_rate * d)
        } else {
            [0.0; 3]
        };
        (dg, dn)
    }
}

/// Newton step on the normal mismatch `N(xi(nbar)) - nbar`, differentiating
/// the inner minimizer through its stationarity condition.
fn newton_normals(objective: &Objective, xi: &[f64; 3], mismatch: &[f64]) -> Option<SmallVec<[f64; 8]>> {
    let n = mismatch.len();
    let h = objective.eval(xi).hess;
    let h = Matrix3::from_fn(|i, k| h[i][k]);
    let lu = h.lu();
    let mut jac = DMatrix::<f64>::identity(n, n) * -1.0;
    let sens: SmallVec<[([f64; 3], [f64; 3]); 8]> = objective
        .contacts
        .iter()
        .map(|c| c.sensitivities(xi, objective.rate, objective.eps))
        .collect();
    for (k, (dg, _)) in sens.iter().enumerate() {
        let dxi = lu.solve(&-Vector3::new(dg[0], dg[1], dg[2]))?;
        for (j, (_, dn)) in sens.iter().enumerate() {
            jac[(j, k)] += dn[0] * dxi[0] + dn[1] * dxi[1] + dn[2] * dxi[2];
        }
    }
    let step = jac.lu().solve(&-DVector::from_column_slice(mismatch))?;
    step.iter()
        .all(|v| v.is_finite())
        .then(|| step.iter().copied().collect())
}

/// Solves for the twist, adjusting the friction normals until they match the
/// normal forces at the solution.
struct Motion {
    xi: [f64; 3],
    /// Normals bounding friction in the solved problem.
    friction_normals: SmallVec<[f64; 8]>,
    iterations: usize,
    converged: bool,
}

/// Tries progressively more robust normal updates from two seeds. If none
/// converges, returns the best matched lagged-normal solution.
fn solve_motion(contacts: &[Contact], ls: &LimitSurface, rate: f64, eps: f64, start: [f64; 3]) -> Motion {
    let a = [
        ls.force_max * ls.force_max,
        ls.force_max * ls.force_max,
        ls.torque_max * ls.torque_max,
    ];
    let mut iterations = 0;
    let at_start = contacts.iter().map(|c| c.normal_at(&start, rate)).collect();
    let at_rest: SmallVec<[f64; 8]> = contacts.iter().map(|c| c.rest_normal.max(0.0)).collect();
    let mut best: Option<Matched> = None;
    for (normals, strategy) in [
        (at_start, OuterStrategy::Newton),
        (at_rest.clone(), OuterStrategy::FixedPoint),
        (at_rest.clone(), OuterStrategy::Newton),
    ] {
        let (found, converged) = match_normals(contacts, a, rate, eps, start, normals, strategy, &mut iterations);
        if let Some(m) = found {
            if converged {
                return Motion {
                    xi: m.xi,
                    friction_normals: m.normals,
                    iterations,
                    converged: true,
                };
            }
            if best.as_ref().is_none_or(|b| m.norm < b.norm) {
                best = Some(m);
            }
        }
    }
    match best {
        Some(m) => Motion {
            xi: m.xi,
            friction_normals: m.normals,
            iterations,
            converged: false,
        },
        None => Motion {
            xi: [0.0; 3],
            friction_normals: at_rest,
            iterations,
            converged: false,
        },
    }
}

struct Matched {
    normals: SmallVec<[f64; 8]>,
    xi: [f64; 3],
    mismatch: SmallVec<[f64; 8]>,
    norm: f64,
}

#[derive(Clone, Copy, PartialEq)]
enum OuterStrategy {
    /// Newton step on the mismatch, then shorter and fixed-point steps,
    /// keeping the first that reduces it.
    Newton,
    /// Plain substitution of the normals found at the last twist.
    FixedPoint,
}

/// Returns the best iterate and whether it met the tolerance.
#[allow(clippy::too_many_arguments)]
fn match_normals(
    contacts: &[Contact],
    a: [f64; 3],
    rate: f64,
    eps: f64,
    start: [f64; 3],
    normals: SmallVec<[f64; 8]>,
    strategy: OuterStrategy,
    iterations: &mut usize,
) -> (Option<Matched>, bool) {
    let force_scale = a[0].sqrt() + contacts.iter().map(|c| c.rest_normal.abs()).sum::<f64>();
    let tol = 1e-12 * force_scale;
    let evaluate = |normals: SmallVec<[f64; 8]>, from: [f64; 3], iterations: &mut usize| {
        let objective = Objective {
            contacts,
            friction_normals: &normals,
            a,
            rate,
            eps,
        };
        let inner = objective.minimize(if from == [0.0; 3] { start } else { from }, force_scale);
        *iterations += inner.iterations;
        if !inner.converged {
            return None;
        }
        let xi = inner.xi;
        let mismatch: SmallVec<[f64; 8]> = contacts
            .iter()
            .zip(&normals)
            .map(|(c, n)| c.normal_at(&xi, rate) - n)
            .collect();
        let norm = mismatch.iter().fold(0.0f64, |m, r| m.max(r.abs()));
        Some(Matched {
            normals,
            xi,
            mismatch,
            norm,
        })
    };
    let Some(mut cur) = evaluate(normals, start, iterations) else {
        return (None, false);
    };
    let mut best: Option<Matched> = None;
    let keep_best = |m: &Matched, best: &mut Option<Matched>| {
        if best.as_ref().is_none_or(|b| m.norm < b.norm) {
            *best = Some(Matched {
                normals: m.normals.clone(),
                xi: m.xi,
                mismatch: m.mismatch.clone(),
                norm: m.norm,
            });
        }
    };
    for _ in 0..OUTER_MAX_ITERS {
        if cur.norm <= tol {
            return (Some(cur), true);
        }
        keep_best(&cur, &mut best);
        if strategy == OuterStrategy::FixedPoint {
            let next: SmallVec<[f64; 8]> = cur
                .normals
                .iter()
                .zip(&cur.mismatch)
                .map(|(n, r)| (n + r).max(0.0))
                .collect();
            match evaluate(next, cur.xi, iterations) {
                Some(next) => {
                    cur = next;
                    continue;
                }
                None => break,
            }
        }
        let objective = Objective {
            contacts,
            friction_normals: &cur.normals,
            a,
            rate,
            eps,
        };
        let newton = newton_normals(&objective, &cur.xi, &cur.mismatch);
        let picard: SmallVec<[f64; 8]> = cur.mismatch.clone();
        let mut steps: SmallVec<[(SmallVec<[f64; 8]>, f64); 6]> = SmallVec::new();
        if let Some(d) = newton {
            steps.push((d.clone(), 1.0));
            steps.push((d, 0.5));
        }
        steps.extend([(picard.clone(), 1.0), (picard.clone(), 0.5), (picard, 0.1)]);
        let mut fallback: Option<Matched> = None;
        let mut accepted = None;
        for (d, scale) in steps {
            let trial: SmallVec<[f64; 8]> = cur
                .normals
                .iter()
                .zip(&d)
                .map(|(n, d)| (n + scale * d).max(0.0))
                .collect();
            let Some(next) = evaluate(trial, cur.xi, iterations) else {
                continue;
            };
            if next.norm < (1.0 - 1e-4) * cur.norm {
                accepted = Some(next);
                break;
            }
            if fallback.as_ref().is_none_or(|f| next.norm < f.norm) {
                fallback = Some(next);
            }
        }
        match accepted.or(fallback) {
            Some(next) => cur = next,
            None => break,
        }
    }
    if cur.norm <= tol {
        return (Some(cur), true);
    }
    keep_best(&cur, &mut best);
    (best, false)
}

/// Advances the world by `dt` with the pusher moving at `pusher_velocity`.
pub fn step(
    world: &WorldState,
    slider: &SliderModel,
    params: &ContactParams,
    pusher_velocity: Vec2,
    dt: f64,
) -> Result<(WorldState, StepReport), EngineError> {
    let mut next = world.clone();
    let report = step_in_place(&mut next, slider, params, pusher_velocity, dt)?;
    Ok((next, report))
}

/// In-place variant of [`step`], used by the simulation loops.
pub fn step_in_place(
    world: &mut WorldState,
    slider: &SliderModel,
    params: &ContactParams,
    pusher_velocity: Vec2,
    dt: f64,
) -> Result<StepReport, EngineError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(EngineError::BadTimeStep(dt));
    }
    if !pusher_velocity.is_finite() {
        return Err(EngineError::NonFinite {
            time: world.time,
            what: format!("pusher velocity {pusher_velocity}"),
        });
    }
    world.pusher_position += pusher_velocity * dt;

    let pose = world.slider_pose;
    let com = slider.com_world(&pose);
    let eps = params.friction_regularization_velocity;
    let rate = params.stiffness * dt + params.damping;

    let mut contacts: Contacts = SmallVec::new();
    let cp = closest_point_on_shape(&slider.shape, &pose, world.pusher_position);
    let pusher_pen = PUSHER_RADIUS - cp.signed_distance;
    let has_pusher = pusher_pen > 0.0;
    let inward = -cp.outward_normal;
    if has_pusher {
        let t = inward.perp();
        contacts.push(Contact {
            lever: cp.point - com,
            normal: inward,
            tangent: t,
            rest_normal: params.stiffness * pusher_pen + params.damping * inward.dot(pusher_velocity),
            source_tangential_velocity: t.dot(pusher_velocity),
            mu: slider.contact_friction,
        });
    }
    let mut wall_buf: SmallVec<[WallContact; 8]> = SmallVec::new();
    let mut scratch = Vec::new();
    for wall in world.walls.iter() {
        scratch.clear();
        segment_shape_contacts_into(&slider.shape, &pose, wall, &mut scratch);
        wall_buf.extend(scratch.iter().copied());
    }
    for wc in &wall_buf {
        contacts.push(Contact {
            lever: wc.point - com,
            normal: wc.normal,
            tangent: wc.normal.perp(),
            rest_normal: params.stiffness * wc.penetration,
            source_tangential_velocity: 0.0,
            mu: params.wall_friction,
        });
    }

    let ls = &slider.limit_surface;
    let rest = [0.0; 3];
    let pusher_force_at = |xi: &[f64; 3], friction_normals: Option<&[f64]>| -> ContactForce {
        if has_pusher {
            contacts[0].force_at(xi, rate, eps, friction_normals.map(|n| n[0]))
        } else {
            ContactForce {
                force: Vec2::ZERO,
                normal: 0.0,
                tangential: 0.0,
                saturated: false,
            }
        }
    };

    let at_rest_force = pusher_force_at(&rest, None);
    let w0 = total_wrench(&contacts, &rest, rate, eps, None);
    let w0 = Wrench {
        force: Vec2::new(w0[0], w0[1]),
        torque: w0[2],
    };
    let moves = has_pusher && at_rest_force.normal > 0.0 && ls.evaluate(&w0) > 1.0;

    let mut iterations = 0;
    let mut converged = true;
    let (twist, wrench, pusher) = if moves {
        let cold = initial_guess(&contacts[0], ls, &w0, pusher_velocity);
        let mut sol = solve_motion(&contacts, ls, rate, eps, world.warm.map_or(cold, |w| w.twist));
        if !sol.converged && world.warm.is_some() {
            let retry = solve_motion(&contacts, ls, rate, eps, cold);
            if retry.converged {
                sol = retry;
            }
        }
        iterations = sol.iterations;
        converged = sol.converged;
        let w = total_wrench(&contacts, &sol.xi, rate, eps, Some(&sol.friction_normals));
        let twist = Twist {
            v: Vec2::new(sol.xi[0], sol.xi[1]),
            omega: sol.xi[2],
        };
        world.warm = (!twist.is_zero()).then_some(WarmStart { twist: sol.xi });
        let wrench = Wrench {
            force: Vec2::new(w[0], w[1]),
            torque: w[2],
        };
        (twist, wrench, pusher_force_at(&sol.xi, Some(&sol.friction_normals)))
    } else {
        world.warm = None;
        (Twist::ZERO, w0, at_rest_force)
    };

    if !twist.is_zero() {
        let new_com = com + twist.v * dt;
        let phi = pose.orientation.radians() + twist.omega * dt;
        let mut next = Pose2::new(Vec2::ZERO, phi);
        next.position = new_com - next.transform_vector(slider.com_offset);
        world.slider_pose = next;
    }
    world.time += dt;
    world.measured_force = pusher.force;

    if !world.slider_pose.is_finite() || !world.pusher_position.is_finite() || !world.measured_force.is_finite() {
        return Err(EngineError::NonFinite {
            time: world.time,
            what: format!(
                "slider pose {:?}, pusher {}, force {}",
                world.slider_pose, world.pusher_position, world.measured_force
            ),
        });
    }

    let mode = if !has_pusher || pusher.normal <= 0.0 {
        ContactMode::Separate
    } else if !pusher.saturated {
        ContactMode::Stick
    } else if pusher.tangential > 0.0
        || (pusher.tangential == 0.0
            && contacts[0].source_tangential_velocity
                - contacts[0].tangent.dot(twist.point_velocity(contacts[0].lever))
                > 0.0)
    {
        ContactMode::SlipPositive
    } else {
        ContactMode::SlipNegative
    };

    Ok(StepReport {
        mode,
        wrench,
        twist,
        pusher_force: pusher.force,
        pusher_normal_force: pusher.normal,
        pusher_tangential_force: pusher.tangential,
        pusher_normal: if has_pusher { inward } else { Vec2::ZERO },
        pusher_contact_point: cp.point,
        wall_contacts: wall_buf.len(),
        solver_iterations: iterations,
        converged,
    })
}

/// Flow-rule twist scaled so the slider keeps pace with the pusher along the
/// contact normal.
fn initial_guess(pusher: &Contact, ls: &LimitSurface, w0: &Wrench, pusher_velocity: Vec2) -> [f64; 3] {
    let dir = ls.flow(w0);
    let approach = pusher.normal.dot(dir.point_velocity(pusher.lever));
    let target = pusher.normal.dot(pusher_velocity).max(1e-4);
    let lambda = if approach > 1e-12 { target / approach } else { 1e-3 };
    [dir.v.x * lambda, dir.v.y * lambda, dir.omega * lambda]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_box(mu_c: f64) -> SliderModel {
        let shape = Shape::square(1.0).unwrap();
        let ls = limit_surface_for(&shape, 1.0, 0.25, PressureVariant::Uniform).unwrap();
        SliderModel::new(shape, 1.0, Vec2::ZERO, mu_c, ls).unwrap()
    }

    #[test]
    fn limit_surface_values() {
        let disk = Shape::disk(0.5).unwrap();
        let ls = limit_surface_for(&disk, 1.0, 0.25, PressureVariant::Uniform).unwrap();
        assert!((ls.force_max - 2.4525).abs() < 1e-12);
        assert!((ls.torque_max - 0.8175).abs() < 1e-12);
        let ring = limit_surface_for(&disk, 1.0, 0.25, PressureVariant::Perimeter).unwrap();
        assert!((ring.torque_max - 1.22625).abs() < 1e-12);
        let sq = Shape::square(1.0).unwrap();
        let ls = limit_surface_for(&sq, 1.0, 0.25, PressureVariant::Uniform).unwrap();
        let expect = 2.4525 * (2f64.sqrt() + (1.0 + 2f64.sqrt()).ln()) / 6.0;
        assert!((ls.torque_max - expect).abs() < 1e-12);
        assert!((ls.torque_max - 0.93833).abs() < 1e-5);
        let vertex = limit_surface_for(&sq, 1.0, 0.25, PressureVariant::Perimeter).unwrap();
        assert!((vertex.torque_max - 2.4525 / 2f64.sqrt()).abs() < 1e-12);
        let centered = limit_surface_for(&sq, 1.0, 0.25, PressureVariant::Centered).unwrap();
        assert!((centered.torque_max - 0.5 * expect).abs() < 1e-12);
    }

    #[test]
    fn limit_surface_rejects_bad_input() {
        let sq = Shape::square(1.0).unwrap();
        assert!(limit_surface_for(&sq, 0.0, 0.25, PressureVariant::Uniform).is_err());
        assert!(limit_surface_for(&sq, 1.0, 0.0, PressureVariant::Uniform).is_err());
        let off = Shape::polygon(vec![Vec2::new(1.0, 0.0), Vec2::new(2.0, 0.0), Vec2::new(1.5, 1.0)]).unwrap();
        assert_eq!(
            limit_surface_for(&off, 1.0, 0.25, PressureVariant::Uniform),
            Err(EngineError::OriginOutsidePolygon)
        );
    }

    #[test]
    fn no_contact_means_rest() {
        let slider = unit_box(0.5);
        let mut world = WorldState::new(Pose2::default(), Vec2::new(-1.0, 0.0), vec![]);
        for _ in 0..100 {
            let r = step_in_place(
                &mut world,
                &slider,
                &ContactParams::default(),
                Vec2::new(0.0, 0.1),
                1e-3,
            )
            .unwrap();
            assert_eq!(r.mode, ContactMode::Separate);
            assert!(r.twist.is_zero());
        }
        assert_eq!(world.slider_pose, Pose2::default());
        assert_eq!(world.measured_force, Vec2::ZERO);
    }

    #[test]
    fn centered_push_translates() {
        for mu in [0.0, 0.5] {
            let slider = unit_box(mu);
            let start = Vec2::new(-0.5 - PUSHER_RADIUS - 0.005, 0.0);
            let mut world = WorldState::new(Pose2::default(), start, vec![]);
            let params = ContactParams::default();
            let mut last = None;
            for _ in 0..2000 {
                last = Some(step_in_place(&mut world, &slider, &params, Vec2::new(0.1, 0.0), 1e-3).unwrap());
            }
            let r = last.unwrap();
            assert!(r.converged);
            assert_eq!(world.slider_pose.orientation.radians(), 0.0);
            assert!(world.slider_pose.position.y.abs() < 1e-12);
            assert!((r.twist.v.x - 0.1).abs() < 1e-9);
            assert!(world.measured_force.y.abs() < 1e-12);
            assert!(
                (world.measured_force.x - 2.4525).abs() < 1e-9,
                "{}",
                world.measured_force
            );
        }
    }

    #[test]
    fn flow_rule_and_cone_hold_in_off_center_push() {
        let slider = unit_box(0.5);
        let params = ContactParams::default();
        let start = Vec2::new(-0.5 - PUSHER_RADIUS + 1e-4, 0.3);
        let mut world = WorldState::new(Pose2::default(), start, vec![]);
        let v = Vec2::new(0.1, 0.01);
        for _ in 0..3000 {
            let r = step_in_place(&mut world, &slider, &params, v, 1e-3).unwrap();
            assert!(r.pusher_tangential_force.abs() <= slider.contact_friction * r.pusher_normal_force + 1e-9);
            assert!(r.wrench.power(&r.twist) >= 0.0);
            if !r.twist.is_zero() {
                let flow = slider.limit_surface.flow(&r.wrench);
                let (a, b) = (flow.as_array(), r.twist.as_array());
                let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
                let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
                for k in 0..3 {
                    assert!(
                        (a[k] / na - b[k] / nb).abs() < 1e-9,
                        "{k} {a:?} {b:?} {} {} {}",
                        r.solver_iterations,
                        world.time,
                        r.converged
                    );
                }
                assert!((slider.limit_surface.evaluate(&r.wrench) - 1.0).abs() < 1e-9);
            }
        }
        // Off-centre push rotates the box.
        assert!(world.slider_pose.orientation.radians().abs() > 0.01);
    }

    #[test]
    fn wall_blocks_slider() {
        let slider = unit_box(0.5);
        let params = ContactParams::default();
        let wall = Segment::new(Vec2::new(0.6, -3.0), Vec2::new(0.6, 3.0)).unwrap();
        let start = Vec2::new(-0.5 - PUSHER_RADIUS - 0.001, 0.0);
        let mut world = WorldState::new(Pose2::default(), start, vec![wall]);
        let mut peak: f64 = 0.0;
        for _ in 0..3000 {
            let r = step_in_place(&mut world, &slider, &params, Vec2::new(0.1, 0.0), 1e-3).unwrap();
            peak = peak.max(world.measured_force.norm());
            assert!(r.converged);
        }
        // Jammed head-on against the wall: the force keeps growing while the
        // penalty springs absorb the motion.
        let wall_depth = world.slider_pose.position.x - 0.1;
        assert!((2.0 * 1e4 * wall_depth - world.measured_force.x).abs() < 0.02 * world.measured_force.x);
        assert!(peak > 1000.0);
    }

    #[test]
    fn bad_dt_rejected() {
        let slider = unit_box(0.5);
        let mut world = WorldState::new(Pose2::default(), Vec2::new(-1.0, 0.0), vec![]);
        assert!(matches!(
            step_in_place(&mut world, &slider, &ContactParams::default(), Vec2::ZERO, 0.0),
            Err(EngineError::BadTimeStep(_))
        ));
    }

    #[test]
    fn step_is_deterministic() {
        let slider = unit_box(0.3);
        let params = ContactParams::default();
        let run = || {
            let mut world = WorldState::new(Pose2::new(Vec2::ZERO, 0.2), Vec2::new(-0.56, 0.2), vec![]);
            for _ in 0..500 {
                step_in_place(&mut world, &slider, &params, Vec2::new(0.1, 0.02), 1e-3).unwrap();
            }
            world
        };
        assert_eq!(run(), run());
    }
}
