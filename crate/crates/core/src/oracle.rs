//! Analytic single-contact quasistatic pushing solution.
//!
//! For one point contact against a slider with an ellipsoidal limit surface
//! the motion is found in closed form: try sticking first, and if the
//! required force leaves the friction cone, slide with the force on the
//! violated cone edge. Used as an independent reference for the engine.

use serde::{Deserialize, Serialize};

use crate::engine::{ContactMode, SliderModel, Twist, Wrench};
use crate::geometry::Vec2;

/// Why a solution degenerated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleDiagnostic {
    /// The stick system was numerically singular and solved after perturbing
    /// the contact point.
    PerturbedSingular,
    /// Neither friction-cone edge gave a consistent sliding direction.
    InconsistentSlip,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContactSolution {
    pub mode: ContactMode,
    /// Force of the pusher on the slider, on the limit surface.
    pub force: Vec2,
    /// Slider twist about the centre of mass.
    pub twist: Twist,
    pub diagnostic: Option<OracleDiagnostic>,
}

impl ContactSolution {
    fn separate(diagnostic: Option<OracleDiagnostic>) -> Self {
        Self {
            mode: ContactMode::Separate,
            force: Vec2::ZERO,
            twist: Twist::ZERO,
            diagnostic,
        }
    }
}

struct Frame {
    /// Lever arm from the centre of mass.
    lever: Vec2,
    inv_f2: f64,
    inv_t2: f64,
}

impl Frame {
    /// Contact-point velocity produced by the flow-rule twist of force `f`.
    fn contact_velocity(&self, f: Vec2) -> Vec2 {
        let q = self.lever.perp();
        f * self.inv_f2 + q * (q.dot(f) * self.inv_t2)
    }

    fn flow_twist(&self, f: Vec2, scale: f64) -> Twist {
        Twist {
            v: f * (self.inv_f2 * scale),
            omega: self.lever.cross(f) * self.inv_t2 * scale,
        }
    }

    fn limit_value(&self, f: Vec2) -> f64 {
        let tau = self.lever.cross(f);
        f.norm_squared() * self.inv_f2 + tau * tau * self.inv_t2
    }

    fn on_surface(&self, f: Vec2) -> Vec2 {
        f / self.limit_value(f).sqrt()
    }

    /// Solves `M g = v` for the symmetric 2x2 contact-velocity map `M`.
    fn invert(&self, v: Vec2) -> Option<Vec2> {
        let q = self.lever.perp();
        let m11 = self.inv_f2 + q.x * q.x * self.inv_t2;
        let m12 = q.x * q.y * self.inv_t2;
        let m22 = self.inv_f2 + q.y * q.y * self.inv_t2;
        let det = m11 * m22 - m12 * m12;
        let scale = m11.abs().max(m22.abs());
        if det.is_nan() || det.abs() <= 1e-14 * scale * scale {
            return None;
        }
        Some(Vec2::new((m22 * v.x - m12 * v.y) / det, (m11 * v.y - m12 * v.x) / det))
    }
}

/// Quasistatic response of `slider` pushed at `contact_point` (body frame)
/// with `pusher_velocity`, where `inward_normal` points into the slider.
///
/// `v_scale` is the velocity scale used for the singularity and slip
/// tolerances; pass the nominal pushing speed.
pub fn solve_contact(
    slider: &SliderModel,
    contact_point: Vec2,
    inward_normal: Vec2,
    pusher_velocity: Vec2,
    v_scale: f64,
) -> ContactSolution {
    let n = inward_normal.try_normalize().unwrap_or(inward_normal);
    if n.dot(pusher_velocity) <= 0.0 {
        return ContactSolution::separate(None);
    }
    let ls = &slider.limit_surface;
    let mut frame = Frame {
        lever: contact_point - slider.com_offset,
        inv_f2: 1.0 / (ls.force_max * ls.force_max),
        inv_t2: 1.0 / (ls.torque_max * ls.torque_max),
    };
    let mut diagnostic = None;
    let g = match frame.invert(pusher_velocity) {
        Some(g) => g,
        None => {
            frame.lever += Vec2::new(1e-12, 1e-12);
            diagnostic = Some(OracleDiagnostic::PerturbedSingular);
            match frame.invert(pusher_velocity) {
                Some(g) => g,
                None => return ContactSolution::separate(diagnostic),
            }
        }
    };

    let mu = slider.contact_friction;
    let t = n.perp();
    let cos_cone = 1.0 / (1.0 + mu * mu).sqrt();
    if g.dot(n) >= g.norm() * cos_cone {
        return ContactSolution {
            mode: ContactMode::Stick,
            force: frame.on_surface(g),
            twist: frame.flow_twist(g, 1.0),
            diagnostic,
        };
    }

    let slip_tol = 1e-12 * v_scale.abs().max(1e-12);
    let first_side = if g.dot(t) >= 0.0 { 1.0 } else { -1.0 };
    for side in [first_side, -first_side] {
        let edge = (n + t * (side * mu)) * cos_cone;
        let approach = n.dot(frame.contact_velocity(edge));
        if approach <= 0.0 {
            continue;
        }
        let scale = n.dot(pusher_velocity) / approach;
        let slip = t.dot(pusher_velocity - frame.contact_velocity(edge) * scale);
        // Friction drags the slider along the pusher's relative slip.
        let consistent = mu == 0.0 || slip * side >= -slip_tol;
        if !consistent {
            continue;
        }
        let mode = if slip > 0.0 || (slip == 0.0 && side > 0.0) {
            ContactMode::SlipPositive
        } else {
            ContactMode::SlipNegative
        };
        return ContactSolution {
            mode,
            force: frame.on_surface(edge),
            twist: frame.flow_twist(edge, scale),
            diagnostic,
        };
    }
    ContactSolution::separate(Some(OracleDiagnostic::InconsistentSlip))
}

/// Wrench of `force` applied at `contact_point` about the slider's centre of
/// mass (body frame).
pub fn contact_wrench(slider: &SliderModel, contact_point: Vec2, force: Vec2) -> Wrench {
    Wrench {
        force,
        torque: (contact_point - slider.com_offset).cross(force),
    }
}
