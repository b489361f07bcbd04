//! Force-feedback single-point pushing controller.
//!
//! Each tick turns a measured contact force and the pusher's path projection
//! into a commanded end-effector velocity: a pushing-angle law while in
//! contact, a rate-limited recovery steer otherwise, an admittance offset
//! against excessive force, and a tangential deflection near walls.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Angle, Segment, Vec2};
use crate::path::FrenetProjection;

#[derive(Debug, Error, PartialEq)]
pub enum ControllerError {
    #[error("pushing angle needs a nonzero force")]
    ZeroForce,
    #[error("controller parameter `{name}` must be positive and finite, got {value}")]
    BadParameter { name: &'static str, value: f64 },
    #[error("force thresholds must satisfy f_min < f_max (got {f_min} and {f_max})")]
    BadForceBand { f_min: f64, f_max: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerParams {
    /// Nominal end-effector speed, m/s.
    pub speed: f64,
    pub force_gain: f64,
    /// Lateral-offset gain, rad/m.
    pub offset_gain: f64,
    /// Admittance gain, s/kg.
    pub admittance_gain: f64,
    /// Base heading gain, 1/s.
    pub heading_gain: f64,
    pub force_min: f64,
    pub force_max: f64,
    /// Largest heading change per tick while out of contact, rad.
    pub max_turn: f64,
    /// Wall distance below which the end effector is deflected, m.
    pub obstacle_distance: f64,
    /// Force filter time constant, s.
    pub filter_time_constant: f64,
    /// Base velocity limits (vx, vy, omega).
    pub velocity_limits: [f64; 3],
}

impl ControllerParams {
    /// Gains used for the simulated sweeps.
    pub const fn simulation() -> Self {
        Self {
            speed: 0.1,
            force_gain: 0.3,
            offset_gain: 0.1,
            admittance_gain: 0.003,
            heading_gain: 1.0,
            force_min: 1.0,
            force_max: 50.0,
            max_turn: 0.1,
            obstacle_distance: 0.1,
            filter_time_constant: 0.05,
            velocity_limits: [0.5, 0.5, 0.25],
        }
    }

    /// Gains tuned for the physical mobile manipulator.
    pub const fn hardware() -> Self {
        Self {
            offset_gain: 0.5,
            force_min: 5.0,
            ..Self::simulation()
        }
    }

    pub fn validate(&self) -> Result<(), ControllerError> {
        let fields = [
            ("speed", self.speed),
            ("force_gain", self.force_gain),
            ("offset_gain", self.offset_gain),
            ("admittance_gain", self.admittance_gain),
            ("heading_gain", self.heading_gain),
            ("force_min", self.force_min),
            ("force_max", self.force_max),
            ("max_turn", self.max_turn),
            ("obstacle_distance", self.obstacle_distance),
            ("filter_time_constant", self.filter_time_constant),
            ("velocity_limits[0]", self.velocity_limits[0]),
            ("velocity_limits[1]", self.velocity_limits[1]),
            ("velocity_limits[2]", self.velocity_limits[2]),
        ];
        for (name, value) in fields {
            if !(value > 0.0 && value.is_finite()) {
                return Err(ControllerError::BadParameter { name, value });
            }
        }
        if self.force_min >= self.force_max {
            return Err(ControllerError::BadForceBand {
                f_min: self.force_min,
                f_max: self.force_max,
            });
        }
        Ok(())
    }
}

impl Default for ControllerParams {
    fn default() -> Self {
        Self::simulation()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControllerState {
    pub last_heading: Angle,
    pub filtered_force: Vec2,
    pub last_measurement_time: Option<f64>,
}

impl ControllerState {
    /// Fresh state heading along the path at `path_heading`.
    pub fn new(path_heading: f64) -> Self {
        Self {
            last_heading: Angle::new(path_heading),
            filtered_force: Vec2::ZERO,
            last_measurement_time: None,
        }
    }
}

/// Steering law used by [`control_tick_with`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SteeringLaw {
    /// Force feedback in contact, recovery steer otherwise.
    #[default]
    ForceFeedback,
    /// Always steer toward the path, ignoring the force direction.
    OpenLoop,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TickOptions {
    pub law: SteeringLaw,
    pub admittance: bool,
    /// Multiplier on the nominal speed, for acceleration ramps.
    pub speed_scale: f64,
}

impl Default for TickOptions {
    fn default() -> Self {
        Self {
            law: SteeringLaw::ForceFeedback,
            admittance: true,
            speed_scale: 1.0,
        }
    }
}

/// Exponential smoothing of the force measurement.
pub fn filter_force(state: &mut ControllerState, measured: Vec2, dt: f64, time_constant: f64) -> Vec2 {
    let beta = 1.0 - (-dt / time_constant).exp();
    state.filtered_force = measured * beta + state.filtered_force * (1.0 - beta);
    state.filtered_force
}

pub fn pushing_angle(
    frenet: &FrenetProjection,
    force: Vec2,
    force_gain: f64,
    offset_gain: f64,
) -> Result<Angle, ControllerError> {
    if force.norm() == 0.0 || !force.is_finite() {
        return Err(ControllerError::ZeroForce);
    }
    let heading = frenet.heading.radians();
    let force_error = force.angle().minus(frenet.heading).radians();
    Ok(Angle::new(
        heading + (force_gain + 1.0) * force_error + offset_gain * frenet.lateral_offset,
    ))
}

pub fn open_loop_angle(frenet: &FrenetProjection, offset_gain: f64) -> Angle {
    Angle::new(frenet.heading.radians() - offset_gain * frenet.lateral_offset)
}

fn recovery_angle(state: &ControllerState, target: Angle, max_turn: f64) -> Angle {
    let prev = state.last_heading;
    let turn = target.minus(prev).radians().clamp(-max_turn, max_turn);
    Angle::new(prev.radians() + turn)
}

/// Heading for this tick; updates the remembered heading.
pub fn combined_angle(
    state: &mut ControllerState,
    frenet: &FrenetProjection,
    force: Vec2,
    params: &ControllerParams,
) -> Angle {
    let heading = if force.norm() < params.force_min {
        recovery_angle(state, open_loop_angle(frenet, params.offset_gain), params.max_turn)
    } else {
        pushing_angle(frenet, force, params.force_gain, params.offset_gain).expect("force above threshold is nonzero")
    };
    state.last_heading = heading;
    heading
}

pub fn admittance_offset(force: Vec2, params: &ControllerParams) -> Vec2 {
    let magnitude = force.norm();
    if magnitude > params.force_max {
        force * (params.admittance_gain * (params.force_max - magnitude) / magnitude)
    } else {
        Vec2::ZERO
    }
}

/// Unit vector toward the nearest point of the most-violated nearby wall.
fn worst_wall(velocity: Vec2, position: Vec2, walls: &[Segment], threshold: f64) -> Option<Vec2> {
    let speed = velocity.norm();
    let mut worst: Option<(f64, Vec2)> = None;
    for wall in walls {
        let (p, _) = wall.closest_point(position);
        let offset = p - position;
        let distance = offset.norm();
        if distance >= threshold || distance == 0.0 {
            continue;
        }
        let toward = offset / distance;
        let approach = toward.dot(velocity) / speed;
        if approach > 0.0 && worst.is_none_or(|(a, _)| approach > a) {
            worst = Some((approach, toward));
        }
    }
    worst.map(|(_, n)| n)
}

/// Rotates `velocity` onto the wall tangent when it would approach a wall
/// closer than `threshold`.
pub fn avoid_obstacles_ee(velocity: Vec2, position: Vec2, walls: &[Segment], threshold: f64) -> Vec2 {
    let speed = velocity.norm();
    if speed == 0.0 {
        return velocity;
    }
    let mut v = velocity;
    for _ in 0..2 {
        let Some(toward) = worst_wall(v, position, walls, threshold) else {
            return v;
        };
        let tangent = toward.perp();
        let along = if tangent.dot(v) >= 0.0 { tangent } else { -tangent };
        v = along * speed;
    }
    if worst_wall(v, position, walls, threshold).is_some() {
        Vec2::ZERO
    } else {
        v
    }
}

/// One controller update with the default force-feedback law.
pub fn control_tick(
    state: &mut ControllerState,
    frenet: &FrenetProjection,
    measured: Vec2,
    dt: f64,
    params: &ControllerParams,
    ee_position: Vec2,
    walls: &[Segment],
) -> Vec2 {
    control_tick_with(
        state,
        frenet,
        measured,
        dt,
        params,
        ee_position,
        walls,
        &TickOptions::default(),
    )
}

#[allow(clippy::too_many_arguments)]
pub fn control_tick_with(
    state: &mut ControllerState,
    frenet: &FrenetProjection,
    measured: Vec2,
    dt: f64,
    params: &ControllerParams,
    ee_position: Vec2,
    walls: &[Segment],
    options: &TickOptions,
) -> Vec2 {
    let force = filter_force(state, measured, dt, params.filter_time_constant);
    let heading = match options.law {
        SteeringLaw::ForceFeedback => combined_angle(state, frenet, force, params),
        SteeringLaw::OpenLoop => {
            let a = open_loop_angle(frenet, params.offset_gain);
            state.last_heading = a;
            a
        }
    };
    let speed = params.speed * options.speed_scale;
    let v = heading.unit() * speed;
    command_from_heading(v, force, params, ee_position, walls, options.admittance, speed)
}

/// Obstacle deflection, admittance and magnitude clamp applied to a raw
/// end-effector velocity.
pub fn command_from_heading(
    velocity: Vec2,
    force: Vec2,
    params: &ControllerParams,
    ee_position: Vec2,
    walls: &[Segment],
    admittance: bool,
    speed: f64,
) -> Vec2 {
    let mut v = avoid_obstacles_ee(velocity, ee_position, walls, params.obstacle_distance);
    if admittance {
        v += admittance_offset(force, params);
    }
    let magnitude = v.norm();
    if magnitude > speed {
        v = v * (speed / magnitude);
    }
    v
}
