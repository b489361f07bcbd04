use serde::{Deserialize, Serialize};

use super::config::HarnessConfig;
use super::metrics::{compute_metrics, Metrics};
use super::scenario::{initial_world, Scenario, Setup};
use super::HarnessError;
use crate::controller::{combined_angle, command_from_heading, filter_force, open_loop_angle, ControllerState};
use crate::engine::{step_in_place, ContactMode, SliderModel, StepReport};
use crate::geometry::{Pose2, Vec2};
use crate::ik::{base_obstacle_normals, solve_ik};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    /// The pusher follows the commanded velocity exactly.
    #[default]
    KinematicPusher,
    /// The command goes through the base inverse kinematics.
    MobileBase,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Force-feedback pushing with contact recovery.
    #[default]
    ClosedLoop,
    /// Steer toward the path regardless of the measured force.
    OpenLoop,
    /// Vision-style dipole field around the slider position.
    Dipole,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::ClosedLoop => "closed_loop",
            Strategy::OpenLoop => "open_loop",
            Strategy::Dipole => "dipole",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub mode: RunMode,
    pub strategy: Strategy,
    pub admittance: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            mode: RunMode::KinematicPusher,
            strategy: Strategy::ClosedLoop,
            admittance: true,
        }
    }
}

/// State recorded at the end of each control interval.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceSample {
    pub t: f64,
    pub slider: Pose2,
    pub pusher: Vec2,
    /// Slider boundary point touching the pusher, if in contact.
    pub contact: Option<Vec2>,
    pub force: Vec2,
    pub filtered_force: Vec2,
    /// Commanded end-effector heading for the interval.
    pub ee_heading: f64,
    pub mode: ContactMode,
    /// Path arc length and signed offset of the slider position.
    pub arc_length: f64,
    pub lateral_offset: f64,
    pub contact_lateral_offset: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<Pose2>,
}

/// Engine-level invariants accumulated over a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvariantReport {
    pub steps: u64,
    pub moving_steps: u64,
    /// Steps or intervals where the slider moved without pusher force.
    pub rest_violations: u64,
    /// Largest deviation of the twist direction from the flow rule.
    pub max_flow_error: f64,
    /// Largest excess of pusher tangential force over the friction bound.
    pub max_cone_excess: f64,
    /// Smallest power of the contact wrench on the slider twist.
    pub min_power: f64,
    /// Largest |H - 1| while moving.
    pub max_limit_residual: f64,
    pub unconverged_steps: u64,
}

impl Default for InvariantReport {
    fn default() -> Self {
        Self {
            steps: 0,
            moving_steps: 0,
            rest_violations: 0,
            max_flow_error: 0.0,
            max_cone_excess: f64::NEG_INFINITY,
            min_power: f64::INFINITY,
            max_limit_residual: 0.0,
            unconverged_steps: 0,
        }
    }
}

impl InvariantReport {
    fn observe(&mut self, slider: &SliderModel, r: &StepReport) {
        self.steps += 1;
        if !r.converged {
            self.unconverged_steps += 1;
        }
        let excess = r.pusher_tangential_force.abs() - slider.contact_friction * r.pusher_normal_force;
        self.max_cone_excess = self.max_cone_excess.max(excess);
        if r.twist.is_zero() {
            return;
        }
        self.moving_steps += 1;
        if r.pusher_normal_force <= 0.0 {
            self.rest_violations += 1;
        }
        let ls = &slider.limit_surface;
        let flow = ls.flow(&r.wrench).as_array();
        let twist = r.twist.as_array();
        let unit = |v: [f64; 3]| {
            let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            [v[0] / n, v[1] / n, v[2] / n]
        };
        let (a, b) = (unit(flow), unit(twist));
        let err = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt();
        self.max_flow_error = self.max_flow_error.max(err);
        self.min_power = self.min_power.min(r.wrench.power(&r.twist));
        self.max_limit_residual = self.max_limit_residual.max((ls.evaluate(&r.wrench) - 1.0).abs());
    }

    pub fn merge(&mut self, other: &InvariantReport) {
        self.steps += other.steps;
        self.moving_steps += other.moving_steps;
        self.rest_violations += other.rest_violations;
        self.max_flow_error = self.max_flow_error.max(other.max_flow_error);
        self.max_cone_excess = self.max_cone_excess.max(other.max_cone_excess);
        self.min_power = self.min_power.min(other.min_power);
        self.max_limit_residual = self.max_limit_residual.max(other.max_limit_residual);
        self.unconverged_steps += other.unconverged_steps;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub scenario: Scenario,
    pub options: RunOptions,
    pub trace: Vec<TraceSample>,
    pub metrics: Metrics,
    pub invariants: InvariantReport,
    /// Largest pusher force over all engine steps.
    pub peak_force: f64,
    /// Set when the run stopped early because contact was lost.
    pub stopped_early: bool,
    /// Engine diagnostic if the run was aborted.
    pub abort: Option<String>,
    pub nominal_speed: f64,
    pub force_threshold: f64,
}

pub fn run_closed_loop(scenario: &Scenario, config: &HarnessConfig, mode: RunMode) -> Result<RunRecord, HarnessError> {
    run(
        scenario,
        config,
        &RunOptions {
            mode,
            ..RunOptions::default()
        },
    )
}

pub fn run_open_loop_baseline(scenario: &Scenario, config: &HarnessConfig) -> Result<RunRecord, HarnessError> {
    run(
        scenario,
        config,
        &RunOptions {
            strategy: Strategy::OpenLoop,
            ..RunOptions::default()
        },
    )
}

pub fn run_dipole_baseline(scenario: &Scenario, config: &HarnessConfig) -> Result<RunRecord, HarnessError> {
    run(
        scenario,
        config,
        &RunOptions {
            strategy: Strategy::Dipole,
            ..RunOptions::default()
        },
    )
}

/// Pushing direction of the dipole field for an end effector at `ee`.
pub(crate) fn dipole_direction(slider: Vec2, goal: Vec2, ee: Vec2) -> Option<Vec2> {
    let m = (goal - slider).try_normalize()?;
    let r = (ee - slider).try_normalize()?;
    (r * (2.0 * m.dot(r)) - m).try_normalize()
}

/// Simulates one scenario. Placement problems are errors; engine failures
/// end the run and are reported in [`RunRecord::abort`] with the partial trace.
pub fn run(scenario: &Scenario, config: &HarnessConfig, options: &RunOptions) -> Result<RunRecord, HarnessError> {
    let Setup {
        slider,
        path,
        walls,
        mut world,
    } = initial_world(scenario, config)?;
    let params = &config.controller;
    let contact = config.engine.contact_params();
    let dt = config.engine.dt;
    let substeps = config.engine.substeps();
    let period = dt * substeps as f64;
    let ticks = (scenario.duration / period).round() as usize;
    let robot = &config.robot;

    let mut controller = ControllerState::new(path.project(world.pusher_position).heading.radians());
    let mut base = match options.mode {
        RunMode::KinematicPusher => None,
        RunMode::MobileBase => {
            let heading = controller.last_heading.radians();
            let mut pose = Pose2::new(Vec2::ZERO, heading);
            pose.position = world.pusher_position - pose.transform_vector(robot.contact_offset);
            Some(pose)
        }
    };

    let mut trace = Vec::with_capacity(ticks);
    let mut invariants = InvariantReport::default();
    let mut peak_force: f64 = 0.0;
    let mut abort = None;
    let mut stopped_early = false;
    let mut touched = false;
    let mut lost_since: Option<f64> = Some(0.0);

    'ticks: for tick in 0..ticks {
        let t = tick as f64 * period;
        let ee = world.pusher_position;
        let frenet = path.project(ee);
        let force = filter_force(
            &mut controller,
            world.measured_force,
            period,
            params.filter_time_constant,
        );
        let speed_scale = match options.mode {
            RunMode::MobileBase if config.run.speed_ramp > 0.0 => ((t + period) / config.run.speed_ramp).min(1.0),
            _ => 1.0,
        };
        let speed = params.speed * speed_scale;
        let heading = match options.strategy {
            Strategy::ClosedLoop => combined_angle(&mut controller, &frenet, force, params),
            Strategy::OpenLoop => {
                let a = open_loop_angle(&frenet, params.offset_gain);
                controller.last_heading = a;
                a
            }
            Strategy::Dipole => {
                let position = world.slider_pose.position;
                let goal = path.point_ahead(path.project(position).arc_length, config.run.dipole_lookahead);
                match dipole_direction(position, goal, ee) {
                    Some(d) => d.angle(),
                    None => frenet.heading,
                }
            }
        };
        let command = command_from_heading(
            heading.unit() * speed,
            force,
            params,
            ee,
            &walls,
            options.admittance,
            speed,
        );

        let base_twist = base.map(|b| {
            let normals = base_obstacle_normals(&b, robot, &walls, params.obstacle_distance);
            solve_ik(&b, command, frenet.heading, robot, &normals).twist
        });

        let slider_before = world.slider_pose;
        let mut any_force = false;
        let mut mode = ContactMode::Separate;
        for _ in 0..substeps {
            let pusher_velocity = match (&mut base, base_twist) {
                (Some(b), Some(xi)) => {
                    let before = robot.contact_position(b);
                    b.position += Vec2::new(xi[0], xi[1]) * dt;
                    *b = Pose2::new(b.position, b.orientation.radians() + xi[2] * dt);
                    (robot.contact_position(b) - before) / dt
                }
                _ => command,
            };
            match step_in_place(&mut world, &slider, &contact, pusher_velocity, dt) {
                Ok(report) => {
                    invariants.observe(&slider, &report);
                    any_force |= report.pusher_normal_force > 0.0;
                    mode = report.mode;
                    peak_force = peak_force.max(report.pusher_force.norm());
                }
                Err(e) => {
                    abort = Some(e.to_string());
                    break 'ticks;
                }
            }
        }
        if !any_force && world.slider_pose != slider_before {
            invariants.rest_violations += 1;
        }

        let position = world.slider_pose.position;
        let projection = path.project(position);
        let cp = crate::geometry::closest_point_on_shape(&slider.shape, &world.slider_pose, world.pusher_position);
        let in_contact = cp.signed_distance < crate::engine::PUSHER_RADIUS;
        let contact_point = in_contact.then_some(cp.point);
        trace.push(TraceSample {
            t: (tick + 1) as f64 * period,
            slider: world.slider_pose,
            pusher: world.pusher_position,
            contact: contact_point,
            force: world.measured_force,
            filtered_force: controller.filtered_force,
            ee_heading: heading.radians(),
            mode,
            arc_length: projection.arc_length,
            lateral_offset: projection.lateral_offset,
            contact_lateral_offset: contact_point.map(|p| path.project(p).lateral_offset),
            base,
        });

        if options.strategy == Strategy::OpenLoop {
            let now = (tick + 1) as f64 * period;
            if controller.filtered_force.norm() >= params.force_min {
                touched = true;
                lost_since = None;
            } else if lost_since.is_none() {
                lost_since = Some(now);
            }
            if let Some(since) = lost_since {
                let timeout = config.run.contact_loss_timeout;
                if now - since > timeout && (touched || now > timeout) {
                    stopped_early = true;
                    break;
                }
            }
        }
    }

    let mut record = RunRecord {
        scenario: scenario.clone(),
        options: *options,
        trace,
        metrics: Metrics::default(),
        invariants,
        peak_force,
        stopped_early,
        abort,
        nominal_speed: params.speed,
        force_threshold: params.force_min,
    };
    record.metrics = compute_metrics(&record, config.run.contact_loss_timeout);
    Ok(record)
}
