use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::HarnessConfig;
use super::metrics::Metrics;
use super::output::{trace_file_name, write_tables_and_plots, write_trace, PlotTrack};
use super::scenario::Scenario;
use super::sim::{run, InvariantReport, RunOptions, RunRecord};
use super::HarnessError;
use crate::engine::{
    limit_surface_for, step_in_place, ContactMode, PressureVariant, SliderModel, WorldState, PUSHER_RADIUS,
};
use crate::geometry::{contact_offset_to_point, Pose2, Shape, Vec2};
use crate::oracle::solve_contact;

/// What a sweep keeps of each run once its trace has been written out.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub scenario: Scenario,
    pub options: RunOptions,
    pub metrics: Metrics,
    pub invariants: InvariantReport,
    pub abort: Option<String>,
    pub track: PlotTrack,
}

impl RunSummary {
    pub fn from_record(record: &RunRecord, stride: usize) -> Self {
        let stride = stride.max(1);
        let mut points: Vec<Vec2> = record.trace.iter().step_by(stride).map(|s| s.slider.position).collect();
        if let Some(last) = record.trace.last() {
            if record.trace.len() % stride != 1 || stride == 1 {
                points.push(last.slider.position);
            }
        }
        points.dedup();
        let max_arc_length = record.trace.iter().map(|s| s.arc_length).fold(0.0, f64::max);
        Self {
            scenario: record.scenario.clone(),
            options: record.options,
            metrics: record.metrics.clone(),
            invariants: record.invariants.clone(),
            abort: record.abort.clone(),
            track: PlotTrack {
                points,
                worst: (record.metrics.max_deviation_point, record.metrics.max_deviation),
                max_arc_length,
            },
        }
    }
}

/// Runs every scenario on a pool of `jobs` workers. Results come back in
/// scenario order regardless of scheduling; traces are written to
/// `trace_dir` as they finish.
pub fn run_sweep(
    config: &HarnessConfig,
    scenarios: &[Scenario],
    options: &RunOptions,
    jobs: usize,
    trace_dir: Option<&Path>,
) -> Result<Vec<RunSummary>, HarnessError> {
    if let Some(dir) = trace_dir {
        std::fs::create_dir_all(dir).map_err(|source| HarnessError::Io {
            path: dir.to_owned(),
            source,
        })?;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| HarnessError::Pool(e.to_string()))?;
    pool.install(|| {
        scenarios
            .par_iter()
            .map(|scenario| {
                let record = run(scenario, config, options)?;
                if let Some(dir) = trace_dir {
                    write_trace(
                        &dir.join(trace_file_name(scenario.index, options.strategy.name())),
                        &record.trace,
                    )?;
                }
                Ok(RunSummary::from_record(&record, config.run.plot_stride))
            })
            .collect()
    })
}

/// Writes `metrics.csv` and the trajectory plots for a finished sweep.
pub fn write_sweep_outputs(
    runs: &[RunSummary],
    config: &HarnessConfig,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, HarnessError> {
    write_tables_and_plots(runs, config, out_dir)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleCase {
    pub contact_offset: f64,
    pub orientation: f64,
    pub contact_friction: f64,
    pub push_angle: f64,
    pub pressure: PressureVariant,
    pub engine_mode: ContactMode,
    pub oracle_mode: ContactMode,
    pub twist_angle_deg: f64,
    pub force_angle_deg: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleCheckReport {
    pub cases: Vec<OracleCase>,
    /// Draws discarded because the push ran off the face or lost contact.
    pub rejected: usize,
}

impl OracleCheckReport {
    pub fn mode_agreement(&self) -> f64 {
        let agree = self.cases.iter().filter(|c| c.engine_mode == c.oracle_mode).count();
        agree as f64 / self.cases.len().max(1) as f64
    }

    /// Worst twist and force direction errors over cases whose modes agree.
    pub fn worst_angles_deg(&self) -> (f64, f64) {
        self.cases
            .iter()
            .filter(|c| c.engine_mode == c.oracle_mode)
            .fold((0.0, 0.0), |(t, f), c| {
                (t.max(c.twist_angle_deg), f.max(c.force_angle_deg))
            })
    }
}

fn angle_between(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    (dot / (na * nb)).clamp(-1.0, 1.0).acos().to_degrees()
}

/// Pushes a unit box in free space for `push_time` seconds from random
/// initial conditions and compares the final engine step with the analytic
/// single-contact solution.
pub fn oracle_check(config: &HarnessConfig, samples: usize, seed: u64, push_time: f64) -> OracleCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let contact = config.engine.contact_params();
    let dt = config.engine.dt;
    let speed = config.controller.speed;
    let shape = Shape::square(1.0).expect("unit square");
    let steps = (push_time / dt).round() as usize;
    let mut cases = Vec::with_capacity(samples);
    let mut rejected = 0;
    while cases.len() < samples && rejected < 50 * samples.max(1) {
        let alpha = rng.gen_range(-0.35..0.35);
        let orientation = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
        let mu = rng.gen_range(0.0..1.0);
        let push_angle = rng.gen_range(-0.6..0.6);
        let pressure = PressureVariant::ALL[rng.gen_range(0..3)];
        let ls =
            limit_surface_for(&shape, 1.0, config.engine.support_friction, pressure).expect("square limit surface");
        let slider = SliderModel::new(shape.clone(), 1.0, Vec2::ZERO, mu, ls).expect("valid slider");

        let pose = Pose2::new(Vec2::ZERO, orientation);
        let (p, n) = contact_offset_to_point(&shape, alpha).expect("offset on the face");
        let pusher = pose.transform_point(p) + pose.transform_vector(n) * PUSHER_RADIUS;
        let velocity = pose.transform_vector((-n).rotate(push_angle)) * speed;
        let mut world = WorldState::new(pose, pusher, Vec::new());
        let mut last = None;
        for _ in 0..steps {
            match step_in_place(&mut world, &slider, &contact, velocity, dt) {
                Ok(r) => last = Some(r),
                Err(_) => {
                    last = None;
                    break;
                }
            }
        }
        let Some(report) = last else {
            rejected += 1;
            continue;
        };
        let body_contact = world.slider_pose.inverse_transform_point(report.pusher_contact_point);
        if report.mode == ContactMode::Separate || body_contact.y.abs() > 0.45 || body_contact.x > -0.45 {
            rejected += 1;
            continue;
        }
        let inward = world.slider_pose.inverse_transform_vector(report.pusher_normal);
        let body_velocity = world.slider_pose.inverse_transform_vector(velocity);
        let expected = solve_contact(&slider, body_contact, inward, body_velocity, speed);
        let aspect = slider.limit_surface.torque_max / slider.limit_surface.force_max;
        let v = world.slider_pose.inverse_transform_vector(report.twist.v);
        let twist_angle_deg = angle_between(
            &[v.x, v.y, report.twist.omega * aspect],
            &[expected.twist.v.x, expected.twist.v.y, expected.twist.omega * aspect],
        );
        let f = world.slider_pose.inverse_transform_vector(report.pusher_force);
        let force_angle_deg = angle_between(&[f.x, f.y], &[expected.force.x, expected.force.y]);
        cases.push(OracleCase {
            contact_offset: alpha,
            orientation,
            contact_friction: mu,
            push_angle,
            pressure,
            engine_mode: report.mode,
            oracle_mode: expected.mode,
            twist_angle_deg,
            force_angle_deg,
        });
    }
    OracleCheckReport { cases, rejected }
}
