//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion.
//!
//! Criteria in `KNOWN_FAILING` are reproducible model limitations and still
//! print FAIL. The binary exits non-zero when any other criterion fails or
//! when a known failure starts passing, so the list cannot go stale.
//!
//! `ACCEPTANCE_JOBS` overrides the worker count (default: all cores).

use std::f64::consts::PI;
use std::time::Instant;

use nalgebra::{Matrix2x3, Vector2, Vector3};
use planar_push::controller::{
    admittance_offset, avoid_obstacles_ee, combined_angle, control_tick, filter_force, open_loop_angle, pushing_angle,
    ControllerParams, ControllerState,
};
use planar_push::engine::{limit_surface_for, ContactMode, PressureVariant, SliderModel};
use planar_push::geometry::{Angle, Pose2, Segment, Shape, Vec2};
use planar_push::harness::{
    build_scenarios, metrics_csv, oracle_check, run, run_sweep, HarnessConfig, RunOptions, RunSummary, Scenario,
    SliderKind, Strategy, SweepSelection,
};
use planar_push::ik::{contact_jacobian, solve_ik, RobotModel};
use planar_push::oracle::solve_contact;
use planar_push::path::FrenetProjection;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn report(id: u32, name: &str, started: Instant, outcome: &Outcome) {
    println!(
        "[{}] criterion {id}: {name}{}: {} ({:.1} s)",
        if outcome.pass { "PASS" } else { "FAIL" },
        if KNOWN_FAILING.contains(&id) { " (known)" } else { "" },
        outcome.detail,
        started.elapsed().as_secs_f64()
    );
}

fn jobs() -> usize {
    std::env::var("ACCEPTANCE_JOBS")
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn sweep(
    config: &HarnessConfig,
    slider: SliderKind,
    path: &str,
    walls: bool,
    options: &RunOptions,
    jobs: usize,
) -> Vec<RunSummary> {
    let scenarios = build_scenarios(config, &SweepSelection::new(&[slider], path, walls)).expect("grid builds");
    run_sweep(config, &scenarios, options, jobs, None).expect("sweep runs")
}

fn describe(r: &RunSummary) -> String {
    let s = &r.scenario;
    format!(
        "#{} {} dc={} a={} phi={:.3} mu={} {}",
        s.index,
        s.slider.name(),
        s.lateral_offset,
        s.contact_offset,
        s.orientation,
        s.contact_friction,
        s.pressure.name()
    )
}

fn failures_line(bad: &[&RunSummary]) -> String {
    let mut out: Vec<String> = bad.iter().take(6).map(|r| describe(r)).collect();
    if bad.len() > out.len() {
        out.push(format!("and {} more", bad.len() - out.len()));
    }
    out.join("; ")
}

struct Sweeps {
    straight: Vec<(SliderKind, Vec<RunSummary>)>,
    corner: Vec<(SliderKind, bool, Vec<RunSummary>)>,
}

fn straight_robustness(sweeps: &Sweeps) -> Outcome {
    let mut detail = Vec::new();
    let mut pass = true;
    for (kind, runs) in &sweeps.straight {
        let bad: Vec<&RunSummary> = runs
            .iter()
            .filter(|r| {
                !r.metrics.completed
                    || r.metrics.normalized_distance <= 0.5
                    || r.metrics.final_minute_mean_offset >= 0.2
            })
            .collect();
        pass &= bad.is_empty() && runs.len() == 243;
        let min_distance = runs
            .iter()
            .map(|r| r.metrics.normalized_distance)
            .fold(f64::INFINITY, f64::min);
        let worst = runs
            .iter()
            .map(|r| r.metrics.final_minute_mean_offset)
            .fold(0.0, f64::max);
        detail.push(format!(
            "{}: {}/{} ok, min distance {min_distance:.3}, worst final-minute offset {worst:.3} m{}",
            kind.name(),
            runs.len() - bad.len(),
            runs.len(),
            if bad.is_empty() {
                String::new()
            } else {
                format!(" [{}]", failures_line(&bad))
            }
        ));
    }
    Outcome {
        pass,
        detail: detail.join(" | "),
    }
}

fn corner_robustness(config: &HarnessConfig, sweeps: &Sweeps) -> Outcome {
    let corner = config
        .path("corner")
        .expect("corner path")
        .path()
        .expect("corner path builds");
    let exit_start = corner.segment_start(corner.segments().len() - 1);
    let mut pass = true;
    let mut detail = Vec::new();
    for (kind, walls, runs) in &sweeps.corner {
        let bad: Vec<&RunSummary> = runs
            .iter()
            .filter(|r| {
                let on_exit = r
                    .track
                    .points
                    .last()
                    .is_some_and(|p| corner.project(*p).arc_length >= exit_start);
                !r.metrics.completed || !on_exit || r.metrics.final_lateral_offset.abs() >= 0.3
            })
            .collect();
        pass &= bad.is_empty() && runs.len() == 243;
        let worst = runs
            .iter()
            .map(|r| r.metrics.final_lateral_offset.abs())
            .fold(0.0, f64::max);
        detail.push(format!(
            "{}{}: {}/{} ok, worst final offset {worst:.3} m{}",
            kind.name(),
            if *walls { "+walls" } else { "" },
            runs.len() - bad.len(),
            runs.len(),
            if bad.is_empty() {
                String::new()
            } else {
                format!(" [{}]", failures_line(&bad))
            }
        ));
    }
    Outcome {
        pass,
        detail: detail.join(" | "),
    }
}

fn open_loop_failure(config: &HarnessConfig, sweeps: &Sweeps, jobs: usize) -> Outcome {
    let closed: &[RunSummary] = &sweeps
        .straight
        .iter()
        .find(|(k, _)| *k == SliderKind::Box)
        .expect("box straight sweep")
        .1;
    let subset: Vec<Scenario> = closed
        .iter()
        .map(|r| r.scenario.clone())
        .filter(|s| s.contact_friction == 0.0 && (s.orientation != 0.0 || s.lateral_offset != 0.0))
        .collect();
    let options = RunOptions {
        strategy: Strategy::OpenLoop,
        ..RunOptions::default()
    };
    let open = run_sweep(config, &subset, &options, jobs, None).expect("open-loop sweep runs");
    let mut bad = Vec::new();
    let mut worst_open: f64 = 0.0;
    let mut least_closed = f64::INFINITY;
    for o in &open {
        let c = closed
            .iter()
            .find(|c| c.scenario.index == o.scenario.index)
            .expect("matching closed-loop run");
        let lost = o.metrics.contact_lost_at;
        worst_open = worst_open.max(lost.unwrap_or(f64::INFINITY));
        least_closed = least_closed.min(c.metrics.progress);
        if !lost.is_some_and(|p| p < 3.0) || !(c.metrics.completed && c.metrics.progress >= 6.0) {
            bad.push(o);
        }
    }
    Outcome {
        pass: bad.is_empty() && !open.is_empty(),
        detail: format!(
            "{} scenarios, open loop loses contact by {worst_open:.2} m at worst, closed loop progresses at least {least_closed:.2} m{}",
            open.len(),
            if bad.is_empty() { String::new() } else { format!(" [{}]", failures_line(&bad)) }
        ),
    }
}

fn admittance_capping(config: &HarnessConfig) -> Outcome {
    let scenario = build_scenarios(config, &SweepSelection::new(&[SliderKind::Box], "corner", true))
        .expect("grid builds")
        .into_iter()
        .find(|s| {
            s.lateral_offset == 0.0
                && s.contact_offset == 0.0
                && s.orientation == 0.0
                && s.contact_friction == 0.5
                && s.pressure == PressureVariant::Uniform
        })
        .expect("nominal corner scenario in grid");
    let with = run(&scenario, config, &RunOptions::default()).expect("run");
    let without = run(
        &scenario,
        config,
        &RunOptions {
            admittance: false,
            ..RunOptions::default()
        },
    )
    .expect("run");
    Outcome {
        pass: with.peak_force < 150.0 && without.peak_force > 150.0,
        detail: format!(
            "peak force {:.1} N with admittance, {:.1} N without",
            with.peak_force, without.peak_force
        ),
    }
}

fn angle_deg(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    (dot / (na * nb)).clamp(-1.0, 1.0).acos().to_degrees()
}

/// Pusher force on the slider found by scanning the friction cone: the
/// sticking force is the cone direction whose quasistatic response leaves no
/// tangential slip, otherwise the edge whose friction agrees with the slip.
fn cone_scan(slider: &SliderModel, point: Vec2, normal: Vec2, velocity: Vec2, samples: usize) -> (bool, Vec2) {
    let ls = &slider.limit_surface;
    let lever = point - slider.com_offset;
    let response = |f: Vec2| {
        let tau = lever.cross(f);
        let omega = tau / (ls.torque_max * ls.torque_max);
        f / (ls.force_max * ls.force_max) + lever.perp() * omega
    };
    let tangent = normal.perp();
    let half = slider.contact_friction.atan();
    let slip_of = |angle: f64| {
        let f = normal.rotate(angle);
        let v = response(f);
        let approach = normal.dot(v);
        if approach <= 0.0 {
            return (f, f64::NAN);
        }
        (f, tangent.dot(velocity - v * (normal.dot(velocity) / approach)))
    };
    let mut best = (f64::INFINITY, Vec2::ZERO);
    let mut signs = (false, false);
    for k in 0..samples {
        let angle = if samples == 1 {
            0.0
        } else {
            -half + 2.0 * half * k as f64 / (samples - 1) as f64
        };
        let (f, slip) = slip_of(angle);
        if slip.is_nan() {
            continue;
        }
        signs.0 |= slip >= 0.0;
        signs.1 |= slip <= 0.0;
        if slip.abs() < best.0 {
            best = (slip.abs(), f);
        }
    }
    if half > 0.0 && signs.0 && signs.1 {
        return (true, best.1);
    }
    let (f_plus, slip_plus) = slip_of(half);
    let (f_minus, _) = slip_of(-half);
    (false, if slip_plus >= 0.0 { f_plus } else { f_minus })
}

fn oracle_equivalence(config: &HarnessConfig) -> Outcome {
    let engine = oracle_check(config, 300, 11, 2.0);
    let agreement = engine.mode_agreement();
    let (twist_deg, force_deg) = engine.worst_angles_deg();
    let engine_ok = engine.cases.len() >= 200 && agreement >= 0.98 && twist_deg <= 5.0 && force_deg <= 5.0;

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let square = Shape::square(1.0).expect("square");
    let disk = Shape::disk(0.5).expect("disk");
    let mut worst_force: f64 = 0.0;
    let mut worst_twist: f64 = 0.0;
    let mut mode_matches = 0;
    let instances = 500;
    for i in 0..instances {
        let pressure = PressureVariant::ALL[rng.gen_range(0..3)];
        let mu = if i % 10 == 0 { 0.0 } else { rng.gen_range(0.0..1.2) };
        let (shape, point, normal) = if i % 2 == 0 {
            let y = rng.gen_range(-0.45..0.45);
            (square.clone(), Vec2::new(-0.5, y), Vec2::new(1.0, 0.0))
        } else {
            let a = rng.gen_range(-PI..PI);
            (disk.clone(), Vec2::from_angle(a) * 0.5, -Vec2::from_angle(a))
        };
        let ls = limit_surface_for(&shape, 1.0, 0.25, pressure).expect("limit surface");
        let com = Vec2::new(rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1));
        let slider = SliderModel::new(shape, 1.0, com, mu, ls).expect("slider");
        let velocity = normal.rotate(rng.gen_range(-1.4..1.4)) * 0.1;
        let exact = solve_contact(&slider, point, normal, velocity, 0.1);
        let (stick, force) = cone_scan(&slider, point, normal, velocity, 100_000);
        if stick == (exact.mode == ContactMode::Stick) {
            mode_matches += 1;
        }
        worst_force = worst_force.max(angle_deg(&[force.x, force.y], &[exact.force.x, exact.force.y]));
        let lever = point - com;
        let c = slider.limit_surface.torque_max / slider.limit_surface.force_max;
        let t_scan = [force.x, force.y, lever.cross(force) / c];
        let t_exact = [exact.twist.v.x, exact.twist.v.y, exact.twist.omega * c];
        worst_twist = worst_twist.max(angle_deg(&t_scan, &t_exact));
    }
    let scan_ok = worst_force <= 0.5 && worst_twist <= 0.5;
    Outcome {
        pass: engine_ok && scan_ok,
        detail: format!(
            "engine vs analytic: {} cases, mode agreement {:.2}%, worst twist {twist_deg:.3} deg, force {force_deg:.3} deg | \
             analytic vs cone scan: {instances} instances, worst force {worst_force:.4} deg, twist {worst_twist:.4} deg, modes {mode_matches}/{instances}",
            engine.cases.len(),
            100.0 * agreement
        ),
    }
}

fn frenet(heading: f64, offset: f64) -> FrenetProjection {
    FrenetProjection {
        closest_point: Vec2::ZERO,
        arc_length: 0.0,
        heading: Angle::new(heading),
        lateral_offset: offset,
    }
}

fn controller_formulas() -> Outcome {
    let p = ControllerParams::simulation();
    let mut errors: Vec<(&str, f64)> = Vec::new();

    let mut s = ControllerState::new(0.0);
    let f = filter_force(&mut s, Vec2::new(1.0, 0.0), 0.01, 0.05);
    errors.push(("filter", (f.x - (1.0 - (-0.2f64).exp())).abs() + f.y.abs()));
    s.filtered_force = Vec2::new(2.0, 3.0);
    errors.push((
        "filter fixed point",
        (filter_force(&mut s, Vec2::new(2.0, 3.0), 0.01, 0.05) - Vec2::new(2.0, 3.0)).norm(),
    ));

    let a =
        pushing_angle(&frenet(0.0, -0.1), Vec2::from_angle(0.2), p.force_gain, p.offset_gain).expect("nonzero force");
    errors.push(("pushing angle", (a.radians() - 0.25).abs()));
    let a =
        pushing_angle(&frenet(PI / 2.0, 0.4), Vec2::new(0.0, 1.0), p.force_gain, p.offset_gain).expect("nonzero force");
    errors.push(("pushing angle rotated", (a.radians() - (PI / 2.0 + 0.04)).abs()));
    errors.push((
        "open loop",
        (open_loop_angle(&frenet(0.0, 0.5), p.offset_gain).radians() + 0.05).abs(),
    ));
    errors.push((
        "open loop mirrored",
        (open_loop_angle(&frenet(0.0, -0.5), p.offset_gain).radians() - 0.05).abs(),
    ));

    let mut s = ControllerState::new(0.5);
    let a = combined_angle(&mut s, &frenet(0.0, 0.0), Vec2::new(0.5, 0.0), &p);
    errors.push(("recovery", (a.radians() - 0.4).abs()));

    errors.push((
        "admittance",
        (admittance_offset(Vec2::new(60.0, 0.0), &p) - Vec2::new(-0.03, 0.0)).norm(),
    ));
    errors.push((
        "admittance sideways",
        (admittance_offset(Vec2::new(0.0, 80.0), &p) - Vec2::new(0.0, -0.09)).norm(),
    ));
    errors.push((
        "admittance boundary",
        admittance_offset(Vec2::new(50.0, 0.0), &p).norm(),
    ));

    let wall = [Segment::new(Vec2::new(0.05, -5.0), Vec2::new(0.05, 5.0)).expect("wall")];
    let v = avoid_obstacles_ee(Vec2::new(0.1, 0.02), Vec2::ZERO, &wall, p.obstacle_distance);
    errors.push((
        "obstacle rotation",
        (v - Vec2::new(0.0, (0.1f64.powi(2) + 0.02f64.powi(2)).sqrt())).norm(),
    ));
    let v = avoid_obstacles_ee(Vec2::new(0.1, 0.0), Vec2::ZERO, &wall, p.obstacle_distance);
    errors.push(("obstacle head-on", (v - Vec2::new(0.0, 0.1)).norm()));

    let mut s = ControllerState::new(0.0);
    s.filtered_force = Vec2::new(60.0, 0.0);
    let v = control_tick(
        &mut s,
        &frenet(0.0, 0.0),
        Vec2::new(60.0, 0.0),
        0.01,
        &p,
        Vec2::ZERO,
        &[],
    );
    errors.push(("tick with admittance", (v - Vec2::new(0.07, 0.0)).norm()));

    let (worst_name, worst) = errors
        .iter()
        .copied()
        .fold(("", 0.0), |a, b| if b.1 > a.1 { b } else { a });

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_turn: f64 = 0.0;
    let mut recovery_ticks = 0;
    for _ in 0..2000 {
        let mut s = ControllerState::new(rng.gen_range(-PI..PI));
        for _ in 0..50 {
            let force = Vec2::from_angle(rng.gen_range(-PI..PI)) * rng.gen_range(0.0..0.999);
            let before = s.last_heading;
            let after = combined_angle(
                &mut s,
                &frenet(rng.gen_range(-PI..PI), rng.gen_range(-3.0..3.0)),
                force,
                &p,
            );
            worst_turn = worst_turn.max(after.minus(before).radians().abs());
            recovery_ticks += 1;
        }
    }
    Outcome {
        pass: worst <= 1e-12 && worst_turn <= p.max_turn + 1e-12,
        detail: format!(
            "{} examples, worst error {worst:.1e}{}; {recovery_ticks} recovery ticks, largest turn {worst_turn:.6} rad",
            errors.len(),
            if worst > 0.0 {
                format!(" ({worst_name})")
            } else {
                String::new()
            }
        ),
    }
}

/// Best objective among random points on the line of exact contact-velocity
/// solutions that satisfy every inequality.
fn sampled_ik_optimum(
    jac: &Matrix2x3<f64>,
    velocity: Vec2,
    target: Vector3<f64>,
    limits: [f64; 3],
    normals: &[Vec2],
    rng: &mut ChaCha8Rng,
) -> Option<f64> {
    let jjt = jac * jac.transpose();
    let particular = jac.transpose() * jjt.try_inverse()? * Vector2::new(velocity.x, velocity.y);
    let r0 = jac.row(0).transpose();
    let r1 = jac.row(1).transpose();
    let null = r0.cross(&r1).normalize();
    let reach = 3.0 * (limits[0] + limits[1] + limits[2]) + particular.norm();
    let feasible = |x: &Vector3<f64>| {
        (0..3).all(|k| x[k].abs() <= limits[k]) && normals.iter().all(|n| n.x * x[0] + n.y * x[1] <= 0.0)
    };
    let mut best: Option<f64> = None;
    for _ in 0..100_000 {
        let x = particular + null * rng.gen_range(-reach..reach);
        if feasible(&x) {
            let value = 0.5 * (x - target).norm_squared();
            best = Some(best.map_or(value, |b: f64| b.min(value)));
        }
    }
    best
}

fn qp_optimality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst_analytic: f64 = 0.0;
    for _ in 0..500 {
        let base = Pose2::new(
            Vec2::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)),
            rng.gen_range(-PI..PI),
        );
        let model = RobotModel {
            contact_offset: Vec2::new(rng.gen_range(0.3..1.0), rng.gen_range(-0.3..0.3)),
            velocity_limits: [100.0; 3],
            ..RobotModel::default()
        };
        let velocity = Vec2::new(rng.gen_range(-0.2..0.2), rng.gen_range(-0.2..0.2));
        let heading = Angle::new(rng.gen_range(-PI..PI));
        let r = solve_ik(&base, velocity, heading, &model, &[]);
        let jac = contact_jacobian(&base, model.contact_offset);
        let target = Vector3::new(0.0, 0.0, model.heading_gain * heading.minus(base.orientation).radians());
        let expect = target
            + jac.transpose()
                * (jac * jac.transpose()).try_inverse().expect("full rank")
                * (Vector2::new(velocity.x, velocity.y) - jac * target);
        let err = if r.feasible && r.active_constraints.is_empty() {
            (Vector3::from(r.twist) - expect).norm()
        } else {
            f64::INFINITY
        };
        worst_analytic = worst_analytic.max(err);
    }

    let mut worst_gap = f64::NEG_INFINITY;
    let mut with_obstacles = 0;
    let mut compared = 0;
    let mut missed = 0;
    for i in 0..500 {
        let base = Pose2::new(Vec2::ZERO, rng.gen_range(-PI..PI));
        let model = RobotModel::default();
        let velocity = Vec2::from_angle(rng.gen_range(-PI..PI)) * rng.gen_range(0.0..0.45);
        let heading = Angle::new(rng.gen_range(-PI..PI));
        let normals: Vec<Vec2> = (0..(i % 3)).map(|_| Vec2::from_angle(rng.gen_range(-PI..PI))).collect();
        with_obstacles += usize::from(!normals.is_empty());
        let r = solve_ik(&base, velocity, heading, &model, &normals);
        let jac = contact_jacobian(&base, model.contact_offset);
        let target = Vector3::new(0.0, 0.0, model.heading_gain * heading.minus(base.orientation).radians());
        let Some(sampled) = sampled_ik_optimum(&jac, velocity, target, model.velocity_limits, &normals, &mut rng)
        else {
            continue;
        };
        compared += 1;
        if !r.feasible {
            missed += 1;
            continue;
        }
        worst_gap = worst_gap.max(r.objective_value - sampled);
    }
    Outcome {
        pass: worst_analytic <= 1e-10 && worst_gap <= 1e-6 && missed == 0 && compared >= 100,
        detail: format!(
            "unconstrained: worst error {worst_analytic:.1e} over 500 | sampled: {compared} feasible of 500 ({with_obstacles} with obstacle rows), \
             worst excess over sampled optimum {worst_gap:.1e}, infeasible reports {missed}"
        ),
    }
}

fn invariants_and_determinism(config: &HarnessConfig, sweeps: &Sweeps, jobs: usize) -> Outcome {
    let all: Vec<&RunSummary> = sweeps
        .straight
        .iter()
        .flat_map(|(_, r)| r.iter())
        .chain(sweeps.corner.iter().flat_map(|(_, _, r)| r.iter()))
        .collect();
    let steps: u64 = all.iter().map(|r| r.invariants.steps).sum();
    let rest = all.iter().map(|r| r.invariants.rest_violations).sum::<u64>();
    let flow = all.iter().map(|r| r.invariants.max_flow_error).fold(0.0, f64::max);
    let cone = all
        .iter()
        .map(|r| r.invariants.max_cone_excess)
        .fold(f64::NEG_INFINITY, f64::max);
    let power = all.iter().map(|r| r.invariants.min_power).fold(f64::INFINITY, f64::min);
    let invariants_ok = rest == 0 && flow <= 1e-9 && cone <= 1e-9 && power >= 0.0;

    let box_straight = &sweeps
        .straight
        .iter()
        .find(|(k, _)| *k == SliderKind::Box)
        .expect("box sweep")
        .1;
    let first = metrics_csv(box_straight);
    let again = metrics_csv(&sweep(
        config,
        SliderKind::Box,
        "straight",
        false,
        &RunOptions::default(),
        jobs + 1,
    ));
    let identical = first == again;
    Outcome {
        pass: invariants_ok && identical,
        detail: format!(
            "{} runs, {steps} steps: rest violations {rest}, flow error {flow:.1e}, cone excess {cone:.1e}, min power {power:.1e} | \
             CSV with {jobs} vs {} workers {}",
            all.len(),
            jobs + 1,
            if identical { "byte-identical" } else { "DIFFERS" }
        ),
    }
}

const KNOWN_FAILING: &[u32] = &[1, 2, 3];

fn main() {
    let config = HarnessConfig::default();
    let jobs = jobs();
    let total = Instant::now();
    let mut failed = 0;
    let mut unexpected = Vec::new();
    let mut record = |id, name, started, outcome: Outcome| {
        report(id, name, started, &outcome);
        failed += u32::from(!outcome.pass);
        if outcome.pass == KNOWN_FAILING.contains(&id) {
            unexpected.push(id);
        }
    };

    let start = Instant::now();
    record(6, "controller formulas", start, controller_formulas());
    let start = Instant::now();
    record(7, "inverse kinematics QP optimality", start, qp_optimality());
    let start = Instant::now();
    record(5, "contact model equivalence", start, oracle_equivalence(&config));
    let start = Instant::now();
    record(4, "admittance force capping", start, admittance_capping(&config));

    let start = Instant::now();
    let closed = RunOptions::default();
    let mut sweeps = Sweeps {
        straight: Vec::new(),
        corner: Vec::new(),
    };
    for kind in SliderKind::ALL {
        sweeps
            .straight
            .push((kind, sweep(&config, kind, "straight", false, &closed, jobs)));
    }
    record(1, "straight path robustness", start, straight_robustness(&sweeps));
    let start = Instant::now();
    for kind in SliderKind::ALL {
        for walls in [false, true] {
            sweeps
                .corner
                .push((kind, walls, sweep(&config, kind, "corner", walls, &closed, jobs)));
        }
    }
    record(2, "corner path robustness", start, corner_robustness(&config, &sweeps));
    let start = Instant::now();
    record(
        3,
        "open-loop baseline failure",
        start,
        open_loop_failure(&config, &sweeps, jobs),
    );
    let start = Instant::now();
    record(
        8,
        "invariants and determinism",
        start,
        invariants_and_determinism(&config, &sweeps, jobs),
    );

    println!(
        "acceptance: {} of 8 criteria passed in {:.0} s",
        8 - failed,
        total.elapsed().as_secs_f64()
    );
    println!("known failing: {KNOWN_FAILING:?}");
    if !unexpected.is_empty() {
        println!("unexpected outcome for criteria {unexpected:?}");
        std::process::exit(1);
    }
}
