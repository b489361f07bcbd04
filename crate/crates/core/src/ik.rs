//! Velocity-level inverse kinematics for an omnidirectional base carrying a
//! rigidly mounted pusher.
//!
//! The base twist is the minimizer of a small convex QP: track a heading
//! target while the contact point moves exactly at the commanded velocity,
//! within velocity limits and without approaching nearby walls. With three
//! unknowns the QP is solved exactly by enumerating active sets.

use nalgebra::{DMatrix, DVector, Matrix2x3, Vector3};
use serde::{Deserialize, Serialize};

use crate::geometry::{Angle, Pose2, Segment, Vec2};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobotModel {
    pub base_radius: f64,
    /// Pusher position in the base frame.
    pub contact_offset: Vec2,
    /// Limits on (vx, vy, omega).
    pub velocity_limits: [f64; 3],
    /// Gain turning heading error into a desired yaw rate, 1/s.
    pub heading_gain: f64,
}

impl Default for RobotModel {
    fn default() -> Self {
        Self {
            base_radius: 0.55,
            contact_offset: Vec2::new(0.7, 0.0),
            velocity_limits: [0.5, 0.5, 0.25],
            heading_gain: 1.0,
        }
    }
}

impl RobotModel {
    pub fn contact_position(&self, base: &Pose2) -> Vec2 {
        base.transform_point(self.contact_offset)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "index")]
pub enum Constraint {
    Lower(usize),
    Upper(usize),
    Obstacle(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QpResult {
    /// Base twist (vx, vy, omega) in the world frame.
    pub twist: [f64; 3],
    pub active_constraints: Vec<Constraint>,
    pub objective_value: f64,
    /// False when the contact velocity could not be met exactly.
    pub feasible: bool,
}

/// Maps a world-frame base twist to the contact-point velocity.
pub fn contact_jacobian(base: &Pose2, contact_offset: Vec2) -> Matrix2x3<f64> {
    let r = base.transform_vector(contact_offset);
    Matrix2x3::new(1.0, 0.0, -r.y, 0.0, 1.0, r.x)
}

/// Unit normals toward walls closer than `margin` to the base circle.
pub fn base_obstacle_normals(base: &Pose2, model: &RobotModel, walls: &[Segment], margin: f64) -> Vec<Vec2> {
    let center = base.position;
    walls
        .iter()
        .filter_map(|w| {
            let (p, _) = w.closest_point(center);
            let offset = p - center;
            (offset.norm() < margin + model.base_radius)
                .then(|| offset.try_normalize())
                .flatten()
        })
        .collect()
}

struct Row {
    a: Vector3<f64>,
    b: f64,
    id: Constraint,
}

struct Qp<'a> {
    hessian: DMatrix<f64>,
    linear: DVector<f64>,
    equalities: &'a [(Vector3<f64>, f64)],
    rows: &'a [Row],
}

const PRIMAL_TOL: f64 = 1e-11;
const DUAL_TOL: f64 = 1e-11;

impl Qp<'_> {
    fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * (x.transpose() * &self.hessian * x)[0] + self.linear.dot(x)
    }

    /// KKT solve with the equalities plus the rows in `active` held tight.
    fn solve_with(&self, active: &[usize]) -> Option<(DVector<f64>, DVector<f64>)> {
        let n = 3;
        let m = self.equalities.len() + active.len();
        let mut k = DMatrix::zeros(n + m, n + m);
        let mut rhs = DVector::zeros(n + m);
        k.view_mut((0, 0), (n, n)).copy_from(&self.hessian);
        rhs.rows_mut(0, n).copy_from(&(-&self.linear));
        let constraints = self
            .equalities
            .iter()
            .map(|(a, b)| (a, *b))
            .chain(active.iter().map(|&i| (&self.rows[i].a, self.rows[i].b)));
        for (j, (a, b)) in constraints.enumerate() {
            for i in 0..n {
                k[(n + j, i)] = a[i];
                k[(i, n + j)] = a[i];
            }
            rhs[n + j] = b;
        }
        let sol = k.lu().solve(&rhs)?;
        if !sol.iter().all(|v| v.is_finite()) {
            return None;
        }
        Some((sol.rows(0, n).into_owned(), sol.rows(n, m).into_owned()))
    }

    fn admissible(&self, x: &DVector<f64>, multipliers: &DVector<f64>, active: &[usize]) -> bool {
        let x3 = Vector3::new(x[0], x[1], x[2]);
        let primal = self
            .rows
            .iter()
            .all(|r| r.a.dot(&x3) - r.b <= PRIMAL_TOL * (1.0 + r.b.abs()));
        let start = self.equalities.len();
        let dual = (0..active.len()).all(|j| multipliers[start + j] >= -DUAL_TOL);
        primal && dual
    }

    /// Minimizer over all active sets, or `None` if no KKT point exists.
    fn solve(&self) -> Option<(DVector<f64>, Vec<usize>)> {
        let max_active = 3usize.saturating_sub(self.equalities.len());
        let mut best: Option<(f64, DVector<f64>, Vec<usize>)> = None;
        let mut active = Vec::with_capacity(max_active);
        self.enumerate(0, max_active, &mut active, &mut best);
        best.map(|(_, x, a)| (x, a))
    }

    fn enumerate(
        &self,
        from: usize,
        budget: usize,
        active: &mut Vec<usize>,
        best: &mut Option<(f64, DVector<f64>, Vec<usize>)>,
    ) {
        if let Some((x, mult)) = self.solve_with(active) {
            if self.admissible(&x, &mult, active) {
                let value = self.objective(&x);
                if best.as_ref().is_none_or(|(b, _, _)| value < *b - 1e-15) {
                    *best = Some((value, x, active.clone()));
                }
            }
        }
        if budget == 0 {
            return;
        }
        for i in from..self.rows.len() {
            active.push(i);
            self.enumerate(i + 1, budget - 1, active, best);
            active.pop();
        }
    }
}

/// Base twist realizing `contact_velocity` at the pusher while turning the
/// base toward `desired_heading`.
pub fn solve_ik(
    base: &Pose2,
    contact_velocity: Vec2,
    desired_heading: Angle,
    model: &RobotModel,
    obstacle_normals: &[Vec2],
) -> QpResult {
    let jac = contact_jacobian(base, model.contact_offset);
    let yaw_rate = model.heading_gain * desired_heading.minus(base.orientation).radians();
    let target = Vector3::new(0.0, 0.0, yaw_rate);

    let mut rows = Vec::with_capacity(6 + obstacle_normals.len());
    for k in 0..3 {
        let mut a = Vector3::zeros();
        a[k] = 1.0;
        rows.push(Row {
            a,
            b: model.velocity_limits[k],
            id: Constraint::Upper(k),
        });
        rows.push(Row {
            a: -a,
            b: model.velocity_limits[k],
            id: Constraint::Lower(k),
        });
    }
    for (i, n) in obstacle_normals.iter().enumerate() {
        rows.push(Row {
            a: Vector3::new(n.x, n.y, 0.0),
            b: 0.0,
            id: Constraint::Obstacle(i),
        });
    }
    let equalities = [
        (jac.row(0).transpose().into_owned(), contact_velocity.x),
        (jac.row(1).transpose().into_owned(), contact_velocity.y),
    ];

    let tracking = Qp {
        hessian: DMatrix::identity(3, 3),
        linear: DVector::from_iterator(3, (-target).iter().copied()),
        equalities: &equalities,
        rows: &rows,
    };
    let tracking_objective =
        |x: &DVector<f64>| 0.5 * (x - DVector::from_iterator(3, target.iter().copied())).norm_squared();
    if let Some((x, active)) = tracking.solve() {
        return QpResult {
            twist: [x[0], x[1], x[2]],
            active_constraints: active.iter().map(|&i| rows[i].id).collect(),
            objective_value: tracking_objective(&x),
            feasible: true,
        };
    }

    // Least-squares contact velocity, with a faint pull toward the target.
    let tie = 1e-9;
    let jd = DMatrix::from_fn(2, 3, |i, k| jac[(i, k)]);
    let v = DVector::from_vec(vec![contact_velocity.x, contact_velocity.y]);
    let hessian = jd.transpose() * &jd * 2.0 + DMatrix::identity(3, 3) * tie;
    let linear = -(jd.transpose() * &v) * 2.0 - DVector::from_iterator(3, target.iter().copied()) * tie;
    let fallback = Qp {
        hessian,
        linear,
        equalities: &[],
        rows: &rows,
    };
    let (x, active) = fallback
        .solve()
        .expect("box-bounded strictly convex QP with the origin feasible has a minimizer");
    QpResult {
        twist: [x[0], x[1], x[2]],
        active_constraints: active.iter().map(|&i| rows[i].id).collect(),
        objective_value: tracking_objective(&x),
        feasible: false,
    }
}

/// Contact-point velocity produced by a base twist.
pub fn contact_velocity(base: &Pose2, contact_offset: Vec2, twist: &[f64; 3]) -> Vec2 {
    let j = contact_jacobian(base, contact_offset);
    let v = j * Vector3::new(twist[0], twist[1], twist[2]);
    Vec2::new(v[0], v[1])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn model(offset: Vec2) -> RobotModel {
        RobotModel {
            contact_offset: offset,
            velocity_limits: [10.0, 10.0, 10.0],
            ..RobotModel::default()
        }
    }

    #[test]
    fn jacobian_examples() {
        let j = contact_jacobian(&Pose2::default(), Vec2::ZERO);
        assert_eq!(j, Matrix2x3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0));
        let j = contact_jacobian(&Pose2::default(), Vec2::new(0.5, 0.0));
        assert_eq!(j, Matrix2x3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.5));
        let j = contact_jacobian(&Pose2::new(Vec2::ZERO, FRAC_PI_2), Vec2::new(0.5, 0.0));
        assert!((j - Matrix2x3::new(1.0, 0.0, -0.5, 0.0, 1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn ik_examples() {
        let r = solve_ik(
            &Pose2::default(),
            Vec2::new(0.1, 0.0),
            Angle::new(0.0),
            &model(Vec2::ZERO),
            &[],
        );
        assert!(r.feasible);
        assert!((Vector3::from(r.twist) - Vector3::new(0.1, 0.0, 0.0)).norm() < 1e-14);

        let r = solve_ik(
            &Pose2::default(),
            Vec2::new(0.1, 0.0),
            Angle::new(0.0),
            &model(Vec2::new(0.5, 0.0)),
            &[],
        );
        assert!(r.feasible);
        assert!((Vector3::from(r.twist) - Vector3::new(0.1, 0.0, 0.0)).norm() < 1e-14);
        assert!(r.active_constraints.is_empty());

        let r = solve_ik(
            &Pose2::default(),
            Vec2::new(0.1, 0.0),
            Angle::new(0.0),
            &model(Vec2::ZERO),
            &[Vec2::new(1.0, 0.0)],
        );
        assert!(!r.feasible);
        assert!(r.twist[0].abs() < 1e-12);
        assert!(r.active_constraints.contains(&Constraint::Obstacle(0)));
    }

    #[test]
    fn heading_rate_saturates() {
        let mut m = model(Vec2::new(0.5, 0.0));
        m.velocity_limits = [0.5, 0.5, 0.25];
        let r = solve_ik(&Pose2::default(), Vec2::new(0.1, 0.0), Angle::new(1.0), &m, &[]);
        assert!(r.feasible);
        assert!((r.twist[2] - 0.25).abs() < 1e-12);
        assert!(r.active_constraints.contains(&Constraint::Upper(2)));
        let r = solve_ik(&Pose2::default(), Vec2::new(0.1, 0.0), Angle::new(-1.0), &m, &[]);
        assert!((r.twist[2] + 0.25).abs() < 1e-12);
    }

    #[test]
    fn base_obstacles_activate_within_margin() {
        let walls = vec![Segment::new(Vec2::new(0.6, -5.0), Vec2::new(0.6, 5.0)).unwrap()];
        let n = base_obstacle_normals(&Pose2::default(), &RobotModel::default(), &walls, 0.1);
        assert_eq!(n, vec![Vec2::new(1.0, 0.0)]);
        let n = base_obstacle_normals(
            &Pose2::new(Vec2::new(-0.1, 0.0), 0.0),
            &RobotModel::default(),
            &walls,
            0.1,
        );
        assert!(n.is_empty());
    }

    proptest! {
        #[test]
        fn unconstrained_matches_closed_form(theta in -3.0f64..3.0, target in -3.0f64..3.0, ox in -1.0f64..1.0, oy in -1.0f64..1.0, vx in -0.2f64..0.2, vy in -0.2f64..0.2) {
            let base = Pose2::new(Vec2::new(0.3, -0.2), theta);
            let m = RobotModel { contact_offset: Vec2::new(ox, oy), velocity_limits: [100.0; 3], heading_gain: 1.0, base_radius: 0.55 };
            let r = solve_ik(&base, Vec2::new(vx, vy), Angle::new(target), &m, &[]);
            prop_assert!(r.feasible);
            let j = contact_jacobian(&base, m.contact_offset);
            let xd = Vector3::new(0.0, 0.0, Angle::new(target).minus(base.orientation).radians());
            let v = nalgebra::Vector2::new(vx, vy);
            let jjt = j * j.transpose();
            let expect = xd + j.transpose() * jjt.try_inverse().unwrap() * (v - j * xd);
            prop_assert!((Vector3::from(r.twist) - expect).norm() < 1e-10);
        }

        #[test]
        fn feasible_results_satisfy_constraints(theta in -3.0f64..3.0, target in -3.0f64..3.0, vx in -0.6f64..0.6, vy in -0.6f64..0.6, na in -3.2f64..3.2, with_obstacle: bool) {
            let base = Pose2::new(Vec2::ZERO, theta);
            let m = RobotModel::default();
            let normals = if with_obstacle { vec![Vec2::from_angle(na)] } else { vec![] };
            let r = solve_ik(&base, Vec2::new(vx, vy), Angle::new(target), &m, &normals);
            let x = r.twist;
            for (v, limit) in x.iter().zip(m.velocity_limits.iter()) {
                prop_assert!(v.abs() <= limit + 1e-10);
            }
            for n in &normals {
                prop_assert!(n.x * x[0] + n.y * x[1] <= 1e-10);
            }
            if r.feasible {
                let vc = contact_velocity(&base, m.contact_offset, &x);
                prop_assert!((vc - Vec2::new(vx, vy)).norm() < 1e-8);
            }
        }
    }
}
