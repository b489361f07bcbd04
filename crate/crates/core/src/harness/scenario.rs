use serde::{Deserialize, Serialize};

use super::config::{HarnessConfig, SliderKind};
use super::HarnessError;
use crate::engine::{limit_surface_for, PressureVariant, SliderModel, WorldState, PUSHER_RADIUS};
use crate::geometry::{closest_point_on_shape, contact_offset_to_point, segment_shape_contacts, Pose2, Segment};
use crate::path::{heading_of, PathSpec};

/// One point of the initial-condition grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub index: usize,
    pub slider: SliderKind,
    /// Initial offset of the slider's reference point from the path, m.
    pub lateral_offset: f64,
    /// Pusher position along the slider boundary from the reference point, m.
    pub contact_offset: f64,
    /// Initial slider rotation relative to the path heading, rad.
    pub orientation: f64,
    pub contact_friction: f64,
    pub pressure: PressureVariant,
    pub path: String,
    pub walls: bool,
    pub duration: f64,
    pub seed: u64,
}

/// Which part of the grid to expand.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepSelection {
    pub sliders: Vec<SliderKind>,
    pub path: String,
    pub walls: bool,
}

impl SweepSelection {
    pub fn new(sliders: &[SliderKind], path: &str, walls: bool) -> Self {
        Self {
            sliders: sliders.to_vec(),
            path: path.to_owned(),
            walls,
        }
    }
}

/// Full grid product in lexicographic order (slider, lateral offset,
/// contact offset, orientation, friction, pressure).
pub fn build_scenarios(config: &HarnessConfig, selection: &SweepSelection) -> Result<Vec<Scenario>, HarnessError> {
    config.validate()?;
    let path = config.path(&selection.path)?;
    let duration = path.duration.unwrap_or(config.run.duration);
    let g = &config.grid;
    let mut out = Vec::new();
    for &slider in &selection.sliders {
        for &lateral_offset in &g.lateral_offsets {
            for &contact_offset in &g.contact_offsets {
                for &orientation in &g.orientations {
                    for &contact_friction in &g.contact_frictions {
                        for &pressure in &g.pressures {
                            let index = out.len();
                            out.push(Scenario {
                                index,
                                slider,
                                lateral_offset,
                                contact_offset,
                                orientation,
                                contact_friction,
                                pressure,
                                path: selection.path.clone(),
                                walls: selection.walls,
                                duration,
                                seed: index as u64,
                            });
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Everything fixed for the duration of one run.
#[derive(Clone, Debug)]
pub struct Setup {
    pub slider: SliderModel,
    pub path: PathSpec,
    pub walls: Vec<Segment>,
    pub world: WorldState,
}

/// Places the slider and pusher for `scenario`.
pub fn initial_world(scenario: &Scenario, config: &HarnessConfig) -> Result<Setup, HarnessError> {
    let fail = |reason: String| HarnessError::Placement {
        index: scenario.index,
        reason,
    };
    if !(scenario.duration > 0.0 && scenario.duration.is_finite()) {
        return Err(fail(format!("duration {} must be positive", scenario.duration)));
    }
    let slider_cfg = config.slider(scenario.slider);
    let limit = limit_surface_for(
        &slider_cfg.shape,
        slider_cfg.mass,
        config.engine.support_friction,
        scenario.pressure,
    )
    .map_err(|e| fail(e.to_string()))?;
    let slider = SliderModel::new(
        slider_cfg.shape.clone(),
        slider_cfg.mass,
        slider_cfg.com_offset,
        scenario.contact_friction,
        limit,
    )
    .map_err(|e| fail(e.to_string()))?;
    let path_cfg = config.path(&scenario.path)?;
    let path = path_cfg.path().map_err(|e| fail(e.to_string()))?;
    let walls = if scenario.walls {
        path_cfg.wall_segments().map_err(|e| fail(e.to_string()))?
    } else {
        Vec::new()
    };

    let start = path.point_at(0.0);
    let tangent = path.tangent_at(0.0);
    let heading = heading_of(tangent).radians();
    let (reference, _) = contact_offset_to_point(&slider.shape, 0.0).map_err(|e| fail(e.to_string()))?;
    let (contact, normal) =
        contact_offset_to_point(&slider.shape, scenario.contact_offset).map_err(|e| fail(e.to_string()))?;
    let mut pose = Pose2::new(
        start + tangent.perp() * scenario.lateral_offset,
        heading + scenario.orientation,
    );
    pose.position -= pose.transform_vector(reference);
    let pusher =
        pose.transform_point(contact) + pose.transform_vector(normal) * (PUSHER_RADIUS + config.engine.initial_gap);

    let clearance = closest_point_on_shape(&slider.shape, &pose, pusher).signed_distance;
    if clearance < PUSHER_RADIUS {
        return Err(fail(format!("pusher overlaps the slider (clearance {clearance})")));
    }
    for wall in &walls {
        if !segment_shape_contacts(&slider.shape, &pose, wall).is_empty() {
            return Err(fail("slider starts in contact with a wall".into()));
        }
        if wall.distance_to(pusher) <= PUSHER_RADIUS {
            return Err(fail("pusher starts in contact with a wall".into()));
        }
    }
    let world = WorldState::new(pose, pusher, walls.clone());
    Ok(Setup {
        slider,
        path,
        walls,
        world,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec2;

    fn zero_scenario(slider: SliderKind) -> Scenario {
        Scenario {
            index: 0,
            slider,
            lateral_offset: 0.0,
            contact_offset: 0.0,
            orientation: 0.0,
            contact_friction: 0.5,
            pressure: PressureVariant::Uniform,
            path: "straight".into(),
            walls: false,
            duration: 10.0,
            seed: 0,
        }
    }

    #[test]
    fn scenario_counts() {
        let c = HarnessConfig::default();
        let one = build_scenarios(&c, &SweepSelection::new(&[SliderKind::Box], "straight", false)).unwrap();
        assert_eq!(one.len(), 243);
        assert!(one.iter().enumerate().all(|(i, s)| s.index == i));
        let both = build_scenarios(&c, &SweepSelection::new(&SliderKind::ALL, "straight", false)).unwrap();
        assert_eq!(both.len(), 486);
        let mut small = c.clone();
        small.grid.lateral_offsets = vec![0.4];
        small.grid.contact_offsets = vec![0.0];
        small.grid.orientations = vec![0.0];
        small.grid.contact_frictions = vec![1.0];
        small.grid.pressures = vec![PressureVariant::Perimeter];
        assert_eq!(
            build_scenarios(&small, &SweepSelection::new(&[SliderKind::Box], "corner", true))
                .unwrap()
                .len(),
            1
        );
        assert!(matches!(
            build_scenarios(&c, &SweepSelection::new(&[SliderKind::Box], "nowhere", false)),
            Err(HarnessError::UnknownPath(_))
        ));
    }

    #[test]
    fn lexicographic_order() {
        let c = HarnessConfig::default();
        let s = build_scenarios(&c, &SweepSelection::new(&[SliderKind::Box], "straight", false)).unwrap();
        assert_eq!(s[0].lateral_offset, -0.4);
        assert_eq!(s[0].pressure, PressureVariant::Centered);
        assert_eq!(s[1].pressure, PressureVariant::Uniform);
        assert_eq!(s[3].contact_friction, 0.5);
        assert_eq!(s[81].lateral_offset, 0.0);
    }

    #[test]
    fn zero_scenario_placement() {
        let c = HarnessConfig::default();
        let setup = initial_world(&zero_scenario(SliderKind::Box), &c).unwrap();
        assert!((setup.world.slider_pose.position - Vec2::new(0.5, 0.0)).norm() < 1e-12);
        assert!((setup.world.pusher_position - Vec2::new(-0.06, 0.0)).norm() < 1e-12);
        let setup = initial_world(&zero_scenario(SliderKind::Cylinder), &c).unwrap();
        assert!((setup.world.slider_pose.position - Vec2::new(0.5, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn offsets_place_reference_and_pusher() {
        let c = HarnessConfig::default();
        let mut s = zero_scenario(SliderKind::Box);
        s.lateral_offset = 0.4;
        let setup = initial_world(&s, &c).unwrap();
        let reference = setup.world.slider_pose.transform_point(Vec2::new(-0.5, 0.0));
        assert!((reference - Vec2::new(0.0, 0.4)).norm() < 1e-12);

        let mut s = zero_scenario(SliderKind::Box);
        s.contact_offset = 0.4;
        let setup = initial_world(&s, &c).unwrap();
        let body = setup
            .world
            .slider_pose
            .inverse_transform_point(setup.world.pusher_position);
        assert!((body - Vec2::new(-0.56, 0.4)).norm() < 1e-12);
    }

    #[test]
    fn impossible_placements_rejected() {
        let c = HarnessConfig::default();
        let mut s = zero_scenario(SliderKind::Box);
        s.contact_offset = 2.5;
        assert!(matches!(initial_world(&s, &c), Err(HarnessError::Placement { .. })));
        let mut c2 = c.clone();
        c2.paths.get_mut("straight").unwrap().walls = vec![super::super::WallConfig {
            start: [0.0, -3.0],
            end: [0.0, 3.0],
        }];
        let mut s = zero_scenario(SliderKind::Box);
        s.walls = true;
        assert!(matches!(initial_world(&s, &c2), Err(HarnessError::Placement { .. })));
    }
}
