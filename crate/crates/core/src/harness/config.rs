use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_8;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::controller::ControllerParams;
use crate::engine::{ContactParams, PressureVariant};
use crate::geometry::{Segment, Shape, Vec2};
use crate::ik::RobotModel;
use crate::path::{PathSegment, PathSpec};

/// Everything a sweep needs, loadable from one TOML file. Missing sections
/// and keys take their defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarnessConfig {
    pub engine: EngineConfig,
    pub controller: ControllerParams,
    pub robot: RobotModel,
    pub grid: GridConfig,
    pub sliders: SliderSet,
    /// Named paths; entries in a file are added to (or replace) the defaults.
    #[serde(deserialize_with = "merge_paths")]
    pub paths: BTreeMap<String, PathConfig>,
    pub run: RunConfig,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        Self {
            engine: EngineConfig::default(),
            controller: ControllerParams::simulation(),
            robot: RobotModel::default(),
            grid: GridConfig::default(),
            sliders: SliderSet::default(),
            paths: default_paths(),
            run: RunConfig::default(),
        }
    }
}

fn default_paths() -> BTreeMap<String, PathConfig> {
    let mut paths = BTreeMap::new();
    paths.insert(
        "straight".to_owned(),
        PathConfig {
            shape: PathShape::Straight { length: 40.0 },
            walls: Vec::new(),
            duration: None,
        },
    );
    paths.insert(
        "corner".to_owned(),
        PathConfig {
            shape: PathShape::Corner {
                lead_in: 3.0,
                radius: 2.0,
                exit: 40.0,
                left: true,
            },
            walls: vec![WallConfig {
                start: [5.6, -3.0],
                end: [5.6, 45.0],
            }],
            duration: None,
        },
    );
    paths
}

fn merge_paths<'de, D: serde::Deserializer<'de>>(d: D) -> Result<BTreeMap<String, PathConfig>, D::Error> {
    let mut paths = default_paths();
    paths.extend(BTreeMap::<String, PathConfig>::deserialize(d)?);
    Ok(paths)
}

impl HarnessConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, HarnessError> {
        let config: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config is always representable as TOML")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        self.engine
            .contact_params()
            .validate()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        self.controller
            .validate()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        let e = &self.engine;
        if !(e.dt > 0.0 && e.control_period >= e.dt && e.dt.is_finite() && e.control_period.is_finite()) {
            return bad(format!(
                "bad time steps dt={} control_period={}",
                e.dt, e.control_period
            ));
        }
        if self.engine.substeps() == 0 {
            return bad("control period must be a whole number of engine steps".into());
        }
        if !(e.support_friction > 0.0 && e.support_friction.is_finite()) {
            return bad(format!("support_friction must be positive, got {}", e.support_friction));
        }
        if !(e.initial_gap >= 0.0 && e.initial_gap.is_finite()) {
            return bad(format!("initial_gap must be non-negative, got {}", e.initial_gap));
        }
        let r = &self.robot;
        if !(r.base_radius > 0.0 && r.heading_gain > 0.0 && r.velocity_limits.iter().all(|v| *v > 0.0)) {
            return bad("robot radius, heading gain and limits must be positive".into());
        }
        self.grid.validate()?;
        for (name, s) in [("box", &self.sliders.r#box), ("cylinder", &self.sliders.cylinder)] {
            if !(s.mass > 0.0 && s.mass.is_finite()) || !s.shape.contains_body_point(s.com_offset) {
                return bad(format!(
                    "slider `{name}` needs positive mass and a centre of mass inside it"
                ));
            }
        }
        for (name, p) in &self.paths {
            p.path()
                .map_err(|e| HarnessError::Config(format!("path `{name}`: {e}")))?;
            p.wall_segments()
                .map_err(|e| HarnessError::Config(format!("path `{name}`: {e}")))?;
            if let Some(d) = p.duration {
                if !(d > 0.0 && d.is_finite()) {
                    return bad(format!("path `{name}` duration must be positive"));
                }
            }
        }
        let run = &self.run;
        if !(run.duration > 0.0 && run.duration.is_finite()) {
            return bad(format!("run duration must be positive, got {}", run.duration));
        }
        if !(run.contact_loss_timeout > 0.0 && run.speed_ramp >= 0.0 && run.dipole_lookahead > 0.0) {
            return bad("contact_loss_timeout and dipole_lookahead must be positive, speed_ramp non-negative".into());
        }
        Ok(())
    }

    pub fn path(&self, name: &str) -> Result<&PathConfig, HarnessError> {
        self.paths
            .get(name)
            .ok_or_else(|| HarnessError::UnknownPath(name.to_owned()))
    }

    pub fn slider(&self, kind: SliderKind) -> &SliderConfig {
        match kind {
            SliderKind::Box => &self.sliders.r#box,
            SliderKind::Cylinder => &self.sliders.cylinder,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub dt: f64,
    pub control_period: f64,
    pub stiffness: f64,
    pub damping: f64,
    pub friction_regularization_velocity: f64,
    /// Slider-floor friction coefficient.
    pub support_friction: f64,
    pub wall_friction: f64,
    /// Initial clearance between pusher and slider, m.
    pub initial_gap: f64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        let c = ContactParams::default();
        Self {
            dt: 1e-3,
            control_period: 1e-2,
            stiffness: c.stiffness,
            damping: c.damping,
            friction_regularization_velocity: c.friction_regularization_velocity,
            support_friction: 0.25,
            wall_friction: c.wall_friction,
            initial_gap: 0.01,
        }
    }
}

impl EngineConfig {
    pub fn contact_params(&self) -> ContactParams {
        ContactParams {
            stiffness: self.stiffness,
            damping: self.damping,
            friction_regularization_velocity: self.friction_regularization_velocity,
            wall_friction: self.wall_friction,
        }
    }

    /// Engine steps per control tick, or 0 if the periods do not divide.
    pub fn substeps(&self) -> usize {
        let ratio = self.control_period / self.dt;
        let n = ratio.round();
        if n >= 1.0 && (ratio - n).abs() < 1e-9 * n {
            n as usize
        } else {
            0
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub lateral_offsets: Vec<f64>,
    pub contact_offsets: Vec<f64>,
    pub orientations: Vec<f64>,
    pub contact_frictions: Vec<f64>,
    pub pressures: Vec<PressureVariant>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            lateral_offsets: vec![-0.4, 0.0, 0.4],
            contact_offsets: vec![-0.4, 0.0, 0.4],
            orientations: vec![-FRAC_PI_8, 0.0, FRAC_PI_8],
            contact_frictions: vec![0.0, 0.5, 1.0],
            pressures: PressureVariant::ALL.to_vec(),
        }
    }
}

impl GridConfig {
    fn validate(&self) -> Result<(), HarnessError> {
        let axes: [(&str, &[f64]); 4] = [
            ("lateral_offsets", &self.lateral_offsets),
            ("contact_offsets", &self.contact_offsets),
            ("orientations", &self.orientations),
            ("contact_frictions", &self.contact_frictions),
        ];
        for (name, values) in axes {
            if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
                return Err(HarnessError::Config(format!(
                    "grid `{name}` must be a non-empty list of finite numbers"
                )));
            }
        }
        if self.contact_frictions.iter().any(|m| *m < 0.0) {
            return Err(HarnessError::Config("contact frictions must be non-negative".into()));
        }
        if self.pressures.is_empty() {
            return Err(HarnessError::Config("grid `pressures` must not be empty".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SliderKind {
    Box,
    Cylinder,
}

impl SliderKind {
    pub const ALL: [SliderKind; 2] = [SliderKind::Box, SliderKind::Cylinder];

    pub fn name(self) -> &'static str {
        match self {
            SliderKind::Box => "box",
            SliderKind::Cylinder => "cylinder",
        }
    }
}

impl std::str::FromStr for SliderKind {
    type Err = HarnessError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "box" => Ok(SliderKind::Box),
            "cylinder" => Ok(SliderKind::Cylinder),
            other => Err(HarnessError::Config(format!(
                "unknown slider `{other}` (expected box or cylinder)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SliderConfig {
    pub shape: Shape,
    pub mass: f64,
    #[serde(default)]
    pub com_offset: Vec2,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SliderSet {
    pub r#box: SliderConfig,
    pub cylinder: SliderConfig,
}

impl Default for SliderSet {
    fn default() -> Self {
        Self {
            r#box: SliderConfig {
                shape: Shape::square(1.0).expect("unit square"),
                mass: 1.0,
                com_offset: Vec2::ZERO,
            },
            cylinder: SliderConfig {
                shape: Shape::disk(0.5).expect("unit disk"),
                mass: 1.0,
                com_offset: Vec2::ZERO,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PathShape {
    Straight {
        length: f64,
    },
    Corner {
        lead_in: f64,
        radius: f64,
        exit: f64,
        left: bool,
    },
    Segments {
        segments: Vec<PathSegment>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WallConfig {
    pub start: [f64; 2],
    pub end: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathConfig {
    #[serde(flatten)]
    pub shape: PathShape,
    #[serde(default)]
    pub walls: Vec<WallConfig>,
    /// Overrides the run duration for scenarios on this path.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration: Option<f64>,
}

impl PathConfig {
    pub fn path(&self) -> Result<PathSpec, crate::path::PathError> {
        match &self.shape {
            PathShape::Straight { length } => PathSpec::straight(*length),
            PathShape::Corner {
                lead_in,
                radius,
                exit,
                left,
            } => PathSpec::corner(*lead_in, *radius, *exit, *left),
            PathShape::Segments { segments } => PathSpec::new(segments.clone()),
        }
    }

    pub fn wall_segments(&self) -> Result<Vec<Segment>, crate::geometry::GeometryError> {
        self.walls
            .iter()
            .map(|w| Segment::new(Vec2::new(w.start[0], w.start[1]), Vec2::new(w.end[0], w.end[1])))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Simulated time per run, s.
    pub duration: f64,
    /// Open-loop runs stop after this long without contact, s.
    pub contact_loss_timeout: f64,
    /// Mobile-base runs ramp the speed up over this long, s.
    pub speed_ramp: f64,
    /// Distance ahead of the slider's path projection used as the dipole goal, m.
    pub dipole_lookahead: f64,
    /// Trajectory points kept per run for plots, one every this many ticks.
    pub plot_stride: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            duration: 300.0,
            contact_loss_timeout: 10.0,
            speed_ramp: 1.0,
            dipole_lookahead: 1.0,
            plot_stride: 50,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_toml() {
        let c = HarnessConfig::default();
        c.validate().unwrap();
        let text = c.to_toml_string();
        let back = HarnessConfig::from_toml_str(&text).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn empty_file_is_default() {
        assert_eq!(HarnessConfig::from_toml_str("").unwrap(), HarnessConfig::default());
    }

    #[test]
    fn partial_sections_fill_defaults() {
        let c = HarnessConfig::from_toml_str("[controller]\nspeed = 0.2\n[grid]\npressures = [\"uniform\"]\n").unwrap();
        assert_eq!(c.controller.speed, 0.2);
        assert_eq!(c.controller.force_gain, 0.3);
        assert_eq!(c.grid.pressures, vec![PressureVariant::Uniform]);
        assert_eq!(c.grid.lateral_offsets.len(), 3);
    }

    #[test]
    fn rejects_bad_values() {
        for text in [
            "[controller]\nforce_min = 80.0\n",
            "[engine]\ndt = 0.003\n",
            "[grid]\norientations = []\n",
            "[run]\nduration = -1.0\n",
            "[paths.bad]\nkind = \"straight\"\nlength = 0.0\n",
            "[unknown]\nx = 1\n",
            "[sliders.box]\nmass = 1.0\ncom_offset = { x = 3.0, y = 0.0 }\nshape = { kind = \"disk\", radius = 0.5 }\n",
        ] {
            assert!(HarnessConfig::from_toml_str(text).is_err(), "{text}");
        }
    }

    #[test]
    fn custom_path_with_walls() {
        let text = r#"
[paths.zigzag]
kind = "segments"
duration = 60.0
walls = [{ start = [0.0, 1.0], end = [4.0, 1.0] }]

[[paths.zigzag.segments]]
type = "line"
start = { x = 0.0, y = 0.0 }
end = { x = 2.0, y = 0.0 }

[[paths.zigzag.segments]]
type = "line"
start = { x = 2.0, y = 0.0 }
end = { x = 4.0, y = 1.0 }
"#;
        let c = HarnessConfig::from_toml_str(text).unwrap();
        let p = c.path("zigzag").unwrap();
        assert_eq!(p.path().unwrap().segments().len(), 2);
        assert_eq!(p.wall_segments().unwrap().len(), 1);
        assert_eq!(p.duration, Some(60.0));
        assert!(c.paths.contains_key("straight"));
    }
}
