//! Scenario files: geometry, robot, plan, sensor and per-module settings.
//! Unknown keys anywhere in the document are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::attack::DEFAULT_HAZARD_DELTA;
use crate::controller::{ControllerConfig, LanePlan};
use crate::geometry::{Rect, Segment};
use crate::remit::RemitConfig;
use crate::robofuzz::RoboFuzzConfig;
use crate::sensing::{SensorConfig, SensorMode};
use crate::shade::ShadeConfig;
use crate::world::{ObstacleSpec, Pose, SlidingDoorSpec, WorldModel};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StartPose {
    pub x: f64,
    pub y: f64,
    pub heading_deg: f64,
}

fn default_radius() -> f64 {
    17.0
}

fn default_velocity() -> f64 {
    50.0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotSpec {
    pub start: StartPose,
    #[serde(default = "default_radius")]
    pub radius: f64,
    #[serde(default = "default_velocity")]
    pub velocity_mm_s: f64,
}

impl RobotSpec {
    /// Cruise speed in cm/s.
    pub fn speed(&self) -> f64 {
        self.velocity_mm_s / 10.0
    }

    pub fn pose(&self) -> Pose {
        Pose::new(
            self.start.x,
            self.start.y,
            self.start.heading_deg.to_radians(),
        )
    }
}

fn default_burst() -> f64 {
    7.0
}

fn default_delta() -> f64 {
    DEFAULT_HAZARD_DELTA
}

fn yes() -> bool {
    true
}

/// Settings for the blind baseline fuzzers and the channel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSettings {
    #[serde(default = "yes")]
    pub compromised: bool,
    /// Seconds a baseline fuzzer keeps tampering once it fires.
    #[serde(default = "default_burst")]
    pub burst: f64,
    #[serde(default = "default_delta")]
    pub hazard_delta: f64,
}

impl Default for AttackSettings {
    fn default() -> Self {
        Self {
            compromised: true,
            burst: default_burst(),
            hazard_delta: default_delta(),
        }
    }
}

fn default_resolution() -> f64 {
    10.0
}

fn default_passes() -> usize {
    2
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapSettings {
    #[serde(default = "default_resolution")]
    pub resolution: f64,
    #[serde(default = "default_passes")]
    pub passes: usize,
}

impl Default for MapSettings {
    fn default() -> Self {
        Self {
            resolution: default_resolution(),
            passes: default_passes(),
        }
    }
}

fn default_tick() -> f64 {
    0.1
}

fn default_timeout() -> f64 {
    300.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub rooms: Vec<Rect>,
    pub walls: Vec<Segment>,
    #[serde(default)]
    pub obstacles: Vec<ObstacleSpec>,
    #[serde(default)]
    pub door: Option<SlidingDoorSpec>,
    pub robot: RobotSpec,
    pub plan: LanePlan,
    #[serde(default)]
    pub sensor: SensorConfig,
    #[serde(default)]
    pub controller: ControllerConfig,
    #[serde(default = "default_tick")]
    pub tick: f64,
    #[serde(default = "default_timeout")]
    pub timeout: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub attack: AttackSettings,
    #[serde(default)]
    pub robofuzz: RoboFuzzConfig,
    #[serde(default)]
    pub shade: ShadeConfig,
    #[serde(default)]
    pub remit: RemitConfig,
    #[serde(default)]
    pub map: MapSettings,
}

const TWO_ROOMS: &str = include_str!("../scenarios/two_rooms.json");
const SINGLE_ROOM: &str = include_str!("../scenarios/single_room.json");

impl Scenario {
    pub const BUILTINS: [&'static str; 2] = ["two_rooms", "single_room"];

    pub fn from_json(text: &str) -> Result<Self> {
        let s: Scenario = serde_json::from_str(text).map_err(|source| Error::Parse {
            what: "scenario".into(),
            source,
        })?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// A shipped scenario by name.
    pub fn builtin(name: &str) -> Result<Self> {
        match name {
            "two_rooms" => Self::from_json(TWO_ROOMS),
            "single_room" => Self::from_json(SINGLE_ROOM),
            other => Err(Error::config(format!(
                "no built-in scenario named '{other}'"
            ))),
        }
    }

    /// A built-in name or a path to a scenario file.
    pub fn resolve(name_or_path: &str) -> Result<Self> {
        if Self::BUILTINS.contains(&name_or_path) {
            Self::builtin(name_or_path)
        } else {
            Self::load(Path::new(name_or_path))
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(format!("scenario '{}': {m}", self.name)));
        if !(self.tick > 0.0) {
            return fail(format!("tick must be positive, got {}", self.tick));
        }
        if !(self.timeout > 0.0) {
            return fail("timeout must be positive".into());
        }
        if self.rooms.is_empty() || !self.rooms.iter().all(Rect::is_valid) {
            return fail("at least one valid room is required".into());
        }
        if !(self.robot.radius > 0.0) || !(self.robot.velocity_mm_s > 0.0) {
            return fail("robot radius and velocity must be positive".into());
        }
        if !(self.plan.lane_width > 0.0) {
            return fail("lane width must be positive".into());
        }
        let start = self.robot.pose();
        if !start.is_finite() || !self.rooms.iter().any(|r| r.contains(start.position())) {
            return fail("robot start lies outside every room".into());
        }
        for (i, o) in self.obstacles.iter().enumerate() {
            if let Err(m) = o.validate() {
                return fail(format!("obstacle {i}: {m}"));
            }
        }
        if let Err(m) = self.sensor.mode.validate() {
            return fail(m);
        }
        if let Err(m) = self.sensor.latency.validate() {
            return fail(m);
        }
        if let Err(m) = self.remit.validate() {
            return fail(m);
        }
        let f = &self.controller.filter;
        if f.window < 3 || f.max_reversals == 0 {
            return fail("filter window must be at least 3 with a positive reversal count".into());
        }
        if !(self.attack.burst > 0.0) {
            return fail("baseline burst must be positive".into());
        }
        if !(self.map.resolution > 0.0) || self.map.passes == 0 {
            return fail("map resolution and passes must be positive".into());
        }
        Ok(())
    }

    pub fn world(&self) -> WorldModel {
        WorldModel::new(
            self.rooms.clone(),
            self.walls.clone(),
            self.obstacles.clone(),
            self.door,
            self.robot.pose(),
            self.robot.radius,
            self.tick,
        )
    }

    pub fn bounds(&self) -> Rect {
        self.rooms
            .iter()
            .copied()
            .reduce(|a, b| a.union(&b))
            .expect("validated scenario has rooms")
    }

    /// The sensor mode a trial uses under `model`: suspension experiments run
    /// the sensor as a threshold alarm at the safe distance.
    pub fn sensor_mode_for(&self, model: crate::attack::AttackModel) -> SensorMode {
        match model {
            crate::attack::AttackModel::Suspension => SensorMode::ProactiveThreshold {
                alert_at: self.controller.safe_distance,
            },
            _ => self.sensor.mode,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_load() {
        for name in Scenario::BUILTINS {
            let s = Scenario::builtin(name).unwrap();
            assert_eq!(s.robot.speed(), 5.0);
            assert_eq!(s.tick, 0.1);
        }
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = SINGLE_ROOM.replacen("\"tick\"", "\"tock\": 1, \"tick\"", 1);
        assert!(matches!(
            Scenario::from_json(&text),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn nonpositive_tick_rejected() {
        let mut s = Scenario::builtin("single_room").unwrap();
        s.tick = 0.0;
        assert!(s.validate().is_err());
        s.tick = -0.1;
        assert!(s.validate().is_err());
    }
}
