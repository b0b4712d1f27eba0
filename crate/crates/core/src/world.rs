//! Deterministic 2D environment: walls, obstacles with the four motion
//! classes, an optional sliding door, robot kinematics and collision checks.

use serde::{Deserialize, Serialize};

use crate::geometry::{heading_dir, normalize_heading, Point, Rect, Segment};

/// Shortest reading the distance sensor reports.
pub const SENSOR_MIN: f64 = 2.0;
/// Longest reading the distance sensor reports.
pub const SENSOR_MAX: f64 = 400.0;
/// Separation below which the robot counts as crashed.
pub const CRASH_THRESHOLD: f64 = 5.0;

pub fn clamp_reading(d: f64) -> f64 {
    d.clamp(SENSOR_MIN, SENSOR_MAX)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self {
            x,
            y,
            heading: normalize_heading(heading),
        }
    }

    pub fn position(&self) -> Point {
        Point::new(self.x, self.y)
    }

    pub fn dir(&self) -> (f64, f64) {
        heading_dir(self.heading)
    }

    /// Point `d` centimetres ahead along the heading.
    pub fn ahead(&self, d: f64) -> Point {
        let (dx, dy) = self.dir();
        Point::new(self.x + d * dx, self.y + d * dy)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.heading.is_finite()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    Rect(Rect),
    Segment(Segment),
}

impl Shape {
    fn translated(&self, dx: f64, dy: f64) -> Shape {
        match self {
            Shape::Rect(r) => Shape::Rect(r.translated(dx, dy)),
            Shape::Segment(s) => Shape::Segment(s.translated(dx, dy)),
        }
    }

    fn segments(&self) -> Vec<Segment> {
        match self {
            Shape::Rect(r) => r.edges().to_vec(),
            Shape::Segment(s) => vec![*s],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Behavior {
    Static,
    /// Starts moving along the robot's heading at `start_time`.
    MovesAwaySameDirection {
        speed: f64,
        start_time: f64,
    },
    /// Starts moving against the robot's heading at `start_time`.
    MovesTowardRobot {
        speed: f64,
        start_time: f64,
    },
    /// Leaves the scene at `start_time`.
    MovesOutOfPath {
        start_time: f64,
    },
}

impl Behavior {
    fn start_time(&self) -> Option<f64> {
        match *self {
            Behavior::Static => None,
            Behavior::MovesAwaySameDirection { start_time, .. }
            | Behavior::MovesTowardRobot { start_time, .. }
            | Behavior::MovesOutOfPath { start_time } => Some(start_time),
        }
    }
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObstacleSpec {
    pub shape: Shape,
    #[serde(default = "default_behavior")]
    pub behavior: Behavior,
    #[serde(default = "default_true")]
    pub active: bool,
}

fn default_behavior() -> Behavior {
    Behavior::Static
}

impl ObstacleSpec {
    pub fn validate(&self) -> Result<(), String> {
        match self.behavior {
            Behavior::MovesAwaySameDirection { speed, start_time }
            | Behavior::MovesTowardRobot { speed, start_time } => {
                if !(speed > 0.0) {
                    return Err("dynamic obstacle speed must be positive".into());
                }
                if !(start_time >= 0.0) {
                    return Err("obstacle start_time must be non-negative".into());
                }
            }
            Behavior::MovesOutOfPath { start_time } if !(start_time >= 0.0) => {
                return Err("obstacle start_time must be non-negative".into());
            }
            _ => {}
        }
        if let Shape::Rect(r) = self.shape {
            if !r.is_valid() {
                return Err("obstacle rectangle is degenerate".into());
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlidingDoorSpec {
    pub segment: Segment,
    /// Simulated time at which the door slides open; `None` keeps it shut.
    #[serde(default)]
    pub open_at: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "index", rename_all = "snake_case")]
pub enum SurfaceId {
    Wall(usize),
    Obstacle(usize),
    Door,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollisionEvent {
    pub time: f64,
    pub obstacle_id: SurfaceId,
    pub min_separation: f64,
}

/// What the controller asks of the drive for one tick.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Command {
    /// Forward speed in cm/s.
    pub speed: f64,
    /// Instantaneous rotation applied before translating.
    pub rotate_to: Option<f64>,
}

impl Command {
    pub fn drive(speed: f64) -> Self {
        Self {
            speed,
            rotate_to: None,
        }
    }

    pub fn stop() -> Self {
        Self::default()
    }

    pub fn turn(heading: f64) -> Self {
        Self {
            speed: 0.0,
            rotate_to: Some(heading),
        }
    }
}

#[derive(Clone, Debug)]
struct Obstacle {
    spec: ObstacleSpec,
    /// Unit motion direction, fixed when the behaviour activates.
    motion: Option<(f64, f64)>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepEvents {
    pub door_crossed: bool,
}

#[derive(Clone, Debug)]
pub struct WorldModel {
    pub rooms: Vec<Rect>,
    pub walls: Vec<Segment>,
    obstacles: Vec<Obstacle>,
    pub door: Option<SlidingDoorSpec>,
    pub robot: Pose,
    pub robot_radius: f64,
    ticks: u64,
    pub dt: f64,
}

impl WorldModel {
    pub fn new(
        rooms: Vec<Rect>,
        walls: Vec<Segment>,
        obstacles: Vec<ObstacleSpec>,
        door: Option<SlidingDoorSpec>,
        robot: Pose,
        robot_radius: f64,
        dt: f64,
    ) -> Self {
        let mut world = Self {
            rooms,
            walls,
            obstacles: obstacles
                .into_iter()
                .map(|spec| Obstacle { spec, motion: None })
                .collect(),
            door,
            robot,
            robot_radius,
            ticks: 0,
            dt,
        };
        world.activate_behaviors();
        world
    }

    pub fn clock(&self) -> f64 {
        self.ticks as f64 * self.dt
    }

    pub fn ticks(&self) -> u64 {
        self.ticks
    }

    pub fn door_open(&self) -> bool {
        match self.door {
            Some(SlidingDoorSpec {
                open_at: Some(t), ..
            }) => self.clock() >= t,
            _ => false,
        }
    }

    pub fn obstacle_count(&self) -> usize {
        self.obstacles.len()
    }

    /// Current shape of obstacle `i`, or `None` when it is not in the scene.
    pub fn obstacle_shape(&self, i: usize) -> Option<Shape> {
        let o = self.obstacles.get(i)?;
        if !o.spec.active {
            return None;
        }
        let t = self.clock();
        match o.spec.behavior {
            Behavior::Static => Some(o.spec.shape),
            Behavior::MovesOutOfPath { start_time } => (t < start_time).then_some(o.spec.shape),
            Behavior::MovesAwaySameDirection { speed, start_time }
            | Behavior::MovesTowardRobot { speed, start_time } => {
                let elapsed = (t - start_time).max(0.0);
                let (dx, dy) = o.motion.unwrap_or((0.0, 0.0));
                Some(
                    o.spec
                        .shape
                        .translated(dx * speed * elapsed, dy * speed * elapsed),
                )
            }
        }
    }

    /// Every solid segment currently in the scene.
    pub fn surfaces(&self) -> Vec<(SurfaceId, Segment)> {
        let mut out: Vec<(SurfaceId, Segment)> = self
            .walls
            .iter()
            .enumerate()
            .map(|(i, s)| (SurfaceId::Wall(i), *s))
            .collect();
        for i in 0..self.obstacles.len() {
            if let Some(shape) = self.obstacle_shape(i) {
                out.extend(
                    shape
                        .segments()
                        .into_iter()
                        .map(|s| (SurfaceId::Obstacle(i), s)),
                );
            }
        }
        if let Some(door) = self.door {
            if !self.door_open() {
                out.push((SurfaceId::Door, door.segment));
            }
        }
        out
    }

    /// Sensor-face raycast from `pose`, clamped to the sensor range.
    pub fn raycast(&self, pose: &Pose) -> f64 {
        let face = pose.ahead(self.robot_radius);
        let dir = pose.dir();
        let nearest = self
            .surfaces()
            .iter()
            .filter_map(|(_, s)| s.ray_hit(face, dir))
            .fold(f64::INFINITY, f64::min);
        clamp_reading(nearest)
    }

    /// Raycast from the robot's own pose.
    pub fn sense(&self) -> f64 {
        self.raycast(&self.robot)
    }

    pub fn min_separation(&self) -> Option<(SurfaceId, f64)> {
        let c = self.robot.position();
        self.surfaces()
            .into_iter()
            .map(|(id, s)| (id, s.distance_to(c) - self.robot_radius))
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }

    pub fn check_collision(&self) -> Option<CollisionEvent> {
        let (id, sep) = self.min_separation()?;
        (sep < CRASH_THRESHOLD).then(|| CollisionEvent {
            time: self.clock(),
            obstacle_id: id,
            min_separation: sep,
        })
    }

    /// Whether translating `distance` ahead keeps the robot clear of every
    /// surface, i.e. the bumper would not close.
    pub fn can_advance(&self, distance: f64) -> bool {
        let next = self.robot.ahead(distance);
        self.surfaces()
            .iter()
            .all(|(_, s)| s.distance_to(next) - self.robot_radius >= CRASH_THRESHOLD + 0.5)
    }

    pub fn inside_rooms(&self, p: Point) -> bool {
        self.rooms.iter().any(|r| r.contains(p))
    }

    pub fn bounds(&self) -> Option<Rect> {
        self.rooms.iter().copied().reduce(|a, b| a.union(&b))
    }

    /// Whether the robot disc currently overlaps an open doorway.
    pub fn in_doorway(&self) -> bool {
        match self.door {
            Some(door) if self.door_open() => {
                door.segment.distance_to(self.robot.position()) < self.robot_radius
            }
            _ => false,
        }
    }

    pub fn step(&mut self, cmd: Command) -> StepEvents {
        if let Some(h) = cmd.rotate_to {
            self.robot.heading = normalize_heading(h);
        }
        let before = self.robot.position();
        if cmd.speed != 0.0 {
            let p = self.robot.ahead(cmd.speed * self.dt);
            self.robot.x = p.x;
            self.robot.y = p.y;
        }
        let after = self.robot.position();
        self.ticks += 1;
        self.activate_behaviors();

        let door_crossed = match self.door {
            Some(door) if self.door_open() && before != after => {
                door.segment.crossed_by(before, after)
            }
            _ => false,
        };
        StepEvents { door_crossed }
    }

    fn activate_behaviors(&mut self) {
        let t = self.clock();
        let heading = self.robot.dir();
        for o in &mut self.obstacles {
            if o.motion.is_some() {
                continue;
            }
            let Some(start) = o.spec.behavior.start_time() else {
                continue;
            };
            if t + 1e-12 < start {
                continue;
            }
            o.motion = match o.spec.behavior {
                Behavior::MovesAwaySameDirection { .. } => Some(heading),
                Behavior::MovesTowardRobot { .. } => Some((-heading.0, -heading.1)),
                _ => Some((0.0, 0.0)),
            };
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn corridor(obstacles: Vec<ObstacleSpec>) -> WorldModel {
        let walls = Rect::new(Point::new(0.0, 0.0), Point::new(600.0, 200.0))
            .edges()
            .to_vec();
        WorldModel::new(
            vec![Rect::new(Point::new(0.0, 0.0), Point::new(600.0, 200.0))],
            walls,
            obstacles,
            None,
            Pose::new(67.0, 100.0, PI),
            17.0,
            0.1,
        )
    }

    #[test]
    fn step_advances_half_centimetre_per_tick() {
        let mut w = corridor(vec![]);
        w.robot = Pose::new(100.0, 100.0, 0.0);
        w.step(Command::drive(5.0));
        assert_eq!(w.robot.x, 100.5);
        assert_eq!(w.robot.y, 100.0);
        assert!((w.clock() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn raycast_to_wall_and_clamp() {
        let w = corridor(vec![]);
        // centre at 67, face at 50 from the wall at x = 0
        assert_eq!(w.sense(), 50.0);
        let far = Pose::new(17.0, 100.0, 0.0);
        assert_eq!(w.raycast(&far), 400.0);
    }

    #[test]
    fn static_wall_unchanged_over_steps() {
        let rect = Rect::new(Point::new(300.0, 50.0), Point::new(320.0, 150.0));
        let mut w = corridor(vec![ObstacleSpec {
            shape: Shape::Rect(rect),
            behavior: Behavior::Static,
            active: true,
        }]);
        for _ in 0..10 {
            w.step(Command::stop());
        }
        assert_eq!(w.obstacle_shape(0), Some(Shape::Rect(rect)));
    }

    #[test]
    fn collision_is_strict() {
        let mut w = corridor(vec![]);
        w.robot = Pose::new(17.0 + 4.9, 100.0, PI);
        assert!(w.check_collision().is_some());
        w.robot = Pose::new(17.0 + 5.0, 100.0, PI);
        assert!(w.check_collision().is_none());
        w.robot = Pose::new(17.0 + 20.0, 100.0, PI);
        assert!(w.check_collision().is_none());
    }

    #[test]
    fn obstacle_moving_out_of_path_disappears() {
        let rect = Rect::new(Point::new(10.0, 50.0), Point::new(20.0, 150.0));
        let mut w = corridor(vec![ObstacleSpec {
            shape: Shape::Rect(rect),
            behavior: Behavior::MovesOutOfPath { start_time: 0.5 },
            active: true,
        }]);
        assert_eq!(w.sense(), 30.0);
        for _ in 0..5 {
            w.step(Command::stop());
        }
        assert_eq!(w.sense(), 50.0);
    }

    #[test]
    fn inactive_obstacle_is_ignored() {
        let rect = Rect::new(Point::new(10.0, 50.0), Point::new(20.0, 150.0));
        let w = corridor(vec![ObstacleSpec {
            shape: Shape::Rect(rect),
            behavior: Behavior::Static,
            active: false,
        }]);
        assert_eq!(w.sense(), 50.0);
    }

    #[test]
    fn dynamic_speed_must_be_positive() {
        let spec = ObstacleSpec {
            shape: Shape::Segment(Segment::new(Point::new(0.0, 0.0), Point::new(0.0, 1.0))),
            behavior: Behavior::MovesTowardRobot {
                speed: 0.0,
                start_time: 1.0,
            },
            active: true,
        };
        assert!(spec.validate().is_err());
    }
}
