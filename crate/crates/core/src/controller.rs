//! The robot control program: a zigzag coverage planner driven by the front
//! distance sensor, a safe-distance rule, and a plausibility filter that
//! discards readings which swing back and forth too violently.

use std::collections::VecDeque;
use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::geometry::{normalize_heading, Point};
use crate::histmap::HistoricalMap;
use crate::remit::{self, MitigationState, RemitConfig};
use crate::sensing::{SensorMode, SensorReading};
use crate::shade::DetectionVerdict;
use crate::world::{CollisionEvent, Command, Pose, WorldModel};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TurnDirection {
    Left,
    Right,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "state", content = "direction", rename_all = "snake_case")]
pub enum ControlState {
    #[default]
    Idle,
    Forward,
    Turning(TurnDirection),
    DoorCrossing,
    Spinning,
    Mitigation,
    Done,
}

impl ControlState {
    pub fn is_terminal(&self) -> bool {
        matches!(self, ControlState::Spinning | ControlState::Done)
    }

    /// States in which the robot translates along its plan.
    pub fn is_moving(&self) -> bool {
        matches!(
            self,
            ControlState::Forward | ControlState::DoorCrossing | ControlState::Mitigation
        )
    }
}

/// What an observer on the robot's host can learn about the controller.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ControlSnapshot {
    pub state: ControlState,
    /// Increments on every lane or shift leg.
    pub leg: u32,
    pub lane: usize,
    /// True while sliding sideways to the next lane.
    pub lateral: bool,
    pub mitigating: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shift {
    /// Towards +y.
    Up,
    /// Towards -y.
    Down,
}

impl Shift {
    pub fn heading(self) -> f64 {
        match self {
            Shift::Up => FRAC_PI_2,
            Shift::Down => 3.0 * FRAC_PI_2,
        }
    }
}

fn default_lane_width() -> f64 {
    34.0
}

/// Boustrophedon plan: one lane per entry of `shifts` plus the first lane.
/// Each lane runs opposite to the previous one; `shifts[i]` is the sideways
/// move between lane `i` and lane `i + 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LanePlan {
    #[serde(default = "default_lane_width")]
    pub lane_width: f64,
    pub shifts: Vec<Shift>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub lane: usize,
    /// Where the sideways move ends.
    pub target: Point,
    pub shift_heading: f64,
    pub lane_heading: f64,
}

impl LanePlan {
    pub fn lane_count(&self) -> usize {
        self.shifts.len() + 1
    }

    /// The next lane after finishing `lane` at `pose`, or `None` once the plan
    /// is exhausted.
    pub fn next_lane(&self, lane: usize, pose: &Pose) -> Option<Waypoint> {
        let shift = *self.shifts.get(lane)?;
        let shift_heading = shift.heading();
        let (dx, dy) = crate::geometry::heading_dir(shift_heading);
        Some(Waypoint {
            lane: lane + 1,
            target: Point::new(pose.x + dx * self.lane_width, pose.y + dy * self.lane_width),
            shift_heading,
            lane_heading: normalize_heading(pose.heading + PI),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterConfig {
    pub window: usize,
    pub max_reversals: usize,
    pub reversal_magnitude: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            window: 6,
            max_reversals: 3,
            reversal_magnitude: 30.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterVerdict {
    Accept,
    Reject,
}

/// Number of direction changes in `values` where at least one of the two
/// adjacent steps exceeds `magnitude`.
pub fn count_reversals(values: &[f64], magnitude: f64) -> usize {
    let deltas: Vec<f64> = values.windows(2).map(|w| w[1] - w[0]).collect();
    deltas
        .windows(2)
        .filter(|d| d[0] * d[1] < 0.0 && d[0].abs().max(d[1].abs()) > magnitude)
        .count()
}

/// Judges the most recent `cfg.window` values.
pub fn volatility_check(values: &[f64], cfg: &FilterConfig) -> FilterVerdict {
    let start = values.len().saturating_sub(cfg.window);
    if count_reversals(&values[start..], cfg.reversal_magnitude) >= cfg.max_reversals {
        FilterVerdict::Reject
    } else {
        FilterVerdict::Accept
    }
}

#[derive(Clone, Debug)]
pub struct VolatilityFilter {
    pub config: FilterConfig,
    window: VecDeque<f64>,
}

impl VolatilityFilter {
    pub fn new(config: FilterConfig) -> Self {
        Self {
            config,
            window: VecDeque::with_capacity(config.window),
        }
    }

    /// Adds `value` to the window and judges the window including it.
    pub fn check(&mut self, value: f64) -> FilterVerdict {
        if self.window.len() == self.config.window {
            self.window.pop_front();
        }
        self.window.push_back(value);
        volatility_check(self.window.make_contiguous(), &self.config)
    }

    pub fn clear(&mut self) {
        self.window.clear();
    }
}

fn default_safe_distance() -> f64 {
    20.0
}

fn default_fault_slowdown() -> f64 {
    2.0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerConfig {
    #[serde(default = "default_safe_distance")]
    pub safe_distance: f64,
    #[serde(default)]
    pub filter: FilterConfig,
    /// Seconds of half-speed travel after a sensor fault.
    #[serde(default = "default_fault_slowdown")]
    pub fault_slowdown: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            safe_distance: default_safe_distance(),
            filter: FilterConfig::default(),
            fault_slowdown: default_fault_slowdown(),
        }
    }
}

/// How the controller should move this tick, from whichever distance source
/// it currently trusts.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Guidance {
    Clear { speed: f64 },
    Obstacle,
    Wait,
    Halt,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Leg {
    Lane,
    Shift { remaining: f64 },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ControllerStats {
    pub sensor_resets: u32,
    pub rejected: u32,
    pub faults: u32,
}

pub struct TickInput<'a> {
    pub reading: Option<SensorReading>,
    pub world: &'a WorldModel,
    pub map: Option<&'a HistoricalMap>,
}

#[derive(Clone, Debug)]
pub struct Controller {
    pub config: ControllerConfig,
    pub plan: LanePlan,
    pub mode: SensorMode,
    /// Normal cruising speed, cm/s.
    pub cruise: f64,
    state: ControlState,
    lane: usize,
    leg: Leg,
    leg_counter: u32,
    lane_heading: f64,
    queued_turn: Option<f64>,
    cleaned: f64,
    filter: VolatilityFilter,
    trusted: Option<f64>,
    since_trusted: f64,
    pending: Option<f64>,
    fault_since: Option<f64>,
    fault_until: Option<f64>,
    stats: ControllerStats,
    pub remit: MitigationState,
    pub remit_config: RemitConfig,
    halted: bool,
}

impl Controller {
    pub fn new(
        config: ControllerConfig,
        plan: LanePlan,
        mode: SensorMode,
        cruise: f64,
        remit_config: RemitConfig,
    ) -> Self {
        Self {
            filter: VolatilityFilter::new(config.filter),
            config,
            plan,
            mode,
            cruise,
            state: ControlState::Idle,
            lane: 0,
            leg: Leg::Lane,
            leg_counter: 0,
            lane_heading: 0.0,
            queued_turn: None,
            cleaned: 0.0,
            trusted: None,
            since_trusted: 0.0,
            pending: None,
            fault_since: None,
            fault_until: None,
            stats: ControllerStats::default(),
            remit: MitigationState::new(cruise),
            remit_config,
            halted: false,
        }
    }

    pub fn state(&self) -> ControlState {
        self.state
    }

    pub fn lane(&self) -> usize {
        self.lane
    }

    pub fn cleaned_distance(&self) -> f64 {
        self.cleaned
    }

    pub fn stats(&self) -> ControllerStats {
        self.stats
    }

    /// True when mitigation had to stop because the map could not guide it.
    pub fn halted(&self) -> bool {
        self.halted
    }

    pub fn mitigating(&self) -> bool {
        self.remit.in_mitigation()
    }

    pub fn snapshot(&self) -> ControlSnapshot {
        ControlSnapshot {
            state: self.state,
            leg: self.leg_counter,
            lane: self.lane,
            lateral: matches!(self.leg, Leg::Shift { .. }),
            mitigating: self.mitigating(),
        }
    }

    /// Marks the robot as spinning in place in front of an obstacle.
    pub fn crash(&mut self, _event: &CollisionEvent) {
        self.state = ControlState::Spinning;
    }

    pub fn enter_mitigation(&mut self, verdict: &DetectionVerdict) -> crate::Result<()> {
        remit::enter_mitigation(&mut self.remit, verdict, &self.remit_config)
    }

    /// Leaves mitigation after the attacker has been blocked.
    pub fn resume_normal(&mut self, t: f64) {
        self.remit.leave(t);
        self.reset_perception();
    }

    /// Perceived distance ahead from the sensor path, if one is known.
    pub fn perceived(&self) -> Option<f64> {
        self.trusted.map(|v| v - self.since_trusted)
    }

    fn reset_perception(&mut self) {
        self.filter.clear();
        self.trusted = None;
        self.since_trusted = 0.0;
        self.pending = None;
    }

    fn fault(&mut self, t: f64) {
        self.stats.faults += 1;
        self.stats.sensor_resets += 1;
        self.pending = None;
        if self.fault_since.is_none() {
            self.fault_since = Some(t);
            self.fault_until = Some(t + self.config.fault_slowdown);
        }
    }

    fn accept(&mut self, v: f64) {
        self.trusted = Some(v);
        self.since_trusted = 0.0;
        self.pending = None;
        self.fault_since = None;
    }

    /// Feeds one numeric value through the plausibility checks. Returns true
    /// if the value is now trusted.
    fn ingest(&mut self, v: f64, t: f64) -> bool {
        if self.filter.check(v) == FilterVerdict::Reject {
            self.stats.rejected += 1;
            self.fault(t);
            return false;
        }
        let mag = self.config.filter.reversal_magnitude;
        let reference = self.pending.or_else(|| self.perceived());
        match reference {
            Some(r) if (v - r).abs() <= mag => {
                self.accept(v);
                true
            }
            _ => {
                // a jump, or nothing to compare with yet: wait for a second look
                self.pending = Some(v);
                false
            }
        }
    }

    fn sensor_guidance(&mut self, reading: Option<SensorReading>, t: f64) -> Guidance {
        let safe = self.config.safe_distance;
        match self.mode {
            SensorMode::ProactiveThreshold { .. } => match reading {
                Some(r) if r.is_alert() => Guidance::Obstacle,
                _ => Guidance::Clear { speed: self.cruise },
            },
            SensorMode::Passive | SensorMode::ProactivePeriodic { .. } => {
                let fresh = match reading {
                    Some(r) => match r.numeric() {
                        Some(v) => self.ingest(v, t),
                        None => {
                            self.fault(t);
                            false
                        }
                    },
                    None if self.mode.is_passive() => {
                        self.fault(t);
                        false
                    }
                    None => false,
                };
                let periodic = !self.mode.is_passive();
                let Some(est) = self.perceived() else {
                    return Guidance::Wait;
                };
                let slowed = self.fault_until.is_some_and(|until| t < until);
                let expired = self
                    .fault_since
                    .is_some_and(|since| t >= since + self.config.fault_slowdown);
                if est <= safe {
                    return if fresh || (periodic && self.pending.is_none()) {
                        Guidance::Obstacle
                    } else {
                        Guidance::Wait
                    };
                }
                if expired && !fresh {
                    // untrusted for too long: wait for the sensor to recover
                    return Guidance::Wait;
                }
                Guidance::Clear {
                    speed: if slowed {
                        self.cruise / 2.0
                    } else {
                        self.cruise
                    },
                }
            }
        }
    }

    pub fn tick(&mut self, input: TickInput<'_>) -> Command {
        let world = input.world;
        let t = world.clock();
        let pose = world.robot;
        if self.state.is_terminal() {
            return Command::stop();
        }
        if self.state == ControlState::Idle {
            self.lane_heading = pose.heading;
            self.state = ControlState::Forward;
        }

        let guidance = if self.mitigating() {
            match input.map {
                Some(map) => remit::mitigation_tick(
                    &mut self.remit,
                    map,
                    world,
                    &self.remit_config,
                    self.config.safe_distance,
                ),
                None => Guidance::Halt,
            }
        } else {
            self.sensor_guidance(input.reading, t)
        };

        let cmd = self.advance(guidance, &pose, world);
        if cmd.speed > 0.0 {
            let step = cmd.speed * world.dt;
            self.cleaned += step;
            self.since_trusted += step;
        }
        cmd
    }

    fn moving_state(&self, world: &WorldModel) -> ControlState {
        if self.mitigating() {
            ControlState::Mitigation
        } else if world.in_doorway() {
            ControlState::DoorCrossing
        } else {
            ControlState::Forward
        }
    }

    fn advance(&mut self, guidance: Guidance, pose: &Pose, world: &WorldModel) -> Command {
        if let Some(heading) = self.queued_turn.take() {
            return self.rotate(pose.heading, heading);
        }
        if let ControlState::Turning(_) = self.state {
            self.state = self.moving_state(world);
        }

        match guidance {
            Guidance::Halt => {
                self.halted = true;
                self.finish(world.clock());
                Command::stop()
            }
            Guidance::Wait => {
                self.state = self.moving_state(world);
                Command::stop()
            }
            Guidance::Obstacle => match self.leg {
                Leg::Lane => self.end_lane(pose, world.clock()),
                Leg::Shift { .. } => {
                    // no room to slide over: nothing left to clean
                    self.finish(world.clock());
                    Command::stop()
                }
            },
            Guidance::Clear { speed } => {
                self.state = self.moving_state(world);
                match self.leg {
                    Leg::Lane => Command::drive(speed),
                    Leg::Shift { remaining } => {
                        let step = (speed * world.dt).min(remaining);
                        let left = remaining - step;
                        if left <= 1e-9 {
                            self.leg = Leg::Lane;
                            self.lane += 1;
                            self.leg_counter += 1;
                            self.lane_heading = normalize_heading(self.lane_heading + PI);
                            self.queued_turn = Some(self.lane_heading);
                        } else {
                            self.leg = Leg::Shift { remaining: left };
                        }
                        Command::drive(step / world.dt)
                    }
                }
            }
        }
    }

    fn rotate(&mut self, from: f64, to: f64) -> Command {
        let dir = if (to - from).sin() >= 0.0 {
            TurnDirection::Left
        } else {
            TurnDirection::Right
        };
        self.state = ControlState::Turning(dir);
        self.reset_perception();
        Command::turn(to)
    }

    fn end_lane(&mut self, pose: &Pose, t: f64) -> Command {
        let current = Pose::new(pose.x, pose.y, self.lane_heading);
        match self.plan.next_lane(self.lane, &current) {
            None => {
                self.finish(t);
                Command::stop()
            }
            Some(wp) => {
                self.leg = Leg::Shift {
                    remaining: self.plan.lane_width,
                };
                self.leg_counter += 1;
                self.rotate(pose.heading, wp.shift_heading)
            }
        }
    }

    fn finish(&mut self, t: f64) {
        self.state = ControlState::Done;
        if self.mitigating() {
            self.remit.complete(t);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Point, Rect};

    fn room_world(w: f64, h: f64, start: Pose) -> WorldModel {
        let room = Rect::new(Point::new(0.0, 0.0), Point::new(w, h));
        WorldModel::new(
            vec![room],
            room.edges().to_vec(),
            vec![],
            None,
            start,
            17.0,
            0.1,
        )
    }

    fn controller(shifts: Vec<Shift>) -> Controller {
        Controller::new(
            ControllerConfig::default(),
            LanePlan {
                lane_width: 34.0,
                shifts,
            },
            SensorMode::Passive,
            5.0,
            RemitConfig::default(),
        )
    }

    fn genuine(world: &WorldModel) -> SensorReading {
        SensorReading {
            value: Some(world.sense()),
            kind: crate::sensing::ReadingKind::Numeric,
            timestamp: world.clock(),
            observed_latency: 5.0,
            mode: SensorMode::Passive,
        }
    }

    fn run_clean(ctl: &mut Controller, world: &mut WorldModel, max_ticks: usize) {
        for _ in 0..max_ticks {
            if ctl.state().is_terminal() {
                break;
            }
            let r = genuine(world);
            let cmd = ctl.tick(TickInput {
                reading: Some(r),
                world,
                map: None,
            });
            world.step(cmd);
        }
    }

    #[test]
    fn filter_examples() {
        let cfg = FilterConfig::default();
        let mutated = [26.0, 128.0, 5.0, 16.0, 3.0, 241.0];
        assert_eq!(volatility_check(&mutated, &cfg), FilterVerdict::Reject);
        let door = [30.0, 25.0, 20.0, 180.0, 175.0];
        assert_eq!(volatility_check(&door, &cfg), FilterVerdict::Accept);
        let approach = [60.0, 59.5, 59.0, 58.5, 58.0, 57.5];
        assert_eq!(volatility_check(&approach, &cfg), FilterVerdict::Accept);
    }

    #[test]
    fn forward_until_safe_distance_then_turn() {
        let mut world = room_world(240.0, 150.0, Pose::new(217.0, 118.0, PI));
        let mut ctl = controller(vec![Shift::Down]);
        let mut turned_at = None;
        for _ in 0..1000 {
            let r = genuine(&world);
            let cmd = ctl.tick(TickInput {
                reading: Some(r),
                world: &world,
                map: None,
            });
            if cmd.rotate_to.is_some() {
                turned_at = Some(r.value.unwrap());
                break;
            }
            world.step(cmd);
        }
        let d = turned_at.expect("turned");
        assert!(d <= 20.0 && d > 19.0, "turned at {d}");
        assert!(matches!(ctl.state(), ControlState::Turning(_)));
    }

    #[test]
    fn plan_reverses_heading_each_lane() {
        let plan = LanePlan {
            lane_width: 34.0,
            shifts: vec![Shift::Down],
        };
        let wp = plan.next_lane(0, &Pose::new(37.0, 118.0, PI)).unwrap();
        assert_eq!(wp.lane, 1);
        assert!((wp.lane_heading - 0.0).abs() < 1e-12);
        assert!((wp.target.y - 84.0).abs() < 1e-12);
        assert!(plan.next_lane(1, &Pose::new(0.0, 0.0, 0.0)).is_none());
    }

    #[test]
    fn clean_zigzag_completes_and_tracks_distance() {
        let mut world = room_world(240.0, 150.0, Pose::new(217.0, 118.0, PI));
        let mut ctl = controller(vec![Shift::Down, Shift::Down]);
        let mut path = 0.0;
        for _ in 0..5000 {
            if ctl.state().is_terminal() {
                break;
            }
            let before = world.robot.position();
            let r = genuine(&world);
            let cmd = ctl.tick(TickInput {
                reading: Some(r),
                world: &world,
                map: None,
            });
            world.step(cmd);
            path += before.distance(world.robot.position());
        }
        assert_eq!(ctl.state(), ControlState::Done);
        assert_eq!(ctl.lane(), 2);
        assert!((ctl.cleaned_distance() - path).abs() < 1e-6);
        // lane ends sit at radius + safe distance from each wall: x = 37 and 203
        let expected = (217.0 - 37.0) + 34.0 + (203.0 - 37.0) + 34.0 + (203.0 - 37.0);
        assert!(
            (ctl.cleaned_distance() - expected).abs() < 1.0,
            "{}",
            ctl.cleaned_distance()
        );
    }

    #[test]
    fn absent_readings_stop_the_robot() {
        let mut world = room_world(240.0, 150.0, Pose::new(217.0, 118.0, PI));
        let mut ctl = controller(vec![]);
        run_clean(&mut ctl, &mut world, 20);
        let x0 = world.robot.x;
        for _ in 0..40 {
            let cmd = ctl.tick(TickInput {
                reading: None,
                world: &world,
                map: None,
            });
            world.step(cmd);
        }
        let moved = x0 - world.robot.x;
        // half speed for two seconds, then wait
        assert!((moved - 5.0).abs() < 0.3, "moved {moved}");
        assert!(ctl.stats().sensor_resets > 0);
    }

    #[test]
    fn single_jump_is_held_until_confirmed() {
        let mut world = room_world(240.0, 150.0, Pose::new(217.0, 118.0, PI));
        let mut ctl = controller(vec![]);
        run_clean(&mut ctl, &mut world, 20);
        let before = ctl.perceived().unwrap();
        let mut r = genuine(&world);
        r.value = Some(30.0);
        ctl.tick(TickInput {
            reading: Some(r),
            world: &world,
            map: None,
        });
        assert!(ctl.perceived().unwrap() > before - 1.0);
        assert!(ctl.state().is_moving());
    }
}
