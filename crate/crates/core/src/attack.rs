//! Man-in-the-middle channel for the two attack models, and the two
//! baseline fuzzers (volatile mutational values, random-time alteration).

use rand::{Rng, RngExt};
use serde::{Deserialize, Serialize};

use crate::controller::ControlSnapshot;
use crate::sensing::{LatencyModel, ReadingKind, SensorReading};
use crate::shade::{Direction, PacketLog, Purpose};
use crate::world::{clamp_reading, SENSOR_MAX, SENSOR_MIN};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackModel {
    #[default]
    None,
    /// Withhold sensor output so the controller receives nothing.
    Suspension,
    /// Replace genuine values with forged ones.
    Fabrication,
}

impl AttackModel {
    pub fn label(self) -> &'static str {
        match self {
            AttackModel::None => "none",
            AttackModel::Suspension => "suspension",
            AttackModel::Fabrication => "fabrication",
        }
    }
}

impl std::str::FromStr for AttackModel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(AttackModel::None),
            "suspension" | "suspend" => Ok(AttackModel::Suspension),
            "fabrication" | "fabricate" => Ok(AttackModel::Fabrication),
            other => Err(format!("unknown attack model '{other}'")),
        }
    }
}

/// A fuzzer's per-reading decision.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Tamper {
    Pass,
    Replace(f64),
    Drop,
}

/// What a fuzzer can observe on the compromised host before a reading is
/// delivered.
#[derive(Clone, Copy, Debug)]
pub struct TapContext<'a> {
    pub t: f64,
    pub genuine: Option<&'a SensorReading>,
    /// Distance the compromised host can measure directly from the sensor,
    /// whatever mode the controller runs it in.
    pub range: f64,
    pub control: ControlSnapshot,
}

pub trait Fuzzer: Send {
    fn tamper(&mut self, ctx: &TapContext<'_>) -> Tamper;
}

/// Always returns the same decision; used by tests and what-if runs.
#[derive(Clone, Copy, Debug)]
pub struct FixedTamper(pub Tamper);

impl Fuzzer for FixedTamper {
    fn tamper(&mut self, _ctx: &TapContext<'_>) -> Tamper {
        self.0
    }
}

/// Never tampers.
#[derive(Clone, Copy, Debug, Default)]
pub struct NoFuzzer;

impl Fuzzer for NoFuzzer {
    fn tamper(&mut self, _ctx: &TapContext<'_>) -> Tamper {
        Tamper::Pass
    }
}

#[derive(Clone, Debug)]
pub struct AttackChannel {
    pub model: AttackModel,
    pub compromised: bool,
    pub active_since: Option<f64>,
    pub latency: LatencyModel,
    intercepted: u64,
}

impl AttackChannel {
    pub fn new(model: AttackModel, compromised: bool, latency: LatencyModel) -> Self {
        Self {
            model,
            compromised,
            active_since: None,
            latency,
            intercepted: 0,
        }
    }

    pub fn passthrough() -> Self {
        Self::new(AttackModel::None, false, LatencyModel::default())
    }

    pub fn intercepts(&self) -> bool {
        self.compromised && self.model != AttackModel::None
    }

    pub fn intercepted(&self) -> u64 {
        self.intercepted
    }

    /// Applies the attack model to one reading. `tamper` is the fuzzer's
    /// decision; the model decides what that decision can do.
    pub fn intercept<R: Rng + ?Sized>(
        &mut self,
        reading: Option<SensorReading>,
        tamper: Tamper,
        t: f64,
        log: &mut PacketLog,
        rng: &mut R,
    ) -> Option<SensorReading> {
        if !self.intercepts() {
            return reading;
        }
        let suspended = self.model == AttackModel::Suspension && self.active_since.is_some();
        if tamper == Tamper::Pass && !suspended {
            return reading;
        }
        match self.model {
            AttackModel::None => reading,
            AttackModel::Suspension => {
                if self.active_since.is_none() {
                    self.active_since = Some(t);
                    // one command exchange suspends the sensor for good
                    log.record(t, Direction::Inbound, 96, Purpose::Command);
                    log.record(t, Direction::Outbound, 64, Purpose::Command);
                }
                self.intercepted += 1;
                let r = reading?;
                match r.kind {
                    ReadingKind::Alert => None,
                    ReadingKind::Numeric => Some(SensorReading { value: None, ..r }),
                }
            }
            AttackModel::Fabrication => {
                let Tamper::Replace(value) = tamper else {
                    return reading;
                };
                let r = reading?;
                self.active_since.get_or_insert(t);
                self.intercepted += 1;
                log.record(t, Direction::Outbound, 64, Purpose::Intercept);
                log.record(t, Direction::Inbound, 64, Purpose::Intercept);
                Some(SensorReading {
                    value: Some(clamp_reading(value)),
                    kind: ReadingKind::Numeric,
                    timestamp: t,
                    observed_latency: self.latency.draw_network(rng),
                    mode: r.mode,
                })
            }
        }
    }
}

/// Mutational generator standing in for a general-purpose fuzzer: values
/// span the sensor range and swing in alternating directions by at least
/// `min_swing` each step.
#[derive(Clone, Debug)]
pub struct VolatileStream<R> {
    rng: R,
    last: Option<f64>,
    rising: bool,
    pub min_swing: f64,
}

impl<R: Rng> VolatileStream<R> {
    pub fn new(mut rng: R) -> Self {
        let rising = rng.random_bool(0.5);
        Self {
            rng,
            last: None,
            rising,
            min_swing: 40.0,
        }
    }

    pub fn next_value(&mut self) -> f64 {
        let v = match self.last {
            None => self.rng.random_range(SENSOR_MIN..=SENSOR_MAX),
            Some(prev) => {
                let (lo, hi) = if self.rising {
                    (prev + self.min_swing, SENSOR_MAX)
                } else {
                    (SENSOR_MIN, prev - self.min_swing)
                };
                if lo > hi {
                    // pinned at an edge: swing the other way instead
                    self.rising = !self.rising;
                    return self.next_value();
                }
                self.rng.random_range(lo..=hi)
            }
        };
        if self.last.is_some() {
            self.rising = !self.rising;
        }
        self.last = Some(v);
        v
    }
}

impl<R: Rng> Iterator for VolatileStream<R> {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        Some(self.next_value())
    }
}

/// Shorthand for [`VolatileStream::new`].
pub fn volatile_stream<R: Rng>(rng: R) -> VolatileStream<R> {
    VolatileStream::new(rng)
}

/// Default hazardous alteration for the random-time fuzzer, cm.
pub const DEFAULT_HAZARD_DELTA: f64 = 50.0;

/// One firing of the random-time fuzzer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomAttackPlan {
    pub fire_time: f64,
    pub delta: f64,
}

pub fn random_attack_plan<R: Rng + ?Sized>(
    rng: &mut R,
    trial_length: f64,
    delta: f64,
) -> RandomAttackPlan {
    assert!(trial_length > 0.0, "trial length must be positive");
    RandomAttackPlan {
        fire_time: rng.random_range(0.0..trial_length),
        delta,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaselineKind {
    Volatile,
    RandomTime { hazard_delta: f64 },
}

/// A blind fuzzer: fires once at a random time and tampers for `burst`
/// seconds without looking at the robot's state.
#[derive(Clone, Debug)]
pub struct BaselineFuzzer<R> {
    pub kind: BaselineKind,
    pub fire_time: f64,
    pub burst: f64,
    stream: VolatileStream<R>,
}

impl<R: Rng> BaselineFuzzer<R> {
    pub fn new(kind: BaselineKind, mut rng: R, trial_length: f64, burst: f64) -> Self {
        let delta = match kind {
            BaselineKind::RandomTime { hazard_delta } => hazard_delta,
            BaselineKind::Volatile => 0.0,
        };
        let plan = random_attack_plan(&mut rng, trial_length, delta);
        Self {
            kind,
            fire_time: plan.fire_time,
            burst,
            stream: VolatileStream::new(rng),
        }
    }

    pub fn firing(&self, t: f64) -> bool {
        t >= self.fire_time && t < self.fire_time + self.burst
    }
}

impl<R: Rng + Send> Fuzzer for BaselineFuzzer<R> {
    fn tamper(&mut self, ctx: &TapContext<'_>) -> Tamper {
        if !self.firing(ctx.t) {
            return Tamper::Pass;
        }
        let Some(v) = ctx.genuine.and_then(|r| r.numeric()) else {
            return Tamper::Pass;
        };
        match self.kind {
            BaselineKind::Volatile => Tamper::Replace(self.stream.next_value()),
            BaselineKind::RandomTime { hazard_delta } => Tamper::Replace(v + hazard_delta),
        }
    }
}
