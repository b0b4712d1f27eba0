//! Ultrasonic distance sensor: operating modes, latency fingerprint, and the
//! delivery path through which an attacker may interpose.

use rand::RngExt;
use serde::{Deserialize, Serialize};

use crate::attack::{AttackChannel, Tamper};
use crate::shade::PacketLog;
use crate::world::{WorldModel, SENSOR_MAX, SENSOR_MIN};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SensorMode {
    /// The controller demands a reading every tick.
    #[default]
    Passive,
    /// The sensor raises a boolean alert when an obstacle is within `alert_at`.
    ProactiveThreshold { alert_at: f64 },
    /// The sensor pushes a numeric reading every `period` seconds.
    ProactivePeriodic { period: f64 },
}

impl SensorMode {
    pub fn is_passive(&self) -> bool {
        matches!(self, SensorMode::Passive)
    }

    pub fn validate(&self) -> Result<(), String> {
        match *self {
            SensorMode::Passive => Ok(()),
            SensorMode::ProactiveThreshold { alert_at } => {
                if (SENSOR_MIN..=SENSOR_MAX).contains(&alert_at) {
                    Ok(())
                } else {
                    Err(format!("alert_at {alert_at} outside [2, 400]"))
                }
            }
            SensorMode::ProactivePeriodic { period } => {
                if period > 0.0 {
                    Ok(())
                } else {
                    Err("periodic sensor period must be positive".into())
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReadingKind {
    Numeric,
    Alert,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensorReading {
    /// Distance in cm; `None` stands for an absent value.
    pub value: Option<f64>,
    pub kind: ReadingKind,
    pub timestamp: f64,
    /// Response latency in milliseconds.
    pub observed_latency: f64,
    pub mode: SensorMode,
}

impl SensorReading {
    pub fn numeric(&self) -> Option<f64> {
        match self.kind {
            ReadingKind::Numeric => self.value,
            ReadingKind::Alert => None,
        }
    }

    pub fn is_alert(&self) -> bool {
        self.kind == ReadingKind::Alert
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatencyModel {
    /// Direct sensor response time range, ms.
    pub genuine: [f64; 2],
    /// Round trip through a network relay, ms.
    pub via_network: [f64; 2],
}

impl Default for LatencyModel {
    fn default() -> Self {
        Self {
            genuine: [2.0, 12.0],
            via_network: [200.0, 250.0],
        }
    }
}

impl LatencyModel {
    pub fn validate(&self) -> Result<(), String> {
        let [g0, g1] = self.genuine;
        let [n0, n1] = self.via_network;
        if !(g0 >= 0.0 && g0 <= g1 && n0 <= n1) {
            return Err("latency ranges must be ordered and non-negative".into());
        }
        if g1 >= n0 && n1 >= g0 {
            return Err("genuine and network latency ranges overlap".into());
        }
        Ok(())
    }

    pub fn draw_genuine<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        rng.random_range(self.genuine[0]..=self.genuine[1])
    }

    pub fn draw_network<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        rng.random_range(self.via_network[0]..=self.via_network[1])
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorConfig {
    #[serde(default)]
    pub mode: SensorMode,
    #[serde(default)]
    pub latency: LatencyModel,
}

/// One physical distance sensor mounted at the robot's front.
#[derive(Clone, Debug)]
pub struct Sensor {
    pub mode: SensorMode,
    pub latency: LatencyModel,
    last_push: Option<f64>,
}

impl Sensor {
    pub fn new(mode: SensorMode, latency: LatencyModel) -> Self {
        Self {
            mode,
            latency,
            last_push: None,
        }
    }

    /// Produces the genuine reading for this tick, if the mode emits one.
    pub fn sample<R: rand::Rng + ?Sized>(
        &mut self,
        world: &WorldModel,
        rng: &mut R,
    ) -> Option<SensorReading> {
        let t = world.clock();
        let distance = world.sense();
        let (kind, value) = match self.mode {
            SensorMode::Passive => (ReadingKind::Numeric, Some(distance)),
            SensorMode::ProactiveThreshold { alert_at } => {
                if distance > alert_at {
                    return None;
                }
                (ReadingKind::Alert, None)
            }
            SensorMode::ProactivePeriodic { period } => {
                if let Some(last) = self.last_push {
                    if t - last < period - 1e-9 {
                        return None;
                    }
                }
                self.last_push = Some(t);
                (ReadingKind::Numeric, Some(distance))
            }
        };
        Some(SensorReading {
            value,
            kind,
            timestamp: t,
            observed_latency: self.latency.draw_genuine(rng),
            mode: self.mode,
        })
    }

    /// Forgets push timing, as after a power cycle.
    pub fn reset(&mut self) {
        self.last_push = None;
    }
}

/// Passes a reading through the (possibly compromised) channel.
pub fn deliver<R: rand::Rng + ?Sized>(
    reading: Option<SensorReading>,
    channel: &mut AttackChannel,
    tamper: Tamper,
    t: f64,
    log: &mut PacketLog,
    rng: &mut R,
) -> Option<SensorReading> {
    channel.intercept(reading, tamper, t, log, rng)
}
