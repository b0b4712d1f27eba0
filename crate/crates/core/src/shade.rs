//! Shadow attack detector: latency fingerprinting, cross-reference validation
//! against the historical map, and a packet-rate intrusion detector, composed
//! by a dispatch on what the caller knows about the sensor.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::histmap::HistoricalMap;
use crate::sensing::{SensorMode, SensorReading};
use crate::world::Pose;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Inbound,
    Outbound,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Purpose {
    Telemetry,
    Ack,
    Intercept,
    Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Packet {
    pub t: f64,
    pub direction: Direction,
    pub size: u32,
    pub purpose: Purpose,
}

fn default_retention() -> f64 {
    30.0
}

/// Simulated traffic on the robot's network interface, trimmed to the last
/// `retention` seconds.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PacketLog {
    #[serde(default = "default_retention")]
    pub retention: f64,
    packets: VecDeque<Packet>,
    total: u64,
}

impl Default for PacketLog {
    fn default() -> Self {
        Self::with_retention(default_retention())
    }
}

impl PacketLog {
    pub fn with_retention(retention: f64) -> Self {
        Self {
            retention,
            packets: VecDeque::new(),
            total: 0,
        }
    }

    pub fn record(&mut self, t: f64, direction: Direction, size: u32, purpose: Purpose) {
        self.packets.push_back(Packet {
            t,
            direction,
            size,
            purpose,
        });
        self.total += 1;
        while self
            .packets
            .front()
            .is_some_and(|p| p.t < t - self.retention)
        {
            self.packets.pop_front();
        }
    }

    /// The robot's own status report and its acknowledgement.
    pub fn record_telemetry(&mut self, t: f64) {
        self.record(t, Direction::Outbound, 128, Purpose::Telemetry);
        self.record(t, Direction::Inbound, 40, Purpose::Ack);
    }

    pub fn len(&self) -> usize {
        self.packets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.packets.is_empty()
    }

    /// Packets ever recorded, including trimmed ones.
    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn packets(&self) -> impl Iterator<Item = &Packet> {
        self.packets.iter()
    }

    /// Packets with `from < t <= to`.
    pub fn count_in(&self, from: f64, to: f64) -> usize {
        const EPS: f64 = 1e-9;
        self.packets
            .iter()
            .filter(|p| p.t > from + EPS && p.t <= to + EPS)
            .count()
    }

    /// Earliest recorded time still retained.
    pub fn first_time(&self) -> Option<f64> {
        self.packets.front().map(|p| p.t)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorKind {
    Fingerprinting,
    Crv,
    Nid,
    /// The composite dispatcher.
    Shade,
}

impl DetectorKind {
    pub const ALL: [DetectorKind; 4] = [
        DetectorKind::Fingerprinting,
        DetectorKind::Crv,
        DetectorKind::Nid,
        DetectorKind::Shade,
    ];

    pub fn label(self) -> &'static str {
        match self {
            DetectorKind::Fingerprinting => "fingerprinting",
            DetectorKind::Crv => "crv",
            DetectorKind::Nid => "nid",
            DetectorKind::Shade => "shade",
        }
    }
}

impl std::str::FromStr for DetectorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "fingerprinting" | "fp" => Ok(DetectorKind::Fingerprinting),
            "crv" => Ok(DetectorKind::Crv),
            "nid" => Ok(DetectorKind::Nid),
            "shade" | "composite" => Ok(DetectorKind::Shade),
            other => Err(format!("unknown detector '{other}'")),
        }
    }
}

/// Which check produced a verdict.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Fingerprinting,
    Crv,
    Nid,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionVerdict {
    pub attack: bool,
    pub method: Method,
    /// Which detector asked; `Shade` for the composite.
    pub detector: DetectorKind,
    pub issued_at: f64,
}

/// What the controller hands to the detector each tick.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DetectionRequest {
    pub has_sensor_info: bool,
    pub mode: Option<SensorMode>,
    pub latency: Option<f64>,
    pub pose: Option<Pose>,
    pub reading: Option<SensorReading>,
    pub time: f64,
}

impl DetectionRequest {
    pub fn with_sensor(
        mode: SensorMode,
        pose: Pose,
        reading: Option<SensorReading>,
        t: f64,
    ) -> Self {
        let latency = match mode {
            SensorMode::Passive => reading.map(|r| r.observed_latency),
            _ => None,
        };
        Self {
            has_sensor_info: true,
            mode: Some(mode),
            latency,
            pose: Some(pose),
            reading,
            time: t,
        }
    }

    pub fn without_sensor(t: f64) -> Self {
        Self {
            has_sensor_info: false,
            mode: None,
            latency: None,
            pose: None,
            reading: None,
            time: t,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShadeConfig {
    /// Responses slower than this (ms) did not come straight from the sensor.
    pub fingerprint_threshold_ms: f64,
    pub crv_tolerance: f64,
    /// An alert is overdue once the map puts the obstacle this far inside
    /// the alert distance.
    pub crv_alert_slack: f64,
    /// An alert is spurious when the map shows more than this beyond the
    /// alert distance.
    pub crv_spurious_margin: f64,
    /// Scan period and window, seconds. Scans double as the periodic
    /// request that carries no sensor information.
    pub nid_window: f64,
    pub nid_factor: f64,
    pub nid_consecutive: u32,
}

impl Default for ShadeConfig {
    fn default() -> Self {
        Self {
            fingerprint_threshold_ms: 100.0,
            crv_tolerance: 25.0,
            crv_alert_slack: 0.25,
            crv_spurious_margin: 10.0,
            nid_window: 5.0,
            nid_factor: 2.0,
            nid_consecutive: 2,
        }
    }
}

pub fn fingerprinting_check(latency_ms: f64, cfg: &ShadeConfig) -> bool {
    latency_ms > cfg.fingerprint_threshold_ms
}

/// Cross-reference validation of one tick's delivery against the map's
/// prediction `expected`. `reading` is what arrived this tick, if anything.
pub fn crv_judge(
    mode: SensorMode,
    reading: Option<&SensorReading>,
    expected: f64,
    cfg: &ShadeConfig,
) -> bool {
    match mode {
        SensorMode::ProactiveThreshold { alert_at } => {
            let alerted = reading.is_some_and(|r| r.is_alert());
            if alerted {
                expected > alert_at + cfg.crv_spurious_margin
            } else {
                expected <= alert_at - cfg.crv_alert_slack
            }
        }
        SensorMode::Passive => match reading {
            Some(r) => match r.numeric() {
                Some(v) => (v - expected).abs() > cfg.crv_tolerance,
                None => true,
            },
            // nothing was requested this tick
            None => false,
        },
        SensorMode::ProactivePeriodic { .. } => match reading {
            Some(r) => match r.numeric() {
                Some(v) => (v - expected).abs() > cfg.crv_tolerance,
                None => true,
            },
            None => false,
        },
    }
}

/// Map-backed CRV. Inconclusive (false) when the pose is off the map.
pub fn crv_check(
    pose: &Pose,
    mode: SensorMode,
    reading: Option<&SensorReading>,
    map: &HistoricalMap,
    cfg: &ShadeConfig,
) -> bool {
    match map.expected_distance(pose) {
        Ok(expected) => crv_judge(mode, reading, expected, cfg),
        Err(_) => false,
    }
}

/// Packet-rate intrusion detector with a periodic scan.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Nid {
    /// Packets per scan window in clean operation.
    pub baseline: f64,
    next_scan: f64,
    streak: u32,
    positive_since: Option<f64>,
}

impl Nid {
    pub fn new(baseline: f64, cfg: &ShadeConfig) -> Self {
        Self {
            baseline,
            next_scan: cfg.nid_window,
            streak: 0,
            positive_since: None,
        }
    }

    /// Mean packets per window over a clean log spanning `duration` seconds.
    pub fn baseline_from(log: &PacketLog, duration: f64, cfg: &ShadeConfig) -> f64 {
        let windows = (duration / cfg.nid_window).floor().max(1.0);
        let span = windows * cfg.nid_window;
        log.count_in(0.0, span) as f64 / windows
    }

    pub fn is_due(&self, t: f64) -> bool {
        t + 1e-9 >= self.next_scan
    }

    /// Runs the scan if one is due. Returns the standing verdict after a scan.
    pub fn scan(&mut self, log: &PacketLog, t: f64, cfg: &ShadeConfig) -> Option<bool> {
        if !self.is_due(t) {
            return None;
        }
        self.next_scan += cfg.nid_window;
        Some(self.judge(log, t, cfg))
    }

    /// One window judgement at time `t`, independent of the scan schedule.
    pub fn judge(&mut self, log: &PacketLog, t: f64, cfg: &ShadeConfig) -> bool {
        if t + 1e-9 < cfg.nid_window {
            return self.positive_since.is_some();
        }
        let count = log.count_in(t - cfg.nid_window, t) as f64;
        if count >= cfg.nid_factor * self.baseline.max(1.0) {
            self.streak += 1;
        } else {
            self.streak = 0;
        }
        if self.streak >= cfg.nid_consecutive && self.positive_since.is_none() {
            self.positive_since = Some(t);
        }
        self.positive_since.is_some()
    }

    pub fn positive(&self) -> bool {
        self.positive_since.is_some()
    }
}

/// Stateless helper matching the one-shot form: anomalous in the window
/// ending at `t` and the one before it.
pub fn nid_check(log: &PacketLog, t: f64, baseline: f64, cfg: &ShadeConfig) -> bool {
    if t + 1e-9 < cfg.nid_window {
        return false;
    }
    (0..cfg.nid_consecutive).all(|k| {
        let end = t - k as f64 * cfg.nid_window;
        end + 1e-9 >= cfg.nid_window
            && log.count_in(end - cfg.nid_window, end) as f64 >= cfg.nid_factor * baseline.max(1.0)
    })
}

/// Per-trial detector bank. Each enabled detector is evaluated every tick and
/// reports its verdicts.
#[derive(Clone, Debug)]
pub struct Shade {
    pub config: ShadeConfig,
    pub enabled: Vec<DetectorKind>,
    nid: Nid,
}

impl Shade {
    pub fn new(config: ShadeConfig, enabled: Vec<DetectorKind>, nid_baseline: f64) -> Self {
        Self {
            nid: Nid::new(nid_baseline, &config),
            config,
            enabled,
        }
    }

    pub fn nid(&self) -> &Nid {
        &self.nid
    }

    /// Evaluates one tick. The NID scan schedule is shared by the standalone
    /// NID detector and the composite.
    pub fn on_tick(
        &mut self,
        request: &DetectionRequest,
        map: Option<&HistoricalMap>,
        log: &PacketLog,
    ) -> Vec<DetectionVerdict> {
        let t = request.time;
        let cfg = self.config;
        let mut out = Vec::new();
        let nid_now = self.nid.scan(log, t, &cfg);

        for &kind in &self.enabled {
            match kind {
                DetectorKind::Fingerprinting => {
                    if let Some(v) = fingerprint_verdict(request, &cfg, kind) {
                        out.push(v);
                    }
                }
                DetectorKind::Crv => {
                    if let Some(v) = crv_verdict(request, map, &cfg, kind) {
                        out.push(v);
                    }
                }
                DetectorKind::Nid => {
                    if let Some(attack) = nid_now {
                        out.push(DetectionVerdict {
                            attack,
                            method: Method::Nid,
                            detector: kind,
                            issued_at: t,
                        });
                    }
                }
                DetectorKind::Shade => {
                    if let Some(v) = self.composite(request, map, nid_now) {
                        out.push(v);
                    }
                }
            }
        }
        out
    }

    fn composite(
        &self,
        request: &DetectionRequest,
        map: Option<&HistoricalMap>,
        nid_now: Option<bool>,
    ) -> Option<DetectionVerdict> {
        let cfg = &self.config;
        let t = request.time;
        let nid_verdict = |attack| DetectionVerdict {
            attack,
            method: Method::Nid,
            detector: DetectorKind::Shade,
            issued_at: t,
        };
        // periodic request carrying no sensor information
        let periodic = nid_now.map(nid_verdict);
        if !request.has_sensor_info {
            return nid_now.map(nid_verdict);
        }
        let sensor = match request.mode? {
            SensorMode::Passive => fingerprint_verdict(request, cfg, DetectorKind::Shade),
            _ => {
                let crv = crv_verdict(request, map, cfg, DetectorKind::Shade);
                match crv {
                    Some(v) if v.attack => Some(v),
                    _ if self.nid.positive() => Some(nid_verdict(true)),
                    other => other,
                }
            }
        };
        match (sensor, periodic) {
            (Some(s), _) if s.attack => Some(s),
            (_, Some(p)) if p.attack => Some(p),
            (s, p) => s.or(p),
        }
    }
}

fn fingerprint_verdict(
    request: &DetectionRequest,
    cfg: &ShadeConfig,
    detector: DetectorKind,
) -> Option<DetectionVerdict> {
    if !request.has_sensor_info || !request.mode?.is_passive() {
        return None;
    }
    let latency = request.latency?;
    Some(DetectionVerdict {
        attack: fingerprinting_check(latency, cfg),
        method: Method::Fingerprinting,
        detector,
        issued_at: request.time + latency / 1000.0,
    })
}

fn crv_verdict(
    request: &DetectionRequest,
    map: Option<&HistoricalMap>,
    cfg: &ShadeConfig,
    detector: DetectorKind,
) -> Option<DetectionVerdict> {
    if !request.has_sensor_info {
        return None;
    }
    let map = map?;
    let pose = request.pose?;
    let mode = request.mode?;
    Some(DetectionVerdict {
        attack: crv_check(&pose, mode, request.reading.as_ref(), map, cfg),
        method: Method::Crv,
        detector,
        issued_at: request.time,
    })
}
