use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attack::{
    AttackChannel, AttackModel, BaselineFuzzer, BaselineKind, Fuzzer, NoFuzzer, TapContext,
};
use crate::controller::{ControlState, Controller, TickInput};
use crate::histmap::{self, HistoricalMap, Provenance, TraceSample};
use crate::robofuzz::{build_plan, DirectedFuzzer, Emission, FuzzTarget, TriggerPolicy};
use crate::scenario::Scenario;
use crate::sensing::{deliver, Sensor, SensorMode};
use crate::shade::{DetectionRequest, DetectorKind, Method, Nid, PacketLog, Shade};
use crate::world::CollisionEvent;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FuzzerKind {
    None,
    Volatile,
    RandomTime,
    RoboFuzz,
}

impl FuzzerKind {
    pub fn label(self) -> &'static str {
        match self {
            FuzzerKind::None => "none",
            FuzzerKind::Volatile => "volatile",
            FuzzerKind::RandomTime => "random",
            FuzzerKind::RoboFuzz => "robofuzz",
        }
    }
}

impl std::str::FromStr for FuzzerKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(FuzzerKind::None),
            "volatile" | "mutational" => Ok(FuzzerKind::Volatile),
            "random" | "random_time" | "randomtime" => Ok(FuzzerKind::RandomTime),
            "robofuzz" | "directed" => Ok(FuzzerKind::RoboFuzz),
            other => Err(format!("unknown fuzzer '{other}'")),
        }
    }
}

/// Where a campaign's map comes from.
#[derive(Clone, Debug, Default)]
pub enum MapSource {
    /// Learn one from clean runs of the scenario when a consumer needs it.
    #[default]
    Learn,
    Provided(Arc<HistoricalMap>),
    /// No map; detectors or mitigation that need one are a configuration error.
    Missing,
}

#[derive(Clone, Debug)]
pub struct CampaignSpec {
    pub scenario: Scenario,
    pub fuzzer: FuzzerKind,
    pub target: FuzzTarget,
    pub attack: AttackModel,
    pub detectors: Vec<DetectorKind>,
    pub mitigation: bool,
    pub trials: usize,
    pub base_seed: u64,
    pub policy: TriggerPolicy,
    pub map: MapSource,
    /// Keep per-tick series for every trial.
    pub keep_series: bool,
}

impl CampaignSpec {
    pub fn new(scenario: Scenario) -> Self {
        let base_seed = scenario.seed;
        Self {
            scenario,
            fuzzer: FuzzerKind::None,
            target: FuzzTarget::CrashRobot,
            attack: AttackModel::None,
            detectors: Vec::new(),
            mitigation: false,
            trials: 1,
            base_seed,
            policy: TriggerPolicy::Trend,
            map: MapSource::Learn,
            keep_series: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        if self.trials == 0 {
            return Err(Error::config("a campaign needs at least one trial"));
        }
        if self.fuzzer != FuzzerKind::None && self.attack == AttackModel::None {
            return Err(Error::config(
                "a fuzzer needs an attack model to act through",
            ));
        }
        if self.fuzzer == FuzzerKind::None && self.attack != AttackModel::None {
            return Err(Error::config("an attack model needs a fuzzer to drive it"));
        }
        if matches!(self.fuzzer, FuzzerKind::Volatile | FuzzerKind::RandomTime)
            && self.attack != AttackModel::Fabrication
        {
            return Err(Error::config("baseline fuzzers only fabricate values"));
        }
        Ok(())
    }

    pub fn needs_map(&self) -> bool {
        self.mitigation
            || self
                .detectors
                .iter()
                .any(|d| matches!(d, DetectorKind::Crv | DetectorKind::Shade))
    }

    pub fn sensor_mode(&self) -> SensorMode {
        self.scenario.sensor_mode_for(self.attack)
    }
}

/// Facts about the unattacked scenario that trials are measured against.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub running_time: f64,
    pub cleaned_distance: f64,
    pub nid_baseline: f64,
    pub completed: bool,
}

/// Per-tick observation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesRow {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    /// Ground-truth distance ahead.
    pub range: f64,
    /// Numeric value the controller received, if any.
    pub delivered: Option<f64>,
    pub alert: bool,
    pub tampered: bool,
    pub state: ControlState,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Completed,
    Crashed,
    Timeout,
    /// Mitigation could not navigate and stopped.
    Halted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub detector: DetectorKind,
    pub detected_at: Option<f64>,
    pub method: Option<Method>,
    pub reaction: Option<f64>,
    pub false_positives: u32,
    pub evaluations: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MitigationSummary {
    pub entered_at: Option<f64>,
    pub speed: f64,
    pub sound_events: Vec<f64>,
    pub completions: usize,
    pub detours: u32,
    pub block_attempts: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub index: usize,
    pub seed: u64,
    pub outcome: Outcome,
    /// Whether the fuzzing target was achieved.
    pub success: bool,
    pub attack_start: Option<f64>,
    /// Ground-truth distance ahead when the attack started.
    pub attack_distance: Option<f64>,
    pub detections: Vec<DetectionRecord>,
    pub cleaned_distance: f64,
    pub running_time: f64,
    pub crossed_door: bool,
    pub collision: Option<CollisionEvent>,
    pub mitigation: Option<MitigationSummary>,
    pub rejected_readings: u32,
    pub sensor_resets: u32,
    pub min_separation: f64,
}

impl TrialRecord {
    pub fn detection(&self, kind: DetectorKind) -> Option<&DetectionRecord> {
        self.detections.iter().find(|d| d.detector == kind)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub record: TrialRecord,
    pub series: Vec<SeriesRow>,
    pub emissions: Vec<Emission>,
}

/// A campaign with its reference run and map resolved.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub spec: CampaignSpec,
    pub reference: Reference,
    pub map: Option<Arc<HistoricalMap>>,
}

const SENSOR_STREAM: u64 = 1;
const NETWORK_STREAM: u64 = 2;
const FUZZER_STREAM: u64 = 3;
const BLOCK_STREAM: u64 = 4;

fn stream(seed: u64, k: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(k);
    r
}

/// Runs the scenario without any attack and records the genuine trace.
pub fn clean_run(
    scenario: &Scenario,
    mode: SensorMode,
    seed: u64,
) -> (Reference, Vec<TraceSample>) {
    let mut spec = CampaignSpec::new(scenario.clone());
    spec.map = MapSource::Missing;
    let prepared = Prepared {
        spec,
        reference: Reference {
            running_time: scenario.timeout,
            cleaned_distance: 0.0,
            nid_baseline: 0.0,
            completed: false,
        },
        map: None,
    };
    let mut log = PacketLog::with_retention(f64::INFINITY);
    let result = simulate(&prepared, 0, seed, mode, Some(&mut log))
        .expect("an unattacked run needs no configuration beyond the scenario");
    let trace = result
        .series
        .iter()
        .map(|r| TraceSample {
            pose: crate::world::Pose::new(r.x, r.y, r.heading),
            reading: r.range,
        })
        .collect();
    let cfg = &scenario.shade;
    let reference = Reference {
        running_time: result.record.running_time,
        cleaned_distance: result.record.cleaned_distance,
        nid_baseline: Nid::baseline_from(&log, result.record.running_time, cfg),
        completed: result.record.outcome == Outcome::Completed,
    };
    (reference, trace)
}

/// Learns the scenario's map from clean passive passes.
pub fn learn_map(scenario: &Scenario, seed: u64) -> Result<HistoricalMap> {
    let passes: Vec<Vec<TraceSample>> = (0..scenario.map.passes as u64)
        .map(|k| clean_run(scenario, SensorMode::Passive, seed + k).1)
        .collect();
    histmap::learn(
        &passes,
        scenario.bounds(),
        scenario.map.resolution,
        scenario.robot.radius,
        Provenance {
            scenario: scenario.name.clone(),
            seed,
            passes: passes.len(),
        },
    )
}

pub fn prepare(spec: CampaignSpec) -> Result<Prepared> {
    spec.validate()?;
    let (reference, _) = clean_run(&spec.scenario, spec.sensor_mode(), spec.base_seed);
    let map = if spec.needs_map() {
        match &spec.map {
            MapSource::Learn => Some(Arc::new(learn_map(&spec.scenario, spec.base_seed)?)),
            MapSource::Provided(m) => Some(Arc::clone(m)),
            MapSource::Missing => {
                return Err(Error::config(
                    "CRV, the composite detector and mitigation need a map",
                ))
            }
        }
    } else {
        match &spec.map {
            MapSource::Provided(m) => Some(Arc::clone(m)),
            _ => None,
        }
    };
    Ok(Prepared {
        spec,
        reference,
        map,
    })
}

/// One seeded trial of a prepared campaign.
pub fn run_trial(prepared: &Prepared, index: usize) -> Result<TrialResult> {
    let seed = prepared.spec.base_seed.wrapping_add(index as u64);
    simulate(prepared, index, seed, prepared.spec.sensor_mode(), None)
}

fn build_fuzzer(prepared: &Prepared, seed: u64) -> Result<Box<dyn Fuzzer>> {
    let spec = &prepared.spec;
    let settings = spec.scenario.attack;
    let length = prepared.reference.running_time.max(spec.scenario.tick);
    Ok(match spec.fuzzer {
        FuzzerKind::None => Box::new(NoFuzzer),
        FuzzerKind::Volatile => Box::new(BaselineFuzzer::new(
            BaselineKind::Volatile,
            stream(seed, FUZZER_STREAM),
            length,
            settings.burst,
        )),
        FuzzerKind::RandomTime => Box::new(BaselineFuzzer::new(
            BaselineKind::RandomTime {
                hazard_delta: settings.hazard_delta,
            },
            stream(seed, FUZZER_STREAM),
            length,
            settings.burst,
        )),
        FuzzerKind::RoboFuzz => {
            let mut cfg = spec.scenario.robofuzz;
            cfg.policy = spec.policy;
            cfg.trend.closing_speed = spec.scenario.robot.speed();
            let plan = build_plan(spec.target, spec.attack, &cfg)?;
            Box::new(DirectedFuzzer::new(plan, cfg))
        }
    })
}

fn simulate(
    prepared: &Prepared,
    index: usize,
    seed: u64,
    mode: SensorMode,
    reference_log: Option<&mut PacketLog>,
) -> Result<TrialResult> {
    let spec = &prepared.spec;
    let sc = &spec.scenario;
    let map = prepared.map.as_deref();
    if spec.needs_map() && map.is_none() {
        return Err(Error::config("this trial needs a map"));
    }

    let mut world = sc.world();
    let mut sensor_rng = stream(seed, SENSOR_STREAM);
    let mut net_rng = stream(seed, NETWORK_STREAM);
    let mut block_rng = stream(seed, BLOCK_STREAM);
    let mut sensor = Sensor::new(mode, sc.sensor.latency);
    let mut channel = AttackChannel::new(
        spec.attack,
        spec.attack != AttackModel::None && sc.attack.compromised,
        sc.sensor.latency,
    );
    let mut fuzzer = build_fuzzer(prepared, seed)?;
    let mut controller = Controller::new(
        sc.controller,
        sc.plan.clone(),
        mode,
        sc.robot.speed(),
        sc.remit,
    );
    let mut shade = Shade::new(
        sc.shade,
        spec.detectors.clone(),
        prepared.reference.nid_baseline,
    );
    let record_series = spec.keep_series || reference_log.is_some();
    let mut own_log = PacketLog::default();
    let log: &mut PacketLog = match reference_log {
        Some(l) => l,
        None => &mut own_log,
    };

    let mut detections: Vec<DetectionRecord> = spec
        .detectors
        .iter()
        .map(|&d| DetectionRecord {
            detector: d,
            detected_at: None,
            method: None,
            reaction: None,
            false_positives: 0,
            evaluations: 0,
        })
        .collect();
    let mitigator = if spec.detectors.contains(&DetectorKind::Shade) {
        Some(DetectorKind::Shade)
    } else {
        spec.detectors.first().copied()
    };

    let mut series = Vec::new();
    let mut emissions = Vec::new();
    let mut crossed_door = false;
    let mut collision = None;
    let mut attack_distance = None;
    let mut min_sep = world.min_separation().map_or(f64::MAX, |(_, d)| d);
    let ticks_per_second = (1.0 / sc.tick).round().max(1.0) as u64;

    let outcome = loop {
        let t = world.clock();
        if t + 1e-9 >= sc.timeout {
            break Outcome::Timeout;
        }
        if world.ticks() > 0 && world.ticks().is_multiple_of(ticks_per_second) {
            log.record_telemetry(t);
        }

        let range = world.sense();
        let genuine = sensor.sample(&world, &mut sensor_rng);
        let ctx = TapContext {
            t,
            genuine: genuine.as_ref(),
            range,
            control: controller.snapshot(),
        };
        let tamper = fuzzer.tamper(&ctx);
        let was_active = channel.active_since.is_some();
        let delivered = deliver(genuine, &mut channel, tamper, t, log, &mut net_rng);
        if !was_active && channel.active_since.is_some() {
            attack_distance = Some(range);
        }
        let tampered = channel.intercepts() && delivered != genuine;
        if tampered {
            emissions.push(Emission {
                t,
                v: range,
                gamma: delivered.and_then(|r| r.numeric()),
            });
        }

        if !spec.detectors.is_empty() {
            let request = DetectionRequest::with_sensor(mode, world.robot, delivered, t);
            for v in shade.on_tick(&request, map, log) {
                let Some(rec) = detections.iter_mut().find(|d| d.detector == v.detector) else {
                    continue;
                };
                rec.evaluations += 1;
                if !v.attack {
                    continue;
                }
                match channel.active_since {
                    None => rec.false_positives += 1,
                    Some(start) => {
                        if rec.detected_at.is_none() {
                            rec.detected_at = Some(v.issued_at);
                            rec.method = Some(v.method);
                            rec.reaction = Some(v.issued_at - start);
                        }
                    }
                }
                if spec.mitigation && Some(v.detector) == mitigator && !controller.mitigating() {
                    controller.enter_mitigation(&v)?;
                }
            }
        }
        if controller.mitigating()
            && crate::remit::try_block_attacker(
                &mut controller.remit,
                &mut channel,
                &mut block_rng,
                &sc.remit,
                t,
            )
        {
            controller.resume_normal(t);
        }

        let cmd = controller.tick(TickInput {
            reading: delivered,
            world: &world,
            map,
        });
        if record_series {
            series.push(SeriesRow {
                t,
                x: world.robot.x,
                y: world.robot.y,
                heading: world.robot.heading,
                range,
                delivered: delivered.and_then(|r| r.numeric()),
                alert: delivered.is_some_and(|r| r.is_alert()),
                tampered,
                state: controller.state(),
            });
        }
        if controller.state() == ControlState::Done {
            break if controller.halted() {
                Outcome::Halted
            } else {
                Outcome::Completed
            };
        }
        let events = world.step(cmd);
        crossed_door |= events.door_crossed;
        if let Some((_, sep)) = world.min_separation() {
            min_sep = min_sep.min(sep);
        }
        if let Some(c) = world.check_collision() {
            controller.crash(&c);
            collision = Some(c);
            break Outcome::Crashed;
        }
    };

    let success = match spec.target {
        FuzzTarget::CrashRobot => collision.is_some(),
        FuzzTarget::ReduceEfficacy => !crossed_door,
    };
    let stats = controller.stats();
    let mitigation = (spec.mitigation).then(|| MitigationSummary {
        entered_at: controller.remit.entered_at(),
        speed: controller.remit.speed,
        sound_events: controller.remit.sound_events.clone(),
        completions: controller.remit.completions.len(),
        detours: controller.remit.detours,
        block_attempts: controller.remit.block_attempts,
    });
    let record = TrialRecord {
        index,
        seed,
        outcome,
        success,
        attack_start: channel.active_since,
        attack_distance,
        detections,
        cleaned_distance: controller.cleaned_distance(),
        running_time: world.clock(),
        crossed_door,
        collision,
        mitigation,
        rejected_readings: stats.rejected,
        sensor_resets: stats.sensor_resets,
        min_separation: min_sep,
    };
    Ok(TrialResult {
        record,
        series,
        emissions,
    })
}
