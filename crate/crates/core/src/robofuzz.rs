//! Directed sensor-value fuzzer. It watches the robot's state and the genuine
//! distance trend, waits for a moment where a plausible lie moves the robot
//! into the attacker's intended state, and then feeds values that mimic a
//! legitimate obstacle behaviour.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::attack::{AttackModel, Fuzzer, Tamper, TapContext};
use crate::controller::ControlState;
use crate::world::clamp_reading;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FuzzTarget {
    /// Drive the robot into an obstacle.
    CrashRobot,
    /// Keep the robot out of the second room.
    ReduceEfficacy,
}

impl std::str::FromStr for FuzzTarget {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "crash" | "crash_robot" | "1" => Ok(FuzzTarget::CrashRobot),
            "efficacy" | "reduce_efficacy" | "2" => Ok(FuzzTarget::ReduceEfficacy),
            other => Err(format!("unknown target '{other}'")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trend {
    Flat,
    GradualDecrease,
    SharpDecrease,
    SuddenIncrease,
    JumpThenDecrease,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrendConfig {
    pub window: usize,
    /// Nominal closing speed against a static obstacle, cm/s.
    pub closing_speed: f64,
    /// Relative band around the closing speed still counted as gradual.
    pub gradual_band: f64,
    /// Multiple of the closing speed beyond which a decrease is sharp.
    pub sharp_factor: f64,
    pub jump: f64,
}

impl Default for TrendConfig {
    fn default() -> Self {
        Self {
            window: 5,
            closing_speed: 5.0,
            gradual_band: 0.5,
            sharp_factor: 1.5,
            jump: 50.0,
        }
    }
}

/// Least-squares slope of `v` against `t`.
pub fn slope(samples: &[(f64, f64)]) -> f64 {
    let n = samples.len() as f64;
    let mt = samples.iter().map(|s| s.0).sum::<f64>() / n;
    let mv = samples.iter().map(|s| s.1).sum::<f64>() / n;
    let (num, den) = samples.iter().fold((0.0, 0.0), |(num, den), &(t, v)| {
        (num + (t - mt) * (v - mv), den + (t - mt) * (t - mt))
    });
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Classifies the last `cfg.window` samples of `(time, value)`.
pub fn classify_trend(samples: &[(f64, f64)], cfg: &TrendConfig) -> Trend {
    if samples.len() < cfg.window || cfg.window < 2 {
        return Trend::Flat;
    }
    let w = &samples[samples.len() - cfg.window..];
    let diffs: Vec<f64> = w.windows(2).map(|p| p[1].1 - p[0].1).collect();
    if let Some(j) = diffs.iter().rposition(|&d| d > cfg.jump) {
        return if j + 1 == diffs.len() {
            Trend::SuddenIncrease
        } else if diffs[j + 1..].iter().all(|&d| d <= 0.0) {
            Trend::JumpThenDecrease
        } else {
            Trend::Flat
        };
    }
    let s = slope(w);
    let c = cfg.closing_speed;
    if s < -c * cfg.sharp_factor {
        Trend::SharpDecrease
    } else if s <= -c * (1.0 - cfg.gradual_band) {
        Trend::GradualDecrease
    } else {
        Trend::Flat
    }
}

/// Control state without its payload.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateKind {
    Idle,
    Forward,
    Turning,
    DoorCrossing,
    Spinning,
    Mitigation,
    Done,
}

impl From<ControlState> for StateKind {
    fn from(s: ControlState) -> Self {
        match s {
            ControlState::Idle => StateKind::Idle,
            ControlState::Forward => StateKind::Forward,
            ControlState::Turning(_) => StateKind::Turning,
            ControlState::DoorCrossing => StateKind::DoorCrossing,
            ControlState::Spinning => StateKind::Spinning,
            ControlState::Mitigation => StateKind::Mitigation,
            ControlState::Done => StateKind::Done,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentInventory {
    pub sensors: Vec<String>,
    pub actuators: Vec<String>,
}

impl Default for ComponentInventory {
    fn default() -> Self {
        Self {
            sensors: vec!["front_distance".into()],
            actuators: vec!["wheel_drive".into()],
        }
    }
}

/// How a fuzzed value evolves once triggered.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FuzzFunction {
    /// The obstacle appears to recede at `rate` cm/s.
    RiseAway { rate: f64 },
    /// The reading keeps closing at `rate` cm/s as if a wall stood there.
    ContinueWall { rate: f64 },
    /// The sensor goes quiet.
    Suppress,
}

/// `gamma` for `f` given the reference value `v` and time since the
/// reference. `None` means the value is withheld.
pub fn gamma_for(f: FuzzFunction, v: f64, t_since: f64) -> Option<f64> {
    match f {
        FuzzFunction::RiseAway { rate } => Some(clamp_reading(v + rate * t_since)),
        FuzzFunction::ContinueWall { rate } => Some(clamp_reading(v - rate * t_since)),
        FuzzFunction::Suppress => None,
    }
}

/// Trend classes that arm a fuzz function in a given state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FuzzTuple {
    pub state: StateKind,
    pub on: Vec<Trend>,
    pub f: FuzzFunction,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FuzzPlan {
    pub target: FuzzTarget,
    pub states: Vec<StateKind>,
    pub components: ComponentInventory,
    pub tuples: Vec<FuzzTuple>,
}

impl FuzzPlan {
    /// Every monitored state must have a tuple.
    pub fn validate(&self) -> Result<()> {
        if self.components.sensors.is_empty() {
            return Err(Error::Plan("no sensor to fuzz".into()));
        }
        for s in &self.states {
            if !self.tuples.iter().any(|tp| tp.state == *s) {
                return Err(Error::Plan(format!("state {s:?} has no fuzz tuple")));
            }
        }
        Ok(())
    }

    pub fn tuple_for(&self, state: StateKind, trend: Trend) -> Option<&FuzzTuple> {
        if !self.states.contains(&state) {
            return None;
        }
        self.tuples
            .iter()
            .find(|tp| tp.state == state && tp.on.contains(&trend))
    }

    pub fn tuple_in(&self, state: StateKind) -> Option<&FuzzTuple> {
        if !self.states.contains(&state) {
            return None;
        }
        self.tuples.iter().find(|tp| tp.state == state)
    }
}

pub fn build_plan(
    target: FuzzTarget,
    model: AttackModel,
    cfg: &RoboFuzzConfig,
) -> Result<FuzzPlan> {
    let c = cfg.trend.closing_speed;
    let (states, on, f) = match (target, model) {
        (_, AttackModel::None) => {
            return Err(Error::Plan("no attack model to fuzz through".into()))
        }
        (FuzzTarget::CrashRobot, m) => (
            vec![StateKind::Forward, StateKind::DoorCrossing],
            vec![Trend::GradualDecrease, Trend::SharpDecrease],
            if m == AttackModel::Suspension {
                FuzzFunction::Suppress
            } else {
                FuzzFunction::RiseAway {
                    rate: cfg.rise_rate,
                }
            },
        ),
        (FuzzTarget::ReduceEfficacy, m) => (
            vec![StateKind::Forward],
            vec![Trend::SuddenIncrease, Trend::JumpThenDecrease],
            if m == AttackModel::Suspension {
                FuzzFunction::Suppress
            } else {
                FuzzFunction::ContinueWall { rate: c }
            },
        ),
    };
    let tuples = states
        .iter()
        .map(|&state| FuzzTuple {
            state,
            on: on.clone(),
            f,
        })
        .collect();
    let plan = FuzzPlan {
        target,
        states,
        components: ComponentInventory::default(),
        tuples,
    };
    plan.validate()?;
    Ok(plan)
}

/// When the fuzzer fires.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TriggerPolicy {
    /// Wait for the plan's trend conditions.
    #[default]
    Trend,
    /// Fire once the genuine distance is at most `distance`.
    AtDistance { distance: f64 },
    /// Fire at the first opportunity.
    Immediate,
}

fn default_trigger_below() -> f64 {
    22.0
}

fn default_rise_rate() -> f64 {
    5.0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoboFuzzConfig {
    /// A gradual approach fires once the genuine value drops below this.
    #[serde(default = "default_trigger_below")]
    pub trigger_below: f64,
    #[serde(default = "default_rise_rate")]
    pub rise_rate: f64,
    #[serde(default)]
    pub trend: TrendConfig,
    #[serde(default)]
    pub policy: TriggerPolicy,
}

impl Default for RoboFuzzConfig {
    fn default() -> Self {
        Self {
            trigger_below: default_trigger_below(),
            rise_rate: default_rise_rate(),
            trend: TrendConfig::default(),
            policy: TriggerPolicy::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateSnapshot {
    pub state: StateKind,
    pub v: f64,
    pub trend: Trend,
    pub t: f64,
}

pub fn observe(history: &[(f64, f64)], state: ControlState, cfg: &TrendConfig) -> StateSnapshot {
    let (t, v) = history.last().copied().unwrap_or((0.0, f64::NAN));
    StateSnapshot {
        state: state.into(),
        v,
        trend: classify_trend(history, cfg),
        t,
    }
}

pub fn should_trigger(plan: &FuzzPlan, snap: &StateSnapshot, cfg: &RoboFuzzConfig) -> bool {
    match cfg.policy {
        TriggerPolicy::Immediate => plan.tuple_in(snap.state).is_some(),
        TriggerPolicy::AtDistance { distance } => {
            plan.tuple_in(snap.state).is_some() && snap.v <= distance
        }
        TriggerPolicy::Trend => {
            if plan.tuple_for(snap.state, snap.trend).is_none() {
                return false;
            }
            match (plan.target, snap.trend) {
                (FuzzTarget::CrashRobot, Trend::GradualDecrease) => snap.v < cfg.trigger_below,
                (FuzzTarget::CrashRobot, Trend::SharpDecrease) => true,
                (FuzzTarget::ReduceEfficacy, Trend::SuddenIncrease | Trend::JumpThenDecrease) => {
                    true
                }
                _ => false,
            }
        }
    }
}

/// One emitted tuple: the genuine value and what was delivered instead.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Emission {
    pub t: f64,
    pub v: f64,
    pub gamma: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Episode {
    f: FuzzFunction,
    v0: f64,
    t0: f64,
    leg: u32,
    persistent: bool,
}

#[derive(Clone, Debug)]
pub struct DirectedFuzzer {
    pub config: RoboFuzzConfig,
    pub plan: FuzzPlan,
    history: VecDeque<(f64, f64)>,
    leg: Option<u32>,
    episode: Option<Episode>,
    emissions: Vec<Emission>,
    triggered_at: Option<f64>,
}

impl DirectedFuzzer {
    pub fn new(plan: FuzzPlan, config: RoboFuzzConfig) -> Self {
        Self {
            config,
            plan,
            history: VecDeque::new(),
            leg: None,
            episode: None,
            emissions: Vec::new(),
            triggered_at: None,
        }
    }

    pub fn triggered_at(&self) -> Option<f64> {
        self.triggered_at
    }

    pub fn emissions(&self) -> &[Emission] {
        &self.emissions
    }

    fn emit(&mut self, ep: Episode, t: f64, v: f64) -> Tamper {
        let gamma = gamma_for(ep.f, ep.v0, t - ep.t0);
        self.emissions.push(Emission { t, v, gamma });
        match gamma {
            Some(g) => Tamper::Replace(g),
            None => Tamper::Drop,
        }
    }
}

impl Fuzzer for DirectedFuzzer {
    fn tamper(&mut self, ctx: &TapContext<'_>) -> Tamper {
        let (t, v) = (ctx.t, ctx.range);
        let snap = ctx.control;
        if self.leg != Some(snap.leg) {
            self.leg = Some(snap.leg);
            self.history.clear();
            if self
                .episode
                .is_some_and(|ep| !ep.persistent && ep.leg != snap.leg)
            {
                self.episode = None;
            }
        }
        if let Some(ep) = self.episode {
            return self.emit(ep, t, v);
        }
        let prev = self.history.back().copied();
        self.history.push_back((t, v));
        while self.history.len() > self.config.trend.window {
            self.history.pop_front();
        }
        let history: Vec<(f64, f64)> = self.history.iter().copied().collect();
        let snapshot = observe(&history, snap.state, &self.config.trend);
        if !should_trigger(&self.plan, &snapshot, &self.config) {
            return Tamper::Pass;
        }
        let Some(tuple) = self
            .plan
            .tuple_for(snapshot.state, snapshot.trend)
            .or_else(|| self.plan.tuple_in(snapshot.state))
        else {
            return Tamper::Pass;
        };
        let (t0, v0) = match tuple.f {
            // carry on from the last value the robot saw before the jump
            FuzzFunction::ContinueWall { .. } => match (self.config.policy, prev) {
                (TriggerPolicy::Trend, Some(p)) => p,
                _ => (t, v),
            },
            _ => (t, v),
        };
        let ep = Episode {
            f: tuple.f,
            v0,
            t0,
            leg: snap.leg,
            persistent: self.plan.target == FuzzTarget::CrashRobot,
        };
        self.episode = Some(ep);
        self.triggered_at.get_or_insert(t);
        self.emit(ep, t, v)
    }
}
