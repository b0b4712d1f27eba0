//! Mitigation mode: slow down, stop trusting the sensor, steer by the
//! historical map, try to shake the attacker off, and cope with things the
//! map does not know about.

use rand::{Rng, RngExt};
use serde::{Deserialize, Serialize};

use crate::attack::AttackChannel;
use crate::controller::Guidance;
use crate::histmap::HistoricalMap;
use crate::shade::DetectionVerdict;
use crate::world::WorldModel;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemitConfig {
    pub speed_factor: f64,
    /// Added to the safe distance when deciding to turn on map predictions.
    pub margin: f64,
    pub p_block: f64,
    /// Seconds to wait after sounding at an unexpected obstacle.
    pub blocked_wait: f64,
    pub max_retries: u32,
    /// Seconds between attempts to block the attacker.
    pub block_period: f64,
}

impl Default for RemitConfig {
    fn default() -> Self {
        Self {
            speed_factor: 0.9,
            margin: 5.0,
            p_block: 0.0,
            blocked_wait: 1.0,
            max_retries: 5,
            block_period: 1.0,
        }
    }
}

impl RemitConfig {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if !(self.speed_factor > 0.0 && self.speed_factor <= 1.0) {
            return Err("speed_factor must be in (0, 1]".into());
        }
        if !(0.0..=1.0).contains(&self.p_block) {
            return Err("p_block must be a probability".into());
        }
        if self.margin < 0.0 || self.blocked_wait < 0.0 || self.block_period <= 0.0 {
            return Err("mitigation margin, wait and block period must be non-negative".into());
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Normal,
    Mitigation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub t: f64,
    pub to: Mode,
    pub cause: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MitigationState {
    pub mode: Mode,
    /// Current commanded cruise speed, cm/s.
    pub speed: f64,
    normal_speed: f64,
    pub block_attempts: u32,
    pub sound_events: Vec<f64>,
    pub transitions: Vec<Transition>,
    pub reset_requests: u32,
    pub detours: u32,
    pub completions: Vec<f64>,
    retries: u32,
    waiting_until: Option<f64>,
    next_block_at: f64,
}

impl MitigationState {
    pub fn new(normal_speed: f64) -> Self {
        Self {
            mode: Mode::Normal,
            speed: normal_speed,
            normal_speed,
            block_attempts: 0,
            sound_events: Vec::new(),
            transitions: Vec::new(),
            reset_requests: 0,
            detours: 0,
            completions: Vec::new(),
            retries: 0,
            waiting_until: None,
            next_block_at: 0.0,
        }
    }

    pub fn in_mitigation(&self) -> bool {
        self.mode == Mode::Mitigation
    }

    pub fn entered_at(&self) -> Option<f64> {
        self.transitions
            .iter()
            .rev()
            .find(|tr| tr.to == Mode::Mitigation)
            .map(|tr| tr.t)
    }

    pub fn leave(&mut self, t: f64) {
        if self.mode == Mode::Normal {
            return;
        }
        self.mode = Mode::Normal;
        self.speed = self.normal_speed;
        self.waiting_until = None;
        self.retries = 0;
        self.transitions.push(Transition {
            t,
            to: Mode::Normal,
            cause: "attacker blocked".into(),
        });
    }

    /// Records task completion; only the first call counts.
    pub fn complete(&mut self, t: f64) {
        if self.completions.is_empty() {
            self.completions.push(t);
        }
    }
}

pub fn enter_mitigation(
    state: &mut MitigationState,
    cause: &DetectionVerdict,
    cfg: &RemitConfig,
) -> Result<()> {
    if !cause.attack {
        return Err(Error::Precondition(
            "mitigation needs a positive verdict".into(),
        ));
    }
    if state.in_mitigation() {
        return Ok(());
    }
    state.mode = Mode::Mitigation;
    state.speed = state.normal_speed * cfg.speed_factor;
    // a reset is requested, but it cannot help while the channel is held
    state.reset_requests += 1;
    state.next_block_at = cause.issued_at;
    state.transitions.push(Transition {
        t: cause.issued_at,
        to: Mode::Mitigation,
        cause: format!("{:?} via {:?}", cause.detector, cause.method).to_lowercase(),
    });
    Ok(())
}

/// Map-driven guidance for one tick in mitigation.
pub fn mitigation_tick(
    state: &mut MitigationState,
    map: &HistoricalMap,
    world: &WorldModel,
    cfg: &RemitConfig,
    safe_distance: f64,
) -> Guidance {
    let Ok(predicted) = map.expected_distance(&world.robot) else {
        return Guidance::Halt;
    };
    if predicted <= safe_distance + cfg.margin {
        return Guidance::Obstacle;
    }
    match handle_blocked_path(state, world, cfg) {
        BlockedAction::Clear => Guidance::Clear { speed: state.speed },
        BlockedAction::Wait => Guidance::Wait,
        BlockedAction::Detour => Guidance::Obstacle,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockedAction {
    Clear,
    Wait,
    Detour,
}

/// Something the map does not know blocks the way: sound, wait, retry, and
/// finally give up on the lane.
pub fn handle_blocked_path(
    state: &mut MitigationState,
    world: &WorldModel,
    cfg: &RemitConfig,
) -> BlockedAction {
    let t = world.clock();
    if let Some(until) = state.waiting_until {
        if t + 1e-9 < until {
            return BlockedAction::Wait;
        }
        state.waiting_until = None;
    }
    if world.can_advance(state.speed * world.dt) {
        state.retries = 0;
        return BlockedAction::Clear;
    }
    if state.retries >= cfg.max_retries {
        state.retries = 0;
        state.detours += 1;
        return BlockedAction::Detour;
    }
    state.retries += 1;
    state.sound_events.push(t);
    state.waiting_until = Some(t + cfg.blocked_wait);
    BlockedAction::Wait
}

/// One attempt to cut the attacker off, rate-limited to `block_period`.
pub fn try_block_attacker<R: Rng + ?Sized>(
    state: &mut MitigationState,
    channel: &mut AttackChannel,
    rng: &mut R,
    cfg: &RemitConfig,
    t: f64,
) -> bool {
    if !state.in_mitigation() || t + 1e-9 < state.next_block_at {
        return false;
    }
    state.next_block_at = t + cfg.block_period;
    state.block_attempts += 1;
    if cfg.p_block > 0.0 && rng.random_bool(cfg.p_block.min(1.0)) {
        channel.compromised = false;
        return true;
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attack::AttackModel;
    use crate::sensing::LatencyModel;
    use crate::shade::{DetectorKind, Method};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn verdict(attack: bool) -> DetectionVerdict {
        DetectionVerdict {
            attack,
            method: Method::Fingerprinting,
            detector: DetectorKind::Shade,
            issued_at: 3.0,
        }
    }

    #[test]
    fn entering_slows_to_ninety_percent() {
        let mut s = MitigationState::new(5.0);
        let cfg = RemitConfig::default();
        enter_mitigation(&mut s, &verdict(true), &cfg).unwrap();
        assert_eq!(s.speed, 4.5);
        enter_mitigation(&mut s, &verdict(true), &cfg).unwrap();
        assert_eq!(s.transitions.len(), 1);
        assert!(enter_mitigation(&mut MitigationState::new(5.0), &verdict(false), &cfg).is_err());
    }

    #[test]
    fn blocking_probability_extremes() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut ch = AttackChannel::new(AttackModel::Fabrication, true, LatencyModel::default());
        let mut s = MitigationState::new(5.0);
        let mut cfg = RemitConfig::default();
        enter_mitigation(&mut s, &verdict(true), &cfg).unwrap();
        for k in 0..20 {
            assert!(!try_block_attacker(
                &mut s,
                &mut ch,
                &mut rng,
                &cfg,
                3.0 + k as f64
            ));
        }
        assert!(ch.compromised);
        cfg.p_block = 1.0;
        assert!(try_block_attacker(&mut s, &mut ch, &mut rng, &cfg, 30.0));
        assert!(!ch.compromised);
        s.leave(30.0);
        assert_eq!(s.mode, Mode::Normal);
        assert_eq!(s.speed, 5.0);
    }

    #[test]
    fn completion_is_reported_once() {
        let mut s = MitigationState::new(5.0);
        s.complete(10.0);
        s.complete(11.0);
        assert_eq!(s.completions, vec![10.0]);
    }
}
