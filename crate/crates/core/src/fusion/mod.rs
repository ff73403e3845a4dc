// SPDX-License-Identifier: Apache-2.0

//! Fixed-rate fusion of all input modalities into one command per tick.
//!
//! Input paths write whole values into an [`InputHub`]; the control loop
//! takes an [`InputSnapshot`] each tick and hands it to [`Fuser::tick`],
//! which is a pure function of the snapshot, the current time and the
//! previous command.

mod runner;

pub use runner::{
    run_loop, CommandSink, ControlLoop, JitterStats, JitterSummary, LoopError, LoopMonitor,
    LoopReport, LoopStatus, Shutdown, SinkError,
};

use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arm::{map_leader_to_follower, rate_limit, ArmCalibration, DEFAULT_MAX_STEP_DEG};
use crate::model::{
    ArmJointVector, ArmSide, BaseVelocity, HeadCommand, Modality, ModalityStatus, PedalState,
    SafetyState, UnifiedCommand,
};
use crate::pedal::{pedals_to_velocity, PedalConfig};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FusionError {
    #[error("invalid fusion config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionConfig {
    pub rate_hz: f64,
    pub pedal_stale_ms: u64,
    pub head_stale_ms: u64,
    pub arm_stale_ms: u64,
    pub client_stale_ms: u64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            rate_hz: 30.0,
            pedal_stale_ms: 200,
            head_stale_ms: 1000,
            arm_stale_ms: 1000,
            client_stale_ms: 2000,
        }
    }
}

impl FusionConfig {
    pub fn period_ms(&self) -> f64 {
        1000.0 / self.rate_hz
    }

    pub fn period(&self) -> std::time::Duration {
        std::time::Duration::from_secs_f64(1.0 / self.rate_hz)
    }

    pub fn threshold_ms(&self, modality: Modality) -> u64 {
        match modality {
            Modality::Head => self.head_stale_ms,
            Modality::Pedals => self.pedal_stale_ms,
            Modality::LeftLeader | Modality::RightLeader => self.arm_stale_ms,
            Modality::Client => self.client_stale_ms,
        }
    }

    pub fn validate(&self) -> Result<(), FusionError> {
        if !(self.rate_hz.is_finite() && self.rate_hz > 0.0) {
            return Err(FusionError::InvalidConfig("rate_hz must be positive".into()));
        }
        let period = self.period_ms();
        for m in Modality::ALL {
            let t = self.threshold_ms(m);
            if (t as f64) <= period {
                return Err(FusionError::InvalidConfig(format!(
                    "{m:?} staleness threshold {t} ms must exceed the {period:.1} ms tick period"
                )));
            }
        }
        Ok(())
    }
}

/// A value with the time it was last refreshed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stamped<T> {
    pub value: T,
    pub at_ms: u64,
}

impl<T> Stamped<T> {
    pub fn new(value: T, at_ms: u64) -> Self {
        Stamped { value, at_ms }
    }

    pub fn fresh(&self, now_ms: u64, threshold_ms: u64) -> bool {
        now_ms.saturating_sub(self.at_ms) <= threshold_ms
    }
}

/// Timed base motion injected by the keyboard step source.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaseOverride {
    pub velocity: BaseVelocity,
    pub until_ms: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct InputSnapshot {
    pub pedals: Option<Stamped<PedalState>>,
    pub head: Option<Stamped<HeadCommand>>,
    pub left_leader: Option<Stamped<ArmJointVector>>,
    pub right_leader: Option<Stamped<ArmJointVector>>,
    pub client_seen_ms: Option<u64>,
    pub base_override: Option<BaseOverride>,
}

/// Latest-value slots shared between input paths and the control loop.
#[derive(Debug, Default)]
struct HubInner {
    snapshot: InputSnapshot,
    connected: [bool; 5],
}

#[derive(Debug, Clone, Default)]
pub struct InputHub {
    inner: Arc<Mutex<HubInner>>,
}

fn modality_index(m: Modality) -> usize {
    match m {
        Modality::Head => 0,
        Modality::Pedals => 1,
        Modality::LeftLeader => 2,
        Modality::RightLeader => 3,
        Modality::Client => 4,
    }
}

impl InputHub {
    pub fn new() -> Self {
        Self::default()
    }

    fn with<R>(&self, f: impl FnOnce(&mut HubInner) -> R) -> R {
        let mut guard = self.inner.lock().unwrap_or_else(|e| e.into_inner());
        f(&mut guard)
    }

    pub fn update_pedals(&self, state: PedalState, now_ms: u64) {
        self.with(|h| h.snapshot.pedals = Some(Stamped::new(state, now_ms)));
    }

    pub fn update_head(&self, cmd: HeadCommand, now_ms: u64) {
        self.with(|h| h.snapshot.head = Some(Stamped::new(cmd, now_ms)));
    }

    pub fn update_leader(&self, arm: ArmJointVector, now_ms: u64) {
        self.with(|h| {
            let slot = match arm.side {
                ArmSide::Left => &mut h.snapshot.left_leader,
                ArmSide::Right => &mut h.snapshot.right_leader,
            };
            *slot = Some(Stamped::new(arm, now_ms));
        });
    }

    pub fn touch_client(&self, now_ms: u64) {
        self.with(|h| {
            let seen = h.snapshot.client_seen_ms.get_or_insert(now_ms);
            *seen = (*seen).max(now_ms);
        });
    }

    pub fn set_base_override(&self, o: Option<BaseOverride>) {
        self.with(|h| h.snapshot.base_override = o);
    }

    pub fn set_connected(&self, modality: Modality, connected: bool) {
        self.with(|h| h.connected[modality_index(modality)] = connected);
    }

    pub fn snapshot(&self) -> InputSnapshot {
        self.with(|h| h.snapshot)
    }

    pub fn status(&self, now_ms: u64, cfg: &FusionConfig) -> Vec<ModalityStatus> {
        let (snap, connected) = self.with(|h| (h.snapshot, h.connected));
        Modality::ALL
            .iter()
            .map(|&m| {
                let last_seen = match m {
                    Modality::Head => snap.head.map(|s| s.at_ms),
                    Modality::Pedals => snap.pedals.map(|s| s.at_ms),
                    Modality::LeftLeader => snap.left_leader.map(|s| s.at_ms),
                    Modality::RightLeader => snap.right_leader.map(|s| s.at_ms),
                    Modality::Client => snap.client_seen_ms,
                };
                ModalityStatus::evaluate(
                    m,
                    connected[modality_index(m)],
                    last_seen,
                    now_ms,
                    cfg.threshold_ms(m),
                )
            })
            .collect()
    }
}

/// Everything the per-tick policy needs besides the inputs themselves.
#[derive(Debug, Clone, PartialEq)]
pub struct Fuser {
    pub fusion: FusionConfig,
    pub pedals: PedalConfig,
    pub left_calibration: ArmCalibration,
    pub right_calibration: ArmCalibration,
    pub max_step_deg: f64,
}

impl Default for Fuser {
    fn default() -> Self {
        Fuser {
            fusion: FusionConfig::default(),
            pedals: PedalConfig::default(),
            left_calibration: ArmCalibration::default(),
            right_calibration: ArmCalibration::default(),
            max_step_deg: DEFAULT_MAX_STEP_DEG,
        }
    }
}

impl Fuser {
    fn follow_arm(
        &self,
        prev: &ArmJointVector,
        leader: Option<Stamped<ArmJointVector>>,
        cal: &ArmCalibration,
        now_ms: u64,
    ) -> ArmJointVector {
        match leader {
            Some(l) if l.fresh(now_ms, self.fusion.arm_stale_ms) && l.value.side == prev.side => {
                let target = map_leader_to_follower(&l.value, cal);
                rate_limit(prev, &target, self.max_step_deg).unwrap_or(*prev)
            }
            _ => *prev,
        }
    }

    /// One step of the fusion policy.
    pub fn tick(&self, snap: &InputSnapshot, now_ms: u64, prev: &UnifiedCommand) -> UnifiedCommand {
        let cfg = &self.fusion;

        let keyboard = snap.base_override.filter(|o| now_ms < o.until_ms);
        let (mut base, mut safety) = match (keyboard, snap.pedals) {
            (Some(o), _) => (o.velocity, SafetyState::Nominal),
            (None, Some(p)) if p.fresh(now_ms, cfg.pedal_stale_ms) => {
                (pedals_to_velocity(&p.value, &self.pedals), SafetyState::Nominal)
            }
            _ => (BaseVelocity::ZERO, SafetyState::BaseHalted),
        };

        let head = match snap.head {
            Some(h) if h.fresh(now_ms, cfg.head_stale_ms) => h.value,
            _ => prev.head,
        };

        let left_arm = self.follow_arm(&prev.left_arm, snap.left_leader, &self.left_calibration, now_ms);
        let right_arm =
            self.follow_arm(&prev.right_arm, snap.right_leader, &self.right_calibration, now_ms);

        let client_fresh = snap
            .client_seen_ms
            .is_some_and(|t| now_ms.saturating_sub(t) <= cfg.client_stale_ms);
        if !client_fresh {
            base = BaseVelocity::ZERO;
            safety = SafetyState::Frozen;
        }

        UnifiedCommand {
            tick: prev.tick + 1,
            timestamp_ms: now_ms,
            base,
            head,
            left_arm,
            right_arm,
            safety,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::pedal_bits::*;

    fn all_fresh(now: u64, pedal_bits: u8) -> InputSnapshot {
        InputSnapshot {
            pedals: Some(Stamped::new(PedalState::from_bits(pedal_bits, now), now)),
            head: Some(Stamped::new(HeadCommand { yaw: 12.0, roll: -3.0 }, now)),
            left_leader: Some(Stamped::new(ArmJointVector::neutral(ArmSide::Left), now)),
            right_leader: Some(Stamped::new(ArmJointVector::neutral(ArmSide::Right), now)),
            client_seen_ms: Some(now),
            base_override: None,
        }
    }

    #[test]
    fn forward_pedal_gives_nominal_forward_command() {
        let f = Fuser::default();
        let cmd = f.tick(&all_fresh(1000, FORWARD), 1000, &UnifiedCommand::initial());
        assert_eq!(cmd.base, BaseVelocity::new(0.2, 0.0, 0.0));
        assert_eq!(cmd.safety, SafetyState::Nominal);
        assert_eq!(cmd.tick, 1);
        assert_eq!(cmd.head, HeadCommand { yaw: 12.0, roll: -3.0 });
    }

    #[test]
    fn silent_pedals_halt_base() {
        let f = Fuser::default();
        let mut snap = all_fresh(1000, FORWARD);
        snap.client_seen_ms = Some(1250);
        let cmd = f.tick(&snap, 1250, &UnifiedCommand::initial());
        assert_eq!(cmd.base, BaseVelocity::ZERO);
        assert_eq!(cmd.safety, SafetyState::BaseHalted);
    }

    #[test]
    fn silent_head_holds_previous() {
        let f = Fuser::default();
        let mut prev = UnifiedCommand::initial();
        prev.head = HeadCommand { yaw: 40.0, roll: 5.0 };
        let mut snap = all_fresh(1500, 0);
        snap.head = Some(Stamped::new(HeadCommand { yaw: -1.0, roll: -1.0 }, 1000));
        assert_eq!(f.tick(&snap, 1500, &prev).head, HeadCommand { yaw: -1.0, roll: -1.0 });
        assert_eq!(f.tick(&snap, 2001, &prev).head, prev.head);
    }

    #[test]
    fn client_loss_freezes_base() {
        let f = Fuser::default();
        let mut snap = all_fresh(5000, FORWARD);
        snap.client_seen_ms = Some(2999);
        let cmd = f.tick(&snap, 5000, &UnifiedCommand::initial());
        assert_eq!(cmd.base, BaseVelocity::ZERO);
        assert_eq!(cmd.safety, SafetyState::Frozen);
        snap.client_seen_ms = None;
        assert_eq!(f.tick(&snap, 5000, &UnifiedCommand::initial()).safety, SafetyState::Frozen);
    }

    #[test]
    fn keyboard_override_wins_until_expiry() {
        let f = Fuser::default();
        let mut snap = all_fresh(100, 0);
        snap.base_override = Some(BaseOverride {
            velocity: BaseVelocity::new(0.0, 0.0, 0.5),
            until_ms: 200,
        });
        let prev = UnifiedCommand::initial();
        assert_eq!(f.tick(&snap, 150, &prev).base.omega, 0.5);
        assert_eq!(f.tick(&snap, 200, &prev).base, BaseVelocity::ZERO);
    }

    #[test]
    fn arms_rate_limited_toward_leader() {
        let f = Fuser::default();
        let mut snap = all_fresh(0, 0);
        let mut leader = ArmJointVector::neutral(ArmSide::Left);
        leader.joints[1] = 30.0;
        snap.left_leader = Some(Stamped::new(leader, 0));
        let cmd = f.tick(&snap, 0, &UnifiedCommand::initial());
        assert_eq!(cmd.left_arm.joints[1], DEFAULT_MAX_STEP_DEG);
        assert_eq!(cmd.right_arm, ArmJointVector::neutral(ArmSide::Right));
    }

    #[test]
    fn config_validation() {
        assert!(FusionConfig::default().validate().is_ok());
        let bad = FusionConfig {
            pedal_stale_ms: 30,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = FusionConfig {
            rate_hz: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn hub_status_tracks_staleness() {
        let hub = InputHub::new();
        let cfg = FusionConfig::default();
        let st = hub.status(0, &cfg);
        assert!(st.iter().all(|s| s.stale && !s.connected));
        hub.set_connected(Modality::Pedals, true);
        hub.update_pedals(PedalState::default(), 100);
        let st = hub.status(300, &cfg);
        let p = st.iter().find(|s| s.modality == Modality::Pedals).unwrap();
        assert!(p.connected && !p.stale);
        let st = hub.status(301, &cfg);
        assert!(st.iter().find(|s| s.modality == Modality::Pedals).unwrap().stale);
    }
}
