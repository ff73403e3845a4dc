// SPDX-License-Identifier: Apache-2.0

//! Deterministic offline sessions.
//!
//! A [`Scenario`] drives the full input path (byte-level pedal and leader
//! streams, orientation text messages, client presence) through the fusion
//! policy and the simulator on virtual time. No threads, no wall clock:
//! the same scenario always produces the same command stream.

use std::path::Path;
use std::time::Duration;

use thiserror::Error;

use crate::arm::LeaderLink;
use crate::fusion::{ControlLoop, Fuser, InputHub};
use crate::head::{HeadControlConfig, HeadSession};
use crate::input::{KeyboardConfig, KeyboardStepSource, SimulatedLeaderSource, SimulatedPedalSource};
use crate::model::{Modality, UnifiedCommand};
use crate::pedal::PedalLink;
use crate::recorder::{EpisodeFooter, EpisodeHeader, EpisodeWriter, RecorderError};
use crate::sim::{RobotState, SimConfig, SimError, Simulator};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Recorder(#[from] RecorderError),
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub fuser: Fuser,
    pub sim: SimConfig,
    pub head: HeadControlConfig,
    pub initial_state: RobotState,
    pub duration_ms: u64,
    pub pedals: Option<SimulatedPedalSource>,
    /// Timed orientation messages in wire format.
    pub orientation: Vec<(u64, String)>,
    pub left: Option<SimulatedLeaderSource>,
    pub right: Option<SimulatedLeaderSource>,
    /// Timed key presses for the keyboard baseline.
    pub keys: Vec<(u64, char)>,
    pub keyboard: KeyboardConfig,
    /// The operator client counts as present up to this time, if set;
    /// forever otherwise.
    pub client_until_ms: Option<u64>,
    /// Each listed modality stops delivering anything from the given time.
    pub disconnects: Vec<(Modality, u64)>,
}

impl Scenario {
    pub fn new(duration_ms: u64) -> Self {
        Scenario {
            fuser: Fuser::default(),
            sim: SimConfig::default(),
            head: HeadControlConfig::default(),
            initial_state: RobotState::default(),
            duration_ms,
            pedals: None,
            orientation: Vec::new(),
            left: None,
            right: None,
            keys: Vec::new(),
            keyboard: KeyboardConfig::default(),
            client_until_ms: None,
            disconnects: Vec::new(),
        }
    }

    fn cut(&self, m: Modality, t_ms: u64) -> bool {
        self.disconnects.iter().any(|&(d, at)| d == m && t_ms >= at)
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    /// Every emitted command, ending with the final stop.
    pub commands: Vec<UnifiedCommand>,
    pub final_state: RobotState,
    pub footer: Option<EpisodeFooter>,
}

/// Runs `scenario` to completion, optionally recording an episode.
pub fn run_scenario(mut s: Scenario, record: Option<&Path>) -> Result<ScenarioOutcome, ScenarioError> {
    let sim = Simulator::new(s.sim)?;
    let period = s.fuser.fusion.period();
    let dt = 1.0 / s.fuser.fusion.rate_hz;
    let hub = InputHub::new();
    let mut writer = match record {
        Some(p) => Some(EpisodeWriter::create(p, &EpisodeHeader::new(s.sim, s.initial_state))?),
        None => None,
    };

    let mut pedal_link = PedalLink::new(&s.fuser.pedals);
    let mut left_link = LeaderLink::new();
    let mut right_link = LeaderLink::new();
    let mut head = HeadSession::new(s.head);
    let mut orientation = std::mem::take(&mut s.orientation).into_iter().peekable();
    let mut pedals = s.pedals.take();
    let mut left = s.left.take();
    let mut right = s.right.take();
    let mut keyboard = KeyboardStepSource::new(s.keyboard);
    let mut keys = std::mem::take(&mut s.keys).into_iter().peekable();

    let mut cl = ControlLoop::new(period, Duration::ZERO);
    let mut state = s.initial_state;
    let mut commands = Vec::new();
    let mut step = |cmd: UnifiedCommand,
                    state: &mut RobotState,
                    writer: &mut Option<EpisodeWriter>|
     -> Result<(), ScenarioError> {
        *state = sim.step(state, &cmd, dt)?;
        if let Some(w) = writer.as_mut() {
            w.record_tick(&cmd, state, dt)?;
        }
        commands.push(cmd);
        Ok(())
    };

    while cl.deadline() <= Duration::from_millis(s.duration_ms) {
        let now = cl.deadline();
        let now_ms = now.as_millis() as u64;

        if let Some(src) = pedals.as_mut() {
            for (t, frame) in src.frames_until(now_ms) {
                if s.cut(Modality::Pedals, t) {
                    continue;
                }
                let up = pedal_link.receive(t, &frame);
                if up.frames > 0 || up.accepted.is_some() {
                    hub.update_pedals(pedal_link.state(), t);
                }
            }
        }
        while let Some((t, _)) = orientation.peek() {
            if *t > now_ms {
                break;
            }
            let (t, text) = orientation.next().unwrap_or_default();
            if s.cut(Modality::Head, t) {
                continue;
            }
            if let Ok(Some(cmd)) = head.handle_message(&text, t) {
                hub.update_head(cmd, t);
            }
        }
        let leaders = [
            (left.as_mut(), &mut left_link, Modality::LeftLeader),
            (right.as_mut(), &mut right_link, Modality::RightLeader),
        ];
        for (src, link, m) in leaders {
            let Some(src) = src else { continue };
            for (t, frame) in src.frames_until(now_ms) {
                if s.cut(m, t) {
                    continue;
                }
                for arm in link.receive(&frame).into_iter().flatten() {
                    hub.update_leader(arm, t);
                }
            }
        }
        while let Some(&(t, key)) = keys.peek() {
            if t > now_ms {
                break;
            }
            keys.next();
            keyboard.press_into(key, t, &hub);
        }
        if s.client_until_ms.is_none_or(|until| now_ms <= until) {
            hub.touch_client(now_ms);
        }

        let cmd = cl.step(&s.fuser, &hub.snapshot(), now);
        step(cmd, &mut state, &mut writer)?;
    }
    let stop = cl.stop_command(cl.deadline());
    step(stop, &mut state, &mut writer)?;

    let footer = match writer.as_mut() {
        Some(w) => Some(w.close()?),
        None => None,
    };
    Ok(ScenarioOutcome {
        commands,
        final_state: state,
        footer,
    })
}
