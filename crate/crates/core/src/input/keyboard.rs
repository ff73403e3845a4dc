// SPDX-License-Identifier: Apache-2.0

//! Discrete keyboard control, the comparison baseline.
//!
//! Every key press yields exactly one fixed-size step: either a short
//! burst of base velocity or a fixed head-angle increment.

use serde::{Deserialize, Serialize};

use crate::fusion::{BaseOverride, InputHub};
use crate::model::{BaseVelocity, HeadCommand};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct KeyMap {
    pub forward: char,
    pub backward: char,
    pub strafe_left: char,
    pub strafe_right: char,
    pub rotate_ccw: char,
    pub rotate_cw: char,
    pub yaw_up: char,
    pub yaw_down: char,
    pub roll_up: char,
    pub roll_down: char,
}

impl Default for KeyMap {
    fn default() -> Self {
        KeyMap {
            forward: 'w',
            backward: 's',
            strafe_left: 'a',
            strafe_right: 'd',
            rotate_ccw: 'q',
            rotate_cw: 'e',
            yaw_up: 'l',
            yaw_down: 'j',
            roll_up: 'i',
            roll_down: 'k',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KeyboardConfig {
    pub keys: KeyMap,
    pub v_lin: f64,
    pub omega: f64,
    pub step_duration_ms: u64,
    pub head_step_deg: f64,
}

impl Default for KeyboardConfig {
    fn default() -> Self {
        // 0.2 m/s for 500 ms: one press moves the base 0.1 m.
        KeyboardConfig {
            keys: KeyMap::default(),
            v_lin: 0.2,
            omega: 0.8,
            step_duration_ms: 500,
            head_step_deg: 5.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KeyEffect {
    Base(BaseOverride),
    Head(HeadCommand),
}

#[derive(Debug, Clone)]
pub struct KeyboardStepSource {
    cfg: KeyboardConfig,
    head: HeadCommand,
}

impl KeyboardStepSource {
    pub fn new(cfg: KeyboardConfig) -> Self {
        KeyboardStepSource {
            cfg,
            head: HeadCommand::ZERO,
        }
    }

    pub fn head(&self) -> HeadCommand {
        self.head
    }

    /// Resynchronizes the increment base, e.g. after the head was driven
    /// by another source.
    pub fn set_head(&mut self, head: HeadCommand) {
        self.head = HeadCommand::clamped(head.yaw, head.roll);
    }

    /// Translates one key press. Unmapped keys return `None`.
    pub fn press(&mut self, key: char, now_ms: u64) -> Option<KeyEffect> {
        let k = &self.cfg.keys;
        let v = self.cfg.v_lin;
        let w = self.cfg.omega;
        let base = |vel: BaseVelocity| {
            Some(KeyEffect::Base(BaseOverride {
                velocity: vel,
                until_ms: now_ms + self.cfg.step_duration_ms,
            }))
        };
        let step = self.cfg.head_step_deg;
        let (dyaw, droll) = match key {
            c if c == k.forward => return base(BaseVelocity::new(v, 0.0, 0.0)),
            c if c == k.backward => return base(BaseVelocity::new(-v, 0.0, 0.0)),
            c if c == k.strafe_left => return base(BaseVelocity::new(0.0, v, 0.0)),
            c if c == k.strafe_right => return base(BaseVelocity::new(0.0, -v, 0.0)),
            c if c == k.rotate_ccw => return base(BaseVelocity::new(0.0, 0.0, w)),
            c if c == k.rotate_cw => return base(BaseVelocity::new(0.0, 0.0, -w)),
            c if c == k.yaw_up => (step, 0.0),
            c if c == k.yaw_down => (-step, 0.0),
            c if c == k.roll_up => (0.0, step),
            c if c == k.roll_down => (0.0, -step),
            _ => return None,
        };
        self.head = HeadCommand::clamped(self.head.yaw + dyaw, self.head.roll + droll);
        Some(KeyEffect::Head(self.head))
    }

    /// Presses `key` and writes the effect into `hub`. The operator at the
    /// keyboard counts as a present client.
    pub fn press_into(&mut self, key: char, now_ms: u64, hub: &InputHub) -> Option<KeyEffect> {
        let effect = self.press(key, now_ms)?;
        match effect {
            KeyEffect::Base(o) => hub.set_base_override(Some(o)),
            KeyEffect::Head(h) => hub.update_head(h, now_ms),
        }
        hub.touch_client(now_ms);
        Some(effect)
    }
}
