// SPDX-License-Identifier: Apache-2.0

//! Input sources that do not need a network session.

pub mod keyboard;
pub mod script;

pub use keyboard::{KeyEffect, KeyMap, KeyboardConfig, KeyboardStepSource};
pub use script::{
    parse_pedal_script, LeaderKeyframe, PacedReader, PedalEvent, ScriptError, SimulatedLeaderSource,
    SimulatedPedalSource,
};
