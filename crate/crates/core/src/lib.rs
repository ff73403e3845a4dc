// SPDX-License-Identifier: Apache-2.0

//! Core of a multimodal teleoperation gateway.
//!
//! The operator drives a robot with three coordinated inputs: a phone
//! strapped to the head steers a pan/roll camera mount, foot pedals drive an
//! omnidirectional base, and a pair of leader arms is mirrored onto the
//! follower arms. A fixed-rate loop fuses whatever is fresh into one
//! [`model::UnifiedCommand`] per tick and falls back to safe holds when an
//! input goes quiet.
//!
//! Everything here is transport-agnostic and runs without hardware: the
//! [`sim`] module stands in for the robot and its camera, [`input`] provides
//! scripted pedal and arm streams and the keyboard baseline, and
//! [`recorder`] writes replayable episodes.

pub mod arm;
pub mod clock;
pub mod framing;
pub mod fusion;
pub mod head;
pub mod input;
pub mod model;
pub mod pedal;
pub mod recorder;
pub mod runtime;
pub mod scenario;
pub mod sim;
pub mod video;

pub use clock::{Clock, MonotonicClock, VirtualClock};
pub use model::*;
