// SPDX-License-Identifier: Apache-2.0

//! Network front end for `teleop-core`.
//!
//! Serves the operator client over HTTPS, ingests phone orientation on
//! `/ws/orientation`, streams framed JPEG video on `/ws/video` and exposes a
//! small JSON control API. See [`serve`].

pub mod app;
pub mod config;
pub mod keyboard;
pub mod server;

pub use app::{router, AppState, Settings, StatusReport};
pub use config::{GatewayConfig, Mode, InputSource};
pub use server::{build_services, serve, Gateway, GatewayError, Services};
