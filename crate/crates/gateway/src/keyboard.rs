// SPDX-License-Identifier: Apache-2.0

//! Keyboard baseline from a line-oriented text stream (stdin in the binary).
//! Every character of a line is one key press.

use std::io::BufRead;
use std::sync::Arc;

use teleop_core::input::{KeyboardConfig, KeyboardStepSource};
use teleop_core::runtime::Runtime;

pub fn spawn_keyboard(
    runtime: Arc<Runtime>,
    cfg: KeyboardConfig,
    input: impl BufRead + Send + 'static,
) -> std::io::Result<std::thread::JoinHandle<()>> {
    std::thread::Builder::new().name("keyboard".into()).spawn(move || {
        let mut keys = KeyboardStepSource::new(cfg);
        let stop = runtime.shutdown_handle();
        for line in input.lines() {
            let Ok(line) = line else { break };
            if stop.is_triggered() {
                break;
            }
            for c in line.chars().filter(|c| !c.is_whitespace()) {
                if keys.press_into(c, runtime.now_ms(), runtime.hub()).is_none() {
                    tracing::debug!(key = %c, "unmapped key");
                }
            }
        }
    })
}
