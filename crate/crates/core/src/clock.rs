// SPDX-License-Identifier: Apache-2.0

//! Monotonic time sources.
//!
//! Everything timing-related takes a [`Clock`] so that policy code can be
//! driven by a [`VirtualClock`] in tests and by [`MonotonicClock`] in a
//! live process.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

pub trait Clock: Send + Sync {
    /// Time elapsed since the clock's origin.
    fn elapsed(&self) -> Duration;

    /// Blocks (or, for virtual clocks, advances) until `deadline`.
    fn sleep_until(&self, deadline: Duration);

    fn now_ms(&self) -> u64 {
        self.elapsed().as_millis() as u64
    }
}

/// Wall-clock-independent time measured from construction.
#[derive(Debug, Clone)]
pub struct MonotonicClock {
    origin: Instant,
    spin_window: Duration,
}

impl MonotonicClock {
    pub fn new() -> Self {
        MonotonicClock {
            origin: Instant::now(),
            spin_window: Duration::from_micros(1500),
        }
    }

    /// Sets how long before a deadline `sleep_until` stops sleeping and
    /// starts yielding. Zero means pure `thread::sleep`.
    pub fn with_spin_window(mut self, window: Duration) -> Self {
        self.spin_window = window;
        self
    }
}

impl Default for MonotonicClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for MonotonicClock {
    fn elapsed(&self) -> Duration {
        self.origin.elapsed()
    }

    fn sleep_until(&self, deadline: Duration) {
        let target = self.origin + deadline;
        loop {
            let now = Instant::now();
            if now >= target {
                return;
            }
            let remaining = target - now;
            if remaining > self.spin_window {
                std::thread::sleep(remaining - self.spin_window);
            } else {
                std::thread::yield_now();
            }
        }
    }
}

/// Manually advanced clock with microsecond resolution.
///
/// Clones share the same time, so a test can hold one handle while the
/// code under test holds another.
#[derive(Debug, Clone, Default)]
pub struct VirtualClock {
    micros: Arc<AtomicU64>,
}

impl VirtualClock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn advance(&self, by: Duration) {
        self.micros
            .fetch_add(by.as_micros() as u64, Ordering::SeqCst);
    }

    pub fn advance_ms(&self, ms: u64) {
        self.advance(Duration::from_millis(ms));
    }

    pub fn set(&self, t: Duration) {
        self.micros.store(t.as_micros() as u64, Ordering::SeqCst);
    }
}

impl Clock for VirtualClock {
    fn elapsed(&self) -> Duration {
        Duration::from_micros(self.micros.load(Ordering::SeqCst))
    }

    fn sleep_until(&self, deadline: Duration) {
        let target = deadline.as_micros() as u64;
        self.micros.fetch_max(target, Ordering::SeqCst);
    }
}
