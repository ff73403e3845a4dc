// SPDX-License-Identifier: Apache-2.0

//! Fixed-timestep scheduling for the fusion policy.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::Duration;

use serde::Serialize;
use thiserror::Error;

use super::{Fuser, InputHub, InputSnapshot};
use crate::clock::Clock;
use crate::model::{BaseVelocity, SafetyState, UnifiedCommand};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{0}")]
pub struct SinkError(pub String);

/// Consumer of emitted commands (simulator, hardware bridge, recorder...).
pub trait CommandSink {
    fn accept(&mut self, cmd: &UnifiedCommand) -> Result<(), SinkError>;
}

impl<F> CommandSink for F
where
    F: FnMut(&UnifiedCommand) -> Result<(), SinkError>,
{
    fn accept(&mut self, cmd: &UnifiedCommand) -> Result<(), SinkError> {
        self(cmd)
    }
}

#[derive(Debug, Error)]
pub enum LoopError {
    #[error("command sink failed at tick {tick}: {source}")]
    Sink { tick: u64, source: SinkError },
}

/// Cooperative stop flag shared between the loop and its owner.
#[derive(Debug, Clone, Default)]
pub struct Shutdown(Arc<AtomicBool>);

impl Shutdown {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn trigger(&self) {
        self.0.store(true, Ordering::SeqCst);
    }

    pub fn is_triggered(&self) -> bool {
        self.0.load(Ordering::SeqCst)
    }
}

const BIN_US: u64 = 50;
const BINS: usize = 2000; // 100 ms of range

/// Histogram of wake-up lateness relative to each tick deadline.
#[derive(Debug, Clone)]
pub struct JitterStats {
    bins: Vec<u64>,
    overflow: u64,
    count: u64,
    sum_us: u64,
    max_us: u64,
}

impl Default for JitterStats {
    fn default() -> Self {
        JitterStats {
            bins: vec![0; BINS],
            overflow: 0,
            count: 0,
            sum_us: 0,
            max_us: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct JitterSummary {
    pub samples: u64,
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p99_ms: f64,
    pub max_ms: f64,
}

impl JitterStats {
    pub fn record(&mut self, jitter: Duration) {
        let us = jitter.as_micros() as u64;
        match self.bins.get_mut((us / BIN_US) as usize) {
            Some(b) => *b += 1,
            None => self.overflow += 1,
        }
        self.count += 1;
        self.sum_us += us;
        self.max_us = self.max_us.max(us);
    }

    /// Upper edge of the bin holding the `p`-quantile, capped at the
    /// maximum, in milliseconds.
    pub fn percentile_ms(&self, p: f64) -> f64 {
        if self.count == 0 {
            return 0.0;
        }
        let rank = ((p * self.count as f64).ceil() as u64).max(1);
        let mut seen = 0;
        for (i, n) in self.bins.iter().enumerate() {
            seen += n;
            if seen >= rank {
                return ((i as u64 + 1) * BIN_US).min(self.max_us) as f64 / 1000.0;
            }
        }
        self.max_us as f64 / 1000.0
    }

    pub fn summary(&self) -> JitterSummary {
        JitterSummary {
            samples: self.count,
            mean_ms: if self.count == 0 {
                0.0
            } else {
                self.sum_us as f64 / self.count as f64 / 1000.0
            },
            p50_ms: self.percentile_ms(0.50),
            p99_ms: self.percentile_ms(0.99),
            max_ms: self.max_us as f64 / 1000.0,
        }
    }
}

/// Deadline bookkeeping and policy state for the control loop.
///
/// Deadlines are `origin + n * period`, never `last + period`, so rate
/// error does not accumulate. If the loop falls more than a full period
/// behind, the missed slots are skipped rather than replayed in a burst;
/// emitted tick indices stay consecutive either way.
#[derive(Debug, Clone)]
pub struct ControlLoop {
    origin: Duration,
    period: Duration,
    slot: u64,
    prev: UnifiedCommand,
    jitter: JitterStats,
    first_at: Option<Duration>,
    last_at: Duration,
    overruns: u64,
}

impl ControlLoop {
    pub fn new(period: Duration, origin: Duration) -> Self {
        ControlLoop {
            origin,
            period,
            slot: 0,
            prev: UnifiedCommand::initial(),
            jitter: JitterStats::default(),
            first_at: None,
            last_at: origin,
            overruns: 0,
        }
    }

    pub fn with_initial_command(mut self, cmd: UnifiedCommand) -> Self {
        self.prev = cmd;
        self
    }

    pub fn deadline(&self) -> Duration {
        self.origin + self.period * self.slot as u32
    }

    pub fn previous(&self) -> &UnifiedCommand {
        &self.prev
    }

    pub fn jitter(&self) -> &JitterStats {
        &self.jitter
    }

    pub fn overruns(&self) -> u64 {
        self.overruns
    }

    /// Runs the policy for the current slot, woken at `now`.
    pub fn step(&mut self, fuser: &Fuser, snap: &InputSnapshot, now: Duration) -> UnifiedCommand {
        let deadline = self.deadline();
        let lateness = now.abs_diff(deadline);
        self.jitter.record(lateness);
        self.first_at.get_or_insert(now);
        self.last_at = now;

        let cmd = fuser.tick(snap, now.as_millis() as u64, &self.prev);
        self.prev = cmd;

        self.slot += 1;
        if now > self.deadline() {
            let behind = (now - self.origin).as_nanos() / self.period.as_nanos();
            let next = behind as u64 + 1;
            self.overruns += next - self.slot;
            self.slot = next;
        }
        cmd
    }

    /// A command one tick after the last one with the base stopped and
    /// everything else held.
    pub fn stop_command(&mut self, now: Duration) -> UnifiedCommand {
        let mut cmd = self.prev;
        cmd.tick += 1;
        cmd.timestamp_ms = now.as_millis() as u64;
        cmd.base = BaseVelocity::ZERO;
        cmd.safety = SafetyState::BaseHalted;
        self.prev = cmd;
        cmd
    }

    pub fn mean_rate_hz(&self) -> f64 {
        match self.first_at {
            Some(first) if self.prev.tick > 1 && self.last_at > first => {
                (self.jitter.count.saturating_sub(1)) as f64 / (self.last_at - first).as_secs_f64()
            }
            _ => 0.0,
        }
    }

    pub fn report(&self) -> LoopReport {
        LoopReport {
            ticks: self.prev.tick,
            elapsed: self
                .first_at
                .map(|f| self.last_at.saturating_sub(f))
                .unwrap_or_default(),
            mean_rate_hz: self.mean_rate_hz(),
            jitter: self.jitter.summary(),
            overruns: self.overruns,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LoopReport {
    /// Index of the last emitted command, including the final stop.
    pub ticks: u64,
    #[serde(serialize_with = "ser_secs")]
    pub elapsed: Duration,
    pub mean_rate_hz: f64,
    pub jitter: JitterSummary,
    pub overruns: u64,
}

fn ser_secs<S: serde::Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_f64(d.as_secs_f64())
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct LoopStatus {
    pub running: bool,
    pub tick: u64,
    pub rate_hz: f64,
    pub jitter: JitterSummary,
    pub overruns: u64,
    pub last_command: Option<UnifiedCommand>,
    pub fault: Option<String>,
}

/// Telemetry published by the loop after every tick.
#[derive(Debug, Clone, Default)]
pub struct LoopMonitor(Arc<Mutex<LoopStatus>>);

impl LoopMonitor {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn status(&self) -> LoopStatus {
        self.0.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    fn update(&self, f: impl FnOnce(&mut LoopStatus)) {
        f(&mut self.0.lock().unwrap_or_else(|e| e.into_inner()));
    }

    fn publish(&self, cl: &ControlLoop, cmd: &UnifiedCommand) {
        self.update(|s| {
            s.running = true;
            s.tick = cmd.tick;
            s.rate_hz = cl.mean_rate_hz();
            s.jitter = cl.jitter.summary();
            s.overruns = cl.overruns;
            s.last_command = Some(*cmd);
        });
    }
}

/// Runs the fusion loop until `shutdown` fires or the sink fails.
///
/// On shutdown one final command with a zero base is emitted. On sink
/// failure a stop command is offered to the sink once more before the
/// fault is returned.
pub fn run_loop(
    clock: &dyn Clock,
    hub: &InputHub,
    fuser: &RwLock<Fuser>,
    sink: &mut dyn CommandSink,
    shutdown: &Shutdown,
    monitor: Option<&LoopMonitor>,
) -> Result<LoopReport, LoopError> {
    let period = fuser.read().unwrap_or_else(|e| e.into_inner()).fusion.period();
    let mut cl = ControlLoop::new(period, clock.elapsed());

    while !shutdown.is_triggered() {
        clock.sleep_until(cl.deadline());
        if shutdown.is_triggered() {
            break;
        }
        let now = clock.elapsed();
        let snap = hub.snapshot();
        let cmd = {
            let f = fuser.read().unwrap_or_else(|e| e.into_inner());
            cl.step(&f, &snap, now)
        };
        if let Err(source) = sink.accept(&cmd) {
            let stop = cl.stop_command(clock.elapsed());
            let _ = sink.accept(&stop);
            tracing::error!(tick = cmd.tick, error = %source, "command sink failed; loop stopped");
            if let Some(m) = monitor {
                m.update(|s| {
                    s.running = false;
                    s.fault = Some(source.to_string());
                });
            }
            return Err(LoopError::Sink {
                tick: cmd.tick,
                source,
            });
        }
        if let Some(m) = monitor {
            m.publish(&cl, &cmd);
        }
    }

    let stop = cl.stop_command(clock.elapsed());
    let result = sink.accept(&stop);
    if let Some(m) = monitor {
        m.publish(&cl, &stop);
        m.update(|s| s.running = false);
    }
    result.map_err(|source| LoopError::Sink {
        tick: stop.tick,
        source,
    })?;
    Ok(cl.report())
}
