// SPDX-License-Identifier: Apache-2.0

//! Threaded wiring of sources, the fusion loop, the simulator and the
//! synthetic camera.
//!
//! ```text
//!  pedal reader ─┐
//!  leader reader ┼─► InputHub ─► fusion loop ─► simulator ─► state slot ─► renderer ─► frame slot
//!  network/keys ─┘                                  └─► recorder
//! ```

use std::io::Read;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::thread::JoinHandle;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arm::LeaderLink;
use crate::clock::Clock;
use crate::fusion::{
    run_loop, CommandSink, FusionError, Fuser, InputHub, LoopMonitor, LoopReport, Shutdown, SinkError,
};
use crate::model::{ArmSide, Modality, UnifiedCommand};
use crate::pedal::{PedalError, PedalLink};
use crate::recorder::{EpisodeHeader, RecorderError, RecorderHandle, RecorderSummary};
use crate::sim::{render_synthetic_frame, RobotState, SimConfig, SimError, Simulator};
use crate::video::VideoFrame;

#[derive(Debug, Error)]
pub enum RuntimeError {
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Pedal(#[from] PedalError),
    #[error("arm calibration: {0}")]
    Arm(#[from] crate::arm::ArmError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Recorder(#[from] RecorderError),
    #[error("invalid camera settings: {0}")]
    Camera(&'static str),
    #[error("failed to spawn thread: {0}")]
    Spawn(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CameraConfig {
    pub width: u32,
    pub height: u32,
    pub fps: f64,
}

impl Default for CameraConfig {
    fn default() -> Self {
        CameraConfig {
            width: 640,
            height: 480,
            fps: 30.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RuntimeConfig {
    pub fuser: Fuser,
    pub sim: SimConfig,
    pub initial_state: RobotState,
    pub camera: CameraConfig,
    pub record: Option<PathBuf>,
    pub recorder_capacity: usize,
}

impl Default for RuntimeConfig {
    fn default() -> Self {
        RuntimeConfig {
            fuser: Fuser::default(),
            sim: SimConfig::default(),
            initial_state: RobotState::default(),
            camera: CameraConfig::default(),
            record: None,
            recorder_capacity: 1024,
        }
    }
}

pub fn validate_fuser(f: &Fuser) -> Result<(), RuntimeError> {
    f.fusion.validate()?;
    f.pedals.validate()?;
    f.left_calibration.validate()?;
    f.right_calibration.validate()?;
    if !(f.max_step_deg.is_finite() && f.max_step_deg > 0.0) {
        return Err(crate::arm::ArmError::InvalidCalibration("max_step_deg must be positive".into()).into());
    }
    Ok(())
}

/// Latest-value frame mailbox with a sequence number.
#[derive(Debug, Clone, Default)]
pub struct FrameSlot(Arc<Mutex<(u64, Option<Arc<VideoFrame>>)>>);

impl FrameSlot {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn publish(&self, frame: VideoFrame) {
        let mut g = self.0.lock().unwrap_or_else(|e| e.into_inner());
        g.0 += 1;
        g.1 = Some(Arc::new(frame));
    }

    /// The newest frame and its sequence number.
    pub fn latest(&self) -> Option<(u64, Arc<VideoFrame>)> {
        let g = self.0.lock().unwrap_or_else(|e| e.into_inner());
        g.1.clone().map(|f| (g.0, f))
    }
}

struct SimSink {
    sim: Simulator,
    state: RobotState,
    dt: f64,
    slot: Arc<Mutex<RobotState>>,
    recorder: Option<RecorderHandle>,
}

impl CommandSink for SimSink {
    fn accept(&mut self, cmd: &UnifiedCommand) -> Result<(), SinkError> {
        self.state = self
            .sim
            .step(&self.state, cmd, self.dt)
            .map_err(|e| SinkError(e.to_string()))?;
        if let Some(r) = self.recorder.as_mut() {
            r.record(cmd, &self.state, self.dt);
        }
        *self.slot.lock().unwrap_or_else(|e| e.into_inner()) = self.state;
        Ok(())
    }
}

type LoopOutcome = (Result<LoopReport, String>, Option<RecorderSummary>, RobotState);

#[derive(Debug, Clone)]
pub struct RuntimeReport {
    pub loop_report: Result<LoopReport, String>,
    pub recorder: Option<RecorderSummary>,
    pub final_state: RobotState,
}

/// A running teleoperation stack around the simulated robot.
pub struct Runtime {
    clock: Arc<dyn Clock>,
    hub: InputHub,
    fuser: Arc<RwLock<Fuser>>,
    debounce_ms: Arc<AtomicU64>,
    monitor: LoopMonitor,
    shutdown: Shutdown,
    state: Arc<Mutex<RobotState>>,
    frames: FrameSlot,
    camera: CameraConfig,
    threads: Mutex<Threads>,
}

#[derive(Default)]
struct Threads {
    fusion: Option<JoinHandle<LoopOutcome>>,
    renderer: Option<JoinHandle<()>>,
    sources: Vec<JoinHandle<()>>,
}

impl Runtime {
    pub fn start(cfg: RuntimeConfig, clock: Arc<dyn Clock>) -> Result<Runtime, RuntimeError> {
        validate_fuser(&cfg.fuser)?;
        let cam = cfg.camera;
        if cam.width == 0 || cam.height == 0 || cam.width > 4096 || cam.height > 4096 {
            return Err(RuntimeError::Camera("frame size must be within 1..=4096"));
        }
        if !(cam.fps.is_finite() && cam.fps > 0.0 && cam.fps <= 240.0) {
            return Err(RuntimeError::Camera("fps must be within (0, 240]"));
        }
        let sim = Simulator::new(cfg.sim)?;
        let recorder = match &cfg.record {
            Some(path) => Some(RecorderHandle::spawn(
                path,
                EpisodeHeader::new(cfg.sim, cfg.initial_state),
                cfg.recorder_capacity,
            )?),
            None => None,
        };

        let hub = InputHub::new();
        let debounce_ms = Arc::new(AtomicU64::new(cfg.fuser.pedals.debounce_ms));
        let dt = 1.0 / cfg.fuser.fusion.rate_hz;
        let fuser = Arc::new(RwLock::new(cfg.fuser));
        let monitor = LoopMonitor::new();
        let shutdown = Shutdown::new();
        let state = Arc::new(Mutex::new(cfg.initial_state));
        let frames = FrameSlot::new();

        let loop_thread = {
            let (clock, hub, fuser, monitor, shutdown) =
                (clock.clone(), hub.clone(), fuser.clone(), monitor.clone(), shutdown.clone());
            let mut sink = SimSink {
                sim,
                state: cfg.initial_state,
                dt,
                slot: state.clone(),
                recorder,
            };
            std::thread::Builder::new().name("fusion-loop".into()).spawn(move || {
                let result = run_loop(clock.as_ref(), &hub, &fuser, &mut sink, &shutdown, Some(&monitor))
                    .map_err(|e| e.to_string());
                // A failed sink leaves nothing driving the robot; stop everything else too.
                shutdown.trigger();
                let summary = sink.recorder.take().map(RecorderHandle::close);
                (result, summary, sink.state)
            })?
        };

        let renderer = {
            let (clock, shutdown, state, frames) =
                (clock.clone(), shutdown.clone(), state.clone(), frames.clone());
            std::thread::Builder::new().name("sim-camera".into()).spawn(move || {
                let period = Duration::from_secs_f64(1.0 / cam.fps);
                let origin = clock.elapsed();
                let mut n: u32 = 0;
                while !shutdown.is_triggered() {
                    let s = *state.lock().unwrap_or_else(|e| e.into_inner());
                    // Size was validated above.
                    if let Ok(mut f) = render_synthetic_frame(&s, cam.width, cam.height) {
                        f.timestamp_ms = clock.now_ms();
                        frames.publish(f);
                    }
                    n = n.wrapping_add(1);
                    let next = origin + period * n;
                    while !shutdown.is_triggered() && clock.elapsed() < next {
                        let now = clock.elapsed();
                        clock.sleep_until(next.min(now + Duration::from_millis(50)));
                    }
                }
            })?
        };

        Ok(Runtime {
            clock,
            hub,
            fuser,
            debounce_ms,
            monitor,
            shutdown,
            state,
            frames,
            camera: cam,
            threads: Mutex::new(Threads {
                fusion: Some(loop_thread),
                renderer: Some(renderer),
                sources: Vec::new(),
            }),
        })
    }

    pub fn clock(&self) -> &Arc<dyn Clock> {
        &self.clock
    }

    pub fn now_ms(&self) -> u64 {
        self.clock.now_ms()
    }

    pub fn hub(&self) -> &InputHub {
        &self.hub
    }

    pub fn monitor(&self) -> &LoopMonitor {
        &self.monitor
    }

    pub fn shutdown_handle(&self) -> Shutdown {
        self.shutdown.clone()
    }

    pub fn frames(&self) -> &FrameSlot {
        &self.frames
    }

    pub fn camera(&self) -> CameraConfig {
        self.camera
    }

    pub fn robot_state(&self) -> RobotState {
        *self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn fuser(&self) -> Fuser {
        self.fuser.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    /// Swaps the control parameters. The loop rate is fixed at start and
    /// may not change here.
    pub fn update_fuser(&self, f: Fuser) -> Result<(), RuntimeError> {
        validate_fuser(&f)?;
        let mut g = self.fuser.write().unwrap_or_else(|e| e.into_inner());
        if f.fusion.rate_hz != g.fusion.rate_hz {
            return Err(FusionError::InvalidConfig("rate_hz cannot change while running".into()).into());
        }
        self.debounce_ms.store(f.pedals.debounce_ms, Ordering::SeqCst);
        *g = f;
        Ok(())
    }

    /// Reads pedal frames from `source` on a dedicated thread. Any byte
    /// stream works: a serial device, a socket, or a scripted source.
    pub fn attach_pedals(&self, mut source: Box<dyn Read + Send>) -> Result<(), RuntimeError> {
        let (clock, hub, shutdown, debounce) =
            (self.clock.clone(), self.hub.clone(), self.shutdown.clone(), self.debounce_ms.clone());
        let handle = std::thread::Builder::new().name("pedal-reader".into()).spawn(move || {
            let mut debounce_now = debounce.load(Ordering::SeqCst);
            let mut link = PedalLink::new(&crate::pedal::PedalConfig {
                debounce_ms: debounce_now,
                ..Default::default()
            });
            hub.set_connected(Modality::Pedals, true);
            let mut buf = [0u8; 256];
            while !shutdown.is_triggered() {
                let n = match source.read(&mut buf) {
                    Ok(0) => break,
                    Ok(n) => n,
                    Err(e) if e.kind() == std::io::ErrorKind::Interrupted => continue,
                    Err(e) => {
                        tracing::warn!(error = %e, "pedal stream failed");
                        break;
                    }
                };
                let d = debounce.load(Ordering::SeqCst);
                if d != debounce_now {
                    link.set_debounce_ms(d);
                    debounce_now = d;
                }
                let now = clock.now_ms();
                let up = link.receive(now, &buf[..n]);
                for e in &up.errors {
                    tracing::debug!(error = %e, "pedal frame rejected");
                }
                // Any valid frame, keepalives included, proves the link is alive.
                if up.frames > 0 || up.accepted.is_some() {
                    hub.update_pedals(link.state(), now);
                }
            }
            hub.set_connected(Modality::Pedals, false);
        })?;
        self.threads().sources.push(handle);
        Ok(())
    }

    /// Reads leader-arm frames from `source`. Frames for either side are
    /// accepted; the side byte routes them.
    pub fn attach_leader(&self, side: ArmSide, mut source: Box<dyn Read + Send>) -> Result<(), RuntimeError> {
        let modality = match side {
            ArmSide::Left => Modality::LeftLeader,
            ArmSide::Right => Modality::RightLeader,
        };
        let (clock, hub, shutdown) = (self.clock.clone(), self.hub.clone(), self.shutdown.clone());
        let handle = std::thread::Builder::new().name("leader-reader".into()).spawn(move || {
            let mut link = LeaderLink::new();
            hub.set_connected(modality, true);
            let mut buf = [0u8; 256];
            while !shutdown.is_triggered() {
                let n = match source.read(&mut buf) {
                    Ok(0) => break,
                    Ok(n) => n,
                    Err(e) if e.kind() == std::io::ErrorKind::Interrupted => continue,
                    Err(e) => {
                        tracing::warn!(error = %e, "leader stream failed");
                        break;
                    }
                };
                let now = clock.now_ms();
                for item in link.receive(&buf[..n]) {
                    match item {
                        Ok(arm) => hub.update_leader(arm, now),
                        Err(e) => tracing::debug!(error = %e, "leader frame rejected"),
                    }
                }
            }
            hub.set_connected(modality, false);
        })?;
        self.threads().sources.push(handle);
        Ok(())
    }

    /// Stops the loop (which emits its final stop command), the camera and
    /// any source that has returned. Readers blocked on a device that never
    /// produces bytes are detached.
    pub fn shutdown(self) -> RuntimeReport {
        self.stop()
    }

    /// Same as [`Runtime::shutdown`] through a shared reference. Only the
    /// first call gets the loop report.
    pub fn stop(&self) -> RuntimeReport {
        self.shutdown.trigger();
        let mut threads = self.threads();
        let (loop_report, recorder, final_state) = match threads.fusion.take().map(JoinHandle::join) {
            Some(Ok(outcome)) => outcome,
            Some(Err(_)) => (Err("fusion loop panicked".into()), None, self.robot_state()),
            None => (Err("loop not running".into()), None, self.robot_state()),
        };
        if let Some(r) = threads.renderer.take() {
            let _ = r.join();
        }
        for s in threads.sources.drain(..) {
            if s.is_finished() {
                let _ = s.join();
            }
        }
        RuntimeReport {
            loop_report,
            recorder,
            final_state,
        }
    }
}

impl Runtime {
    fn threads(&self) -> std::sync::MutexGuard<'_, Threads> {
        self.threads.lock().unwrap_or_else(|e| e.into_inner())
    }
}

impl Drop for Runtime {
    fn drop(&mut self) {
        self.shutdown.trigger();
    }
}
