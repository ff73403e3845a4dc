// SPDX-License-Identifier: Apache-2.0

//! Episode files: one JSON object per line.
//!
//! ```text
//! {"type":"header","version":1,"config_hash":"…","sim":{…},"initial_state":{…}}
//! {"type":"tick","tick":1,"timestamp_ms":…,"dt_s":…,"base_vx":…,…}
//! …
//! {"type":"footer","ticks":300,"duration_ms":…,"dropped":0}
//! ```
//!
//! The header carries the full simulator configuration so an episode can
//! be replayed without any other input. `config_hash` is the first 8 bytes
//! (hex) of SHA-256 over the compact JSON of `sim`; replay refuses a file
//! whose hash does not match its own configuration.
//!
//! Tick records are flat: every command field and every simulated state
//! field after the step appear at top level. Ticks are consecutive within
//! a file. Floats are written with shortest round-trip formatting, which
//! is what makes bit-exact replay possible.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::mpsc::{self, Receiver, SyncSender, TrySendError};
use std::thread::JoinHandle;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::{
    ArmJointVector, ArmSide, BaseVelocity, HeadCommand, SafetyState, UnifiedCommand, ARM_JOINTS,
};
use crate::sim::{Pose2, RobotState, SimConfig, SimError, Simulator, WheelSpeeds};

pub const EPISODE_VERSION: u32 = 1;
pub const FLUSH_EVERY: u64 = 30;

#[derive(Debug, Error)]
pub enum RecorderError {
    #[error("episode storage failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("record for tick {got} would follow tick {last}; ticks must be consecutive")]
    NonConsecutive { last: u64, got: u64 },
    #[error("episode already closed")]
    Closed,
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("cannot read episode: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: simulator rejected record: {source}")]
    Sim { line: usize, source: SimError },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeHeader {
    pub version: u32,
    pub config_hash: String,
    pub sim: SimConfig,
    pub initial_state: RobotState,
}

impl EpisodeHeader {
    pub fn new(sim: SimConfig, initial_state: RobotState) -> Self {
        EpisodeHeader {
            version: EPISODE_VERSION,
            config_hash: config_hash(&sim),
            sim,
            initial_state,
        }
    }
}

pub fn config_hash(sim: &SimConfig) -> String {
    let json = serde_json::to_string(sim).expect("sim config serializes");
    let digest = Sha256::digest(json.as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// One control tick: the command and the state it produced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub tick: u64,
    pub timestamp_ms: u64,
    pub dt_s: f64,
    pub safety: SafetyState,
    pub base_vx: f64,
    pub base_vy: f64,
    pub base_omega: f64,
    pub head_yaw: f64,
    pub head_roll: f64,
    pub left_joints: [f64; ARM_JOINTS],
    pub left_gripper: f64,
    pub right_joints: [f64; ARM_JOINTS],
    pub right_gripper: f64,
    pub pose_x: f64,
    pub pose_y: f64,
    pub pose_heading: f64,
    pub state_head_yaw: f64,
    pub state_head_roll: f64,
    pub state_left_joints: [f64; ARM_JOINTS],
    pub state_left_gripper: f64,
    pub state_right_joints: [f64; ARM_JOINTS],
    pub state_right_gripper: f64,
    pub wheels: [f64; 3],
    pub sim_time_ms: f64,
}

impl EpisodeRecord {
    pub fn new(cmd: &UnifiedCommand, state: &RobotState, dt_s: f64) -> Self {
        EpisodeRecord {
            tick: cmd.tick,
            timestamp_ms: cmd.timestamp_ms,
            dt_s,
            safety: cmd.safety,
            base_vx: cmd.base.vx,
            base_vy: cmd.base.vy,
            base_omega: cmd.base.omega,
            head_yaw: cmd.head.yaw,
            head_roll: cmd.head.roll,
            left_joints: cmd.left_arm.joints,
            left_gripper: cmd.left_arm.gripper,
            right_joints: cmd.right_arm.joints,
            right_gripper: cmd.right_arm.gripper,
            pose_x: state.pose.x,
            pose_y: state.pose.y,
            pose_heading: state.pose.heading,
            state_head_yaw: state.head.yaw,
            state_head_roll: state.head.roll,
            state_left_joints: state.left_arm.joints,
            state_left_gripper: state.left_arm.gripper,
            state_right_joints: state.right_arm.joints,
            state_right_gripper: state.right_arm.gripper,
            wheels: state.wheels.as_array(),
            sim_time_ms: state.sim_time_ms,
        }
    }

    pub fn command(&self) -> UnifiedCommand {
        UnifiedCommand {
            tick: self.tick,
            timestamp_ms: self.timestamp_ms,
            base: BaseVelocity::new(self.base_vx, self.base_vy, self.base_omega),
            head: HeadCommand {
                yaw: self.head_yaw,
                roll: self.head_roll,
            },
            left_arm: ArmJointVector {
                side: ArmSide::Left,
                joints: self.left_joints,
                gripper: self.left_gripper,
            },
            right_arm: ArmJointVector {
                side: ArmSide::Right,
                joints: self.right_joints,
                gripper: self.right_gripper,
            },
            safety: self.safety,
        }
    }

    pub fn state(&self) -> RobotState {
        RobotState {
            pose: Pose2 {
                x: self.pose_x,
                y: self.pose_y,
                heading: self.pose_heading,
            },
            head: HeadCommand {
                yaw: self.state_head_yaw,
                roll: self.state_head_roll,
            },
            left_arm: ArmJointVector {
                side: ArmSide::Left,
                joints: self.state_left_joints,
                gripper: self.state_left_gripper,
            },
            right_arm: ArmJointVector {
                side: ArmSide::Right,
                joints: self.state_right_joints,
                gripper: self.state_right_gripper,
            },
            wheels: WheelSpeeds {
                w1: self.wheels[0],
                w2: self.wheels[1],
                w3: self.wheels[2],
            },
            sim_time_ms: self.sim_time_ms,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeFooter {
    pub ticks: u64,
    pub duration_ms: u64,
    pub dropped: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum EpisodeLine {
    Header(EpisodeHeader),
    Tick(EpisodeRecord),
    Footer(EpisodeFooter),
}

/// Synchronous episode writer.
pub struct EpisodeWriter {
    out: Option<BufWriter<File>>,
    records: u64,
    first_ts: Option<u64>,
    last: Option<(u64, u64)>,
    dropped: u64,
}

impl EpisodeWriter {
    pub fn create(path: impl AsRef<Path>, header: &EpisodeHeader) -> Result<Self, RecorderError> {
        let file = File::create(path)?;
        let mut out = BufWriter::with_capacity(64 * 1024, file);
        write_line(&mut out, &EpisodeLine::Header(header.clone()))?;
        out.flush()?;
        Ok(EpisodeWriter {
            out: Some(out),
            records: 0,
            first_ts: None,
            last: None,
            dropped: 0,
        })
    }

    pub fn records(&self) -> u64 {
        self.records
    }

    pub fn note_dropped(&mut self, n: u64) {
        self.dropped += n;
    }

    pub fn record_tick(
        &mut self,
        cmd: &UnifiedCommand,
        state: &RobotState,
        dt_s: f64,
    ) -> Result<(), RecorderError> {
        let out = self.out.as_mut().ok_or(RecorderError::Closed)?;
        if let Some((last, _)) = self.last {
            if cmd.tick != last + 1 {
                return Err(RecorderError::NonConsecutive {
                    last,
                    got: cmd.tick,
                });
            }
        }
        write_line(out, &EpisodeLine::Tick(EpisodeRecord::new(cmd, state, dt_s)))?;
        self.records += 1;
        self.first_ts.get_or_insert(cmd.timestamp_ms);
        self.last = Some((cmd.tick, cmd.timestamp_ms));
        if self.records.is_multiple_of(FLUSH_EVERY) {
            out.flush()?;
        }
        Ok(())
    }

    /// Writes the footer and flushes. Later writes fail with `Closed`.
    pub fn close(&mut self) -> Result<EpisodeFooter, RecorderError> {
        let mut out = self.out.take().ok_or(RecorderError::Closed)?;
        let duration_ms = match (self.first_ts, self.last) {
            (Some(first), Some((_, last))) => last.saturating_sub(first),
            _ => 0,
        };
        let footer = EpisodeFooter {
            ticks: self.records,
            duration_ms,
            dropped: self.dropped,
        };
        write_line(&mut out, &EpisodeLine::Footer(footer))?;
        out.flush()?;
        Ok(footer)
    }
}

// One write_all per line so a buffer spill never leaves half a record on disk.
fn write_line(out: &mut impl Write, line: &EpisodeLine) -> std::io::Result<()> {
    let mut buf = serde_json::to_vec(line)?;
    buf.push(b'\n');
    out.write_all(&buf)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RecorderSummary {
    pub written: u64,
    pub dropped: u64,
    pub fault: Option<String>,
}

enum Msg {
    Tick(Box<(UnifiedCommand, RobotState, f64)>),
    Close,
}

/// Background recorder fed through a bounded queue.
///
/// [`RecorderHandle::record`] never blocks. When the queue is full the
/// record is dropped and counted; since ticks in a file must stay
/// consecutive, the episode also stops taking new records at that point.
pub struct RecorderHandle {
    tx: SyncSender<Msg>,
    thread: Option<JoinHandle<RecorderSummary>>,
    dropped: u64,
    overflowed: bool,
    path: PathBuf,
}

impl RecorderHandle {
    pub fn spawn(
        path: impl Into<PathBuf>,
        header: EpisodeHeader,
        capacity: usize,
    ) -> Result<Self, RecorderError> {
        let path = path.into();
        let writer = EpisodeWriter::create(&path, &header)?;
        let (tx, rx) = mpsc::sync_channel(capacity.max(1));
        let thread = std::thread::Builder::new()
            .name("episode-recorder".into())
            .spawn(move || writer_thread(writer, rx))?;
        Ok(RecorderHandle {
            tx,
            thread: Some(thread),
            dropped: 0,
            overflowed: false,
            path,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn dropped(&self) -> u64 {
        self.dropped
    }

    pub fn record(&mut self, cmd: &UnifiedCommand, state: &RobotState, dt_s: f64) {
        if self.overflowed {
            self.dropped += 1;
            return;
        }
        match self.tx.try_send(Msg::Tick(Box::new((*cmd, *state, dt_s)))) {
            Ok(()) => {}
            Err(TrySendError::Full(_)) => {
                self.overflowed = true;
                self.dropped += 1;
                tracing::warn!(tick = cmd.tick, "recorder queue full; episode truncated");
            }
            Err(TrySendError::Disconnected(_)) => self.dropped += 1,
        }
    }

    pub fn close(mut self) -> RecorderSummary {
        self.finish()
    }

    fn finish(&mut self) -> RecorderSummary {
        let Some(thread) = self.thread.take() else {
            return RecorderSummary::default();
        };
        // Blocking send is fine here: the loop is no longer producing.
        let _ = self.tx.send(Msg::Close);
        let mut summary = thread.join().unwrap_or_else(|_| RecorderSummary {
            fault: Some("recorder thread panicked".into()),
            ..Default::default()
        });
        summary.dropped += self.dropped;
        summary
    }
}

impl Drop for RecorderHandle {
    fn drop(&mut self) {
        self.finish();
    }
}

fn writer_thread(mut writer: EpisodeWriter, rx: Receiver<Msg>) -> RecorderSummary {
    let mut fault: Option<String> = None;
    for msg in rx {
        match msg {
            Msg::Tick(t) => {
                let (cmd, state, dt) = *t;
                if fault.is_some() {
                    continue;
                }
                if let Err(e) = writer.record_tick(&cmd, &state, dt) {
                    tracing::error!(error = %e, "episode recording stopped");
                    fault = Some(e.to_string());
                }
            }
            Msg::Close => break,
        }
    }
    if fault.is_none() {
        if let Err(e) = writer.close() {
            fault = Some(e.to_string());
        }
    }
    RecorderSummary {
        written: writer.records(),
        dropped: 0,
        fault,
    }
}

/// A parsed episode file.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub header: EpisodeHeader,
    pub records: Vec<EpisodeRecord>,
    pub footer: Option<EpisodeFooter>,
}

impl Episode {
    /// State after the last recorded tick, or the initial state.
    pub fn recorded_final_state(&self) -> RobotState {
        self.records
            .last()
            .map(EpisodeRecord::state)
            .unwrap_or(self.header.initial_state)
    }
}

pub fn read_episode(path: impl AsRef<Path>) -> Result<Episode, ReplayError> {
    let reader = BufReader::new(File::open(path)?);
    let mut header = None;
    let mut records = Vec::new();
    let mut footer = None;

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let text = line?;
        let malformed = |message: String| ReplayError::Malformed {
            line: line_no,
            message,
        };
        if footer.is_some() {
            return Err(malformed("content after footer".into()));
        }
        let parsed: EpisodeLine =
            serde_json::from_str(&text).map_err(|e| malformed(e.to_string()))?;
        match (parsed, header.is_some()) {
            (EpisodeLine::Header(h), false) => {
                if h.version != EPISODE_VERSION {
                    return Err(malformed(format!("unsupported version {}", h.version)));
                }
                if h.config_hash != config_hash(&h.sim) {
                    return Err(malformed("config_hash does not match sim config".into()));
                }
                header = Some(h);
            }
            (_, false) => return Err(malformed("first record must be the header".into())),
            (EpisodeLine::Header(_), true) => return Err(malformed("duplicate header".into())),
            (EpisodeLine::Tick(r), true) => {
                if let Some(prev) = records.last().map(|p: &EpisodeRecord| p.tick) {
                    if r.tick != prev + 1 {
                        return Err(malformed(format!(
                            "tick {} does not follow tick {prev}",
                            r.tick
                        )));
                    }
                }
                records.push(r);
            }
            (EpisodeLine::Footer(f), true) => footer = Some(f),
        }
    }
    let header = header.ok_or(ReplayError::Malformed {
        line: 1,
        message: "missing header".into(),
    })?;
    Ok(Episode {
        header,
        records,
        footer,
    })
}

/// Re-runs the simulator through every recorded command and dt.
pub fn replay(path: impl AsRef<Path>) -> Result<RobotState, ReplayError> {
    let episode = read_episode(path)?;
    replay_episode(&episode)
}

pub fn replay_episode(episode: &Episode) -> Result<RobotState, ReplayError> {
    let sim = Simulator::new(episode.header.sim).map_err(|source| ReplayError::Sim {
        line: 1,
        source,
    })?;
    let mut state = episode.header.initial_state;
    for (i, r) in episode.records.iter().enumerate() {
        state = sim
            .step(&state, &r.command(), r.dt_s)
            .map_err(|source| ReplayError::Sim { line: i + 2, source })?;
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(path: &Path, ticks: u64) -> RobotState {
        let sim = Simulator::new(SimConfig::default()).unwrap();
        let header = EpisodeHeader::new(SimConfig::default(), RobotState::default());
        let mut w = EpisodeWriter::create(path, &header).unwrap();
        let mut state = RobotState::default();
        let mut cmd = UnifiedCommand::initial();
        for t in 1..=ticks {
            cmd.tick = t;
            cmd.timestamp_ms = t * 33;
            cmd.base = BaseVelocity::new(0.2, 0.05 * (t as f64 * 0.1).sin(), 0.3);
            cmd.head.yaw = (t as f64 * 0.7).sin() * 50.0;
            state = sim.step(&state, &cmd, 1.0 / 30.0).unwrap();
            w.record_tick(&cmd, &state, 1.0 / 30.0).unwrap();
        }
        let footer = w.close().unwrap();
        assert_eq!(footer.ticks, ticks);
        state
    }

    #[test]
    fn record_then_replay_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ep.jsonl");
        let live = run(&path, 300);
        let ep = read_episode(&path).unwrap();
        assert_eq!(ep.records.len(), 300);
        assert_eq!(ep.records[0].tick, 1);
        assert_eq!(ep.records[299].tick, 300);
        assert_eq!(ep.footer.unwrap().duration_ms, 299 * 33);
        assert_eq!(replay(&path).unwrap(), live);
        assert_eq!(ep.recorded_final_state(), live);
    }

    #[test]
    fn empty_episode_replays_to_initial_state() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.jsonl");
        let mut init = RobotState::default();
        init.pose.x = 1.5;
        let mut w = EpisodeWriter::create(&path, &EpisodeHeader::new(SimConfig::default(), init)).unwrap();
        w.close().unwrap();
        assert_eq!(replay(&path).unwrap(), init);
        assert!(matches!(w.close(), Err(RecorderError::Closed)));
    }

    #[test]
    fn truncated_line_is_reported_by_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cut.jsonl");
        run(&path, 10);
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines: Vec<&str> = text.lines().collect();
        lines.pop(); // footer
        let last = lines.pop().unwrap();
        let cut = format!("{}\n{}", lines.join("\n"), &last[..last.len() / 2]);
        std::fs::write(&path, cut).unwrap();
        match replay(&path) {
            Err(ReplayError::Malformed { line, .. }) => assert_eq!(line, 11),
            other => panic!("expected malformed error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_gaps_and_tampered_hash() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gap.jsonl");
        let header = EpisodeHeader::new(SimConfig::default(), RobotState::default());
        let mut w = EpisodeWriter::create(&path, &header).unwrap();
        let mut cmd = UnifiedCommand::initial();
        cmd.tick = 1;
        w.record_tick(&cmd, &RobotState::default(), 0.03).unwrap();
        cmd.tick = 3;
        assert!(matches!(
            w.record_tick(&cmd, &RobotState::default(), 0.03),
            Err(RecorderError::NonConsecutive { last: 1, got: 3 })
        ));
        w.close().unwrap();

        let text = std::fs::read_to_string(&path).unwrap();
        let tampered = text.replacen(&header.config_hash, "0000000000000000", 1);
        std::fs::write(&path, tampered).unwrap();
        assert!(matches!(replay(&path), Err(ReplayError::Malformed { line: 1, .. })));
    }

    #[test]
    fn crash_keeps_flushed_prefix() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("crash.jsonl");
        let header = EpisodeHeader::new(SimConfig::default(), RobotState::default());
        let mut w = EpisodeWriter::create(&path, &header).unwrap();
        let mut cmd = UnifiedCommand::initial();
        for t in 1..=75 {
            cmd.tick = t;
            w.record_tick(&cmd, &RobotState::default(), 0.03).unwrap();
        }
        // Simulated crash: the buffered tail is never written.
        std::mem::forget(w);
        let ep = read_episode(&path).unwrap();
        assert!(ep.records.len() >= 60);
        assert!(ep.footer.is_none());
    }

    #[test]
    fn background_recorder_writes_everything() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bg.jsonl");
        let header = EpisodeHeader::new(SimConfig::default(), RobotState::default());
        let mut h = RecorderHandle::spawn(&path, header, 1024).unwrap();
        let mut cmd = UnifiedCommand::initial();
        for t in 1..=100 {
            cmd.tick = t;
            h.record(&cmd, &RobotState::default(), 0.03);
        }
        let s = h.close();
        assert_eq!(s, RecorderSummary { written: 100, dropped: 0, fault: None });
        assert_eq!(read_episode(&path).unwrap().footer.unwrap().ticks, 100);
    }
}
