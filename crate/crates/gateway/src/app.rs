// SPDX-License-Identifier: Apache-2.0

//! HTTP routes and WebSocket sessions.

use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use teleop_core::fusion::{FusionConfig, LoopStatus};
use teleop_core::head::{HeadControlConfig, HeadSession};
use teleop_core::runtime::Runtime;
use teleop_core::sim::Pose2;
use teleop_core::video::{encode_frame_message, encode_jpeg, prepare_frame};
use teleop_core::{Modality, ModalityStatus};
use tokio::sync::watch;
use tower_http::services::ServeDir;

use crate::config::{Mode, VideoSettings};

const PLACEHOLDER_PAGE: &str = include_str!("placeholder.html");

/// Shared by every handler.
pub struct AppState {
    runtime: Arc<Runtime>,
    mode: Mode,
    head: HeadControlConfig,
    video: VideoSettings,
    client_dir: Option<PathBuf>,
    operator: AtomicBool,
    recalibrate: AtomicBool,
    closing: watch::Receiver<bool>,
}

impl AppState {
    pub fn new(
        runtime: Arc<Runtime>,
        mode: Mode,
        head: HeadControlConfig,
        video: VideoSettings,
        client_dir: Option<PathBuf>,
        closing: watch::Receiver<bool>,
    ) -> Self {
        AppState {
            runtime,
            mode,
            head,
            video,
            client_dir,
            operator: AtomicBool::new(false),
            recalibrate: AtomicBool::new(false),
            closing,
        }
    }

    pub fn runtime(&self) -> &Arc<Runtime> {
        &self.runtime
    }

    pub fn session_active(&self) -> bool {
        self.operator.load(Ordering::SeqCst)
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    let api = Router::new()
        .route("/ws/orientation", get(orientation_ws))
        .route("/ws/video", get(video_ws))
        .route("/api/recalibrate", post(recalibrate))
        .route("/api/status", get(status))
        .route("/api/settings", get(get_settings).put(put_settings));
    let api = match &state.client_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir).append_index_html_on_directories(true)),
        None => api.route("/", get(|| async { Html(PLACEHOLDER_PAGE) })),
    };
    api.with_state(state)
}

fn error(code: StatusCode, message: impl Into<String>) -> Response {
    (code, Json(json!({ "error": message.into() }))).into_response()
}

/// Releases the operator slot and marks the head stream gone, however the
/// session ends.
struct OperatorGuard(Arc<AppState>);

impl Drop for OperatorGuard {
    fn drop(&mut self) {
        self.0.runtime.hub().set_connected(Modality::Head, false);
        self.0.operator.store(false, Ordering::SeqCst);
    }
}

async fn orientation_ws(State(st): State<Arc<AppState>>, ws: WebSocketUpgrade) -> Response {
    if st
        .operator
        .compare_exchange(false, true, Ordering::SeqCst, Ordering::SeqCst)
        .is_err()
    {
        return error(StatusCode::CONFLICT, "busy: another operator session is active");
    }
    let guard = OperatorGuard(st.clone());
    ws.on_upgrade(move |socket| orientation_session(socket, guard))
}

async fn orientation_session(mut socket: WebSocket, guard: OperatorGuard) {
    let st = guard.0.clone();
    let hub = st.runtime.hub().clone();
    let mut session = HeadSession::new(st.head);
    // A stale request from an earlier session would be redundant: a new
    // session calibrates on its first sample anyway.
    st.recalibrate.store(false, Ordering::SeqCst);
    hub.set_connected(Modality::Head, true);
    hub.touch_client(st.runtime.now_ms());
    tracing::info!("operator session opened");
    let mut closing = st.closing.clone();
    loop {
        let msg = tokio::select! {
            m = socket.recv() => m,
            _ = closing.wait_for(|c| *c) => break,
        };
        let text = match msg {
            Some(Ok(Message::Text(t))) => t,
            Some(Ok(Message::Ping(_) | Message::Pong(_))) => continue,
            Some(Ok(Message::Binary(_))) => {
                tracing::warn!("binary message on orientation stream, closing session");
                break;
            }
            Some(Ok(Message::Close(_))) | None => break,
            Some(Err(e)) => {
                tracing::debug!(error = %e, "orientation stream error");
                break;
            }
        };
        let now = st.runtime.now_ms();
        if st.recalibrate.swap(false, Ordering::SeqCst) {
            session.request_recalibration();
        }
        hub.touch_client(now);
        match session.handle_message(text.as_str(), now) {
            Ok(Some(cmd)) => hub.update_head(cmd, now),
            Ok(None) => {}
            Err(e) => tracing::debug!(error = %e, "orientation message dropped"),
        }
    }
    let _ = socket.send(Message::Close(None)).await;
    tracing::info!("operator session closed");
    drop(guard);
}

async fn video_ws(State(st): State<Arc<AppState>>, ws: WebSocketUpgrade) -> Response {
    ws.on_upgrade(move |socket| video_session(socket, st))
}

async fn video_session(mut socket: WebSocket, st: Arc<AppState>) {
    let mut ticker = tokio::time::interval(Duration::from_secs_f64(1.0 / st.video.fps));
    ticker.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Skip);
    let mut last_sent = 0u64;
    let mut closing = st.closing.clone();
    loop {
        tokio::select! {
            _ = ticker.tick() => {}
            m = socket.recv() => match m {
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                Some(Ok(_)) => continue,
            },
            _ = closing.wait_for(|c| *c) => break,
        }
        // Latest-wins: whatever the camera published since the last slot,
        // only the newest frame goes out.
        let Some((seq, frame)) = st.runtime.frames().latest() else { continue };
        if seq == last_sent {
            continue;
        }
        let video = st.video;
        let encoded = tokio::task::spawn_blocking(move || {
            let prepared = prepare_frame(&frame, &video.prepare)?;
            encode_jpeg(&prepared, video.jpeg_quality).map(|j| encode_frame_message(&j))
        })
        .await;
        let msg = match encoded {
            Ok(Ok(m)) => m,
            Ok(Err(e)) => {
                tracing::warn!(error = %e, "frame dropped");
                continue;
            }
            Err(_) => break,
        };
        if socket.send(Message::Binary(msg.into())).await.is_err() {
            break;
        }
        last_sent = seq;
        st.runtime.hub().touch_client(st.runtime.now_ms());
    }
}

async fn recalibrate(State(st): State<Arc<AppState>>) -> Json<Value> {
    st.recalibrate.store(true, Ordering::SeqCst);
    st.runtime.hub().touch_client(st.runtime.now_ms());
    Json(json!({ "status": "ok", "session_active": st.session_active() }))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StatusReport {
    pub mode: Mode,
    pub now_ms: u64,
    pub session_active: bool,
    pub modalities: Vec<ModalityStatus>,
    pub loop_status: LoopStatusView,
    pub pose: Pose2,
}

/// Wire view of the loop telemetry.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LoopStatusView {
    pub running: bool,
    pub tick: u64,
    pub rate_hz: f64,
    pub jitter_mean_ms: f64,
    pub jitter_p50_ms: f64,
    pub jitter_p99_ms: f64,
    pub jitter_max_ms: f64,
    pub overruns: u64,
    pub safety: Option<teleop_core::SafetyState>,
    pub fault: Option<String>,
}

impl From<LoopStatus> for LoopStatusView {
    fn from(s: LoopStatus) -> Self {
        LoopStatusView {
            running: s.running,
            tick: s.tick,
            rate_hz: s.rate_hz,
            jitter_mean_ms: s.jitter.mean_ms,
            jitter_p50_ms: s.jitter.p50_ms,
            jitter_p99_ms: s.jitter.p99_ms,
            jitter_max_ms: s.jitter.max_ms,
            overruns: s.overruns,
            safety: s.last_command.map(|c| c.safety),
            fault: s.fault,
        }
    }
}

async fn status(State(st): State<Arc<AppState>>) -> Json<StatusReport> {
    let rt = &st.runtime;
    let now = rt.now_ms();
    Json(StatusReport {
        mode: st.mode,
        now_ms: now,
        session_active: st.session_active(),
        modalities: rt.hub().status(now, &rt.fuser().fusion),
        loop_status: rt.monitor().status().into(),
        pose: rt.robot_state().pose,
    })
}

/// The tunables exposed over the API.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    pub fusion: FusionConfig,
    pub pedals: teleop_core::pedal::PedalConfig,
    pub max_step_deg: f64,
}

fn current_settings(rt: &Runtime) -> Settings {
    let f = rt.fuser();
    Settings {
        fusion: f.fusion,
        pedals: f.pedals,
        max_step_deg: f.max_step_deg,
    }
}

async fn get_settings(State(st): State<Arc<AppState>>) -> Json<Settings> {
    Json(current_settings(&st.runtime))
}

/// Merges `patch` into `base`, objects recursively, everything else replaced.
fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                merge(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (b, p) => *b = p,
    }
}

/// Accepts a full or partial settings document.
async fn put_settings(State(st): State<Arc<AppState>>, body: Json<Value>) -> Response {
    let rt = &st.runtime;
    let mut doc = serde_json::to_value(current_settings(rt)).expect("settings serialize");
    merge(&mut doc, body.0);
    let next: Settings = match serde_json::from_value(doc) {
        Ok(s) => s,
        Err(e) => return error(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()),
    };
    let mut f = rt.fuser();
    f.fusion = next.fusion;
    f.pedals = next.pedals;
    f.max_step_deg = next.max_step_deg;
    match rt.update_fuser(f) {
        Ok(()) => Json(current_settings(rt)).into_response(),
        Err(e) => error(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()),
    }
}
