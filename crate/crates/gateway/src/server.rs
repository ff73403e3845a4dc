// SPDX-License-Identifier: Apache-2.0

//! Startup, TLS and shutdown.

use std::fs::File;
use std::io::Read;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use axum::Router;
use axum_server::tls_rustls::RustlsConfig;
use teleop_core::input::{parse_pedal_script, ScriptError, SimulatedLeaderSource, SimulatedPedalSource};
use teleop_core::runtime::{Runtime, RuntimeConfig, RuntimeError, RuntimeReport};
use teleop_core::{ArmSide, Clock, MonotonicClock};
use tokio::sync::watch;
use tokio::task::JoinHandle;

use crate::app::{router, AppState};
use crate::config::{ConfigError, GatewayConfig, InputSource};

/// Rate of a simulated leader source with no keyframes.
const SIMULATED_LEADER_HZ: f64 = 50.0;

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("TLS setup failed: {0}")]
    Tls(String),
    #[error("cannot listen on {addr}: {source}")]
    Bind { addr: SocketAddr, source: std::io::Error },
    #[error("cannot open {what} source {path}: {source}")]
    Source {
        what: &'static str,
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("pedal script {path}: {source}")]
    Script { path: PathBuf, source: ScriptError },
    #[error("recording directory {path}: {source}")]
    Record { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
}

/// Runtime plus routes, not yet bound to a socket.
pub struct Services {
    pub state: Arc<AppState>,
    pub router: Router,
    pub episode: Option<PathBuf>,
    closing: watch::Sender<bool>,
}

impl Services {
    /// Ends open sessions, then stops the loop. The loop's final command
    /// zeroes the base.
    pub async fn stop(self) -> RuntimeReport {
        let _ = self.closing.send(true);
        let rt = self.state.runtime().clone();
        tokio::task::spawn_blocking(move || rt.stop())
            .await
            .expect("runtime stop panicked")
    }
}

fn open_source(what: &'static str, path: &Path) -> Result<Box<dyn Read + Send>, GatewayError> {
    // Line settings (baud rate and so on) are left to the OS, e.g. `stty`.
    File::open(path)
        .map(|f| Box::new(f) as Box<dyn Read + Send>)
        .map_err(|source| GatewayError::Source {
            what,
            path: path.to_owned(),
            source,
        })
}

fn episode_path(dir: &Path) -> Result<PathBuf, GatewayError> {
    std::fs::create_dir_all(dir).map_err(|source| GatewayError::Record {
        path: dir.to_owned(),
        source,
    })?;
    let ms = SystemTime::now().duration_since(UNIX_EPOCH).unwrap_or_default().as_millis();
    Ok(dir.join(format!("episode-{ms}.jsonl")))
}

/// Starts the runtime and input sources and builds the router. TLS is not
/// checked here; [`serve`] does that.
pub fn build_services(cfg: &GatewayConfig) -> Result<Services, GatewayError> {
    cfg.validate_services()?;
    let pedal_script = match &cfg.pedal_script {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| GatewayError::Source {
                what: "pedal script",
                path: path.clone(),
                source,
            })?;
            parse_pedal_script(&text).map_err(|source| GatewayError::Script {
                path: path.clone(),
                source,
            })?
        }
        None => Vec::new(),
    };
    let episode = cfg.record_dir.as_deref().map(episode_path).transpose()?;

    let clock: Arc<dyn Clock> = Arc::new(MonotonicClock::new());
    let rt = Runtime::start(
        RuntimeConfig {
            fuser: cfg.fuser(),
            sim: cfg.sim(),
            camera: cfg.camera,
            record: episode.clone(),
            ..RuntimeConfig::default()
        },
        clock.clone(),
    )?;

    match &cfg.pedal_source {
        InputSource::None => {}
        InputSource::Simulated => {
            let src = SimulatedPedalSource::new(pedal_script).map_err(|source| GatewayError::Script {
                path: cfg.pedal_script.clone().unwrap_or_default(),
                source,
            })?;
            rt.attach_pedals(Box::new(src.into_reader(clock.clone(), rt.shutdown_handle())))?;
        }
        InputSource::Serial(path) => rt.attach_pedals(open_source("pedal", path)?)?,
    }
    for (side, source) in [(ArmSide::Left, &cfg.leader_sources.left), (ArmSide::Right, &cfg.leader_sources.right)] {
        match source {
            InputSource::None => {}
            InputSource::Simulated => {
                // No keyframes: the leader holds its neutral pose.
                let src = SimulatedLeaderSource::new(side, Vec::new(), SIMULATED_LEADER_HZ)
                    .expect("fixed leader rate is valid");
                rt.attach_leader(side, Box::new(src.into_reader(clock.clone(), rt.shutdown_handle())))?;
            }
            InputSource::Serial(path) => rt.attach_leader(side, open_source("leader", path)?)?,
        }
    }

    let (closing, closing_rx) = watch::channel(false);
    let state = Arc::new(AppState::new(
        Arc::new(rt),
        cfg.mode,
        cfg.head,
        cfg.video,
        cfg.client_dir.clone(),
        closing_rx,
    ));
    Ok(Services {
        router: router(state.clone()),
        state,
        episode,
        closing,
    })
}

async fn tls_config(cfg: &GatewayConfig) -> Result<RustlsConfig, GatewayError> {
    // Ignore the error: a provider installed earlier in the process is fine.
    let _ = rustls::crypto::ring::default_provider().install_default();
    let tls = |e: &dyn std::fmt::Display| GatewayError::Tls(e.to_string());
    match (&cfg.tls_cert_path, &cfg.tls_key_path) {
        (Some(cert), Some(key)) => RustlsConfig::from_pem_file(cert, key)
            .await
            .map_err(|e| GatewayError::Tls(format!("{} / {}: {e}", cert.display(), key.display()))),
        _ => {
            let names = vec!["localhost".to_string(), "127.0.0.1".to_string()];
            let ck = rcgen::generate_simple_self_signed(names).map_err(|e| tls(&e))?;
            RustlsConfig::from_pem(ck.cert.pem().into_bytes(), ck.key_pair.serialize_pem().into_bytes())
                .await
                .map_err(|e| tls(&e))
        }
    }
}

/// A running gateway.
pub struct Gateway {
    addr: SocketAddr,
    handle: axum_server::Handle,
    server: JoinHandle<std::io::Result<()>>,
    services: Services,
}

impl Gateway {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn state(&self) -> &Arc<AppState> {
        &self.services.state
    }

    pub fn episode_path(&self) -> Option<&Path> {
        self.services.episode.as_deref()
    }

    /// Closes sessions, stops accepting connections and stops the loop.
    pub async fn shutdown(self) -> RuntimeReport {
        let _ = self.services.closing.send(true);
        self.handle.graceful_shutdown(Some(Duration::from_secs(2)));
        match self.server.await {
            Ok(Err(e)) => tracing::warn!(error = %e, "server exited with an error"),
            Err(e) => tracing::warn!(error = %e, "server task failed"),
            Ok(Ok(())) => {}
        }
        self.services.stop().await
    }
}

/// Validates `cfg`, loads TLS material, starts the runtime and listens.
pub async fn serve(cfg: GatewayConfig) -> Result<Gateway, GatewayError> {
    cfg.validate()?;
    let tls = tls_config(&cfg).await?;
    let addr = SocketAddr::new(cfg.listen_addr, cfg.listen_port);
    let bind = |source| GatewayError::Bind { addr, source };
    let listener = std::net::TcpListener::bind(addr).map_err(bind)?;
    listener.set_nonblocking(true).map_err(bind)?;
    let addr = listener.local_addr().map_err(bind)?;

    let services = build_services(&cfg)?;
    let handle = axum_server::Handle::new();
    let app = services.router.clone().into_make_service();
    let server = tokio::spawn(
        axum_server::from_tcp_rustls(listener, tls)
            .handle(handle.clone())
            .serve(app),
    );
    tracing::info!(%addr, mode = ?cfg.mode, "gateway listening");
    Ok(Gateway {
        addr,
        handle,
        server,
        services,
    })
}
