// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use teleop_gateway::config::{GatewayConfig, Mode, InputSource};
use teleop_gateway::keyboard::spawn_keyboard;
use tracing_subscriber::EnvFilter;

/// Teleoperation gateway. Flags override the config file.
#[derive(Parser, Debug)]
#[command(version)]
struct Args {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    port: Option<u16>,
    #[arg(long, requires = "tls_key")]
    tls_cert: Option<PathBuf>,
    #[arg(long, requires = "tls_cert")]
    tls_key: Option<PathBuf>,
    /// Generate a throwaway certificate. Phones will warn about it.
    #[arg(long, conflicts_with_all = ["tls_cert", "tls_key"])]
    self_signed: bool,
    /// sim or hardware.
    #[arg(long)]
    mode: Option<Mode>,
    /// Write one episode file per run into this directory.
    #[arg(long)]
    record: Option<PathBuf>,
    /// Drive a simulated pedal source from this script.
    #[arg(long)]
    pedal_script: Option<PathBuf>,
    /// Read key presses from stdin, one or more per line.
    #[arg(long)]
    keyboard: bool,
}

fn config(args: &Args) -> Result<GatewayConfig, String> {
    let mut cfg = match &args.config {
        Some(p) => GatewayConfig::load(p).map_err(|e| e.to_string())?,
        None => GatewayConfig::default(),
    };
    if let Some(p) = args.port {
        cfg.listen_port = p;
    }
    if let (Some(c), Some(k)) = (&args.tls_cert, &args.tls_key) {
        cfg.tls_cert_path = Some(c.clone());
        cfg.tls_key_path = Some(k.clone());
        cfg.self_signed = false;
    }
    if args.self_signed {
        cfg.tls_cert_path = None;
        cfg.tls_key_path = None;
        cfg.self_signed = true;
    }
    if let Some(m) = args.mode {
        cfg.mode = m;
    }
    if let Some(r) = &args.record {
        cfg.record_dir = Some(r.clone());
    }
    if let Some(s) = &args.pedal_script {
        cfg.pedal_script = Some(s.clone());
        cfg.pedal_source = InputSource::Simulated;
    }
    Ok(cfg)
}

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .init();
    let args = Args::parse();
    let cfg = match config(&args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let keyboard = cfg.keyboard;
    let gateway = match teleop_gateway::serve(cfg).await {
        Ok(g) => g,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    };
    println!("listening on https://{}", gateway.local_addr());
    if args.keyboard {
        let rt = gateway.state().runtime().clone();
        if let Err(e) = spawn_keyboard(rt, keyboard, std::io::BufReader::new(std::io::stdin())) {
            eprintln!("error: keyboard input: {e}");
        }
    }
    let _ = tokio::signal::ctrl_c().await;
    let report = gateway.shutdown().await;
    match report.loop_report {
        Ok(r) => println!(
            "stopped after {} ticks, mean {:.2} Hz, p99 jitter {:.2} ms",
            r.ticks, r.mean_rate_hz, r.jitter.p99_ms
        ),
        Err(e) => eprintln!("loop ended with: {e}"),
    }
    if let Some(s) = report.recorder {
        println!("recorded {} ticks ({} dropped)", s.written, s.dropped);
    }
    ExitCode::SUCCESS
}
