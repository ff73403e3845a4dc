// SPDX-License-Identifier: Apache-2.0

//! Start a gateway on localhost with a fresh certificate and play the
//! phone: stream a slow head sweep over `/ws/orientation`, watch a few
//! video frames, then read `/api/status`.

use std::net::{IpAddr, Ipv4Addr};
use std::sync::Arc;
use std::time::Duration;

use futures_util::{SinkExt, StreamExt};
use teleop_gateway::{serve, GatewayConfig, StatusReport};
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::Connector;

/// Client TLS config that trusts exactly `cert`.
fn connector(cert: &rustls::pki_types::CertificateDer<'static>) -> Connector {
    let mut roots = rustls::RootCertStore::empty();
    roots.add(cert.clone()).unwrap();
    let provider = Arc::new(rustls::crypto::ring::default_provider());
    let cfg = rustls::ClientConfig::builder_with_provider(provider)
        .with_safe_default_protocol_versions()
        .unwrap()
        .with_root_certificates(roots)
        .with_no_client_auth();
    Connector::Rustls(Arc::new(cfg))
}

#[tokio::main]
async fn main() {
    let dir = std::env::temp_dir().join("teleop-phone-client");
    std::fs::create_dir_all(&dir).unwrap();
    let ck = rcgen::generate_simple_self_signed(vec!["localhost".to_string()]).unwrap();
    let cert_pem = ck.cert.pem();
    let (cert, key) = (dir.join("cert.pem"), dir.join("key.pem"));
    std::fs::write(&cert, &cert_pem).unwrap();
    std::fs::write(&key, ck.key_pair.serialize_pem()).unwrap();

    let gw = serve(GatewayConfig {
        listen_addr: IpAddr::V4(Ipv4Addr::LOCALHOST),
        listen_port: 0,
        tls_cert_path: Some(cert),
        tls_key_path: Some(key),
        ..Default::default()
    })
    .await
    .unwrap();
    let addr = gw.local_addr();
    println!("gateway on https://{addr}");

    let (mut head, _) = tokio_tungstenite::connect_async_tls_with_config(
        format!("wss://localhost:{}/ws/orientation", addr.port()),
        None,
        false,
        Some(connector(ck.cert.der())),
    )
    .await
    .unwrap();
    let (mut video, _) = tokio_tungstenite::connect_async_tls_with_config(
        format!("wss://localhost:{}/ws/video", addr.port()),
        None,
        false,
        Some(connector(ck.cert.der())),
    )
    .await
    .unwrap();

    // 2 s at 60 Hz, yaw sweeping from the calibration pose to +60.
    for seq in 1..=120u64 {
        let yaw = 100.0 + seq as f64 * 0.5;
        let msg = format!(r#"{{"roll":3,"pitch":-10,"yaw":{yaw},"seq":{seq},"t":{}}}"#, seq * 16);
        head.send(Message::text(msg)).await.unwrap();
        tokio::time::sleep(Duration::from_millis(16)).await;
    }
    for _ in 0..3 {
        if let Some(Ok(Message::Binary(b))) = video.next().await {
            println!("video message: {} bytes, header {:02X?}", b.len(), &b[..8]);
        }
    }

    let client = reqwest::Client::builder()
        .add_root_certificate(reqwest::Certificate::from_pem(cert_pem.as_bytes()).unwrap())
        .build()
        .unwrap();
    let st: StatusReport = client
        .get(format!("https://localhost:{}/api/status", addr.port()))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    let l = &st.loop_status;
    println!("loop: tick {} at {:.2} Hz, p99 jitter {:.3} ms, {:?}", l.tick, l.rate_hz, l.jitter_p99_ms, l.safety);
    for m in &st.modalities {
        println!("  {:<12} connected={:<5} stale={}", format!("{:?}", m.modality), m.connected, m.stale);
    }
    let robot_head = gw.state().runtime().robot_state().head;
    println!("robot head yaw {:.1} roll {:.1}", robot_head.yaw, robot_head.roll);

    head.close(None).await.unwrap();
    let report = gw.shutdown().await;
    println!("stopped after {} ticks", report.loop_report.map(|r| r.ticks).unwrap_or(0));
}
