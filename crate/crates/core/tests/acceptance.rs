// SPDX-License-Identifier: Apache-2.0

//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::process::ExitCode;
use std::sync::{Arc, RwLock};
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use teleop_core::arm::{decode_leader_frame, encode_leader_frame, LeaderLink};
use teleop_core::fusion::{run_loop, Fuser, InputHub, Shutdown, SinkError};
use teleop_core::head::{calibrate, normalize, parse_orientation_message, HeadControlConfig};
use teleop_core::input::{LeaderKeyframe, PedalEvent, SimulatedLeaderSource, SimulatedPedalSource};
use teleop_core::pedal::{
    decode_pedal_frame, encode_pedal_frame, pedals_to_velocity, Debouncer, PedalConfig, PedalFrame, PedalLink,
};
use teleop_core::recorder::{read_episode, replay};
use teleop_core::runtime::{CameraConfig, Runtime, RuntimeConfig};
use teleop_core::scenario::{run_scenario, Scenario};
use teleop_core::sim::{render_synthetic_frame, BaseGeometry, OmniBase, RobotState, WheelSpeeds};
use teleop_core::video::{fitted_size, pace_frames, prepare_frame, FrameOrientation, PrepareOptions, VideoFrame};
use teleop_core::{
    pedal_bits, ArmJointVector, ArmSide, BaseVelocity, Clock, HeadCommand, Modality, MonotonicClock, OrientationSample,
    PedalState, SafetyState, UnifiedCommand, VirtualClock,
};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    };
}

// Brute-force wrap: shift by whole turns until the value lands in (−180, 180].
fn wrap_oracle(mut a: f64) -> f64 {
    while a > 180.0 {
        a -= 360.0;
    }
    while a <= -180.0 {
        a += 360.0;
    }
    a
}

fn sample(roll: f64, pitch: f64, yaw: f64) -> OrientationSample {
    OrientationSample {
        roll,
        pitch,
        yaw,
        timestamp_ms: 0,
        seq: 1,
    }
}

fn head_normalization() -> Outcome {
    let cfg = HeadControlConfig::default();
    let mut rng = StdRng::seed_from_u64(0x4EAD);
    for _ in 0..10_000 {
        let s = sample(
            rng.random_range(-180.0..=180.0),
            rng.random_range(-90.0..=90.0),
            rng.random_range(-180.0..=180.0),
        );
        let r = sample(
            rng.random_range(-180.0..=180.0),
            rng.random_range(-90.0..=90.0),
            rng.random_range(-180.0..=180.0),
        );
        let out = normalize(&s, &calibrate(&r), &cfg);
        ensure!(
            (-90.0..=90.0).contains(&out.yaw) && (-90.0..=90.0).contains(&out.roll),
            "out of range {out:?} for {s:?} / {r:?}"
        );
        let expect_yaw = wrap_oracle(s.yaw - r.yaw).clamp(-90.0, 90.0);
        ensure!((out.yaw - expect_yaw).abs() < 1e-9, "yaw {} vs oracle {expect_yaw}", out.yaw);
        let zero = normalize(&s, &calibrate(&s), &cfg);
        ensure!(zero == HeadCommand { yaw: 0.0, roll: 0.0 }, "zero reference gave {zero:?}");
    }

    // Examples with independent oracles.
    let p = parse_orientation_message(r#"{"roll":10.5,"pitch":-3,"yaw":190,"seq":2}"#, 0).map_err(|e| e.to_string())?;
    ensure!(p.yaw == wrap_oracle(190.0) && p.yaw == -170.0, "190 wrapped to {}", p.yaw);
    let seam = normalize(&sample(0.0, 0.0, -170.0), &calibrate(&sample(0.0, 0.0, 170.0)), &cfg);
    ensure!((seam.yaw - wrap_oracle(-170.0 - 170.0)).abs() < 1e-12 && (seam.yaw - 20.0).abs() < 1e-12, "seam {seam:?}");
    let clamp = normalize(&sample(0.0, 0.0, 130.0), &calibrate(&sample(0.0, 0.0, 10.0)), &cfg);
    ensure!(clamp.yaw == 90.0, "clamp {clamp:?}");

    // Seam sweep: references near ±180°, the sample walks a 1° grid across
    // the phone's wrap point (everything short of the antipode).
    let mut worst: f64 = 0.0;
    let mut refs: Vec<f64> = (170..=180).map(f64::from).chain((-180..=-170).map(f64::from)).collect();
    refs.extend([179.5, -179.5, 179.99, -179.99]);
    for ref_yaw in refs {
        let r = calibrate(&sample(0.0, 0.0, ref_yaw));
        let mut prev: Option<f64> = None;
        for k in -179..=179 {
            let raw = wrap_oracle(ref_yaw + k as f64);
            let y = normalize(&sample(0.0, 0.0, raw), &r, &cfg).yaw;
            if let Some(p) = prev {
                worst = worst.max((y - p).abs());
            }
            prev = Some(y);
        }
    }
    ensure!(worst <= 1.5, "max seam step {worst}°");
    Ok(format!("10000 pairs in range, zero-ref exact, max seam step {worst:.3}°"))
}

fn pedal_truth_table() -> Outcome {
    use pedal_bits::*;
    let cfg = PedalConfig::default();
    let (v, w) = (cfg.v_lin, cfg.omega_turn);
    // Written out row by row from the mapping table.
    let table: [(u8, (f64, f64, f64)); 16] = [
        (0, (0.0, 0.0, 0.0)),
        (FORWARD, (v, 0.0, 0.0)),
        (BACKWARD, (-v, 0.0, 0.0)),
        (FORWARD | BACKWARD, (0.0, 0.0, 0.0)),
        (LEFT, (0.0, v, 0.0)),
        (FORWARD | LEFT, (0.0, 0.0, w)),
        (BACKWARD | LEFT, (0.0, 0.0, 0.0)),
        (FORWARD | BACKWARD | LEFT, (0.0, 0.0, 0.0)),
        (RIGHT, (0.0, -v, 0.0)),
        (FORWARD | RIGHT, (0.0, 0.0, -w)),
        (BACKWARD | RIGHT, (0.0, 0.0, 0.0)),
        (FORWARD | BACKWARD | RIGHT, (0.0, 0.0, 0.0)),
        (LEFT | RIGHT, (0.0, 0.0, 0.0)),
        (FORWARD | LEFT | RIGHT, (0.0, 0.0, 0.0)),
        (BACKWARD | LEFT | RIGHT, (0.0, 0.0, 0.0)),
        (ALL, (0.0, 0.0, 0.0)),
    ];
    for (bits, (vx, vy, om)) in table {
        let got = pedals_to_velocity(&PedalState::from_bits(bits, 0), &cfg);
        ensure!(got == BaseVelocity::new(vx, vy, om), "bits {bits:04b}: got {got:?}");
        let swapped = (bits & (FORWARD | BACKWARD)) | ((bits & LEFT) << 1) | ((bits & RIGHT) >> 1);
        let m = pedals_to_velocity(&PedalState::from_bits(swapped, 0), &cfg);
        ensure!(
            m.vx == got.vx && m.vy == -got.vy && m.omega == -got.omega,
            "mirror of {bits:04b} gave {m:?}"
        );
    }
    let fl = pedals_to_velocity(&PedalState::from_bits(FORWARD | LEFT, 0), &PedalConfig { omega_turn: 0.8, ..cfg });
    ensure!(fl == BaseVelocity::new(0.0, 0.0, 0.8), "F+L gave {fl:?}");
    Ok("16/16 rows, F+L → +ω, F+R → −ω, mirror symmetry".into())
}

// Continuous-time oracle: a level that holds for [start, end) is accepted
// at start + d iff it lasts at least d and differs from the accepted level.
fn debounce_oracle(runs: &[(u64, u64, u8)], d: u64) -> Vec<(u64, u8)> {
    let mut accepted = 0u8;
    let mut out = Vec::new();
    for &(start, end, bits) in runs {
        if bits != accepted && end - start >= d {
            accepted = bits;
            out.push((start + d, bits));
        }
    }
    out
}

fn debounce_sweep() -> Outcome {
    let mut cases = 0;
    for d in [5u64, 20, 50] {
        for width in 1..=100u64 {
            let (t0, horizon) = (100, 400);
            let runs = [(0, t0, 0u8), (t0, t0 + width, pedal_bits::FORWARD), (t0 + width, horizon + 1, 0)];
            let expected = debounce_oracle(&runs, d);

            let mut deb = Debouncer::new(d, PedalState::default());
            let mut got = Vec::new();
            // One raw frame per millisecond.
            for t in 0..=horizon {
                let bits = if (t0..t0 + width).contains(&t) { pedal_bits::FORWARD } else { 0 };
                if let Some(s) = deb.feed(t, bits) {
                    got.push((s.timestamp_ms, s.bits()));
                }
            }
            ensure!(got == expected, "d={d} width={width}: got {got:?}, oracle {expected:?}");
            let passed = got.iter().any(|&(_, b)| b == pedal_bits::FORWARD);
            ensure!(passed == (width >= d), "d={d} width={width}: passed={passed}");
            cases += 1;
        }
    }
    // Chatter faster than the window never gets through.
    let mut deb = Debouncer::new(20, PedalState::default());
    for t in 0..2000u64 {
        let bits = if (t / 10) % 2 == 0 { pedal_bits::FORWARD } else { 0 };
        ensure!(deb.feed(t, bits).is_none(), "10 ms chatter accepted at {t}");
    }
    Ok(format!("{cases} pulse widths match the event oracle; 10 ms chatter suppressed"))
}

fn kinematics() -> Outcome {
    let g = BaseGeometry::default();
    let base = OmniBase::new(g).map_err(|e| e.to_string())?;
    let mut rng = StdRng::seed_from_u64(0x0101);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let v = BaseVelocity::new(
            rng.random_range(-1.0..=1.0),
            rng.random_range(-1.0..=1.0),
            rng.random_range(-3.0..=3.0),
        );
        let back = base.fk(&base.ik(&v));
        worst = worst.max((back.vx - v.vx).abs()).max((back.vy - v.vy).abs()).max((back.omega - v.omega).abs());
    }
    ensure!(worst < 1e-9, "round-trip error {worst:e}");

    for _ in 0..1000 {
        let om: f64 = rng.random_range(-3.0..=3.0);
        let w = base.ik(&BaseVelocity::new(0.0, 0.0, om));
        let each = g.wheel_offset * om / g.wheel_radius;
        ensure!(w.w1 == each && w.w2 == each && w.w3 == each, "rotation {om}: {w:?}");
    }

    // Independent evaluation of w_i = (−sin θ_i·vx + cos θ_i·vy + R·ω)/r.
    let (vx, vy, om) = (0.3, 0.0, 0.0);
    let oracle: Vec<f64> = [90.0f64, 210.0, 330.0]
        .iter()
        .map(|t| {
            let t = t * std::f64::consts::PI / 180.0;
            (-t.sin() * vx + t.cos() * vy + 0.15 * om) / 0.05
        })
        .collect();
    let w = base.ik(&BaseVelocity::new(vx, vy, om)).as_array();
    for i in 0..3 {
        ensure!((w[i] - oracle[i]).abs() < 1e-12, "wheel {i}: {} vs oracle {}", w[i], oracle[i]);
        ensure!((w[i] - [-6.0, 3.0, 3.0][i]).abs() < 1e-12, "wheel {i}: {}", w[i]);
    }
    let eq = base.fk(&WheelSpeeds { w1: 2.0, w2: 2.0, w3: 2.0 });
    ensure!(eq.vx.abs() < 1e-12 && eq.vy.abs() < 1e-12 && (eq.omega - 2.0 * 0.05 / 0.15).abs() < 1e-12, "{eq:?}");
    Ok(format!("max round-trip error {worst:.2e}, rotation symmetry exact, (0.3,0,0) → (−6,3,3)"))
}

struct VirtualRun {
    commands: Vec<UnifiedCommand>,
    last_pedal_ms: Vec<Option<u64>>,
}

fn virtual_fusion_run() -> Result<VirtualRun, String> {
    let clock = VirtualClock::new();
    let hub = InputHub::new();
    let fuser = RwLock::new(Fuser::default());
    let shutdown = Shutdown::new();
    let mut commands = Vec::new();
    let mut last_pedal_ms = Vec::new();
    let mut last_pedal: Option<u64> = None;
    {
        let (clock, hub, stopper) = (clock.clone(), hub.clone(), shutdown.clone());
        let mut sink = |c: &UnifiedCommand| -> Result<(), SinkError> {
            commands.push(*c);
            last_pedal_ms.push(last_pedal);
            let now = clock.now_ms();
            if now < 3000 {
                hub.update_pedals(PedalState::from_bits(pedal_bits::FORWARD, now), now);
                last_pedal = Some(now);
            }
            if now < 5000 {
                hub.update_head(HeadCommand::clamped(0.01 * c.tick as f64, -5.0), now);
                let mut l = ArmJointVector::neutral(ArmSide::Left);
                l.joints[0] = 10.0 + 0.1 * c.tick as f64;
                hub.update_leader(l, now);
            }
            if now < 8000 {
                hub.touch_client(now);
            }
            if c.tick == 420 {
                stopper.trigger();
            }
            Ok(())
        };
        run_loop(&clock, &hub, &fuser, &mut sink, &shutdown, None).map_err(|e| e.to_string())?;
    }
    Ok(VirtualRun { commands, last_pedal_ms })
}

fn fusion_virtual_clock() -> Outcome {
    let run = virtual_fusion_run()?;
    let cmds = &run.commands;
    let ticks: Vec<u64> = cmds.iter().map(|c| c.tick).collect();
    ensure!(ticks == (1..=421).collect::<Vec<_>>(), "ticks not consecutive 1..=421");
    let period = 1000.0 / 30.0;
    for c in &cmds[..420] {
        let expect = ((c.tick - 1) as f64 * period).floor() as u64;
        ensure!(c.timestamp_ms.abs_diff(expect) <= 1, "tick {} at {} ms, expected {expect}", c.tick, c.timestamp_ms);
    }
    let last = cmds.last().unwrap();
    ensure!(last.base == BaseVelocity::ZERO, "final command base {:?}", last.base);

    let mut halted = 0;
    for (c, lp) in cmds.iter().zip(&run.last_pedal_ms) {
        let silent = lp.map_or(u64::MAX, |t| c.timestamp_ms.saturating_sub(t));
        if silent > 200 {
            ensure!(c.base == BaseVelocity::ZERO, "tick {}: pedals silent {silent} ms but base {:?}", c.tick, c.base);
            ensure!(c.safety != SafetyState::Nominal, "tick {}: still nominal", c.tick);
            halted += 1;
        }
        if (3000..8000).contains(&c.timestamp_ms) && silent >= 250 {
            ensure!(c.safety == SafetyState::BaseHalted, "tick {}: {:?}", c.tick, c.safety);
        }
    }
    ensure!(halted > 0, "the pedal silence window was never exercised");

    // Head and arm silence (last update just before 5000 ms, checked up to 6000).
    let held: Vec<&UnifiedCommand> = cmds.iter().filter(|c| c.timestamp_ms > 5040 && c.timestamp_ms <= 6000).collect();
    ensure!(!held.is_empty(), "no ticks in the hold window");
    for w in held.windows(2) {
        ensure!(w[0].head == w[1].head, "head moved while silent at tick {}", w[1].tick);
        ensure!(w[0].left_arm == w[1].left_arm, "left arm moved while silent at tick {}", w[1].tick);
    }
    ensure!(held[0].head.yaw > 1.0, "head never tracked input ({:?})", held[0].head);

    // Client last seen just before 8000 ms; frozen past 10000 ms.
    let frozen: Vec<&UnifiedCommand> = cmds.iter().filter(|c| c.timestamp_ms > 10_000 && c.tick <= 420).collect();
    ensure!(!frozen.is_empty(), "no ticks after client timeout");
    ensure!(
        frozen.iter().all(|c| c.safety == SafetyState::Frozen && c.base == BaseVelocity::ZERO),
        "client loss did not freeze the base"
    );
    ensure!(frozen.iter().all(|c| c.head == held[0].head), "head did not hold while frozen");

    let again = virtual_fusion_run()?;
    ensure!(again.commands == run.commands, "virtual run is not deterministic");
    Ok(format!("421 consecutive ticks at 30 Hz, {halted} halted ticks, hold and freeze verified, deterministic"))
}

fn realtime_smoke() -> Outcome {
    let cfg = RuntimeConfig {
        camera: CameraConfig { width: 320, height: 240, fps: 30.0 },
        ..Default::default()
    };
    let clock: Arc<dyn Clock> = Arc::new(MonotonicClock::new());
    let rt = Runtime::start(cfg, clock.clone()).map_err(|e| e.to_string())?;
    let script = vec![
        PedalEvent::press(1000, pedal_bits::FORWARD),
        PedalEvent::press(20_000, pedal_bits::FORWARD | pedal_bits::LEFT),
        PedalEvent::press(40_000, 0),
    ];
    let pedals = SimulatedPedalSource::new(script).map_err(|e| e.to_string())?;
    rt.attach_pedals(Box::new(pedals.into_reader(clock.clone(), rt.shutdown_handle())))
        .map_err(|e| e.to_string())?;
    let start = Instant::now();
    while start.elapsed() < Duration::from_secs(60) {
        rt.hub().touch_client(rt.now_ms());
        std::thread::sleep(Duration::from_millis(250));
    }
    let report = rt.shutdown();
    let lr = report.loop_report?;
    ensure!(
        (29.5..=30.5).contains(&lr.mean_rate_hz),
        "mean rate {:.3} Hz over {:.1} s",
        lr.mean_rate_hz,
        lr.elapsed.as_secs_f64()
    );
    ensure!(lr.jitter.p99_ms < 5.0, "p99 jitter {:.3} ms", lr.jitter.p99_ms);
    ensure!(report.final_state.pose.x > 1.0, "sim did not follow the pedals: {:?}", report.final_state.pose);
    Ok(format!(
        "{} ticks over {:.1} s, mean {:.3} Hz, p99 jitter {:.2} ms, max {:.2} ms, {} overruns",
        lr.ticks,
        lr.elapsed.as_secs_f64(),
        lr.mean_rate_hz,
        lr.jitter.p99_ms,
        lr.jitter.max_ms,
        lr.overruns
    ))
}

fn video_pipeline() -> Outcome {
    let opts = PrepareOptions::default();
    let mut portrait = render_synthetic_frame(&RobotState::default(), 1080, 1920).map_err(|e| e.to_string())?;
    portrait.timestamp_ms = 7;
    ensure!(portrait.source_orientation == FrameOrientation::Portrait, "1080×1920 not tagged portrait");
    let out = prepare_frame(&portrait, &opts).map_err(|e| e.to_string())?;
    ensure!((out.width, out.height) == (1920, 1080), "portrait became {}×{}", out.width, out.height);
    // Clockwise: the source's bottom-left pixel becomes the top-left.
    let src_px = |x: u32, y: u32| &portrait.pixels[((y * 1080 + x) * 3) as usize..][..3];
    let out_px = |x: u32, y: u32| &out.pixels[((y * 1920 + x) * 3) as usize..][..3];
    for (x, y) in [(0u32, 0u32), (500, 300), (1919, 1079), (37, 1000)] {
        ensure!(out_px(x, y) == src_px(y, 1919 - x), "rotation mismatch at ({x},{y})");
    }
    let twice = prepare_frame(&out, &opts).map_err(|e| e.to_string())?;
    ensure!(twice == out, "prepare_frame is not idempotent");

    let mut rng = StdRng::seed_from_u64(0x71DE0);
    for _ in 0..10_000 {
        let (w, h) = (rng.random_range(1..=8000u32), rng.random_range(1..=8000u32));
        let (rw, rh) = if h > w { (h, w) } else { (w, h) };
        let (fw, fh) = fitted_size(rw, rh, 1920, 1080);
        ensure!(fw <= 1920 && fh <= 1080 && fw >= 1 && fh >= 1, "{rw}×{rh} → {fw}×{fh}");
        ensure!(fw <= rw && fh <= rh, "{rw}×{rh} upscaled to {fw}×{fh}");
        let exact_h = fw as f64 * rh as f64 / rw as f64;
        let exact_w = fh as f64 * rw as f64 / rh as f64;
        ensure!(
            (fh as f64 - exact_h).abs() <= 1.0 || (fw as f64 - exact_w).abs() <= 1.0,
            "{rw}×{rh} → {fw}×{fh} breaks aspect"
        );
    }
    for (w, h) in [(3840, 2160), (1280, 720), (4000, 3000), (300, 2000), (2500, 100)] {
        let f = VideoFrame::filled(w, h, [9, 8, 7], if h > w { FrameOrientation::Portrait } else { FrameOrientation::Landscape });
        let p = prepare_frame(&f, &opts).map_err(|e| e.to_string())?;
        ensure!(p.width <= 1920 && p.height <= 1080, "{w}×{h} → {}×{}", p.width, p.height);
        ensure!(prepare_frame(&p, &opts).map_err(|e| e.to_string())? == p, "{w}×{h} not idempotent");
    }
    let big = prepare_frame(&VideoFrame::filled(3840, 2160, [1, 2, 3], FrameOrientation::Landscape), &opts)
        .map_err(|e| e.to_string())?;
    ensure!((big.width, big.height) == (1920, 1080), "3840×2160 → {}×{}", big.width, big.height);

    // Pacing on synthetic bursts; frames are tagged by timestamp.
    let tag = |id: u64| {
        let mut f = VideoFrame::filled(4, 4, [0, 0, 0], FrameOrientation::Landscape);
        f.timestamp_ms = id;
        f
    };
    let ids = |v: &[(u64, VideoFrame)]| v.iter().map(|(_, f)| f.timestamp_ms).collect::<Vec<_>>();
    let sixty: Vec<_> = (0..60u64).map(|i| (8_333 + i * 16_667, tag(i))).collect();
    let out60 = pace_frames(sixty, 30.0).map_err(|e| e.to_string())?;
    let mut expect60 = vec![0];
    expect60.extend((1..60).step_by(2));
    ensure!(ids(&out60) == expect60, "60→30 fps gave {:?}", ids(&out60));
    let ten: Vec<_> = (0..10u64).map(|i| (i * 100_000, tag(i))).collect();
    ensure!(ids(&pace_frames(ten, 30.0).map_err(|e| e.to_string())?) == (0..10).collect::<Vec<_>>(), "10 fps dropped frames");
    // Slot grid at 30 fps: 0, 33333, 66666 µs. Five frames land between the first two slots.
    let burst: Vec<_> = [(0, 0), (5_000, 1), (10_000, 2), (15_000, 3), (20_000, 4), (25_000, 5), (70_000, 6)]
        .into_iter()
        .map(|(t, id)| (t, tag(id)))
        .collect();
    let outb = pace_frames(burst, 30.0).map_err(|e| e.to_string())?;
    ensure!(ids(&outb) == vec![0, 5, 6], "burst gave {:?}", ids(&outb));
    for w in outb.windows(2) {
        ensure!(w[0].1.timestamp_ms < w[1].1.timestamp_ms, "older frame after newer");
        ensure!(w[1].0 - w[0].0 >= 33_333, "slots closer than the frame interval");
    }
    Ok("1080×1920 → 1920×1080 clockwise, cap held over 10000 sizes, idempotent, latest-wins pacing".into())
}

fn protocol_round_trips() -> Outcome {
    for bits in 0..16u8 {
        let bytes = encode_pedal_frame(PedalFrame::new(bits));
        ensure!(bytes == [0xA5, bits, 0xA5 ^ bits], "mask {bits}: {bytes:02X?}");
        let back = decode_pedal_frame(&bytes).map_err(|e| e.to_string())?;
        ensure!(back.bitmask == bits, "mask {bits} decoded as {}", back.bitmask);
    }
    ensure!(decode_pedal_frame(&[0xA5, 0x05, 0xA0]).map(|f| f.bitmask) == Ok(5), "A5 05 A0 is forward+left");
    ensure!(decode_pedal_frame(&[0xA5, 0x05, 0xA1]).is_err(), "A5 05 A1 must fail its checksum");

    let mut rng = StdRng::seed_from_u64(0x1EAD);
    for _ in 0..1000 {
        let side = if rng.random_bool(0.5) { ArmSide::Left } else { ArmSide::Right };
        let mut joints = [0.0; 5];
        for j in &mut joints {
            *j = rng.random_range(i16::MIN..=i16::MAX) as f64 / 100.0;
        }
        let arm = ArmJointVector { side, joints, gripper: rng.random_range(0..=255u8) as f64 / 255.0 };
        let bytes = encode_leader_frame(&arm);
        let back = decode_leader_frame(&bytes).map_err(|e| e.to_string())?;
        ensure!(back == arm, "leader round trip {arm:?} → {back:?}");
        ensure!(encode_leader_frame(&back) == bytes, "re-encode differs");
    }

    // Corrupt checksum: dropped, debounced state untouched.
    let cfg = PedalConfig::default();
    let mut link = PedalLink::new(&cfg);
    link.receive(0, &encode_pedal_frame(PedalFrame::new(pedal_bits::FORWARD)));
    link.receive(30, &encode_pedal_frame(PedalFrame::new(pedal_bits::FORWARD)));
    let before = link.state();
    ensure!(before.bits() == pedal_bits::FORWARD, "forward never accepted");
    for t in (40..200).step_by(10) {
        let up = link.receive(t, &[0xA5, pedal_bits::BACKWARD, 0x00]);
        ensure!(up.frames == 0 && up.errors.iter().any(|e| e.is_corrupt()), "corrupt frame accepted");
    }
    ensure!(link.state() == before, "corrupt frames changed state");
    let mut leader = LeaderLink::new();
    let mut bad = encode_leader_frame(&ArmJointVector::neutral(ArmSide::Left));
    bad[13] ^= 0x40;
    ensure!(leader.receive(&bad).iter().all(|r| r.is_err()), "corrupt leader frame accepted");

    // Resync: garbage (including stray header bytes) before valid frames.
    let mut stream = vec![0x00, 0xFF, 0xA5, 0x13, 0x77, 0x5A, 0xA5];
    for bits in [1u8, 4, 9] {
        stream.extend(encode_pedal_frame(PedalFrame::new(bits)));
    }
    let mut link = PedalLink::new(&PedalConfig { debounce_ms: 0, ..cfg });
    let mut seen = Vec::new();
    for (i, b) in stream.iter().enumerate() {
        let up = link.receive(i as u64, &[*b]);
        if up.frames > 0 {
            seen.push(link.state().bits());
        }
    }
    ensure!(seen == vec![1, 4, 9], "pedal resync decoded {seen:?}");
    let arms = [
        ArmJointVector { side: ArmSide::Left, joints: [1.0, 2.0, 3.0, 4.0, 5.0], gripper: 1.0 },
        ArmJointVector { side: ArmSide::Right, joints: [-1.0, 0.5, 0.0, 90.0, -45.0], gripper: 0.0 },
    ];
    let mut lstream = vec![0x5A, 0x01, 0x02, 0xA5, 0x5A];
    for a in &arms {
        lstream.extend(encode_leader_frame(a));
    }
    let mut leader = LeaderLink::new();
    let got: Vec<ArmJointVector> = lstream.chunks(3).flat_map(|c| leader.receive(c)).filter_map(Result::ok).collect();
    ensure!(got == arms, "leader resync decoded {got:?}");
    Ok("16 pedal masks, 1000 leader frames, corrupt frames dropped, resync after garbage".into())
}

fn end_to_end_scenario(disconnect: Option<(Modality, u64)>) -> Scenario {
    use pedal_bits::*;
    let mut s = Scenario::new(8000);
    s.pedals = Some(
        SimulatedPedalSource::new(vec![
            PedalEvent::press(0, FORWARD),
            PedalEvent::press(2000, FORWARD | LEFT),
            PedalEvent::press(3000, LEFT),
            PedalEvent::press(4000, 0),
            PedalEvent::corrupt(4500, BACKWARD),
            PedalEvent::press(5000, BACKWARD | RIGHT),
            PedalEvent::press(5500, RIGHT),
            PedalEvent::press(6000, 0),
        ])
        .expect("ordered script"),
    );
    // 60 Hz phone stream sweeping yaw through the ±180° seam.
    s.orientation = (0..480u64)
        .map(|i| {
            let yaw = wrap_oracle(170.0 + 0.1 * i as f64);
            let roll = 10.0 * (i as f64 / 30.0).sin();
            (i * 1000 / 60, format!(r#"{{"roll":{roll},"pitch":1.5,"yaw":{yaw},"seq":{}}}"#, i + 1))
        })
        .collect();
    let kf = |t, j: [f64; 5], g| LeaderKeyframe { t_ms: t, joints: j, gripper: g };
    s.left = Some(
        SimulatedLeaderSource::new(
            ArmSide::Left,
            vec![kf(0, [0.0; 5], 0.0), kf(2500, [30.0, -20.0, 10.0, 5.0, 0.0], 0.8), kf(6000, [-10.0, 40.0, 0.0, 0.0, 20.0], 0.2)],
            50.0,
        )
        .expect("ordered keyframes"),
    );
    s.right = Some(
        SimulatedLeaderSource::new(
            ArmSide::Right,
            vec![kf(500, [0.0; 5], 1.0), kf(4000, [-45.0, 15.0, 60.0, -5.0, 10.0], 0.0), kf(7000, [0.0; 5], 0.5)],
            50.0,
        )
        .expect("ordered keyframes"),
    );
    s.disconnects = disconnect.into_iter().collect();
    s
}

fn end_to_end() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("episode.jsonl");
    let out = run_scenario(end_to_end_scenario(None), Some(&path)).map_err(|e| e.to_string())?;
    let replayed = replay(&path).map_err(|e| e.to_string())?;
    let episode = read_episode(&path).map_err(|e| e.to_string())?;
    let bits = |s: &RobotState| serde_json::to_string(s).unwrap_or_default();
    ensure!(replayed == out.final_state && bits(&replayed) == bits(&out.final_state), "replay diverged");
    ensure!(episode.recorded_final_state() == replayed, "recorded final state differs from replay");
    ensure!(episode.records.len() == out.commands.len(), "episode has {} records", episode.records.len());
    let p = out.final_state.pose;
    ensure!(p.x.abs() > 0.1 && p.heading.abs() > 1.0, "scripted inputs barely moved the robot: {p:?}");

    let channels = |c: &UnifiedCommand, m: Modality| -> String {
        match m {
            Modality::Pedals => format!("{:?}{:?}", c.base, c.safety),
            Modality::Head => format!("{:?}", c.head),
            Modality::LeftLeader => format!("{:?}", c.left_arm),
            Modality::RightLeader => format!("{:?}", c.right_arm),
            Modality::Client => String::new(),
        }
    };
    let device = [Modality::Pedals, Modality::Head, Modality::LeftLeader, Modality::RightLeader];
    for cut in device {
        let other = run_scenario(end_to_end_scenario(Some((cut, 3000))), None).map_err(|e| e.to_string())?;
        ensure!(other.commands.len() == out.commands.len(), "{cut:?} cut changed tick count");
        let mut differs = false;
        for (a, b) in out.commands.iter().zip(&other.commands) {
            ensure!(a.tick == b.tick && a.timestamp_ms == b.timestamp_ms, "tick stream changed");
            for m in device {
                if m == cut {
                    differs |= channels(a, m) != channels(b, m);
                } else {
                    ensure!(channels(a, m) == channels(b, m), "{cut:?} cut changed {m:?} at tick {}", a.tick);
                }
            }
        }
        ensure!(differs, "cutting {cut:?} had no effect on its own channel");
    }
    Ok(format!(
        "{} ticks recorded, replay bit-exact at ({:.4}, {:.4}, {:.3}°), 4 single-modality cuts isolated",
        out.commands.len(),
        p.x,
        p.y,
        p.heading
    ))
}

struct Criterion {
    name: &'static str,
    limit: Option<Duration>,
    run: fn() -> Outcome,
}

fn main() -> ExitCode {
    let criteria = [
        Criterion { name: "head normalization suite", limit: Some(Duration::from_secs(5)), run: head_normalization },
        Criterion { name: "pedal truth table", limit: Some(Duration::from_secs(1)), run: pedal_truth_table },
        Criterion { name: "debounce automaton sweep", limit: Some(Duration::from_secs(5)), run: debounce_sweep },
        Criterion { name: "omni-base kinematics", limit: Some(Duration::from_secs(5)), run: kinematics },
        Criterion { name: "fusion loop under virtual clock", limit: Some(Duration::from_secs(5)), run: fusion_virtual_clock },
        Criterion { name: "real-time smoke test (60 s)", limit: None, run: realtime_smoke },
        Criterion { name: "video pipeline", limit: None, run: video_pipeline },
        Criterion { name: "protocol round trips", limit: None, run: protocol_round_trips },
        Criterion { name: "end-to-end record/replay and disconnect diff", limit: None, run: end_to_end },
    ];
    let mut failed = 0;
    for c in &criteria {
        let start = Instant::now();
        let result = (c.run)();
        let took = start.elapsed();
        let result = match (result, c.limit) {
            (Ok(detail), Some(limit)) if took > limit => Err(format!("{detail}; took {took:.2?}, limit {limit:?}")),
            (r, _) => r,
        };
        match result {
            Ok(detail) => println!("PASS  {}: {detail} [{took:.2?}]", c.name),
            Err(why) => {
                failed += 1;
                println!("FAIL  {}: {why} [{took:.2?}]", c.name);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
