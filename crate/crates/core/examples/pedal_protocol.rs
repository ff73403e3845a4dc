// SPDX-License-Identifier: Apache-2.0

//! Print the pedal mapping table and push a noisy byte stream through the link.

use teleop_core::pedal::{encode_pedal_frame, pedals_to_velocity, PedalConfig, PedalFrame, PedalLink};
use teleop_core::PedalState;

fn names(bits: u8) -> String {
    let n: Vec<&str> = [(1, "F"), (2, "B"), (4, "L"), (8, "R")]
        .iter()
        .filter(|(b, _)| bits & b != 0)
        .map(|(_, n)| *n)
        .collect();
    if n.is_empty() { "-".into() } else { n.join("+") }
}

fn main() {
    let cfg = PedalConfig::default();
    println!("mask  pedals     frame      vx     vy  omega");
    for bits in 0u8..16 {
        let v = pedals_to_velocity(&PedalState::from_bits(bits, 0), &cfg);
        let f = encode_pedal_frame(PedalFrame::new(bits));
        println!(
            "{bits:>4}  {:<9}  {:02X} {:02X} {:02X}  {:+.2}  {:+.2}  {:+.2}",
            names(bits),
            f[0],
            f[1],
            f[2],
            v.vx,
            v.vy,
            v.omega
        );
    }

    let mut link = PedalLink::new(&cfg);
    let mut stream = vec![0x13, 0x37];
    stream.extend(encode_pedal_frame(PedalFrame::new(1)));
    stream.extend([0xA5, 0x04, 0x00]);
    let up = link.receive(0, &stream);
    println!("\n{} frames, {} errors, state after t=0: {:?}", up.frames, up.errors.len(), link.state().bits());
    for t in [5, 10, 25] {
        let up = link.receive(t, &encode_pedal_frame(PedalFrame::new(1)));
        println!("t={t:>2} ms accepted={:?}", up.accepted.map(|s| s.bits()));
    }
}
