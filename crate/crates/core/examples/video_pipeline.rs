// SPDX-License-Identifier: Apache-2.0

//! Rotate, cap and encode a portrait frame, then pace a 60 fps stream to 30.

use teleop_core::video::{
    decode_frame_message, encode_frame_message, encode_jpeg, pace_frames, prepare_frame, FrameOrientation,
    PrepareOptions, VideoFrame, DEFAULT_JPEG_QUALITY,
};

fn main() {
    let portrait = VideoFrame::filled(1080, 1920, [30, 120, 200], FrameOrientation::Portrait);
    let out = prepare_frame(&portrait, &PrepareOptions::default()).unwrap();
    println!("{}x{} portrait -> {}x{}", portrait.width, portrait.height, out.width, out.height);

    let uhd = VideoFrame::filled(3840, 2160, [0, 0, 0], FrameOrientation::Landscape);
    let capped = prepare_frame(&uhd, &PrepareOptions::default()).unwrap();
    println!("{}x{} -> {}x{}", uhd.width, uhd.height, capped.width, capped.height);

    let jpeg = encode_jpeg(&out, DEFAULT_JPEG_QUALITY).unwrap();
    let msg = encode_frame_message(&jpeg);
    println!(
        "message header {:02X?}, {} byte payload",
        &msg[..8],
        decode_frame_message(&msg).unwrap().len()
    );

    let arrivals: Vec<(u64, VideoFrame)> = (0..12)
        .map(|i| {
            let f = VideoFrame::filled(4, 4, [i as u8, 0, 0], FrameOrientation::Landscape);
            (i * 1_000_000 / 60, f)
        })
        .collect();
    let paced = pace_frames(arrivals, 30.0).unwrap();
    let ids: Vec<u8> = paced.iter().map(|(_, f)| f.pixels[0]).collect();
    println!("60 fps paced to 30: frames {ids:?}");
}
