//! Seal a feed record into an authenticated frame, open it, and show what
//! tampering and replay look like on the receiving side.

use wheelsim::arbitration::ModeId;
use wheelsim::telemetry::{decode_frame, FeedRecord, FrameEncoder, KnownAnswer, Pose, HEADER_LEN};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let key = [0x2b; 16];
    let mut enc = FrameEncoder::new(key, 7);
    let record = FeedRecord { t: 1_704_067_200_000, hr: 74.0, spo2: 98.0, temp: 36.8, fall: false, convulsion: false, mode: ModeId::Voice, pose: Pose::default() };
    let frame = enc.encode_next(&record)?;
    println!("frame {} bytes: {}", frame.len(), hex::encode(&frame[..HEADER_LEN]));

    let got = decode_frame(&frame, &key, None)?;
    println!("opened seq {} from device {}: hr {}", got.seq, got.device_id, got.record.hr);

    let mut bad = frame.clone();
    bad[HEADER_LEN] ^= 0x01;
    println!("one flipped bit: {}", decode_frame(&bad, &key, None).unwrap_err());
    println!("replayed: {}", decode_frame(&frame, &key, Some(got.seq)).unwrap_err());

    for kat in KnownAnswer::bundled() {
        let ok = wheelsim::telemetry::seal(kat.payload.as_bytes(), &kat.key()?, kat.device_id, kat.seq)? == hex::decode(&kat.frame_hex)?;
        println!("known answer device {} seq {}: {}", kat.device_id, kat.seq, if ok { "match" } else { "MISMATCH" });
    }
    Ok(())
}
