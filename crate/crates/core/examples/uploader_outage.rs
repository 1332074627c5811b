//! The bounded upload queue across a transport outage: oldest records are
//! dropped once 256 are waiting, and the backlog drains when the link returns.

use std::sync::Arc;

use wheelsim::arbitration::ModeId;
use wheelsim::telemetry::{FeedRecord, FnTransport, FrameEncoder, Pose, TransportError, UploadQueue, Uploader, QUEUE_CAPACITY};

fn main() {
    let queue = Arc::new(UploadQueue::new(QUEUE_CAPACITY));
    let mut up = Uploader::new(queue.clone(), FrameEncoder::new([1; 16], 1), 1_000);
    let mut delivered = Vec::new();
    for s in 0..400u64 {
        let t = s * 1_000;
        queue.push(FeedRecord { t, hr: 72.0, spo2: 98.0, temp: 37.0, fall: false, convulsion: false, mode: ModeId::Stop, pose: Pose::default() });
        let link_up = s >= 300;
        let mut send = |frame: &[u8]| {
            if !link_up {
                return Err(TransportError::Down("cable unplugged".into()));
            }
            delivered.push(frame.len());
            Ok(())
        };
        up.poll(t, &mut FnTransport(&mut send));
    }
    let m = up.metrics();
    // 301 records are waiting when the link returns (the 300th second pushes before it polls)
    println!("produced {} sent {} dropped {} (= 301 - {QUEUE_CAPACITY}) queued {}", m.produced, m.sent, m.dropped, m.queued);
    println!("failed attempts during outage: {}; last error: {:?}", m.send_failures, m.last_error);
}
