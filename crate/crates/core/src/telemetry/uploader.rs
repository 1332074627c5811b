use std::collections::VecDeque;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use serde::Serialize;
use thiserror::Error;

use super::{FeedRecord, FrameEncoder};

pub const QUEUE_CAPACITY: usize = 256;
pub const DEFAULT_CADENCE_MS: u64 = 1_000;
/// Batch preset: everything produced in a 40 s window goes out together.
pub const BATCH_CADENCE_MS: u64 = 40_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransportError {
    /// Not reachable; the frame stays queued.
    #[error("transport down: {0}")]
    Down(String),
    /// Reached the service, which refused the frame; retrying cannot help.
    #[error("rejected ({status}): {reason}")]
    Rejected { status: u16, reason: String },
}

pub trait Transport {
    fn send(&mut self, frame: &[u8]) -> Result<(), TransportError>;
}

impl<T: Transport + ?Sized> Transport for &mut T {
    fn send(&mut self, frame: &[u8]) -> Result<(), TransportError> {
        (**self).send(frame)
    }
}

impl<T: Transport + ?Sized> Transport for Box<T> {
    fn send(&mut self, frame: &[u8]) -> Result<(), TransportError> {
        (**self).send(frame)
    }
}

pub struct FnTransport<F>(pub F);

impl<F: FnMut(&[u8]) -> Result<(), TransportError>> Transport for FnTransport<F> {
    fn send(&mut self, frame: &[u8]) -> Result<(), TransportError> {
        (self.0)(frame)
    }
}

/// POSTs frames to a monitor service's `/ingest` endpoint.
pub struct HttpTransport {
    url: String,
    agent: ureq::Agent,
}

impl HttpTransport {
    /// `base` is the service root, e.g. `http://127.0.0.1:8080`.
    pub fn new(base: &str) -> Self {
        let config = ureq::Agent::config_builder().timeout_global(Some(Duration::from_secs(2))).build();
        Self { url: format!("{}/ingest", base.trim_end_matches('/')), agent: config.into() }
    }
}

impl Transport for HttpTransport {
    fn send(&mut self, frame: &[u8]) -> Result<(), TransportError> {
        match self.agent.post(&self.url).content_type("application/octet-stream").send(frame) {
            Ok(_) => Ok(()),
            Err(ureq::Error::StatusCode(status)) if (400..500).contains(&status) => {
                Err(TransportError::Rejected { status, reason: format!("HTTP {status}") })
            }
            Err(e) => Err(TransportError::Down(e.to_string())),
        }
    }
}

#[derive(Debug, Default)]
struct QueueState {
    items: VecDeque<(u64, FeedRecord)>,
    produced: u64,
    dropped: u64,
}

/// Bounded drop-oldest queue between the producer and the uploader.
///
/// The producer never waits on the consumer; the lock is only held for
/// O(1) deque operations.
#[derive(Debug)]
pub struct UploadQueue {
    capacity: usize,
    state: Mutex<QueueState>,
}

impl Default for UploadQueue {
    fn default() -> Self {
        Self::new(QUEUE_CAPACITY)
    }
}

impl UploadQueue {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "queue capacity must be positive");
        Self { capacity, state: Mutex::new(QueueState::default()) }
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, QueueState> {
        self.state.lock().unwrap_or_else(|p| p.into_inner())
    }

    /// Enqueue, evicting the oldest record when full. Returns true on eviction.
    pub fn push(&self, record: FeedRecord) -> bool {
        let mut s = self.lock();
        let index = s.produced;
        s.produced += 1;
        s.items.push_back((index, record));
        if s.items.len() > self.capacity {
            s.items.pop_front();
            s.dropped += 1;
            return true;
        }
        false
    }

    fn front(&self) -> Option<(u64, FeedRecord)> {
        self.lock().items.front().cloned()
    }

    /// Remove the head only if it is still the record the consumer sent.
    fn pop_if(&self, index: u64) {
        let mut s = self.lock();
        if s.items.front().is_some_and(|(i, _)| *i == index) {
            s.items.pop_front();
        }
    }

    pub fn len(&self) -> usize {
        self.lock().items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn produced(&self) -> u64 {
        self.lock().produced
    }

    pub fn dropped(&self) -> u64 {
        self.lock().dropped
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct UploadMetrics {
    pub produced: u64,
    pub sent: u64,
    pub dropped: u64,
    pub rejected: u64,
    pub send_failures: u64,
    pub queued: usize,
    pub last_error: Option<String>,
}

/// Drains the queue at a fixed cadence, one frame per record.
///
/// Each send attempt takes a fresh sequence number, so a record retried after
/// an outage never reuses a nonce even if the queue head changed meanwhile.
pub struct Uploader {
    queue: Arc<UploadQueue>,
    encoder: FrameEncoder,
    cadence_ms: u64,
    next_flush_ms: u64,
    sent: u64,
    rejected: u64,
    send_failures: u64,
    last_error: Option<String>,
}

impl Uploader {
    pub fn new(queue: Arc<UploadQueue>, encoder: FrameEncoder, cadence_ms: u64) -> Self {
        assert!(cadence_ms > 0, "cadence must be positive");
        Self { queue, encoder, cadence_ms, next_flush_ms: 0, sent: 0, rejected: 0, send_failures: 0, last_error: None }
    }

    pub fn queue(&self) -> &Arc<UploadQueue> {
        &self.queue
    }

    pub fn cadence_ms(&self) -> u64 {
        self.cadence_ms
    }

    /// Flush if a cadence boundary has been reached at `now_ms`. Returns frames delivered.
    pub fn poll(&mut self, now_ms: u64, transport: &mut dyn Transport) -> u64 {
        if now_ms < self.next_flush_ms {
            return 0;
        }
        self.next_flush_ms = (now_ms / self.cadence_ms + 1) * self.cadence_ms;
        self.flush(transport)
    }

    /// Send everything queued, stopping at the first transport failure.
    pub fn flush(&mut self, transport: &mut dyn Transport) -> u64 {
        let mut delivered = 0;
        while let Some((index, record)) = self.queue.front() {
            let frame = match self.encoder.encode_next(&record) {
                Ok(f) => f,
                Err(e) => {
                    self.rejected += 1;
                    self.last_error = Some(e.to_string());
                    self.queue.pop_if(index);
                    continue;
                }
            };
            match transport.send(&frame) {
                Ok(()) => {
                    self.sent += 1;
                    delivered += 1;
                    self.queue.pop_if(index);
                }
                Err(e @ TransportError::Rejected { .. }) => {
                    self.rejected += 1;
                    self.last_error = Some(e.to_string());
                    self.queue.pop_if(index);
                }
                Err(e @ TransportError::Down(_)) => {
                    self.send_failures += 1;
                    self.last_error = Some(e.to_string());
                    break;
                }
            }
        }
        delivered
    }

    pub fn metrics(&self) -> UploadMetrics {
        UploadMetrics {
            produced: self.queue.produced(),
            sent: self.sent,
            dropped: self.queue.dropped(),
            rejected: self.rejected,
            send_failures: self.send_failures,
            queued: self.queue.len(),
            last_error: self.last_error.clone(),
        }
    }

    /// Run on a background thread against the wall clock until `stop` is set.
    pub fn spawn<T: Transport + Send + 'static>(mut self, mut transport: T, stop: Arc<AtomicBool>) -> JoinHandle<UploadMetrics> {
        std::thread::spawn(move || {
            let start = Instant::now();
            while !stop.load(Ordering::Relaxed) {
                self.poll(start.elapsed().as_millis() as u64, &mut transport);
                std::thread::sleep(Duration::from_millis(self.cadence_ms.min(10)));
            }
            self.flush(&mut transport);
            self.metrics()
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arbitration::ModeId;
    use crate::telemetry::{decode_frame, Pose};

    fn rec(t: u64) -> FeedRecord {
        FeedRecord { t, hr: 70.0, spo2: 98.0, temp: 37.0, fall: false, convulsion: false, mode: ModeId::Stop, pose: Pose::default() }
    }

    const KEY: [u8; 16] = [3; 16];

    #[test]
    fn healthy_transport_sends_everything() {
        let q = Arc::new(UploadQueue::default());
        let mut up = Uploader::new(q.clone(), FrameEncoder::new(KEY, 1), DEFAULT_CADENCE_MS);
        let mut frames = Vec::new();
        let mut tx = FnTransport(|f: &[u8]| {
            frames.push(f.to_vec());
            Ok(())
        });
        for k in 0..10 {
            q.push(rec(k * 1000));
            up.poll(k * 1000, &mut tx);
        }
        let m = up.metrics();
        assert_eq!((m.sent, m.dropped, m.queued), (10, 0, 0));
        let mut last = None;
        for (k, f) in frames.iter().enumerate() {
            let d = decode_frame(f, &KEY, last).unwrap();
            assert_eq!(d.record.t, k as u64 * 1000);
            last = Some(d.seq);
        }
    }

    #[test]
    fn outage_drops_oldest_beyond_capacity() {
        let q = Arc::new(UploadQueue::default());
        let mut up = Uploader::new(q.clone(), FrameEncoder::new(KEY, 1), DEFAULT_CADENCE_MS);
        let mut down = FnTransport(|_: &[u8]| Err(TransportError::Down("unplugged".into())));
        for k in 0..300 {
            q.push(rec(k * 1000));
            up.poll(k * 1000, &mut down);
        }
        assert_eq!(up.metrics().dropped, 44);
        let mut got = Vec::new();
        let mut ok = FnTransport(|f: &[u8]| {
            got.push(decode_frame(f, &KEY, None).unwrap().record.t);
            Ok(())
        });
        up.poll(300_000, &mut ok);
        assert_eq!(got.len(), 256);
        assert_eq!(got[0], 44_000, "the 44 oldest were evicted");
    }

    #[test]
    fn batch_cadence_coalesces() {
        let q = Arc::new(UploadQueue::default());
        let mut up = Uploader::new(q.clone(), FrameEncoder::new(KEY, 1), BATCH_CADENCE_MS);
        let mut bursts = Vec::new();
        let mut tx = FnTransport(|_: &[u8]| Ok(()));
        for k in 1..=120u64 {
            q.push(rec(k * 1000));
            let n = up.poll(k * 1000, &mut tx);
            if n > 0 {
                bursts.push((k, n));
            }
        }
        assert_eq!(bursts, vec![(1, 1), (40, 39), (80, 40), (120, 40)]);
    }

    #[test]
    fn rejected_frames_are_not_retried() {
        let q = Arc::new(UploadQueue::default());
        let mut up = Uploader::new(q.clone(), FrameEncoder::new(KEY, 1), DEFAULT_CADENCE_MS);
        q.push(rec(0));
        let mut tx = FnTransport(|_: &[u8]| Err(TransportError::Rejected { status: 400, reason: "no".into() }));
        up.poll(0, &mut tx);
        assert_eq!((up.metrics().rejected, up.metrics().queued), (1, 0));
    }
}
