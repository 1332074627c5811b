use std::collections::BTreeSet;
use std::path::Path;

use proptest::prelude::*;

use wheelsim::arbitration::ModeId;
use wheelsim::decoders::AccelSample;
use wheelsim::detectors::{active_conditions, AlertKind, DetectorConfig, FallMonitor};
use wheelsim::monitor::{ManualClock, MonitorService, ServiceConfig, StreamEvent};
use wheelsim::telemetry::{
    decode_frame, encode_frame, frame_len, peek_header, seal, FeedRecord, FrameEncoder, FrameError, Key, Pose, HEADER_LEN,
    TAG_LEN,
};

const KEY: Key = [0x42; 16];

fn mode() -> impl Strategy<Value = ModeId> {
    prop::sample::select(vec![ModeId::Joystick, ModeId::Voice, ModeId::Gesture, ModeId::Eog, ModeId::Stop])
}

fn record() -> impl Strategy<Value = FeedRecord> {
    (
        any::<u64>(),
        (0.0f64..300.0, 0.0f64..100.0, -55.0f64..125.0),
        any::<bool>(),
        any::<bool>(),
        mode(),
        (-1e6f64..1e6, -1e6f64..1e6, -3.2f64..3.2),
    )
        .prop_map(|(t, (hr, spo2, temp), fall, convulsion, mode, (x, y, heading))| FeedRecord {
            t,
            hr,
            spo2,
            temp,
            fall,
            convulsion,
            mode,
            pose: Pose { x, y, heading },
        })
}

fn service(dir: &Path) -> MonitorService {
    MonitorService::open(ServiceConfig::new(dir), KEY, Box::new(ManualClock::new(1_700_000_000_000))).unwrap()
}

fn calm(t: u64) -> FeedRecord {
    FeedRecord { t, hr: 72.0, spo2: 98.0, temp: 36.8, fall: false, convulsion: false, mode: ModeId::Stop, pose: Pose::default() }
}

// ---------------------------------------------------------------- frames

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn decode_inverts_encode(r in record(), device in any::<u64>(), seq in 1u32..=u32::MAX, key in any::<[u8; 16]>()) {
        let frame = encode_frame(&r, &key, device, seq).unwrap();
        let d = decode_frame(&frame, &key, Some(seq - 1)).unwrap();
        prop_assert_eq!(d.record, r);
        prop_assert_eq!((d.device_id, d.seq), (device, seq));
        let h = peek_header(&frame).unwrap();
        prop_assert_eq!(frame.len(), frame_len(h.payload_len as usize));
    }

    #[test]
    fn encoder_never_reuses_a_nonce(device in any::<u64>(), seqs in prop::collection::vec(0u32..64, 1..64)) {
        let mut enc = FrameEncoder::new(KEY, device);
        let mut used = BTreeSet::new();
        let mut high = None;
        for s in seqs {
            match enc.encode(&calm(0), s) {
                Ok(f) => {
                    let h = peek_header(&f).unwrap();
                    prop_assert!(used.insert((h.device_id, h.seq)), "nonce reused");
                    prop_assert!(high.is_none_or(|hi| s > hi));
                    high = Some(s);
                }
                Err(FrameError::SeqReuse { seq, last }) => {
                    prop_assert_eq!(seq, s);
                    prop_assert!(s <= last);
                }
                Err(e) => prop_assert!(false, "unexpected {}", e),
            }
        }
    }
}

#[test]
fn frame_length_formula_holds_up_to_1024() {
    for n in 0..=1024usize {
        let payload = vec![b'x'; n];
        let f = seal(&payload, &KEY, 9, 1).unwrap();
        assert_eq!(f.len(), frame_len(n));
        assert_eq!(frame_len(n), HEADER_LEN + n + TAG_LEN);
        assert_eq!(peek_header(&f).unwrap().payload_len as usize, n);
    }
}

#[test]
fn encode_next_counts_from_one_and_stops_at_the_top() {
    let mut enc = FrameEncoder::new(KEY, 3);
    let f = enc.encode_next(&calm(0)).unwrap();
    assert_eq!(peek_header(&f).unwrap().seq, 1);
    let mut top = FrameEncoder::resume(KEY, 3, Some(u32::MAX));
    assert!(matches!(top.encode_next(&calm(0)), Err(FrameError::SeqReuse { .. })));
}

// ---------------------------------------------------------------- monitor

#[derive(Debug, Clone)]
enum Submission {
    Good(FeedRecord),
    Tampered(FeedRecord, usize),
    Replay,
    WrongKey(FeedRecord),
}

fn submission() -> impl Strategy<Value = Submission> {
    prop_oneof![
        4 => record().prop_map(Submission::Good),
        1 => (record(), any::<prop::sample::Index>()).prop_map(|(r, i)| Submission::Tampered(r, i.index(1 << 20))),
        1 => Just(Submission::Replay),
        1 => record().prop_map(Submission::WrongKey),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Accepted records survive a restart exactly; rejected frames never show up anywhere.
    #[test]
    fn only_accepted_records_are_observable_and_durable(subs in prop::collection::vec(submission(), 1..40)) {
        let dir = tempfile::tempdir().unwrap();
        let mut accepted = Vec::new();
        let mut frames_sent: Vec<Vec<u8>> = Vec::new();
        {
            let svc = service(dir.path());
            let mut stream = svc.subscribe();
            let mut enc = FrameEncoder::new(KEY, 11);
            for s in subs {
                let (frame, good) = match s {
                    Submission::Good(r) => {
                        let f = enc.encode_next(&r).unwrap();
                        accepted.push(r);
                        (f, true)
                    }
                    Submission::Tampered(r, i) => {
                        let mut f = enc.encode_next(&r).unwrap();
                        let bit = i % (f.len() * 8);
                        f[bit / 8] ^= 1 << (bit % 8);
                        (f, false)
                    }
                    Submission::Replay => match frames_sent.last() {
                        Some(f) => (f.clone(), false),
                        None => continue,
                    },
                    Submission::WrongKey(r) => (encode_frame(&r, &[0x13; 16], 11, u32::MAX).unwrap(), false),
                };
                let result = svc.ingest(&frame);
                prop_assert_eq!(result.is_ok(), good);
                if good {
                    frames_sent.push(frame);
                }
            }
            let streamed: Vec<FeedRecord> = std::iter::from_fn(|| stream.try_recv().ok())
                .filter_map(|e| match e {
                    StreamEvent::Record { record, .. } => Some(record),
                    _ => None,
                })
                .collect();
            prop_assert_eq!(&streamed, &accepted);
            // range answers in time order
            accepted.sort_by_key(|r| r.t);
            if !accepted.is_empty() {
                prop_assert_eq!(svc.range("11", 0, u64::MAX).unwrap(), accepted.clone());
                let newest = accepted.iter().map(|r| r.t).max().unwrap();
                let latest = svc.latest("11").unwrap().record.unwrap();
                prop_assert_eq!(latest.t, newest);
                prop_assert!(accepted.contains(&latest));
            }
        }
        let reopened = service(dir.path());
        if accepted.is_empty() {
            prop_assert!(reopened.range("11", 0, u64::MAX).map(|r| r.is_empty()).unwrap_or(true));
        } else {
            prop_assert_eq!(reopened.range("11", 0, u64::MAX).unwrap(), accepted.clone());
            // replay protection also survives the restart
            let last = frames_sent.last().unwrap();
            prop_assert!(reopened.ingest(last).is_err());
            prop_assert_eq!(reopened.last_seq(11), Some(peek_header(last).unwrap().seq));
        }
    }

    /// The service raises exactly the conditions the edge check reports for a fresh patient.
    #[test]
    fn ingest_revalidation_matches_edge_checks(records in prop::collection::vec(record(), 1..30)) {
        let dir = tempfile::tempdir().unwrap();
        let svc = service(dir.path());
        let cfg = DetectorConfig::default();
        for (device, r) in records.iter().enumerate() {
            let out = svc.ingest(&encode_frame(r, &KEY, device as u64 + 1, 1).unwrap()).unwrap();
            let raised: BTreeSet<AlertKind> = out.alerts.iter().map(|a| a.event.kind).collect();
            let edge: BTreeSet<AlertKind> = active_conditions(r.hr, r.spo2, r.temp, r.fall, r.convulsion, &cfg).into_iter().map(|(k, _)| k).collect();
            prop_assert_eq!(raised, edge);
        }
    }

    /// However the edge windows overlap, one fall produces one outbox message.
    #[test]
    fn one_fall_one_outbox_message(window_ms in 1_000u64..6_000, step_ms in (1u64..50).prop_map(|k| k * 20), sticky in 1usize..5) {
        let trace: Vec<AccelSample> = (0..12_000u64)
            .step_by(20)
            .map(|t| match t {
                3_000..=3_199 => AccelSample::new(0.0, 0.0, 0.1, t),
                3_200 => AccelSample::new(2.4, 0.0, 1.8, t),
                t if t > 3_200 => AccelSample::new(1.0, 0.0, 0.05, t),
                _ => AccelSample::at_rest(t),
            })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let svc = service(dir.path());
        let mut enc = FrameEncoder::new(KEY, 2);
        let mut mon = FallMonitor::new(DetectorConfig::default().fall);
        let mut pending = 0usize;
        let mut end = window_ms;
        while end < 12_000 + window_ms {
            let w: Vec<AccelSample> = trace.iter().filter(|s| s.t < end && s.t + window_ms >= end).cloned().collect();
            // a sloppy edge may repeat the flag for several records; still one episode
            if !mon.process_window(&w).is_empty() {
                pending = sticky;
            }
            let r = FeedRecord { fall: pending > 0, ..calm(end) };
            pending = pending.saturating_sub(1);
            svc.ingest(&enc.encode_next(&r).unwrap()).unwrap();
            end += step_ms;
        }
        let outbox: Vec<_> = std::fs::read_dir(dir.path().join("outbox")).unwrap().collect();
        prop_assert_eq!(outbox.len(), 1);
        prop_assert_eq!(svc.alerts(false).len(), 1);
    }
}
