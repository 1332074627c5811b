//! Monitoring service: authenticated ingest, append-only persistence,
//! threshold re-validation, alert dispatch, and a live event stream.
//!
//! The service is synchronous and clock-injected so that simulations can run
//! it in-process deterministically; [`http`] wraps it in an HTTP API.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard, Weak};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::broadcast;

use crate::arbitration::{ModeId, MotionDirection};
use crate::calibration::{CalibratedVital, VitalKind};
use crate::detectors::{active_conditions, AlertEvent, AlertKind, DeliveryChannel, DetectorConfig, Severity};
use crate::telemetry::{decode_frame, peek_header, FeedRecord, FrameError, Key, Pose, Transport, TransportError};

pub mod dispatch;
pub mod http;

pub use dispatch::{DeliveryResult, OutboxMessage, WebhookWorker};

pub trait Clock: Send + Sync {
    fn now_ms(&self) -> u64;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> u64 {
        chrono::Utc::now().timestamp_millis().max(0) as u64
    }
}

/// A clock the caller advances, for simulated time.
#[derive(Debug, Default)]
pub struct ManualClock(AtomicU64);

impl ManualClock {
    pub fn new(ms: u64) -> Self {
        Self(AtomicU64::new(ms))
    }

    pub fn set(&self, ms: u64) {
        self.0.store(ms, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now_ms(&self) -> u64 {
        self.0.load(Ordering::SeqCst)
    }
}

impl<C: Clock + ?Sized> Clock for Arc<C> {
    fn now_ms(&self) -> u64 {
        (**self).now_ms()
    }
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    pub outbox_dir: PathBuf,
    pub outbox_to: String,
    pub webhook_url: Option<String>,
    pub webhook_backoff: Duration,
    pub detectors: DetectorConfig,
    pub stream_capacity: usize,
}

impl ServiceConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        let data_dir = data_dir.into();
        Self {
            outbox_dir: data_dir.join("outbox"),
            data_dir,
            outbox_to: "caregiver@localhost".into(),
            webhook_url: None,
            webhook_backoff: Duration::from_millis(200),
            detectors: DetectorConfig::default(),
            stream_capacity: 1024,
        }
    }
}

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("unknown patient `{0}`")]
    UnknownPatient(String),
    #[error("unknown alert {0}")]
    UnknownAlert(u64),
    #[error("alert {0} already acknowledged")]
    AlreadyAcknowledged(u64),
    #[error("frame rejected: {0}")]
    Rejected(#[from] FrameError),
    #[error("range start {from} after end {to}")]
    InvalidRange { from: u64, to: u64 },
    #[error("storage: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt log {file}: {msg}")]
    CorruptLog { file: String, msg: String },
}

/// An alert plus its lifecycle state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlertRecord {
    #[serde(flatten)]
    pub event: AlertEvent,
    pub acknowledged: bool,
    pub deliveries: Vec<DeliveryResult>,
}

/// Chair state pushed by a drive session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlEvent {
    pub t_ms: u64,
    pub mode: ModeId,
    pub direction: MotionDirection,
    pub speed: f64,
    pub safe_halt: bool,
    pub pose: Pose,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum StreamEvent {
    Record { patient_id: String, record: FeedRecord },
    Alert { alert: AlertRecord },
    Ack { alert_id: u64, patient_id: String, status: Severity },
    Control(ControlEvent),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatestView {
    pub patient_id: String,
    pub status: Severity,
    pub vitals: Vec<CalibratedVital>,
    pub record: Option<FeedRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IngestOutcome {
    pub patient_id: String,
    pub seq: u32,
    pub record: FeedRecord,
    pub alerts: Vec<AlertRecord>,
}

#[derive(Serialize, Deserialize)]
struct StoredRecord {
    device_id: u64,
    seq: u32,
    record: FeedRecord,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "lowercase")]
enum AlertLogLine {
    Raised { alert: AlertEvent },
    Delivery { result: DeliveryResult },
    Ack { id: u64, at_ms: u64 },
}

#[derive(Default)]
struct PatientLog {
    records: Vec<FeedRecord>,
    latest: BTreeMap<VitalKind, CalibratedVital>,
    latest_record: Option<FeedRecord>,
    /// Conditions present in the newest record; alerts fire on entry.
    active: BTreeSet<AlertKind>,
    file: Option<File>,
}

impl PatientLog {
    fn index(&mut self, r: &FeedRecord) {
        for (kind, value) in [(VitalKind::HeartRate, r.hr), (VitalKind::SpO2, r.spo2), (VitalKind::Temperature, r.temp)] {
            if self.latest.get(&kind).is_none_or(|v| r.t >= v.t) {
                self.latest.insert(kind, CalibratedVital::new(kind, value, r.t));
            }
        }
        if self.latest_record.as_ref().is_none_or(|l| r.t >= l.t) {
            self.latest_record = Some(r.clone());
        }
        self.records.push(r.clone());
    }
}

#[derive(Default)]
struct Inner {
    patients: BTreeMap<String, PatientLog>,
    last_seq: HashMap<u64, u32>,
    alerts: BTreeMap<u64, AlertRecord>,
    rejections: BTreeMap<String, u64>,
    alert_file: Option<File>,
}

impl Inner {
    fn log_alert(&mut self, line: &AlertLogLine) -> std::io::Result<()> {
        if let Some(f) = &mut self.alert_file {
            writeln!(f, "{}", serde_json::to_string(line).expect("log line serializes"))?;
        }
        Ok(())
    }

    fn status(&self, patient: &str) -> Severity {
        let red = self.alerts.values().any(|a| !a.acknowledged && a.event.patient_id == patient && a.event.severity == Severity::Red);
        if red { Severity::Red } else { Severity::Green }
    }
}

struct Shared {
    cfg: ServiceConfig,
    key: Key,
    clock: Box<dyn Clock>,
    inner: Mutex<Inner>,
    stream: broadcast::Sender<StreamEvent>,
}

impl Shared {
    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn record_delivery(&self, result: DeliveryResult) {
        let mut inner = self.lock();
        let _ = inner.log_alert(&AlertLogLine::Delivery { result: result.clone() });
        if let Some(a) = inner.alerts.get_mut(&result.alert_id) {
            if result.ok {
                a.event.delivered.insert(result.channel);
            }
            a.deliveries.push(result);
        }
    }
}

pub fn patient_id(device_id: u64) -> String {
    device_id.to_string()
}

fn rejection_reason(e: &FrameError) -> &'static str {
    match e {
        FrameError::BadMagic => "bad_magic",
        FrameError::AuthFailure => "auth_failure",
        FrameError::Replay { .. } => "replay",
        FrameError::MalformedPayload(_) | FrameError::PayloadTooLarge(_) => "malformed",
        FrameError::SeqReuse { .. } => "seq_reuse",
    }
}

pub struct MonitorService {
    shared: Arc<Shared>,
    webhook: Option<WebhookWorker>,
}

impl MonitorService {
    /// Open (or create) the data directory and replay its logs.
    pub fn open(cfg: ServiceConfig, key: Key, clock: Box<dyn Clock>) -> Result<Self, ServiceError> {
        let patients_dir = cfg.data_dir.join("patients");
        std::fs::create_dir_all(&patients_dir)?;
        let mut inner = Inner::default();

        let mut files: Vec<PathBuf> = std::fs::read_dir(&patients_dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        files.sort();
        for path in files {
            let id = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
            let mut log = PatientLog::default();
            for (n, line) in std::fs::read_to_string(&path)?.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
                let stored: StoredRecord = serde_json::from_str(line)
                    .map_err(|e| ServiceError::CorruptLog { file: path.display().to_string(), msg: format!("line {}: {e}", n + 1) })?;
                let last = inner.last_seq.entry(stored.device_id).or_insert(stored.seq);
                *last = (*last).max(stored.seq);
                log.index(&stored.record);
            }
            if let Some(r) = log.records.last() {
                log.active = active_conditions(r.hr, r.spo2, r.temp, r.fall, r.convulsion, &cfg.detectors).into_iter().map(|(k, _)| k).collect();
            }
            log.file = Some(OpenOptions::new().append(true).open(&path)?);
            inner.patients.insert(id, log);
        }

        let alerts_path = cfg.data_dir.join("alerts.jsonl");
        if alerts_path.exists() {
            for (n, line) in std::fs::read_to_string(&alerts_path)?.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
                let entry: AlertLogLine = serde_json::from_str(line)
                    .map_err(|e| ServiceError::CorruptLog { file: alerts_path.display().to_string(), msg: format!("line {}: {e}", n + 1) })?;
                match entry {
                    AlertLogLine::Raised { alert } => {
                        inner.alerts.insert(alert.id, AlertRecord { event: alert, acknowledged: false, deliveries: Vec::new() });
                    }
                    AlertLogLine::Delivery { result } => {
                        if let Some(a) = inner.alerts.get_mut(&result.alert_id) {
                            if result.ok {
                                a.event.delivered.insert(result.channel);
                            }
                            a.deliveries.push(result);
                        }
                    }
                    AlertLogLine::Ack { id, .. } => {
                        if let Some(a) = inner.alerts.get_mut(&id) {
                            a.acknowledged = true;
                        }
                    }
                }
            }
        }
        inner.alert_file = Some(OpenOptions::new().create(true).append(true).open(&alerts_path)?);

        let (stream, _) = broadcast::channel(cfg.stream_capacity.max(1));
        let webhook_url = cfg.webhook_url.clone();
        let backoff = cfg.webhook_backoff;
        let shared = Arc::new(Shared { cfg, key, clock, inner: Mutex::new(inner), stream });
        let webhook = webhook_url.map(|url| {
            let weak: Weak<Shared> = Arc::downgrade(&shared);
            WebhookWorker::spawn(url, backoff, move |result| {
                if let Some(s) = weak.upgrade() {
                    s.record_delivery(result);
                }
            })
        });
        Ok(Self { shared, webhook })
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.shared.cfg
    }

    pub fn now_ms(&self) -> u64 {
        self.shared.clock.now_ms()
    }

    /// Make a patient known before any data arrives.
    pub fn register_patient(&self, id: &str) -> Result<(), ServiceError> {
        let mut inner = self.shared.lock();
        if !inner.patients.contains_key(id) {
            let path = self.shared.cfg.data_dir.join("patients").join(format!("{id}.jsonl"));
            let file = OpenOptions::new().create(true).append(true).open(path)?;
            inner.patients.insert(id.to_string(), PatientLog { file: Some(file), ..PatientLog::default() });
        }
        Ok(())
    }

    pub fn patients(&self) -> Vec<String> {
        self.shared.lock().patients.keys().cloned().collect()
    }

    /// Verify, persist, re-validate thresholds, raise alerts, and publish.
    pub fn ingest(&self, bytes: &[u8]) -> Result<IngestOutcome, ServiceError> {
        let mut inner = self.shared.lock();
        let decoded = peek_header(bytes).and_then(|h| decode_frame(bytes, &self.shared.key, inner.last_seq.get(&h.device_id).copied()));
        let decoded = match decoded {
            Ok(d) => d,
            Err(e) => {
                *inner.rejections.entry(rejection_reason(&e).to_string()).or_default() += 1;
                return Err(e.into());
            }
        };
        let pid = patient_id(decoded.device_id);
        let record = decoded.record;
        if !inner.patients.contains_key(&pid) {
            drop(inner);
            self.register_patient(&pid)?;
            inner = self.shared.lock();
        }

        let line = serde_json::to_string(&StoredRecord { device_id: decoded.device_id, seq: decoded.seq, record: record.clone() })
            .expect("record serializes");
        let log = inner.patients.get_mut(&pid).expect("registered above");
        if let Some(f) = &mut log.file {
            writeln!(f, "{line}")?;
        }
        log.index(&record);
        inner.last_seq.insert(decoded.device_id, decoded.seq);

        let now = self.shared.clock.now_ms();
        let cfg = &self.shared.cfg;
        let conditions = active_conditions(record.hr, record.spo2, record.temp, record.fall, record.convulsion, &cfg.detectors);
        let log = inner.patients.get_mut(&pid).expect("registered above");
        let previous = std::mem::replace(&mut log.active, conditions.iter().map(|(k, _)| *k).collect());
        let mut raised = Vec::new();
        for (kind, value) in conditions.into_iter().filter(|(k, _)| !previous.contains(k)) {
            let id = inner.alerts.keys().next_back().map_or(1, |k| k + 1);
            let mut event = AlertEvent::red(id, kind, value, record.t, pid.clone(), (record.pose.x, record.pose.y));
            inner.log_alert(&AlertLogLine::Raised { alert: event.clone() })?;
            let outbox = match dispatch::write_outbox(&cfg.outbox_dir, &event, &cfg.outbox_to, now) {
                Ok(path) => DeliveryResult { alert_id: id, channel: DeliveryChannel::Outbox, ok: true, attempts: 1, detail: path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default() },
                Err(e) => DeliveryResult { alert_id: id, channel: DeliveryChannel::Outbox, ok: false, attempts: 1, detail: e.to_string() },
            };
            inner.log_alert(&AlertLogLine::Delivery { result: outbox.clone() })?;
            if outbox.ok {
                event.delivered.insert(DeliveryChannel::Outbox);
            }
            let rec = AlertRecord { event, acknowledged: false, deliveries: vec![outbox] };
            inner.alerts.insert(id, rec.clone());
            raised.push(rec);
        }
        drop(inner);

        let _ = self.shared.stream.send(StreamEvent::Record { patient_id: pid.clone(), record: record.clone() });
        for a in &raised {
            let _ = self.shared.stream.send(StreamEvent::Alert { alert: a.clone() });
            if let Some(w) = &self.webhook {
                w.submit(a.event.clone());
            }
        }
        Ok(IngestOutcome { patient_id: pid, seq: decoded.seq, record, alerts: raised })
    }

    pub fn latest(&self, patient: &str) -> Result<LatestView, ServiceError> {
        let inner = self.shared.lock();
        let log = inner.patients.get(patient).ok_or_else(|| ServiceError::UnknownPatient(patient.into()))?;
        Ok(LatestView {
            patient_id: patient.into(),
            status: inner.status(patient),
            vitals: log.latest.values().cloned().collect(),
            record: log.latest_record.clone(),
        })
    }

    /// Records with `from <= t <= to`, ascending by `t`.
    pub fn range(&self, patient: &str, from: u64, to: u64) -> Result<Vec<FeedRecord>, ServiceError> {
        if from > to {
            return Err(ServiceError::InvalidRange { from, to });
        }
        let inner = self.shared.lock();
        let log = inner.patients.get(patient).ok_or_else(|| ServiceError::UnknownPatient(patient.into()))?;
        let mut out: Vec<FeedRecord> = log.records.iter().filter(|r| (from..=to).contains(&r.t)).cloned().collect();
        out.sort_by_key(|r| r.t);
        Ok(out)
    }

    pub fn range_kind(&self, patient: &str, from: u64, to: u64, kind: VitalKind) -> Result<Vec<CalibratedVital>, ServiceError> {
        Ok(self
            .range(patient, from, to)?
            .into_iter()
            .map(|r| {
                let v = match kind {
                    VitalKind::HeartRate => r.hr,
                    VitalKind::SpO2 => r.spo2,
                    VitalKind::Temperature => r.temp,
                };
                CalibratedVital::new(kind, v, r.t)
            })
            .collect())
    }

    pub fn alerts(&self, active_only: bool) -> Vec<AlertRecord> {
        self.shared.lock().alerts.values().filter(|a| !active_only || !a.acknowledged).cloned().collect()
    }

    pub fn status(&self, patient: &str) -> Severity {
        self.shared.lock().status(patient)
    }

    /// Acknowledge an alert; returns the patient's status afterwards.
    pub fn acknowledge(&self, id: u64) -> Result<Severity, ServiceError> {
        let now = self.shared.clock.now_ms();
        let mut inner = self.shared.lock();
        let alert = inner.alerts.get_mut(&id).ok_or(ServiceError::UnknownAlert(id))?;
        if alert.acknowledged {
            return Err(ServiceError::AlreadyAcknowledged(id));
        }
        alert.acknowledged = true;
        let pid = alert.event.patient_id.clone();
        inner.log_alert(&AlertLogLine::Ack { id, at_ms: now })?;
        let status = inner.status(&pid);
        drop(inner);
        let _ = self.shared.stream.send(StreamEvent::Ack { alert_id: id, patient_id: pid, status });
        Ok(status)
    }

    /// Rejected frames by reason (`bad_magic`, `auth_failure`, `replay`, `malformed`).
    /// Highest sequence number accepted from `device_id`.
    pub fn last_seq(&self, device_id: u64) -> Option<u32> {
        self.shared.lock().last_seq.get(&device_id).copied()
    }

    pub fn rejections(&self) -> BTreeMap<String, u64> {
        self.shared.lock().rejections.clone()
    }

    /// Frames that failed integrity checks.
    pub fn tamper_count(&self) -> u64 {
        let r = self.rejections();
        r.get("auth_failure").copied().unwrap_or(0) + r.get("bad_magic").copied().unwrap_or(0)
    }

    pub fn subscribe(&self) -> broadcast::Receiver<StreamEvent> {
        self.shared.stream.subscribe()
    }

    pub fn publish(&self, event: StreamEvent) {
        let _ = self.shared.stream.send(event);
    }

    /// Wait for queued webhook deliveries to finish.
    pub fn drain_webhooks(&mut self) {
        if let Some(mut w) = self.webhook.take() {
            w.shutdown();
        }
    }
}

impl Transport for &MonitorService {
    fn send(&mut self, frame: &[u8]) -> Result<(), TransportError> {
        self.ingest(frame).map(|_| ()).map_err(|e| TransportError::Rejected { status: 400, reason: e.to_string() })
    }
}

impl Transport for Arc<MonitorService> {
    fn send(&mut self, frame: &[u8]) -> Result<(), TransportError> {
        (&**self).send(frame)
    }
}

/// Location of the outbox file an alert produced, if any.
pub fn outbox_path(cfg: &ServiceConfig, alert: &AlertEvent) -> PathBuf {
    cfg.outbox_dir.join(OutboxMessage::file_name(alert))
}

/// Data directory layout helper for tools that read the logs directly.
pub fn patient_log_path(data_dir: &Path, patient: &str) -> PathBuf {
    data_dir.join("patients").join(format!("{patient}.jsonl"))
}
