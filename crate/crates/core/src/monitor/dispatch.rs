//! Alert delivery: an RFC-822 style outbox on disk and an HTTP webhook.

use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::thread::JoinHandle;
use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::detectors::{AlertEvent, DeliveryChannel};

pub const WEBHOOK_RETRIES: u32 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeliveryResult {
    pub alert_id: u64,
    pub channel: DeliveryChannel,
    pub ok: bool,
    pub attempts: u32,
    pub detail: String,
}

fn format_ms(ms: u64) -> DateTime<Utc> {
    DateTime::from_timestamp_millis(ms as i64).unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutboxMessage {
    pub to: String,
    pub subject: String,
    pub body: String,
    pub written_at_ms: u64,
}

impl OutboxMessage {
    pub fn for_alert(event: &AlertEvent, to: &str, written_at_ms: u64) -> Self {
        let subject = format!("[RED] {} alert for patient {}", event.kind, event.patient_id);
        let body = format!(
            "Alert: {kind}\nValue: {value}\nPatient: {patient}\nLocation: x={x:.2} m, y={y:.2} m\n\
             Date and time of the emergency: {when}\nAlert id: {id}\n",
            kind = event.kind,
            value = event.value,
            patient = event.patient_id,
            x = event.location.0,
            y = event.location.1,
            when = format_ms(event.t).to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
            id = event.id,
        );
        Self { to: to.into(), subject, body, written_at_ms }
    }

    pub fn to_rfc822(&self) -> String {
        format!(
            "Date: {}\r\nFrom: wheelsim-monitor@localhost\r\nTo: {}\r\nSubject: {}\r\nContent-Type: text/plain; charset=utf-8\r\n\r\n{}",
            format_ms(self.written_at_ms).to_rfc2822(),
            self.to,
            self.subject,
            self.body.replace('\n', "\r\n"),
        )
    }

    pub fn file_name(event: &AlertEvent) -> String {
        format!("{:06}-{}.eml", event.id, event.kind)
    }
}

/// Write the outbox message for `event`; one file per alert id.
pub fn write_outbox(dir: &Path, event: &AlertEvent, to: &str, written_at_ms: u64) -> std::io::Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(OutboxMessage::file_name(event));
    std::fs::write(&path, OutboxMessage::for_alert(event, to, written_at_ms).to_rfc822())?;
    Ok(path)
}

/// POST the event JSON, retrying with exponential backoff.
pub fn post_webhook(url: &str, event: &AlertEvent, base_backoff: Duration) -> DeliveryResult {
    let agent: ureq::Agent = ureq::Agent::config_builder().timeout_global(Some(Duration::from_secs(2))).build().into();
    let body = serde_json::to_string(event).expect("alert serializes");
    let mut detail = String::new();
    for attempt in 0..=WEBHOOK_RETRIES {
        if attempt > 0 {
            std::thread::sleep(base_backoff * 2u32.pow(attempt - 1));
        }
        match agent.post(url).content_type("application/json").send(body.as_str()) {
            Ok(_) => {
                return DeliveryResult { alert_id: event.id, channel: DeliveryChannel::Webhook, ok: true, attempts: attempt + 1, detail: "delivered".into() }
            }
            Err(e) => detail = e.to_string(),
        }
    }
    DeliveryResult {
        alert_id: event.id,
        channel: DeliveryChannel::Webhook,
        ok: false,
        attempts: WEBHOOK_RETRIES + 1,
        detail: format!("webhook unreachable: {detail}"),
    }
}

/// Background webhook sender so delivery never blocks ingest.
pub struct WebhookWorker {
    tx: Option<mpsc::Sender<AlertEvent>>,
    handle: Option<JoinHandle<()>>,
}

impl WebhookWorker {
    pub fn spawn(url: String, base_backoff: Duration, on_result: impl Fn(DeliveryResult) + Send + 'static) -> Self {
        let (tx, rx) = mpsc::channel::<AlertEvent>();
        let handle = std::thread::spawn(move || {
            for event in rx {
                on_result(post_webhook(&url, &event, base_backoff));
            }
        });
        Self { tx: Some(tx), handle: Some(handle) }
    }

    pub fn submit(&self, event: AlertEvent) {
        if let Some(tx) = &self.tx {
            let _ = tx.send(event);
        }
    }

    /// Finish pending deliveries and stop the worker.
    pub fn shutdown(&mut self) {
        self.tx.take();
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

impl Drop for WebhookWorker {
    fn drop(&mut self) {
        self.shutdown();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detectors::AlertKind;

    #[test]
    fn outbox_message_carries_kind_and_time() {
        let dir = tempfile::tempdir().unwrap();
        let ev = AlertEvent::red(3, AlertKind::Fall, 1.0, 1_704_067_205_000, "1", (2.0, 0.5));
        let path = write_outbox(dir.path(), &ev, "care@example.org", 1_704_067_205_100).unwrap();
        let text = std::fs::read_to_string(path).unwrap();
        assert!(text.starts_with("Date: Mon, 1 Jan 2024 00:00:05 +0000\r\n"), "{text}");
        assert!(text.contains("Subject: [RED] Fall alert for patient 1"));
        assert!(text.contains("Alert: Fall"));
        assert!(text.contains("Date and time of the emergency: 2024-01-01T00:00:05.000Z"));
    }

    #[test]
    fn unreachable_webhook_is_recorded() {
        let ev = AlertEvent::red(1, AlertKind::HeartAttack, 150.0, 0, "1", (0.0, 0.0));
        // port 9 on loopback: nothing listens
        let r = post_webhook("http://127.0.0.1:9/hook", &ev, Duration::from_millis(1));
        assert!(!r.ok);
        assert_eq!(r.attempts, 4);
    }
}
