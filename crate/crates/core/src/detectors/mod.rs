//! Threshold and pattern detectors for the patient's vitals and motion.
//!
//! All detectors are pure over `(window, config)`. The `*Monitor` types add
//! the per-episode re-arm state so overlapping windows produce one event.

pub mod corpus;
mod convulsion;
mod fall;

pub use convulsion::{detect_convulsion, dominant_frequency_hz, ConvulsionEvent, ConvulsionMonitor};
pub use fall::{detect_fall, FallDetector, FallEvent, FallMonitor};

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decoders::AccelSample;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DetectorError {
    #[error("window covers {have_ms} ms at {rate_hz:.1} Hz; need {need_ms} ms at >= 50 Hz")]
    InsufficientWindow { have_ms: u64, need_ms: u64, rate_hz: f64 },
    #[error("invalid detector config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    pub hr_high: f64,
    pub hr_low: f64,
    pub temp_high: f64,
    pub temp_low: f64,
    pub spo2_low: f64,
    pub fall: FallConfig,
    pub convulsion: ConvulsionConfig,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            hr_high: 140.0,
            hr_low: 40.0,
            temp_high: 38.0,
            temp_low: 35.5,
            spo2_low: 94.0,
            fall: FallConfig::default(),
            convulsion: ConvulsionConfig::default(),
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<(), DetectorError> {
        if self.hr_low >= self.hr_high {
            return Err(DetectorError::InvalidConfig(format!("hr_low {} >= hr_high {}", self.hr_low, self.hr_high)));
        }
        if self.temp_low >= self.temp_high {
            return Err(DetectorError::InvalidConfig(format!("temp_low {} >= temp_high {}", self.temp_low, self.temp_high)));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, DetectorError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| DetectorError::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Free fall followed by impact.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FallConfig {
    pub freefall_g: f64,
    pub freefall_min_ms: u64,
    pub impact_g: f64,
    pub impact_window_ms: u64,
    /// Re-arm once |a| stays within 1 g ± this band ...
    pub rearm_band_g: f64,
    /// ... for this long.
    pub rearm_ms: u64,
}

impl Default for FallConfig {
    fn default() -> Self {
        Self { freefall_g: 0.3, freefall_min_ms: 120, impact_g: 2.5, impact_window_ms: 500, rearm_band_g: 0.2, rearm_ms: 1000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConvulsionConfig {
    pub min_peak_to_peak_g: f64,
    pub band_low_hz: f64,
    pub band_high_hz: f64,
    pub persist_ms: u64,
    pub hr_min: f64,
    pub window_ms: u64,
    pub segment_ms: u64,
    pub segment_step_ms: u64,
}

impl Default for ConvulsionConfig {
    fn default() -> Self {
        Self {
            min_peak_to_peak_g: 0.5,
            band_low_hz: 2.0,
            band_high_hz: 8.0,
            persist_ms: 5000,
            hr_min: 100.0,
            window_ms: 6000,
            segment_ms: 1000,
            segment_step_ms: 500,
        }
    }
}

/// Window must span `need_ms` at a mean sample rate of at least 50 Hz.
pub(crate) fn check_coverage(window: &[AccelSample], need_ms: u64) -> Result<f64, DetectorError> {
    let insufficient = |have_ms, rate_hz| DetectorError::InsufficientWindow { have_ms, need_ms, rate_hz };
    if window.len() < 2 {
        return Err(insufficient(0, 0.0));
    }
    let span = window[window.len() - 1].t.saturating_sub(window[0].t);
    let dt = span as f64 / (window.len() - 1) as f64;
    let rate = if dt > 0.0 { 1000.0 / dt } else { 0.0 };
    let covered = span as f64 + dt;
    if rate < 50.0 - 1e-9 || covered + 1e-9 < need_ms as f64 {
        return Err(insufficient(covered.round() as u64, rate));
    }
    Ok(dt)
}

/// Heart-attack screen: strictly outside `[hr_low, hr_high]`.
pub fn detect_heart_attack(hr: f64, cfg: &DetectorConfig) -> bool {
    hr > cfg.hr_high || hr < cfg.hr_low
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TemperatureStatus {
    Normal,
    TempHigh,
    TempLow,
}

pub fn check_temperature(temp: f64, cfg: &DetectorConfig) -> TemperatureStatus {
    if temp > cfg.temp_high {
        TemperatureStatus::TempHigh
    } else if temp < cfg.temp_low {
        TemperatureStatus::TempLow
    } else {
        TemperatureStatus::Normal
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpO2Status {
    Normal,
    SpO2Low,
}

pub fn check_spo2(spo2: f64, cfg: &DetectorConfig) -> SpO2Status {
    if spo2 < cfg.spo2_low { SpO2Status::SpO2Low } else { SpO2Status::Normal }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AlertKind {
    HeartAttack,
    Fall,
    Convulsion,
    TempHigh,
    TempLow,
    SpO2Low,
}

impl AlertKind {
    pub const ALL: [AlertKind; 6] =
        [AlertKind::HeartAttack, AlertKind::Fall, AlertKind::Convulsion, AlertKind::TempHigh, AlertKind::TempLow, AlertKind::SpO2Low];

    /// Kinds that assert the arbitration `health_alert` hazard.
    pub fn is_health_hazard(self) -> bool {
        matches!(self, AlertKind::HeartAttack | AlertKind::Convulsion)
    }
}

impl std::fmt::Display for AlertKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        std::fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Severity {
    Green,
    Red,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeliveryChannel {
    Outbox,
    Webhook,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlertEvent {
    pub id: u64,
    pub kind: AlertKind,
    pub severity: Severity,
    /// The measurement that crossed the threshold.
    pub value: f64,
    pub t: u64,
    pub patient_id: String,
    /// Chair position (x m, y m) when the event was raised.
    pub location: (f64, f64),
    pub delivered: BTreeSet<DeliveryChannel>,
}

impl AlertEvent {
    /// A threshold crossing; always Red.
    pub fn red(id: u64, kind: AlertKind, value: f64, t: u64, patient_id: impl Into<String>, location: (f64, f64)) -> Self {
        Self { id, kind, severity: Severity::Red, value, t, patient_id: patient_id.into(), location, delivered: BTreeSet::new() }
    }
}

/// Two-colour status over an interval's events.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Status {
    pub severity: Severity,
    pub events: Vec<AlertEvent>,
}

pub fn classify(events: &[AlertEvent]) -> Status {
    let red: Vec<AlertEvent> = events.iter().filter(|e| e.severity == Severity::Red).cloned().collect();
    Status { severity: if red.is_empty() { Severity::Green } else { Severity::Red }, events: red }
}

/// Threshold conditions present in one set of vitals and motion flags.
///
/// Shared by the edge and by the monitor's ingest re-validation.
pub fn active_conditions(hr: f64, spo2: f64, temp: f64, fall: bool, convulsion: bool, cfg: &DetectorConfig) -> Vec<(AlertKind, f64)> {
    let mut out = Vec::new();
    if detect_heart_attack(hr, cfg) {
        out.push((AlertKind::HeartAttack, hr));
    }
    if fall {
        out.push((AlertKind::Fall, 1.0));
    }
    if convulsion {
        out.push((AlertKind::Convulsion, 1.0));
    }
    match check_temperature(temp, cfg) {
        TemperatureStatus::TempHigh => out.push((AlertKind::TempHigh, temp)),
        TemperatureStatus::TempLow => out.push((AlertKind::TempLow, temp)),
        TemperatureStatus::Normal => {}
    }
    if check_spo2(spo2, cfg) == SpO2Status::SpO2Low {
        out.push((AlertKind::SpO2Low, spo2));
    }
    out
}
