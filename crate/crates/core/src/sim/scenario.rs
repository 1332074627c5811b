use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::kinematics::KinematicsConfig;
use crate::arbitration::{ModeButton, MotionDirection};
use crate::detectors::DetectorConfig;

/// 2024-01-01T00:00:00Z: simulated time zero maps here on the wire.
pub const DEFAULT_EPOCH_MS: u64 = 1_704_067_200_000;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario parse: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("event {index} ({kind}) at {t_ms} ms is outside the {duration_ms} ms scenario")]
    EventOutOfRange { index: usize, kind: String, t_ms: u64, duration_ms: u64 },
    #[error("event {index} at {t_ms} ms: {msg}")]
    InvalidEvent { index: usize, t_ms: u64, msg: String },
    #[error("invalid config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HazardKind {
    Fall,
    Convulsion,
    HeartAttack,
    Obstacle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "params", rename_all = "snake_case")]
pub enum EventKind {
    /// Hold the stick at centered counts (`x`, `y`) for `duration_ms`.
    Joystick {
        #[serde(default)]
        x: i32,
        #[serde(default)]
        y: i32,
        #[serde(default)]
        pressed: bool,
        duration_ms: u64,
    },
    /// A transcribed utterance.
    Voice { text: String },
    /// Tilt the glove toward `direction`.
    Gesture {
        direction: MotionDirection,
        #[serde(default = "default_tilt")]
        tilt_deg: f64,
        duration_ms: u64,
    },
    /// Hold gaze toward `direction` at `angle_deg`.
    Eog {
        direction: MotionDirection,
        #[serde(default = "default_gaze")]
        angle_deg: f64,
        duration_ms: u64,
    },
    DoubleBlink,
    Hazard {
        kind: HazardKind,
        #[serde(default)]
        duration_ms: Option<u64>,
    },
    /// Switch a vital's profile (`hr`, `spo2`, `temp`) to a named profile or constant.
    Physiology { vital: String, profile: String },
    TransportOutage { duration_ms: u64 },
    ClearSafehalt,
    SelectMode { mode: ModeButton },
    /// The input snapshot is unavailable for `duration_ms`.
    MissingInput { duration_ms: u64 },
}

fn default_tilt() -> f64 {
    30.0
}

fn default_gaze() -> f64 {
    15.0
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::Joystick { .. } => "joystick",
            EventKind::Voice { .. } => "voice",
            EventKind::Gesture { .. } => "gesture",
            EventKind::Eog { .. } => "eog",
            EventKind::DoubleBlink => "double_blink",
            EventKind::Hazard { .. } => "hazard",
            EventKind::Physiology { .. } => "physiology",
            EventKind::TransportOutage { .. } => "transport_outage",
            EventKind::ClearSafehalt => "clear_safehalt",
            EventKind::SelectMode { .. } => "select_mode",
            EventKind::MissingInput { .. } => "missing_input",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioEvent {
    pub t_ms: u64,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VitalProfiles {
    pub hr: String,
    pub spo2: String,
    pub temp: String,
}

impl Default for VitalProfiles {
    fn default() -> Self {
        Self { hr: "resting".into(), spo2: "resting".into(), temp: "resting".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub device_id: u64,
    /// Wall-clock instant that simulated t = 0 corresponds to.
    pub epoch_ms: u64,
    /// Telemetry upload cadence; one feed record per cadence.
    pub cadence_ms: u64,
    /// Hex AES-128 key shared by the chair and the service.
    pub key: String,
    pub kinematics: KinematicsConfig,
    pub detectors: DetectorConfig,
    pub vitals: VitalProfiles,
    /// Standard deviation of the body accelerometer noise, g.
    pub accel_noise_g: f64,
    pub initial_mode: ModeButton,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            device_id: 1,
            epoch_ms: DEFAULT_EPOCH_MS,
            cadence_ms: crate::telemetry::DEFAULT_CADENCE_MS,
            key: "000102030405060708090a0b0c0d0e0f".into(),
            kinematics: KinematicsConfig::default(),
            detectors: DetectorConfig::default(),
            vitals: VitalProfiles::default(),
            accel_noise_g: 0.01,
            initial_mode: ModeButton::Auto,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    pub seed: u64,
    pub duration_ms: u64,
    #[serde(default)]
    pub events: Vec<ScenarioEvent>,
    #[serde(default)]
    pub config: SimConfig,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let mut s: Scenario = serde_json::from_str(text)?;
        s.validate()?;
        s.events.sort_by_key(|e| e.t_ms);
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.duration_ms == 0 {
            return Err(ScenarioError::Config("duration_ms must be positive".into()));
        }
        if self.config.cadence_ms == 0 || self.config.cadence_ms % crate::arbitration::TICK_MS != 0 {
            return Err(ScenarioError::Config("cadence_ms must be a positive multiple of the 20 ms tick".into()));
        }
        crate::telemetry::parse_key_hex(&self.config.key).map_err(|e| ScenarioError::Config(e.to_string()))?;
        self.config.detectors.validate().map_err(|e| ScenarioError::Config(e.to_string()))?;
        for (index, e) in self.events.iter().enumerate() {
            if e.t_ms >= self.duration_ms {
                return Err(ScenarioError::EventOutOfRange { index, kind: e.kind.name().into(), t_ms: e.t_ms, duration_ms: self.duration_ms });
            }
            if let EventKind::Physiology { vital, profile } = &e.kind {
                let kind = vital.parse().map_err(|msg| ScenarioError::InvalidEvent { index, t_ms: e.t_ms, msg })?;
                crate::calibration::VitalProfile::parse(kind, profile)
                    .map_err(|err| ScenarioError::InvalidEvent { index, t_ms: e.t_ms, msg: err.to_string() })?;
            }
        }
        Ok(())
    }

    /// A scenario shipped in `fixtures/scenarios/`.
    pub fn bundled(name: &str) -> Option<Scenario> {
        let text = match name {
            "fall_demo" => include_str!("../../fixtures/scenarios/fall_demo.json"),
            "idle_60s" => include_str!("../../fixtures/scenarios/idle_60s.json"),
            "priority_conflict" => include_str!("../../fixtures/scenarios/priority_conflict.json"),
            "hr_spike" => include_str!("../../fixtures/scenarios/hr_spike.json"),
            "tour" => include_str!("../../fixtures/scenarios/tour.json"),
            _ => return None,
        };
        Some(Scenario::from_json(text).expect("bundled scenario is valid"))
    }

    pub const BUNDLED: [&'static str; 5] = ["fall_demo", "idle_60s", "priority_conflict", "hr_spike", "tour"];
}
