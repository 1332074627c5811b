//! Two-point gain/offset calibration, sensor quantization, and synthetic vitals.

mod synth;

pub use synth::{
    generate_vital_trace, read_raw_csv, write_raw_csv, NoiseModel, SensorFixture, SensorFixtureSet, VitalGenerator,
    VitalProfile,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CalibrationError {
    #[error("anchor raws are equal ({0}); gain is undefined")]
    DegenerateAnchors(f64),
    #[error("{what} {value} outside {lo}..={hi}")]
    OutOfRange { what: &'static str, value: f64, lo: f64, hi: f64 },
    #[error("unsupported temperature resolution {0} bits (9..=12)")]
    BadResolution(u8),
    #[error("unknown profile `{profile}` for {kind:?}")]
    UnknownProfile { kind: VitalKind, profile: String },
    #[error("invalid coefficients: {0}")]
    Invalid(String),
}

/// A (raw, reference) anchor pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub raw: f64,
    pub reference: f64,
}

/// `value = gain * raw + offset`, fitted from two anchors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationCoefficients {
    pub channel: String,
    pub gain: f64,
    pub offset: f64,
    pub refs: [Anchor; 2],
}

impl CalibrationCoefficients {
    pub fn identity(channel: impl Into<String>) -> Self {
        Self {
            channel: channel.into(),
            gain: 1.0,
            offset: 0.0,
            refs: [Anchor { raw: 0.0, reference: 0.0 }, Anchor { raw: 1.0, reference: 1.0 }],
        }
    }

    pub fn apply(&self, raw: f64) -> f64 {
        apply_calibration(self, raw)
    }

    /// The raw reading that maps to `value`.
    pub fn invert(&self, value: f64) -> f64 {
        (value - self.offset) / self.gain
    }

    pub fn validate(&self) -> Result<(), CalibrationError> {
        if !self.gain.is_finite() || self.gain == 0.0 || !self.offset.is_finite() {
            return Err(CalibrationError::Invalid(format!("gain {} offset {}", self.gain, self.offset)));
        }
        Ok(())
    }

    /// Load the `{channel, gain, offset, refs}` JSON form.
    pub fn from_json(text: &str) -> Result<Self, CalibrationError> {
        let c: Self = serde_json::from_str(text).map_err(|e| CalibrationError::Invalid(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("coefficients serialize")
    }
}

pub fn two_point_fit(
    channel: impl Into<String>,
    lo: Anchor,
    hi: Anchor,
) -> Result<CalibrationCoefficients, CalibrationError> {
    if hi.raw == lo.raw {
        return Err(CalibrationError::DegenerateAnchors(lo.raw));
    }
    let gain = (hi.reference - lo.reference) / (hi.raw - lo.raw);
    let offset = lo.reference - gain * lo.raw;
    let c = CalibrationCoefficients { channel: channel.into(), gain, offset, refs: [lo, hi] };
    c.validate()?;
    Ok(c)
}

pub fn apply_calibration(c: &CalibrationCoefficients, raw: f64) -> f64 {
    c.gain * raw + c.offset
}

pub const DS18B20_MIN_C: f64 = -55.0;
pub const DS18B20_MAX_C: f64 = 125.0;

/// Resolution step of the temperature sensor at `bits` (0.5 °C at 9 bits, 0.0625 °C at 12).
pub fn temperature_step(bits: u8) -> Result<f64, CalibrationError> {
    if !(9..=12).contains(&bits) {
        return Err(CalibrationError::BadResolution(bits));
    }
    Ok(0.5 / f64::from(1u32 << (bits - 9)))
}

/// Round to the nearest resolution step, ties to the even step.
pub fn quantize_temperature(true_c: f64, bits: u8) -> Result<f64, CalibrationError> {
    let step = temperature_step(bits)?;
    if !(DS18B20_MIN_C..=DS18B20_MAX_C).contains(&true_c) {
        return Err(CalibrationError::OutOfRange { what: "temperature", value: true_c, lo: DS18B20_MIN_C, hi: DS18B20_MAX_C });
    }
    Ok((true_c / step).round_ties_even() * step)
}

pub const ACCEL_MG_PER_LSB: f64 = 4.0;
pub const ACCEL_MIN_COUNTS: i16 = -4096;
pub const ACCEL_MAX_COUNTS: i16 = 4095;

/// 13-bit signed accelerometer counts at 4 mg/LSB, saturating at the rails.
pub fn quantize_accel(true_g: f64) -> i16 {
    let counts = (true_g * 1000.0 / ACCEL_MG_PER_LSB).round();
    counts.clamp(ACCEL_MIN_COUNTS as f64, ACCEL_MAX_COUNTS as f64) as i16
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VitalKind {
    HeartRate,
    SpO2,
    Temperature,
}

impl VitalKind {
    pub const ALL: [VitalKind; 3] = [VitalKind::HeartRate, VitalKind::SpO2, VitalKind::Temperature];

    pub fn valid_range(self) -> (f64, f64) {
        match self {
            VitalKind::HeartRate => (0.0, 300.0),
            VitalKind::SpO2 => (0.0, 100.0),
            VitalKind::Temperature => (DS18B20_MIN_C, DS18B20_MAX_C),
        }
    }

    pub fn channel(self) -> &'static str {
        match self {
            VitalKind::HeartRate => "hr",
            VitalKind::SpO2 => "spo2",
            VitalKind::Temperature => "temp",
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            VitalKind::HeartRate => "bpm",
            VitalKind::SpO2 => "%",
            VitalKind::Temperature => "°C",
        }
    }
}

impl std::str::FromStr for VitalKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "hr" | "heartrate" | "heart_rate" => Ok(VitalKind::HeartRate),
            "spo2" => Ok(VitalKind::SpO2),
            "temp" | "temperature" => Ok(VitalKind::Temperature),
            other => Err(format!("unknown vital kind `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quality {
    Ok,
    Suspect,
}

/// A reading on a raw channel, in counts or device units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawSample {
    pub channel: String,
    pub t: u64,
    pub raw: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibratedVital {
    pub kind: VitalKind,
    pub value: f64,
    pub t: u64,
    pub quality: Quality,
}

impl CalibratedVital {
    /// Values outside the physical span are clamped and marked suspect.
    pub fn new(kind: VitalKind, value: f64, t: u64) -> Self {
        let (lo, hi) = kind.valid_range();
        if value.is_finite() && (lo..=hi).contains(&value) {
            Self { kind, value, t, quality: Quality::Ok }
        } else {
            let value = if value.is_nan() { lo } else { value.clamp(lo, hi) };
            Self { kind, value, t, quality: Quality::Suspect }
        }
    }

    pub fn from_raw(kind: VitalKind, sample: &RawSample, c: &CalibrationCoefficients) -> Self {
        Self::new(kind, apply_calibration(c, sample.raw), sample.t)
    }
}
