//! Seeded synthetic vital-sign sources.
//!
//! A generator evaluates a physiological profile, adds zero-mean Gaussian
//! noise and maps the result back through the sensor's ground-truth transfer
//! into raw units, so that calibrating the raw stream with the same
//! coefficients reproduces profile + noise.

use std::f64::consts::TAU;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{two_point_fit, Anchor, CalibrationCoefficients, CalibrationError, RawSample, VitalKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum VitalProfile {
    Resting,
    /// Slow sinusoid across the span observed in the bedside comparison.
    PaperRange,
    /// Temperature spread across the ward cohort.
    Cohort,
    Tachycardia,
    Bradycardia,
    /// Raised heart rate that accompanies a seizure.
    Elevated,
    Hypoxic,
    Fever,
    Hypothermia,
    Constant(f64),
}

impl VitalProfile {
    pub fn parse(kind: VitalKind, name: &str) -> Result<Self, CalibrationError> {
        use VitalKind::*;
        use VitalProfile as P;
        let unknown = || CalibrationError::UnknownProfile { kind, profile: name.to_string() };
        if let Ok(v) = name.trim().parse::<f64>() {
            return if v.is_finite() { Ok(P::Constant(v)) } else { Err(unknown()) };
        }
        let p = match name.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "resting" => P::Resting,
            "paper-range" => P::PaperRange,
            "cohort" => P::Cohort,
            "tachycardia" => P::Tachycardia,
            "bradycardia" => P::Bradycardia,
            "elevated" => P::Elevated,
            "hypoxic" => P::Hypoxic,
            "fever" => P::Fever,
            "hypothermia" => P::Hypothermia,
            _ => return Err(unknown()),
        };
        let ok = matches!(
            (kind, p),
            (_, P::Resting)
                | (HeartRate | SpO2, P::PaperRange)
                | (Temperature, P::Cohort | P::Fever | P::Hypothermia)
                | (HeartRate, P::Tachycardia | P::Bradycardia | P::Elevated)
                | (SpO2, P::Hypoxic)
        );
        if ok { Ok(p) } else { Err(unknown()) }
    }

    /// Noise-free value of the profile at `t_ms`.
    pub fn value(self, kind: VitalKind, t_ms: u64) -> f64 {
        let phase = |period_ms: f64| (TAU * t_ms as f64 / period_ms).sin();
        match (self, kind) {
            (VitalProfile::Constant(v), _) => v,
            (VitalProfile::Resting, VitalKind::HeartRate) => 72.0,
            (VitalProfile::Resting, VitalKind::SpO2) => 98.0,
            (VitalProfile::Resting, VitalKind::Temperature) => 37.0,
            (VitalProfile::PaperRange, VitalKind::HeartRate) => 80.0 + 20.0 * phase(60_000.0),
            (VitalProfile::PaperRange, _) => 96.5 + 3.5 * phase(90_000.0),
            (VitalProfile::Cohort, _) => 36.7 + 1.4 * phase(120_000.0),
            (VitalProfile::Tachycardia, _) => 150.0,
            (VitalProfile::Bradycardia, _) => 35.0,
            (VitalProfile::Elevated, _) => 115.0,
            (VitalProfile::Hypoxic, _) => 90.0,
            (VitalProfile::Fever, _) => 38.6,
            (VitalProfile::Hypothermia, _) => 35.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub sigma: f64,
    pub seed: u64,
}

impl NoiseModel {
    pub fn noiseless() -> Self {
        Self { sigma: 0.0, seed: 0 }
    }
}

pub struct VitalGenerator {
    kind: VitalKind,
    profile: VitalProfile,
    truth: CalibrationCoefficients,
    normal: Option<Normal<f64>>,
    rng: ChaCha8Rng,
}

impl VitalGenerator {
    pub fn new(kind: VitalKind, profile: VitalProfile, noise: NoiseModel, truth: CalibrationCoefficients) -> Self {
        let normal = (noise.sigma > 0.0).then(|| Normal::new(0.0, noise.sigma).expect("finite sigma"));
        Self { kind, profile, truth, normal, rng: ChaCha8Rng::seed_from_u64(noise.seed) }
    }

    pub fn kind(&self) -> VitalKind {
        self.kind
    }

    pub fn set_profile(&mut self, profile: VitalProfile) {
        self.profile = profile;
    }

    pub fn true_value(&self, t_ms: u64) -> f64 {
        self.profile.value(self.kind, t_ms)
    }

    pub fn sample(&mut self, t_ms: u64) -> RawSample {
        let noise = self.normal.map_or(0.0, |n| n.sample(&mut self.rng));
        RawSample {
            channel: self.truth.channel.clone(),
            t: t_ms,
            raw: self.truth.invert(self.true_value(t_ms) + noise),
        }
    }
}

/// A raw trace of `duration_ms`, one sample every `period_ms` starting at 0.
pub fn generate_vital_trace(
    kind: VitalKind,
    profile: &str,
    noise: NoiseModel,
    duration_ms: u64,
    period_ms: u64,
    truth: &CalibrationCoefficients,
) -> Result<Vec<RawSample>, CalibrationError> {
    if duration_ms == 0 || period_ms == 0 {
        return Err(CalibrationError::Invalid("duration and period must be positive".into()));
    }
    let profile = VitalProfile::parse(kind, profile)?;
    let mut generator = VitalGenerator::new(kind, profile, noise, truth.clone());
    Ok((0..duration_ms).step_by(period_ms as usize).map(|t| generator.sample(t)).collect())
}

/// One bundled sensor: its ground-truth transfer, calibration anchors and noise level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorFixture {
    pub kind: VitalKind,
    pub channel: String,
    /// Raw-to-engineering transfer of the simulated device.
    pub truth_gain: f64,
    pub truth_offset: f64,
    /// Bench anchors: reference value and the raw reading the device gave there.
    pub anchors: [Anchor; 2],
    /// Measurement noise standard deviation, engineering units.
    pub sigma: f64,
    pub profile: String,
    pub duration_ms: u64,
    pub period_ms: u64,
    pub seed: u64,
}

impl SensorFixture {
    pub fn truth(&self) -> CalibrationCoefficients {
        CalibrationCoefficients {
            channel: self.channel.clone(),
            gain: self.truth_gain,
            offset: self.truth_offset,
            refs: self.anchors,
        }
    }

    pub fn fitted(&self) -> Result<CalibrationCoefficients, CalibrationError> {
        two_point_fit(self.channel.clone(), self.anchors[0], self.anchors[1])
    }

    pub fn noise(&self) -> NoiseModel {
        NoiseModel { sigma: self.sigma, seed: self.seed }
    }

    /// (module, reference) pairs: calibrated device output against the exact profile.
    pub fn reference_pairs(&self) -> Result<Vec<(f64, f64)>, CalibrationError> {
        let fitted = self.fitted()?;
        let profile = VitalProfile::parse(self.kind, &self.profile)?;
        let raw = generate_vital_trace(self.kind, &self.profile, self.noise(), self.duration_ms, self.period_ms, &self.truth())?;
        raw.iter()
            .map(|s| {
                let mut module = fitted.apply(s.raw);
                if self.kind == VitalKind::Temperature {
                    module = super::quantize_temperature(module.clamp(super::DS18B20_MIN_C, super::DS18B20_MAX_C), 12)?;
                }
                Ok((module, profile.value(self.kind, s.t)))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorFixtureSet {
    pub note: String,
    pub sensors: Vec<SensorFixture>,
}

impl SensorFixtureSet {
    pub fn from_json(text: &str) -> Result<Self, CalibrationError> {
        serde_json::from_str(text).map_err(|e| CalibrationError::Invalid(e.to_string()))
    }

    pub fn get(&self, kind: VitalKind) -> Option<&SensorFixture> {
        self.sensors.iter().find(|s| s.kind == kind)
    }

    /// The fixture set shipped in `fixtures/sensors.json`.
    pub fn bundled() -> Self {
        Self::from_json(include_str!("../../fixtures/sensors.json")).expect("bundled sensor fixture parses")
    }
}

/// `t_ms,channel,raw` CSV.
pub fn write_raw_csv(samples: &[RawSample]) -> String {
    let mut out = String::from("t_ms,channel,raw\n");
    for s in samples {
        out.push_str(&format!("{},{},{}\n", s.t, s.channel, s.raw));
    }
    out
}

pub fn read_raw_csv(text: &str) -> Result<Vec<RawSample>, CalibrationError> {
    #[derive(Deserialize)]
    struct Row {
        t_ms: u64,
        channel: String,
        raw: f64,
    }
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    rdr.deserialize::<Row>()
        .map(|r| {
            r.map(|r| RawSample { channel: r.channel, t: r.t_ms, raw: r.raw })
                .map_err(|e| CalibrationError::Invalid(e.to_string()))
        })
        .collect()
}
