//! Raw modality signals to [`ControlInputs`](crate::arbitration::ControlInputs) fields.

mod eog;
mod traces;

pub use eog::{decode_eog, BlinkEvent, EogChannel, EogConfig, EogDecoder, EogReading, EogSample, EogTrace, EogUpdate};
pub use traces::{read_accel_csv, read_eog_csv, read_voice_corpus, write_accel_csv, TraceError, VoiceCase};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arbitration::{MotionDirection, JOYSTICK_FULL_SCALE};

pub const ADC_MAX_COUNTS: u16 = 4095;
pub const ADC_CENTER: i32 = 2048;
pub const ADC_FULL_SCALE_V: f64 = 3.3;
/// Hand tilt that must be strictly exceeded to count as a gesture.
pub const GESTURE_TILT_DEG: f64 = 20.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DecodeError {
    #[error("voltage {0} V outside 0..=3.3 V")]
    OutOfRange(f64),
    #[error("ADC count {0} outside 0..=4095")]
    CountOutOfRange(u32),
    #[error("need at least {needed_ms} ms of horizontal EOG history, have {have_ms} ms")]
    InsufficientHistory { needed_ms: u64, have_ms: u64 },
}

/// 12-bit ADC transfer: 0..3.3 V onto 0..4095, rounding half away from zero.
pub fn adc_map(voltage: f64) -> Result<u16, DecodeError> {
    if !(0.0..=ADC_FULL_SCALE_V).contains(&voltage) {
        return Err(DecodeError::OutOfRange(voltage));
    }
    Ok((voltage / ADC_FULL_SCALE_V * ADC_MAX_COUNTS as f64).round() as u16)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct JoystickRaw {
    pub x_counts: u16,
    pub y_counts: u16,
    pub pressed: bool,
}

impl JoystickRaw {
    pub fn new(x_counts: u16, y_counts: u16, pressed: bool) -> Result<Self, DecodeError> {
        for c in [x_counts, y_counts] {
            if c > ADC_MAX_COUNTS {
                return Err(DecodeError::CountOutOfRange(c as u32));
            }
        }
        Ok(Self { x_counts, y_counts, pressed })
    }

    pub fn centered() -> Self {
        Self { x_counts: ADC_CENTER as u16, y_counts: ADC_CENTER as u16, pressed: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JoystickReading {
    pub joy_speed: i32,
    pub direction: MotionDirection,
    pub speed: f64,
}

/// Centre the two axes and pick the dominant one; ties go to the y axis.
pub fn decode_joystick(raw: JoystickRaw) -> JoystickReading {
    if raw.pressed {
        return JoystickReading { joy_speed: 0, direction: MotionDirection::Stop, speed: 0.0 };
    }
    let cx = raw.x_counts.min(ADC_MAX_COUNTS) as i32 - ADC_CENTER;
    let cy = raw.y_counts.min(ADC_MAX_COUNTS) as i32 - ADC_CENTER;
    let joy_speed = cx.abs().max(cy.abs());
    let direction = if joy_speed == 0 {
        MotionDirection::Stop
    } else if cy.abs() >= cx.abs() {
        if cy > 0 { MotionDirection::Forward } else { MotionDirection::Backward }
    } else if cx > 0 {
        MotionDirection::Right
    } else {
        MotionDirection::Left
    };
    let speed = if joy_speed == 0 { 0.0 } else { (joy_speed as f64 / JOYSTICK_FULL_SCALE).min(1.0) };
    JoystickReading { joy_speed, direction, speed }
}

/// Closed-vocabulary match on a transcribed utterance.
pub fn parse_voice(text: &str) -> Option<MotionDirection> {
    match text.trim().to_lowercase().as_str() {
        "forward" => Some(MotionDirection::Forward),
        "backward" => Some(MotionDirection::Backward),
        "left" => Some(MotionDirection::Left),
        "right" => Some(MotionDirection::Right),
        "stop" => Some(MotionDirection::Stop),
        _ => None,
    }
}

/// One accelerometer reading in g.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccelSample {
    pub ax: f64,
    pub ay: f64,
    pub az: f64,
    pub t: u64,
}

impl AccelSample {
    pub fn new(ax: f64, ay: f64, az: f64, t: u64) -> Self {
        Self { ax, ay, az, t }
    }

    pub fn at_rest(t: u64) -> Self {
        Self { ax: 0.0, ay: 0.0, az: 1.0, t }
    }

    pub fn magnitude(&self) -> f64 {
        (self.ax * self.ax + self.ay * self.ay + self.az * self.az).sqrt()
    }

    /// Forward/backward hand tilt in degrees.
    pub fn pitch_deg(&self) -> f64 {
        (-self.ax).atan2(self.az).to_degrees()
    }

    /// Sideways hand tilt in degrees.
    pub fn roll_deg(&self) -> f64 {
        self.ay.atan2(self.az).to_degrees()
    }
}

/// Glove tilt to a direction. Pitch wins when both axes exceed the threshold.
pub fn decode_gesture(sample: &AccelSample) -> Option<MotionDirection> {
    let pitch = sample.pitch_deg();
    let roll = sample.roll_deg();
    if pitch > GESTURE_TILT_DEG {
        Some(MotionDirection::Forward)
    } else if pitch < -GESTURE_TILT_DEG {
        Some(MotionDirection::Backward)
    } else if roll > GESTURE_TILT_DEG {
        Some(MotionDirection::Right)
    } else if roll < -GESTURE_TILT_DEG {
        Some(MotionDirection::Left)
    } else {
        None
    }
}

/// Accelerometer sample (in g) that tilts the glove `deg` degrees toward `direction`.
pub fn gesture_tilt(direction: MotionDirection, deg: f64, t: u64) -> AccelSample {
    let (s, c) = deg.to_radians().sin_cos();
    match direction {
        MotionDirection::Forward => AccelSample::new(-s, 0.0, c, t),
        MotionDirection::Backward => AccelSample::new(s, 0.0, c, t),
        MotionDirection::Right => AccelSample::new(0.0, s, c, t),
        MotionDirection::Left => AccelSample::new(0.0, -s, c, t),
        MotionDirection::Stop => AccelSample::at_rest(t),
    }
}
