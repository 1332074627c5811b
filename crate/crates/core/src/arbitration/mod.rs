//! Priority-ladder arbitration between the four input modalities.
//!
//! Every control tick the ladder looks at one [`ControlInputs`] snapshot and
//! picks exactly one [`ModeId`]. Hazards (fall, health alert, obstacle) win
//! over everything and set a latch that only [`clear_safe_halt`] can lower.
//! Below the hazard rung the order is Joystick > Voice > Gesture > EOG > Stop.

mod control_loop;

pub use control_loop::{
    run_loop, ControlLoop, InputSource, LoopConfig, SourceTick, TickOutput, TraceSource,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Control tick period in milliseconds (50 Hz).
pub const TICK_MS: u64 = 20;
/// Joystick deadzone in centered ADC counts; deflection must strictly exceed it.
pub const JOYSTICK_DEADZONE: i32 = 50;
/// Continuous above-deadzone dwell required before the joystick rung is eligible.
pub const JOYSTICK_DEBOUNCE_MS: u64 = 250;
/// Gaze eccentricity that must be strictly exceeded for the EOG rung.
pub const EOG_ANGLE_THRESHOLD_DEG: f64 = 12.0;
/// Speed fraction used by the discrete-command modalities (voice, gesture, EOG).
pub const ASSISTED_SPEED: f64 = 0.5;
/// Full-scale joystick deflection in centered counts.
pub const JOYSTICK_FULL_SCALE: f64 = 2047.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub enum ModeId {
    Joystick,
    Voice,
    Gesture,
    #[serde(rename = "EOG", alias = "Eog")]
    Eog,
    #[default]
    Stop,
}

impl ModeId {
    pub fn as_str(self) -> &'static str {
        match self {
            ModeId::Joystick => "Joystick",
            ModeId::Voice => "Voice",
            ModeId::Gesture => "Gesture",
            ModeId::Eog => "EOG",
            ModeId::Stop => "Stop",
        }
    }
}

impl std::fmt::Display for ModeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub enum MotionDirection {
    Forward,
    Backward,
    Left,
    Right,
    #[default]
    Stop,
}

impl MotionDirection {
    pub const ALL: [MotionDirection; 5] = [
        MotionDirection::Right,
        MotionDirection::Left,
        MotionDirection::Forward,
        MotionDirection::Backward,
        MotionDirection::Stop,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MotionDirection::Forward => "Forward",
            MotionDirection::Backward => "Backward",
            MotionDirection::Left => "Left",
            MotionDirection::Right => "Right",
            MotionDirection::Stop => "Stop",
        }
    }
}

impl std::fmt::Display for MotionDirection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for MotionDirection {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "forward" => Ok(MotionDirection::Forward),
            "backward" | "reverse" => Ok(MotionDirection::Backward),
            "left" => Ok(MotionDirection::Left),
            "right" => Ok(MotionDirection::Right),
            "stop" => Ok(MotionDirection::Stop),
            other => Err(format!("unknown direction `{other}`")),
        }
    }
}

/// A motor command: direction plus PWM-duty-like speed fraction.
///
/// Constructed only through [`MotionCommand::new`] / [`MotionCommand::stop`],
/// which keep `direction == Stop` if and only if `speed == 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MotionCommand {
    direction: MotionDirection,
    speed: f64,
    source: ModeId,
}

impl MotionCommand {
    pub fn new(direction: MotionDirection, speed: f64, source: ModeId) -> Self {
        let speed = if speed.is_finite() { speed.clamp(0.0, 1.0) } else { 0.0 };
        if direction == MotionDirection::Stop || speed == 0.0 {
            return Self::stop(source);
        }
        Self { direction, speed, source }
    }

    pub fn stop(source: ModeId) -> Self {
        Self { direction: MotionDirection::Stop, speed: 0.0, source }
    }

    pub fn direction(&self) -> MotionDirection {
        self.direction
    }

    pub fn speed(&self) -> f64 {
        self.speed
    }

    pub fn source(&self) -> ModeId {
        self.source
    }

    pub fn is_stop(&self) -> bool {
        self.direction == MotionDirection::Stop
    }
}

/// One tick's worth of sensor readings and flags.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ControlInputs {
    /// Centered joystick deflection, −2048..=2047.
    pub joy_speed: i32,
    /// Direction of the dominant joystick axis, if deflected.
    pub joy_direction: Option<MotionDirection>,
    pub joy_pressed: bool,
    pub voice_ready: bool,
    pub voice_command: Option<MotionDirection>,
    pub gesture_ok: bool,
    pub gesture_command: Option<MotionDirection>,
    /// Gaze eccentricity in degrees, never negative.
    pub eog_angle: f64,
    pub eog_command: Option<MotionDirection>,
    pub fall_flag: bool,
    pub health_alert: bool,
    pub obstacle_flag: bool,
    pub timestamp: u64,
}

impl ControlInputs {
    pub fn idle(timestamp: u64) -> Self {
        Self { timestamp, ..Self::default() }
    }

    pub fn any_hazard(&self) -> bool {
        self.fall_flag || self.health_alert || self.obstacle_flag
    }

    pub fn hazards(&self) -> Hazards {
        Hazards { fall: self.fall_flag, health: self.health_alert, obstacle: self.obstacle_flag }
    }
}

/// Currently asserted hazard flags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Hazards {
    pub fall: bool,
    pub health: bool,
    pub obstacle: bool,
}

impl Hazards {
    pub fn any(&self) -> bool {
        self.fall || self.health || self.obstacle
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct JoystickDebounce {
    pub first_seen_ms: Option<u64>,
}

/// Which rungs of the ladder are allowed to win.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ModePolicy {
    #[default]
    AutoLadder,
    /// Only the given modality is eligible. Hazards still override.
    ManualExclusive(ModeId),
}

/// The four mode buttons plus the automatic ladder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeButton {
    Joystick,
    Voice,
    Gesture,
    Eog,
    #[serde(alias = "autoladder", alias = "auto_ladder")]
    Auto,
}

impl std::str::FromStr for ModeButton {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "joystick" => Ok(ModeButton::Joystick),
            "voice" => Ok(ModeButton::Voice),
            "gesture" => Ok(ModeButton::Gesture),
            "eog" | "eye" => Ok(ModeButton::Eog),
            "auto" | "autoladder" | "auto_ladder" => Ok(ModeButton::Auto),
            other => Err(format!("unknown mode button `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ArbitrationState {
    pub safe_halt: bool,
    pub joystick_debounce: JoystickDebounce,
    pub selected_policy: ModePolicy,
    pub last_tick_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum ArbitrationError {
    #[error("safe-halt clear refused: hazard still active ({0:?})")]
    HazardStillActive(Hazards),
}

/// Advance the joystick dwell timer by one observation.
///
/// Returns whether the deflection has been continuously above the deadzone
/// for at least [`JOYSTICK_DEBOUNCE_MS`].
pub fn debounce_ok(state: ArbitrationState, above_threshold: bool, now: u64) -> (bool, ArbitrationState) {
    let mut next = state;
    if !above_threshold {
        next.joystick_debounce.first_seen_ms = None;
        return (false, next);
    }
    let first = *next.joystick_debounce.first_seen_ms.get_or_insert(now);
    (now.saturating_sub(first) >= JOYSTICK_DEBOUNCE_MS, next)
}

/// One tick of the ladder.
///
/// A timestamp earlier than `state.last_tick_ms` is treated as `last_tick_ms`
/// so that time never runs backwards inside the state.
pub fn arbitrate(inputs: &ControlInputs, state: ArbitrationState) -> (ModeId, MotionCommand, ArbitrationState) {
    let now = inputs.timestamp.max(state.last_tick_ms);
    let above = inputs.joy_speed.unsigned_abs() > JOYSTICK_DEADZONE as u32;
    let (debounced, mut next) = debounce_ok(state, above, now);
    next.last_tick_ms = now;

    if inputs.any_hazard() {
        next.safe_halt = true;
        return (ModeId::Stop, MotionCommand::stop(ModeId::Stop), next);
    }
    if next.safe_halt {
        return (ModeId::Stop, MotionCommand::stop(ModeId::Stop), next);
    }
    // stationary request: immediate stop, no latch
    if inputs.joy_pressed {
        return (ModeId::Stop, MotionCommand::stop(ModeId::Stop), next);
    }

    let eligible = |mode: ModeId| -> bool {
        match mode {
            ModeId::Joystick => above && debounced,
            ModeId::Voice => inputs.voice_ready,
            ModeId::Gesture => inputs.gesture_ok,
            ModeId::Eog => inputs.eog_angle > EOG_ANGLE_THRESHOLD_DEG,
            ModeId::Stop => true,
        }
    };

    let winner = match next.selected_policy {
        ModePolicy::AutoLadder => [ModeId::Joystick, ModeId::Voice, ModeId::Gesture, ModeId::Eog]
            .into_iter()
            .find(|m| eligible(*m))
            .unwrap_or(ModeId::Stop),
        ModePolicy::ManualExclusive(m) if eligible(m) => m,
        ModePolicy::ManualExclusive(_) => ModeId::Stop,
    };

    (winner, command_for(winner, inputs), next)
}

fn command_for(mode: ModeId, inputs: &ControlInputs) -> MotionCommand {
    let (direction, speed) = match mode {
        ModeId::Stop => return MotionCommand::stop(ModeId::Stop),
        ModeId::Joystick => (
            inputs.joy_direction,
            (inputs.joy_speed.unsigned_abs() as f64 / JOYSTICK_FULL_SCALE).min(1.0),
        ),
        ModeId::Voice => (inputs.voice_command, ASSISTED_SPEED),
        ModeId::Gesture => (inputs.gesture_command, ASSISTED_SPEED),
        ModeId::Eog => (inputs.eog_command, ASSISTED_SPEED),
    };
    match direction {
        Some(d) => MotionCommand::new(d, speed, mode),
        None => MotionCommand::stop(mode),
    }
}

/// Operator reset of the safe-halt latch. Refused while any hazard persists.
pub fn clear_safe_halt(state: ArbitrationState, current: Hazards) -> Result<ArbitrationState, ArbitrationError> {
    if !state.safe_halt {
        return Ok(state);
    }
    if current.any() {
        return Err(ArbitrationError::HazardStillActive(current));
    }
    Ok(ArbitrationState { safe_halt: false, ..state })
}

/// Apply a mode-button press. Takes effect on the next tick; never touches the latch.
pub fn select_mode(state: ArbitrationState, button: ModeButton) -> ArbitrationState {
    let selected_policy = match button {
        ModeButton::Joystick => ModePolicy::ManualExclusive(ModeId::Joystick),
        ModeButton::Voice => ModePolicy::ManualExclusive(ModeId::Voice),
        ModeButton::Gesture => ModePolicy::ManualExclusive(ModeId::Gesture),
        ModeButton::Eog => ModePolicy::ManualExclusive(ModeId::Eog),
        ModeButton::Auto => ModePolicy::AutoLadder,
    };
    ArbitrationState { selected_policy, ..state }
}
