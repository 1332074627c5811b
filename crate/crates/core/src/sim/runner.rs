//! Scenario execution: decoders → arbitration → kinematics → detectors →
//! telemetry → monitor service, stepped in simulated time.
//!
//! Everything written to the output directory is derived from the scenario
//! and its seed only, so equal inputs give byte-identical artifacts.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use super::kinematics::{step_kinematics, KinematicState};
use super::scenario::{EventKind, HazardKind, Scenario, ScenarioError};
use crate::arbitration::{
    clear_safe_halt, select_mode, ControlInputs, ControlLoop, Hazards, InputSource, LoopConfig, ModeId, MotionDirection, SourceTick, TICK_MS,
};
use crate::calibration::{quantize_temperature, CalibratedVital, CalibrationCoefficients, NoiseModel, SensorFixtureSet, VitalGenerator, VitalKind, VitalProfile};
use crate::decoders::{decode_gesture, decode_joystick, gesture_tilt, parse_voice, AccelSample, EogChannel, EogConfig, EogDecoder, EogSample, EogTrace, JoystickRaw};
use crate::detectors::{detect_heart_attack, AlertKind, ConvulsionMonitor, FallMonitor};
use crate::monitor::{ManualClock, MonitorService, ServiceConfig, ServiceError, StreamEvent};
use crate::telemetry::{parse_key_hex, FeedRecord, FrameEncoder, HttpTransport, Pose, Transport, TransportError, UploadMetrics, UploadQueue, Uploader};

/// Vitals are sampled, and a feed record produced, once per second.
pub const VITALS_PERIOD_MS: u64 = 1_000;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("writing artifacts: {0}")]
    Io(#[from] std::io::Error),
    #[error("monitor service: {0}")]
    Service(#[from] ServiceError),
    #[error("at {t_ms} ms ({event}): {msg}")]
    Event { t_ms: u64, event: String, msg: String },
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Pace ticks against the wall clock.
    pub realtime: bool,
    /// Send frames to a running service instead of the in-process one.
    pub upload_url: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HazardLatency {
    pub kind: HazardKind,
    pub injected_t_ms: u64,
    /// First tick whose arbitration input carried the hazard.
    pub flagged_t_ms: Option<u64>,
    /// Simulated time the service raised the matching alert.
    pub alert_t_ms: Option<u64>,
    pub alert_latency_ms: Option<u64>,
    pub outbox_file: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClearAttempt {
    pub t_ms: u64,
    pub ok: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMetrics {
    pub scenario: String,
    pub seed: u64,
    pub duration_ms: u64,
    pub ticks: u64,
    pub mode_ticks: BTreeMap<ModeId, u64>,
    pub safe_halt_ticks: u64,
    /// Non-Stop ticks between a hazard reaching arbitration and a successful clear.
    pub latch_violations: u64,
    pub distance_m: f64,
    pub final_pose: KinematicState,
    pub alerts_by_kind: BTreeMap<AlertKind, u64>,
    pub hazards: Vec<HazardLatency>,
    pub clear_attempts: Vec<ClearAttempt>,
    pub feed_records: u64,
    pub upload: UploadMetrics,
    pub rejected_frames: BTreeMap<String, u64>,
}

/// Per-tick view kept in memory for callers; the same data is in `control.jsonl`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TickRow {
    pub t_ms: u64,
    pub mode: ModeId,
    pub direction: MotionDirection,
    pub speed: f64,
    pub safe_halt: bool,
    pub hazard_input: bool,
    pub pose: KinematicState,
}

#[derive(Debug)]
pub struct RunSummary {
    pub metrics: RunMetrics,
    pub ticks: Vec<TickRow>,
    pub out_dir: PathBuf,
    /// Longest wall time spent delivering one frame (not part of the artifacts).
    pub max_delivery_wall_ms: f64,
}

struct Artifacts {
    files: BTreeMap<&'static str, BufWriter<File>>,
}

impl Artifacts {
    const STREAMS: [&'static str; 5] = ["control.jsonl", "pose.jsonl", "vitals.jsonl", "events.jsonl", "stream.jsonl"];

    fn create(dir: &Path) -> std::io::Result<Self> {
        std::fs::create_dir_all(dir)?;
        let mut files = BTreeMap::new();
        for name in Self::STREAMS {
            files.insert(name, BufWriter::new(File::create(dir.join(name))?));
        }
        Ok(Self { files })
    }

    fn line(&mut self, file: &'static str, text: &str) -> std::io::Result<()> {
        let f = self.files.get_mut(file).expect("known artifact");
        f.write_all(text.as_bytes())?;
        f.write_all(b"\n")
    }

    fn event(&mut self, t_ms: u64, event: &str, detail: serde_json::Value) -> std::io::Result<()> {
        self.line("events.jsonl", &json!({ "t_ms": t_ms, "event": event, "detail": detail }).to_string())
    }

    fn finish(self) -> std::io::Result<()> {
        for (_, mut f) in self.files {
            f.flush()?;
        }
        Ok(())
    }
}

/// Snapshot handed to the control loop for the current tick.
struct Prepared(Option<ControlInputs>);

impl InputSource for Prepared {
    fn poll(&mut self, _t_ms: u64) -> SourceTick {
        match self.0.take() {
            Some(s) => SourceTick::Snapshot(s),
            None => SourceTick::Missing,
        }
    }
}

struct Vital {
    generator: VitalGenerator,
    fitted: CalibrationCoefficients,
    base: VitalProfile,
}

/// Sensors, body, and scripted operator inputs.
struct World {
    cfg: super::scenario::SimConfig,
    rng: ChaCha8Rng,
    accel_noise: Option<Normal<f64>>,

    joystick: Option<(JoystickRaw, u64)>,
    voice: Option<MotionDirection>,
    voice_once: bool,
    gesture: Option<(MotionDirection, f64, u64)>,
    gaze: Option<(MotionDirection, f64, u64)>,
    blinks: Vec<(u64, u64)>,
    eog_trace: EogTrace,
    eog: EogDecoder,
    obstacle_until: Option<u64>,
    missing_until: Option<u64>,
    outage_until: Option<u64>,

    /// Scripted body-accelerometer samples by time, then a resting posture.
    body_script: BTreeMap<u64, [f64; 3]>,
    posture: [f64; 3],
    shaking: Option<(u64, u64)>,
    fall_monitor: FallMonitor,
    convulsion_monitor: ConvulsionMonitor,

    vitals: BTreeMap<VitalKind, Vital>,
    /// Restore points for temporary physiology overrides.
    restore: Vec<(u64, VitalKind)>,
    current: BTreeMap<VitalKind, CalibratedVital>,

    /// Detector pulses held until the control loop has seen them.
    fall_pending_input: bool,
    convulsion_pending_input: bool,
    /// Detector pulses held until the next feed record.
    fall_pending_record: bool,
    convulsion_pending_record: bool,
}

fn profile(kind: VitalKind, name: &str) -> Result<VitalProfile, ScenarioError> {
    VitalProfile::parse(kind, name).map_err(|e| ScenarioError::Config(e.to_string()))
}

impl World {
    fn new(s: &Scenario) -> Result<Self, ScenarioError> {
        let fixtures = SensorFixtureSet::bundled();
        let mut vitals = BTreeMap::new();
        for (i, kind) in VitalKind::ALL.into_iter().enumerate() {
            let fx = fixtures.get(kind).expect("bundled fixture covers every vital");
            let name = match kind {
                VitalKind::HeartRate => &s.config.vitals.hr,
                VitalKind::SpO2 => &s.config.vitals.spo2,
                VitalKind::Temperature => &s.config.vitals.temp,
            };
            let base = profile(kind, name)?;
            let noise = NoiseModel { sigma: fx.sigma, seed: s.seed.wrapping_mul(0x9E37_79B9).wrapping_add(i as u64 + 1) };
            let fitted = fx.fitted().map_err(|e| ScenarioError::Config(e.to_string()))?;
            vitals.insert(kind, Vital { generator: VitalGenerator::new(kind, base, noise, fx.truth()), fitted, base });
        }
        let accel_noise = (s.config.accel_noise_g > 0.0).then(|| Normal::new(0.0, s.config.accel_noise_g).expect("finite sigma"));
        Ok(Self {
            cfg: s.config.clone(),
            rng: ChaCha8Rng::seed_from_u64(s.seed),
            accel_noise,
            joystick: None,
            voice: None,
            voice_once: false,
            gesture: None,
            gaze: None,
            blinks: Vec::new(),
            eog_trace: EogTrace::default(),
            eog: EogDecoder::new(EogConfig::default()),
            obstacle_until: None,
            missing_until: None,
            outage_until: None,
            body_script: BTreeMap::new(),
            posture: [0.0, 0.0, 1.0],
            shaking: None,
            fall_monitor: FallMonitor::new(s.config.detectors.fall),
            convulsion_monitor: ConvulsionMonitor::new(s.config.detectors.convulsion, s.config.detectors.fall),
            vitals,
            restore: Vec::new(),
            current: BTreeMap::new(),
            fall_pending_input: false,
            convulsion_pending_input: false,
            fall_pending_record: false,
            convulsion_pending_record: false,
        })
    }

    fn set_profile(&mut self, kind: VitalKind, p: VitalProfile) {
        self.vitals.get_mut(&kind).expect("all vitals present").generator.set_profile(p);
    }

    fn apply(&mut self, t: u64, kind: &EventKind) -> Result<serde_json::Value, ScenarioError> {
        Ok(match kind {
            EventKind::Joystick { x, y, pressed, duration_ms } => {
                let axis = |c: i32| (2048 + c).clamp(0, 4095) as u16;
                let raw = JoystickRaw::new(axis(*x), axis(*y), *pressed).expect("clamped into ADC range");
                self.joystick = Some((raw, t + duration_ms));
                json!({ "x": x, "y": y, "pressed": pressed })
            }
            EventKind::Voice { text } => match parse_voice(text) {
                Some(d) => {
                    self.voice = Some(d);
                    self.voice_once = d == MotionDirection::Stop;
                    json!({ "text": text, "recognized": d })
                }
                None => json!({ "text": text, "recognized": null }),
            },
            EventKind::Gesture { direction, tilt_deg, duration_ms } => {
                self.gesture = Some((*direction, *tilt_deg, t + duration_ms));
                json!({ "direction": direction, "tilt_deg": tilt_deg })
            }
            EventKind::Eog { direction, angle_deg, duration_ms } => {
                self.gaze = Some((*direction, *angle_deg, t + duration_ms));
                json!({ "direction": direction, "angle_deg": angle_deg })
            }
            EventKind::DoubleBlink => {
                self.blinks.push((t, t + 150));
                self.blinks.push((t + 400, t + 550));
                json!({})
            }
            EventKind::Hazard { kind, duration_ms } => {
                match kind {
                    HazardKind::Fall => {
                        for k in 0..10 {
                            self.body_script.insert(t + k * TICK_MS, [0.0, 0.0, 0.1]);
                        }
                        self.body_script.insert(t + 10 * TICK_MS, [2.0, 0.5, 2.8]);
                        // from here on the patient lies on their side
                        self.body_script.insert(t + 11 * TICK_MS, [f64::NAN; 3]);
                    }
                    HazardKind::Convulsion => {
                        let d = duration_ms.unwrap_or(8_000);
                        self.shaking = Some((t, t + d));
                        self.set_profile(VitalKind::HeartRate, VitalProfile::Elevated);
                        self.restore.push((t + d, VitalKind::HeartRate));
                    }
                    HazardKind::HeartAttack => {
                        self.set_profile(VitalKind::HeartRate, VitalProfile::Tachycardia);
                        if let Some(d) = duration_ms {
                            self.restore.push((t + d, VitalKind::HeartRate));
                        }
                    }
                    HazardKind::Obstacle => self.obstacle_until = Some(t + duration_ms.unwrap_or(1_000)),
                }
                json!({ "kind": kind, "duration_ms": duration_ms })
            }
            EventKind::Physiology { vital, profile: name } => {
                let kind: VitalKind = vital.parse().map_err(ScenarioError::Config)?;
                let p = profile(kind, name)?;
                self.set_profile(kind, p);
                self.vitals.get_mut(&kind).expect("all vitals present").base = p;
                json!({ "vital": vital, "profile": name })
            }
            EventKind::TransportOutage { duration_ms } => {
                self.outage_until = Some(t + duration_ms);
                json!({ "duration_ms": duration_ms })
            }
            EventKind::MissingInput { duration_ms } => {
                self.missing_until = Some(t + duration_ms);
                json!({ "duration_ms": duration_ms })
            }
            // handled by the runner, which owns the arbitration state
            EventKind::ClearSafehalt | EventKind::SelectMode { .. } => json!({}),
        })
    }

    fn body_sample(&mut self, t: u64) -> AccelSample {
        let mut a = match self.body_script.remove(&t) {
            Some(v) if v[0].is_nan() => {
                self.posture = [1.0, 0.0, 0.05];
                self.posture
            }
            Some(v) => v,
            None => self.posture,
        };
        if let Some((start, end)) = self.shaking {
            if (start..end).contains(&t) {
                a[0] += 0.5 * (std::f64::consts::TAU * 4.5 * (t - start) as f64 / 1000.0).sin();
            }
        }
        if let Some(n) = self.accel_noise {
            for v in &mut a {
                *v += n.sample(&mut self.rng);
            }
        }
        AccelSample::new(a[0], a[1], a[2], t)
    }

    fn sample_vitals(&mut self, t: u64) {
        let due: Vec<VitalKind> = self.restore.iter().filter(|(at, _)| *at <= t).map(|(_, k)| *k).collect();
        self.restore.retain(|(at, _)| *at > t);
        for kind in due {
            let base = self.vitals[&kind].base;
            self.set_profile(kind, base);
        }
        for (kind, v) in &mut self.vitals {
            let raw = v.generator.sample(t);
            let mut value = v.fitted.apply(raw.raw);
            if *kind == VitalKind::Temperature {
                let (lo, hi) = kind.valid_range();
                value = quantize_temperature(value.clamp(lo, hi), 12).expect("12-bit resolution is valid");
            }
            self.current.insert(*kind, CalibratedVital::new(*kind, value, t));
        }
    }

    fn hr(&self) -> f64 {
        self.current.get(&VitalKind::HeartRate).map_or(72.0, |v| v.value)
    }

    /// Advance sensors to `t` and return detector outcomes for the tick.
    fn sense(&mut self, t: u64) -> (bool, bool) {
        if t % VITALS_PERIOD_MS == 0 {
            self.sample_vitals(t);
        }
        let body = self.body_sample(t);
        let fell = self.fall_monitor.push(&body).is_some();
        let convulsed = self.convulsion_monitor.push(&body, self.hr()).is_some();
        self.fall_pending_input |= fell;
        self.fall_pending_record |= fell;
        self.convulsion_pending_input |= convulsed;
        self.convulsion_pending_record |= convulsed;

        let (mut h, mut v) = (0.0, 0.0);
        if let Some((dir, deg, until)) = self.gaze {
            if t < until {
                let mv = deg * EogConfig::default().mv_per_degree;
                match dir {
                    MotionDirection::Right => h = mv,
                    MotionDirection::Left => h = -mv,
                    MotionDirection::Forward => v = mv,
                    MotionDirection::Backward => v = -mv,
                    MotionDirection::Stop => {}
                }
            }
        }
        if self.blinks.iter().any(|(s, e)| (*s..*e).contains(&t)) {
            v += 0.5;
        }
        self.blinks.retain(|(_, e)| *e > t.saturating_sub(2_000));
        self.eog_trace.push(EogSample { t, potential: h, channel: EogChannel::Horizontal });
        self.eog_trace.push(EogSample { t, potential: v, channel: EogChannel::Vertical });
        self.eog_trace.trim_before(t.saturating_sub(6_000));
        (fell, convulsed)
    }

    fn hazards(&self, t: u64) -> Hazards {
        Hazards {
            fall: self.fall_pending_input,
            health: self.convulsion_pending_input || detect_heart_attack(self.hr(), &self.cfg.detectors),
            obstacle: self.obstacle_until.is_some_and(|u| t < u),
        }
    }

    fn inputs(&mut self, t: u64) -> Option<ControlInputs> {
        if self.missing_until.is_some_and(|u| t < u) {
            return None;
        }
        let mut s = ControlInputs::idle(t);
        if let Some((raw, until)) = self.joystick {
            if t < until {
                let r = decode_joystick(raw);
                s.joy_speed = r.joy_speed;
                s.joy_direction = (r.joy_speed > 0).then_some(r.direction);
                s.joy_pressed = raw.pressed;
            } else {
                self.joystick = None;
            }
        }
        if let Some(d) = self.voice {
            s.voice_ready = true;
            s.voice_command = Some(d);
            if self.voice_once {
                self.voice = None;
            }
        }
        let glove = match self.gesture {
            Some((d, deg, until)) if t < until => gesture_tilt(d, deg, t),
            _ => AccelSample::at_rest(t),
        };
        if let Some(d) = decode_gesture(&glove) {
            s.gesture_ok = true;
            s.gesture_command = Some(d);
        }
        if let Ok(u) = self.eog.update(&self.eog_trace, t) {
            s.eog_angle = u.eog_angle;
            s.eog_command = u.command;
        }
        let hz = self.hazards(t);
        s.fall_flag = hz.fall;
        s.health_alert = hz.health;
        s.obstacle_flag = hz.obstacle;
        // the pulses have been handed over
        self.fall_pending_input = false;
        self.convulsion_pending_input = false;
        Some(s)
    }

    fn feed_record(&mut self, t: u64, mode: ModeId, pose: &KinematicState) -> FeedRecord {
        let get = |k| self.current.get(&k).map_or(0.0, |v: &CalibratedVital| v.value);
        let r = FeedRecord {
            t: self.cfg.epoch_ms + t,
            hr: get(VitalKind::HeartRate),
            spo2: get(VitalKind::SpO2),
            temp: get(VitalKind::Temperature),
            fall: self.fall_pending_record,
            convulsion: self.convulsion_pending_record,
            mode,
            pose: Pose { x: pose.x, y: pose.y, heading: pose.heading },
        };
        self.fall_pending_record = false;
        self.convulsion_pending_record = false;
        r
    }
}

fn expected_alert(kind: HazardKind) -> Option<AlertKind> {
    match kind {
        HazardKind::Fall => Some(AlertKind::Fall),
        HazardKind::Convulsion => Some(AlertKind::Convulsion),
        HazardKind::HeartAttack => Some(AlertKind::HeartAttack),
        HazardKind::Obstacle => None,
    }
}

/// Execute a scenario and write its artifacts under `out`.
pub fn run_scenario(scenario: &Scenario, out: &Path, opts: &RunOptions) -> Result<RunSummary, RunError> {
    scenario.validate()?;
    let mut events = scenario.events.clone();
    events.sort_by_key(|e| e.t_ms);
    let cfg = &scenario.config;
    let key = parse_key_hex(&cfg.key).map_err(|e| ScenarioError::Config(e.to_string()))?;

    // a fresh directory per run keeps artifacts independent of earlier runs
    if out.exists() {
        for name in Artifacts::STREAMS.iter().chain(["alerts.jsonl", "metrics.json"].iter()) {
            let p = out.join(name);
            if p.exists() {
                std::fs::remove_file(p)?;
            }
        }
        let svc_dir = out.join("service");
        if svc_dir.exists() {
            std::fs::remove_dir_all(svc_dir)?;
        }
    }
    let mut art = Artifacts::create(out)?;

    let clock = Arc::new(ManualClock::new(cfg.epoch_ms));
    let mut svc_cfg = ServiceConfig::new(out.join("service"));
    svc_cfg.detectors = cfg.detectors.clone();
    let service = MonitorService::open(svc_cfg, key, Box::new(clock.clone()))?;
    let pid = crate::monitor::patient_id(cfg.device_id);
    service.register_patient(&pid)?;
    let mut stream = service.subscribe();

    let mut world = World::new(scenario)?;
    let queue = Arc::new(UploadQueue::default());
    let mut uploader = Uploader::new(queue.clone(), FrameEncoder::new(key, cfg.device_id), cfg.cadence_ms);
    let mut http = opts.upload_url.as_deref().map(HttpTransport::new);

    let loop_cfg = LoopConfig { duration_ms: Some(scenario.duration_ms), realtime: opts.realtime, ..LoopConfig::default() };
    let mut control = ControlLoop::new(Prepared(None), loop_cfg);
    *control.state_mut() = select_mode(control.state(), cfg.initial_mode);

    let mut pose = KinematicState::default();
    let mut ticks = Vec::new();
    let mut mode_ticks: BTreeMap<ModeId, u64> = BTreeMap::new();
    let (mut safe_halt_ticks, mut latch_violations, mut distance, mut feed_records) = (0u64, 0u64, 0.0f64, 0u64);
    let mut hazard_since_clear = false;
    let mut hazards: Vec<HazardLatency> = Vec::new();
    let mut clear_attempts = Vec::new();
    let mut max_delivery_wall_ms = 0.0f64;
    let mut next_event = 0;
    let mut was_latched = false;

    let mut t = 0;
    while t < scenario.duration_ms {
        let (fell, convulsed) = {
            while next_event < events.len() && events[next_event].t_ms <= t {
                let ev = &events[next_event];
                next_event += 1;
                let detail = world.apply(t, &ev.kind).map_err(|e| RunError::Event { t_ms: t, event: ev.kind.name().into(), msg: e.to_string() })?;
                art.event(t, ev.kind.name(), detail)?;
                match &ev.kind {
                    EventKind::Hazard { kind, .. } => hazards.push(HazardLatency {
                        kind: *kind,
                        injected_t_ms: t,
                        flagged_t_ms: None,
                        alert_t_ms: None,
                        alert_latency_ms: None,
                        outbox_file: None,
                    }),
                    EventKind::SelectMode { mode } => *control.state_mut() = select_mode(control.state(), *mode),
                    _ => {}
                }
            }
            world.sense(t)
        };
        if fell {
            art.event(t, "fall_detected", json!({}))?;
        }
        if convulsed {
            art.event(t, "convulsion_detected", json!({ "hr": world.hr() }))?;
        }
        // operator clears are evaluated against the hazards present now
        for ev in events[..next_event].iter().filter(|e| e.t_ms == t && e.kind == EventKind::ClearSafehalt) {
            let _ = ev;
            let current = world.hazards(t);
            let attempt = match clear_safe_halt(control.state(), current) {
                Ok(s) => {
                    *control.state_mut() = s;
                    hazard_since_clear = false;
                    ClearAttempt { t_ms: t, ok: true, detail: "cleared".into() }
                }
                Err(e) => ClearAttempt { t_ms: t, ok: false, detail: e.to_string() },
            };
            art.event(t, "clear_result", json!({ "ok": attempt.ok, "detail": attempt.detail }))?;
            clear_attempts.push(attempt);
        }

        let inputs = world.inputs(t);
        let hazard_input = inputs.as_ref().is_some_and(|s| s.any_hazard());
        if let Some(s) = &inputs {
            let hz = s.hazards();
            for h in hazards.iter_mut().filter(|h| h.flagged_t_ms.is_none()) {
                let hit = match h.kind {
                    HazardKind::Fall => hz.fall,
                    HazardKind::Convulsion | HazardKind::HeartAttack => hz.health,
                    HazardKind::Obstacle => hz.obstacle,
                };
                if hit {
                    h.flagged_t_ms = Some(t);
                }
            }
        }
        hazard_since_clear |= hazard_input;
        control.source_mut().0 = inputs;
        let Some(out_tick) = control.next() else { break };
        debug_assert_eq!(out_tick.t_ms, t);

        if out_tick.safe_halt != was_latched {
            art.event(t, if out_tick.safe_halt { "latched" } else { "unlatched" }, json!({}))?;
            was_latched = out_tick.safe_halt;
        }
        if hazard_since_clear && out_tick.mode != ModeId::Stop {
            latch_violations += 1;
        }
        let before = pose;
        pose = step_kinematics(pose, &out_tick.command, TICK_MS as f64 / 1000.0, &cfg.kinematics);
        distance += (pose.x - before.x).hypot(pose.y - before.y);
        *mode_ticks.entry(out_tick.mode).or_default() += 1;
        safe_halt_ticks += u64::from(out_tick.safe_halt);
        art.line("control.jsonl", &out_tick.to_timeline_json())?;
        art.line("pose.jsonl", &json!({ "t_ms": t, "x": pose.x, "y": pose.y, "heading": pose.heading, "v": pose.v }).to_string())?;
        ticks.push(TickRow {
            t_ms: t,
            mode: out_tick.mode,
            direction: out_tick.command.direction(),
            speed: out_tick.command.speed(),
            safe_halt: out_tick.safe_halt,
            hazard_input,
            pose,
        });

        if t % VITALS_PERIOD_MS == 0 {
            let v: BTreeMap<&str, &CalibratedVital> = world.current.iter().map(|(k, v)| (k.channel(), v)).collect();
            art.line("vitals.jsonl", &json!({ "t_ms": t, "vitals": v }).to_string())?;
            queue.push(world.feed_record(t, out_tick.mode, &pose));
            feed_records += 1;
        }

        clock.set(cfg.epoch_ms + t);
        let down = world.outage_until.is_some_and(|u| t < u);
        let mut deliver = |frame: &[u8]| -> Result<(), TransportError> {
            if down {
                return Err(TransportError::Down("scripted outage".into()));
            }
            let start = Instant::now();
            let r = match http.as_mut() {
                Some(h) => h.send(frame),
                None => (&service).send(frame),
            };
            max_delivery_wall_ms = max_delivery_wall_ms.max(start.elapsed().as_secs_f64() * 1e3);
            r
        };
        uploader.poll(t, &mut crate::telemetry::FnTransport(&mut deliver));

        while let Ok(ev) = stream.try_recv() {
            if let StreamEvent::Alert { alert } = &ev {
                let h = hazards.iter_mut().find(|h| h.alert_t_ms.is_none() && expected_alert(h.kind) == Some(alert.event.kind));
                if let Some(h) = h {
                    h.alert_t_ms = Some(t);
                    h.alert_latency_ms = Some(t - h.injected_t_ms);
                    h.outbox_file = Some(crate::monitor::OutboxMessage::file_name(&alert.event));
                }
            }
            art.line("stream.jsonl", &json!({ "t_ms": t, "event": ev }).to_string())?;
        }
        t += TICK_MS;
    }

    let alerts = service.alerts(false);
    let mut alerts_by_kind: BTreeMap<AlertKind, u64> = BTreeMap::new();
    let mut alert_lines = String::new();
    for a in &alerts {
        *alerts_by_kind.entry(a.event.kind).or_default() += 1;
        alert_lines.push_str(&serde_json::to_string(a).expect("alert serializes"));
        alert_lines.push('\n');
    }
    std::fs::write(out.join("alerts.jsonl"), alert_lines)?;

    let metrics = RunMetrics {
        scenario: scenario.name.clone(),
        seed: scenario.seed,
        duration_ms: scenario.duration_ms,
        ticks: ticks.len() as u64,
        mode_ticks,
        safe_halt_ticks,
        latch_violations,
        distance_m: distance,
        final_pose: pose,
        alerts_by_kind,
        hazards,
        clear_attempts,
        feed_records,
        upload: uploader.metrics(),
        rejected_frames: service.rejections(),
    };
    std::fs::write(out.join("metrics.json"), serde_json::to_string_pretty(&metrics).expect("metrics serialize") + "\n")?;
    art.finish()?;
    Ok(RunSummary { metrics, ticks, out_dir: out.to_path_buf(), max_delivery_wall_ms })
}
