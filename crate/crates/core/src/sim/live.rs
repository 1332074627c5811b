//! A wall-clock drive session behind the console endpoints: operator inputs
//! arrive over HTTP, the ladder runs at 50 Hz on its own thread, and vitals
//! are uploaded to the monitor service once per cadence.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use super::kinematics::{step_kinematics, KinematicState, KinematicsConfig};
use crate::arbitration::{arbitrate, clear_safe_halt, select_mode, ArbitrationState, ControlInputs, Hazards, ModeButton, ModeId, MotionDirection, TICK_MS};
use crate::calibration::{quantize_temperature, NoiseModel, SensorFixtureSet, VitalGenerator, VitalKind, VitalProfile};
use crate::decoders::{decode_gesture, decode_joystick, gesture_tilt, parse_voice, JoystickRaw};
use crate::detectors::{detect_heart_attack, DetectorConfig};
use crate::monitor::http::{ConsoleError, DriveConsole, DriveRequest};
use crate::monitor::{ControlEvent, MonitorService, StreamEvent};
use crate::telemetry::{FeedRecord, FrameEncoder, Key, Pose, UploadQueue, Uploader};

/// Control events are published on change and at least this often.
const CONTROL_HEARTBEAT_TICKS: u64 = 50;

#[derive(Debug, Clone)]
pub struct LiveConfig {
    pub device_id: u64,
    pub key: Key,
    pub cadence_ms: u64,
    pub kinematics: KinematicsConfig,
    pub detectors: DetectorConfig,
    pub seed: u64,
}

impl LiveConfig {
    pub fn new(key: Key) -> Self {
        Self {
            device_id: 1,
            key,
            cadence_ms: crate::telemetry::DEFAULT_CADENCE_MS,
            kinematics: KinematicsConfig::default(),
            detectors: DetectorConfig::default(),
            seed: 1,
        }
    }
}

#[derive(Default)]
struct Operator {
    joystick: Option<JoystickRaw>,
    voice: Option<MotionDirection>,
    gesture: Option<MotionDirection>,
    eog: Option<(MotionDirection, f64)>,
}

struct Chair {
    operator: Operator,
    arbitration: ArbitrationState,
    pose: KinematicState,
    hr: f64,
    spo2: f64,
    temp: f64,
    last: ControlEvent,
}

struct Shared {
    chair: Mutex<Chair>,
    service: Arc<MonitorService>,
    cfg: LiveConfig,
}

impl Shared {
    fn chair(&self) -> MutexGuard<'_, Chair> {
        self.chair.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn hazards(&self, c: &Chair) -> Hazards {
        Hazards { fall: false, health: detect_heart_attack(c.hr, &self.cfg.detectors), obstacle: false }
    }

    fn event(&self, c: &Chair, mode: ModeId, direction: MotionDirection, speed: f64) -> ControlEvent {
        ControlEvent {
            t_ms: self.service.now_ms(),
            mode,
            direction,
            speed,
            safe_halt: c.arbitration.safe_halt,
            pose: Pose { x: c.pose.x, y: c.pose.y, heading: c.pose.heading },
        }
    }
}

fn inputs(op: &Operator, hazards: Hazards, t: u64) -> ControlInputs {
    let mut s = ControlInputs::idle(t);
    if let Some(raw) = op.joystick {
        let r = decode_joystick(raw);
        s.joy_speed = r.joy_speed;
        s.joy_direction = (r.joy_speed > 0).then_some(r.direction);
        s.joy_pressed = raw.pressed;
    }
    if let Some(d) = op.voice {
        s.voice_ready = true;
        s.voice_command = Some(d);
    }
    if let Some(d) = op.gesture.and_then(|d| decode_gesture(&gesture_tilt(d, 30.0, t))) {
        s.gesture_ok = true;
        s.gesture_command = Some(d);
    }
    if let Some((d, angle)) = op.eog {
        s.eog_angle = angle;
        s.eog_command = Some(d);
    }
    s.fall_flag = hazards.fall;
    s.health_alert = hazards.health;
    s.obstacle_flag = hazards.obstacle;
    s
}

pub struct LiveSession {
    shared: Arc<Shared>,
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
    profiles: Arc<Mutex<Vec<(VitalKind, VitalProfile)>>>,
}

impl LiveSession {
    pub fn start(service: Arc<MonitorService>, cfg: LiveConfig) -> Self {
        let pose = KinematicState::default();
        let chair = Chair {
            operator: Operator::default(),
            arbitration: ArbitrationState::default(),
            pose,
            hr: 72.0,
            spo2: 98.0,
            temp: 37.0,
            last: ControlEvent { t_ms: service.now_ms(), mode: ModeId::Stop, direction: MotionDirection::Stop, speed: 0.0, safe_halt: false, pose: Pose::default() },
        };
        let shared = Arc::new(Shared { chair: Mutex::new(chair), service, cfg });
        let stop = Arc::new(AtomicBool::new(false));
        let profiles = Arc::new(Mutex::new(Vec::new()));
        let handle = {
            let (shared, stop, profiles) = (shared.clone(), stop.clone(), profiles.clone());
            std::thread::spawn(move || run(shared, stop, profiles))
        };
        Self { shared, stop, handle: Some(handle), profiles }
    }

    /// Switch a simulated vital to another profile (e.g. heart-rate "150").
    pub fn set_vital_profile(&self, kind: VitalKind, profile: VitalProfile) {
        self.profiles.lock().unwrap_or_else(|p| p.into_inner()).push((kind, profile));
    }

    pub fn last_event(&self) -> ControlEvent {
        self.shared.chair().last.clone()
    }

    pub fn shutdown(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

impl Drop for LiveSession {
    fn drop(&mut self) {
        self.shutdown();
    }
}

impl DriveConsole for LiveSession {
    fn drive(&self, req: DriveRequest) -> Result<ControlEvent, ConsoleError> {
        let mut c = self.shared.chair();
        if c.arbitration.safe_halt && req != DriveRequest::Release {
            return Err(ConsoleError::SafeHaltActive);
        }
        let op = &mut c.operator;
        match req {
            DriveRequest::Joystick { x, y, pressed } => {
                let axis = |v: i32| u16::try_from(2048 + v).ok().filter(|v| *v <= 4095);
                let (Some(xc), Some(yc)) = (axis(x), axis(y)) else {
                    return Err(ConsoleError::Invalid(format!("joystick counts ({x}, {y}) outside ±2048")));
                };
                op.joystick = Some(JoystickRaw::new(xc, yc, pressed).map_err(|e| ConsoleError::Invalid(e.to_string()))?);
            }
            DriveRequest::Voice { text } => {
                op.voice = Some(parse_voice(&text).ok_or_else(|| ConsoleError::Invalid(format!("unrecognised command `{text}`")))?);
            }
            DriveRequest::Gesture { direction } => op.gesture = (direction != MotionDirection::Stop).then_some(direction),
            DriveRequest::Eog { direction, angle_deg } => {
                if !angle_deg.is_finite() || angle_deg < 0.0 {
                    return Err(ConsoleError::Invalid(format!("gaze angle {angle_deg}")));
                }
                op.eog = Some((direction, angle_deg));
            }
            DriveRequest::Release => *op = Operator::default(),
        }
        Ok(c.last.clone())
    }

    fn select_mode(&self, button: ModeButton) -> Result<ControlEvent, ConsoleError> {
        let mut c = self.shared.chair();
        c.arbitration = select_mode(c.arbitration, button);
        Ok(c.last.clone())
    }

    fn clear_safe_halt(&self) -> Result<ControlEvent, ConsoleError> {
        let mut c = self.shared.chair();
        let hazards = self.shared.hazards(&c);
        c.arbitration = clear_safe_halt(c.arbitration, hazards).map_err(|_| ConsoleError::HazardStillActive(hazards))?;
        c.operator = Operator::default();
        let ev = self.shared.event(&c, ModeId::Stop, MotionDirection::Stop, 0.0);
        c.last = ev.clone();
        drop(c);
        self.shared.service.publish(StreamEvent::Control(ev.clone()));
        Ok(ev)
    }
}

fn run(shared: Arc<Shared>, stop: Arc<AtomicBool>, profiles: Arc<Mutex<Vec<(VitalKind, VitalProfile)>>>) {
    let cfg = shared.cfg.clone();
    let fixtures = SensorFixtureSet::bundled();
    let mut vitals: Vec<(VitalKind, VitalGenerator, crate::calibration::CalibrationCoefficients)> = VitalKind::ALL
        .into_iter()
        .enumerate()
        .map(|(i, kind)| {
            let fx = fixtures.get(kind).expect("bundled fixture covers every vital");
            let noise = NoiseModel { sigma: fx.sigma, seed: cfg.seed.wrapping_add(i as u64) };
            let generator = VitalGenerator::new(kind, VitalProfile::Resting, noise, fx.truth());
            (kind, generator, fx.fitted().expect("bundled anchors are valid"))
        })
        .collect();
    let queue = Arc::new(UploadQueue::default());
    let encoder = FrameEncoder::resume(cfg.key, cfg.device_id, shared.service.last_seq(cfg.device_id));
    let mut uploader = Uploader::new(queue.clone(), encoder, cfg.cadence_ms);
    let mut transport = shared.service.clone();

    let start = Instant::now();
    let mut tick: u64 = 0;
    let mut published: Option<(ModeId, MotionDirection, bool)> = None;
    while !stop.load(Ordering::Relaxed) {
        let t = tick * TICK_MS;
        let deadline = start + Duration::from_millis(t);
        if let Some(wait) = deadline.checked_duration_since(Instant::now()) {
            std::thread::sleep(wait);
        }

        for (kind, p) in profiles.lock().unwrap_or_else(|p| p.into_inner()).drain(..) {
            if let Some(v) = vitals.iter_mut().find(|v| v.0 == kind) {
                v.1.set_profile(p);
            }
        }
        let vitals_due = t % 1000 == 0;
        let mut c = shared.chair();
        if vitals_due {
            for (kind, generator, fitted) in &mut vitals {
                let mut value = fitted.apply(generator.sample(t).raw);
                match kind {
                    VitalKind::HeartRate => c.hr = value,
                    VitalKind::SpO2 => c.spo2 = value,
                    VitalKind::Temperature => {
                        value = quantize_temperature(value.clamp(-55.0, 125.0), 12).expect("12-bit resolution is valid");
                        c.temp = value;
                    }
                }
            }
        }
        let hazards = shared.hazards(&c);
        let (mode, command, next) = arbitrate(&inputs(&c.operator, hazards, t), c.arbitration);
        c.arbitration = next;
        c.pose = step_kinematics(c.pose, &command, TICK_MS as f64 / 1000.0, &cfg.kinematics);
        let ev = shared.event(&c, mode, command.direction(), command.speed());
        c.last = ev.clone();
        let record = vitals_due.then(|| FeedRecord {
            t: shared.service.now_ms(),
            hr: c.hr,
            spo2: c.spo2,
            temp: c.temp,
            fall: false,
            convulsion: false,
            mode,
            pose: ev.pose,
        });
        drop(c);

        let key = (mode, command.direction(), ev.safe_halt);
        if published != Some(key) || tick % CONTROL_HEARTBEAT_TICKS == 0 {
            shared.service.publish(StreamEvent::Control(ev));
            published = Some(key);
        }
        if let Some(r) = record {
            queue.push(r);
        }
        uploader.poll(t, &mut transport);
        tick += 1;
    }
}
