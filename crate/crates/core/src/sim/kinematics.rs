use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::arbitration::{MotionCommand, MotionDirection};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KinematicsConfig {
    /// m/s at full speed.
    pub v_max: f64,
    /// rad/s at full speed.
    pub omega_max: f64,
}

impl Default for KinematicsConfig {
    fn default() -> Self {
        Self { v_max: 1.0, omega_max: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct KinematicState {
    pub x: f64,
    pub y: f64,
    /// Radians in (−π, π].
    pub heading: f64,
    /// Signed forward speed, m/s.
    pub v: f64,
}

/// Wrap an angle into (−π, π].
pub fn normalize_angle(a: f64) -> f64 {
    let r = a.rem_euclid(2.0 * PI);
    if r > PI { r - 2.0 * PI } else { r }
}

/// Differential-drive update: straight lines for Forward/Backward, turning in
/// place for Left/Right (Left is counter-clockwise).
pub fn step_kinematics(s: KinematicState, cmd: &MotionCommand, dt_s: f64, cfg: &KinematicsConfig) -> KinematicState {
    assert!(dt_s > 0.0, "dt must be positive");
    let speed = cmd.speed();
    let mut next = KinematicState { v: 0.0, ..s };
    match cmd.direction() {
        MotionDirection::Forward | MotionDirection::Backward => {
            let sign = if cmd.direction() == MotionDirection::Forward { 1.0 } else { -1.0 };
            let v = sign * cfg.v_max * speed;
            next.x += v * s.heading.cos() * dt_s;
            next.y += v * s.heading.sin() * dt_s;
            next.v = v;
        }
        MotionDirection::Left => next.heading = normalize_angle(s.heading + cfg.omega_max * speed * dt_s),
        MotionDirection::Right => next.heading = normalize_angle(s.heading - cfg.omega_max * speed * dt_s),
        MotionDirection::Stop => {}
    }
    next
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arbitration::ModeId;
    use proptest::prelude::*;

    fn cmd(d: MotionDirection, speed: f64) -> MotionCommand {
        MotionCommand::new(d, speed, ModeId::Joystick)
    }

    #[test]
    fn examples() {
        let cfg = KinematicsConfig::default();
        let s0 = KinematicState { x: 0.3, y: -1.0, heading: 0.2, v: 0.7 };
        let stopped = step_kinematics(s0, &cmd(MotionDirection::Stop, 1.0), 3.0, &cfg);
        assert_eq!(stopped, KinematicState { v: 0.0, ..s0 });
        let fwd = step_kinematics(KinematicState::default(), &cmd(MotionDirection::Forward, 1.0), 1.0, &cfg);
        assert_eq!((fwd.x, fwd.y), (1.0, 0.0));
        let left = step_kinematics(KinematicState::default(), &cmd(MotionDirection::Left, 1.0), 0.5, &cfg);
        assert_eq!(left.heading, 0.5);
    }

    #[test]
    fn heading_wraps() {
        assert!((normalize_angle(PI + 0.1) - (-PI + 0.1)).abs() < 1e-12);
        assert_eq!(normalize_angle(-PI), PI);
    }

    fn direction() -> impl Strategy<Value = MotionDirection> {
        prop::sample::select(MotionDirection::ALL.to_vec())
    }

    proptest! {
        #[test]
        fn displacement_bounded(d in direction(), speed in 0.0..1.0f64, h in -PI..PI, dt in 0.001..0.1f64) {
            let cfg = KinematicsConfig::default();
            let s0 = KinematicState { heading: normalize_angle(h), ..Default::default() };
            let s1 = step_kinematics(s0, &cmd(d, speed), dt, &cfg);
            prop_assert!((s1.x - s0.x).hypot(s1.y - s0.y) <= cfg.v_max * dt + 1e-12);
            prop_assert!(s1.v.abs() <= cfg.v_max);
            prop_assert!(s1.heading > -PI && s1.heading <= PI);
        }
    }
}
