//! Closed-loop simulation: scripted scenarios, accuracy trials, and a live
//! drive session for the operator console.

pub mod kinematics;
pub mod live;
pub mod runner;
pub mod scenario;
pub mod trials;

pub use kinematics::{normalize_angle, step_kinematics, KinematicState, KinematicsConfig};
pub use live::{LiveConfig, LiveSession};
pub use runner::{run_scenario, ClearAttempt, HazardLatency, RunError, RunMetrics, RunOptions, RunSummary, TickRow, VITALS_PERIOD_MS};
pub use scenario::{EventKind, HazardKind, Scenario, ScenarioError, ScenarioEvent, SimConfig, VitalProfiles, DEFAULT_EPOCH_MS};
pub use trials::{run_trial, run_trials, NoiseFixture, TrialLog, TrialOutcome};
