use serde::{Deserialize, Serialize};

use super::{check_coverage, DetectorError, FallConfig};
use crate::decoders::AccelSample;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FallEvent {
    /// Time of the impact sample.
    pub t: u64,
    pub impact_g: f64,
    pub freefall_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Phase {
    Armed {
        freefall_start: Option<u64>,
        /// End of a qualifying free-fall phase, awaiting impact.
        awaiting_since: Option<(u64, u64)>,
    },
    Disarmed {
        stable_since: Option<u64>,
    },
}

/// Streaming two-phase fall detector with episode re-arm.
#[derive(Debug, Clone)]
pub struct FallDetector {
    cfg: FallConfig,
    phase: Phase,
}

impl FallDetector {
    pub fn new(cfg: FallConfig) -> Self {
        Self { cfg, phase: Phase::Armed { freefall_start: None, awaiting_since: None } }
    }

    pub fn is_armed(&self) -> bool {
        matches!(self.phase, Phase::Armed { .. })
    }

    pub fn push(&mut self, s: &AccelSample) -> Option<FallEvent> {
        let g = s.magnitude();
        match &mut self.phase {
            Phase::Armed { freefall_start, awaiting_since } => {
                if g < self.cfg.freefall_g {
                    freefall_start.get_or_insert(s.t);
                    return None;
                }
                if let Some(start) = freefall_start.take() {
                    let dur = s.t - start;
                    if dur >= self.cfg.freefall_min_ms {
                        *awaiting_since = Some((s.t, dur));
                    }
                }
                if let Some((end, dur)) = *awaiting_since {
                    if s.t - end > self.cfg.impact_window_ms {
                        *awaiting_since = None;
                    } else if g >= self.cfg.impact_g {
                        self.phase = Phase::Disarmed { stable_since: None };
                        return Some(FallEvent { t: s.t, impact_g: g, freefall_ms: dur });
                    }
                }
                None
            }
            Phase::Disarmed { stable_since } => {
                if (g - 1.0).abs() <= self.cfg.rearm_band_g {
                    let since = *stable_since.get_or_insert(s.t);
                    if s.t - since >= self.cfg.rearm_ms {
                        self.phase = Phase::Armed { freefall_start: None, awaiting_since: None };
                    }
                } else {
                    *stable_since = None;
                }
                None
            }
        }
    }
}

/// Does the window contain a free fall followed by an impact?
pub fn detect_fall(window: &[AccelSample], cfg: &FallConfig) -> Result<bool, DetectorError> {
    check_coverage(window, 1000)?;
    let mut det = FallDetector::new(*cfg);
    Ok(window.iter().any(|s| det.push(s).is_some()))
}

/// Feeds overlapping windows to one detector, skipping samples it has already seen.
#[derive(Debug, Clone)]
pub struct FallMonitor {
    detector: FallDetector,
    last_t: Option<u64>,
}

impl FallMonitor {
    pub fn new(cfg: FallConfig) -> Self {
        Self { detector: FallDetector::new(cfg), last_t: None }
    }

    pub fn process_window(&mut self, window: &[AccelSample]) -> Vec<FallEvent> {
        let mut events = Vec::new();
        for s in window {
            if self.last_t.is_some_and(|t| s.t <= t) {
                continue;
            }
            self.last_t = Some(s.t);
            events.extend(self.detector.push(s));
        }
        events
    }

    pub fn push(&mut self, s: &AccelSample) -> Option<FallEvent> {
        self.process_window(std::slice::from_ref(s)).pop()
    }
}
