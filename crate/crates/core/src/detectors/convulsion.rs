use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{check_coverage, ConvulsionConfig, DetectorError, FallConfig};
use crate::decoders::AccelSample;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvulsionEvent {
    pub t: u64,
    pub peak_to_peak_g: f64,
    pub frequency_hz: f64,
    pub hr: f64,
}

/// Dominant frequency of a detrended signal from hysteresis zero crossings.
///
/// Each crossing of the `±hysteresis` band counts as half a cycle.
pub fn dominant_frequency_hz(values: &[f64], duration_ms: f64, hysteresis: f64) -> f64 {
    if values.is_empty() || duration_ms <= 0.0 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let mut side = 0i8;
    let mut crossings = 0u32;
    for v in values {
        let d = v - mean;
        let s = if d > hysteresis {
            1
        } else if d < -hysteresis {
            -1
        } else {
            continue;
        };
        if side != 0 && s != side {
            crossings += 1;
        }
        side = s;
    }
    crossings as f64 / 2.0 / (duration_ms / 1000.0)
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    end_t: u64,
    active: bool,
    p2p: f64,
    freq: f64,
}

fn analyse_segment(seg: &[AccelSample], cfg: &ConvulsionConfig, span_ms: f64) -> (bool, f64, f64) {
    let axes: [fn(&AccelSample) -> f64; 3] = [|s| s.ax, |s| s.ay, |s| s.az];
    let (p2p, values) = axes
        .iter()
        .map(|axis| {
            let v: Vec<f64> = seg.iter().map(axis).collect();
            let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            (hi - lo, v)
        })
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .expect("three axes");
    let freq = dominant_frequency_hz(&values, span_ms, 0.1 * p2p);
    let active = p2p >= cfg.min_peak_to_peak_g && (cfg.band_low_hz..=cfg.band_high_hz).contains(&freq);
    (active, p2p, freq)
}

fn segments(window: &[AccelSample], cfg: &ConvulsionConfig, dt: f64) -> Vec<Segment> {
    let t0 = window[0].t;
    let t_end = window[window.len() - 1].t as f64 + dt;
    let mut out = Vec::new();
    let mut start = t0;
    while (start + cfg.segment_ms) as f64 <= t_end + 1e-9 {
        let end = start + cfg.segment_ms;
        let seg: Vec<AccelSample> = window.iter().filter(|s| s.t >= start && s.t < end).cloned().collect();
        if seg.len() >= 2 {
            let (active, p2p, freq) = analyse_segment(&seg, cfg, cfg.segment_ms as f64);
            out.push(Segment { end_t: end, active, p2p, freq });
        }
        start += cfg.segment_step_ms;
    }
    out
}

/// Longest run of in-band, large-amplitude segments, as covered milliseconds.
fn persistent_oscillation(window: &[AccelSample], cfg: &ConvulsionConfig, dt: f64) -> Option<ConvulsionEvent> {
    let segs = segments(window, cfg, dt);
    let mut best: Option<(u64, Vec<Segment>)> = None;
    let mut run: Vec<Segment> = Vec::new();
    for seg in segs {
        if seg.active {
            run.push(seg);
            let covered = (run.len() as u64 - 1) * cfg.segment_step_ms + cfg.segment_ms;
            if best.as_ref().is_none_or(|(c, _)| covered > *c) {
                best = Some((covered, run.clone()));
            }
        } else {
            run.clear();
        }
    }
    let (covered, run) = best?;
    if covered < cfg.persist_ms {
        return None;
    }
    let n = run.len() as f64;
    Some(ConvulsionEvent {
        t: run.last().expect("non-empty run").end_t,
        peak_to_peak_g: run.iter().map(|s| s.p2p).sum::<f64>() / n,
        frequency_hz: run.iter().map(|s| s.freq).sum::<f64>() / n,
        hr: 0.0,
    })
}

/// Sustained 2–8 Hz shaking corroborated by a raised heart rate.
///
/// `spo2` is accepted for the corroboration record but does not gate the decision.
pub fn detect_convulsion(window: &[AccelSample], hr: f64, _spo2: f64, cfg: &ConvulsionConfig) -> Result<bool, DetectorError> {
    let dt = check_coverage(window, cfg.window_ms)?;
    Ok(hr > cfg.hr_min && persistent_oscillation(window, cfg, dt).is_some())
}

/// Rolling convulsion detector; one event per episode.
#[derive(Debug, Clone)]
pub struct ConvulsionMonitor {
    cfg: ConvulsionConfig,
    rearm: FallConfig,
    buffer: VecDeque<AccelSample>,
    armed: bool,
}

impl ConvulsionMonitor {
    pub fn new(cfg: ConvulsionConfig, rearm: FallConfig) -> Self {
        Self { cfg, rearm, buffer: VecDeque::new(), armed: true }
    }

    pub fn is_armed(&self) -> bool {
        self.armed
    }

    /// Append the unseen tail of `window` and evaluate the rolling buffer.
    pub fn process_window(&mut self, window: &[AccelSample], hr: f64) -> Option<ConvulsionEvent> {
        let last = self.buffer.back().map(|s| s.t);
        let fresh: Vec<AccelSample> = window.iter().filter(|s| last.is_none_or(|t| s.t > t)).cloned().collect();
        self.buffer.extend(fresh.iter().copied());
        let newest = self.buffer.back()?.t;
        if !self.armed && self.still_for_rearm(newest) {
            self.armed = true;
            // only motion after re-arm may start a new episode
            let from = newest - self.rearm.rearm_ms;
            self.buffer.retain(|b| b.t >= from);
        }
        while self.buffer.front().is_some_and(|s| s.t + self.cfg.window_ms <= newest) {
            self.buffer.pop_front();
        }
        if !self.armed || hr <= self.cfg.hr_min || fresh.is_empty() {
            return None;
        }
        let window: Vec<AccelSample> = self.buffer.iter().cloned().collect();
        let dt = check_coverage(&window, self.cfg.window_ms).ok()?;
        let mut event = persistent_oscillation(&window, &self.cfg, dt)?;
        event.hr = hr;
        self.armed = false;
        Some(event)
    }

    /// Every axis has stayed within the re-arm band for the last `rearm_ms`.
    ///
    /// Per-axis rather than magnitude: lateral shaking barely moves |a|.
    fn still_for_rearm(&self, newest: u64) -> bool {
        let from = newest.saturating_sub(self.rearm.rearm_ms);
        if self.buffer.front().is_none_or(|s| s.t > from) {
            return false;
        }
        let recent: Vec<&AccelSample> = self.buffer.iter().filter(|s| s.t >= from).collect();
        let axes: [fn(&AccelSample) -> f64; 3] = [|s| s.ax, |s| s.ay, |s| s.az];
        axes.iter().all(|axis| {
            let lo = recent.iter().map(|s| axis(s)).fold(f64::INFINITY, f64::min);
            let hi = recent.iter().map(|s| axis(s)).fold(f64::NEG_INFINITY, f64::max);
            hi - lo <= self.rearm.rearm_band_g
        })
    }

    pub fn push(&mut self, s: &AccelSample, hr: f64) -> Option<ConvulsionEvent> {
        self.process_window(std::slice::from_ref(s), hr)
    }
}
