//! Electrooculography: gaze dwell and double-blink detection.
//!
//! Channel conventions: the vertical channel carries up/down gaze (up is
//! Forward, down is Backward) and blinks; the horizontal channel carries
//! right/left gaze. Potentials are baseline-subtracted and smoothed with a
//! trailing moving average before anything else looks at them.

use serde::{Deserialize, Serialize};

use super::DecodeError;
use crate::arbitration::MotionDirection;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EogChannel {
    #[serde(alias = "h")]
    Horizontal,
    #[serde(alias = "v")]
    Vertical,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EogSample {
    pub t: u64,
    /// Electrode potential in millivolts.
    pub potential: f64,
    pub channel: EogChannel,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EogTrace {
    pub samples: Vec<EogSample>,
}

impl EogTrace {
    pub fn new(samples: Vec<EogSample>) -> Self {
        Self { samples }
    }

    pub fn push(&mut self, sample: EogSample) {
        self.samples.push(sample);
    }

    /// Drop samples older than `t_min`.
    pub fn trim_before(&mut self, t_min: u64) {
        self.samples.retain(|s| s.t >= t_min);
    }

    fn channel(&self, channel: EogChannel, now: u64) -> Vec<(u64, f64)> {
        self.samples
            .iter()
            .filter(|s| s.channel == channel && s.t <= now)
            .map(|s| (s.t, s.potential))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EogConfig {
    pub mv_per_degree: f64,
    pub filter_window_ms: u64,
    pub angle_threshold_deg: f64,
    pub dwell_ms: u64,
    pub blink_threshold_mv: f64,
    pub blink_min_ms: u64,
    pub blink_max_ms: u64,
    pub blink_pair_window_ms: u64,
    pub min_history_ms: u64,
    pub baseline_horizontal_mv: f64,
    pub baseline_vertical_mv: f64,
}

impl Default for EogConfig {
    fn default() -> Self {
        Self {
            mv_per_degree: 0.020,
            filter_window_ms: 50,
            angle_threshold_deg: 12.0,
            dwell_ms: 4000,
            blink_threshold_mv: 0.3,
            blink_min_ms: 50,
            blink_max_ms: 400,
            blink_pair_window_ms: 1000,
            min_history_ms: 200,
            baseline_horizontal_mv: 0.0,
            baseline_vertical_mv: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlinkEvent {
    pub onset_ms: u64,
    pub width_ms: u64,
    pub peak_mv: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EogReading {
    pub eog_angle: f64,
    /// Direction and start time of the current above-threshold gaze run.
    pub gaze_run: Option<(MotionDirection, u64)>,
    /// Direction whose gaze run has lasted at least the dwell time at `now`.
    pub dwell_command: Option<MotionDirection>,
    /// Completion time of the latest qualifying blink pair.
    pub double_blink_at: Option<u64>,
    pub blink_events: Vec<BlinkEvent>,
    /// Stop after a double blink, else the dwell command.
    pub eog_command: Option<MotionDirection>,
}

fn moving_average(series: &[(u64, f64)], baseline: f64, window_ms: u64) -> Vec<(u64, f64)> {
    let mut out = Vec::with_capacity(series.len());
    let mut start = 0;
    let mut sum = 0.0;
    for (i, &(t, v)) in series.iter().enumerate() {
        sum += v - baseline;
        while series[start].0 + window_ms <= t {
            sum -= series[start].1 - baseline;
            start += 1;
        }
        out.push((t, sum / (i - start + 1) as f64));
    }
    out
}

fn gaze_direction(h: f64, v: f64) -> MotionDirection {
    if v.abs() >= h.abs() {
        if v >= 0.0 { MotionDirection::Forward } else { MotionDirection::Backward }
    } else if h > 0.0 {
        MotionDirection::Right
    } else {
        MotionDirection::Left
    }
}

fn find_blinks(vertical: &[(u64, f64)], cfg: &EogConfig) -> Vec<BlinkEvent> {
    let mut blinks = Vec::new();
    let mut open: Option<(u64, f64)> = None;
    for &(t, v) in vertical {
        match open {
            None if v > cfg.blink_threshold_mv => open = Some((t, v)),
            Some((onset, peak)) if v > cfg.blink_threshold_mv => open = Some((onset, peak.max(v))),
            Some((onset, peak)) => {
                let width = t - onset;
                if (cfg.blink_min_ms..=cfg.blink_max_ms).contains(&width) {
                    blinks.push(BlinkEvent { onset_ms: onset, width_ms: width, peak_mv: peak });
                }
                open = None;
            }
            None => {}
        }
    }
    blinks
}

/// Decode gaze angle, dwell command and blinks from the trace up to `now`.
pub fn decode_eog(trace: &EogTrace, now: u64, cfg: &EogConfig) -> Result<EogReading, DecodeError> {
    let horizontal = trace.channel(EogChannel::Horizontal, now);
    let have_ms = horizontal.first().map_or(0, |(t0, _)| now.saturating_sub(*t0));
    if horizontal.is_empty() || have_ms < cfg.min_history_ms {
        return Err(DecodeError::InsufficientHistory { needed_ms: cfg.min_history_ms, have_ms });
    }
    let vertical = trace.channel(EogChannel::Vertical, now);
    let h_f = moving_average(&horizontal, cfg.baseline_horizontal_mv, cfg.filter_window_ms);
    let v_f = moving_average(&vertical, cfg.baseline_vertical_mv, cfg.filter_window_ms);

    // merge both filtered channels onto one time axis, holding the last value of each
    let mut points: Vec<(u64, f64, MotionDirection)> = Vec::with_capacity(h_f.len() + v_f.len());
    let (mut i, mut j) = (0, 0);
    let (mut h, mut v) = (0.0, 0.0);
    while i < h_f.len() || j < v_f.len() {
        let take_h = j >= v_f.len() || (i < h_f.len() && h_f[i].0 <= v_f[j].0);
        let t = if take_h {
            h = h_f[i].1;
            i += 1;
            h_f[i - 1].0
        } else {
            v = v_f[j].1;
            j += 1;
            v_f[j - 1].0
        };
        let angle = h.abs().max(v.abs()) / cfg.mv_per_degree;
        if let Some(last) = points.last_mut().filter(|p| p.0 == t) {
            *last = (t, angle, gaze_direction(h, v));
        } else {
            points.push((t, angle, gaze_direction(h, v)));
        }
    }

    let (eog_angle, current_dir) = points.last().map_or((0.0, MotionDirection::Stop), |p| (p.1, p.2));
    let mut gaze_run = None;
    if eog_angle > cfg.angle_threshold_deg {
        let start = points
            .iter()
            .rev()
            .take_while(|p| p.1 > cfg.angle_threshold_deg && p.2 == current_dir)
            .last()
            .map(|p| p.0)
            .expect("latest point is above threshold");
        gaze_run = Some((current_dir, start));
    }
    let dwell_command = gaze_run.filter(|(_, start)| now - start >= cfg.dwell_ms).map(|(d, _)| d);

    let blink_events = find_blinks(&v_f, cfg);
    let double_blink_at = blink_events
        .windows(2)
        .filter(|w| w[1].onset_ms - w[0].onset_ms <= cfg.blink_pair_window_ms)
        .map(|w| w[1].onset_ms + w[1].width_ms)
        .last();

    let dwell_done_at = gaze_run.map(|(_, start)| start + cfg.dwell_ms);
    let eog_command = match (double_blink_at, dwell_command) {
        (Some(b), Some(d)) => Some(if dwell_done_at.is_some_and(|t| t > b) { d } else { MotionDirection::Stop }),
        (Some(_), None) => Some(MotionDirection::Stop),
        (None, d) => d,
    };

    Ok(EogReading { eog_angle, gaze_run, dwell_command, double_blink_at, blink_events, eog_command })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EogUpdate {
    pub eog_angle: f64,
    /// The command currently held by the EOG channel.
    pub command: Option<MotionDirection>,
    /// Set only on the update where a new command fires.
    pub emitted: Option<MotionDirection>,
}

/// Stateful wrapper turning level readings into once-per-event emissions.
///
/// A dwell fires once per uninterrupted gaze run; a double blink fires Stop
/// once. The last fired command is held until the next one.
#[derive(Debug, Clone, Default)]
pub struct EogDecoder {
    cfg: EogConfig,
    fired_run: Option<(MotionDirection, u64)>,
    last_blink_pair: Option<u64>,
    held: Option<MotionDirection>,
}

impl EogDecoder {
    pub fn new(cfg: EogConfig) -> Self {
        Self { cfg, ..Default::default() }
    }

    pub fn update(&mut self, trace: &EogTrace, now: u64) -> Result<EogUpdate, DecodeError> {
        let reading = decode_eog(trace, now, &self.cfg)?;
        let mut emitted = None;

        if let Some((dir, start)) = reading.gaze_run {
            // a trimmed trace can move the apparent start forward; same direction
            // with no interruption observed is still the same run
            let same_run = self.fired_run.is_some_and(|(d, s)| d == dir && s <= start);
            if !same_run {
                self.fired_run = None;
            }
            if reading.dwell_command.is_some() && self.fired_run.is_none() {
                self.fired_run = Some((dir, start));
                emitted = Some(dir);
            }
        } else {
            self.fired_run = None;
        }

        if let Some(b) = reading.double_blink_at {
            if self.last_blink_pair.is_none_or(|prev| b > prev) {
                self.last_blink_pair = Some(b);
                emitted = Some(MotionDirection::Stop);
            }
        }

        if emitted.is_some() {
            self.held = emitted;
        }
        Ok(EogUpdate { eog_angle: reading.eog_angle, command: self.held, emitted })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DT: u64 = 10;

    /// Both channels sampled every 10 ms from 0 to `end` inclusive.
    fn scripted(end: u64, h: impl Fn(u64) -> f64, v: impl Fn(u64) -> f64) -> EogTrace {
        let mut tr = EogTrace::default();
        for t in (0..=end).step_by(DT as usize) {
            tr.push(EogSample { t, potential: h(t), channel: EogChannel::Horizontal });
            tr.push(EogSample { t, potential: v(t), channel: EogChannel::Vertical });
        }
        tr
    }

    #[test]
    fn flat_trace_is_neutral() {
        let r = decode_eog(&scripted(1000, |_| 0.0, |_| 0.0), 1000, &EogConfig::default()).unwrap();
        assert_eq!(r.eog_angle, 0.0);
        assert_eq!(r.eog_command, None);
        assert!(r.blink_events.is_empty());
    }

    #[test]
    fn short_history_is_rejected() {
        let err = decode_eog(&scripted(150, |_| 0.0, |_| 0.0), 150, &EogConfig::default()).unwrap_err();
        assert_eq!(err, DecodeError::InsufficientHistory { needed_ms: 200, have_ms: 150 });
    }

    #[test]
    fn forward_stare_emits_once_after_dwell() {
        let trace = scripted(4200, |_| 0.0, |_| 0.26);
        let cfg = EogConfig::default();
        let r = decode_eog(&trace, 4200, &cfg).unwrap();
        assert!((r.eog_angle - 13.0).abs() < 1e-9);
        assert_eq!(r.eog_command, Some(MotionDirection::Forward));

        let mut dec = EogDecoder::new(cfg);
        let mut emissions = Vec::new();
        for now in (200..=4200).step_by(20) {
            let u = dec.update(&trace, now).unwrap();
            if let Some(e) = u.emitted {
                emissions.push((now, e));
            }
            if now < 4000 {
                assert_eq!(u.command, None, "no command before dwell at {now}");
            }
        }
        assert_eq!(emissions, vec![(4000, MotionDirection::Forward)]);
    }

    #[test]
    fn horizontal_gaze_maps_to_turns() {
        let r = decode_eog(&scripted(4500, |_| -0.3, |_| 0.0), 4500, &EogConfig::default()).unwrap();
        assert_eq!(r.dwell_command, Some(MotionDirection::Left));
        let r = decode_eog(&scripted(4500, |_| 0.3, |_| 0.0), 4500, &EogConfig::default()).unwrap();
        assert_eq!(r.dwell_command, Some(MotionDirection::Right));
        let r = decode_eog(&scripted(4500, |_| 0.0, |_| -0.3), 4500, &EogConfig::default()).unwrap();
        assert_eq!(r.dwell_command, Some(MotionDirection::Backward));
    }

    #[test]
    fn interrupted_stare_restarts_dwell() {
        let trace = scripted(6000, |_| 0.0, |t| if (3000..3100).contains(&t) { 0.0 } else { 0.26 });
        let r = decode_eog(&trace, 6000, &EogConfig::default()).unwrap();
        assert_eq!(r.dwell_command, None);
        let r = decode_eog(&scripted(7200, |_| 0.0, |t| if (3000..3100).contains(&t) { 0.0 } else { 0.26 }), 7200, &EogConfig::default()).unwrap();
        assert_eq!(r.dwell_command, Some(MotionDirection::Forward));
    }

    fn pulse(t: u64, at: u64, width: u64) -> f64 {
        if (at..at + width).contains(&t) { 0.5 } else { 0.0 }
    }

    #[test]
    fn double_blink_stops() {
        let trace = scripted(2000, |_| 0.0, |t| pulse(t, 300, 150) + pulse(t, 900, 150));
        let r = decode_eog(&trace, 2000, &EogConfig::default()).unwrap();
        assert_eq!(r.blink_events.len(), 2);
        assert_eq!(r.blink_events[1].onset_ms - r.blink_events[0].onset_ms, 600);
        assert_eq!(r.eog_command, Some(MotionDirection::Stop));
    }

    #[test]
    fn distant_blinks_do_not_stop() {
        let trace = scripted(3000, |_| 0.0, |t| pulse(t, 300, 150) + pulse(t, 1400, 150));
        let r = decode_eog(&trace, 3000, &EogConfig::default()).unwrap();
        assert_eq!(r.blink_events.len(), 2);
        assert_eq!(r.eog_command, None);
    }

    #[test]
    fn long_pulse_is_not_a_blink() {
        let trace = scripted(3000, |_| 0.0, |t| pulse(t, 300, 600) + pulse(t, 1000, 100));
        let r = decode_eog(&trace, 3000, &EogConfig::default()).unwrap();
        assert_eq!(r.blink_events.len(), 1);
        assert_eq!(r.double_blink_at, None);
    }

    #[test]
    fn decoder_holds_then_blinks_to_stop() {
        let cfg = EogConfig::default();
        // forward stare from 0, double blink starting at 5000
        let v = |t: u64| if t < 4800 { 0.26 } else { pulse(t, 5000, 150) + pulse(t, 5500, 150) };
        let trace = scripted(6000, |_| 0.0, v);
        let mut dec = EogDecoder::new(cfg);
        let mut emissions = Vec::new();
        for now in (200..=6000).step_by(20) {
            if let Some(e) = dec.update(&trace, now).unwrap().emitted {
                emissions.push(e);
            }
        }
        assert_eq!(emissions, vec![MotionDirection::Forward, MotionDirection::Stop]);
    }

    #[test]
    fn baseline_is_subtracted() {
        let cfg = EogConfig { baseline_vertical_mv: 0.7, ..Default::default() };
        let r = decode_eog(&scripted(1000, |_| 0.0, |_| 0.7), 1000, &cfg).unwrap();
        assert!(r.eog_angle.abs() < 1e-9);
    }
}
