use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{arbitrate, ArbitrationState, ControlInputs, ModeId, MotionCommand, MotionDirection, TICK_MS};

/// What an input source produced for one tick.
#[derive(Debug, Clone, PartialEq)]
pub enum SourceTick {
    Snapshot(ControlInputs),
    Missing,
    Exhausted,
}

pub trait InputSource {
    /// Called once per tick with the tick's simulated time.
    fn poll(&mut self, t_ms: u64) -> SourceTick;
}

impl<F> InputSource for F
where
    F: FnMut(u64) -> SourceTick,
{
    fn poll(&mut self, t_ms: u64) -> SourceTick {
        self(t_ms)
    }
}

/// Replays a recorded sequence of snapshots against the tick clock.
///
/// A tick sees the newest snapshot stamped in `(t - tick, t]`; if there is
/// none the tick is reported as missing. Once every snapshot has been
/// consumed the source is exhausted.
#[derive(Debug, Clone)]
pub struct TraceSource {
    snapshots: Vec<ControlInputs>,
    next: usize,
    tick_ms: u64,
}

impl TraceSource {
    pub fn new(mut snapshots: Vec<ControlInputs>) -> Self {
        snapshots.sort_by_key(|s| s.timestamp);
        Self { snapshots, next: 0, tick_ms: TICK_MS }
    }

    /// Parse a JSON Lines trace, one [`ControlInputs`] object per line.
    pub fn from_jsonl(text: &str) -> Result<Self, serde_json::Error> {
        let snapshots = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<Result<Vec<ControlInputs>, _>>()?;
        Ok(Self::new(snapshots))
    }
}

impl InputSource for TraceSource {
    fn poll(&mut self, t_ms: u64) -> SourceTick {
        if self.next >= self.snapshots.len() {
            return SourceTick::Exhausted;
        }
        let mut latest = None;
        while self.next < self.snapshots.len() && self.snapshots[self.next].timestamp <= t_ms {
            latest = Some(self.next);
            self.next += 1;
        }
        match latest {
            Some(i) if self.snapshots[i].timestamp + self.tick_ms > t_ms => SourceTick::Snapshot(self.snapshots[i].clone()),
            _ => SourceTick::Missing,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoopConfig {
    pub tick_ms: u64,
    /// Stop after this much simulated time; `None` runs until the source is exhausted.
    pub duration_ms: Option<u64>,
    /// Pace ticks against the wall clock.
    pub realtime: bool,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self { tick_ms: TICK_MS, duration_ms: None, realtime: false }
    }
}

/// One emitted (mode, command) pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TickOutput {
    pub t_ms: u64,
    pub mode: ModeId,
    pub command: MotionCommand,
    pub safe_halt: bool,
}

#[derive(Serialize)]
struct TimelineLine {
    t_ms: u64,
    mode: ModeId,
    direction: MotionDirection,
    speed: f64,
}

impl TickOutput {
    /// One line of the output timeline: `{t_ms, mode, direction, speed}`.
    pub fn to_timeline_json(&self) -> String {
        serde_json::to_string(&TimelineLine {
            t_ms: self.t_ms,
            mode: self.mode,
            direction: self.command.direction(),
            speed: self.command.speed(),
        })
        .expect("timeline line serializes")
    }
}

/// The fixed-period control loop. Iterating yields one [`TickOutput`] per tick.
pub struct ControlLoop<S> {
    source: S,
    state: ArbitrationState,
    config: LoopConfig,
    tick: u64,
    previous: Option<ControlInputs>,
    consecutive_misses: u32,
    started: Option<Instant>,
    finished: bool,
}

impl<S: InputSource> ControlLoop<S> {
    pub fn new(source: S, config: LoopConfig) -> Self {
        Self::with_state(source, config, ArbitrationState::default())
    }

    pub fn with_state(source: S, config: LoopConfig, state: ArbitrationState) -> Self {
        Self {
            source,
            state,
            config,
            tick: 0,
            previous: None,
            consecutive_misses: 0,
            started: None,
            finished: false,
        }
    }

    pub fn state(&self) -> ArbitrationState {
        self.state
    }

    /// Mutable access for operator actions between ticks (mode buttons, latch clear).
    pub fn state_mut(&mut self) -> &mut ArbitrationState {
        &mut self.state
    }

    pub fn source_mut(&mut self) -> &mut S {
        &mut self.source
    }

    fn pace(&mut self, t_ms: u64) {
        let start = *self.started.get_or_insert_with(Instant::now);
        let deadline = start + Duration::from_millis(t_ms);
        let now = Instant::now();
        if deadline > now {
            std::thread::sleep(deadline - now);
        }
    }
}

impl<S: InputSource> Iterator for ControlLoop<S> {
    type Item = TickOutput;

    fn next(&mut self) -> Option<TickOutput> {
        if self.finished {
            return None;
        }
        let t_ms = self.tick * self.config.tick_ms;
        if self.config.duration_ms.is_some_and(|d| t_ms >= d) {
            self.finished = true;
            return None;
        }
        if self.config.realtime {
            self.pace(t_ms);
        }

        let inputs = match self.source.poll(t_ms) {
            SourceTick::Exhausted => {
                self.finished = true;
                return None;
            }
            SourceTick::Snapshot(mut s) => {
                self.consecutive_misses = 0;
                s.timestamp = t_ms;
                self.previous = Some(s.clone());
                s
            }
            SourceTick::Missing => {
                self.consecutive_misses += 1;
                match (&self.previous, self.consecutive_misses) {
                    (Some(prev), 1) => ControlInputs { timestamp: t_ms, ..prev.clone() },
                    // second consecutive miss (or nothing to repeat): fail safe to idle
                    _ => ControlInputs::idle(t_ms),
                }
            }
        };

        let (mode, command, state) = arbitrate(&inputs, self.state);
        self.state = state;
        self.tick += 1;
        Some(TickOutput { t_ms, mode, command, safe_halt: state.safe_halt })
    }
}

/// Run the loop to completion and collect the emissions.
pub fn run_loop<S: InputSource>(source: S, config: LoopConfig) -> Vec<TickOutput> {
    ControlLoop::new(source, config).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant(inputs: ControlInputs) -> impl FnMut(u64) -> SourceTick {
        move |_| SourceTick::Snapshot(inputs.clone())
    }

    #[test]
    fn one_second_is_fifty_ticks() {
        let out = run_loop(constant(ControlInputs::default()), LoopConfig { duration_ms: Some(1000), ..Default::default() });
        assert_eq!(out.len(), 50);
        assert!(out.iter().all(|o| o.mode == ModeId::Stop));
        assert_eq!(out.last().unwrap().t_ms, 980);
    }

    #[test]
    fn scripted_fall_latches_from_tick_twenty() {
        let source = |t: u64| {
            SourceTick::Snapshot(ControlInputs {
                voice_ready: true,
                voice_command: Some(MotionDirection::Forward),
                fall_flag: t == 400,
                ..Default::default()
            })
        };
        let out = run_loop(source, LoopConfig { duration_ms: Some(2000), ..Default::default() });
        for (i, o) in out.iter().enumerate() {
            if i < 20 {
                assert_eq!(o.mode, ModeId::Voice, "tick {i}");
            } else {
                assert_eq!(o.mode, ModeId::Stop, "tick {i}");
                assert!(o.safe_halt);
            }
        }
    }

    #[test]
    fn missing_snapshot_repeats_once_then_stops() {
        let moving = ControlInputs { voice_ready: true, voice_command: Some(MotionDirection::Left), ..Default::default() };
        let source = move |t: u64| match t {
            0 | 20 => SourceTick::Snapshot(moving.clone()),
            40 | 60 | 80 => SourceTick::Missing,
            100 => SourceTick::Snapshot(moving.clone()),
            _ => SourceTick::Exhausted,
        };
        let modes: Vec<_> = run_loop(source, LoopConfig::default()).iter().map(|o| o.mode).collect();
        assert_eq!(
            modes,
            vec![ModeId::Voice, ModeId::Voice, ModeId::Voice, ModeId::Stop, ModeId::Stop, ModeId::Voice]
        );
    }

    #[test]
    fn exhausted_source_ends_stream() {
        let mut n = 0;
        let source = move |_t: u64| {
            n += 1;
            if n > 3 { SourceTick::Exhausted } else { SourceTick::Snapshot(ControlInputs::default()) }
        };
        assert_eq!(run_loop(source, LoopConfig::default()).len(), 3);
    }

    #[test]
    fn trace_source_replays_jsonl() {
        let text = (0..5)
            .map(|i| format!(r#"{{"timestamp":{},"gesture_ok":true,"gesture_command":"Right"}}"#, i * 20))
            .collect::<Vec<_>>()
            .join("\n");
        let out = run_loop(TraceSource::from_jsonl(&text).unwrap(), LoopConfig::default());
        assert_eq!(out.len(), 5);
        assert!(out.iter().all(|o| o.mode == ModeId::Gesture && o.command.direction() == MotionDirection::Right));
        assert_eq!(
            out[0].to_timeline_json(),
            r#"{"t_ms":0,"mode":"Gesture","direction":"Right","speed":0.5}"#
        );
    }

    #[test]
    fn trace_gap_counts_as_missing() {
        let snaps = vec![
            ControlInputs { timestamp: 0, ..Default::default() },
            ControlInputs { timestamp: 100, ..Default::default() },
        ];
        let mut src = TraceSource::new(snaps);
        assert!(matches!(src.poll(0), SourceTick::Snapshot(_)));
        assert_eq!(src.poll(20), SourceTick::Missing);
        assert!(matches!(src.poll(100), SourceTick::Snapshot(_)));
        assert_eq!(src.poll(120), SourceTick::Exhausted);
    }
}
