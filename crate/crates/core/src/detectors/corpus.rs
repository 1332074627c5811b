//! Synthetic labeled accelerometer corpus for the fall and convulsion detectors.
//!
//! On disk the corpus is a directory of `t_ms,channel,value` CSV traces plus a
//! `manifest.json` listing `{file, label, expected_events}` for each.

use std::f64::consts::TAU;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{ConvulsionMonitor, DetectorConfig, FallMonitor};
use crate::decoders::{read_accel_csv, write_accel_csv, AccelSample};

pub const SAMPLE_MS: u64 = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusLabel {
    Fall,
    Convulsion,
    Negative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub file: String,
    pub label: CorpusLabel,
    pub expected_events: u32,
    /// Heart rate presented to the convulsion corroboration gate.
    #[serde(default = "default_hr")]
    pub hr: f64,
    #[serde(default)]
    pub description: String,
}

fn default_hr() -> f64 {
    72.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub note: String,
    pub entries: Vec<CorpusEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledTrace {
    pub entry: CorpusEntry,
    pub samples: Vec<AccelSample>,
}

struct Builder {
    rng: ChaCha8Rng,
    noise: Normal<f64>,
}

impl Builder {
    fn jitter(&mut self) -> f64 {
        self.noise.sample(&mut self.rng)
    }

    fn sample(&mut self, t: u64, ax: f64, ay: f64, az: f64) -> AccelSample {
        let r = |v: f64| (v * 1e4).round() / 1e4;
        let (nx, ny, nz) = (self.jitter(), self.jitter(), self.jitter());
        AccelSample::new(r(ax + nx), r(ay + ny), r(az + nz), t)
    }

    fn rest(&mut self, from: u64, to: u64, out: &mut Vec<AccelSample>) {
        for t in (from..to).step_by(SAMPLE_MS as usize) {
            out.push(self.sample(t, 0.0, 0.0, 1.0));
        }
    }

    fn fall(&mut self) -> Vec<AccelSample> {
        let mut out = Vec::new();
        let onset = self.rng.gen_range(75..150) * SAMPLE_MS;
        let ff_ms = self.rng.gen_range(8..18) * SAMPLE_MS;
        let ff_level = self.rng.gen_range(0.02..0.18);
        let gap_ms = self.rng.gen_range(0..12) * SAMPLE_MS;
        let impact = self.rng.gen_range(2.9..5.0);
        self.rest(0, onset, &mut out);
        let mut t = onset;
        while t < onset + ff_ms {
            out.push(self.sample(t, 0.0, 0.0, ff_level));
            t += SAMPLE_MS;
        }
        while t < onset + ff_ms + gap_ms {
            let tumble = self.rng.gen_range(0.6..1.0);
            out.push(self.sample(t, tumble * 0.6, 0.0, tumble * 0.8));
            t += SAMPLE_MS;
        }
        out.push(self.sample(t, impact * 0.8, 0.1, impact * 0.6));
        t += SAMPLE_MS;
        // lying on the side
        while t < 8000 {
            out.push(self.sample(t, 1.0, 0.0, 0.05));
            t += SAMPLE_MS;
        }
        out
    }

    fn shaking(&mut self, freq: f64, p2p: f64, from: u64, to: u64, axis: usize, out: &mut Vec<AccelSample>) {
        for t in (from..to).step_by(SAMPLE_MS as usize) {
            let osc = p2p / 2.0 * (TAU * freq * (t - from) as f64 / 1000.0).sin();
            let mut a = [0.0, 0.0, 1.0];
            a[axis] += osc;
            out.push(self.sample(t, a[0], a[1], a[2]));
        }
    }

    fn convulsion(&mut self, freq: f64, p2p: f64) -> Vec<AccelSample> {
        let mut out = Vec::new();
        let onset = self.rng.gen_range(50..100) * SAMPLE_MS;
        let dur = self.rng.gen_range(330..500) * SAMPLE_MS;
        let axis = self.rng.gen_range(0..3);
        self.rest(0, onset, &mut out);
        self.shaking(freq, p2p, onset, onset + dur, axis, &mut out);
        self.rest(onset + dur, onset + dur + 3000, &mut out);
        out
    }
}

/// Build the corpus: 24 falls, 12 convulsions, 36 negatives.
pub fn generate(seed: u64) -> Vec<LabeledTrace> {
    let mut b = Builder { rng: ChaCha8Rng::seed_from_u64(seed), noise: Normal::new(0.0, 0.02).expect("sigma") };
    let mut out = Vec::new();
    let mut push = |label: CorpusLabel, name: String, hr: f64, description: &str, samples: Vec<AccelSample>| {
        let expected_events = u32::from(label != CorpusLabel::Negative);
        out.push(LabeledTrace {
            entry: CorpusEntry { file: format!("{name}.csv"), label, expected_events, hr, description: description.into() },
            samples,
        });
    };

    for i in 0..24 {
        let s = b.fall();
        push(CorpusLabel::Fall, format!("fall_{i:02}"), 85.0, "free fall then impact, then lying still", s);
    }
    for i in 0..12 {
        let freq = b.rng.gen_range(3.0..6.5);
        let p2p = b.rng.gen_range(0.7..1.2);
        let hr = b.rng.gen_range(105.0..140.0);
        let s = b.convulsion(freq, p2p);
        push(CorpusLabel::Convulsion, format!("convulsion_{i:02}"), hr, "sustained in-band shaking with raised heart rate", s);
    }
    for i in 0..10 {
        let amp = b.rng.gen_range(0.1..0.2);
        let freq = b.rng.gen_range(1.5..2.2);
        let hr = if i % 3 == 0 { 110.0 } else { b.rng.gen_range(75.0..95.0) };
        let mut s = Vec::new();
        for t in (0..10_000).step_by(SAMPLE_MS as usize) {
            let z = 1.0 + amp * (TAU * freq * t as f64 / 1000.0).sin();
            s.push(b.sample(t, 0.05, 0.0, z));
        }
        push(CorpusLabel::Negative, format!("walking_{i:02}"), hr, "walking-induced vibration within 0.7..1.3 g", s);
    }
    for i in 0..6 {
        let mut s = Vec::new();
        let axis = i % 3;
        b.shaking(0.5, 0.8, 0, 12_000, axis, &mut s);
        push(CorpusLabel::Negative, format!("sway_{i:02}"), 90.0 + 5.0 * i as f64, "0.5 Hz chair sway", s);
    }
    for i in 0..5 {
        let mut s = Vec::new();
        let at = b.rng.gen_range(100..200) * SAMPLE_MS;
        b.rest(0, at, &mut s);
        let peak = b.rng.gen_range(1.8..2.2);
        s.push(b.sample(at, 0.2, 0.0, peak));
        b.rest(at + SAMPLE_MS, 8000, &mut s);
        push(CorpusLabel::Negative, format!("sitdown_{i:02}"), 80.0, "sitting down hard: bump without free fall", s);
    }
    for i in 0..5 {
        let mut s = Vec::new();
        let at = b.rng.gen_range(100..200) * SAMPLE_MS;
        b.rest(0, at, &mut s);
        for k in 0..3 {
            s.push(b.sample(at + k * SAMPLE_MS, 0.0, 0.0, 0.15));
        }
        s.push(b.sample(at + 3 * SAMPLE_MS, 0.3, 0.0, 3.2));
        b.rest(at + 4 * SAMPLE_MS, 8000, &mut s);
        push(CorpusLabel::Negative, format!("dip_{i:02}"), 80.0, "60 ms dip then jolt: free fall too short", s);
    }
    for i in 0..4 {
        let mut s = Vec::new();
        let at = b.rng.gen_range(100..200) * SAMPLE_MS;
        b.rest(0, at, &mut s);
        for k in 0..10 {
            s.push(b.sample(at + k * SAMPLE_MS, 0.0, 0.0, 0.1));
        }
        for k in 10..30 {
            s.push(b.sample(at + k * SAMPLE_MS, 0.0, 0.0, 0.1 + 0.07 * (k - 9) as f64));
        }
        b.rest(at + 30 * SAMPLE_MS, 8000, &mut s);
        push(CorpusLabel::Negative, format!("drop_{i:02}"), 80.0, "free fall with a soft landing, no impact", s);
    }
    for i in 0..6 {
        let freq = b.rng.gen_range(3.0..6.0);
        let s = b.convulsion(freq, 0.9);
        push(CorpusLabel::Negative, format!("shaking_normal_hr_{i:02}"), 80.0 + 2.0 * i as f64, "in-band shaking without heart-rate corroboration", s);
    }
    out
}

pub fn write(dir: &Path, traces: &[LabeledTrace]) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    for tr in traces {
        std::fs::write(dir.join(&tr.entry.file), write_accel_csv(&tr.samples))?;
    }
    let manifest = Manifest {
        note: "SYNTHETIC detector corpus generated from a fixed seed".into(),
        entries: traces.iter().map(|t| t.entry.clone()).collect(),
    };
    std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest).expect("manifest serializes"))
}

pub fn load(dir: &Path) -> Result<Vec<LabeledTrace>, Box<dyn std::error::Error + Send + Sync>> {
    let manifest: Manifest = serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json"))?)?;
    manifest
        .entries
        .into_iter()
        .map(|entry| {
            let samples = read_accel_csv(&std::fs::read_to_string(dir.join(&entry.file))?)?;
            Ok(LabeledTrace { entry, samples })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct ClassScore {
    pub tp: u32,
    pub fp: u32,
    pub fn_: u32,
}

impl ClassScore {
    pub fn precision(&self) -> f64 {
        if self.tp + self.fp == 0 { 1.0 } else { self.tp as f64 / (self.tp + self.fp) as f64 }
    }

    pub fn recall(&self) -> f64 {
        if self.tp + self.fn_ == 0 { 1.0 } else { self.tp as f64 / (self.tp + self.fn_) as f64 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CorpusScore {
    pub fall: ClassScore,
    pub convulsion: ClassScore,
    /// Files whose event count differs from the manifest.
    pub count_mismatches: Vec<String>,
}

/// Events per trace when replayed as overlapping windows (6 s long, 1 s step).
pub fn replay(trace: &LabeledTrace, cfg: &DetectorConfig) -> (u32, u32) {
    let mut falls = FallMonitor::new(cfg.fall);
    let mut convulsions = ConvulsionMonitor::new(cfg.convulsion, cfg.fall);
    let (mut nf, mut nc) = (0, 0);
    let Some(last) = trace.samples.last().map(|s| s.t) else { return (0, 0) };
    let mut end = 1000;
    loop {
        let window: Vec<AccelSample> =
            trace.samples.iter().filter(|s| s.t < end && s.t + 6000 >= end).cloned().collect();
        nf += falls.process_window(&window).len() as u32;
        nc += u32::from(convulsions.process_window(&window, trace.entry.hr).is_some());
        if end > last {
            break;
        }
        end += 1000;
    }
    (nf, nc)
}

pub fn evaluate(traces: &[LabeledTrace], cfg: &DetectorConfig) -> CorpusScore {
    let mut score = CorpusScore::default();
    for tr in traces {
        let (nf, nc) = replay(tr, cfg);
        let label = tr.entry.label;
        let tally = |class: &mut ClassScore, is_label: bool, predicted: bool| match (is_label, predicted) {
            (true, true) => class.tp += 1,
            (false, true) => class.fp += 1,
            (true, false) => class.fn_ += 1,
            (false, false) => {}
        };
        tally(&mut score.fall, label == CorpusLabel::Fall, nf > 0);
        tally(&mut score.convulsion, label == CorpusLabel::Convulsion, nc > 0);
        if nf + nc != tr.entry.expected_events {
            score.count_mismatches.push(format!("{} (falls {nf}, convulsions {nc})", tr.entry.file));
        }
    }
    score
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_sizes() {
        let c = generate(7);
        let count = |l| c.iter().filter(|t| t.entry.label == l).count();
        assert!(count(CorpusLabel::Fall) >= 20);
        assert!(count(CorpusLabel::Convulsion) >= 10);
        assert!(count(CorpusLabel::Negative) >= 30);
    }

    #[test]
    fn walking_stays_in_band() {
        for tr in generate(7).iter().filter(|t| t.entry.file.starts_with("walking")) {
            assert!(tr.samples.iter().all(|s| (0.7..=1.3).contains(&s.magnitude())), "{}", tr.entry.file);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        assert_eq!(generate(3), generate(3));
    }

    #[test]
    fn default_detectors_score_perfectly() {
        let score = evaluate(&generate(7), &DetectorConfig::default());
        assert!(score.count_mismatches.is_empty(), "{:?}", score.count_mismatches);
        assert_eq!((score.fall.fp, score.fall.fn_), (0, 0));
        assert_eq!((score.convulsion.fp, score.convulsion.fn_), (0, 0));
    }
}
