//! Trace file readers: `t_ms,channel,value` CSV and the tab-separated voice corpus.

use std::collections::BTreeMap;

use serde::Deserialize;
use thiserror::Error;

use super::{AccelSample, EogChannel, EogSample, EogTrace};
use crate::arbitration::MotionDirection;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("line {line}: {msg}")]
    Invalid { line: usize, msg: String },
}

#[derive(Debug, Deserialize)]
struct Row {
    t_ms: u64,
    channel: String,
    value: f64,
}

fn rows(text: &str) -> Result<Vec<Row>, TraceError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    Ok(rdr.deserialize().collect::<Result<Vec<Row>, _>>()?)
}

pub fn read_eog_csv(text: &str) -> Result<EogTrace, TraceError> {
    let mut samples = Vec::new();
    for (i, row) in rows(text)?.into_iter().enumerate() {
        let channel = match row.channel.to_ascii_lowercase().as_str() {
            "h" | "horizontal" => EogChannel::Horizontal,
            "v" | "vertical" => EogChannel::Vertical,
            other => return Err(TraceError::Invalid { line: i + 2, msg: format!("unknown EOG channel `{other}`") }),
        };
        samples.push(EogSample { t: row.t_ms, potential: row.value, channel });
    }
    Ok(EogTrace::new(samples))
}

/// Accelerometer CSV: one row per axis per timestamp (`x`, `y`, `z`, in g).
pub fn read_accel_csv(text: &str) -> Result<Vec<AccelSample>, TraceError> {
    let mut by_t: BTreeMap<u64, [Option<f64>; 3]> = BTreeMap::new();
    for (i, row) in rows(text)?.into_iter().enumerate() {
        let axis = match row.channel.to_ascii_lowercase().as_str() {
            "x" | "ax" => 0,
            "y" | "ay" => 1,
            "z" | "az" => 2,
            other => return Err(TraceError::Invalid { line: i + 2, msg: format!("unknown accel axis `{other}`") }),
        };
        by_t.entry(row.t_ms).or_default()[axis] = Some(row.value);
    }
    by_t.into_iter()
        .map(|(t, axes)| match axes {
            [Some(ax), Some(ay), Some(az)] => Ok(AccelSample { ax, ay, az, t }),
            _ => Err(TraceError::Invalid { line: 0, msg: format!("t_ms={t} is missing an axis") }),
        })
        .collect()
}

/// Serialize accelerometer samples in the `t_ms,channel,value` layout.
pub fn write_accel_csv(samples: &[AccelSample]) -> String {
    let mut out = String::from("t_ms,channel,value\n");
    for s in samples {
        for (axis, v) in [("x", s.ax), ("y", s.ay), ("z", s.az)] {
            out.push_str(&format!("{},{},{}\n", s.t, axis, v));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoiceCase {
    pub utterance: String,
    pub expected: Option<MotionDirection>,
}

/// One utterance per line, expected label after a tab (`none` for out-of-lexicon).
pub fn read_voice_corpus(text: &str) -> Result<Vec<VoiceCase>, TraceError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|(i, l)| {
            let (utterance, label) = l
                .rsplit_once('\t')
                .ok_or_else(|| TraceError::Invalid { line: i + 1, msg: "missing tab-separated label".into() })?;
            let expected = match label.trim().to_ascii_lowercase().as_str() {
                "none" | "" => None,
                other => Some(other.parse().map_err(|msg| TraceError::Invalid { line: i + 1, msg })?),
            };
            Ok(VoiceCase { utterance: utterance.to_string(), expected })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accel_csv_round_trip() {
        let samples = vec![AccelSample::new(0.1, -0.2, 0.98, 0), AccelSample::new(0.0, 0.0, 1.0, 20)];
        assert_eq!(read_accel_csv(&write_accel_csv(&samples)).unwrap(), samples);
    }

    #[test]
    fn accel_csv_missing_axis() {
        assert!(read_accel_csv("t_ms,channel,value\n0,x,0\n0,y,0\n").is_err());
    }

    #[test]
    fn eog_csv_channels() {
        let tr = read_eog_csv("t_ms,channel,value\n0,h,0.1\n0,vertical,0.2\n").unwrap();
        assert_eq!(tr.samples.len(), 2);
        assert_eq!(tr.samples[1].channel, EogChannel::Vertical);
        assert!(read_eog_csv("t_ms,channel,value\n0,q,0.1\n").is_err());
    }

    #[test]
    fn voice_corpus_labels() {
        let cases = read_voice_corpus("forward\tforward\n  STOP \tstop\nhello\tnone\n").unwrap();
        assert_eq!(cases.len(), 3);
        assert_eq!(cases[1].expected, Some(MotionDirection::Stop));
        assert_eq!(cases[2].expected, None);
    }
}
