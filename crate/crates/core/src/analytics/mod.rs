//! Agreement statistics (Bland-Altman, RMSE) and command-accuracy tables,
//! with deterministic CSV / JSON / plot-data emitters.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arbitration::{ModeId, MotionDirection};
use crate::calibration::VitalKind;
use crate::sim::trials::TrialLog;

/// Column order of the published accuracy table.
pub const TABLE_MODALITIES: [ModeId; 4] = [ModeId::Gesture, ModeId::Voice, ModeId::Eog, ModeId::Joystick];

/// Published successes out of 100, rows Right, Left, Forward, Backward, Stop.
pub const PAPER_TABLE: [[u32; 4]; 5] = [
    [95, 90, 95, 100],
    [100, 95, 95, 100],
    [100, 100, 95, 100],
    [95, 95, 90, 95],
    [90, 100, 95, 95],
];

/// Accuracy figures quoted in the summary, which do not match the table means.
pub const ABSTRACT_ACCURACY: [(ModeId, f64); 3] = [(ModeId::Joystick, 99.0), (ModeId::Voice, 97.0), (ModeId::Gesture, 95.0)];

/// Limits-of-agreement multiplier for a 95% interval.
pub const LOA_Z: f64 = 1.96;

#[derive(Debug, Error)]
pub enum AnalyticsError {
    #[error("need at least {need} pairs, got {n}")]
    TooFewPairs { n: usize, need: usize },
    #[error("pair {index} is not finite")]
    NonFinite { index: usize },
    #[error("no trials for {modality}/{command}")]
    EmptyCell { modality: ModeId, command: MotionDirection },
    #[error("pairs csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("writing report: {0}")]
    Io(#[from] std::io::Error),
}

fn table_name(m: ModeId) -> &'static str {
    match m {
        ModeId::Eog => "Eye",
        other => other.as_str(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pair {
    pub module: f64,
    pub reference: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PairedReadings {
    pub kind: Option<VitalKind>,
    pub pairs: Vec<Pair>,
}

impl PairedReadings {
    pub fn new(kind: Option<VitalKind>, pairs: impl IntoIterator<Item = (f64, f64)>) -> Self {
        Self { kind, pairs: pairs.into_iter().map(|(module, reference)| Pair { module, reference }).collect() }
    }

    /// Parse a `module,reference` CSV.
    pub fn from_csv(text: &str, kind: Option<VitalKind>) -> Result<Self, AnalyticsError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let pairs = rdr.deserialize().collect::<Result<Vec<Pair>, _>>()?;
        Ok(Self { kind, pairs })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("module,reference\n");
        for p in &self.pairs {
            out.push_str(&format!("{},{}\n", p.module, p.reference));
        }
        out
    }

    fn differences(&self) -> Result<Vec<f64>, AnalyticsError> {
        self.pairs
            .iter()
            .enumerate()
            .map(|(index, p)| {
                let d = p.module - p.reference;
                if d.is_finite() { Ok(d) } else { Err(AnalyticsError::NonFinite { index }) }
            })
            .collect()
    }
}

/// Root mean square of module − reference.
pub fn rmse(pairs: &PairedReadings) -> Result<f64, AnalyticsError> {
    let d = pairs.differences()?;
    if d.is_empty() {
        return Err(AnalyticsError::TooFewPairs { n: 0, need: 1 });
    }
    Ok((d.iter().map(|x| x * x).sum::<f64>() / d.len() as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub kind: Option<VitalKind>,
    pub n: usize,
    /// Mean of module − reference.
    pub bias: f64,
    /// Sample standard deviation of the differences.
    pub sd: f64,
    pub loa_low: f64,
    pub loa_high: f64,
    pub rmse: f64,
    /// (module, reference) scatter points.
    pub scatter: Vec<[f64; 2]>,
    /// (pair mean, difference) points.
    pub bland_altman: Vec<[f64; 2]>,
}

pub fn bland_altman(pairs: &PairedReadings) -> Result<AgreementReport, AnalyticsError> {
    let d = pairs.differences()?;
    let n = d.len();
    if n < 2 {
        return Err(AnalyticsError::TooFewPairs { n, need: 2 });
    }
    let bias = d.iter().sum::<f64>() / n as f64;
    let sd = (d.iter().map(|x| (x - bias).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    Ok(AgreementReport {
        kind: pairs.kind,
        n,
        bias,
        sd,
        loa_low: bias - LOA_Z * sd,
        loa_high: bias + LOA_Z * sd,
        rmse: rmse(pairs)?,
        scatter: pairs.pairs.iter().map(|p| [p.module, p.reference]).collect(),
        bland_altman: pairs.pairs.iter().zip(&d).map(|(p, d)| [(p.module + p.reference) / 2.0, *d]).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyCell {
    pub modality: ModeId,
    pub command: MotionDirection,
    pub trials: u32,
    pub successes: u32,
    pub accuracy_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalityMean {
    pub modality: ModeId,
    pub mean_pct: f64,
}

/// One summary figure set against the table mean for the same modality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryCheck {
    pub modality: ModeId,
    pub summary_pct: f64,
    pub table_mean_pct: f64,
    pub measured_mean_pct: Option<f64>,
    pub agrees: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub cells: Vec<AccuracyCell>,
    pub modality_means: Vec<ModalityMean>,
    pub overall_mean_pct: f64,
    pub summary_checks: Vec<SummaryCheck>,
    pub note: String,
}

impl AccuracyReport {
    pub fn cell(&self, modality: ModeId, command: MotionDirection) -> Option<&AccuracyCell> {
        self.cells.iter().find(|c| c.modality == modality && c.command == command)
    }

    pub fn mean(&self, modality: ModeId) -> Option<f64> {
        self.modality_means.iter().find(|m| m.modality == modality).map(|m| m.mean_pct)
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Mean of a published table column.
pub fn paper_mean(modality: ModeId) -> Option<f64> {
    let col = TABLE_MODALITIES.iter().position(|m| *m == modality)?;
    Some(mean(&PAPER_TABLE.iter().map(|row| row[col] as f64).collect::<Vec<_>>()))
}

/// Per-cell accuracy, per-modality means over commands, overall mean over
/// modalities, and the summary-versus-table comparison.
pub fn accuracy_table(log: &TrialLog) -> Result<AccuracyReport, AnalyticsError> {
    let mut cells = Vec::new();
    let mut modality_means = Vec::new();
    for modality in TABLE_MODALITIES {
        let mut pcts = Vec::new();
        for command in MotionDirection::ALL {
            let Some(c) = log.cell(modality, command) else { continue };
            if c.trials == 0 {
                return Err(AnalyticsError::EmptyCell { modality, command });
            }
            let accuracy_pct = 100.0 * c.successes as f64 / c.trials as f64;
            pcts.push(accuracy_pct);
            cells.push(AccuracyCell { modality, command, trials: c.trials, successes: c.successes, accuracy_pct });
        }
        if !pcts.is_empty() {
            modality_means.push(ModalityMean { modality, mean_pct: mean(&pcts) });
        }
    }
    let overall_mean_pct = if modality_means.is_empty() { 0.0 } else { mean(&modality_means.iter().map(|m| m.mean_pct).collect::<Vec<_>>()) };
    let summary_checks: Vec<SummaryCheck> = ABSTRACT_ACCURACY
        .iter()
        .map(|&(modality, summary_pct)| {
            let table_mean_pct = paper_mean(modality).expect("summary modalities are table columns");
            SummaryCheck {
                modality,
                summary_pct,
                table_mean_pct,
                measured_mean_pct: modality_means.iter().find(|m| m.modality == modality).map(|m| m.mean_pct),
                agrees: (summary_pct - table_mean_pct).abs() < 1e-9,
            }
        })
        .collect();
    let mismatched: Vec<String> = summary_checks
        .iter()
        .filter(|c| !c.agrees)
        .map(|c| format!("{} {}% vs table mean {}%", c.modality, c.summary_pct, c.table_mean_pct))
        .collect();
    let note = if mismatched.is_empty() {
        "summary accuracy figures agree with the table means".into()
    } else {
        format!("DISCREPANCY: the published summary figures disagree with the accuracy-table column means ({}); this report reproduces the table.", mismatched.join("; "))
    };
    Ok(AccuracyReport { cells, modality_means, overall_mean_pct, summary_checks, note })
}

fn fmt_pct(x: f64) -> String {
    if x.fract() == 0.0 { format!("{x:.0}") } else { format!("{x:.2}") }
}

impl AccuracyReport {
    /// The published table layout: one row per command, success and accuracy per modality.
    pub fn to_table_csv(&self) -> String {
        let modalities: Vec<ModeId> = TABLE_MODALITIES.into_iter().filter(|m| self.mean(*m).is_some()).collect();
        let mut out = String::from("Command Name,Trial No.");
        for m in &modalities {
            out.push_str(&format!(",{0} Success,{0} Acc (%)", table_name(*m)));
        }
        out.push('\n');
        for command in MotionDirection::ALL {
            let row: Vec<Option<&AccuracyCell>> = modalities.iter().map(|m| self.cell(*m, command)).collect();
            let Some(trials) = row.iter().flatten().map(|c| c.trials).max() else { continue };
            out.push_str(&format!("{command},{trials}"));
            for c in row {
                match c {
                    Some(c) => out.push_str(&format!(",{},{}", c.successes, fmt_pct(c.accuracy_pct))),
                    None => out.push_str(",,"),
                }
            }
            out.push('\n');
        }
        out.push_str("Mean,");
        for m in &modalities {
            out.push_str(&format!(",,{}", fmt_pct(self.mean(*m).expect("filtered on presence"))));
        }
        out.push('\n');
        out
    }
}

impl AgreementReport {
    pub fn to_csv(&self) -> String {
        format!("bias,sd,loa_low,loa_high,rmse,n\n{},{},{},{},{},{}\n", self.bias, self.sd, self.loa_low, self.loa_high, self.rmse, self.n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
    PlotData,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            "plotdata" => Ok(ReportFormat::PlotData),
            other => Err(format!("unknown report format `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Report {
    Agreement(AgreementReport),
    Accuracy(AccuracyReport),
}

fn stem(report: &Report) -> String {
    match report {
        Report::Agreement(a) => format!("agreement_{}", a.kind.map_or("pairs", |k| k.channel())),
        Report::Accuracy(_) => "accuracy".into(),
    }
}

fn pretty(v: &impl Serialize) -> String {
    serde_json::to_string_pretty(v).expect("report serializes") + "\n"
}

/// Render a report to (file name, bytes) without touching the disk.
pub fn render_report(report: &Report, format: ReportFormat) -> (String, String) {
    let stem = stem(report);
    match (report, format) {
        (Report::Agreement(a), ReportFormat::Csv) => (format!("{stem}.csv"), a.to_csv()),
        (Report::Accuracy(a), ReportFormat::Csv) => (format!("{stem}.csv"), a.to_table_csv()),
        (Report::Agreement(a), ReportFormat::Json) => (format!("{stem}.json"), pretty(a)),
        (Report::Accuracy(a), ReportFormat::Json) => (format!("{stem}.json"), pretty(a)),
        (Report::Agreement(a), ReportFormat::PlotData) => {
            let (lo, hi) = a.scatter.iter().flatten().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(*v), h.max(*v)));
            let plot = serde_json::json!({
                "kind": a.kind.map(|k| k.channel()),
                "unit": a.kind.map(|k| k.unit()),
                "scatter": { "x_label": "module", "y_label": "reference", "points": a.scatter, "identity": [[lo, lo], [hi, hi]] },
                "bland_altman": { "x_label": "mean", "y_label": "module - reference", "points": a.bland_altman,
                                  "bias": a.bias, "loa_low": a.loa_low, "loa_high": a.loa_high },
            });
            (format!("{stem}_plot.json"), pretty(&plot))
        }
        (Report::Accuracy(a), ReportFormat::PlotData) => {
            let series: Vec<_> = a
                .modality_means
                .iter()
                .map(|m| {
                    let bars: Vec<_> = a.cells.iter().filter(|c| c.modality == m.modality).map(|c| serde_json::json!([c.command, c.accuracy_pct])).collect();
                    serde_json::json!({ "modality": table_name(m.modality), "mean": m.mean_pct, "bars": bars })
                })
                .collect();
            (format!("{stem}_plot.json"), pretty(&serde_json::json!({ "bar_chart": series, "note": a.note })))
        }
    }
}

/// Write each requested format under `dir`; returns the written paths.
pub fn emit_report(report: &Report, formats: &[ReportFormat], dir: &Path) -> Result<Vec<PathBuf>, AnalyticsError> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for f in formats {
        let (name, body) = render_report(report, *f);
        let path = dir.join(name);
        std::fs::write(&path, body)?;
        written.push(path);
    }
    Ok(written)
}

/// Bundled synthetic module-vs-reference pairs for one vital.
pub fn bundled_pairs(kind: VitalKind) -> PairedReadings {
    let text = match kind {
        VitalKind::HeartRate => include_str!("../../fixtures/pairs_hr.csv"),
        VitalKind::SpO2 => include_str!("../../fixtures/pairs_spo2.csv"),
        VitalKind::Temperature => include_str!("../../fixtures/pairs_temp.csv"),
    };
    PairedReadings::from_csv(text, Some(kind)).expect("bundled pairs parse")
}
