//! Bland-Altman agreement for the bundled pair sets, emitted as CSV, JSON and
//! plot data.
//!
//!     cargo run --example agreement_analysis [-- OUT_DIR]

use wheelsim::analytics::{bland_altman, bundled_pairs, emit_report, Report, ReportFormat};
use wheelsim::calibration::VitalKind;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).map(Into::into).unwrap_or_else(|| std::env::temp_dir().join("wheelsim-agreement"));
    for kind in VitalKind::ALL {
        let r = bland_altman(&bundled_pairs(kind))?;
        println!("{:<5} n={} bias {:+.3} sd {:.3} loa [{:+.3}, {:+.3}] rmse {:.3} {}", kind.channel(), r.n, r.bias, r.sd, r.loa_low, r.loa_high, r.rmse, kind.unit());
        emit_report(&Report::Agreement(r), &[ReportFormat::Csv, ReportFormat::Json, ReportFormat::PlotData], &out)?;
    }
    println!("reports in {}", out.display());
    Ok(())
}
