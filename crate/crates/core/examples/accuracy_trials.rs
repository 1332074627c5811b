//! Command-accuracy trials under the reverse-fitted noise profile, printed in
//! the published table layout.

use wheelsim::analytics::accuracy_table;
use wheelsim::arbitration::{ModeId, MotionDirection};
use wheelsim::sim::trials::{run_trials, NoiseFixture};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let report = accuracy_table(&NoiseFixture::paper().run()?)?;
    print!("{}", report.to_table_csv());
    println!("overall mean {:.1}%", report.overall_mean_pct);
    println!("{}", report.note);

    // the same cell with a noisier channel
    let log = run_trials(ModeId::Eog, MotionDirection::Forward, 200, 0.2, 42)?;
    let c = &log.cells[0];
    println!("EOG/Forward at 20% noise: {}/{} ({} failures)", c.successes, c.trials, c.failures());
    Ok(())
}
