//! Rebuild the derived fixtures: the reverse-fitted trial-noise profile and
//! the module-vs-reference pair sets.
//!
//!     cargo run --example regenerate_fixtures

use std::path::Path;

use wheelsim::analytics::PairedReadings;
use wheelsim::calibration::{SensorFixtureSet, VitalKind};
use wheelsim::sim::trials::{NoiseFixture, TRIALS_PER_CELL};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");

    let noise = NoiseFixture::derive(TRIALS_PER_CELL);
    std::fs::write(dir.join("noise_paper.json"), serde_json::to_string_pretty(&noise)? + "\n")?;
    println!("noise_paper.json: {} cells", noise.cells.len());

    let sensors = SensorFixtureSet::bundled();
    for kind in VitalKind::ALL {
        let fx = sensors.get(kind).expect("every vital has a fixture");
        let pairs = PairedReadings::new(Some(kind), fx.reference_pairs()?);
        let name = format!("pairs_{}.csv", kind.channel());
        std::fs::write(dir.join(&name), pairs.to_csv())?;
        println!("{name}: {} pairs", pairs.pairs.len());
    }
    Ok(())
}
