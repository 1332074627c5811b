//! Two-point calibration of each bundled sensor and the resulting error
//! against the reference profile.

use wheelsim::analytics::{bland_altman, PairedReadings};
use wheelsim::calibration::{two_point_fit, SensorFixtureSet, VitalKind};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sensors = SensorFixtureSet::bundled();
    for kind in VitalKind::ALL {
        let fx = sensors.get(kind).expect("bundled");
        let fit = two_point_fit(fx.channel.clone(), fx.anchors[0], fx.anchors[1])?;
        let r = bland_altman(&PairedReadings::new(Some(kind), fx.reference_pairs()?))?;
        println!(
            "{:<5} gain {:.6} offset {:+.4}  n={} rmse {:.3} {}  bias {:+.3}  loa [{:+.3}, {:+.3}]",
            fx.channel, fit.gain, fit.offset, r.n, r.rmse, kind.unit(), r.bias, r.loa_low, r.loa_high
        );
    }
    Ok(())
}
