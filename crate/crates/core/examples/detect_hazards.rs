//! Score the fall and convulsion detectors on the synthetic labelled corpus.
//!
//!     cargo run --example detect_hazards [-- OUT_DIR]   # optionally write the corpus

use wheelsim::detectors::{corpus, detect_heart_attack, DetectorConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = DetectorConfig::default();
    let traces = corpus::generate(7);
    if let Some(dir) = std::env::args().nth(1) {
        corpus::write(std::path::Path::new(&dir), &traces)?;
        println!("wrote {} traces to {dir}", traces.len());
    }
    let score = corpus::evaluate(&traces, &cfg);
    for (name, c) in [("fall", &score.fall), ("convulsion", &score.convulsion)] {
        println!("{name:<10} tp {} fp {} fn {}  precision {:.3} recall {:.3}", c.tp, c.fp, c.fn_, c.precision(), c.recall());
    }
    let flagged: Vec<u32> = (0..=300).filter(|hr| detect_heart_attack(*hr as f64, &cfg)).collect();
    println!("heart-attack screen fires on {} of 301 integer rates (first normal: {})", flagged.len(), (0..=300).find(|hr| !flagged.contains(hr)).unwrap());
    Ok(())
}
