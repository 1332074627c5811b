//! Run a bundled (or user-supplied) scenario through the whole stack and
//! summarise the artifacts.
//!
//!     cargo run --example run_scenario -- fall_demo /tmp/fall_demo

use wheelsim::sim::{run_scenario, RunOptions, Scenario};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let name = std::env::args().nth(1).unwrap_or_else(|| "tour".into());
    let out = std::env::args().nth(2).map(Into::into).unwrap_or_else(|| std::env::temp_dir().join(format!("wheelsim-{name}")));
    let scenario = match Scenario::bundled(&name) {
        Some(s) => s,
        None => Scenario::from_json(&std::fs::read_to_string(&name)?)?,
    };
    let r = run_scenario(&scenario, &out, &RunOptions::default())?;
    let m = &r.metrics;
    println!("{}: {} ticks, {:.2} m travelled, final heading {:.2} rad", m.scenario, m.ticks, m.distance_m, m.final_pose.heading);
    println!("mode ticks {:?}; latched for {} ticks; latch violations {}", m.mode_ticks, m.safe_halt_ticks, m.latch_violations);
    for h in &m.hazards {
        println!("hazard {:?} at {} ms: flagged {:?}, alert after {:?} ms ({:?})", h.kind, h.injected_t_ms, h.flagged_t_ms, h.alert_latency_ms, h.outbox_file);
    }
    for c in &m.clear_attempts {
        println!("clear at {} ms: {}", c.t_ms, c.detail);
    }
    println!("upload: {:?}", m.upload);
    println!("artifacts in {}", out.display());
    Ok(())
}
