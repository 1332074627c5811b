//! Encryption cost per frame, in-process delivery round trip, and the
//! wall-clock period of a paced control loop.
//!
//!     cargo run --release --example measure_overheads [-- SECONDS]

use wheelsim::monitor::{MonitorService, ServiceConfig, SystemClock};
use wheelsim::telemetry::measure_overheads;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let secs: u64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(5);
    let dir = tempfile_dir()?;
    let key = [9; 16];
    let service = MonitorService::open(ServiceConfig::new(&dir), key, Box::new(SystemClock))?;
    let mut transport = &service;
    let o = measure_overheads(1_000, secs * 1_000, true, Some((&mut transport, key, 1)))?;
    println!("encrypt {:.2} µs/frame; delivery {:.3} ms", o.encrypt_us, o.rtt_ms.unwrap_or(f64::NAN));
    let l = &o.loop_ms;
    println!("loop: {} ticks, period {:.3} ± {:.3} ms (min {:.3}, max {:.3})", l.ticks, l.mean_ms, l.std_ms, l.min_ms, l.max_ms);
    println!("{}", o.note);
    std::fs::remove_dir_all(dir)?;
    Ok(())
}

fn tempfile_dir() -> std::io::Result<std::path::PathBuf> {
    let d = std::env::temp_dir().join(format!("wheelsim-overheads-{}", std::process::id()));
    std::fs::create_dir_all(&d)?;
    Ok(d)
}
