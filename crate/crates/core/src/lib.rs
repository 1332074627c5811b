//! Software twin of a multi-modal assistive wheelchair controller: input
//! decoders, priority arbitration with a safe-halt latch, vitals calibration
//! and hazard detectors, authenticated telemetry, a monitoring service, and a
//! simulation harness with agreement/accuracy analytics.

pub mod analytics;
pub mod arbitration;
pub mod calibration;
pub mod decoders;
pub mod detectors;
pub mod monitor;
pub mod sim;
pub mod telemetry;
