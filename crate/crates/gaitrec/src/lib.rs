//! Host-side IMU activity-recognition pipeline: synthetic recording
//! generation, sliding-window spectral features, a small dense classifier
//! trained from scratch, k-means anomaly scoring, int8 quantized export,
//! and a streaming inference engine with a serial-monitor text format.
//!
//! Everything downstream of a seed is deterministic: the same seed yields
//! byte-identical artifacts whether driven through the library API or the
//! `gaitrec` binary.

pub mod anomaly;
pub mod cli;
pub mod dataset;
pub mod deploy;
pub mod features;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod windowing;
