//! Discrete-event simulator for secondary-cell handover in an ultra-dense
//! millimeter-wave network.
//!
//! A UE moves along a street among mmWave secondary nodes (SNs) under an
//! LTE-class master node (MN) that anchors control signalling and data
//! forwarding. The dual-connection scheme keeps two SN legs alive and
//! switches or hands over based on reported SINRs; the single-connection
//! baseline keeps one leg with a classic better-neighbor TTT rule. Runs
//! are deterministic given (config, seed); sweeps reproduce the handover
//! rate, download completion time, and download failure ratio comparisons
//! across blockage densities and file sizes.

pub mod channel;
pub mod config;
pub mod dataplane;
pub mod engine;
pub mod error;
pub mod geometry;
pub mod metrics;
pub mod network;
pub mod protocol;
pub mod sim;
pub mod sweep;

pub use config::{ScenarioConfig, Scheme, SweepSpec};
pub use error::{ConfigError, EngineError, SimError};
pub use metrics::RunMetrics;
pub use sim::{run, RunOutput};
