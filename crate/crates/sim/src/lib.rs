//! Deterministic discrete-event harness for the vehicular
//! bandwidth-degradation scenario.

pub mod calibrate;
pub mod config;
pub mod link;
pub mod network;
pub mod payload;
pub mod report;
pub mod scenario;

pub use calibrate::{analytic_baseline_rtt, calibrate, CalibrationError};
pub use config::{ConfigError, Mode, ScenarioConfig};
pub use link::{transmit, LinkProfile};
pub use scenario::{run_scenario, run_scripted, MetricsLog, RunOutput, ScriptAction};
