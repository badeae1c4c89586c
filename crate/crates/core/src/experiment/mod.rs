//! Experiment orchestration: configuration files, built-in scenarios,
//! command runners and long-format result tables.

pub mod config;
pub mod results;
pub mod run;
pub mod scenarios;

pub use config::{ExperimentConfig, GeometryRow, NetworkConfig, ScenarioConfig, SliceConfig};
pub use results::{ResultRow, ResultTable};
pub use run::{analyze, closed_loop_sweep, derive_seed, dimension, game, radio, simulate, ClosedLoopPoint};
