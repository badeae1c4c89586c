//! Monte Carlo validation: a stationary (Palm) sampler for the closed-form
//! mean BTDs and an event-driven simulator of the slice network.

pub mod event;
pub mod palm;
pub mod stats;

pub use event::{run_event_sim, EventSimConfig, EventTrace, PopulationMode};
pub use palm::{conditional_ratio_oracle, palm_estimate_btd, palm_estimate_btd_with, sample_stationary_snapshot};
pub use stats::{McEstimate, RunningStats};
