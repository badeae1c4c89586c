//! Radio environment: a hexagonal multi-sector network with path loss,
//! shadowing and fading, users moving under waypoint mobility, and
//! calibration of the abstract model from the simulated experience.

pub mod calibrate;
pub mod channel;
pub mod layout;
pub mod mobility;
pub mod rate;

pub use calibrate::{simulate_and_calibrate, simulate_radio, Calibration, RadioRun, RadioScenario, RadioSlice, TraceRow};
pub use channel::{path_loss_db, sinr, ChannelParams, Fading};
pub use layout::{HexLayout, Point, Sector};
pub use mobility::{Hotspot, MobilityModel, Walker};
pub use rate::RateMap;
