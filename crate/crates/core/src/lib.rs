//! Share-constrained proportionally fair network slicing.
//!
//! The crate models slices sharing a set of base stations, evaluates mean bit
//! transmission delay (BTD) under three resource-sharing schemes, validates
//! the closed forms by simulation, dimensions shares, and solves the
//! traffic-shaping game among slices. A radio-environment generator supplies
//! realistic scenario inputs.

pub mod allocation;
pub mod btd;
pub mod dimensioning;
pub mod error;
pub mod experiment;
pub mod game;
pub mod linalg;
pub mod lp;
pub mod mc;
pub mod model;
pub mod radio;

pub use allocation::{RateAllocation, Scheme, Snapshot};
pub use error::{Error, Result};
pub use model::{BaseStationSet, LoadProfile, SliceSpec, TrafficModel};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/delay.md")]
    mod delay {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/dimensioning.md")]
    mod dimensioning {}
    #[doc = include_str!("../../../book/src/game.md")]
    mod game {}
    #[doc = include_str!("../../../book/src/radio.md")]
    mod radio {}
}
