//! Localization, planning, control and mission logic for a UAV moving cargo
//! from a drifting deck to an oscillating landing platform without GNSS,
//! together with a deterministic simulator to exercise it end to end.

pub mod config;
pub mod control;
pub mod error;
pub mod frames;
pub mod hybrid;
pub mod mission;
pub mod perception;
pub mod planner;
pub mod qr;
pub mod runner;
pub mod sim;
pub mod uwb;

pub use config::ScenarioConfig;
pub use error::{Error, Result};
pub use frames::{EulerAngles, Rotation, Vec3};
