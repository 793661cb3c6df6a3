//! Simulation and optimization library for a single-cell cooperative
//! cellular network of sensing UAVs.
//!
//! UAVs fly to sensing points, collect data and upload it either directly to
//! the base station (U2N) or through a neighbouring UAV acting as a relay
//! (U2U). Each slot the base station selects modes, designs trajectories and
//! allocates subchannels and transmit power to maximize the system sum rate.

pub mod channel;
pub mod error;
pub mod geometry;
pub mod metrics;
pub mod oracle;
pub mod protocol;
pub mod rrm;
pub mod scenario;
pub mod sensing;
pub mod sim;
pub mod slot_opt;
pub mod trajectory;

pub use error::{Error, Result};
pub use geometry::Point3;
pub use scenario::{Scenario, Scheme};
pub use sim::{replicate, run, RunSummary, SlotRecord};
