//! Scheduling engine for fast frequency response from aggregated V2G EV
//! fleets. Post-outage frequency dynamics, distributionally robust chance
//! constraints on EV availability, a virtual-battery fleet model, charging
//! data ingestion and empirical forecasting, a scenario-tree unit commitment
//! with a rolling-horizon simulator, and Monte Carlo validation of delivered
//! security.

pub mod connectivity;
pub mod drcc;
pub mod fleet;
pub mod freq;
pub mod scheduler;
pub mod stats;
pub mod validation;
