//! Aggregate virtual-battery model of an EV fleet.
//!
//! Charging decisions are uniform across a fleet, so the fleet reduces to a
//! per-EV decision pair (d, c) scaled by the connected count. Charge legs
//! multiply by eta, discharge legs divide, and connection churn moves fixed
//! per-EV energies in and out. The scheduling step is one hour, so GW and
//! GWh convert with a unit factor.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FleetError {
    #[error("non-finite input")]
    NonFinite,
    #[error("invalid parameters: {0}")]
    InvalidParams(&'static str),
    #[error("effective connected count is negative")]
    NegativeCount,
    #[error("state of charge {energy} GWh outside [{lo}, {hi}]")]
    SocOutOfBounds { energy: f64, lo: f64, hi: f64 },
}

/// Per-EV constants of one fleet. Charger rating bounds both legs
/// (D_max = C_max); energies are fleet averages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FleetParams {
    pub charger_power_max: f64,
    pub eta: f64,
    pub e_in: f64,
    pub e_out: f64,
    pub e_cap: f64,
}

impl FleetParams {
    pub fn validate(&self) -> Result<(), FleetError> {
        let vals = [
            self.charger_power_max,
            self.eta,
            self.e_in,
            self.e_out,
            self.e_cap,
        ];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(FleetError::NonFinite);
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(FleetError::InvalidParams("eta must be in (0, 1]"));
        }
        if !(0.0 <= self.e_in && self.e_in <= self.e_out && self.e_out <= self.e_cap) {
            return Err(FleetError::InvalidParams("need 0 <= e_in <= e_out <= e_cap"));
        }
        if self.charger_power_max <= 0.0 {
            return Err(FleetError::InvalidParams("charger rating must be positive"));
        }
        Ok(())
    }
}

/// Connected count and aggregate stored energy at an hour boundary. Counts
/// are kept as f64 since schedules work with expected values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FleetState {
    pub n_connected: f64,
    pub energy: f64,
}

impl FleetState {
    pub fn validate(&self, params: &FleetParams) -> Result<(), FleetError> {
        if !self.n_connected.is_finite() || !self.energy.is_finite() {
            return Err(FleetError::NonFinite);
        }
        if self.n_connected < 0.0 {
            return Err(FleetError::NegativeCount);
        }
        let hi = self.n_connected * params.e_cap;
        if self.energy < 0.0 || self.energy > hi {
            return Err(FleetError::SocOutOfBounds {
                energy: self.energy,
                lo: 0.0,
                hi,
            });
        }
        Ok(())
    }
}

/// Uniform per-EV discharge and charge rates for one hour.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FleetDecision {
    pub d: f64,
    pub c: f64,
}

impl FleetDecision {
    pub fn validate(&self, params: &FleetParams) -> Result<(), FleetError> {
        if !self.d.is_finite() || !self.c.is_finite() {
            return Err(FleetError::NonFinite);
        }
        let cap = params.charger_power_max;
        if self.d < 0.0 || self.d > cap || self.c < 0.0 || self.c > cap {
            return Err(FleetError::InvalidParams("decision outside charger rating"));
        }
        Ok(())
    }
}

/// FR headroom one EV offers under a decision: its rating minus current
/// discharge plus current charge (a charging EV can additionally drop load).
pub fn fr_capacity_per_ev(params: &FleetParams, decision: &FleetDecision) -> f64 {
    params.charger_power_max - decision.d + decision.c
}

/// Net grid injection of the fleet for the hour (negative while charging).
pub fn fleet_power(
    state: &FleetState,
    decision: &FleetDecision,
    delta_n_hat: f64,
) -> Result<f64, FleetError> {
    let n = state.n_connected + delta_n_hat;
    if !n.is_finite() {
        return Err(FleetError::NonFinite);
    }
    if n < 0.0 {
        return Err(FleetError::NegativeCount);
    }
    Ok(n * (decision.d - decision.c))
}

/// Hourly state transition: battery flows through the efficiency legs plus
/// energy carried by connecting and disconnecting EVs. Errors if the new
/// aggregate SoC leaves its bounds.
pub fn soc_update(
    state: &FleetState,
    decision: &FleetDecision,
    delta_n_hat: f64,
    n_in: f64,
    n_out: f64,
    params: &FleetParams,
) -> Result<FleetState, FleetError> {
    params.validate()?;
    decision.validate(params)?;
    state.validate(params)?;
    if !(n_in.is_finite() && n_out.is_finite()) || n_in < 0.0 || n_out < 0.0 {
        return Err(FleetError::InvalidParams("flows must be nonnegative"));
    }
    let n = state.n_connected + delta_n_hat;
    if n < 0.0 {
        return Err(FleetError::NegativeCount);
    }
    let energy = state.energy
        + n * (params.eta * decision.c - decision.d / params.eta)
        + n_in * params.e_in
        - n_out * params.e_out;
    let next = FleetState {
        n_connected: state.n_connected + n_in - n_out,
        energy,
    };
    next.validate(params)?;
    Ok(next)
}
