//! Scenario-tree stochastic unit commitment with frequency-security rows,
//! and the hourly rolling-horizon simulator built on top of it.
//!
//! Thermal plant is committed per class through a continuous count N_g, so
//! one solve is a conic program whose only binaries are the per-class
//! largest-loss indicators (and, in joint mode, any chance-constraint
//! relaxations that survive presolve). The tree branches once at the root
//! into one chain per net-demand quantile.

mod net_demand;
mod problem;
mod rolling;
mod tree;

pub use net_demand::{synthetic_series, NetDemandModel, NetDemandParams};
pub use problem::{
    assemble_problem, recompute_objective, solve_horizon, NodeVars, ProblemMap, RootDecision,
    ScheduleSolution,
};
pub use rolling::{
    rebalance, rolling_simulate, HourDetail, LogRow, OperationLog, Rebalance, RunRecord,
};
pub use tree::{branch_weights, build_tree, Forecast, HourPoint, ScenarioTree, TreeNode};

use crate::drcc::{AmbiguitySet, RiskLevel, SchedulingMode};
use crate::fleet::{FleetParams, FleetState};
use crate::freq::FrequencyParams;
use fleetfr_conic::{SolveError, Status};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SchedError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("malformed forecast: {0}")]
    BadForecast(&'static str),
    #[error("state does not match config: {0}")]
    BadState(&'static str),
    #[error("fleet data inconsistent or too short: {0}")]
    BadFleetData(&'static str),
    #[error("static bounds are infeasible: {0}")]
    StaticInfeasible(String),
    #[error(transparent)]
    Drcc(#[from] crate::drcc::DrccError),
    #[error(transparent)]
    Fleet(#[from] crate::fleet::FleetError),
    #[error(transparent)]
    Freq(#[from] crate::freq::FreqError),
    #[error(transparent)]
    Solver(#[from] SolveError),
    #[error("solver finished with status {0:?}")]
    NotOptimal(Status),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One class of identical thermal units, committed through a continuous
/// count in [0, count_available].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorClass {
    pub name: String,
    pub count_available: f64,
    /// GW per unit.
    pub p_max: f64,
    /// GW per unit.
    pub p_min_stable: f64,
    /// Pounds per hour per committed unit.
    pub no_load_cost: f64,
    /// Pounds per MWh.
    pub marginal_cost: f64,
    /// Pounds per startup of one unit.
    pub startup_cost: f64,
    /// Hours; bounds how fast the committed count may move.
    pub startup_time: f64,
    pub min_up_time: f64,
    /// Seconds.
    pub inertia_constant: f64,
    /// GW of slow FR per committed unit.
    pub max_slow_fr: f64,
}

impl GeneratorClass {
    pub fn validate(&self) -> Result<(), SchedError> {
        let bad = |msg: &str| Err(SchedError::InvalidConfig(format!("{}: {msg}", self.name)));
        let vals = [
            self.count_available,
            self.p_max,
            self.p_min_stable,
            self.no_load_cost,
            self.marginal_cost,
            self.startup_cost,
            self.startup_time,
            self.min_up_time,
            self.inertia_constant,
            self.max_slow_fr,
        ];
        if vals.iter().any(|v| !v.is_finite()) {
            return bad("non-finite field");
        }
        if self.count_available < 0.0 {
            return bad("count_available must be nonnegative");
        }
        if !(0.0 <= self.p_min_stable && self.p_min_stable <= self.p_max) {
            return bad("need 0 <= p_min_stable <= p_max");
        }
        if self.no_load_cost < 0.0 || self.marginal_cost < 0.0 || self.startup_cost < 0.0 {
            return bad("costs must be nonnegative");
        }
        if self.startup_time < 0.0 || self.min_up_time < 0.0 {
            return bad("times must be nonnegative");
        }
        if self.inertia_constant < 0.0 || self.max_slow_fr < 0.0 {
            return bad("inertia and FR must be nonnegative");
        }
        Ok(())
    }

    /// Committed count per hour the class can move, up or down.
    pub fn ramp_limit(&self) -> f64 {
        if self.startup_time > 0.0 {
            self.count_available / self.startup_time
        } else {
            f64::INFINITY
        }
    }
}

/// A grid-scale store (battery or pumped hydro) with fixed FR capability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StorageUnit {
    pub name: String,
    /// GWh.
    pub capacity: f64,
    /// GW, charge and discharge.
    pub rate: f64,
    /// GW.
    pub max_fast_fr: f64,
    /// GW.
    pub max_slow_fr: f64,
    pub efficiency: f64,
}

impl StorageUnit {
    pub fn validate(&self) -> Result<(), SchedError> {
        let bad = |msg: &str| Err(SchedError::InvalidConfig(format!("{}: {msg}", self.name)));
        let vals = [
            self.capacity,
            self.rate,
            self.max_fast_fr,
            self.max_slow_fr,
            self.efficiency,
        ];
        if vals.iter().any(|v| !v.is_finite()) {
            return bad("non-finite field");
        }
        if vals.iter().any(|v| *v < 0.0) {
            return bad("fields must be nonnegative");
        }
        if !(self.efficiency > 0.0 && self.efficiency <= 1.0) {
            return bad("efficiency must be in (0, 1]");
        }
        Ok(())
    }
}

/// A named EV fleet: per-EV constants plus connectivity data supplied per
/// hour at solve time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FleetSpec {
    pub name: String,
    #[serde(flatten)]
    pub params: FleetParams,
}

/// Chance-constraint settings for a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DrccSettings {
    pub ambiguity: AmbiguitySet,
    pub epsilon: f64,
    pub mode: SchedulingMode,
}

impl DrccSettings {
    pub fn risk(&self) -> Result<RiskLevel, SchedError> {
        RiskLevel::new(self.epsilon).map_err(SchedError::Drcc)
    }
}

/// Everything static about the system under study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub generators: Vec<GeneratorClass>,
    pub storage: Vec<StorageUnit>,
    pub fleets: Vec<FleetSpec>,
    pub frequency: FrequencyParams,
    pub drcc: DrccSettings,
    /// Net-demand quantiles that become tree branches.
    pub quantiles: Vec<f64>,
    /// Pounds per MWh of unserved energy.
    pub load_shed_cost: f64,
    pub net_demand: NetDemandParams,
    /// GW floor on the secured loss, independent of commitment.
    #[serde(default)]
    pub largest_loss_floor: f64,
}

impl SystemConfig {
    pub fn validate(&self) -> Result<(), SchedError> {
        for g in &self.generators {
            g.validate()?;
        }
        for s in &self.storage {
            s.validate()?;
        }
        for f in &self.fleets {
            f.params
                .validate()
                .map_err(|e| SchedError::InvalidConfig(format!("{}: {e}", f.name)))?;
        }
        self.frequency.validate()?;
        self.drcc.risk()?;
        if self.quantiles.is_empty() {
            return Err(SchedError::InvalidConfig("no quantiles".into()));
        }
        let ok = self
            .quantiles
            .windows(2)
            .all(|w| w[0] < w[1])
            && self.quantiles.iter().all(|q| 0.0 < *q && *q < 1.0);
        if !ok {
            return Err(SchedError::InvalidConfig(
                "quantiles must be strictly increasing in (0, 1)".into(),
            ));
        }
        if !self.load_shed_cost.is_finite() || self.load_shed_cost < 0.0 {
            return Err(SchedError::InvalidConfig(
                "load_shed_cost must be nonnegative".into(),
            ));
        }
        if !self.largest_loss_floor.is_finite() || self.largest_loss_floor < 0.0 {
            return Err(SchedError::InvalidConfig(
                "largest_loss_floor must be nonnegative".into(),
            ));
        }
        self.net_demand.validate()?;
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self, SchedError> {
        let cfg: SystemConfig = toml::from_str(text)
            .map_err(|e| SchedError::InvalidConfig(format!("toml: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json_str(text: &str) -> Result<Self, SchedError> {
        let cfg: SystemConfig = serde_json::from_str(text)
            .map_err(|e| SchedError::InvalidConfig(format!("json: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Connectivity of one fleet over one hour: count at the hour start, the
/// expected within-hour change and its spread, and the gross flows whose
/// difference carries the count to the next hour.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FleetHourData {
    pub n0: f64,
    pub mu: f64,
    pub sigma: f64,
    pub n_in: f64,
    pub n_out: f64,
}

impl FleetHourData {
    pub fn validate(&self) -> Result<(), SchedError> {
        let vals = [self.n0, self.mu, self.sigma, self.n_in, self.n_out];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(SchedError::BadFleetData("non-finite field"));
        }
        if self.n0 < 0.0 || self.n_in < 0.0 || self.n_out < 0.0 || self.sigma < 0.0 {
            return Err(SchedError::BadFleetData("counts and sigma must be nonnegative"));
        }
        if self.n0 + self.mu < 0.0 {
            return Err(SchedError::BadFleetData("expected count is negative"));
        }
        Ok(())
    }

    /// Expected connected count while FR would be delivered.
    pub fn expected_count(&self) -> f64 {
        self.n0 + self.mu
    }

    /// Count at the next hour boundary.
    pub fn next_count(&self) -> f64 {
        self.n0 + self.n_in - self.n_out
    }
}

/// Mutable system state carried across hourly solves.
#[derive(Debug, Clone, PartialEq)]
pub struct SchedulerState {
    /// Committed count per generator class.
    pub commitment: Vec<f64>,
    /// GWh per storage unit.
    pub storage_energy: Vec<f64>,
    pub fleet: Vec<FleetState>,
}

impl SchedulerState {
    /// A plausible standing start: merit-order commitment covering the given
    /// demand with a 20% margin, storage half full, fleets at 60% charge.
    pub fn steady(config: &SystemConfig, demand: f64, fleet_n0: &[f64]) -> Self {
        let mut order: Vec<usize> = (0..config.generators.len()).collect();
        order.sort_by(|a, b| {
            config.generators[*a]
                .marginal_cost
                .total_cmp(&config.generators[*b].marginal_cost)
        });
        let mut commitment = vec![0.0; config.generators.len()];
        let mut need = demand * 1.2;
        for idx in order {
            let g = &config.generators[idx];
            if need <= 0.0 || g.p_max <= 0.0 {
                continue;
            }
            let n = (need / g.p_max).min(g.count_available);
            commitment[idx] = n;
            need -= n * g.p_max;
        }
        let storage_energy = config.storage.iter().map(|s| 0.5 * s.capacity).collect();
        let fleet = config
            .fleets
            .iter()
            .zip(fleet_n0)
            .map(|(f, n0)| FleetState {
                n_connected: *n0,
                energy: 0.6 * n0 * f.params.e_cap,
            })
            .collect();
        SchedulerState {
            commitment,
            storage_energy,
            fleet,
        }
    }

    pub fn validate(&self, config: &SystemConfig) -> Result<(), SchedError> {
        if self.commitment.len() != config.generators.len() {
            return Err(SchedError::BadState("commitment length"));
        }
        if self.storage_energy.len() != config.storage.len() {
            return Err(SchedError::BadState("storage length"));
        }
        if self.fleet.len() != config.fleets.len() {
            return Err(SchedError::BadState("fleet length"));
        }
        for (n, g) in self.commitment.iter().zip(&config.generators) {
            if !n.is_finite() || *n < 0.0 || *n > g.count_available + 1e-9 {
                return Err(SchedError::BadState("commitment outside [0, count]"));
            }
        }
        for (e, s) in self.storage_energy.iter().zip(&config.storage) {
            if !e.is_finite() || *e < 0.0 || *e > s.capacity + 1e-9 {
                return Err(SchedError::BadState("storage energy outside [0, capacity]"));
            }
        }
        for (st, f) in self.fleet.iter().zip(&config.fleets) {
            st.validate(&f.params)
                .map_err(|_| SchedError::BadState("fleet state out of bounds"))?;
        }
        Ok(())
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn toy() -> SystemConfig {
        SystemConfig {
            generators: vec![GeneratorClass {
                name: "ccgt".into(),
                count_available: 10.0,
                p_max: 0.5,
                p_min_stable: 0.25,
                no_load_cost: 500.0,
                marginal_cost: 50.0,
                startup_cost: 10_000.0,
                startup_time: 4.0,
                min_up_time: 4.0,
                inertia_constant: 5.0,
                max_slow_fr: 0.05,
            }],
            storage: vec![StorageUnit {
                name: "battery".into(),
                capacity: 1.0,
                rate: 0.3,
                max_fast_fr: 0.3,
                max_slow_fr: 0.3,
                efficiency: 0.9,
            }],
            fleets: vec![FleetSpec {
                name: "home".into(),
                params: FleetParams {
                    charger_power_max: 1e-5,
                    eta: 0.95,
                    e_in: 3e-5,
                    e_out: 5e-5,
                    e_cap: 7e-5,
                },
            }],
            frequency: FrequencyParams {
                f0: 50.0,
                delta_f_max: 0.8,
                rocof_max: 0.5,
                t1: 1.0,
                t2: 10.0,
                t_del: 0.5,
            },
            drcc: DrccSettings {
                ambiguity: AmbiguitySet::Dro,
                epsilon: 0.01,
                mode: SchedulingMode::Joint,
            },
            quantiles: vec![0.1, 0.5, 0.9],
            load_shed_cost: 30_000.0,
            net_demand: NetDemandParams {
                wind_capacity: 3.0,
                solar_capacity: 2.0,
                demand_base: 4.0,
                demand_swing: 2.0,
                phi: 0.97,
                noise: 0.05,
            },
            largest_loss_floor: 0.0,
        }
    }

    #[test]
    fn config_validation_catches_bad_fields() {
        assert!(toy().validate().is_ok());

        let mut c = toy();
        c.quantiles = vec![0.5, 0.5];
        assert!(matches!(c.validate(), Err(SchedError::InvalidConfig(_))));

        let mut c = toy();
        c.quantiles = vec![0.0, 0.5];
        assert!(c.validate().is_err());

        let mut c = toy();
        c.generators[0].p_min_stable = 0.6;
        assert!(c.validate().is_err());

        let mut c = toy();
        c.storage[0].efficiency = 0.0;
        assert!(c.validate().is_err());

        let mut c = toy();
        c.drcc.epsilon = 1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn toml_and_json_round_trip() {
        let cfg = toy();
        let text = toml::to_string(&cfg).unwrap();
        let back = SystemConfig::from_toml_str(&text).unwrap();
        assert_eq!(cfg, back);

        let text = serde_json::to_string(&cfg).unwrap();
        let back = SystemConfig::from_json_str(&text).unwrap();
        assert_eq!(cfg, back);

        assert!(SystemConfig::from_toml_str("generators = 3").is_err());
    }

    #[test]
    fn steady_state_covers_demand() {
        let cfg = toy();
        let st = SchedulerState::steady(&cfg, 4.0, &[10_000.0]);
        st.validate(&cfg).unwrap();
        let cap: f64 = st
            .commitment
            .iter()
            .zip(&cfg.generators)
            .map(|(n, g)| n * g.p_max)
            .sum();
        assert!(cap >= 4.0);
        assert_eq!(st.fleet[0].n_connected, 10_000.0);
    }

    #[test]
    fn hour_data_validation() {
        let ok = FleetHourData {
            n0: 100.0,
            mu: -5.0,
            sigma: 2.0,
            n_in: 3.0,
            n_out: 8.0,
        };
        assert!(ok.validate().is_ok());
        assert_eq!(ok.expected_count(), 95.0);
        assert_eq!(ok.next_count(), 95.0);

        let bad = FleetHourData { mu: -200.0, ..ok };
        assert!(bad.validate().is_err());
    }
}
